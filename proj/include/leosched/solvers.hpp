#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "leosched/instance.hpp"

namespace leosched::solvers {

/// Per-variable branching state for x_{g,t}: free, fixed at 0, or fixed at 1.
enum class Fix : std::int8_t { kFree = -1, kZero = 0, kOne = 1 };

/// G*T fixing table, slot-major (index t * G + g).
struct Fixings {
  int groups = 0;
  std::vector<Fix> state;

  Fixings() = default;
  Fixings(int g, int t) : groups(g), state(static_cast<std::size_t>(g) * t, Fix::kFree) {}
  Fix at(int g, int t) const { return state[static_cast<std::size_t>(t) * groups + g]; }
  Fix& at(int g, int t) { return state[static_cast<std::size_t>(t) * groups + g]; }
};

struct RelaxOptions {
  double tol = 1e-6;
  int max_iters = 50000;
};

/// Solution of the continuous relaxation. x_hat is T x G; column 0 (idle) is
/// always 0 and acts as the slack of the one-group-per-slot constraint.
struct RelaxedSolution {
  Eigen::MatrixXd x_hat;
  Eigen::VectorXd y_hat;
  /// Certified lower bound on the relaxed (hence integer) optimum.
  double value = 0.0;
  /// Relaxed objective at (x_hat, y_hat); feasible, so value <= upper.
  double upper = 0.0;
  bool converged = false;
  bool infeasible = false;
  int iterations = 0;
};

/// Augmented-Lagrangian treatment of the coupling constraints
/// D'_k y_k <= sum R x with an accelerated projected-gradient inner solver on
/// the box / one-group-per-slot set. SINR floors enter through the big-M
/// bound x_{g,t} <= 1 - (floor_k - gamma_{k,g,t}) / V. The returned value is
/// a Frank-Wolfe certified lower bound, valid whether or not the run
/// converged.
RelaxedSolution solve_relaxation(const Problem& prob, const RelaxOptions& opts = {},
                                 const Fixings* fix = nullptr);

/// Euclidean projection onto {lo <= x <= hi, sum x <= 1}; requires sum lo <= 1.
Eigen::VectorXd project_capped_box(const Eigen::VectorXd& v, const Eigen::VectorXd& lo,
                                   const Eigen::VectorXd& hi);

struct PsdReport {
  int checks = 0;
  double max_rel_error = 0.0;
  bool passed = true;
  /// First offending vector, empty when passed.
  std::vector<double> offending;
  std::string detail;
};

/// Numerically witnesses positive semidefiniteness of the all-ones matrix E
/// and of every R_k = r_k r_k^T: v^T E v == (1^T v)^2 and v^T R_k v ==
/// (r_k^T v)^2 for `samples` random v, each within `rel_tol`.
PsdReport psd_witness(const Problem& prob, int samples = 1000, std::uint64_t seed = 1,
                      double rel_tol = 1e-9);
/// Same check for caller-supplied vectors (E-check uses the first K entries).
PsdReport psd_witness_vectors(const Problem& prob, const std::vector<Eigen::VectorXd>& y_vectors,
                              const std::vector<Eigen::VectorXd>& x_vectors, double rel_tol = 1e-9);

struct SolveResult {
  std::string solver;
  Schedule schedule;
  double value = 0.0;
  double bound = 0.0;  // best known lower bound (= value for heuristics without one)
  double gap = 0.0;    // (value - bound) / max(|value|, 1e-12)
  bool optimal = false;
  int iterations = 0;
  int nodes = 0;
  double wall_time_s = 0.0;
  /// ADMM primal residual ||z - D' y + sum R x|| per iteration (scaled units).
  std::vector<double> residuals;
};

nlohmann::json to_json(const SolveResult& r, bool include_timing);

struct BnbOptions {
  int node_limit = 100000;
  /// Relative gap at which a node counts as solved; 0 explores to proven
  /// optimality.
  double gap_tol = 0.0;
  RelaxOptions relax;
};

/// Best-first branch and bound on x_{g,t}, branching on the most fractional
/// free variable of the node relaxation. Starts from the idle incumbent.
SolveResult branch_and_bound(const Problem& prob, const BnbOptions& opts = {});

struct AdmmOptions {
  double rho = 1.0;
  int iterations = 200;
  /// Proximal weight on ||x_t - x_t^i||^2 in every block step (0 = plain
  /// Jacobi). Expressed as a multiple of the block's curvature bound.
  double prox = 1.0;
  double inner_tol = 1e-6;
  int inner_max_iters = 500;
  /// Evaluate the multiplier residual at the iterate-i snapshot instead of
  /// the freshly updated blocks. The snapshot form cycles even with x and y
  /// frozen, so it is off by default.
  bool snapshot_multiplier = false;
};

/// lambda + rho * (z - D'y + sum R x).
double admm_multiplier_step(double lambda, double rho, double z, double dy, double rx);

/// ADMM-HEU: Jacobi block ADMM on the relaxation followed by per-slot
/// rounding to the largest x_hat (idle scored as 1 - sum x_hat), restricted
/// to groups that satisfy every SINR floor.
SolveResult admm_heu(const Problem& prob, const AdmmOptions& opts = {});

/// Slot-by-slot greedy: extends the partial schedule by the group that
/// minimizes the objective with later slots idle.
SolveResult greedy(const Problem& prob);

inline constexpr std::uint64_t kOracleLimit = 1000000;

/// Enumerates all G^T schedules (SINR-floor-violating ones skipped); keeps the
/// lexicographically first minimum.
SolveResult exhaustive_oracle(const Problem& prob, std::uint64_t limit = kOracleLimit);

/// Rounds x_hat (T x G) per slot as ADMM-HEU does.
std::vector<int> round_relaxed(const Problem& prob, const Eigen::MatrixXd& x_hat,
                               const Fixings* fix = nullptr);

}  // namespace leosched::solvers
