#include "leosched/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <queue>

namespace leosched::solvers {

namespace {

constexpr double kBoundSlack = 1e-12;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Problem data in units where the largest demand or rate is 1. The objective
/// is invariant: R/s, D/s and eta * s^2 give identical values.
struct Scaled {
  int K = 0;
  int G = 0;
  int T = 0;
  double scale = 1.0;
  std::vector<Eigen::MatrixXd> r;  // per device, T x G
  Eigen::VectorXd demand;
  Eigen::VectorXd threshold;
  Eigen::VectorXd eta;
  double eta0 = 0.0;

  explicit Scaled(const Problem& p) : K(p.devices()), G(p.groups()), T(p.slots()) {
    double s = 0.0;
    for (const auto& d : p.inst.devices) s = std::max(s, d.demand_bits);
    for (double v : p.rates.data()) s = std::max(s, v);
    scale = s > 0 ? s : 1.0;
    r.assign(K, Eigen::MatrixXd::Zero(T, G));
    demand.resize(K);
    threshold.resize(K);
    eta.resize(K);
    for (int k = 0; k < K; ++k) {
      for (int t = 0; t < T; ++t) {
        for (int g = 0; g < G; ++g) r[k](t, g) = p.rates(k, g, t) / scale;
      }
      demand[k] = p.inst.devices[k].demand_bits / scale;
      threshold[k] = p.inst.devices[k].threshold_bits / scale;
      eta[k] = p.inst.devices[k].weight * scale * scale;
    }
    eta0 = p.inst.eta0;
  }

  double rx(int k, const Eigen::MatrixXd& x) const { return r[k].cwiseProduct(x).sum(); }

  double f(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) const {
    const double cg = y.sum() - K;
    double v = eta0 * cg * cg;
    for (int k = 0; k < K; ++k) {
      const double d = rx(k, x) - demand[k];
      v += eta[k] * d * d;
    }
    return v;
  }

  /// Best y for a given x: as large as the coupling constraints allow.
  Eigen::VectorXd best_y(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd y(K);
    for (int k = 0; k < K; ++k) y[k] = std::clamp(rx(k, x) / threshold[k], 0.0, 1.0);
    return y;
  }

  double curvature_x() const {
    double l = 0.0;
    for (int k = 0; k < K; ++k) l += 2.0 * eta[k] * r[k].squaredNorm();
    return l;
  }
};

/// Per-slot bounds from fixings and the big-M SINR constraint; idle column is
/// pinned at 0.
struct Bounds {
  Eigen::MatrixXd lo;
  Eigen::MatrixXd hi;
  bool feasible = true;
};

Bounds make_bounds(const Problem& p, const Fixings* fix, bool big_m_bounds) {
  const int G = p.groups();
  const int T = p.slots();
  Bounds b{Eigen::MatrixXd::Zero(T, G), Eigen::MatrixXd::Ones(T, G), true};
  const double V = big_m_bounds ? p.big_m() : 1.0;
  for (int t = 0; t < T; ++t) {
    b.hi(t, 0) = 0.0;
    for (int g = 1; g < G; ++g) {
      if (big_m_bounds) {
        for (auto [n, k] : p.catalog[g].links) {
          const double deficit = p.inst.devices[k].sinr_floor - p.sinr(k, g, t);
          if (deficit > 0) b.hi(t, g) = std::min(b.hi(t, g), 1.0 - deficit / V);
        }
      }
      if (fix) {
        const Fix f = fix->at(g, t);
        if (f == Fix::kZero) b.hi(t, g) = 0.0;
        if (f == Fix::kOne) b.lo(t, g) = 1.0;
      }
      if (b.lo(t, g) > b.hi(t, g)) b.feasible = false;
    }
    if (b.lo.row(t).sum() > 1.0 + 1e-12) b.feasible = false;
  }
  return b;
}

/// Linear minimization of <c, x> over one slot's capped box.
Eigen::VectorXd lmo_slot(const Eigen::VectorXd& c, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  Eigen::VectorXd x = lo;
  double budget = 1.0 - lo.sum();
  std::vector<int> order(c.size());
  for (int i = 0; i < c.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return c[a] < c[b]; });
  for (int i : order) {
    if (c[i] >= 0 || budget <= 0) break;
    const double add = std::min(hi[i] - lo[i], budget);
    x[i] += add;
    budget -= add;
  }
  return x;
}

}  // namespace

Eigen::VectorXd project_capped_box(const Eigen::VectorXd& v, const Eigen::VectorXd& lo,
                                   const Eigen::VectorXd& hi) {
  const auto clamp_at = [&](double tau) {
    return (v.array() - tau).max(lo.array()).min(hi.array()).matrix().eval();
  };
  Eigen::VectorXd x0 = clamp_at(0.0);
  if (x0.sum() <= 1.0) return x0;
  // sum(clamp(v - tau)) is piecewise linear and non-increasing in tau; walk
  // its breakpoints to bracket the level 1 and interpolate.
  std::vector<double> bps;
  bps.reserve(2 * v.size());
  for (int i = 0; i < v.size(); ++i) {
    if (v[i] - hi[i] > 0) bps.push_back(v[i] - hi[i]);
    if (v[i] - lo[i] > 0) bps.push_back(v[i] - lo[i]);
  }
  std::sort(bps.begin(), bps.end());
  double prev_tau = 0.0;
  double prev_sum = x0.sum();
  for (double tau : bps) {
    const double s = clamp_at(tau).sum();
    if (s <= 1.0) {
      const double w = (prev_sum - 1.0) / (prev_sum - s);
      return clamp_at(prev_tau + w * (tau - prev_tau));
    }
    prev_tau = tau;
    prev_sum = s;
  }
  return clamp_at(bps.empty() ? 0.0 : bps.back());
}

RelaxedSolution solve_relaxation(const Problem& prob, const RelaxOptions& opts, const Fixings* fix) {
  require(opts.tol > 0, "solve_relaxation: tol must be positive");
  const Scaled sc(prob);
  const int K = sc.K;
  const int G = sc.G;
  const int T = sc.T;
  RelaxedSolution out;
  const Bounds bounds = make_bounds(prob, fix, true);
  if (!bounds.feasible) {
    out.infeasible = true;
    out.value = out.upper = std::numeric_limits<double>::infinity();
    out.x_hat = Eigen::MatrixXd::Zero(T, G);
    out.y_hat = Eigen::VectorXd::Zero(K);
    return out;
  }

  auto project = [&](Eigen::MatrixXd& x, Eigen::VectorXd& y) {
    for (int t = 0; t < T; ++t) {
      x.row(t) = project_capped_box(x.row(t).transpose(), bounds.lo.row(t).transpose(),
                                    bounds.hi.row(t).transpose())
                     .transpose();
    }
    y = y.cwiseMax(0.0).cwiseMin(1.0);
  };

  // Gradient of f + sum_k mult_k * c_k, with c_k = D'_k y_k - r_k . x.
  auto lagrangian_grad = [&](const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& mult, Eigen::MatrixXd& gx, Eigen::VectorXd& gy) {
    gx.setZero(T, G);
    const double cg = y.sum() - K;
    gy = Eigen::VectorXd::Constant(K, 2.0 * sc.eta0 * cg);
    for (int k = 0; k < K; ++k) {
      const double coef = 2.0 * sc.eta[k] * (sc.rx(k, x) - sc.demand[k]) - mult[k];
      if (coef != 0.0) gx += coef * sc.r[k];
      gy[k] += mult[k] * sc.threshold[k];
    }
  };
  auto coupling = [&](const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    Eigen::VectorXd c(K);
    for (int k = 0; k < K; ++k) c[k] = sc.threshold[k] * y[k] - sc.rx(k, x);
    return c;
  };

  double coupling_norm = 0.0;
  for (int k = 0; k < K; ++k) coupling_norm += sc.r[k].squaredNorm() + sc.threshold[k] * sc.threshold[k];
  const double lf = sc.curvature_x() + 2.0 * sc.eta0 * K;
  double rho = std::max(lf, 1.0) / std::max(coupling_norm, 1e-12);

  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(T, G);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(K);
  project(x, y);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(K);
  double best_lb = -std::numeric_limits<double>::infinity();
  double prev_violation = std::numeric_limits<double>::infinity();
  int iters = 0;
  Eigen::MatrixXd gx;
  Eigen::VectorXd gy;

  for (int outer = 0; outer < 200 && iters < opts.max_iters; ++outer) {
    const double L = lf + rho * coupling_norm;
    const double step = 1.0 / std::max(L, 1e-12);
    // FISTA with gradient-based adaptive restart on the augmented Lagrangian.
    Eigen::MatrixXd ax = x;
    Eigen::VectorXd ay = y;
    double momentum = 1.0;
    while (iters < opts.max_iters) {
      ++iters;
      const Eigen::VectorXd c = coupling(ax, ay);
      const Eigen::VectorXd mult = (lambda + rho * c).cwiseMax(0.0);
      lagrangian_grad(ax, ay, mult, gx, gy);
      Eigen::MatrixXd nx = ax - step * gx;
      Eigen::VectorXd ny = ay - step * gy;
      project(nx, ny);
      const double map_norm =
          std::sqrt((nx - ax).squaredNorm() + (ny - ay).squaredNorm()) / step;
      const double restart = (gx.cwiseProduct(nx - x)).sum() + gy.dot(ny - y);
      const double next_m = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
      if (restart > 0) {
        ax = nx;
        ay = ny;
        momentum = 1.0;
      } else {
        const double beta = (momentum - 1.0) / next_m;
        ax = nx + beta * (nx - x);
        ay = ny + beta * (ny - y);
        momentum = next_m;
      }
      x = std::move(nx);
      y = std::move(ny);
      if (map_norm < 0.1 * opts.tol) break;
    }

    const Eigen::VectorXd c = coupling(x, y);
    lambda = (lambda + rho * c).cwiseMax(0.0);

    // Frank-Wolfe certificate on the ordinary Lagrangian with the updated
    // multipliers.
    lagrangian_grad(x, y, lambda, gx, gy);
    double lagr = sc.f(x, y) + lambda.dot(c);
    double lin = 0.0;
    for (int t = 0; t < T; ++t) {
      const Eigen::VectorXd xt = x.row(t).transpose();
      const Eigen::VectorXd ct = gx.row(t).transpose();
      const Eigen::VectorXd s =
          lmo_slot(ct, bounds.lo.row(t).transpose(), bounds.hi.row(t).transpose());
      lin += ct.dot(s - xt);
    }
    for (int k = 0; k < K; ++k) lin += gy[k] < 0 ? gy[k] * (1.0 - y[k]) : -gy[k] * y[k];
    best_lb = std::max(best_lb, lagr + lin);

    const double upper = sc.f(x, sc.best_y(x));
    const double violation = c.cwiseMax(0.0).maxCoeff();
    if (upper - best_lb <= opts.tol * std::max(1.0, std::abs(upper))) {
      out.converged = true;
      break;
    }
    if (violation > 0.25 * prev_violation) rho *= 4.0;
    prev_violation = violation;
  }

  out.x_hat = x;
  out.y_hat = sc.best_y(x);
  out.upper = sc.f(x, out.y_hat);
  // Rounding allowance: the bound is summed in scaled units, so a tight
  // relaxation can otherwise land an ulp above the integer objective.
  out.value = std::min(best_lb, out.upper) - kBoundSlack * std::max(1.0, std::abs(out.upper));
  out.iterations = iters;
  return out;
}

namespace {

double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace

PsdReport psd_witness_vectors(const Problem& prob, const std::vector<Eigen::VectorXd>& y_vectors,
                              const std::vector<Eigen::VectorXd>& x_vectors, double rel_tol) {
  PsdReport rep;
  const int K = prob.devices();
  const int G = prob.groups();
  const int T = prob.slots();
  const int n = G * T;
  auto fail = [&](const Eigen::VectorXd& v, const std::string& what) {
    if (rep.passed) {
      rep.passed = false;
      rep.offending.assign(v.data(), v.data() + v.size());
      rep.detail = what;
    }
  };
  for (const auto& v : y_vectors) {
    require(v.size() == K, "psd_witness: E-check vectors must have K entries");
    // v^T E v with E materialized entrywise.
    double quad = 0.0;
    for (int i = 0; i < K; ++i) {
      for (int j = 0; j < K; ++j) quad += v[i] * 1.0 * v[j];
    }
    const double s = v.sum();
    const double e = rel_err(quad, s * s, 1e-300 + v.cwiseAbs().sum() * v.cwiseAbs().sum() * 1e-6);
    rep.max_rel_error = std::max(rep.max_rel_error, e);
    ++rep.checks;
    if (e > rel_tol || quad < -1e-12 * v.squaredNorm() * K) fail(v, "all-ones matrix");
  }
  for (const auto& v : x_vectors) {
    require(v.size() == n, "psd_witness: R-check vectors must have G*T entries");
    for (int k = 0; k < K; ++k) {
      Eigen::VectorXd r(n);
      for (int t = 0; t < T; ++t) {
        for (int g = 0; g < G; ++g) r[t * G + g] = prob.rates(k, g, t);
      }
      const Eigen::MatrixXd R = r * r.transpose();
      const double quad = v.dot(R * v);
      const double dot = r.dot(v);
      const double mag = r.cwiseAbs().dot(v.cwiseAbs());
      const double e = rel_err(quad, dot * dot, 1e-300 + mag * mag * 1e-6);
      rep.max_rel_error = std::max(rep.max_rel_error, e);
      ++rep.checks;
      if (e > rel_tol || quad < -1e-12 * mag * mag) fail(v, "rate outer product, device " + std::to_string(k));
    }
  }
  return rep;
}

PsdReport psd_witness(const Problem& prob, int samples, std::uint64_t seed, double rel_tol) {
  Rng rng(seed);
  std::vector<Eigen::VectorXd> ys;
  std::vector<Eigen::VectorXd> xs;
  for (int i = 0; i < samples; ++i) {
    Eigen::VectorXd y(prob.devices());
    for (auto& v : y) v = standard_normal(rng);
    Eigen::VectorXd x(prob.groups() * prob.slots());
    for (auto& v : x) v = standard_normal(rng);
    ys.push_back(std::move(y));
    xs.push_back(std::move(x));
  }
  return psd_witness_vectors(prob, ys, xs, rel_tol);
}

nlohmann::json to_json(const SolveResult& r, bool include_timing) {
  nlohmann::json j{{"solver", r.solver},
                   {"schedule", r.schedule.x},
                   {"served", r.schedule.y},
                   {"objective", r.value},
                   {"bound", r.bound},
                   {"gap", r.gap},
                   {"optimal", r.optimal},
                   {"iterations", r.iterations},
                   {"nodes", r.nodes}};
  if (include_timing) j["wall_time_s"] = r.wall_time_s;
  return j;
}

namespace {

void finish(SolveResult& res, const Problem& prob, std::vector<int> x) {
  res.value = objective(prob.inst, x, prob.rates);
  res.schedule = make_schedule(prob.inst, std::move(x), prob.rates);
}

double relative_gap(double value, double bound) {
  return std::max(0.0, value - bound) / std::max(std::abs(value), 1e-12);
}

/// Slot t is settled when it has a fixed-one group or no free non-idle group.
bool slot_settled(const Fixings& fix, int t, int G, int* chosen) {
  *chosen = 0;
  bool any_free = false;
  for (int g = 1; g < G; ++g) {
    if (fix.at(g, t) == Fix::kOne) {
      *chosen = g;
      return true;
    }
    if (fix.at(g, t) == Fix::kFree) any_free = true;
  }
  return !any_free;
}

}  // namespace

std::vector<int> round_relaxed(const Problem& prob, const Eigen::MatrixXd& x_hat, const Fixings* fix) {
  const int G = prob.groups();
  const int T = prob.slots();
  std::vector<int> x(T, 0);
  for (int t = 0; t < T; ++t) {
    int forced = -1;
    if (fix) {
      for (int g = 1; g < G; ++g) {
        if (fix->at(g, t) == Fix::kOne) forced = g;
      }
    }
    if (forced >= 0) {
      x[t] = forced;
      continue;
    }
    double best = 1.0 - x_hat.row(t).tail(G - 1).sum();
    int pick = 0;
    for (int g = 1; g < G; ++g) {
      if (fix && fix->at(g, t) == Fix::kZero) continue;
      if (!prob.allowed(g, t)) continue;
      if (x_hat(t, g) > best) {
        best = x_hat(t, g);
        pick = g;
      }
    }
    x[t] = pick;
  }
  return x;
}

SolveResult branch_and_bound(const Problem& prob, const BnbOptions& opts) {
  const auto start = Clock::now();
  const int G = prob.groups();
  const int T = prob.slots();
  SolveResult res;
  res.solver = "bnb";

  std::vector<int> incumbent(T, 0);
  double inc_value = objective(prob.inst, incumbent, prob.rates);
  auto offer = [&](const std::vector<int>& x) {
    const double v = objective(prob.inst, x, prob.rates);
    if (v < inc_value) {
      inc_value = v;
      incumbent = x;
    }
  };

  struct Node {
    double bound;
    std::int64_t id;
    Fixings fix;
  };
  auto worse = [](const Node& a, const Node& b) {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  };
  std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);
  Fixings root(G, T);
  // No integer schedule may use a group that breaks an SINR floor.
  for (int t = 0; t < T; ++t) {
    for (int g = 1; g < G; ++g) {
      if (!prob.allowed(g, t)) root.at(g, t) = Fix::kZero;
    }
  }
  std::int64_t next_id = 0;
  open.push({-std::numeric_limits<double>::infinity(), next_id++, root});
  int nodes = 0;
  int relax_iters = 0;
  bool exhausted = true;

  while (!open.empty()) {
    if (nodes >= opts.node_limit) {
      exhausted = false;
      break;
    }
    Node node = open.top();
    open.pop();
    if (node.bound >= inc_value) continue;
    ++nodes;

    std::vector<int> settled(T, 0);
    bool leaf = true;
    for (int t = 0; t < T; ++t) {
      int chosen = 0;
      if (!slot_settled(node.fix, t, G, &chosen)) leaf = false;
      settled[t] = chosen;
    }
    if (leaf) {
      offer(settled);
      continue;
    }

    const RelaxedSolution rel = solve_relaxation(prob, opts.relax, &node.fix);
    relax_iters += rel.iterations;
    if (rel.infeasible || rel.value >= inc_value) continue;
    offer(round_relaxed(prob, rel.x_hat, &node.fix));
    if (opts.gap_tol > 0 && inc_value - rel.value <= opts.gap_tol * std::max(1.0, std::abs(inc_value))) {
      continue;
    }

    // Most fractional free variable; an all-integral relaxation falls back to
    // the free variable with the largest value.
    int bg = -1;
    int bt = -1;
    double best_frac = -1.0;
    double best_val = -1.0;
    for (int t = 0; t < T; ++t) {
      for (int g = 1; g < G; ++g) {
        if (node.fix.at(g, t) != Fix::kFree) continue;
        const double v = rel.x_hat(t, g);
        const double frac = std::min(v, 1.0 - v);
        if (frac > best_frac + 1e-12 || (std::abs(frac - best_frac) <= 1e-12 && v > best_val)) {
          best_frac = frac;
          best_val = v;
          bg = g;
          bt = t;
        }
      }
    }
    Node one{rel.value, next_id++, node.fix};
    one.fix.at(bg, bt) = Fix::kOne;
    for (int g = 1; g < G; ++g) {
      if (g != bg && one.fix.at(g, bt) == Fix::kFree) one.fix.at(g, bt) = Fix::kZero;
    }
    Node zero{rel.value, next_id++, std::move(node.fix)};
    zero.fix.at(bg, bt) = Fix::kZero;
    open.push(std::move(one));
    open.push(std::move(zero));
  }

  double bound = inc_value;
  if (!exhausted) {
    while (!open.empty()) {
      bound = std::min(bound, open.top().bound);
      open.pop();
    }
  }
  finish(res, prob, incumbent);
  res.bound = std::min(bound, res.value);
  res.gap = relative_gap(res.value, res.bound);
  res.optimal = exhausted || res.gap <= opts.gap_tol;
  res.nodes = nodes;
  res.iterations = relax_iters;
  res.wall_time_s = seconds_since(start);
  return res;
}

double admm_multiplier_step(double lambda, double rho, double z, double dy, double rx) {
  return lambda + rho * (z - dy + rx);
}

namespace {

/// Projected gradient with Armijo backtracking for a smooth convex block
/// objective; stops once the gradient mapping norm drops below tol.
template <typename Value, typename Grad, typename Proj>
Eigen::VectorXd projected_gradient(Eigen::VectorXd x, Value value, Grad grad, Proj proj, double l_hint,
                                   double tol, int max_iters) {
  double step = 1.0 / std::max(l_hint, 1e-12);
  double fx = value(x);
  for (int it = 0; it < max_iters; ++it) {
    const Eigen::VectorXd g = grad(x);
    Eigen::VectorXd nx;
    double fn = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      nx = proj(x - step * g);
      fn = value(nx);
      const Eigen::VectorXd d = nx - x;
      if (fn <= fx + g.dot(d) + d.squaredNorm() / (2.0 * step) + 1e-15 * std::abs(fx)) break;
      step *= 0.5;
    }
    const double map_norm = (nx - x).norm() / step;
    x = std::move(nx);
    fx = fn;
    if (map_norm < tol) break;
    step *= 1.5;
  }
  return x;
}

}  // namespace

SolveResult admm_heu(const Problem& prob, const AdmmOptions& opts) {
  require(opts.rho > 0, "admm_heu: rho must be positive");
  require(opts.iterations >= 1, "admm_heu: iteration count must be >= 1");
  require(opts.prox >= 0, "admm_heu: prox weight must be non-negative");
  const auto start = Clock::now();
  const Scaled sc(prob);
  const int K = sc.K;
  const int G = sc.G;
  const int T = sc.T;
  const double rho = opts.rho;
  const Bounds bounds = make_bounds(prob, nullptr, true);

  std::vector<Eigen::VectorXd> x(T, Eigen::VectorXd::Zero(G));
  Eigen::VectorXd y = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(K);

  // Per-slot rate rows r_{k,t} (K x G) and block curvature bounds.
  std::vector<Eigen::MatrixXd> rt(T, Eigen::MatrixXd::Zero(K, G));
  std::vector<double> lt(T, 0.0);
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < K; ++k) {
      rt[t].row(k) = sc.r[k].row(t);
      lt[t] += (2.0 * sc.eta[k] + rho) * sc.r[k].row(t).squaredNorm();
    }
  }
  double ly = 2.0 * sc.eta0 * K;
  for (int k = 0; k < K; ++k) ly += rho * sc.threshold[k] * sc.threshold[k];
  const double blocks = static_cast<double>(T + 1);

  auto totals = [&](const std::vector<Eigen::VectorXd>& xs) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(K);
    for (int t = 0; t < T; ++t) s += rt[t] * xs[t];
    return s;
  };

  SolveResult res;
  res.solver = "admm";
  for (int it = 0; it < opts.iterations; ++it) {
    // Every block reads the iterate-i snapshot (x, y, z, lambda).
    const Eigen::VectorXd s = totals(x);
    std::vector<Eigen::VectorXd> nx(T);
    for (int t = 0; t < T; ++t) {
      const Eigen::VectorXd others = s - rt[t] * x[t];
      const Eigen::VectorXd base = z - sc.threshold.cwiseProduct(y) + others;
      const double tau = opts.prox * blocks * lt[t];
      const Eigen::VectorXd anchor = x[t];
      auto value = [&](const Eigen::VectorXd& v) {
        const Eigen::VectorXd tot = others + rt[t] * v;
        const Eigen::VectorXd res_k = base + rt[t] * v;
        return (sc.eta.array() * (tot - sc.demand).array().square()).sum() + lambda.dot(rt[t] * v) +
               0.5 * rho * res_k.squaredNorm() + 0.5 * tau * (v - anchor).squaredNorm();
      };
      auto grad = [&](const Eigen::VectorXd& v) {
        const Eigen::VectorXd tot = others + rt[t] * v;
        const Eigen::VectorXd res_k = base + rt[t] * v;
        const Eigen::VectorXd w = 2.0 * sc.eta.cwiseProduct(tot - sc.demand) + lambda + rho * res_k;
        return (rt[t].transpose() * w + tau * (v - anchor)).eval();
      };
      auto proj = [&](const Eigen::VectorXd& v) {
        return project_capped_box(v, bounds.lo.row(t).transpose(), bounds.hi.row(t).transpose());
      };
      nx[t] = projected_gradient(x[t], value, grad, proj, lt[t] + tau, opts.inner_tol, opts.inner_max_iters);
    }

    Eigen::VectorXd ny;
    {
      const double tau = opts.prox * blocks * ly;
      const Eigen::VectorXd anchor = y;
      auto value = [&](const Eigen::VectorXd& v) {
        const double cg = v.sum() - K;
        const Eigen::VectorXd res_k = z - sc.threshold.cwiseProduct(v) + s;
        return sc.eta0 * cg * cg - lambda.dot(sc.threshold.cwiseProduct(v)) + 0.5 * rho * res_k.squaredNorm() +
               0.5 * tau * (v - anchor).squaredNorm();
      };
      auto grad = [&](const Eigen::VectorXd& v) {
        const double cg = v.sum() - K;
        const Eigen::VectorXd res_k = z - sc.threshold.cwiseProduct(v) + s;
        return (Eigen::VectorXd::Constant(K, 2.0 * sc.eta0 * cg) - sc.threshold.cwiseProduct(lambda) -
                rho * sc.threshold.cwiseProduct(res_k) + tau * (v - anchor))
            .eval();
      };
      auto proj = [](const Eigen::VectorXd& v) { return v.cwiseMax(0.0).cwiseMin(1.0).eval(); };
      ny = projected_gradient(y, value, grad, proj, ly + tau, opts.inner_tol, opts.inner_max_iters);
    }

    // z-block: separable quadratic over z <= 0, minimized in closed form.
    Eigen::VectorXd nz(K);
    {
      const double tau = opts.prox * blocks * rho;
      for (int k = 0; k < K; ++k) {
        const double c = s[k] - sc.threshold[k] * y[k];
        nz[k] = std::min(0.0, (tau * z[k] - lambda[k] - rho * c) / (rho + tau));
      }
    }

    const Eigen::VectorXd s_new = totals(nx);
    // Multiplier step on either the iterate-i residual or the fresh one.
    for (int k = 0; k < K; ++k) {
      lambda[k] = opts.snapshot_multiplier
                      ? admm_multiplier_step(lambda[k], rho, z[k], sc.threshold[k] * y[k], s[k])
                      : admm_multiplier_step(lambda[k], rho, nz[k], sc.threshold[k] * ny[k], s_new[k]);
    }
    x = std::move(nx);
    y = std::move(ny);
    z = std::move(nz);
    res.residuals.push_back((z - sc.threshold.cwiseProduct(y) + s_new).norm());
  }

  Eigen::MatrixXd x_hat(T, G);
  for (int t = 0; t < T; ++t) x_hat.row(t) = x[t].transpose();
  finish(res, prob, round_relaxed(prob, x_hat));
  res.bound = res.value;
  res.iterations = opts.iterations;
  res.wall_time_s = seconds_since(start);
  return res;
}

namespace {

double objective_from_delivered(const Instance& inst, const std::vector<double>& b) {
  const int K = inst.num_devices();
  int served = 0;
  double data = 0.0;
  for (int k = 0; k < K; ++k) {
    if (b[k] - inst.devices[k].threshold_bits > 0.0) ++served;
    const double gap = b[k] - inst.devices[k].demand_bits;
    data += inst.devices[k].weight * gap * gap;
  }
  const double cg = static_cast<double>(served - K);
  return inst.eta0 * cg * cg + data;
}

}  // namespace

SolveResult greedy(const Problem& prob) {
  const auto start = Clock::now();
  const int K = prob.devices();
  const int G = prob.groups();
  const int T = prob.slots();
  SolveResult res;
  res.solver = "greedy";
  std::vector<int> x(T, 0);
  std::vector<double> b(K, 0.0);
  std::vector<double> trial(K);
  for (int t = 0; t < T; ++t) {
    double best = std::numeric_limits<double>::infinity();
    int pick = 0;
    for (int g = 0; g < G; ++g) {
      if (!prob.allowed(g, t)) continue;
      for (int k = 0; k < K; ++k) trial[k] = b[k] + prob.rates(k, g, t);
      const double v = objective_from_delivered(prob.inst, trial);
      if (v < best) {
        best = v;
        pick = g;
      }
    }
    x[t] = pick;
    for (int k = 0; k < K; ++k) b[k] += prob.rates(k, pick, t);
  }
  finish(res, prob, std::move(x));
  res.bound = res.value;
  res.iterations = T;
  res.wall_time_s = seconds_since(start);
  return res;
}

SolveResult exhaustive_oracle(const Problem& prob, std::uint64_t limit) {
  const auto start = Clock::now();
  const int K = prob.devices();
  const int G = prob.groups();
  const int T = prob.slots();
  double count = 1.0;
  for (int t = 0; t < T; ++t) count *= G;
  if (count > static_cast<double>(limit)) {
    throw std::runtime_error("exhaustive oracle: G^T = " + std::to_string(static_cast<long double>(count)) +
                             " schedules exceeds the limit of " + std::to_string(limit));
  }
  SolveResult res;
  res.solver = "oracle";
  std::vector<int> x(T, 0);
  std::vector<int> best_x(T, 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> partial(T + 1, std::vector<double>(K, 0.0));
  std::uint64_t visited = 0;
  // Depth-first in lexicographic order; strict improvement keeps the first
  // minimum.
  auto dfs = [&](auto&& self, int t) -> void {
    if (t == T) {
      ++visited;
      const double v = objective_from_delivered(prob.inst, partial[T]);
      if (v < best) {
        best = v;
        best_x = x;
      }
      return;
    }
    for (int g = 0; g < G; ++g) {
      if (!prob.allowed(g, t)) continue;
      x[t] = g;
      for (int k = 0; k < K; ++k) partial[t + 1][k] = partial[t][k] + prob.rates(k, g, t);
      self(self, t + 1);
    }
  };
  dfs(dfs, 0);
  finish(res, prob, best_x);
  res.bound = res.value;
  res.optimal = true;
  res.iterations = static_cast<int>(std::min<std::uint64_t>(visited, std::numeric_limits<int>::max()));
  res.wall_time_s = seconds_since(start);
  return res;
}

}  // namespace leosched::solvers
