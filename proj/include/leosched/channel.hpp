#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "leosched/common.hpp"

namespace leosched::channel {

/// Radio band of a transmitter: Ka for the LEO satellite, C for BS/TSTs.
enum class Band { kKa, kC };

const char* band_name(Band band);
Band parse_band(const std::string& name);

/// Physical-layer constants for both link types. Gains are linear.
struct ChannelParams {
  double c = 299792458.0;
  double f_leo = 30e9;
  double f_ter = 4e9;
  double gt_leo = 63095.7;  // 48 dBi
  double gt_ter = 1.0;
  double gr = 1.0;
  double chi = 0.1;  // dB/km
  /// Apply the atmospheric term as a divisor. The written form multiplies
  /// the gain by A(d) >= 1, so raising chi strengthens the link.
  bool atmosphere_as_loss = false;
  double h_alt = 780e3;
  double rician_k = 10.0;
  /// (elevation rad, G^(P)) breakpoints, ascending in elevation; empty means
  /// G^(P) = 1 everywhere. Looked up piecewise-linearly.
  std::vector<std::pair<double, double>> pitch_gain_table;

  void validate() const;
  double pitch_gain(double elevation) const;
};

/// (c / (4 pi d f))^2.
double free_space_factor(double d, double f, double c);

/// A(d) = 10^(3 chi d / (10 H)), evaluated verbatim (inverted when
/// atmosphere_as_loss is set).
double atmospheric_factor(double d, const ChannelParams& params);

/// h for a Ka-band LEO link: G_T * (c/4pi d f)^2 * G_P(pitch) * A(d) * phi * G_R.
double leo_path_gain(double d, const ChannelParams& params, double rician_draw,
                     double pitch);

/// h for a C-band terrestrial link: G_T * (c/4pi d f)^2 * phi * G_R.
double ter_path_gain(double d, const ChannelParams& params,
                     double rayleigh_draw);

enum class FadingKind { kRician, kRayleigh };

/// Small-scale fading process: a complex Gauss-Markov (AR(1)) scatter
/// component, optionally added to a line-of-sight term. The power factor has
/// unit mean when scatter_power = 1.
struct FadingConfig {
  FadingKind kind = FadingKind::kRayleigh;
  double k_factor = 10.0;
  double correlation = 0.9;
  double scatter_power = 1.0;
};

/// Simulated power-factor sequence phi_0..phi_{n-1} of the fading process.
std::vector<double> simulate_fading(const FadingConfig& cfg, std::size_t n,
                                    Rng& rng);

/// Finite-state Markov channel: L ascending levels and a row-stochastic
/// transition matrix.
struct FsmcModel {
  std::vector<double> levels;
  Eigen::MatrixXd transition;
  /// Set when the source process was constant; levels are then all equal and
  /// transition is the identity.
  bool degenerate = false;

  int size() const { return static_cast<int>(levels.size()); }
  void validate() const;
  /// Stationary distribution of the chain (Cesaro limit for reducible or
  /// periodic chains started from uniform).
  std::vector<double> stationary() const;
  int sample_next(int level, Rng& rng) const;
  int sample_stationary(Rng& rng) const;
};

/// Quantile binning + empirical transition counting over a simulated fading
/// path. Preconditions: num_levels >= 2, n_samples >= 10 * num_levels^2.
FsmcModel build_fsmc(const FadingConfig& cfg, int num_levels,
                     std::size_t n_samples, std::uint64_t seed);

nlohmann::json to_json(const FsmcModel& model);
FsmcModel fsmc_from_json(const nlohmann::json& j);

/// Per-link large-scale gains plus one FSMC per band. A link's gain is
/// mean_gain(k, n) * level of its band's chain.
struct ChannelModel {
  Eigen::MatrixXd mean_gain;  // K x N
  std::vector<Band> tx_band;  // N
  FsmcModel leo;
  FsmcModel ter;

  int num_devices() const { return static_cast<int>(mean_gain.rows()); }
  int num_transmitters() const { return static_cast<int>(mean_gain.cols()); }
  const FsmcModel& model_for(int n) const {
    return tx_band[n] == Band::kKa ? leo : ter;
  }
};

struct ChannelState {
  Eigen::MatrixXd grid;         // K x N current gains
  Eigen::MatrixXi level_index;  // K x N FSMC level indices
};

ChannelState make_state(const ChannelModel& model, Eigen::MatrixXi levels);
bool is_consistent(const ChannelState& state, const ChannelModel& model);

/// Every entry transitions independently per its row of `model.transition`.
Eigen::MatrixXi step_levels(const Eigen::MatrixXi& levels,
                            const FsmcModel& model, Rng& rng);
ChannelState step_channel(const ChannelState& state, const ChannelModel& model,
                          Rng& rng);
ChannelState draw_stationary(const ChannelModel& model, Rng& rng);

/// T consecutive states: the first from the stationary law, then FSMC steps.
std::vector<ChannelState> sample_trajectory(const ChannelModel& model,
                                            int horizon, Rng& rng);

}  // namespace leosched::channel
