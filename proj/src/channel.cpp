#include "leosched/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace leosched::channel {

const char* band_name(Band band) { return band == Band::kKa ? "Ka" : "C"; }

Band parse_band(const std::string& name) {
  if (name == "Ka") return Band::kKa;
  if (name == "C") return Band::kC;
  throw ValidationError("unknown band '" + name + "' (expected Ka or C)");
}

void ChannelParams::validate() const {
  require(c > 0, "channel: c must be positive");
  require(f_leo > 0 && f_ter > 0, "channel: carrier frequencies must be positive");
  require(f_leo > f_ter, "channel: f_leo must exceed f_ter");
  require(gt_leo > 0 && gt_ter > 0 && gr > 0, "channel: antenna gains must be positive");
  require(chi >= 0, "channel: chi must be non-negative");
  require(h_alt > 0, "channel: LEO altitude must be positive");
  require(rician_k >= 0, "channel: Rician K-factor must be non-negative");
  for (std::size_t i = 0; i < pitch_gain_table.size(); ++i) {
    require(pitch_gain_table[i].second > 0, "channel: pitch gains must be positive");
    if (i > 0) {
      require(pitch_gain_table[i].first > pitch_gain_table[i - 1].first,
              "channel: pitch table elevations must be ascending");
    }
  }
}

double ChannelParams::pitch_gain(double elevation) const {
  if (pitch_gain_table.empty()) return 1.0;
  if (elevation <= pitch_gain_table.front().first) return pitch_gain_table.front().second;
  if (elevation >= pitch_gain_table.back().first) return pitch_gain_table.back().second;
  auto hi = std::upper_bound(
      pitch_gain_table.begin(), pitch_gain_table.end(), elevation,
      [](double e, const std::pair<double, double>& p) { return e < p.first; });
  auto lo = hi - 1;
  const double w = (elevation - lo->first) / (hi->first - lo->first);
  return lo->second + w * (hi->second - lo->second);
}

double free_space_factor(double d, double f, double c) {
  if (!(d > 0)) throw std::domain_error("path gain: distance must be positive");
  const double a = c / (4.0 * std::numbers::pi * d * f);
  return a * a;
}

double atmospheric_factor(double d, const ChannelParams& params) {
  const double a = std::pow(10.0, 3.0 * params.chi * d / (10.0 * params.h_alt));
  return params.atmosphere_as_loss ? 1.0 / a : a;
}

double leo_path_gain(double d, const ChannelParams& params, double rician_draw,
                     double pitch) {
  if (!(d > 0)) throw std::domain_error("leo_path_gain: distance must be positive");
  if (!(rician_draw > 0)) throw std::domain_error("leo_path_gain: fading draw must be positive");
  const double fading = free_space_factor(d, params.f_leo, params.c) *
                        params.pitch_gain(pitch) * atmospheric_factor(d, params) *
                        rician_draw;
  return params.gt_leo * fading * params.gr;
}

double ter_path_gain(double d, const ChannelParams& params, double rayleigh_draw) {
  if (!(d > 0)) throw std::domain_error("ter_path_gain: distance must be positive");
  return params.gt_ter * free_space_factor(d, params.f_ter, params.c) * rayleigh_draw *
         params.gr;
}

std::vector<double> simulate_fading(const FadingConfig& cfg, std::size_t n, Rng& rng) {
  require(cfg.correlation >= 0 && cfg.correlation < 1, "fading: correlation must lie in [0,1)");
  require(cfg.scatter_power >= 0, "fading: scatter power must be non-negative");
  const double sigma = std::sqrt(cfg.scatter_power / 2.0);
  const double innov = std::sqrt(1.0 - cfg.correlation * cfg.correlation);
  double los = 0.0;
  double diffuse = 1.0;
  if (cfg.kind == FadingKind::kRician) {
    los = std::sqrt(cfg.k_factor / (cfg.k_factor + 1.0));
    diffuse = std::sqrt(1.0 / (cfg.k_factor + 1.0));
  }
  std::vector<double> out(n);
  double re = sigma * standard_normal(rng);
  double im = sigma * standard_normal(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = los + diffuse * re;
    const double b = diffuse * im;
    out[i] = a * a + b * b;
    re = cfg.correlation * re + innov * sigma * standard_normal(rng);
    im = cfg.correlation * im + innov * sigma * standard_normal(rng);
  }
  return out;
}

void FsmcModel::validate() const {
  const int L = size();
  require(L >= 1, "fsmc: no levels");
  require(transition.rows() == L && transition.cols() == L, "fsmc: transition must be L x L");
  for (int l = 0; l < L; ++l) {
    double sum = 0.0;
    for (int m = 0; m < L; ++m) {
      const double p = transition(l, m);
      require(p >= 0.0 && p <= 1.0, "fsmc: transition entries must lie in [0,1]");
      sum += p;
    }
    require(std::abs(sum - 1.0) <= 1e-12, "fsmc: transition rows must sum to 1");
    if (l > 0 && !degenerate) {
      require(levels[l] > levels[l - 1], "fsmc: levels must be strictly ascending");
    }
  }
}

std::vector<double> FsmcModel::stationary() const {
  const int L = size();
  // Lazy chain (P + I)/2 has the same stationary law and is aperiodic.
  Eigen::MatrixXd lazy = 0.5 * (transition + Eigen::MatrixXd::Identity(L, L));
  Eigen::RowVectorXd pi = Eigen::RowVectorXd::Constant(L, 1.0 / L);
  for (int it = 0; it < 100000; ++it) {
    Eigen::RowVectorXd next = pi * lazy;
    const double diff = (next - pi).cwiseAbs().sum();
    pi = next;
    if (diff < 1e-15) break;
  }
  pi /= pi.sum();
  return {pi.data(), pi.data() + L};
}

namespace {

int sample_row(const Eigen::MatrixXd& p, int row, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  const int L = static_cast<int>(p.cols());
  for (int m = 0; m < L; ++m) {
    acc += p(row, m);
    if (u < acc) return m;
  }
  // u fell into the rounding gap at the top of the row: take the last
  // reachable state.
  for (int m = L - 1; m >= 0; --m) {
    if (p(row, m) > 0) return m;
  }
  return row;
}

}  // namespace

int FsmcModel::sample_next(int level, Rng& rng) const {
  return sample_row(transition, level, rng);
}

int FsmcModel::sample_stationary(Rng& rng) const {
  const auto pi = stationary();
  const double u = uniform01(rng);
  double acc = 0.0;
  for (int l = 0; l < size(); ++l) {
    acc += pi[l];
    if (u < acc) return l;
  }
  return size() - 1;
}

FsmcModel build_fsmc(const FadingConfig& cfg, int num_levels, std::size_t n_samples,
                     std::uint64_t seed) {
  require(num_levels >= 2, "build_fsmc: need at least 2 levels");
  require(n_samples >= static_cast<std::size_t>(10 * num_levels * num_levels),
          "build_fsmc: n_samples must be at least 10*L^2");
  Rng rng(seed);
  const std::vector<double> path = simulate_fading(cfg, n_samples, rng);
  const auto [mn, mx] = std::minmax_element(path.begin(), path.end());

  FsmcModel model;
  model.transition = Eigen::MatrixXd::Identity(num_levels, num_levels);
  if (*mx - *mn <= 1e-12 * std::max(1.0, std::abs(*mx))) {
    model.levels.assign(num_levels, *mn);
    model.degenerate = true;
    return model;
  }

  std::vector<double> sorted = path;
  std::sort(sorted.begin(), sorted.end());
  // Inner boundaries: bin l holds values in [b_{l-1}, b_l).
  std::vector<double> bounds(num_levels - 1);
  for (int l = 1; l < num_levels; ++l) {
    bounds[l - 1] = sorted[static_cast<std::size_t>(l) * n_samples / num_levels];
  }
  auto bin_of = [&](double v) {
    return static_cast<int>(std::upper_bound(bounds.begin(), bounds.end(), v) - bounds.begin());
  };

  std::vector<double> sums(num_levels, 0.0);
  std::vector<std::size_t> counts(num_levels, 0);
  Eigen::MatrixXd trans = Eigen::MatrixXd::Zero(num_levels, num_levels);
  int prev = -1;
  for (double v : path) {
    const int b = bin_of(v);
    sums[b] += v;
    ++counts[b];
    if (prev >= 0) trans(prev, b) += 1.0;
    prev = b;
  }

  model.levels.resize(num_levels);
  for (int l = 0; l < num_levels; ++l) {
    model.levels[l] = counts[l] > 0 ? sums[l] / static_cast<double>(counts[l])
                                    : (l == 0 ? sorted.front() : bounds[l - 1]);
  }
  for (int l = 0; l < num_levels; ++l) {
    const double row = trans.row(l).sum();
    if (row > 0) {
      model.transition.row(l) = trans.row(l) / row;
    }
  }
  return model;
}

nlohmann::json to_json(const FsmcModel& model) {
  nlohmann::json j;
  j["levels"] = model.levels;
  nlohmann::json rows = nlohmann::json::array();
  for (int l = 0; l < model.size(); ++l) {
    std::vector<double> row(model.size());
    for (int m = 0; m < model.size(); ++m) row[m] = model.transition(l, m);
    rows.push_back(row);
  }
  j["transition"] = rows;
  return j;
}

FsmcModel fsmc_from_json(const nlohmann::json& j) {
  FsmcModel model;
  model.levels = j.at("levels").get<std::vector<double>>();
  const auto rows = j.at("transition").get<std::vector<std::vector<double>>>();
  const int L = model.size();
  require(static_cast<int>(rows.size()) == L, "fsmc json: transition row count mismatch");
  model.transition.resize(L, L);
  bool all_equal = true;
  for (int l = 0; l < L; ++l) {
    require(static_cast<int>(rows[l].size()) == L, "fsmc json: transition must be square");
    for (int m = 0; m < L; ++m) model.transition(l, m) = rows[l][m];
    if (l > 0 && model.levels[l] != model.levels[0]) all_equal = false;
  }
  model.degenerate = all_equal && L > 1;
  model.validate();
  return model;
}

ChannelState make_state(const ChannelModel& model, Eigen::MatrixXi levels) {
  const int K = model.num_devices();
  const int N = model.num_transmitters();
  require(levels.rows() == K && levels.cols() == N, "channel state: level grid must be K x N");
  ChannelState s;
  s.grid.resize(K, N);
  for (int k = 0; k < K; ++k) {
    for (int n = 0; n < N; ++n) {
      s.grid(k, n) = model.mean_gain(k, n) * model.model_for(n).levels[levels(k, n)];
    }
  }
  s.level_index = std::move(levels);
  return s;
}

bool is_consistent(const ChannelState& state, const ChannelModel& model) {
  const int K = model.num_devices();
  const int N = model.num_transmitters();
  if (state.grid.rows() != K || state.grid.cols() != N) return false;
  if (state.level_index.rows() != K || state.level_index.cols() != N) return false;
  for (int k = 0; k < K; ++k) {
    for (int n = 0; n < N; ++n) {
      const auto& m = model.model_for(n);
      const int l = state.level_index(k, n);
      if (l < 0 || l >= m.size()) return false;
      if (state.grid(k, n) != model.mean_gain(k, n) * m.levels[l]) return false;
    }
  }
  return true;
}

Eigen::MatrixXi step_levels(const Eigen::MatrixXi& levels, const FsmcModel& model, Rng& rng) {
  Eigen::MatrixXi next(levels.rows(), levels.cols());
  for (Eigen::Index k = 0; k < levels.rows(); ++k) {
    for (Eigen::Index n = 0; n < levels.cols(); ++n) {
      next(k, n) = model.sample_next(levels(k, n), rng);
    }
  }
  return next;
}

ChannelState step_channel(const ChannelState& state, const ChannelModel& model, Rng& rng) {
  Eigen::MatrixXi next(state.level_index.rows(), state.level_index.cols());
  for (Eigen::Index k = 0; k < next.rows(); ++k) {
    for (Eigen::Index n = 0; n < next.cols(); ++n) {
      next(k, n) = model.model_for(static_cast<int>(n)).sample_next(state.level_index(k, n), rng);
    }
  }
  return make_state(model, std::move(next));
}

ChannelState draw_stationary(const ChannelModel& model, Rng& rng) {
  const int K = model.num_devices();
  const int N = model.num_transmitters();
  const auto pi_leo = model.leo.stationary();
  const auto pi_ter = model.ter.stationary();
  Eigen::MatrixXi levels(K, N);
  for (int k = 0; k < K; ++k) {
    for (int n = 0; n < N; ++n) {
      const auto& pi = model.tx_band[n] == Band::kKa ? pi_leo : pi_ter;
      const double u = uniform01(rng);
      double acc = 0.0;
      int pick = static_cast<int>(pi.size()) - 1;
      for (int l = 0; l < static_cast<int>(pi.size()); ++l) {
        acc += pi[l];
        if (u < acc) {
          pick = l;
          break;
        }
      }
      levels(k, n) = pick;
    }
  }
  return make_state(model, std::move(levels));
}

std::vector<ChannelState> sample_trajectory(const ChannelModel& model, int horizon, Rng& rng) {
  require(horizon >= 1, "sample_trajectory: horizon must be >= 1");
  std::vector<ChannelState> traj;
  traj.reserve(horizon);
  traj.push_back(draw_stationary(model, rng));
  for (int t = 1; t < horizon; ++t) traj.push_back(step_channel(traj.back(), model, rng));
  return traj;
}

}  // namespace leosched::channel
