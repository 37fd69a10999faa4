#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "leosched/channel.hpp"
#include "leosched/common.hpp"

namespace leosched {

using channel::Band;

struct Transmitter {
  std::string name;
  Band band = Band::kC;
  double power_w = 1.0;
};

struct GroundDevice {
  double demand_bits = 0.0;     // D_k
  double threshold_bits = 0.0;  // D'_k, served once delivered data exceeds it
  double sinr_floor = 0.0;      // linear
  double weight = 0.0;          // eta_k
};

/// Geometry the large-scale gains were derived from; kept so that scenario
/// events can rebuild gains under different weather.
struct Deployment {
  std::vector<double> leo_distance;   // K, metres
  std::vector<double> leo_elevation;  // K, radians
  Eigen::MatrixXd ter_distance;       // K x N (unused columns for Ka are 0)
};

/// Static problem data for one scheduling horizon.
struct Instance {
  std::vector<Transmitter> transmitters;
  std::vector<GroundDevice> devices;
  int horizon = 10;
  double slot_len = 0.1;
  double eta0 = 1.0;
  double noise_psd = 0.0;  // W/Hz
  double bw_leo = 400e6;
  double bw_ter = 20e6;
  /// Big-M of the SINR-floor constraint; 0 selects the automatic value.
  double big_m = 0.0;
  Eigen::MatrixXd mean_gain;  // K x N large-scale gains
  Deployment deployment;

  int num_devices() const { return static_cast<int>(devices.size()); }
  int num_transmitters() const { return static_cast<int>(transmitters.size()); }
  double bandwidth(Band band) const { return band == Band::kKa ? bw_leo : bw_ter; }
  void validate() const;
};

nlohmann::json to_json(const Instance& inst);
Instance instance_from_json(const nlohmann::json& j);

/// Parameters of the synthetic deployment generator.
struct GenParams {
  int num_devices = 8;
  int num_leo = 1;
  int num_bs = 1;
  int num_tst = 2;
  int horizon = 10;
  double slot_len = 0.1;
  double power_leo = 100.0;
  double power_bs = 40.0;
  double power_tst = 2.0;
  double bw_leo = 400e6;
  double bw_ter = 20e6;
  double noise_dbm_hz = -174.0;
  double cell_radius = 2000.0;
  double tst_offset = 1000.0;
  double min_distance = 50.0;
  double elevation_deg = 60.0;
  double elevation_spread_deg = 5.0;
  double demand_min = 3e7;
  double demand_max = 1.5e8;
  double threshold_ratio = 0.5;
  double sinr_floor_db = -5.0;
  /// Served-count weight; stored as eta0 / K^2.
  double eta0 = 1.0;
  /// Data-gap weight; stored per device as eta_data / D_k^2.
  double eta_data = 1.0;

  void validate() const;
};

/// Places devices in a disc around the BS, TSTs on a ring, and the LEO at the
/// configured elevation; computes large-scale gains with unit fading.
Instance generate_instance(const GenParams& gen, const channel::ChannelParams& params,
                           Rng& rng);

/// Mean gain of every link under `params` for the stored deployment.
Eigen::MatrixXd mean_gains(const Instance& inst, const channel::ChannelParams& params);

/// Draws fresh demands (uniform in [demand_min, demand_max]) and resets the
/// derived thresholds and weights of every device.
void redraw_demands(Instance& inst, const GenParams& gen, Rng& rng);

/// A set of simultaneous unicast links: every device has at most one server
/// and every transmitter serves at most one device.
struct LinkGroup {
  std::vector<int> server;                 // K entries, -1 when not served
  std::vector<std::pair<int, int>> links;  // (transmitter n, device k), ascending n

  bool empty() const { return links.empty(); }
  bool serves(int k) const { return server[k] >= 0; }
  int alpha(int k, int n) const { return server[k] == n ? 1 : 0; }
};

/// Builds a group from (n, k) pairs; throws if a device or transmitter repeats.
LinkGroup make_group(int num_devices, int num_transmitters,
                     const std::vector<std::pair<int, int>>& links);

/// Valid link groups in canonical order (ascending lexicographic order of the
/// flattened device-major incidence); index 0 is the idle group.
struct GroupCatalog {
  int num_devices = 0;
  int num_transmitters = 0;
  std::vector<LinkGroup> groups;

  int size() const { return static_cast<int>(groups.size()); }
  const LinkGroup& operator[](int g) const { return groups[g]; }
};

class CatalogTooLarge : public std::runtime_error {
 public:
  explicit CatalogTooLarge(std::size_t limit);
  std::size_t limit() const { return limit_; }

 private:
  std::size_t limit_;
};

inline constexpr std::size_t kDefaultCatalogLimit = 200000;

/// All injective partial transmitter->device matchings where each transmitter
/// only considers its `cap` strongest devices by mean gain (ties to the lower
/// index), plus the idle group.
GroupCatalog enumerate_groups(const Instance& inst, int cap,
                              std::size_t hard_limit = kDefaultCatalogLimit);

nlohmann::json to_json(const GroupCatalog& catalog);
GroupCatalog catalog_from_json(const nlohmann::json& j);

/// Per-device decomposition of the SINR of one group.
struct SinrTerms {
  Eigen::VectorXd signal;        // h_{k,n_k} p
  Eigen::VectorXd interference;  // co-band terms
  Eigen::VectorXd noise;         // sigma^2 B of the serving band
};

SinrTerms sinr_terms(const Instance& inst, const LinkGroup& group,
                     const channel::ChannelState& ch);
/// Linear SINR per device; 0 for devices outside the group.
Eigen::VectorXd sinr(const Instance& inst, const LinkGroup& group,
                     const channel::ChannelState& ch);
/// Bits delivered to each device in one slot: slot_len * B * log2(1 + sinr).
Eigen::VectorXd rate(const Instance& inst, const LinkGroup& group,
                     const channel::ChannelState& ch);

/// Dense K x G x T array, device-major.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int k, int g, int t) : k_(k), g_(g), t_(t), data_(static_cast<std::size_t>(k) * g * t, 0.0) {}

  double& operator()(int k, int g, int t) { return data_[index(k, g, t)]; }
  double operator()(int k, int g, int t) const { return data_[index(k, g, t)]; }
  int devices() const { return k_; }
  int groups() const { return g_; }
  int slots() const { return t_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

 private:
  std::size_t index(int k, int g, int t) const {
    return (static_cast<std::size_t>(k) * g_ + g) * t_ + t;
  }
  int k_ = 0;
  int g_ = 0;
  int t_ = 0;
  std::vector<double> data_;
};

/// R[k][g][t]: bits group g would deliver to device k in slot t.
using RateTensor = Tensor3;
/// gamma[k][g][t]: SINR of device k under group g in slot t.
using SinrTensor = Tensor3;

RateTensor build_rate_tensor(const Instance& inst, const GroupCatalog& catalog,
                             const std::vector<channel::ChannelState>& trajectory);
SinrTensor build_sinr_tensor(const Instance& inst, const GroupCatalog& catalog,
                             const std::vector<channel::ChannelState>& trajectory);

/// Binary cache: three little-endian uint64 (K, G, T) followed by K*G*T
/// little-endian float64 values in device-major order.
void write_rate_tensor(const RateTensor& r, const std::string& path);
RateTensor read_rate_tensor(const std::string& path);

/// One group index per slot plus the served flags it induces.
struct Schedule {
  std::vector<int> x;
  std::vector<int> y;
};

/// Total bits each device receives under x.
std::vector<double> delivered(const RateTensor& r, const std::vector<int>& x);
/// y_k = 1 iff delivered_k > D'_k.
std::vector<int> served_flags(const Instance& inst, const std::vector<int>& x,
                              const RateTensor& r);
/// eta0 (sum y - K)^2 + sum_k eta_k (delivered_k - D_k)^2.
double objective(const Instance& inst, const std::vector<int>& x, const RateTensor& r);
/// Objective of the all-idle schedule: eta0 K^2 + sum_k eta_k D_k^2.
double idle_objective(const Instance& inst);

Schedule make_schedule(const Instance& inst, std::vector<int> x, const RateTensor& r);

struct Violation {
  std::string constraint;  // sinr_floor | one_group_per_slot | service_threshold | binary
  int k = -1;
  int g = -1;
  int t = -1;
  std::string detail;
};

/// Lists every violated constraint. `x` holds one group index per slot (so a
/// slot can only ever carry one group); out-of-range indices are reported as
/// one_group_per_slot violations, non-binary y entries as binary violations.
std::vector<Violation> check_feasible(const Instance& inst, const GroupCatalog& catalog,
                                      const std::vector<int>& x, const std::vector<int>& y,
                                      const RateTensor& r, const SinrTensor& sinr);

/// Everything the offline solvers need about one horizon.
struct Problem {
  Instance inst;
  GroupCatalog catalog;
  RateTensor rates;
  SinrTensor sinr;

  int devices() const { return inst.num_devices(); }
  int groups() const { return catalog.size(); }
  int slots() const { return inst.horizon; }
  /// Group g may be scheduled in slot t without breaking any SINR floor.
  bool allowed(int g, int t) const;
  /// Automatic big-M: 1.1 * max over (k, g, t) of floor_k + gamma_{k,g,t},
  /// unless inst.big_m is set.
  double big_m() const;
};

Problem make_problem(Instance inst, GroupCatalog catalog,
                     const std::vector<channel::ChannelState>& trajectory);

}  // namespace leosched
