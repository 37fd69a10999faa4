#include "leosched/instance.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

namespace leosched {

namespace {

constexpr double kEarthRadius = 6371e3;

double leo_slant_range(double elevation, double altitude) {
  const double re = kEarthRadius;
  const double c = std::cos(elevation);
  return std::sqrt((re + altitude) * (re + altitude) - re * re * c * c) - re * std::sin(elevation);
}

}  // namespace

void Instance::validate() const {
  const int K = num_devices();
  const int N = num_transmitters();
  require(K >= 1, "instance: need at least one device");
  require(N >= 1, "instance: need at least one transmitter");
  require(horizon >= 1, "instance: horizon T must be >= 1");
  require(slot_len > 0, "instance: slot length must be positive");
  require(eta0 >= 0, "instance: eta0 must be non-negative");
  require(noise_psd > 0, "instance: noise density must be positive");
  require(bw_leo > 0 && bw_ter > 0, "instance: bandwidths must be positive");
  require(big_m >= 0, "instance: big_m must be non-negative");
  for (const auto& tx : transmitters) {
    require(tx.power_w > 0, "instance: transmit power of " + tx.name + " must be positive");
  }
  for (int k = 0; k < K; ++k) {
    const auto& d = devices[k];
    require(d.threshold_bits > 0 && d.threshold_bits < d.demand_bits,
            "instance: device " + std::to_string(k) + " needs 0 < D' < D");
    require(d.weight >= 0, "instance: device weights must be non-negative");
    require(d.sinr_floor >= 0, "instance: SINR floors must be non-negative");
  }
  require(mean_gain.rows() == K && mean_gain.cols() == N, "instance: mean_gain must be K x N");
  require((mean_gain.array() >= 0).all(), "instance: mean gains must be non-negative");
}

nlohmann::json to_json(const Instance& inst) {
  nlohmann::json j;
  nlohmann::json txs = nlohmann::json::array();
  for (const auto& tx : inst.transmitters) {
    txs.push_back({{"name", tx.name}, {"band", channel::band_name(tx.band)}, {"power_w", tx.power_w}});
  }
  nlohmann::json devs = nlohmann::json::array();
  for (const auto& d : inst.devices) {
    devs.push_back({{"demand_bits", d.demand_bits},
                    {"threshold_bits", d.threshold_bits},
                    {"sinr_floor", d.sinr_floor},
                    {"weight", d.weight}});
  }
  std::vector<std::vector<double>> gains(inst.num_devices());
  std::vector<std::vector<double>> ter(inst.num_devices());
  for (int k = 0; k < inst.num_devices(); ++k) {
    for (int n = 0; n < inst.num_transmitters(); ++n) {
      gains[k].push_back(inst.mean_gain(k, n));
      if (inst.deployment.ter_distance.size() > 0) ter[k].push_back(inst.deployment.ter_distance(k, n));
    }
  }
  j["transmitters"] = txs;
  j["devices"] = devs;
  j["horizon"] = inst.horizon;
  j["slot_len"] = inst.slot_len;
  j["eta0"] = inst.eta0;
  j["noise_psd"] = inst.noise_psd;
  j["bw_leo"] = inst.bw_leo;
  j["bw_ter"] = inst.bw_ter;
  j["big_m"] = inst.big_m;
  j["mean_gain"] = gains;
  j["deployment"] = {{"leo_distance", inst.deployment.leo_distance},
                     {"leo_elevation", inst.deployment.leo_elevation},
                     {"ter_distance", ter}};
  return j;
}

Instance instance_from_json(const nlohmann::json& j) {
  Instance inst;
  for (const auto& t : j.at("transmitters")) {
    inst.transmitters.push_back({t.at("name").get<std::string>(),
                                 channel::parse_band(t.at("band").get<std::string>()),
                                 t.at("power_w").get<double>()});
  }
  for (const auto& d : j.at("devices")) {
    inst.devices.push_back({d.at("demand_bits").get<double>(), d.at("threshold_bits").get<double>(),
                            d.at("sinr_floor").get<double>(), d.at("weight").get<double>()});
  }
  inst.horizon = j.at("horizon").get<int>();
  inst.slot_len = j.at("slot_len").get<double>();
  inst.eta0 = j.at("eta0").get<double>();
  inst.noise_psd = j.at("noise_psd").get<double>();
  inst.bw_leo = j.at("bw_leo").get<double>();
  inst.bw_ter = j.at("bw_ter").get<double>();
  inst.big_m = j.value("big_m", 0.0);
  const int K = inst.num_devices();
  const int N = inst.num_transmitters();
  const auto gains = j.at("mean_gain").get<std::vector<std::vector<double>>>();
  require(static_cast<int>(gains.size()) == K, "instance json: mean_gain must have K rows");
  inst.mean_gain.resize(K, N);
  for (int k = 0; k < K; ++k) {
    require(static_cast<int>(gains[k].size()) == N, "instance json: mean_gain must have N columns");
    for (int n = 0; n < N; ++n) inst.mean_gain(k, n) = gains[k][n];
  }
  if (j.contains("deployment")) {
    const auto& dep = j.at("deployment");
    inst.deployment.leo_distance = dep.at("leo_distance").get<std::vector<double>>();
    inst.deployment.leo_elevation = dep.at("leo_elevation").get<std::vector<double>>();
    const auto ter = dep.at("ter_distance").get<std::vector<std::vector<double>>>();
    if (!ter.empty() && !ter[0].empty()) {
      inst.deployment.ter_distance.resize(K, N);
      for (int k = 0; k < K; ++k) {
        for (int n = 0; n < N; ++n) inst.deployment.ter_distance(k, n) = ter[k][n];
      }
    }
  }
  inst.validate();
  return inst;
}

void GenParams::validate() const {
  require(num_devices >= 1, "gen: num_devices must be >= 1");
  require(num_leo >= 0 && num_bs >= 0 && num_tst >= 0, "gen: transmitter counts must be >= 0");
  require(num_leo + num_bs + num_tst >= 1, "gen: need at least one transmitter");
  require(horizon >= 1, "gen: horizon must be >= 1");
  require(slot_len > 0, "gen: slot_len must be positive");
  require(power_leo > 0 && power_bs > 0 && power_tst > 0, "gen: powers must be positive");
  require(bw_leo > 0 && bw_ter > 0, "gen: bandwidths must be positive");
  require(cell_radius > min_distance && min_distance > 0, "gen: need cell_radius > min_distance > 0");
  require(demand_min > 0 && demand_max >= demand_min, "gen: need 0 < demand_min <= demand_max");
  require(threshold_ratio > 0 && threshold_ratio < 1, "gen: threshold_ratio must lie in (0,1)");
  require(eta0 >= 0 && eta_data >= 0, "gen: weights must be non-negative");
  require(elevation_deg > 0 && elevation_deg <= 90, "gen: elevation must lie in (0, 90]");
}

Eigen::MatrixXd mean_gains(const Instance& inst, const channel::ChannelParams& params) {
  const int K = inst.num_devices();
  const int N = inst.num_transmitters();
  Eigen::MatrixXd g(K, N);
  for (int k = 0; k < K; ++k) {
    for (int n = 0; n < N; ++n) {
      if (inst.transmitters[n].band == Band::kKa) {
        g(k, n) = channel::leo_path_gain(inst.deployment.leo_distance[k], params, 1.0,
                                         inst.deployment.leo_elevation[k]);
      } else {
        g(k, n) = channel::ter_path_gain(inst.deployment.ter_distance(k, n), params, 1.0);
      }
    }
  }
  return g;
}

void redraw_demands(Instance& inst, const GenParams& gen, Rng& rng) {
  const int K = inst.num_devices();
  const double floor = std::pow(10.0, gen.sinr_floor_db / 10.0);
  for (auto& d : inst.devices) {
    d.demand_bits = gen.demand_min + (gen.demand_max - gen.demand_min) * uniform01(rng);
    d.threshold_bits = gen.threshold_ratio * d.demand_bits;
    d.sinr_floor = floor;
    d.weight = gen.eta_data / (d.demand_bits * d.demand_bits);
  }
  inst.eta0 = gen.eta0 / (static_cast<double>(K) * K);
}

Instance generate_instance(const GenParams& gen, const channel::ChannelParams& params, Rng& rng) {
  gen.validate();
  params.validate();
  Instance inst;
  inst.horizon = gen.horizon;
  inst.slot_len = gen.slot_len;
  inst.noise_psd = std::pow(10.0, gen.noise_dbm_hz / 10.0) * 1e-3;
  inst.bw_leo = gen.bw_leo;
  inst.bw_ter = gen.bw_ter;

  std::vector<std::pair<double, double>> ter_pos;  // per transmitter (x, y); LEO unused
  for (int i = 0; i < gen.num_leo; ++i) {
    inst.transmitters.push_back({"LEO" + std::to_string(i), Band::kKa, gen.power_leo});
    ter_pos.emplace_back(0.0, 0.0);
  }
  for (int i = 0; i < gen.num_bs; ++i) {
    inst.transmitters.push_back({"BS" + std::to_string(i), Band::kC, gen.power_bs});
    const double a = 2.0 * std::numbers::pi * i / std::max(1, gen.num_bs);
    const double r = i == 0 ? 0.0 : gen.tst_offset * 0.5;
    ter_pos.emplace_back(r * std::cos(a), r * std::sin(a));
  }
  for (int i = 0; i < gen.num_tst; ++i) {
    inst.transmitters.push_back({"TST" + std::to_string(i), Band::kC, gen.power_tst});
    const double a = 2.0 * std::numbers::pi * i / std::max(1, gen.num_tst);
    ter_pos.emplace_back(gen.tst_offset * std::cos(a), gen.tst_offset * std::sin(a));
  }

  const int K = gen.num_devices;
  const int N = inst.num_transmitters();
  inst.devices.resize(K);
  inst.deployment.leo_distance.resize(K);
  inst.deployment.leo_elevation.resize(K);
  inst.deployment.ter_distance = Eigen::MatrixXd::Zero(K, N);
  const double deg = std::numbers::pi / 180.0;
  for (int k = 0; k < K; ++k) {
    // Uniform in the disc, rejecting points too close to a terrestrial site.
    double px = 0.0;
    double py = 0.0;
    for (;;) {
      const double r = gen.cell_radius * std::sqrt(uniform01(rng));
      const double a = 2.0 * std::numbers::pi * uniform01(rng);
      px = r * std::cos(a);
      py = r * std::sin(a);
      bool ok = true;
      for (int n = 0; n < N; ++n) {
        if (inst.transmitters[n].band == Band::kKa) continue;
        if (std::hypot(px - ter_pos[n].first, py - ter_pos[n].second) < gen.min_distance) ok = false;
      }
      if (ok) break;
    }
    const double elev =
        (gen.elevation_deg + gen.elevation_spread_deg * (2.0 * uniform01(rng) - 1.0)) * deg;
    inst.deployment.leo_elevation[k] = std::clamp(elev, 1.0 * deg, 90.0 * deg);
    inst.deployment.leo_distance[k] = leo_slant_range(inst.deployment.leo_elevation[k], params.h_alt);
    for (int n = 0; n < N; ++n) {
      if (inst.transmitters[n].band == Band::kKa) continue;
      inst.deployment.ter_distance(k, n) =
          std::hypot(px - ter_pos[n].first, py - ter_pos[n].second);
    }
  }
  redraw_demands(inst, gen, rng);
  inst.mean_gain = mean_gains(inst, params);
  inst.validate();
  return inst;
}

LinkGroup make_group(int num_devices, int num_transmitters,
                     const std::vector<std::pair<int, int>>& links) {
  LinkGroup g;
  g.server.assign(num_devices, -1);
  std::vector<char> used(num_transmitters, 0);
  for (auto [n, k] : links) {
    require(n >= 0 && n < num_transmitters && k >= 0 && k < num_devices, "link group: index out of range");
    require(g.server[k] < 0, "link group: device served by two transmitters");
    require(!used[n], "link group: transmitter serves two devices");
    g.server[k] = n;
    used[n] = 1;
  }
  g.links = links;
  std::sort(g.links.begin(), g.links.end());
  return g;
}

CatalogTooLarge::CatalogTooLarge(std::size_t limit)
    : std::runtime_error("group catalog exceeds the hard limit of " + std::to_string(limit) +
                         " groups; lower the per-transmitter cap or raise the limit"),
      limit_(limit) {}

namespace {

/// Lexicographic order of the flattened device-major incidence. Per device
/// the one-hot row at transmitter n outranks the row at n' > n, and the empty
/// row is smallest.
bool alpha_less(const LinkGroup& a, const LinkGroup& b, int N) {
  for (std::size_t k = 0; k < a.server.size(); ++k) {
    const int ca = a.server[k] < 0 ? 0 : N - a.server[k];
    const int cb = b.server[k] < 0 ? 0 : N - b.server[k];
    if (ca != cb) return ca < cb;
  }
  return false;
}

}  // namespace

GroupCatalog enumerate_groups(const Instance& inst, int cap, std::size_t hard_limit) {
  require(cap >= 1, "enumerate_groups: cap must be >= 1");
  const int K = inst.num_devices();
  const int N = inst.num_transmitters();
  std::vector<std::vector<int>> candidates(N);
  for (int n = 0; n < N; ++n) {
    std::vector<int> order(K);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return inst.mean_gain(a, n) > inst.mean_gain(b, n); });
    order.resize(std::min(cap, K));
    std::sort(order.begin(), order.end());
    candidates[n] = std::move(order);
  }

  GroupCatalog cat;
  cat.num_devices = K;
  cat.num_transmitters = N;
  std::vector<int> server(K, -1);
  std::vector<std::pair<int, int>> links;
  auto emit = [&] {
    if (cat.groups.size() >= hard_limit) throw CatalogTooLarge(hard_limit);
    LinkGroup g;
    g.server = server;
    g.links = links;
    cat.groups.push_back(std::move(g));
  };
  auto dfs = [&](auto&& self, int n) -> void {
    if (n == N) {
      emit();
      return;
    }
    self(self, n + 1);
    for (int k : candidates[n]) {
      if (server[k] >= 0) continue;
      server[k] = n;
      links.emplace_back(n, k);
      self(self, n + 1);
      links.pop_back();
      server[k] = -1;
    }
  };
  dfs(dfs, 0);
  std::sort(cat.groups.begin(), cat.groups.end(),
            [N](const LinkGroup& a, const LinkGroup& b) { return alpha_less(a, b, N); });
  return cat;
}

nlohmann::json to_json(const GroupCatalog& catalog) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : catalog.groups) {
    nlohmann::json links = nlohmann::json::array();
    for (auto [n, k] : g.links) links.push_back({n, k});
    groups.push_back(links);
  }
  return {{"num_devices", catalog.num_devices},
          {"num_transmitters", catalog.num_transmitters},
          {"groups", groups}};
}

GroupCatalog catalog_from_json(const nlohmann::json& j) {
  GroupCatalog cat;
  cat.num_devices = j.at("num_devices").get<int>();
  cat.num_transmitters = j.at("num_transmitters").get<int>();
  for (const auto& links : j.at("groups")) {
    std::vector<std::pair<int, int>> pairs;
    for (const auto& l : links) pairs.emplace_back(l.at(0).get<int>(), l.at(1).get<int>());
    cat.groups.push_back(make_group(cat.num_devices, cat.num_transmitters, pairs));
  }
  require(!cat.groups.empty() && cat.groups[0].empty(), "catalog json: group 0 must be idle");
  return cat;
}

SinrTerms sinr_terms(const Instance& inst, const LinkGroup& group, const channel::ChannelState& ch) {
  const int K = inst.num_devices();
  SinrTerms terms{Eigen::VectorXd::Zero(K), Eigen::VectorXd::Zero(K), Eigen::VectorXd::Zero(K)};
  // Received power of every active link, per band: sum_j h_{j,n_j}.
  double active_gain[2] = {0.0, 0.0};
  for (auto [n, k] : group.links) {
    active_gain[inst.transmitters[n].band == Band::kKa ? 0 : 1] += ch.grid(k, n);
  }
  for (auto [n, k] : group.links) {
    const auto band = inst.transmitters[n].band;
    const double p = inst.transmitters[n].power_w;
    const double own = ch.grid(k, n);
    terms.signal[k] = own * p;
    terms.interference[k] = (active_gain[band == Band::kKa ? 0 : 1] - own) * p;
    terms.noise[k] = inst.noise_psd * inst.bandwidth(band);
  }
  return terms;
}

Eigen::VectorXd sinr(const Instance& inst, const LinkGroup& group, const channel::ChannelState& ch) {
  const SinrTerms terms = sinr_terms(inst, group, ch);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(inst.num_devices());
  for (auto [n, k] : group.links) out[k] = terms.signal[k] / (terms.interference[k] + terms.noise[k]);
  return out;
}

Eigen::VectorXd rate(const Instance& inst, const LinkGroup& group, const channel::ChannelState& ch) {
  const Eigen::VectorXd gamma = sinr(inst, group, ch);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(inst.num_devices());
  for (auto [n, k] : group.links) {
    out[k] = inst.slot_len * inst.bandwidth(inst.transmitters[n].band) * std::log2(1.0 + gamma[k]);
  }
  return out;
}

namespace {

template <typename F>
Tensor3 build_tensor(const Instance& inst, const GroupCatalog& catalog,
                     const std::vector<channel::ChannelState>& trajectory, F per_group) {
  const int K = inst.num_devices();
  const int G = catalog.size();
  const int T = static_cast<int>(trajectory.size());
  require(T == inst.horizon, "rate tensor: channel trajectory length must equal the horizon");
  Tensor3 out(K, G, T);
  for (int t = 0; t < T; ++t) {
    for (int g = 0; g < G; ++g) {
      const Eigen::VectorXd v = per_group(inst, catalog[g], trajectory[t]);
      for (int k = 0; k < K; ++k) out(k, g, t) = v[k];
    }
  }
  return out;
}

}  // namespace

RateTensor build_rate_tensor(const Instance& inst, const GroupCatalog& catalog,
                             const std::vector<channel::ChannelState>& trajectory) {
  return build_tensor(inst, catalog, trajectory, rate);
}

SinrTensor build_sinr_tensor(const Instance& inst, const GroupCatalog& catalog,
                             const std::vector<channel::ChannelState>& trajectory) {
  return build_tensor(inst, catalog, trajectory, sinr);
}

namespace {

void put_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("rate tensor file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_rate_tensor(const RateTensor& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  put_u64(out, static_cast<std::uint64_t>(r.devices()));
  put_u64(out, static_cast<std::uint64_t>(r.groups()));
  put_u64(out, static_cast<std::uint64_t>(r.slots()));
  for (double v : r.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

RateTensor read_rate_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  const auto K = get_u64(in);
  const auto G = get_u64(in);
  const auto T = get_u64(in);
  require(K < (1u << 20) && G < (1u << 28) && T < (1u << 20), "rate tensor header out of range");
  RateTensor r(static_cast<int>(K), static_cast<int>(G), static_cast<int>(T));
  for (double& v : r.data()) v = std::bit_cast<double>(get_u64(in));
  return r;
}

std::vector<double> delivered(const RateTensor& r, const std::vector<int>& x) {
  std::vector<double> b(r.devices(), 0.0);
  for (int k = 0; k < r.devices(); ++k) {
    for (int t = 0; t < static_cast<int>(x.size()); ++t) b[k] += r(k, x[t], t);
  }
  return b;
}

std::vector<int> served_flags(const Instance& inst, const std::vector<int>& x, const RateTensor& r) {
  const auto b = delivered(r, x);
  std::vector<int> y(inst.num_devices());
  for (int k = 0; k < inst.num_devices(); ++k) {
    y[k] = b[k] - inst.devices[k].threshold_bits > 0.0 ? 1 : 0;
  }
  return y;
}

double objective(const Instance& inst, const std::vector<int>& x, const RateTensor& r) {
  const auto b = delivered(r, x);
  const int K = inst.num_devices();
  int served = 0;
  double data = 0.0;
  for (int k = 0; k < K; ++k) {
    if (b[k] - inst.devices[k].threshold_bits > 0.0) ++served;
    const double gap = b[k] - inst.devices[k].demand_bits;
    data += inst.devices[k].weight * gap * gap;
  }
  const double count_gap = static_cast<double>(served - K);
  return inst.eta0 * count_gap * count_gap + data;
}

double idle_objective(const Instance& inst) {
  const double K = inst.num_devices();
  double v = inst.eta0 * K * K;
  for (const auto& d : inst.devices) v += d.weight * d.demand_bits * d.demand_bits;
  return v;
}

Schedule make_schedule(const Instance& inst, std::vector<int> x, const RateTensor& r) {
  Schedule s;
  s.y = served_flags(inst, x, r);
  s.x = std::move(x);
  return s;
}

std::vector<Violation> check_feasible(const Instance& inst, const GroupCatalog& catalog,
                                      const std::vector<int>& x, const std::vector<int>& y,
                                      const RateTensor& r, const SinrTensor& sinr) {
  std::vector<Violation> out;
  const int K = inst.num_devices();
  const int G = catalog.size();
  if (static_cast<int>(x.size()) != inst.horizon) {
    out.push_back({"one_group_per_slot", -1, -1, -1,
                   "schedule has " + std::to_string(x.size()) + " slots, expected " +
                       std::to_string(inst.horizon)});
  }
  bool x_ok = true;
  for (int t = 0; t < static_cast<int>(x.size()); ++t) {
    if (x[t] < 0 || x[t] >= G) {
      out.push_back({"one_group_per_slot", -1, x[t], t, "group index out of range"});
      x_ok = false;
      continue;
    }
    for (auto [n, k] : catalog[x[t]].links) {
      if (sinr(k, x[t], t) < inst.devices[k].sinr_floor) {
        out.push_back({"sinr_floor", k, x[t], t,
                       "SINR " + std::to_string(sinr(k, x[t], t)) + " below floor " +
                           std::to_string(inst.devices[k].sinr_floor)});
      }
    }
  }
  if (static_cast<int>(y.size()) != K) {
    out.push_back({"binary", -1, -1, -1, "served vector has wrong length"});
    return out;
  }
  for (int k = 0; k < K; ++k) {
    if (y[k] != 0 && y[k] != 1) out.push_back({"binary", k, -1, -1, "served flag not in {0,1}"});
  }
  if (!x_ok || static_cast<int>(x.size()) != inst.horizon) return out;
  const auto b = delivered(r, x);
  for (int k = 0; k < K; ++k) {
    if (y[k] == 1 && inst.devices[k].threshold_bits > b[k]) {
      out.push_back({"service_threshold", k, -1, -1,
                     "marked served with " + std::to_string(b[k]) + " bits < threshold " +
                         std::to_string(inst.devices[k].threshold_bits)});
    }
  }
  return out;
}

bool Problem::allowed(int g, int t) const {
  for (auto [n, k] : catalog[g].links) {
    if (sinr(k, g, t) < inst.devices[k].sinr_floor) return false;
  }
  return true;
}

double Problem::big_m() const {
  if (inst.big_m > 0) return inst.big_m;
  double m = 0.0;
  for (int k = 0; k < devices(); ++k) {
    for (int g = 0; g < groups(); ++g) {
      for (int t = 0; t < slots(); ++t) m = std::max(m, inst.devices[k].sinr_floor + sinr(k, g, t));
    }
  }
  return 1.1 * std::max(m, 1e-12);
}

Problem make_problem(Instance inst, GroupCatalog catalog,
                     const std::vector<channel::ChannelState>& trajectory) {
  Problem p;
  p.rates = build_rate_tensor(inst, catalog, trajectory);
  p.sinr = build_sinr_tensor(inst, catalog, trajectory);
  p.inst = std::move(inst);
  p.catalog = std::move(catalog);
  return p;
}

}  // namespace leosched
