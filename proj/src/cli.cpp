#include "leosched/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "leosched/solvers.hpp"

namespace leosched::cli {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<KeySpec>& schema() {
  using V = ValueKind;
  static const std::vector<KeySpec> keys{
      // run
      {"seed", V::kInt, "1", "root seed"},
      {"out", V::kString, "out", "output directory", false},
      {"input", V::kString, "", "input directory for solve/report (default: out)", false},
      {"critic", V::kString, "", "critic checkpoint prefix written by train", false},
      {"workers", V::kInt, "1", "concurrent bench runs", false},
      {"timing", V::kBool, "false", "include wall time in solve output (not reproducible)", false},
      // instance
      {"devices", V::kInt, "8", "ground devices K"},
      {"leo", V::kInt, "1", "LEO satellites"},
      {"bs", V::kInt, "1", "base stations"},
      {"tst", V::kInt, "2", "terrestrial-satellite terminals"},
      {"horizon", V::kInt, "10", "slots per episode T"},
      {"slot_len", V::kReal, "0.1", "slot length in seconds"},
      {"power_leo", V::kReal, "100", "LEO transmit power in W"},
      {"power_bs", V::kReal, "40", "BS transmit power in W"},
      {"power_tst", V::kReal, "2", "TST transmit power in W"},
      {"bw_leo", V::kReal, "4e8", "Ka-band bandwidth in Hz"},
      {"bw_ter", V::kReal, "2e7", "C-band bandwidth in Hz"},
      {"noise_dbm_hz", V::kReal, "-174", "noise density in dBm/Hz"},
      {"demand_min", V::kReal, "3e7", "smallest demand in bits"},
      {"demand_max", V::kReal, "1.5e8", "largest demand in bits"},
      {"threshold_ratio", V::kReal, "0.5", "service threshold as a fraction of demand"},
      {"sinr_floor_db", V::kReal, "-5", "per-device SINR floor in dB"},
      {"eta0", V::kReal, "1", "served-count weight before the 1/K^2 scaling"},
      {"eta_data", V::kReal, "1", "data-gap weight before the 1/D^2 scaling"},
      {"gt_leo", V::kReal, "63095.7", "LEO antenna gain, linear (48 dBi)"},
      {"chi", V::kReal, "0.1", "atmospheric attenuation in dB/km"},
      {"atmosphere_as_loss", V::kBool, "true", "apply the atmospheric factor as a loss"},
      {"rician_k", V::kReal, "10", "Rician K-factor of the LEO fading"},
      {"correlation", V::kReal, "0.9", "per-slot fading correlation"},
      {"cap", V::kInt, "3", "strongest devices each transmitter considers"},
      {"levels", V::kInt, "8", "FSMC levels per band"},
      {"fsmc_samples", V::kInt, "20000", "fading samples used to fit each FSMC"},
      {"catalog_limit", V::kInt, "200000", "hard limit on the group catalog size"},
      // solve
      {"solver", V::kString, "bnb", "bnb, admm, greedy, relax or oracle"},
      {"node_limit", V::kInt, "100000", "branch-and-bound node limit"},
      {"admm_rho", V::kReal, "1", "ADMM penalty"},
      {"admm_iterations", V::kInt, "200", "ADMM iterations"},
      {"admm_prox", V::kReal, "1", "ADMM proximal weight as a multiple of each block's curvature bound"},
      {"oracle_limit", V::kInt, "1000000", "largest G^T the exhaustive oracle accepts"},
      // train
      {"lr", V::kReal, "0.001", "learning rate"},
      {"momentum", V::kReal, "0.9", "heavy-ball momentum"},
      {"batch", V::kInt, "32", "replay batch size"},
      {"gamma", V::kReal, "0.9", "discount factor"},
      {"memory", V::kInt, "10000", "replay memory capacity"},
      {"wolpertinger_m", V::kInt, "10", "candidate actions per step"},
      {"tasks_per_episode", V::kInt, "4", "tasks sampled per meta-training episode"},
      {"t_bar", V::kInt, "5", "transitions in the critic's segment window"},
      {"episodes", V::kInt, "200", "meta-training episodes"},
      {"var_floor", V::kReal, "0.001", "lower bound on the policy variance"},
      {"td_form", V::kString, "bootstrap", "bootstrap or literal"},
      {"pool_per_family", V::kInt, "4", "meta-training tasks per family"},
      {"net_conv", V::kInt, "32", "critic conv width"},
      {"net_lstm", V::kInt, "32", "critic LSTM cells"},
      {"net_head", V::kInt, "64", "critic head width"},
      {"actor_conv", V::kInt, "16", "actor conv width"},
      {"actor_hidden", V::kInt, "32", "actor hidden width"},
      // bench
      {"scenario", V::kString, "user-churn", "user-churn, demand-burst or channel-shock"},
      {"agents", V::kString, "emcl,ac", "comma-separated subset of emcl,ac,admm,greedy,bnb"},
      {"seeds", V::kInt, "10", "runs per agent, seeded seed .. seed + seeds - 1"},
      {"slots", V::kInt, "800", "scenario length in slots"},
      {"update_interval", V::kInt, "200", "slots between environment changes"},
      {"magnitude", V::kReal, "1", "scales every shift; 0 keeps the environment fixed"},
      {"arrival_mean", V::kReal, "2", "mean device arrivals and departures per change"},
      {"abnormal_batch", V::kInt, "10", "devices in an abnormal batch"},
      {"abnormal_period", V::kInt, "2", "every n-th change is an abnormal batch"},
      {"min_devices", V::kInt, "2", "fewest devices during churn"},
      {"max_devices", V::kInt, "12", "most devices during churn"},
      {"burst_factor", V::kReal, "3", "demand multiplier in a burst"},
      {"chi_spike", V::kReal, "5", "attenuation multiplier in a shock"},
      {"degrade_factor", V::kReal, "2", "loss above this times baseline marks degradation"},
      {"recover_factor", V::kReal, "1.2", "trailing mean below this times baseline marks recovery"},
      {"recovery_window", V::kInt, "20", "slots in the baseline and trailing windows"},
  };
  return keys;
}

namespace {

const KeySpec& spec_of(const std::string& key) {
  for (const auto& s : schema()) {
    if (s.key == key) return s;
  }
  throw ValidationError("config: unknown key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string canonical_value(const KeySpec& spec, const std::string& raw) {
  const std::string v = trim(raw);
  const std::string bad = "config: bad value '" + v + "' for " + spec.key;
  switch (spec.kind) {
    case ValueKind::kInt: {
      char* end = nullptr;
      errno = 0;
      const long long x = std::strtoll(v.c_str(), &end, 10);
      require(!v.empty() && *end == '\0' && errno == 0, bad + " (expected an integer)");
      return std::to_string(x);
    }
    case ValueKind::kReal: {
      char* end = nullptr;
      const double x = std::strtod(v.c_str(), &end);
      require(!v.empty() && *end == '\0' && std::isfinite(x), bad + " (expected a number)");
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", x);
      return buf;
    }
    case ValueKind::kBool:
      if (v == "true" || v == "1" || v == "yes") return "true";
      if (v == "false" || v == "0" || v == "no") return "false";
      throw ValidationError(bad + " (expected true or false)");
    case ValueKind::kString:
      return v;
  }
  return v;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& s : schema()) values_[s.key] = canonical_value(s, s.fallback);
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "config: cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path);
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, origin + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  values_[key] = canonical_value(spec_of(key), value);
}

const std::string& RunConfig::get(const std::string& key) const {
  spec_of(key);
  return values_.at(key);
}

int RunConfig::get_int(const std::string& key) const {
  const long long x = std::stoll(get(key));
  require(x >= INT32_MIN && x <= INT32_MAX, "config: " + key + " out of range");
  return static_cast<int>(x);
}

double RunConfig::get_real(const std::string& key) const { return std::strtod(get(key).c_str(), nullptr); }

bool RunConfig::get_bool(const std::string& key) const { return get(key) == "true"; }

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    if (spec_of(k).hashed) out += k + "=" + v + "\n";
  }
  return out;
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, hash_name(canonical()));
  return buf;
}

mdp::TaskParams task_params(const RunConfig& c) {
  mdp::TaskParams p = bench::default_task_params();
  auto& g = p.gen;
  g.num_devices = c.get_int("devices");
  g.num_leo = c.get_int("leo");
  g.num_bs = c.get_int("bs");
  g.num_tst = c.get_int("tst");
  g.horizon = c.get_int("horizon");
  g.slot_len = c.get_real("slot_len");
  g.power_leo = c.get_real("power_leo");
  g.power_bs = c.get_real("power_bs");
  g.power_tst = c.get_real("power_tst");
  g.bw_leo = c.get_real("bw_leo");
  g.bw_ter = c.get_real("bw_ter");
  g.noise_dbm_hz = c.get_real("noise_dbm_hz");
  g.demand_min = c.get_real("demand_min");
  g.demand_max = c.get_real("demand_max");
  g.threshold_ratio = c.get_real("threshold_ratio");
  g.sinr_floor_db = c.get_real("sinr_floor_db");
  g.eta0 = c.get_real("eta0");
  g.eta_data = c.get_real("eta_data");
  p.phys.gt_leo = c.get_real("gt_leo");
  p.phys.chi = c.get_real("chi");
  p.phys.atmosphere_as_loss = c.get_bool("atmosphere_as_loss");
  p.phys.rician_k = c.get_real("rician_k");
  p.leo_fading.k_factor = p.phys.rician_k;
  p.leo_fading.correlation = c.get_real("correlation");
  p.ter_fading.correlation = c.get_real("correlation");
  p.cap = c.get_int("cap");
  p.levels = c.get_int("levels");
  p.fsmc_samples = c.get_int("fsmc_samples");
  g.validate();
  p.phys.validate();
  require(p.cap >= 1, "config: cap must be >= 1");
  require(p.levels >= 2, "config: levels must be >= 2");
  require(p.fsmc_samples >= 10 * p.levels, "config: fsmc_samples must be at least 10 x levels");
  require(p.leo_fading.correlation >= 0 && p.leo_fading.correlation < 1, "config: correlation must lie in [0,1)");
  require(c.get_int("catalog_limit") >= 1, "config: catalog_limit must be >= 1");
  return p;
}

bench::Scenario scenario(const RunConfig& c) {
  bench::Scenario sc;
  sc.base = task_params(c);
  sc.kind = bench::parse_scenario(c.get("scenario"));
  sc.horizon = c.get_int("slots");
  sc.update_interval = c.get_int("update_interval");
  sc.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  sc.magnitude = c.get_real("magnitude");
  sc.arrival_mean = c.get_real("arrival_mean");
  sc.abnormal_batch = c.get_int("abnormal_batch");
  sc.abnormal_period = c.get_int("abnormal_period");
  sc.min_devices = c.get_int("min_devices");
  sc.max_devices = c.get_int("max_devices");
  sc.burst_factor = c.get_real("burst_factor");
  sc.chi_spike = c.get_real("chi_spike");
  sc.validate();
  return sc;
}

agents::TrainConfig train_config(const RunConfig& c) {
  agents::TrainConfig t;
  t.lr = c.get_real("lr");
  t.momentum = c.get_real("momentum");
  t.batch = c.get_int("batch");
  t.gamma = c.get_real("gamma");
  t.memory = c.get_int("memory");
  t.wolpertinger_m = c.get_int("wolpertinger_m");
  t.tasks_per_episode = c.get_int("tasks_per_episode");
  t.t_bar = c.get_int("t_bar");
  t.episodes = c.get_int("episodes");
  t.var_floor = c.get_real("var_floor");
  t.td_form = agents::parse_td_form(c.get("td_form"));
  t.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  t.validate();
  return t;
}

agents::NetShape net_shape(const RunConfig& c) {
  agents::NetShape s{c.get_int("net_conv"), c.get_int("net_lstm"), c.get_int("net_head"), c.get_int("actor_conv"),
                     c.get_int("actor_hidden")};
  require(s.conv >= 1 && s.lstm >= 1 && s.head >= 1 && s.actor_conv >= 1 && s.actor_hidden >= 1,
          "config: network widths must be positive");
  return s;
}

solvers::AdmmOptions admm_options(const RunConfig& c) {
  solvers::AdmmOptions o;
  o.rho = c.get_real("admm_rho");
  o.iterations = c.get_int("admm_iterations");
  o.prox = c.get_real("admm_prox");
  require(o.rho > 0 && o.iterations >= 1 && o.prox >= 0, "config: need admm_rho > 0, admm_iterations >= 1, admm_prox >= 0");
  return o;
}

solvers::BnbOptions bnb_options(const RunConfig& c) {
  solvers::BnbOptions o;
  o.node_limit = c.get_int("node_limit");
  require(o.node_limit >= 1, "config: node_limit must be >= 1");
  return o;
}

agents::MetaCritic load_critic(const std::string& prefix) {
  std::ifstream js(prefix + ".json");
  require(static_cast<bool>(js), "critic checkpoint " + prefix + ".json not found; run `train` first");
  const auto m = json::parse(js);
  require(m.contains("extra") && m["extra"].contains("num_transmitters"),
          "critic checkpoint " + prefix + " was not written by `train`");
  const auto& x = m["extra"];
  const auto& sh = x.at("shape");
  const agents::NetShape shape{sh.at("conv").get<int>(), sh.at("lstm").get<int>(), sh.at("head").get<int>(),
                               sh.at("actor_conv").get<int>(), sh.at("actor_hidden").get<int>()};
  agents::MetaCritic mc(x.at("num_transmitters").get<int>(), x.at("t_bar").get<int>(), x.at("lstm").get<bool>(), 0,
                        shape);
  const nn::Network net = nn::load_checkpoint(prefix);
  require(nn::manifest(net).at("layers") == nn::manifest(mc.net()).at("layers"),
          "critic checkpoint " + prefix + ": layers do not match the recorded shape");
  mc.net().set_params(net.params());
  return mc;
}

namespace {

struct Context {
  RunConfig cfg;
  std::ostream& out;
  std::ostream& err;
  fs::path out_dir;
  fs::path in_dir;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  require(static_cast<bool>(f), "cannot read " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

json header(const Context& c, const std::string& command) {
  return {{"config_hash", c.cfg.hash()}, {"command", command}, {"seed", c.cfg.get_int("seed")}};
}

std::uint64_t root_seed(const Context& c) { return static_cast<std::uint64_t>(c.cfg.get_int("seed")); }

int cmd_gen(Context& c) {
  const auto params = task_params(c.cfg);
  const auto seed = root_seed(c);
  mdp::Task task;
  Rng rng = make_rng(seed, "deployment");
  task.inst = generate_instance(params.gen, params.phys, rng);
  task.catalog = enumerate_groups(task.inst, params.cap, static_cast<std::size_t>(c.cfg.get_int("catalog_limit")));
  task.channel = mdp::make_channel_model(task.inst, params, seed);

  json inst = header(c, "gen");
  inst["instance"] = to_json(task.inst);
  json cat = header(c, "gen");
  cat["catalog"] = to_json(task.catalog);
  json fsmc = header(c, "gen");
  fsmc["leo"] = channel::to_json(task.channel.leo);
  fsmc["ter"] = channel::to_json(task.channel.ter);
  write_json(c.out_dir / "instance.json", inst);
  write_json(c.out_dir / "catalog.json", cat);
  write_json(c.out_dir / "fsmc.json", fsmc);
  c.out << "K=" << task.inst.num_devices() << " N=" << task.inst.num_transmitters() << " G=" << task.catalog.size()
        << " T=" << task.inst.horizon << "\n";
  c.out << "config_hash=" << c.cfg.hash() << "\n";
  return kExitOk;
}

int cmd_solve(Context& c) {
  const std::string solver = c.cfg.get("solver");
  require(solver == "bnb" || solver == "admm" || solver == "greedy" || solver == "relax" || solver == "oracle",
          "solve: unknown solver '" + solver + "' (bnb, admm, greedy, relax, oracle)");
  const auto admm = admm_options(c.cfg);
  const auto bnb = bnb_options(c.cfg);
  const auto oracle_limit = c.cfg.get_int("oracle_limit");
  require(oracle_limit >= 1, "config: oracle_limit must be >= 1");

  const json ij = read_json(c.in_dir / "instance.json");
  const json cj = read_json(c.in_dir / "catalog.json");
  const json fj = read_json(c.in_dir / "fsmc.json");
  Instance inst;
  GroupCatalog catalog;
  channel::ChannelModel model;
  try {
    inst = instance_from_json(ij.at("instance"));
    catalog = catalog_from_json(cj.at("catalog"));
    model.leo = channel::fsmc_from_json(fj.at("leo"));
    model.ter = channel::fsmc_from_json(fj.at("ter"));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("solve: malformed input: ") + e.what());
  }
  inst.validate();
  require(catalog.num_devices == inst.num_devices() && catalog.num_transmitters == inst.num_transmitters(),
          "solve: catalog does not match the instance");
  model.mean_gain = inst.mean_gain;
  for (const auto& tx : inst.transmitters) model.tx_band.push_back(tx.band);

  Rng rng = make_rng(root_seed(c), "solve");
  const auto traj = channel::sample_trajectory(model, inst.horizon, rng);
  const Problem prob = make_problem(inst, catalog, traj);

  json j = header(c, "solve");
  j["input_hash"] = ij.value("config_hash", "");
  const bool timing = c.cfg.get_bool("timing");
  if (solver == "relax") {
    const auto r = solvers::solve_relaxation(prob);
    j["result"] = {{"solver", "relax"},
                   {"objective", r.value},
                   {"upper", r.upper},
                   {"converged", r.converged},
                   {"infeasible", r.infeasible},
                   {"iterations", r.iterations}};
    c.out << "solver=relax bound=" << std::setprecision(10) << r.value << " upper=" << r.upper << "\n";
  } else {
    solvers::SolveResult r;
    if (solver == "bnb") r = solvers::branch_and_bound(prob, bnb);
    if (solver == "admm") r = solvers::admm_heu(prob, admm);
    if (solver == "greedy") r = solvers::greedy(prob);
    if (solver == "oracle") r = solvers::exhaustive_oracle(prob, static_cast<std::uint64_t>(oracle_limit));
    j["result"] = solvers::to_json(r, timing);
    c.out << "solver=" << solver << " objective=" << std::setprecision(10) << r.value << " bound=" << r.bound
          << " gap=" << r.gap << "\n";
    if (solver == "bnb" && !r.optimal) {
      c.err << "warning: branch and bound stopped at the node limit (" << bnb.node_limit
            << "); the result is the best incumbent\n";
    }
  }
  write_json(c.out_dir / ("solve_" + solver + ".json"), j);
  c.out << "config_hash=" << c.cfg.hash() << "\n";
  return kExitOk;
}

int cmd_train(Context& c) {
  const auto sc = scenario(c.cfg);
  const auto tc = train_config(c.cfg);
  const auto shape = net_shape(c.cfg);
  const int per_family = c.cfg.get_int("pool_per_family");
  require(per_family >= 1, "config: pool_per_family must be >= 1");
  require(tc.tasks_per_episode <= 2 * per_family, "config: tasks_per_episode exceeds the task pool (2 x pool_per_family)");

  const auto pool = bench::make_task_pool(sc, per_family, root_seed(c));
  const auto res = agents::meta_train(pool, tc, shape);
  const json extra{{"config_hash", c.cfg.hash()},
                   {"num_transmitters", res.critic.input_channels() > 0 ? pool[0]->inst.num_transmitters() : 0},
                   {"t_bar", res.critic.t_bar()},
                   {"lstm", res.critic.uses_lstm()},
                   {"shape",
                    {{"conv", shape.conv},
                     {"lstm", shape.lstm},
                     {"head", shape.head},
                     {"actor_conv", shape.actor_conv},
                     {"actor_hidden", shape.actor_hidden}}}};
  const fs::path prefix = c.out_dir / "critic";
  nn::save_checkpoint(res.critic.net(), prefix.string(), extra);
  std::ofstream csv(c.out_dir / "train_trace.csv");
  if (!csv) throw std::runtime_error("cannot write train_trace.csv");
  csv << "# config_hash=" << c.cfg.hash() << "\n";
  agents::write_trace_csv(res.trace, csv);
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016" PRIx64, nn::param_hash(res.critic.net()));
  c.out << "critic=" << prefix.string() << " params=" << res.critic.net().num_params() << " param_hash=" << hash
        << (res.diverged ? " diverged=true" : "") << "\n";
  c.out << "config_hash=" << c.cfg.hash() << "\n";
  if (res.diverged) c.err << "warning: training hit a non-finite update and rolled back\n";
  return kExitOk;
}

std::vector<bench::AgentKind> parse_agents(const std::string& list) {
  std::vector<bench::AgentKind> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto a = bench::parse_agent(item);
    require(std::find(out.begin(), out.end(), a) == out.end(), "config: agent '" + item + "' listed twice");
    out.push_back(a);
  }
  require(!out.empty(), "config: agents must name at least one agent");
  return out;
}

std::string trace_name(bench::ScenarioKind kind, bench::AgentKind agent, std::uint64_t seed) {
  return std::string("trace_") + bench::scenario_name(kind) + "_" + bench::agent_name(agent) + "_s" +
         std::to_string(seed) + ".csv";
}

bench::SummaryOptions summary_options(const RunConfig& cfg) {
  bench::SummaryOptions o;
  o.degrade_factor = cfg.get_real("degrade_factor");
  o.recover_factor = cfg.get_real("recover_factor");
  o.window = cfg.get_int("recovery_window");
  require(o.degrade_factor > 1 && o.recover_factor >= 1 && o.window >= 1,
          "config: need degrade_factor > 1, recover_factor >= 1 and recovery_window >= 1");
  return o;
}

int cmd_bench(Context& c) {
  const auto sc = scenario(c.cfg);
  const auto agent_list = parse_agents(c.cfg.get("agents"));
  const int seeds = c.cfg.get_int("seeds");
  const int workers = c.cfg.get_int("workers");
  require(seeds >= 1, "config: seeds must be >= 1");
  require(workers >= 1, "config: workers must be >= 1");
  const auto sopts = summary_options(c.cfg);
  bench::RunOptions opts;
  opts.train = train_config(c.cfg);
  opts.shape = net_shape(c.cfg);
  opts.admm = admm_options(c.cfg);
  opts.bnb = bnb_options(c.cfg);
  require(sc.update_interval >= sopts.window, "config: update_interval must be at least recovery_window");

  agents::MetaCritic critic;
  const bool need_critic = std::find(agent_list.begin(), agent_list.end(), bench::AgentKind::kEmcl) != agent_list.end();
  if (need_critic) {
    const std::string prefix = c.cfg.get("critic");
    require(!prefix.empty(), "bench: agent emcl needs a meta-trained critic checkpoint; run `train` and pass "
                             "--critic <dir>/critic");
    critic = load_critic(prefix);
    require(critic.input_channels() == agents::critic_channels(sc.base.gen.num_leo + sc.base.gen.num_bs + sc.base.gen.num_tst),
            "bench: critic checkpoint was trained for a different transmitter count");
  }

  struct Job {
    bench::AgentKind agent;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto a : agent_list) {
    for (int i = 0; i < seeds; ++i) jobs.push_back({a, root_seed(c) + static_cast<std::uint64_t>(i)});
  }
  std::vector<bench::MetricsTrace> traces(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  const std::string hash = c.cfg.hash();
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        bench::Scenario s = sc;
        s.seed = jobs[i].seed;
        traces[i] = bench::run_scenario(s, jobs[i].agent, opts, need_critic ? &critic : nullptr, jobs[i].seed);
        std::ofstream f(c.out_dir / trace_name(sc.kind, jobs[i].agent, jobs[i].seed));
        if (!f) throw std::runtime_error("cannot write trace file");
        f << "# config_hash=" << hash << " scenario=" << bench::scenario_name(sc.kind)
          << " agent=" << bench::agent_name(jobs[i].agent) << " seed=" << jobs[i].seed
          << " update_interval=" << sc.update_interval << " truncated=" << (traces[i].truncated ? 1 : 0) << "\n";
        bench::write_trace_csv(traces[i], f);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = std::min<int>(workers, static_cast<int>(jobs.size()));
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  json summary = header(c, "bench");
  summary["scenario"] = bench::scenario_name(sc.kind);
  summary["seeds"] = seeds;
  const json s = bench::summarize(traces, sopts);
  for (const auto& [k, v] : s.items()) summary[k] = v;
  const std::string summary_name = std::string("summary_") + bench::scenario_name(sc.kind) + ".json";
  write_json(c.out_dir / summary_name, summary);
  c.out << "wrote " << traces.size() << " traces and " << summary_name << "\n";
  for (const auto& [agent, v] : s["aggregate"].items()) {
    c.out << agent << ": median_recovery_slots=" << v["median_recovery_slots"].get<double>()
          << " mean_post_recovery_objective=" << std::setprecision(6)
          << v["mean_post_recovery_objective"].get<double>() << "\n";
  }
  c.out << "config_hash=" << hash << "\n";
  return kExitOk;
}

bench::MetricsTrace read_trace(const fs::path& path) {
  std::ifstream f(path);
  require(static_cast<bool>(f), "cannot read " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(f, line)) && line.rfind("# ", 0) == 0,
          path.string() + ": missing header line");
  bench::MetricsTrace tr;
  std::istringstream hs(line.substr(2));
  std::string field;
  while (hs >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    const std::string k = field.substr(0, eq), v = field.substr(eq + 1);
    if (k == "scenario") tr.kind = bench::parse_scenario(v);
    if (k == "agent") tr.agent = v;
    if (k == "seed") tr.seed = std::stoull(v);
    if (k == "update_interval") tr.update_interval = std::stoi(v);
    if (k == "truncated") tr.truncated = v == "1";
  }
  require(!tr.agent.empty() && tr.update_interval > 0, path.string() + ": incomplete header line");
  require(static_cast<bool>(std::getline(f, line)) && line == "slot,episode,window,devices,loss,objective,td_loss,marker",
          path.string() + ": unexpected columns");
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    require(cols.size() == 8, path.string() + ": malformed row");
    bench::SlotRecord r;
    r.slot = std::stoi(cols[0]);
    r.episode = std::stoi(cols[1]);
    r.devices = std::stoi(cols[3]);
    r.loss = std::stod(cols[4]);
    r.objective = std::stod(cols[5]);
    r.td_loss = std::stod(cols[6]);
    if (cols[7] == "1") tr.markers.push_back(r.slot);
    tr.slots.push_back(r);
  }
  return tr;
}

int cmd_report(Context& c) {
  const auto sopts = summary_options(c.cfg);
  require(fs::is_directory(c.in_dir), "report: no directory " + c.in_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(c.in_dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("trace_", 0) == 0 && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  require(!files.empty(), "report: no trace_*.csv files in " + c.in_dir.string());
  std::map<std::string, std::vector<bench::MetricsTrace>> by_scenario;
  for (const auto& f : files) {
    auto tr = read_trace(f);
    by_scenario[bench::scenario_name(tr.kind)].push_back(std::move(tr));
  }
  std::ostringstream table;
  table << std::setprecision(10);
  table << "scenario,agent,runs,events,median_recovery_slots,mean_post_recovery_objective,mean_objective\n";
  for (auto& [name, traces] : by_scenario) {
    std::stable_sort(traces.begin(), traces.end(), [](const auto& a, const auto& b) {
      return a.agent != b.agent ? a.agent < b.agent : a.seed < b.seed;
    });
    const json s = bench::summarize(traces, sopts);
    for (const auto& [agent, v] : s["aggregate"].items()) {
      int runs = 0, events = 0;
      double obj = 0.0;
      std::size_t slots = 0;
      for (const auto& tr : traces) {
        if (tr.agent != agent) continue;
        ++runs;
        events += static_cast<int>(tr.markers.size());
        for (const auto& r : tr.slots) obj += r.objective;
        slots += tr.slots.size();
      }
      table << name << ',' << agent << ',' << runs << ',' << events << ','
            << v["median_recovery_slots"].get<double>() << ',' << v["mean_post_recovery_objective"].get<double>()
            << ',' << (slots ? obj / static_cast<double>(slots) : 0.0) << '\n';
    }
  }
  std::ofstream f(c.out_dir / "report.csv");
  if (!f) throw std::runtime_error("cannot write report.csv");
  f << "# config_hash=" << c.cfg.hash() << "\n" << table.str();
  c.out << table.str() << "config_hash=" << c.cfg.hash() << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scheduling experiments for joint LEO and terrestrial downlinks"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::map<std::string, std::string> flags;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen", "generate an instance, its group catalog and the FSMC chains"},
      {"solve", "run an offline solver on generated files"},
      {"train", "meta-train the critic over a generated task pool"},
      {"bench", "run a dynamic scenario for each agent and seed"},
      {"report", "aggregate bench traces into a summary table"}};
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, desc] : commands) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "key = value configuration file");
    for (const auto& s : schema()) sub->add_option("--" + s.key, flags[s.key], s.help + " [" + s.fallback + "]");
    subs[name] = sub;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }
  try {
    Context c{RunConfig(), out, err, {}, {}};
    if (!config_path.empty()) c.cfg.merge_file(config_path);
    for (const auto& s : schema()) {
      if (subs[command]->count("--" + s.key) > 0) c.cfg.set(s.key, flags[s.key]);
    }
    c.out_dir = c.cfg.get("out");
    c.in_dir = c.cfg.get("input").empty() ? c.out_dir : fs::path(c.cfg.get("input"));
    fs::create_directories(c.out_dir);
    if (command == "gen") return cmd_gen(c);
    if (command == "solve") return cmd_solve(c);
    if (command == "train") return cmd_train(c);
    if (command == "bench") return cmd_bench(c);
    return cmd_report(c);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const CatalogTooLarge& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"leosched"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace leosched::cli
