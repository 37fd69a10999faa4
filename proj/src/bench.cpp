#include "leosched/bench.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>

namespace leosched::bench {

ScenarioKind parse_scenario(const std::string& name) {
  if (name == "user-churn") return ScenarioKind::kUserChurn;
  if (name == "demand-burst") return ScenarioKind::kDemandBurst;
  if (name == "channel-shock") return ScenarioKind::kChannelShock;
  throw ValidationError("unknown scenario '" + name + "' (user-churn | demand-burst | channel-shock)");
}

const char* scenario_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kUserChurn: return "user-churn";
    case ScenarioKind::kDemandBurst: return "demand-burst";
    case ScenarioKind::kChannelShock: return "channel-shock";
  }
  return "?";
}

AgentKind parse_agent(const std::string& name) {
  if (name == "emcl") return AgentKind::kEmcl;
  if (name == "ac") return AgentKind::kAc;
  if (name == "admm") return AgentKind::kAdmm;
  if (name == "greedy") return AgentKind::kGreedy;
  if (name == "bnb") return AgentKind::kBnb;
  throw ValidationError("unknown agent '" + name + "' (emcl | ac | admm | greedy | bnb)");
}

const char* agent_name(AgentKind kind) {
  switch (kind) {
    case AgentKind::kEmcl: return "emcl";
    case AgentKind::kAc: return "ac";
    case AgentKind::kAdmm: return "admm";
    case AgentKind::kGreedy: return "greedy";
    case AgentKind::kBnb: return "bnb";
  }
  return "?";
}

mdp::TaskParams default_task_params() {
  mdp::TaskParams p;
  p.gen.num_devices = 8;
  p.cap = 3;
  p.phys.atmosphere_as_loss = true;
  return p;
}

void Scenario::validate() const {
  base.gen.validate();
  base.phys.validate();
  require(update_interval >= base.gen.horizon, "scenario: update_interval must be at least T");
  require(update_interval % base.gen.horizon == 0, "scenario: update_interval must be a multiple of T");
  require(horizon >= update_interval && horizon % update_interval == 0,
          "scenario: horizon must be a positive multiple of update_interval");
  require(magnitude >= 0, "scenario: magnitude must be non-negative");
  require(arrival_mean >= 0, "scenario: arrival_mean must be non-negative");
  require(abnormal_batch >= 0 && abnormal_period >= 1, "scenario: bad abnormal batch settings");
  require(min_devices >= 1 && max_devices >= min_devices, "scenario: need 1 <= min_devices <= max_devices");
  require(base.gen.num_devices >= min_devices && base.gen.num_devices <= max_devices,
          "scenario: initial device count outside [min_devices, max_devices]");
  require(burst_factor > 0 && chi_spike >= 0, "scenario: shift factors must be positive");
}

int poisson(double mean, Rng& rng) {
  require(mean >= 0, "poisson: mean must be non-negative");
  const double limit = std::exp(-mean);
  int k = 0;
  double p = uniform01(rng);
  while (p > limit) {
    ++k;
    p *= uniform01(rng);
  }
  return k;
}

std::vector<Event> generate_events(const Scenario& sc, Rng& rng) {
  sc.validate();
  std::vector<Event> out;
  const double m = sc.magnitude;
  int index = 0;
  for (int slot = sc.update_interval; slot < sc.horizon; slot += sc.update_interval, ++index) {
    Event e;
    e.slot = slot;
    e.index = index;
    switch (sc.kind) {
      case ScenarioKind::kUserChurn: {
        e.abnormal = (index + 1) % sc.abnormal_period == 0;
        if (e.abnormal) {
          // alternate large arrival and large departure batches
          const int batch = static_cast<int>(std::lround(m * sc.abnormal_batch));
          if (((index + 1) / sc.abnormal_period) % 2 == 1) {
            e.arrivals = batch;
          } else {
            e.departures = batch;
          }
        } else {
          e.arrivals = poisson(m * sc.arrival_mean, rng);
          e.departures = poisson(m * sc.arrival_mean, rng);
        }
        e.changed = e.arrivals + e.departures > 0;
        break;
      }
      case ScenarioKind::kDemandBurst:
        e.demand_scale = index % 2 == 0 ? 1.0 + m * (sc.burst_factor - 1.0) : 1.0;
        e.changed = m > 0;
        break;
      case ScenarioKind::kChannelShock:
        e.chi_scale = index % 2 == 0 ? 1.0 + m * (sc.chi_spike - 1.0) : 1.0;
        e.changed = m > 0;
        break;
    }
    out.push_back(e);
  }
  return out;
}

ScenarioEnvironment::ScenarioEnvironment(const Scenario& sc, std::vector<Event> events)
    : sc_(sc), events_(std::move(events)), rng_(make_rng(sc.seed, "churn")) {
  sc_.validate();
  int pool = sc_.base.gen.num_devices;
  for (const auto& e : events_) pool += e.arrivals;
  mdp::TaskParams up = sc_.base;
  up.gen.num_devices = pool;
  Rng urng = make_rng(sc_.seed, "universe");
  universe_ = generate_instance(up.gen, up.phys, urng);
  active_.resize(sc_.base.gen.num_devices);
  std::iota(active_.begin(), active_.end(), 0);
  next_fresh_ = sc_.base.gen.num_devices;
  current_ = build(std::string(scenario_name(sc_.kind)) + "-w0");
}

std::shared_ptr<const mdp::Task> ScenarioEnvironment::build(const std::string& name) {
  const GenParams& gen = sc_.base.gen;
  channel::ChannelParams phys = sc_.base.phys;
  phys.chi *= chi_scale_;
  Instance inst = universe_;
  const int K = static_cast<int>(active_.size());
  inst.devices.clear();
  inst.deployment.leo_distance.clear();
  inst.deployment.leo_elevation.clear();
  inst.deployment.ter_distance = Eigen::MatrixXd::Zero(K, universe_.num_transmitters());
  for (int i = 0; i < K; ++i) {
    const int u = active_[i];
    inst.devices.push_back(universe_.devices[u]);
    inst.deployment.leo_distance.push_back(universe_.deployment.leo_distance[u]);
    inst.deployment.leo_elevation.push_back(universe_.deployment.leo_elevation[u]);
    inst.deployment.ter_distance.row(i) = universe_.deployment.ter_distance.row(u);
  }
  inst.eta0 = gen.eta0 / (static_cast<double>(K) * K);
  inst.mean_gain = mean_gains(inst, phys);
  inst.validate();
  auto task = std::make_shared<mdp::Task>();
  task->name = name;
  task->inst = std::move(inst);
  task->catalog = enumerate_groups(task->inst, sc_.base.cap);
  mdp::TaskParams tp = sc_.base;
  tp.phys = phys;
  task->channel = mdp::make_channel_model(task->inst, tp, derive_seed(sc_.seed, "fsmc", fsmc_counter_));
  return task;
}

std::shared_ptr<const mdp::Task> ScenarioEnvironment::apply(const Event& e) {
  if (!e.changed) return current_;
  const int lo = sc_.min_devices, hi = sc_.max_devices;
  for (int i = 0; i < e.departures && static_cast<int>(active_.size()) > lo; ++i) {
    active_.erase(active_.begin() + static_cast<std::ptrdiff_t>(rng_() % active_.size()));
  }
  for (int i = 0; i < e.arrivals && static_cast<int>(active_.size()) < hi; ++i) {
    active_.push_back(next_fresh_++);
  }
  if (sc_.kind == ScenarioKind::kDemandBurst) {
    demand_scale_ = e.demand_scale;
    GenParams g = sc_.base.gen;
    g.demand_min *= demand_scale_;
    g.demand_max *= demand_scale_;
    const double floor = std::pow(10.0, g.sinr_floor_db / 10.0);
    for (int u : active_) {
      auto& d = universe_.devices[u];
      d.demand_bits = g.demand_min + (g.demand_max - g.demand_min) * uniform01(rng_);
      d.threshold_bits = g.threshold_ratio * d.demand_bits;
      d.sinr_floor = floor;
      d.weight = g.eta_data / (d.demand_bits * d.demand_bits);
    }
  }
  chi_scale_ = e.chi_scale;
  ++fsmc_counter_;
  current_ = build(std::string(scenario_name(sc_.kind)) + "-w" + std::to_string(e.index + 1));
  return current_;
}

void write_trace_csv(const MetricsTrace& trace, std::ostream& out) {
  out << "slot,episode,window,devices,loss,objective,td_loss,marker\n";
  out << std::setprecision(10);
  std::size_t next = 0;
  for (const auto& r : trace.slots) {
    const bool marker = next < trace.markers.size() && trace.markers[next] == r.slot;
    if (marker) ++next;
    out << r.slot << ',' << r.episode << ',' << r.slot / trace.update_interval << ',' << r.devices << ','
        << r.loss << ',' << r.objective << ',' << r.td_loss << ',' << (marker ? 1 : 0) << '\n';
  }
}

namespace {

double plan_value(const mdp::Task& task, AgentKind agent, const RunOptions& opts, Rng& rng) {
  const auto traj = channel::sample_trajectory(task.channel, task.inst.horizon, rng);
  const Problem prob = mdp::make_problem(task, traj);
  switch (agent) {
    case AgentKind::kAdmm: return solvers::admm_heu(prob, opts.admm).value;
    case AgentKind::kGreedy: return solvers::greedy(prob).value;
    case AgentKind::kBnb: return solvers::branch_and_bound(prob, opts.bnb).value;
    default: break;
  }
  throw std::logic_error("plan_value: not an offline agent");
}

}  // namespace

MetricsTrace run_scenario(const Scenario& sc, AgentKind agent, const RunOptions& opts,
                          const agents::MetaCritic* critic, std::uint64_t seed) {
  sc.validate();
  if (agent == AgentKind::kEmcl && (critic == nullptr || critic->net().num_layers() == 0)) {
    throw ValidationError("run_scenario: emcl needs a meta-trained critic checkpoint");
  }
  Rng event_rng = make_rng(sc.seed, "events");
  ScenarioEnvironment env(sc, generate_events(sc, event_rng));
  MetricsTrace trace;
  trace.agent = agent_name(agent);
  trace.kind = sc.kind;
  trace.seed = seed;
  trace.update_interval = sc.update_interval;
  for (const auto& e : env.events()) trace.markers.push_back(e.slot);

  const int T = sc.base.gen.horizon;
  const int per_window = sc.episodes_per_window();
  const int windows = sc.horizon / sc.update_interval;
  std::unique_ptr<agents::Learner> learner;
  if (agent == AgentKind::kEmcl) {
    learner = std::make_unique<agents::Learner>(agents::Learner::Mode::kFrozenCritic, *critic, opts.train, seed,
                                                opts.shape);
  } else if (agent == AgentKind::kAc) {
    learner = std::make_unique<agents::Learner>(agents::Learner::Mode::kActorCritic, agents::MetaCritic(),
                                                opts.train, seed, opts.shape);
  }

  std::shared_ptr<const mdp::Task> task = env.initial();
  for (int w = 0; w < windows && !trace.truncated; ++w) {
    if (w > 0) task = env.apply(env.events()[w - 1]);
    const double idle = idle_objective(task->inst);
    const int K = task->inst.num_devices();
    if (learner) {
      learner->set_task(task);
      for (int e = 0; e < per_window; ++e) {
        const int episode = w * per_window + e;
        const auto rows = learner->run_episode(episode);
        if (static_cast<int>(rows.size()) < T || learner->diverged()) {
          trace.truncated = true;
          break;
        }
        const double obj = rows.back().objective;
        for (int t = 0; t < T; ++t) {
          trace.slots.push_back({episode * T + t, episode, obj / idle, obj, rows[t].td_loss, K});
        }
      }
    } else {
      Rng plan_rng = make_rng(seed, "plan");
      const double obj = plan_value(*task, agent, opts, plan_rng);
      for (int e = 0; e < per_window; ++e) {
        const int episode = w * per_window + e;
        for (int t = 0; t < T; ++t) trace.slots.push_back({episode * T + t, episode, obj / idle, obj, 0.0, K});
      }
    }
  }
  return trace;
}

std::vector<Recovery> recovery_detail(const std::vector<double>& loss, const std::vector<int>& events,
                                      double degrade_factor, double recover_factor, int window, int end) {
  require(window >= 1, "recovery: window must be positive");
  const int n = end < 0 ? static_cast<int>(loss.size()) : std::min(end, static_cast<int>(loss.size()));
  std::vector<double> prefix(loss.size() + 1, 0.0);
  for (std::size_t i = 0; i < loss.size(); ++i) prefix[i + 1] = prefix[i] + loss[i];
  auto mean = [&](int a, int b) { return (prefix[b] - prefix[a]) / (b - a); };  // [a, b)
  std::vector<Recovery> out;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const int ev = events[i];
    if (ev < window) throw ValidationError("recovery: need " + std::to_string(window) + " slots before each event");
    if (ev >= n) break;
    const int stop = i + 1 < events.size() ? std::min(events[i + 1], n) : n;
    Recovery r;
    r.event_slot = ev;
    r.baseline = mean(ev - window, ev);
    for (int s = ev; s < stop; ++s) {
      if (loss[s] > degrade_factor * r.baseline) {
        r.degraded = true;
        r.degrade_slot = s;
        break;
      }
    }
    if (r.degraded) {
      r.censored = true;
      r.slots = stop - r.degrade_slot;
      for (int s = r.degrade_slot; s < stop; ++s) {
        if (mean(s + 1 - window, s + 1) < recover_factor * r.baseline) {
          r.censored = false;
          r.slots = s - r.degrade_slot;
          break;
        }
      }
    }
    out.push_back(r);
  }
  return out;
}

namespace {

std::vector<double> losses(const MetricsTrace& trace) {
  std::vector<double> v;
  v.reserve(trace.slots.size());
  for (const auto& r : trace.slots) v.push_back(r.loss);
  return v;
}

}  // namespace

std::vector<int> recovery_time(const MetricsTrace& trace, double degrade_factor, double recover_factor,
                               int window) {
  std::vector<int> out;
  for (const auto& r : recovery_detail(losses(trace), trace.markers, degrade_factor, recover_factor, window)) {
    out.push_back(r.slots);
  }
  return out;
}

std::vector<double> post_recovery_objective(const MetricsTrace& trace, const std::vector<Recovery>& rec,
                                            int window) {
  const int n = static_cast<int>(trace.slots.size());
  std::vector<double> out;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    const int stop = i + 1 < rec.size() ? rec[i + 1].event_slot : n;
    int from = rec[i].degraded ? rec[i].degrade_slot + rec[i].slots : rec[i].event_slot;
    if (from >= stop) from = std::max(rec[i].event_slot, stop - window);
    double s = 0.0;
    for (int k = from; k < stop; ++k) s += trace.slots[k].objective;
    out.push_back(stop > from ? s / (stop - from) : 0.0);
  }
  return out;
}

std::vector<double> window_objectives(const MetricsTrace& trace) {
  std::vector<double> sum, count;
  for (const auto& r : trace.slots) {
    const auto w = static_cast<std::size_t>(r.slot / trace.update_interval);
    if (w >= sum.size()) {
      sum.resize(w + 1, 0.0);
      count.resize(w + 1, 0.0);
    }
    sum[w] += r.objective;
    count[w] += 1.0;
  }
  for (std::size_t w = 0; w < sum.size(); ++w) sum[w] /= std::max(count[w], 1.0);
  return sum;
}

std::vector<bool> spike_then_decay(const MetricsTrace& trace, int window) {
  const auto loss = losses(trace);
  const int n = static_cast<int>(loss.size());
  auto mean = [&](int a, int b) {
    double s = 0.0;
    for (int i = a; i < b; ++i) s += loss[i];
    return s / (b - a);
  };
  std::vector<bool> out;
  for (std::size_t i = 0; i < trace.markers.size(); ++i) {
    const int ev = trace.markers[i];
    const int stop = i + 1 < trace.markers.size() ? trace.markers[i + 1] : n;
    if (ev < window || stop - ev < 2 * window) break;
    const double before = mean(ev - window, ev);
    const double after = mean(ev, ev + window);
    const double late = mean(stop - window, stop);
    out.push_back(after > before && late < after);
  }
  return out;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

nlohmann::json summarize(const std::vector<MetricsTrace>& traces, const SummaryOptions& opts) {
  nlohmann::json runs = nlohmann::json::array();
  std::map<std::string, std::vector<double>> rec_by_agent, post_by_agent;
  std::vector<std::string> order;
  for (const auto& tr : traces) {
    const auto rec = recovery_detail(losses(tr), tr.markers, opts.degrade_factor, opts.recover_factor, opts.window);
    const auto post = post_recovery_objective(tr, rec, opts.window);
    nlohmann::json events = nlohmann::json::array();
    for (std::size_t i = 0; i < rec.size(); ++i) {
      events.push_back({{"slot", rec[i].event_slot},
                        {"baseline", rec[i].baseline},
                        {"degraded", rec[i].degraded},
                        {"recovery_slots", rec[i].slots},
                        {"censored", rec[i].censored},
                        {"post_recovery_objective", post[i]}});
      rec_by_agent[tr.agent].push_back(rec[i].slots);
      post_by_agent[tr.agent].push_back(post[i]);
    }
    if (std::find(order.begin(), order.end(), tr.agent) == order.end()) order.push_back(tr.agent);
    runs.push_back({{"agent", tr.agent},
                    {"scenario", scenario_name(tr.kind)},
                    {"seed", tr.seed},
                    {"truncated", tr.truncated},
                    {"events", events},
                    {"window_objective", window_objectives(tr)}});
  }
  nlohmann::json agg = nlohmann::json::object();
  for (const auto& a : order) {
    const auto& p = post_by_agent[a];
    agg[a] = {{"median_recovery_slots", median(rec_by_agent[a])},
              {"mean_post_recovery_objective",
               p.empty() ? 0.0 : std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size())}};
  }
  return {{"degrade_factor", opts.degrade_factor},
          {"recover_factor", opts.recover_factor},
          {"window", opts.window},
          {"runs", runs},
          {"aggregate", agg}};
}

std::vector<std::shared_ptr<const mdp::Task>> make_task_pool(const Scenario& sc, int per_family,
                                                             std::uint64_t seed) {
  require(per_family >= 1, "task pool: per_family must be positive");
  std::vector<std::shared_ptr<const mdp::Task>> pool;
  Rng rng = make_rng(seed, "pool");
  for (int family = 0; family < 2; ++family) {
    for (int i = 0; i < per_family; ++i) {
      mdp::TaskParams p = sc.base;
      const int K = p.gen.num_devices - 2 + static_cast<int>(rng() % 5);
      p.gen.num_devices = std::clamp(K, sc.min_devices, sc.max_devices);
      if (family == 1) {
        p.gen.demand_min *= sc.burst_factor;
        p.gen.demand_max *= sc.burst_factor;
        p.phys.chi *= sc.chi_spike;
      }
      auto task = std::make_shared<mdp::Task>(
          mdp::make_task(p, derive_seed(seed, family == 0 ? "nominal" : "stressed", static_cast<std::uint64_t>(i))));
      task->name = std::string(family == 0 ? "nominal-" : "stressed-") + std::to_string(i);
      pool.push_back(std::move(task));
    }
  }
  return pool;
}

}  // namespace leosched::bench
