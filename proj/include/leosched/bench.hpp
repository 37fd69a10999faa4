#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "leosched/agents.hpp"
#include "leosched/mdp.hpp"
#include "leosched/solvers.hpp"

namespace leosched::bench {

enum class ScenarioKind { kUserChurn, kDemandBurst, kChannelShock };

ScenarioKind parse_scenario(const std::string& name);
const char* scenario_name(ScenarioKind kind);

enum class AgentKind { kEmcl, kAc, kAdmm, kGreedy, kBnb };

AgentKind parse_agent(const std::string& name);
const char* agent_name(AgentKind kind);

/// Desk-scale defaults: 1 LEO, 1 BS, 2 TSTs, 8 devices, T = 10, each
/// transmitter limited to its 3 strongest devices.
mdp::TaskParams default_task_params();

struct Scenario {
  ScenarioKind kind = ScenarioKind::kUserChurn;
  int update_interval = 200;  // slots
  int horizon = 800;          // slots
  std::uint64_t seed = 1;
  /// Scales every shift; 0 keeps the environment fixed.
  double magnitude = 1.0;
  // user churn
  double arrival_mean = 2.0;
  int abnormal_batch = 10;
  int abnormal_period = 2;  // every n-th event is an abnormal batch
  int min_devices = 2;
  int max_devices = 12;
  // demand burst: demand range multiplied by this in alternate windows
  double burst_factor = 3.0;
  // channel shock: chi multiplied by this in alternate windows
  double chi_spike = 5.0;
  mdp::TaskParams base = default_task_params();

  void validate() const;
  int episodes_per_window() const { return update_interval / base.gen.horizon; }
};

/// Environment change applied at `slot` (a positive multiple of the update
/// interval).
struct Event {
  int slot = 0;
  int index = 0;
  int arrivals = 0;
  int departures = 0;
  bool abnormal = false;
  double demand_scale = 1.0;
  double chi_scale = 1.0;
  bool changed = false;
};

std::vector<Event> generate_events(const Scenario& sc, Rng& rng);
/// Knuth's multiplicative Poisson sampler on uniform01 (bit-reproducible).
int poisson(double mean, Rng& rng);

/// Rebuilds the task after each event. Devices come from a pre-drawn
/// universe so arrivals get fresh positions and demands; departures remove
/// active devices uniformly at random.
class ScenarioEnvironment {
 public:
  ScenarioEnvironment(const Scenario& sc, std::vector<Event> events);

  std::shared_ptr<const mdp::Task> initial() const { return current_; }
  std::shared_ptr<const mdp::Task> apply(const Event& e);
  const std::vector<Event>& events() const { return events_; }
  const std::vector<int>& active() const { return active_; }

 private:
  std::shared_ptr<const mdp::Task> build(const std::string& name);

  Scenario sc_;
  std::vector<Event> events_;
  Instance universe_;
  std::vector<int> active_;
  int next_fresh_ = 0;
  double demand_scale_ = 1.0;
  double chi_scale_ = 1.0;
  std::uint64_t fsmc_counter_ = 0;
  Rng rng_;
  std::shared_ptr<const mdp::Task> current_;
};

struct SlotRecord {
  int slot = 0;
  int episode = 0;
  double loss = 0.0;       // objective / idle objective of the current environment
  double objective = 0.0;  // objective of the episode (or plan) covering the slot
  double td_loss = 0.0;
  int devices = 0;
};

struct MetricsTrace {
  std::string agent;
  ScenarioKind kind = ScenarioKind::kUserChurn;
  std::uint64_t seed = 0;
  int update_interval = 0;
  std::vector<SlotRecord> slots;
  std::vector<int> markers;  // event slots
  bool truncated = false;
};

void write_trace_csv(const MetricsTrace& trace, std::ostream& out);

struct RunOptions {
  agents::TrainConfig train;
  agents::NetShape shape;
  solvers::AdmmOptions admm;
  solvers::BnbOptions bnb;
};

/// Steps one agent across the scenario. Learning agents keep learning across
/// windows (EMCL: frozen critic, fresh actor per window; AC: fresh actor and
/// critic per window). Offline solvers plan once per window on a sampled
/// channel trajectory and report the planned objective for every slot.
MetricsTrace run_scenario(const Scenario& sc, AgentKind agent, const RunOptions& opts,
                          const agents::MetaCritic* critic, std::uint64_t seed);

struct Recovery {
  int event_slot = 0;
  double baseline = 0.0;
  bool degraded = false;
  int degrade_slot = -1;
  int slots = 0;
  /// No recovery before the next event; `slots` runs to that event.
  bool censored = false;
};

/// Baseline = mean loss over the `window` slots before each event;
/// degradation = first slot in the event's interval with loss > degrade
/// x baseline; recovery = first later slot whose trailing `window`-slot mean
/// drops below recover x baseline.
std::vector<Recovery> recovery_detail(const std::vector<double>& loss, const std::vector<int>& events,
                                      double degrade_factor, double recover_factor, int window,
                                      int end = -1);
std::vector<int> recovery_time(const MetricsTrace& trace, double degrade_factor = 2.0,
                               double recover_factor = 1.2, int window = 20);

/// Mean objective from each event's recovery slot to the next event.
std::vector<double> post_recovery_objective(const MetricsTrace& trace, const std::vector<Recovery>& rec,
                                            int window = 20);
/// Mean objective of every update window.
std::vector<double> window_objectives(const MetricsTrace& trace);
/// Loss over the first `window` slots after each event exceeds the
/// pre-event baseline, and the last `window` slots of the interval sit below
/// that post-event level.
std::vector<bool> spike_then_decay(const MetricsTrace& trace, int window = 20);

struct SummaryOptions {
  double degrade_factor = 2.0;
  double recover_factor = 1.2;
  int window = 20;
};

nlohmann::json summarize(const std::vector<MetricsTrace>& traces, const SummaryOptions& opts = {});

/// Meta-training pool drawn from two families: "nominal" (base demands and
/// weather, device count varied by +-2) and "stressed" (demand range scaled
/// by burst_factor and chi by chi_spike).
std::vector<std::shared_ptr<const mdp::Task>> make_task_pool(const Scenario& sc, int per_family,
                                                             std::uint64_t seed);

}  // namespace leosched::bench
