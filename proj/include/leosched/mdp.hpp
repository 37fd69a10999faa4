#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "leosched/channel.hpp"
#include "leosched/instance.hpp"

namespace leosched::mdp {

/// Knobs for building one scheduling task (instance, catalog, channel chain).
struct TaskParams {
  GenParams gen;
  channel::ChannelParams phys;
  channel::FadingConfig leo_fading{channel::FadingKind::kRician};
  channel::FadingConfig ter_fading{channel::FadingKind::kRayleigh};
  int levels = 8;
  int fsmc_samples = 20000;
  int cap = 8;
};

struct Task {
  std::string name;
  Instance inst;
  GroupCatalog catalog;
  channel::ChannelModel channel;

  int num_groups() const { return catalog.size(); }
};

/// Deterministic in (params, seed): the deployment, demands and both FSMC
/// chains come from separate seed streams.
Task make_task(const TaskParams& params, std::uint64_t seed);
/// Rebuilds the FSMC chains of `task` for a new instance or fading setup.
channel::ChannelModel make_channel_model(const Instance& inst, const TaskParams& params,
                                         std::uint64_t seed);

/// Offline view of `task` on a fixed channel realization.
Problem make_problem(const Task& task, const std::vector<channel::ChannelState>& trajectory);

struct MdpState {
  channel::ChannelState channels;
  std::vector<double> delivered;  // b_{k,t}
  int t = 0;
};

struct Transition {
  MdpState s;
  int a = 0;
  double r = 0.0;
  MdpState s_next;
  bool done = false;
};

struct Trajectory {
  std::vector<Transition> steps;

  int size() const { return static_cast<int>(steps.size()); }
  /// Transitions u..w inclusive (0-based); out-of-range indices are clipped.
  std::vector<const Transition*> segment(int u, int w) const;
  /// Schedule actually taken, one group per step.
  std::vector<int> actions() const;
};

/// Served-count gap and per-device data gaps: Delta_0 = sum 1(b_k > D'_k) - K,
/// Delta_k = b_k - D_k.
std::vector<double> deltas(const Instance& inst, const std::vector<double>& delivered);
/// sum_k eta_k Delta_k^2 (k = 0 weighted by eta0).
double weighted_gap(const Instance& inst, const std::vector<double>& delivered);

class SchedulingEnv {
 public:
  explicit SchedulingEnv(std::shared_ptr<const Task> task);

  const Task& task() const { return *task_; }
  int horizon() const { return task_->inst.horizon; }

  /// Fresh episode with channels from the stationary distribution.
  MdpState reset(Rng& rng);
  /// Episode that replays `trajectory` (one state per slot) instead of
  /// sampling channels.
  MdpState reset_fixed(std::vector<channel::ChannelState> trajectory);

  /// Applies group `a` under the current channels and advances one slot.
  Transition step(const MdpState& state, int a, Rng& rng) const;

 private:
  std::shared_ptr<const Task> task_;
  std::vector<channel::ChannelState> fixed_;
};

/// sum_t gamma^t r_t.
double accumulated_reward(const Trajectory& traj, double gamma);

/// One JSON object per transition.
void write_jsonl(const Trajectory& traj, std::ostream& out);

}  // namespace leosched::mdp
