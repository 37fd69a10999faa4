#include "leosched/mdp.hpp"

#include <cmath>
#include <utility>

namespace leosched::mdp {

channel::ChannelModel make_channel_model(const Instance& inst, const TaskParams& params,
                                         std::uint64_t seed) {
  channel::ChannelModel model;
  model.mean_gain = inst.mean_gain;
  for (const auto& tx : inst.transmitters) model.tx_band.push_back(tx.band);
  const auto n = static_cast<std::size_t>(params.fsmc_samples);
  model.leo = channel::build_fsmc(params.leo_fading, params.levels, n, derive_seed(seed, "fsmc-leo"));
  model.ter = channel::build_fsmc(params.ter_fading, params.levels, n, derive_seed(seed, "fsmc-ter"));
  return model;
}

Task make_task(const TaskParams& params, std::uint64_t seed) {
  Task task;
  Rng rng = make_rng(seed, "deployment");
  task.inst = generate_instance(params.gen, params.phys, rng);
  task.catalog = enumerate_groups(task.inst, params.cap);
  task.channel = make_channel_model(task.inst, params, seed);
  task.name = "task-" + std::to_string(seed);
  return task;
}

Problem make_problem(const Task& task, const std::vector<channel::ChannelState>& trajectory) {
  return leosched::make_problem(task.inst, task.catalog, trajectory);
}

std::vector<const Transition*> Trajectory::segment(int u, int w) const {
  std::vector<const Transition*> out;
  for (int i = std::max(u, 0); i <= w && i < size(); ++i) out.push_back(&steps[i]);
  return out;
}

std::vector<int> Trajectory::actions() const {
  std::vector<int> a;
  a.reserve(steps.size());
  for (const auto& s : steps) a.push_back(s.a);
  return a;
}

std::vector<double> deltas(const Instance& inst, const std::vector<double>& delivered) {
  const int K = inst.num_devices();
  std::vector<double> d(K + 1);
  int served = 0;
  for (int k = 0; k < K; ++k) {
    if (delivered[k] - inst.devices[k].threshold_bits > 0.0) ++served;
    d[k + 1] = delivered[k] - inst.devices[k].demand_bits;
  }
  d[0] = static_cast<double>(served - K);
  return d;
}

double weighted_gap(const Instance& inst, const std::vector<double>& delivered) {
  const auto d = deltas(inst, delivered);
  double v = inst.eta0 * d[0] * d[0];
  for (int k = 0; k < inst.num_devices(); ++k) v += inst.devices[k].weight * d[k + 1] * d[k + 1];
  return v;
}

SchedulingEnv::SchedulingEnv(std::shared_ptr<const Task> task) : task_(std::move(task)) {
  require(task_ != nullptr, "SchedulingEnv: null task");
}

MdpState SchedulingEnv::reset(Rng& rng) {
  fixed_.clear();
  MdpState s;
  s.channels = channel::draw_stationary(task_->channel, rng);
  s.delivered.assign(task_->inst.num_devices(), 0.0);
  return s;
}

MdpState SchedulingEnv::reset_fixed(std::vector<channel::ChannelState> trajectory) {
  require(static_cast<int>(trajectory.size()) == horizon(),
          "SchedulingEnv: fixed trajectory must have one state per slot");
  fixed_ = std::move(trajectory);
  MdpState s;
  s.channels = fixed_.front();
  s.delivered.assign(task_->inst.num_devices(), 0.0);
  return s;
}

Transition SchedulingEnv::step(const MdpState& state, int a, Rng& rng) const {
  const Task& task = *task_;
  if (a < 0 || a >= task.num_groups()) {
    throw ValidationError("step: action " + std::to_string(a) + " outside catalog of " +
                          std::to_string(task.num_groups()) + " groups");
  }
  require(state.t < horizon(), "step: episode already finished");
  Transition tr;
  tr.s = state;
  tr.a = a;
  const Eigen::VectorXd r = rate(task.inst, task.catalog[a], state.channels);
  MdpState next;
  next.t = state.t + 1;
  next.delivered = state.delivered;
  for (int k = 0; k < task.inst.num_devices(); ++k) next.delivered[k] += r[k];
  tr.done = next.t == horizon();
  if (!fixed_.empty()) {
    next.channels = fixed_[tr.done ? state.t : next.t];
  } else {
    next.channels = channel::step_channel(state.channels, task.channel, rng);
  }
  const auto before = deltas(task.inst, state.delivered);
  const auto after = deltas(task.inst, next.delivered);
  double reward = task.inst.eta0 * (before[0] * before[0] - after[0] * after[0]);
  for (int k = 0; k < task.inst.num_devices(); ++k) {
    const double b = before[k + 1];
    const double c = after[k + 1];
    reward += task.inst.devices[k].weight * (b * b - c * c);
  }
  tr.r = reward;
  tr.s_next = std::move(next);
  return tr;
}

double accumulated_reward(const Trajectory& traj, double gamma) {
  double total = 0.0;
  double discount = 1.0;
  for (const auto& s : traj.steps) {
    total += discount * s.r;
    discount *= gamma;
  }
  return total;
}

void write_jsonl(const Trajectory& traj, std::ostream& out) {
  for (const auto& s : traj.steps) {
    nlohmann::json j{{"t", s.s.t},
                     {"a", s.a},
                     {"r", s.r},
                     {"done", s.done},
                     {"delivered", s.s.delivered},
                     {"delivered_next", s.s_next.delivered}};
    out << j.dump() << '\n';
  }
}

}  // namespace leosched::mdp
