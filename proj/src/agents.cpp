#include "leosched/agents.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <utility>

namespace leosched::agents {

namespace {

constexpr double kDeviceRef = 12.0;
constexpr double kInitialVariance = 0.0625;

double clip(double v) { return std::clamp(v, 0.0, 5.0); }
/// Signed relative data gap b/D - 1.
double gap(double bits, double demand) { return std::clamp(bits / demand - 1.0, -1.0, 5.0); }

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// log10(1 + SNR) / 4 of link (k, n) without interference.
double link_quality(const Instance& inst, const channel::ChannelState& ch, int k, int n) {
  const auto& tx = inst.transmitters[n];
  const double noise = inst.noise_psd * inst.bandwidth(tx.band);
  const double snr = noise > 0 ? ch.grid(k, n) * tx.power_w / noise : 0.0;
  return std::log10(1.0 + snr) / 4.0;
}

bool served(const GroundDevice& d, double bits) { return bits - d.threshold_bits > 0.0; }

}  // namespace

TdForm parse_td_form(const std::string& name) {
  if (name == "bootstrap") return TdForm::kBootstrap;
  if (name == "literal") return TdForm::kLiteral;
  throw ValidationError("unknown td form '" + name + "' (bootstrap | literal)");
}

const char* td_form_name(TdForm form) {
  return form == TdForm::kBootstrap ? "bootstrap" : "literal";
}

void TrainConfig::validate() const {
  require(lr > 0, "train: lr must be positive");
  require(momentum >= 0 && momentum < 1, "train: momentum must lie in [0,1)");
  require(batch >= 1, "train: batch must be positive");
  require(gamma > 0 && gamma <= 1, "train: gamma must lie in (0,1]");
  require(memory >= 1, "train: memory must be positive");
  require(wolpertinger_m >= 1, "train: wolpertinger_m must be positive");
  require(tasks_per_episode >= 1, "train: tasks_per_episode must be positive");
  require(t_bar >= 1, "train: t_bar must be positive");
  require(episodes >= 1, "train: episodes must be positive");
  require(var_floor > 0, "train: var_floor must be positive");
}

// ---------------------------------------------------------------------------

int state_channels(int num_transmitters) { return num_transmitters + 4; }
int critic_channels(int num_transmitters) { return 2 * num_transmitters + 8; }

Eigen::MatrixXd state_features(const mdp::Task& task, const mdp::MdpState& s) {
  const Instance& inst = task.inst;
  const int K = inst.num_devices();
  const int N = inst.num_transmitters();
  Eigen::MatrixXd f(state_channels(N), K);
  const double remaining = static_cast<double>(inst.horizon - s.t) / inst.horizon;
  for (int k = 0; k < K; ++k) {
    const auto& d = inst.devices[k];
    for (int n = 0; n < N; ++n) f(n, k) = link_quality(inst, s.channels, k, n);
    f(N, k) = gap(s.delivered[k], d.demand_bits);
    f(N + 1, k) = served(d, s.delivered[k]) ? 1.0 : 0.0;
    f(N + 2, k) = remaining;
    f(N + 3, k) = 1.0;
  }
  return f;
}

Eigen::MatrixXd critic_features(const mdp::Task& task, const mdp::MdpState& s,
                                const Eigen::MatrixXd& state_feat, int a) {
  const Instance& inst = task.inst;
  const int K = inst.num_devices();
  const int N = inst.num_transmitters();
  const int cs = state_channels(N);
  require(state_feat.rows() == cs && state_feat.cols() == K, "critic features: bad state features");
  require(a >= 0 && a < task.num_groups(), "critic features: action outside catalog");
  const LinkGroup& group = task.catalog[a];
  const Eigen::VectorXd r = rate(inst, group, s.channels);
  Eigen::MatrixXd f(critic_channels(N), K);
  f.topRows(cs) = state_feat;
  for (int k = 0; k < K; ++k) {
    const auto& d = inst.devices[k];
    for (int n = 0; n < N; ++n) f(cs + n, k) = group.alpha(k, n);
    const double after = s.delivered[k] + r[k];
    f(cs + N, k) = clip(r[k] / d.demand_bits);
    const double g0 = gap(s.delivered[k], d.demand_bits);
    const double g1 = gap(after, d.demand_bits);
    f(cs + N + 1, k) = g1;
    f(cs + N + 2, k) = (served(d, after) && !served(d, s.delivered[k])) ? 1.0 : 0.0;
    f(cs + N + 3, k) = std::max(g0 * g0 - g1 * g1, -10.0);
  }
  return f;
}

Eigen::VectorXd segment_features(const mdp::Task& task, const mdp::Transition& tr,
                                 double reward_scale) {
  const Instance& inst = task.inst;
  const int K = inst.num_devices();
  const int N = inst.num_transmitters();
  const int G = task.num_groups();
  Eigen::VectorXd f(kSegmentFeatures);
  double frac = 0.0, served_count = 0.0, quality = 0.0, gained = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto& d = inst.devices[k];
    frac += clip(tr.s_next.delivered[k] / d.demand_bits);
    served_count += served(d, tr.s_next.delivered[k]) ? 1.0 : 0.0;
    gained += clip((tr.s_next.delivered[k] - tr.s.delivered[k]) / d.demand_bits);
    for (int n = 0; n < N; ++n) quality += link_quality(inst, tr.s.channels, k, n);
  }
  f[0] = G > 1 ? static_cast<double>(tr.a) / (G - 1) : 0.0;
  f[1] = tr.r / reward_scale;
  f[2] = frac / K;
  f[3] = served_count / K;
  f[4] = static_cast<double>(tr.s.t) / inst.horizon;
  f[5] = quality / (K * N);
  f[6] = gained / K;
  f[7] = K / kDeviceRef;
  return f;
}

Eigen::MatrixXd segment_window(const std::vector<Eigen::VectorXd>& history, int t, int t_bar) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(kSegmentFeatures, t_bar);
  for (int j = 0; j < t_bar; ++j) {
    const int step = t - t_bar + j;
    if (step >= 0 && step < static_cast<int>(history.size())) w.col(j) = history[step];
  }
  return w;
}

// ---------------------------------------------------------------------------

MetaCritic::MetaCritic(int num_transmitters, int t_bar, bool use_lstm, std::uint64_t seed,
                       const NetShape& shape)
    : t_bar_(t_bar), use_lstm_(use_lstm), channels_(critic_channels(num_transmitters)) {
  require(num_transmitters >= 1, "critic: needs at least one transmitter");
  require(t_bar >= 1, "critic: t_bar must be positive");
  using nn::Activation;
  std::vector<nn::LayerSpec> specs{nn::conv1d(channels_, shape.conv), nn::conv1d(shape.conv, shape.conv),
                                   nn::mean_pool(shape.conv), nn::dense(shape.conv, shape.conv, Activation::kTanh)};
  conv_end_ = static_cast<int>(specs.size());
  int head_in = shape.conv;
  if (use_lstm) {
    specs.push_back(nn::lstm(kSegmentFeatures, shape.lstm));
    head_in += shape.lstm;
  }
  lstm_end_ = static_cast<int>(specs.size());
  specs.push_back(nn::dense(head_in, shape.head, Activation::kRelu));
  specs.push_back(nn::dense(shape.head, 1));
  hnn_ = nn::Network(std::move(specs), seed);
}

void MetaCritic::check(const Eigen::MatrixXd& x, const Eigen::MatrixXd& segment) const {
  require(hnn_.num_layers() > 0, "critic: not initialized");
  require(x.rows() == channels_ && x.cols() >= 1, "critic: input must have " + std::to_string(channels_) +
                                                      " feature rows and at least one device");
  if (use_lstm_) {
    require(segment.rows() == kSegmentFeatures && segment.cols() == t_bar_,
            "critic: segment must be " + std::to_string(kSegmentFeatures) + " x " + std::to_string(t_bar_));
  }
}

double MetaCritic::q(const Eigen::MatrixXd& x, const Eigen::MatrixXd& segment) const {
  check(x, segment);
  const Eigen::MatrixXd c = hnn_.forward(x, nullptr, 0, conv_end_);
  if (!use_lstm_) return hnn_.forward(c, nullptr, lstm_end_, -1)(0, 0);
  const Eigen::MatrixXd h = hnn_.forward(segment, nullptr, conv_end_, lstm_end_);
  Eigen::MatrixXd z(c.rows() + h.rows(), 1);
  z << c, h;
  return hnn_.forward(z, nullptr, lstm_end_, -1)(0, 0);
}

double MetaCritic::q_backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& segment, double scale,
                              Eigen::VectorXd& grad) const {
  check(x, segment);
  nn::Cache cc, lc, hc;
  const Eigen::MatrixXd c = hnn_.forward(x, &cc, 0, conv_end_);
  Eigen::MatrixXd z = c;
  if (use_lstm_) {
    const Eigen::MatrixXd h = hnn_.forward(segment, &lc, conv_end_, lstm_end_);
    z.resize(c.rows() + h.rows(), 1);
    z << c, h;
  }
  const double q = hnn_.forward(z, &hc, lstm_end_, -1)(0, 0);
  const Eigen::MatrixXd dz = hnn_.backward(hc, Eigen::MatrixXd::Constant(1, 1, scale), grad);
  hnn_.backward(cc, dz.topRows(c.rows()), grad);
  if (use_lstm_) hnn_.backward(lc, dz.bottomRows(dz.rows() - c.rows()), grad);
  return q;
}

double critic_q(const MetaCritic& mc, const Eigen::MatrixXd& x, const Eigen::MatrixXd& segment) {
  return mc.q(x, segment);
}

TaskActor::TaskActor(int num_transmitters, int task_id, double floor, std::uint64_t seed,
                     const NetShape& shape)
    : task(task_id), var_floor(floor) {
  require(floor > 0, "actor: variance floor must be positive");
  using nn::Activation;
  const int cs = state_channels(num_transmitters);
  net = nn::Network({nn::conv1d(cs, shape.actor_conv), nn::conv1d(shape.actor_conv, shape.actor_conv),
                     nn::mean_pool(shape.actor_conv),
                     nn::dense(shape.actor_conv, shape.actor_hidden, Activation::kTanh),
                     nn::dense(shape.actor_hidden, 2)},
                    seed);
  // Start with a standard deviation of about 0.25 of the catalog instead of
  // softplus(0), which would spread most proto-actions past both ends.
  Eigen::VectorXd p = net.params();
  p[p.size() - 1] = std::log(std::expm1(kInitialVariance));
  net.set_params(p);
}

Policy TaskActor::policy(const Eigen::MatrixXd& state_feat) const {
  const Eigen::MatrixXd o = net.forward(state_feat);
  return {sigmoid(o(0, 0)), nn::positive_variance(o(1, 0), var_floor)};
}

double TaskActor::log_prob_backward(const Eigen::MatrixXd& state_feat, double u, double scale,
                                    Eigen::VectorXd& grad) const {
  nn::Cache cache;
  const Eigen::MatrixXd o = net.forward(state_feat, &cache);
  const double mu = sigmoid(o(0, 0));
  const double var = nn::positive_variance(o(1, 0), var_floor);
  Eigen::MatrixXd d(2, 1);
  d(0, 0) = scale * nn::gaussian_log_density_dmu(u, mu, var) * mu * (1.0 - mu);
  d(1, 0) = scale * nn::gaussian_log_density_dvar(u, mu, var) * nn::positive_variance_grad(o(1, 0));
  net.backward(cache, d, grad);
  return nn::gaussian_log_density(u, mu, var);
}

// ---------------------------------------------------------------------------

int simple_action(double a_hat, int num_groups) {
  require(num_groups >= 1, "wolpertinger: empty catalog");
  if (!(a_hat > 0.0)) return 0;  // also catches NaN
  if (a_hat >= num_groups - 1) return num_groups - 1;
  const int lo = static_cast<int>(std::floor(a_hat));
  return (a_hat - lo <= lo + 1 - a_hat) ? lo : lo + 1;
}

std::vector<int> nearest_indices(double a_hat, int num_groups, int m) {
  require(m >= 1 && m <= num_groups, "wolpertinger: need 1 <= M <= G");
  const int first = simple_action(a_hat, num_groups);
  const double centre = std::isnan(a_hat) ? 0.0 : a_hat;
  std::vector<int> out{first};
  int lo = first - 1, hi = first + 1;
  while (static_cast<int>(out.size()) < m) {
    const double dl = lo >= 0 ? std::abs(centre - lo) : std::numeric_limits<double>::infinity();
    const double dh = hi < num_groups ? std::abs(centre - hi) : std::numeric_limits<double>::infinity();
    if (dl <= dh) {
      out.push_back(lo--);
    } else {
      out.push_back(hi++);
    }
  }
  return out;
}

Selection wolpertinger_select(const std::function<double(int)>& q_of, double a_hat, int num_groups,
                              int m) {
  const auto cand = nearest_indices(a_hat, num_groups, m);
  Selection s;
  s.simple = cand.front();
  s.action = -1;
  for (int g : cand) {
    const double q = q_of(g);
    if (g == s.simple) s.q_simple = q;
    if (s.action < 0 || q > s.q || (q == s.q && g < s.action)) {
      s.action = g;
      s.q = q;
    }
  }
  return s;
}

Selection wolpertinger_select(const MetaCritic& mc, const mdp::Task& task, const mdp::MdpState& s,
                              const Eigen::MatrixXd& segment, double a_hat, int m) {
  const Eigen::MatrixXd sf = state_features(task, s);
  return wolpertinger_select(
      [&](int g) { return mc.q(critic_features(task, s, sf, g), segment); }, a_hat, task.num_groups(), m);
}

double wolpertinger_expected_gain(double kappa, int m) {
  require(m >= 1, "wolpertinger gain: M must be positive");
  require(kappa >= 0, "wolpertinger gain: kappa must be non-negative");
  const double p = std::ldexp(1.0, m);
  return kappa * (1.0 - 2.0 * (p - 1.0) / (m * p));
}

// ---------------------------------------------------------------------------

nn::GradientBundle critic_loss_and_grad(const MetaCritic& mc,
                                        const std::vector<std::vector<TdSample>>& batches, double gamma,
                                        TdForm form) {
  require(!batches.empty(), "critic loss: no task batches");
  nn::GradientBundle out;
  out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mc.net().num_params()));
  const double tasks = static_cast<double>(batches.size());
  for (const auto& batch : batches) {
    require(!batch.empty(), "critic loss: empty batch");
    const double w = 1.0 / (tasks * static_cast<double>(batch.size()));
    for (const auto& s : batch) {
      const double q0 = mc.q(s.x, s.segment);
      const double q1 = s.done ? 0.0 : mc.q(s.x_next, s.segment_next);
      double delta, d0, d1;
      if (form == TdForm::kBootstrap) {
        delta = q0 - s.r - gamma * q1;
        d0 = 2.0 * w * delta;
        d1 = -2.0 * w * gamma * delta;
      } else {
        delta = q1 - s.r - gamma * q0;
        d1 = 2.0 * w * delta;
        d0 = -2.0 * w * gamma * delta;
      }
      out.loss += w * delta * delta;
      mc.q_backward(s.x, s.segment, d0, out.grad);
      if (!s.done) mc.q_backward(s.x_next, s.segment_next, d1, out.grad);
    }
  }
  return out;
}

nn::GradientBundle actor_surrogate_grad(const TaskActor& actor, const std::vector<Eigen::MatrixXd>& states,
                                        const std::vector<double>& us, const std::vector<double>& qs) {
  require(states.size() == us.size() && us.size() == qs.size(), "actor loss: ragged batch");
  require(!states.empty(), "actor loss: empty batch");
  nn::GradientBundle out;
  out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(actor.net.num_params()));
  const double w = 1.0 / static_cast<double>(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    out.loss -= w * qs[i];
    if (qs[i] != 0.0) actor.log_prob_backward(states[i], us[i], -w * qs[i], out.grad);
  }
  return out;
}

nn::GradientBundle actor_loss_and_grad(const TaskActor& actor, const std::vector<ActorSample>& batch,
                                       const MetaCritic& mc) {
  std::vector<Eigen::MatrixXd> states;
  std::vector<double> us, qs;
  for (const auto& s : batch) {
    states.push_back(s.state);
    us.push_back(s.u);
    qs.push_back(mc.q(s.x, s.segment));
  }
  return actor_surrogate_grad(actor, states, us, qs);
}

// ---------------------------------------------------------------------------

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  require(capacity >= 1, "memory: capacity must be positive");
}

void ReplayMemory::push(MemoryEntry e) {
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(std::move(e));
}

std::vector<const MemoryEntry*> ReplayMemory::sample(std::size_t n, Rng& rng) const {
  std::vector<const MemoryEntry*> out;
  if (entries_.empty()) return out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(&entries_[rng() % entries_.size()]);
  return out;
}

std::vector<const MemoryEntry*> ReplayMemory::sample_task(int task, std::size_t n, Rng& rng) const {
  std::vector<const MemoryEntry*> pool;
  for (const auto& e : entries_) {
    if (e.task == task) pool.push_back(&e);
  }
  std::vector<const MemoryEntry*> out;
  if (pool.empty()) return out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool[rng() % pool.size()]);
  return out;
}

TdSample td_sample(const MemoryEntry& e, int t_bar, bool with_segment) {
  const EpisodeLog& ep = *e.episode;
  const StepRecord& rec = ep.steps[e.t];
  TdSample s;
  s.x = rec.critic_x;
  s.r = rec.r_scaled;
  s.done = rec.tr.done;
  if (with_segment) s.segment = segment_window(ep.seg_history, e.t, t_bar);
  if (!s.done) {
    require(e.t + 1 < static_cast<int>(ep.steps.size()), "memory: entry has no successor yet");
    s.x_next = ep.steps[e.t + 1].critic_x;
    if (with_segment) s.segment_next = segment_window(ep.seg_history, e.t + 1, t_bar);
  }
  return s;
}

void write_trace_csv(const std::vector<TraceRow>& rows, std::ostream& out) {
  out << "episode,step,task,td_loss,actor_loss,reward,objective\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.episode << ',' << r.step << ',' << r.task << ',' << r.td_loss << ',' << r.actor_loss << ','
        << r.reward << ',' << r.objective << '\n';
  }
}

// ---------------------------------------------------------------------------
// Shared rollout machinery.

namespace {

struct Rollout {
  std::shared_ptr<const mdp::Task> task;
  std::string name;
  int id = 0;
  double reward_scale = 1.0;
  TaskActor* actor = nullptr;
  mdp::MdpState state;
  std::shared_ptr<EpisodeLog> log;
};

void begin_episode(Rollout& ro, Rng& rng) {
  mdp::SchedulingEnv env(ro.task);
  ro.state = env.reset(rng);
  ro.log = std::make_shared<EpisodeLog>();
  ro.log->task = ro.id;
}

/// Lines 6-9: policy draw, Wolpertinger selection, environment step, memory.
const StepRecord& act(const MetaCritic& critic, Rollout& ro, ReplayMemory& memory, int m, Rng& rng) {
  const mdp::Task& task = *ro.task;
  const int G = task.num_groups();
  const int t = ro.state.t;
  const Eigen::MatrixXd sf = state_features(task, ro.state);
  const Policy pol = ro.actor->policy(sf);
  const double u = pol.mu + std::sqrt(pol.var) * standard_normal(rng);
  const Eigen::MatrixXd seg =
      critic.uses_lstm() ? segment_window(ro.log->seg_history, t, critic.t_bar()) : Eigen::MatrixXd();
  std::vector<Eigen::MatrixXd> feats(G);
  const Selection sel = wolpertinger_select(
      [&](int g) {
        feats[g] = critic_features(task, ro.state, sf, g);
        return critic.q(feats[g], seg);
      },
      u * (G - 1), G, std::min(m, G));
  mdp::SchedulingEnv env(ro.task);
  StepRecord rec;
  rec.tr = env.step(ro.state, sel.action, rng);
  rec.u = u;
  rec.r_scaled = rec.tr.r / ro.reward_scale;
  rec.state_feat = sf;
  rec.critic_x = std::move(feats[sel.action]);
  rec.seg_feat = segment_features(task, rec.tr, ro.reward_scale);
  ro.state = rec.tr.s_next;
  ro.log->seg_history.push_back(rec.seg_feat);
  ro.log->steps.push_back(std::move(rec));
  if (t > 0) memory.push({ro.log, t - 1, ro.id});
  if (ro.log->steps.back().tr.done) memory.push({ro.log, t, ro.id});
  return ro.log->steps.back();
}

/// Line 10: one actor step from a batch of this task's tuples. Returns the
/// batch loss; NaN if the gradient was rejected.
double update_actor(const MetaCritic& critic, Rollout& ro, nn::Sgd& opt, const ReplayMemory& memory,
                    int batch, Rng& rng) {
  const auto picks = memory.sample_task(ro.id, static_cast<std::size_t>(batch), rng);
  if (picks.empty()) return 0.0;
  std::vector<Eigen::MatrixXd> states;
  std::vector<double> us, qs;
  for (const MemoryEntry* e : picks) {
    const StepRecord& rec = e->episode->steps[e->t];
    const Eigen::MatrixXd seg = critic.uses_lstm()
                                    ? segment_window(e->episode->seg_history, e->t, critic.t_bar())
                                    : Eigen::MatrixXd();
    states.push_back(rec.state_feat);
    us.push_back(rec.u);
    qs.push_back(critic.q(rec.critic_x, seg));
  }
  const auto b = actor_surrogate_grad(*ro.actor, states, us, qs);
  if (!std::isfinite(b.loss) || !opt.step(ro.actor->net, b.grad)) return std::nan("");
  return b.loss;
}

std::vector<std::vector<TdSample>> critic_batches(const MetaCritic& critic, const ReplayMemory& memory,
                                                  int batch, Rng& rng) {
  const auto picks = memory.sample(static_cast<std::size_t>(batch), rng);
  std::vector<int> order;
  std::vector<std::vector<TdSample>> out;
  for (const MemoryEntry* e : picks) {
    auto it = std::find(order.begin(), order.end(), e->task);
    std::size_t slot;
    if (it == order.end()) {
      order.push_back(e->task);
      out.emplace_back();
      slot = out.size() - 1;
    } else {
      slot = static_cast<std::size_t>(it - order.begin());
    }
    out[slot].push_back(td_sample(*e, critic.t_bar(), critic.uses_lstm()));
  }
  return out;
}

TraceRow row_for(const Rollout& ro, const StepRecord& rec, int episode) {
  TraceRow row;
  row.episode = episode;
  row.step = rec.tr.s.t;
  row.task = ro.name;
  row.reward = rec.tr.r;
  row.objective = mdp::weighted_gap(ro.task->inst, rec.tr.s_next.delivered);
  return row;
}

double reward_scale_for(const mdp::Task& task) {
  const double idle = idle_objective(task.inst);
  return idle > 0 ? idle : 1.0;
}

}  // namespace

TrainResult meta_train(const std::vector<std::shared_ptr<const mdp::Task>>& pool, const TrainConfig& cfg,
                       const NetShape& shape) {
  cfg.validate();
  require(!pool.empty(), "meta_train: empty task pool");
  require(static_cast<int>(pool.size()) >= cfg.tasks_per_episode, "meta_train: pool smaller than I");
  const int N = pool.front()->inst.num_transmitters();
  for (const auto& t : pool) {
    require(t != nullptr && t->inst.num_transmitters() == N, "meta_train: tasks must share the transmitter set");
  }
  TrainResult res;
  res.critic = MetaCritic(N, cfg.t_bar, true, derive_seed(cfg.seed, "critic"), shape);
  nn::Sgd critic_opt{cfg.lr, cfg.momentum, {}};
  ReplayMemory memory(static_cast<std::size_t>(cfg.memory));
  Rng rng = make_rng(cfg.seed, "meta-train");
  const int I = cfg.tasks_per_episode;

  for (int ep = 0; ep < cfg.episodes && !res.diverged; ++ep) {
    // Sample I distinct tasks.
    std::vector<int> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < I; ++i) std::swap(idx[i], idx[i + rng() % (idx.size() - i)]);
    std::vector<TaskActor> actors;
    std::vector<nn::Sgd> opts;
    std::vector<Rollout> ros(I);
    actors.reserve(I);
    for (int i = 0; i < I; ++i) {
      actors.emplace_back(N, idx[i], cfg.var_floor,
                          derive_seed(cfg.seed, "actor", static_cast<std::uint64_t>(ep) * I + i), shape);
      opts.push_back(nn::Sgd{cfg.lr, cfg.momentum, {}});
    }
    int horizon = 0;
    for (int i = 0; i < I; ++i) {
      Rollout& ro = ros[i];
      ro.task = pool[idx[i]];
      ro.id = idx[i];
      ro.name = ro.task->name;
      ro.reward_scale = reward_scale_for(*ro.task);
      ro.actor = &actors[i];
      begin_episode(ro, rng);
      horizon = std::max(horizon, ro.task->inst.horizon);
    }
    for (int t = 0; t < horizon && !res.diverged; ++t) {
      std::vector<TraceRow> rows;
      for (int i = 0; i < I; ++i) {
        Rollout& ro = ros[i];
        if (ro.state.t >= ro.task->inst.horizon) continue;
        const StepRecord& rec = act(res.critic, ro, memory, cfg.wolpertinger_m, rng);
        TraceRow row = row_for(ro, rec, ep);
        row.actor_loss = update_actor(res.critic, ro, opts[i], memory, cfg.batch, rng);
        if (!std::isfinite(row.actor_loss)) res.diverged = true;
        rows.push_back(row);
      }
      if (memory.size() > 0 && !res.diverged) {
        const auto b = critic_loss_and_grad(res.critic, critic_batches(res.critic, memory, cfg.batch, rng),
                                            cfg.gamma, cfg.td_form);
        const Eigen::VectorXd keep = res.critic.net().params();
        if (!std::isfinite(b.loss) || !critic_opt.step(res.critic.net(), b.grad) || !res.critic.net().finite()) {
          res.critic.net().set_params(keep);
          res.diverged = true;
        }
        for (auto& r : rows) r.td_loss = b.loss;
      }
      res.trace.insert(res.trace.end(), rows.begin(), rows.end());
    }
  }
  return res;
}

Learner::Learner(Mode mode, MetaCritic critic, const TrainConfig& cfg, std::uint64_t seed,
                 const NetShape& shape)
    : mode_(mode),
      critic_(std::move(critic)),
      cfg_(cfg),
      shape_(shape),
      seed_(seed),
      actor_opt_{cfg.lr, cfg.momentum, {}},
      critic_opt_{cfg.lr, cfg.momentum, {}},
      memory_(static_cast<std::size_t>(cfg.memory)),
      rng_(make_rng(seed, "learner")) {
  cfg_.validate();
  if (mode_ == Mode::kFrozenCritic) require(critic_.net().num_layers() > 0, "learner: frozen mode needs a critic");
}

void Learner::set_task(std::shared_ptr<const mdp::Task> task, const std::string& name) {
  require(task != nullptr, "learner: null task");
  const int N = task->inst.num_transmitters();
  if (mode_ == Mode::kFrozenCritic) {
    require(critic_.input_channels() == critic_channels(N), "learner: critic was built for another transmitter set");
  } else {
    critic_ = MetaCritic(N, cfg_.t_bar, false, derive_seed(seed_, "critic", task_counter_), shape_);
    critic_opt_ = nn::Sgd{cfg_.lr, cfg_.momentum, {}};
  }
  actor_ = TaskActor(N, 0, cfg_.var_floor, derive_seed(seed_, "actor", task_counter_), shape_);
  actor_opt_ = nn::Sgd{cfg_.lr, cfg_.momentum, {}};
  memory_.clear();
  task_ = std::move(task);
  name_ = name.empty() ? task_->name : name;
  reward_scale_ = reward_scale_for(*task_);
  ++task_counter_;
}

std::vector<TraceRow> Learner::run_episode(int episode) {
  require(task_ != nullptr, "learner: no task set");
  std::vector<TraceRow> rows;
  if (diverged_) return rows;
  Rollout ro;
  ro.task = task_;
  ro.name = name_;
  ro.reward_scale = reward_scale_;
  ro.actor = &actor_;
  begin_episode(ro, rng_);
  while (ro.state.t < task_->inst.horizon) {
    const StepRecord& rec = act(critic_, ro, memory_, cfg_.wolpertinger_m, rng_);
    TraceRow row = row_for(ro, rec, episode);
    row.actor_loss = update_actor(critic_, ro, actor_opt_, memory_, cfg_.batch, rng_);
    const auto batches = critic_batches(critic_, memory_, cfg_.batch, rng_);
    if (!batches.empty()) {
      if (mode_ == Mode::kActorCritic) {
        const auto b = critic_loss_and_grad(critic_, batches, cfg_.gamma, cfg_.td_form);
        row.td_loss = b.loss;
        if (!std::isfinite(b.loss) || !critic_opt_.step(critic_.net(), b.grad)) diverged_ = true;
      } else {
        double loss = 0.0;
        for (const auto& batch : batches) {
          for (const auto& s : batch) {
            const double q0 = critic_.q(s.x, s.segment);
            const double q1 = s.done ? 0.0 : critic_.q(s.x_next, s.segment_next);
            const double d = cfg_.td_form == TdForm::kBootstrap ? q0 - s.r - cfg_.gamma * q1
                                                                : q1 - s.r - cfg_.gamma * q0;
            loss += d * d / (static_cast<double>(batches.size()) * static_cast<double>(batch.size()));
          }
        }
        row.td_loss = loss;
        if (!std::isfinite(loss)) diverged_ = true;
      }
    }
    if (!std::isfinite(row.actor_loss)) diverged_ = true;
    rows.push_back(row);
    if (diverged_) break;
  }
  return rows;
}

AdaptResult online_adapt(const MetaCritic& critic, std::shared_ptr<const mdp::Task> task, const TrainConfig& cfg,
                         const NetShape& shape) {
  Learner learner(Learner::Mode::kFrozenCritic, critic, cfg, cfg.seed, shape);
  learner.set_task(std::move(task));
  AdaptResult res;
  for (int ep = 0; ep < cfg.episodes && !learner.diverged(); ++ep) {
    auto rows = learner.run_episode(ep);
    res.trace.insert(res.trace.end(), rows.begin(), rows.end());
  }
  res.actor = learner.actor();
  res.diverged = learner.diverged();
  return res;
}

AcResult ac_baseline_train(std::shared_ptr<const mdp::Task> task, const TrainConfig& cfg, const NetShape& shape) {
  Learner learner(Learner::Mode::kActorCritic, MetaCritic(), cfg, cfg.seed, shape);
  learner.set_task(std::move(task));
  AcResult res;
  for (int ep = 0; ep < cfg.episodes && !learner.diverged(); ++ep) {
    auto rows = learner.run_episode(ep);
    res.trace.insert(res.trace.end(), rows.begin(), rows.end());
  }
  res.critic = learner.critic();
  res.actor = learner.actor();
  res.diverged = learner.diverged();
  return res;
}

}  // namespace leosched::agents
