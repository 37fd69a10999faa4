#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "leosched/mdp.hpp"
#include "leosched/nn.hpp"

namespace leosched::agents {

/// Orientation of the temporal-difference residual.
///   kBootstrap: delta = Q(s,a,D) - r - gamma Q(s',a',D')
///   kLiteral:   delta = Q(s',a',D') - r - gamma Q(s,a,D)
/// Both differentiate through every Q term.
enum class TdForm { kBootstrap, kLiteral };

TdForm parse_td_form(const std::string& name);
const char* td_form_name(TdForm form);

struct TrainConfig {
  double lr = 1e-3;
  double momentum = 0.0;
  int batch = 128;
  double gamma = 0.9;
  int memory = 10000;
  int wolpertinger_m = 10;
  int tasks_per_episode = 4;
  int t_bar = 5;
  int episodes = 100;
  double var_floor = 1e-3;
  TdForm td_form = TdForm::kBootstrap;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Layer widths. Defaults follow the reference architecture (conv branch to
/// 32 features, 32 LSTM cells, 64-unit head).
struct NetShape {
  int conv = 32;
  int lstm = 32;
  int head = 64;
  int actor_conv = 16;
  int actor_hidden = 32;
};

// ---------------------------------------------------------------------------
// Featurization. Networks see one column per device, so the same weights
// serve any device count.

/// Per device: N link-quality channels, relative data gap b/D - 1, served
/// flag, remaining-time fraction and a constant 1.
int state_channels(int num_transmitters);
/// State channels plus, for the candidate action: N incidence channels, rate
/// fraction, post-action gap, newly-served flag and the drop in squared gap.
int critic_channels(int num_transmitters);
inline constexpr int kSegmentFeatures = 8;

Eigen::MatrixXd state_features(const mdp::Task& task, const mdp::MdpState& s);
Eigen::MatrixXd critic_features(const mdp::Task& task, const mdp::MdpState& s,
                                const Eigen::MatrixXd& state_feat, int a);
/// Summary of one transition for the LSTM branch; `reward_scale` divides r.
Eigen::VectorXd segment_features(const mdp::Task& task, const mdp::Transition& tr,
                                 double reward_scale);
/// Columns for steps t - t_bar .. t - 1 of `history`, zero columns before the
/// episode start.
Eigen::MatrixXd segment_window(const std::vector<Eigen::VectorXd>& history, int t, int t_bar);

// ---------------------------------------------------------------------------

class MetaCritic {
 public:
  MetaCritic() = default;
  MetaCritic(int num_transmitters, int t_bar, bool use_lstm, std::uint64_t seed,
             const NetShape& shape = {});

  const nn::Network& net() const { return hnn_; }
  nn::Network& net() { return hnn_; }
  int t_bar() const { return t_bar_; }
  bool uses_lstm() const { return use_lstm_; }
  int input_channels() const { return channels_; }

  /// Q for critic features x (critic_channels x K) and a kSegmentFeatures x
  /// t_bar segment (ignored without the LSTM branch).
  double q(const Eigen::MatrixXd& x, const Eigen::MatrixXd& segment) const;
  /// Adds scale * dQ/domega to grad and returns Q.
  double q_backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& segment, double scale,
                    Eigen::VectorXd& grad) const;

 private:
  void check(const Eigen::MatrixXd& x, const Eigen::MatrixXd& segment) const;

  nn::Network hnn_;
  int t_bar_ = 1;
  bool use_lstm_ = true;
  int channels_ = 0;
  int conv_end_ = 0;
  int lstm_end_ = 0;
};

double critic_q(const MetaCritic& mc, const Eigen::MatrixXd& x, const Eigen::MatrixXd& segment);

struct Policy {
  double mu = 0.0;   // in [0, 1]; proto-action is mu * (G - 1)
  double var = 1.0;  // >= floor
};

class TaskActor {
 public:
  TaskActor() = default;
  TaskActor(int num_transmitters, int task, double var_floor, std::uint64_t seed,
            const NetShape& shape = {});

  Policy policy(const Eigen::MatrixXd& state_feat) const;
  /// Adds scale * d log pi(u | s) / dtheta to grad and returns log pi(u | s).
  double log_prob_backward(const Eigen::MatrixXd& state_feat, double u, double scale,
                           Eigen::VectorXd& grad) const;

  nn::Network net;
  int task = 0;
  double var_floor = 1e-3;
};

// ---------------------------------------------------------------------------
// Wolpertinger action mapping.

/// Closest catalog index to a_hat, ties to the lower index.
int simple_action(double a_hat, int num_groups);
/// The M indices nearest to a_hat ordered by (distance, index).
std::vector<int> nearest_indices(double a_hat, int num_groups, int m);

struct Selection {
  int action = 0;
  double q = 0.0;
  int simple = 0;
  double q_simple = 0.0;
};

/// argmax of q_of over the M nearest indices, ties to the lowest index.
Selection wolpertinger_select(const std::function<double(int)>& q_of, double a_hat,
                              int num_groups, int m);
Selection wolpertinger_select(const MetaCritic& mc, const mdp::Task& task,
                              const mdp::MdpState& s, const Eigen::MatrixXd& segment,
                              double a_hat, int m);
/// Expected uplift of the best of M candidates over the simple action when
/// M - 1 of them are uniform on +-kappa around it.
double wolpertinger_expected_gain(double kappa, int m);

// ---------------------------------------------------------------------------
// Losses.

struct TdSample {
  Eigen::MatrixXd x;
  Eigen::MatrixXd segment;
  Eigen::MatrixXd x_next;
  Eigen::MatrixXd segment_next;
  double r = 0.0;
  bool done = false;
};

/// (1/I) sum_i mean_j delta_ij^2 over per-task batches.
nn::GradientBundle critic_loss_and_grad(const MetaCritic& mc,
                                        const std::vector<std::vector<TdSample>>& batches,
                                        double gamma, TdForm form = TdForm::kBootstrap);

struct ActorSample {
  Eigen::MatrixXd state;    // state features
  double u = 0.0;           // stored Gaussian draw
  Eigen::MatrixXd x;        // critic features of the executed action
  Eigen::MatrixXd segment;
};

/// Loss -mean Q and gradient -mean Q grad log pi(u|s) with the given Q values.
nn::GradientBundle actor_surrogate_grad(const TaskActor& actor,
                                        const std::vector<Eigen::MatrixXd>& states,
                                        const std::vector<double>& us,
                                        const std::vector<double>& qs);
/// Same with Q from the (frozen) critic.
nn::GradientBundle actor_loss_and_grad(const TaskActor& actor, const std::vector<ActorSample>& batch,
                                       const MetaCritic& mc);

// ---------------------------------------------------------------------------
// Replay memory.

struct StepRecord {
  mdp::Transition tr;
  double u = 0.0;
  double r_scaled = 0.0;
  Eigen::MatrixXd state_feat;
  Eigen::MatrixXd critic_x;
  Eigen::VectorXd seg_feat;
};

struct EpisodeLog {
  int task = 0;
  std::vector<StepRecord> steps;
  std::vector<Eigen::VectorXd> seg_history;
};

struct MemoryEntry {
  std::shared_ptr<const EpisodeLog> episode;
  int t = 0;
  int task = 0;
};

/// FIFO ring of transitions; each entry points back into its episode so
/// segments and the next action can be recovered.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity = 10000);

  void push(MemoryEntry e);
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const MemoryEntry& operator[](std::size_t i) const { return entries_[i]; }
  /// n draws with replacement.
  std::vector<const MemoryEntry*> sample(std::size_t n, Rng& rng) const;
  /// n draws with replacement among entries of `task`; empty if none.
  std::vector<const MemoryEntry*> sample_task(int task, std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::deque<MemoryEntry> entries_;
};

TdSample td_sample(const MemoryEntry& e, int t_bar, bool with_segment);

// ---------------------------------------------------------------------------
// Training.

struct TraceRow {
  int episode = 0;
  int step = 0;
  std::string task;
  double td_loss = 0.0;
  double actor_loss = 0.0;
  double reward = 0.0;
  double objective = 0.0;  // weighted gap after the step
};

void write_trace_csv(const std::vector<TraceRow>& rows, std::ostream& out);

struct TrainResult {
  MetaCritic critic;
  std::vector<TraceRow> trace;
  bool diverged = false;
};

/// Phase 1: fresh actors for I sampled tasks each episode, one critic update
/// per environment step.
TrainResult meta_train(const std::vector<std::shared_ptr<const mdp::Task>>& pool,
                       const TrainConfig& cfg, const NetShape& shape = {});

/// Single-task learner. In kFrozenCritic mode only the actor learns; in
/// kActorCritic mode both learn and a task change re-initializes both.
class Learner {
 public:
  enum class Mode { kFrozenCritic, kActorCritic };

  Learner(Mode mode, MetaCritic critic, const TrainConfig& cfg, std::uint64_t seed,
          const NetShape& shape = {});

  /// Switches to a new task: fresh actor, cleared memory (and a fresh
  /// critic in kActorCritic mode).
  void set_task(std::shared_ptr<const mdp::Task> task, const std::string& name = "");
  /// Runs one episode of T steps and returns its trace rows. Stops early
  /// (flagging divergence) if a loss or gradient turns non-finite.
  std::vector<TraceRow> run_episode(int episode);

  bool diverged() const { return diverged_; }
  const MetaCritic& critic() const { return critic_; }
  const TaskActor& actor() const { return actor_; }

 private:
  Mode mode_;
  MetaCritic critic_;
  TrainConfig cfg_;
  NetShape shape_;
  std::uint64_t seed_;
  std::uint64_t task_counter_ = 0;
  std::shared_ptr<const mdp::Task> task_;
  std::string name_;
  double reward_scale_ = 1.0;
  TaskActor actor_;
  nn::Sgd actor_opt_;
  nn::Sgd critic_opt_;
  ReplayMemory memory_;
  Rng rng_;
  bool diverged_ = false;
};

struct AdaptResult {
  TaskActor actor;
  std::vector<TraceRow> trace;
  bool diverged = false;
};

/// Phase 2: actor-only training against a frozen critic for cfg.episodes.
AdaptResult online_adapt(const MetaCritic& critic, std::shared_ptr<const mdp::Task> task,
                         const TrainConfig& cfg, const NetShape& shape = {});

struct AcResult {
  MetaCritic critic;
  TaskActor actor;
  std::vector<TraceRow> trace;
  bool diverged = false;
};

/// Plain actor-critic (no LSTM branch) trained from scratch on one task.
AcResult ac_baseline_train(std::shared_ptr<const mdp::Task> task, const TrainConfig& cfg,
                           const NetShape& shape = {});

}  // namespace leosched::agents
