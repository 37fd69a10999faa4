#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "leosched/common.hpp"

namespace leosched::nn {

enum class Activation { kIdentity, kRelu, kTanh };

enum class LayerType { kDense, kConv1d, kSumPool, kMeanPool, kLstm };

const char* layer_type_name(LayerType t);

/// Shapes are (rows, cols) = (features, positions). Dense takes any input with
/// `in` entries (flattened column-major) and emits out x 1. Conv1d keeps the
/// position count (kernel `kernel`, zero "same" padding, stride 1). Pools
/// reduce over positions. LSTM reads the columns of an in x L input in order
/// and emits the final hidden state (hidden x 1).
struct LayerSpec {
  LayerType type = LayerType::kDense;
  int in = 0;
  int out = 0;
  int kernel = 3;
  Activation act = Activation::kIdentity;
  std::string name;

  std::size_t param_count() const;
};

LayerSpec dense(int in, int out, Activation act = Activation::kIdentity);
LayerSpec conv1d(int in_channels, int out_channels, Activation act = Activation::kRelu, int kernel = 3);
LayerSpec sum_pool(int channels);
LayerSpec mean_pool(int channels);
LayerSpec lstm(int in, int hidden);

/// Per-layer intermediate values kept by a forward pass.
struct LayerCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd pre;   // pre-activation (dense/conv)
  Eigen::MatrixXd output;
  // LSTM: per step gates (4H x L), cell states (H x L+1), hidden (H x L+1).
  Eigen::MatrixXd gates;
  Eigen::MatrixXd cells;
  Eigen::MatrixXd hidden;
};

struct Cache {
  std::uint64_t version = 0;
  int first = 0;
  int last = 0;
  std::vector<LayerCache> layers;
};

/// Sequential stack of layers sharing one flat parameter vector. Callers may
/// run any contiguous sub-range of the stack, which lets a model wire several
/// branches out of one parameter store.
class Network {
 public:
  Network() = default;
  Network(std::vector<LayerSpec> specs, std::uint64_t seed);

  const std::vector<LayerSpec>& specs() const { return specs_; }
  int num_layers() const { return static_cast<int>(specs_.size()); }
  std::size_t num_params() const { return static_cast<std::size_t>(params_.size()); }
  const Eigen::VectorXd& params() const { return params_; }
  /// Replaces all parameters; bumps the version.
  void set_params(const Eigen::VectorXd& p);
  /// Parameters of layer `i` as a view into the flat store.
  Eigen::Map<const Eigen::VectorXd> layer_params(int i) const;
  std::size_t layer_offset(int i) const { return offsets_[i]; }
  /// Process-unique tag that changes whenever parameters change; caches
  /// carrying another tag are stale.
  std::uint64_t version() const { return version_; }

  /// Runs layers [first, last). A non-null cache receives what backward needs.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, Cache* cache = nullptr, int first = 0,
                          int last = -1) const;
  /// Accumulates d(loss)/d(params) of the cached range into `grad` (length
  /// num_params) and returns d(loss)/d(input).
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& d_output,
                           Eigen::VectorXd& grad) const;

  bool finite() const { return params_.allFinite(); }

 private:
  std::vector<LayerSpec> specs_;
  std::vector<std::size_t> offsets_;
  Eigen::VectorXd params_;
  std::uint64_t version_ = 0;
};

struct GradientBundle {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

/// omega <- omega - lr * grad. Returns false (and leaves the network
/// untouched) if the gradient has a non-finite entry.
bool sgd_step(Network& net, const Eigen::VectorXd& grad, double lr);

/// Heavy-ball variant: v <- momentum * v + grad, omega <- omega - lr * v.
struct Sgd {
  double lr = 1e-3;
  double momentum = 0.0;
  Eigen::VectorXd velocity;

  bool step(Network& net, const Eigen::VectorXd& grad);
};

/// Variance of the policy head: softplus(raw) + floor, and its derivative.
double positive_variance(double raw, double floor);
double positive_variance_grad(double raw);

struct GaussianSample {
  double action = 0.0;
  double log_density = 0.0;
};

double gaussian_log_density(double a, double mu, double var);
/// d log N(a; mu, var) / d mu and / d var.
double gaussian_log_density_dmu(double a, double mu, double var);
double gaussian_log_density_dvar(double a, double mu, double var);
GaussianSample gaussian_policy_sample(double mu, double var, Rng& rng);

/// Writes `<prefix>.bin` (little-endian float64 parameters) and
/// `<prefix>.json` (layer specs, parameter count, content hash).
void save_checkpoint(const Network& net, const std::string& prefix, const nlohmann::json& extra = {});
Network load_checkpoint(const std::string& prefix);
nlohmann::json manifest(const Network& net);
/// FNV-1a over the raw parameter bytes.
std::uint64_t param_hash(const Network& net);

}  // namespace leosched::nn
