#include "leosched/nn.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace leosched::nn {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat activate(const Mat& pre, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return pre.cwiseMax(0.0);
    case Activation::kTanh:
      return pre.array().tanh().matrix();
    case Activation::kIdentity:
      break;
  }
  return pre;
}

/// d(out)/d(pre) applied elementwise to an upstream gradient.
Mat activate_back(const Mat& d_out, const Mat& pre, const Mat& out, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return d_out.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
    case Activation::kTanh:
      return d_out.cwiseProduct((1.0 - out.array().square()).matrix());
    case Activation::kIdentity:
      break;
  }
  return d_out;
}

std::uint64_t next_version() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

std::string layer_label(const LayerSpec& s, int i) {
  return (s.name.empty() ? std::string(layer_type_name(s.type)) : s.name) + "[" + std::to_string(i) + "]";
}

/// im2col for "same" 1-D convolution: (cin * k) x P.
Mat unfold(const Mat& x, int k) {
  const int cin = static_cast<int>(x.rows());
  const int P = static_cast<int>(x.cols());
  const int half = k / 2;
  Mat cols = Mat::Zero(static_cast<Eigen::Index>(cin) * k, P);
  for (int p = 0; p < P; ++p) {
    for (int j = 0; j < k; ++j) {
      const int q = p + j - half;
      if (q >= 0 && q < P) cols.block(static_cast<Eigen::Index>(j) * cin, p, cin, 1) = x.col(q);
    }
  }
  return cols;
}

Mat fold(const Mat& cols, int cin, int k, int P) {
  const int half = k / 2;
  Mat x = Mat::Zero(cin, P);
  for (int p = 0; p < P; ++p) {
    for (int j = 0; j < k; ++j) {
      const int q = p + j - half;
      if (q >= 0 && q < P) x.col(q) += cols.block(static_cast<Eigen::Index>(j) * cin, p, cin, 1);
    }
  }
  return x;
}

}  // namespace

const char* layer_type_name(LayerType t) {
  switch (t) {
    case LayerType::kDense:
      return "dense";
    case LayerType::kConv1d:
      return "conv1d";
    case LayerType::kSumPool:
      return "sum_pool";
    case LayerType::kMeanPool:
      return "mean_pool";
    case LayerType::kLstm:
      return "lstm";
  }
  return "?";
}

std::size_t LayerSpec::param_count() const {
  switch (type) {
    case LayerType::kDense:
      return static_cast<std::size_t>(out) * in + out;
    case LayerType::kConv1d:
      return static_cast<std::size_t>(out) * in * kernel + out;
    case LayerType::kLstm:
      return static_cast<std::size_t>(4 * out) * (in + out) + 4 * out;
    case LayerType::kSumPool:
    case LayerType::kMeanPool:
      return 0;
  }
  return 0;
}

LayerSpec dense(int in, int out, Activation act) { return {LayerType::kDense, in, out, 1, act, ""}; }
LayerSpec conv1d(int in_channels, int out_channels, Activation act, int kernel) {
  return {LayerType::kConv1d, in_channels, out_channels, kernel, act, ""};
}
LayerSpec sum_pool(int channels) { return {LayerType::kSumPool, channels, channels, 1, Activation::kIdentity, ""}; }
LayerSpec mean_pool(int channels) { return {LayerType::kMeanPool, channels, channels, 1, Activation::kIdentity, ""}; }
LayerSpec lstm(int in, int hidden) { return {LayerType::kLstm, in, hidden, 1, Activation::kIdentity, ""}; }

Network::Network(std::vector<LayerSpec> specs, std::uint64_t seed)
    : specs_(std::move(specs)), version_(next_version()) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& s = specs_[i];
    require(s.in >= 1 && s.out >= 1, "network: layer " + layer_label(s, static_cast<int>(i)) + " needs positive sizes");
    if (s.type == LayerType::kConv1d) {
      require(s.kernel >= 1 && s.kernel % 2 == 1, "network: conv kernel must be odd");
    }
    offsets_.push_back(total);
    total += s.param_count();
  }
  offsets_.push_back(total);
  params_ = Vec::Zero(static_cast<Eigen::Index>(total));
  Rng rng(seed);
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& s = specs_[i];
    std::size_t weights = 0;
    double fan_in = s.in;
    double fan_out = s.out;
    switch (s.type) {
      case LayerType::kDense:
        weights = static_cast<std::size_t>(s.out) * s.in;
        break;
      case LayerType::kConv1d:
        weights = static_cast<std::size_t>(s.out) * s.in * s.kernel;
        fan_in = s.in * s.kernel;
        break;
      case LayerType::kLstm:
        weights = static_cast<std::size_t>(4 * s.out) * (s.in + s.out);
        fan_in = s.in + s.out;
        fan_out = s.out;
        break;
      default:
        break;
    }
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t j = 0; j < weights; ++j) params_[offsets_[i] + j] = bound * (2.0 * uniform01(rng) - 1.0);
    if (s.type == LayerType::kLstm) {
      // Forget-gate bias of 1.
      for (int h = 0; h < s.out; ++h) params_[offsets_[i] + weights + s.out + h] = 1.0;
    }
  }
}

void Network::set_params(const Eigen::VectorXd& p) {
  require(p.size() == params_.size(), "network: parameter vector has the wrong length");
  params_ = p;
  version_ = next_version();
}

Eigen::Map<const Eigen::VectorXd> Network::layer_params(int i) const {
  return {params_.data() + offsets_[i], static_cast<Eigen::Index>(offsets_[i + 1] - offsets_[i])};
}

Eigen::MatrixXd Network::forward(const Eigen::MatrixXd& input, Cache* cache, int first, int last) const {
  if (last < 0) last = num_layers();
  require(first >= 0 && first <= last && last <= num_layers(), "network: bad layer range");
  if (cache) {
    cache->version = version_;
    cache->first = first;
    cache->last = last;
    cache->layers.assign(last - first, {});
  }
  Mat x = input;
  for (int i = first; i < last; ++i) {
    const auto& s = specs_[i];
    const double* p = params_.data() + offsets_[i];
    LayerCache* lc = cache ? &cache->layers[i - first] : nullptr;
    if (lc) lc->input = x;
    Mat y;
    switch (s.type) {
      case LayerType::kDense: {
        if (x.size() != s.in) {
          throw ValidationError("network: layer " + layer_label(s, i) + " expects " + std::to_string(s.in) +
                                " inputs, got " + std::to_string(x.size()));
        }
        Eigen::Map<const Mat> W(p, s.out, s.in);
        Eigen::Map<const Vec> b(p + static_cast<std::size_t>(s.out) * s.in, s.out);
        const Vec v = Eigen::Map<const Vec>(x.data(), x.size());
        Mat pre = W * v + b;
        y = activate(pre, s.act);
        if (lc) lc->pre = std::move(pre);
        break;
      }
      case LayerType::kConv1d: {
        if (x.rows() != s.in || x.cols() < 1) {
          throw ValidationError("network: layer " + layer_label(s, i) + " expects " + std::to_string(s.in) +
                                " channels, got " + std::to_string(x.rows()));
        }
        const auto wsize = static_cast<std::size_t>(s.out) * s.in * s.kernel;
        Eigen::Map<const Mat> W(p, s.out, static_cast<Eigen::Index>(s.in) * s.kernel);
        Eigen::Map<const Vec> b(p + wsize, s.out);
        Mat pre = W * unfold(x, s.kernel);
        pre.colwise() += b;
        y = activate(pre, s.act);
        if (lc) lc->pre = std::move(pre);
        break;
      }
      case LayerType::kSumPool:
      case LayerType::kMeanPool: {
        if (x.rows() != s.in || x.cols() < 1) {
          throw ValidationError("network: layer " + layer_label(s, i) + " expects " + std::to_string(s.in) +
                                " channels, got " + std::to_string(x.rows()));
        }
        y = x.rowwise().sum();
        if (s.type == LayerType::kMeanPool) y /= static_cast<double>(x.cols());
        break;
      }
      case LayerType::kLstm: {
        if (x.rows() != s.in || x.cols() < 1) {
          throw ValidationError("network: layer " + layer_label(s, i) + " expects " + std::to_string(s.in) +
                                " features per step, got " + std::to_string(x.rows()));
        }
        const int H = s.out;
        const int L = static_cast<int>(x.cols());
        const auto wsize = static_cast<std::size_t>(4 * H) * (s.in + H);
        Eigen::Map<const Mat> W(p, 4 * H, s.in + H);
        Eigen::Map<const Vec> b(p + wsize, 4 * H);
        Mat gates(4 * H, L);
        Mat cells = Mat::Zero(H, L + 1);
        Mat hidden = Mat::Zero(H, L + 1);
        Vec xh(s.in + H);
        for (int l = 0; l < L; ++l) {
          xh.head(s.in) = x.col(l);
          xh.tail(H) = hidden.col(l);
          Vec z = W * xh + b;
          for (int h = 0; h < H; ++h) {
            z[h] = sigmoid(z[h]);
            z[H + h] = sigmoid(z[H + h]);
            z[2 * H + h] = std::tanh(z[2 * H + h]);
            z[3 * H + h] = sigmoid(z[3 * H + h]);
          }
          gates.col(l) = z;
          cells.col(l + 1) = z.segment(H, H).cwiseProduct(cells.col(l)) + z.head(H).cwiseProduct(z.segment(2 * H, H));
          hidden.col(l + 1) = z.tail(H).cwiseProduct(cells.col(l + 1).array().tanh().matrix());
        }
        y = hidden.col(L);
        if (lc) {
          lc->gates = std::move(gates);
          lc->cells = std::move(cells);
          lc->hidden = std::move(hidden);
        }
        break;
      }
    }
    if (lc) lc->output = y;
    x = std::move(y);
  }
  return x;
}

Eigen::MatrixXd Network::backward(const Cache& cache, const Eigen::MatrixXd& d_output, Eigen::VectorXd& grad) const {
  if (cache.version != version_) {
    throw std::logic_error("network: stale cache (parameters changed since the forward pass)");
  }
  require(grad.size() == params_.size(), "network: gradient buffer has the wrong length");
  Mat d = d_output;
  for (int i = cache.last - 1; i >= cache.first; --i) {
    const auto& s = specs_[i];
    const LayerCache& lc = cache.layers[i - cache.first];
    const double* p = params_.data() + offsets_[i];
    double* g = grad.data() + offsets_[i];
    require(d.rows() == lc.output.rows() && d.cols() == lc.output.cols(),
            "network: upstream gradient shape mismatch at layer " + layer_label(s, i));
    switch (s.type) {
      case LayerType::kDense: {
        const Mat dpre = activate_back(d, lc.pre, lc.output, s.act);
        Eigen::Map<const Mat> W(p, s.out, s.in);
        Eigen::Map<Mat> dW(g, s.out, s.in);
        Eigen::Map<Vec> db(g + static_cast<std::size_t>(s.out) * s.in, s.out);
        const Eigen::Map<const Vec> v(lc.input.data(), lc.input.size());
        dW.noalias() += dpre * v.transpose();
        db += dpre.col(0);
        Mat dx = W.transpose() * dpre;
        dx.resize(lc.input.rows(), lc.input.cols());
        d = std::move(dx);
        break;
      }
      case LayerType::kConv1d: {
        const Mat dpre = activate_back(d, lc.pre, lc.output, s.act);
        const auto wsize = static_cast<std::size_t>(s.out) * s.in * s.kernel;
        Eigen::Map<const Mat> W(p, s.out, static_cast<Eigen::Index>(s.in) * s.kernel);
        Eigen::Map<Mat> dW(g, s.out, static_cast<Eigen::Index>(s.in) * s.kernel);
        Eigen::Map<Vec> db(g + wsize, s.out);
        dW.noalias() += dpre * unfold(lc.input, s.kernel).transpose();
        db += dpre.rowwise().sum();
        d = fold(W.transpose() * dpre, s.in, s.kernel, static_cast<int>(lc.input.cols()));
        break;
      }
      case LayerType::kSumPool:
      case LayerType::kMeanPool: {
        const double scale = s.type == LayerType::kMeanPool ? 1.0 / static_cast<double>(lc.input.cols()) : 1.0;
        d = (d.col(0) * scale).replicate(1, lc.input.cols());
        break;
      }
      case LayerType::kLstm: {
        const int H = s.out;
        const int L = static_cast<int>(lc.input.cols());
        const auto wsize = static_cast<std::size_t>(4 * H) * (s.in + H);
        Eigen::Map<const Mat> W(p, 4 * H, s.in + H);
        Eigen::Map<Mat> dW(g, 4 * H, s.in + H);
        Eigen::Map<Vec> db(g + wsize, 4 * H);
        Mat dx(s.in, L);
        Vec dh = d.col(0);
        Vec dc = Vec::Zero(H);
        Vec dz(4 * H);
        Vec xh(s.in + H);
        for (int l = L - 1; l >= 0; --l) {
          const auto z = lc.gates.col(l);
          const Vec c = lc.cells.col(l + 1);
          const Vec tc = c.array().tanh();
          for (int h = 0; h < H; ++h) {
            const double ig = z[h];
            const double fg = z[H + h];
            const double gg = z[2 * H + h];
            const double og = z[3 * H + h];
            const double dcell = dc[h] + dh[h] * og * (1.0 - tc[h] * tc[h]);
            dz[h] = dcell * gg * ig * (1.0 - ig);
            dz[H + h] = dcell * lc.cells(h, l) * fg * (1.0 - fg);
            dz[2 * H + h] = dcell * ig * (1.0 - gg * gg);
            dz[3 * H + h] = dh[h] * tc[h] * og * (1.0 - og);
            dc[h] = dcell * fg;
          }
          xh.head(s.in) = lc.input.col(l);
          xh.tail(H) = lc.hidden.col(l);
          dW.noalias() += dz * xh.transpose();
          db += dz;
          const Vec dxh = W.transpose() * dz;
          dx.col(l) = dxh.head(s.in);
          dh = dxh.tail(H);
        }
        d = std::move(dx);
        break;
      }
    }
  }
  return d;
}

bool sgd_step(Network& net, const Eigen::VectorXd& grad, double lr) {
  require(lr > 0, "sgd: learning rate must be positive");
  require(grad.size() == net.params().size(), "sgd: gradient length mismatch");
  if (!grad.allFinite()) return false;
  net.set_params(net.params() - lr * grad);
  return true;
}

bool Sgd::step(Network& net, const Eigen::VectorXd& grad) {
  require(lr > 0, "sgd: learning rate must be positive");
  require(momentum >= 0 && momentum < 1, "sgd: momentum must lie in [0,1)");
  require(grad.size() == net.params().size(), "sgd: gradient length mismatch");
  if (!grad.allFinite()) return false;
  if (momentum == 0.0) return sgd_step(net, grad, lr);
  if (velocity.size() != grad.size()) velocity = Eigen::VectorXd::Zero(grad.size());
  velocity = momentum * velocity + grad;
  net.set_params(net.params() - lr * velocity);
  return true;
}

double positive_variance(double raw, double floor) {
  const double sp = raw > 30.0 ? raw : std::log1p(std::exp(raw));
  return sp + floor;
}

double positive_variance_grad(double raw) { return 1.0 / (1.0 + std::exp(-raw)); }

double gaussian_log_density(double a, double mu, double var) {
  const double d = a - mu;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - d * d / (2.0 * var);
}

double gaussian_log_density_dmu(double a, double mu, double var) { return (a - mu) / var; }

double gaussian_log_density_dvar(double a, double mu, double var) {
  const double d = a - mu;
  return -0.5 / var + d * d / (2.0 * var * var);
}

GaussianSample gaussian_policy_sample(double mu, double var, Rng& rng) {
  require(var > 0, "gaussian policy: variance must be positive");
  GaussianSample s;
  s.action = mu + std::sqrt(var) * standard_normal(rng);
  s.log_density = gaussian_log_density(s.action, mu, var);
  return s;
}

namespace {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu:
      return "relu";
    case Activation::kTanh:
      return "tanh";
    case Activation::kIdentity:
      break;
  }
  return "identity";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  if (s == "identity") return Activation::kIdentity;
  throw ValidationError("checkpoint: unknown activation '" + s + "'");
}

LayerType parse_layer_type(const std::string& s) {
  for (auto t : {LayerType::kDense, LayerType::kConv1d, LayerType::kSumPool, LayerType::kMeanPool, LayerType::kLstm}) {
    if (s == layer_type_name(t)) return t;
  }
  throw ValidationError("checkpoint: unknown layer type '" + s + "'");
}

}  // namespace

std::uint64_t param_hash(const Network& net) {
  std::uint64_t h = 1469598103934665603ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(net.params().data());
  for (std::size_t i = 0; i < net.num_params() * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

nlohmann::json manifest(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (int i = 0; i < net.num_layers(); ++i) {
    const auto& s = net.specs()[i];
    layers.push_back({{"type", layer_type_name(s.type)},
                      {"in", s.in},
                      {"out", s.out},
                      {"kernel", s.kernel},
                      {"activation", activation_name(s.act)},
                      {"name", s.name},
                      {"offset", net.layer_offset(i)},
                      {"count", s.param_count()}});
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(param_hash(net)));
  return {{"layers", layers}, {"num_params", net.num_params()}, {"hash", hex}};
}

void save_checkpoint(const Network& net, const std::string& prefix, const nlohmann::json& extra) {
  static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");
  std::ofstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("checkpoint: cannot write " + prefix + ".bin");
  bin.write(reinterpret_cast<const char*>(net.params().data()),
            static_cast<std::streamsize>(net.num_params() * sizeof(double)));
  auto m = manifest(net);
  if (!extra.is_null()) m["extra"] = extra;
  std::ofstream js(prefix + ".json");
  if (!js) throw std::runtime_error("checkpoint: cannot write " + prefix + ".json");
  js << m.dump(2) << '\n';
}

Network load_checkpoint(const std::string& prefix) {
  std::ifstream js(prefix + ".json");
  if (!js) throw std::runtime_error("checkpoint: cannot read " + prefix + ".json");
  const auto m = nlohmann::json::parse(js);
  std::vector<LayerSpec> specs;
  for (const auto& l : m.at("layers")) {
    LayerSpec s;
    s.type = parse_layer_type(l.at("type").get<std::string>());
    s.in = l.at("in").get<int>();
    s.out = l.at("out").get<int>();
    s.kernel = l.at("kernel").get<int>();
    s.act = parse_activation(l.at("activation").get<std::string>());
    s.name = l.value("name", "");
    specs.push_back(s);
  }
  Network net(specs, 0);
  const auto n = m.at("num_params").get<std::size_t>();
  require(n == net.num_params(), "checkpoint: parameter count does not match the layer specs");
  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("checkpoint: cannot read " + prefix + ".bin");
  Eigen::VectorXd p(static_cast<Eigen::Index>(n));
  bin.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (bin.gcount() != static_cast<std::streamsize>(n * sizeof(double))) {
    throw std::runtime_error("checkpoint: " + prefix + ".bin is truncated");
  }
  net.set_params(p);
  return net;
}

}  // namespace leosched::nn
