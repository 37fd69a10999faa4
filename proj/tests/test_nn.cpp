#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "gradcheck.hpp"
#include "leosched/nn.hpp"

using namespace leosched;
using namespace leosched::nn;

namespace {

Eigen::MatrixXd random_matrix(int r, int c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return m;
}

/// Loss = <w, net(x)>; checks parameter and input gradients.
void check_gradients(const Network& proto, const Eigen::MatrixXd& x, std::uint64_t seed) {
  Rng rng(seed);
  Network net = proto;
  const Eigen::MatrixXd y0 = net.forward(x);
  const Eigen::MatrixXd w = random_matrix(static_cast<int>(y0.rows()), static_cast<int>(y0.cols()), rng);
  Cache cache;
  net.forward(x, &cache);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_params()));
  const Eigen::MatrixXd dx = net.backward(cache, w, grad);
  auto loss_params = [&](const Eigen::VectorXd& p) {
    Network n = proto;
    n.set_params(p);
    return n.forward(x).cwiseProduct(w).sum();
  };
  CHECK(testing::gradient_error(loss_params, net.params(), grad) <= 1e-4);
  auto loss_input = [&](const Eigen::VectorXd& v) {
    const Eigen::MatrixXd m = Eigen::Map<const Eigen::MatrixXd>(v.data(), x.rows(), x.cols());
    return net.forward(m).cwiseProduct(w).sum();
  };
  const Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
  const Eigen::VectorXd dxv = Eigen::Map<const Eigen::VectorXd>(dx.data(), dx.size());
  CHECK(testing::gradient_error(loss_input, xv, dxv) <= 1e-4);
}

}  // namespace

TEST_CASE("zero network outputs zero") {
  Network net({dense(3, 2), dense(2, 1)}, 1);
  net.set_params(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_params())));
  CHECK(net.forward(Eigen::Vector3d(1, 2, 3))(0, 0) == 0.0);
}

TEST_CASE("identity dense layer") {
  Network net({dense(3, 3)}, 1);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(12);
  Eigen::Map<Eigen::MatrixXd>(p.data(), 3, 3) = Eigen::Matrix3d::Identity();
  net.set_params(p);
  const Eigen::Vector3d x(0.5, -2.0, 7.0);
  CHECK(net.forward(x) == Eigen::MatrixXd(x));
}

TEST_CASE("two-layer network matches hand products") {
  Network net({dense(2, 2, Activation::kRelu), dense(2, 1)}, 1);
  // W1 = [[1, -1], [2, 0.5]] (column-major), b1 = [0.5, -1]; W2 = [3, -2], b2 = 1.
  Eigen::VectorXd p(9);
  p << 1, 2, -1, 0.5, 0.5, -1, 3, -2, 1;
  net.set_params(p);
  // x = [1, 2]: pre1 = [1 - 2 + 0.5, 2 + 1 - 1] = [-0.5, 2] -> relu [0, 2];
  // out = 3*0 - 2*2 + 1 = -3.
  CHECK(net.forward(Eigen::Vector2d(1, 2))(0, 0) == doctest::Approx(-3.0));
}

TEST_CASE("dense gradients") {
  Rng rng(3);
  for (auto act : {Activation::kIdentity, Activation::kTanh, Activation::kRelu}) {
    Network net({dense(4, 5, act), dense(5, 2, Activation::kTanh)}, 11);
    check_gradients(net, random_matrix(4, 1, rng), 5);
  }
}

TEST_CASE("conv and pool gradients") {
  Rng rng(4);
  Network net({conv1d(3, 4, Activation::kTanh), conv1d(4, 2, Activation::kRelu), sum_pool(2), dense(2, 2)}, 12);
  check_gradients(net, random_matrix(3, 6, rng), 6);
  Network mean({conv1d(2, 3, Activation::kIdentity, 5), mean_pool(3)}, 13);
  check_gradients(mean, random_matrix(2, 4, rng), 7);
  Network single({conv1d(2, 2, Activation::kTanh)}, 14);
  check_gradients(single, random_matrix(2, 1, rng), 8);
}

TEST_CASE("LSTM gradients on a length-3 sequence") {
  Rng rng(5);
  Network net({lstm(3, 4), dense(4, 1)}, 15);
  check_gradients(net, random_matrix(3, 3, rng), 9);
  Network longer({lstm(2, 3)}, 16);
  check_gradients(longer, random_matrix(2, 7, rng), 10);
}

TEST_CASE("LSTM output depends on order") {
  Rng rng(6);
  Network net({lstm(2, 3)}, 17);
  const Eigen::MatrixXd x = random_matrix(2, 3, rng);
  Eigen::MatrixXd rev = x.rowwise().reverse();
  CHECK((net.forward(x) - net.forward(rev)).norm() > 1e-6);
}

TEST_CASE("sub-range forward and backward") {
  Rng rng(7);
  Network net({dense(3, 4, Activation::kTanh), dense(4, 2), dense(2, 1)}, 18);
  const Eigen::MatrixXd x = random_matrix(3, 1, rng);
  const Eigen::MatrixXd mid = net.forward(x, nullptr, 0, 2);
  CHECK(net.forward(mid, nullptr, 2, 3) == net.forward(x));
  const Eigen::MatrixXd h = net.forward(x, nullptr, 0, 1);
  Cache c;
  net.forward(h, &c, 1, 3);
  CHECK(c.first == 1);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_params()));
  net.backward(c, Eigen::MatrixXd::Ones(1, 1), g);
  const auto first_layer = static_cast<Eigen::Index>(net.layer_offset(1));
  CHECK(g.head(first_layer).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.tail(g.size() - first_layer).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("shape errors name the layer") {
  Network net({dense(3, 2), dense(2, 1)}, 1);
  try {
    net.forward(Eigen::Vector4d::Zero());
    FAIL("expected a shape error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("dense[0]") != std::string::npos);
  }
  Network c({conv1d(3, 2)}, 1);
  CHECK_THROWS_AS(c.forward(Eigen::MatrixXd::Zero(2, 4)), ValidationError);
}

TEST_CASE("stale caches are rejected") {
  Network net({dense(2, 1)}, 1);
  Cache c;
  net.forward(Eigen::Vector2d(1, 1), &c);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(3);
  CHECK(sgd_step(net, Eigen::VectorXd::Ones(3), 0.1));
  CHECK_THROWS_AS(net.backward(c, Eigen::MatrixXd::Ones(1, 1), g), std::logic_error);
}

TEST_CASE("constant loss has zero gradient") {
  Network net({dense(3, 2, Activation::kTanh)}, 2);
  Cache c;
  net.forward(Eigen::Vector3d(1, 2, 3), &c);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_params()));
  net.backward(c, Eigen::MatrixXd::Zero(2, 1), g);
  CHECK(g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sgd step") {
  Network net({dense(1, 1)}, 1);
  Eigen::VectorXd p(2);
  p << 1.0, 0.0;
  net.set_params(p);
  Eigen::VectorXd g(2);
  g << 2.0, 0.0;
  CHECK(sgd_step(net, g, 0.1));
  CHECK(net.params()[0] == doctest::Approx(0.8));
  const auto before = net.params();
  CHECK(sgd_step(net, Eigen::VectorXd::Zero(2), 0.1));
  CHECK(net.params() == before);
  g[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(sgd_step(net, g, 0.1));
  CHECK(net.params() == before);
  CHECK_THROWS_AS(sgd_step(net, Eigen::VectorXd::Zero(2), 0.0), ValidationError);
}

TEST_CASE("sgd decreases a convex toy loss") {
  // Least squares on a linear layer: loss = 0.5 * sum ||W x_i + b - y_i||^2.
  Rng rng(8);
  Network net({dense(3, 1)}, 3);
  std::vector<Eigen::VectorXd> xs;
  std::vector<double> ys;
  for (int i = 0; i < 20; ++i) {
    xs.push_back(random_matrix(3, 1, rng));
    ys.push_back(xs.back().sum() + 0.5);
  }
  auto loss_grad = [&](Eigen::VectorXd* grad) {
    double loss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      Cache c;
      const double r = net.forward(xs[i], &c)(0, 0) - ys[i];
      loss += 0.5 * r * r;
      if (grad) net.backward(c, Eigen::MatrixXd::Constant(1, 1, r), *grad);
    }
    return loss;
  };
  for (bool momentum : {false, true}) {
    net = Network({dense(3, 1)}, 3);
    Sgd opt{0.005, momentum ? 0.5 : 0.0, {}};
    double prev = loss_grad(nullptr);
    for (int it = 0; it < 100; ++it) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(4);
      loss_grad(&g);
      CHECK(opt.step(net, g));
      const double now = loss_grad(nullptr);
      if (!momentum) CHECK(now <= prev);
      prev = now;
    }
    CHECK(prev < 1e-2);
  }
}

TEST_CASE("initialization and updates are deterministic") {
  Network a({conv1d(2, 3), sum_pool(3), lstm(3, 2)}, 42);
  Network b({conv1d(2, 3), sum_pool(3), lstm(3, 2)}, 42);
  CHECK(a.params() == b.params());
  CHECK(param_hash(a) == param_hash(b));
  Network c({conv1d(2, 3), sum_pool(3), lstm(3, 2)}, 43);
  CHECK(param_hash(a) != param_hash(c));
}

TEST_CASE("gaussian policy") {
  Rng rng(9);
  const double mu = 1.5;
  const double var = 0.49;
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += gaussian_policy_sample(mu, var, rng).action;
  CHECK(std::abs(sum / n - mu) <= 3.0 * std::sqrt(var / n));
  CHECK(gaussian_log_density(mu, mu, var) == doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi * var)));
  CHECK(std::abs(gaussian_policy_sample(mu, 1e-14, rng).action - mu) < 1e-5);
  const auto s = gaussian_policy_sample(0.2, 0.3, rng);
  CHECK(s.log_density == doctest::Approx(gaussian_log_density(s.action, 0.2, 0.3)));
  // Derivatives of the log-density and the variance transform.
  const double a = 0.7;
  const double h = 1e-6;
  CHECK(gaussian_log_density_dmu(a, 0.2, 0.3) ==
        doctest::Approx((gaussian_log_density(a, 0.2 + h, 0.3) - gaussian_log_density(a, 0.2 - h, 0.3)) / (2 * h)));
  CHECK(gaussian_log_density_dvar(a, 0.2, 0.3) ==
        doctest::Approx((gaussian_log_density(a, 0.2, 0.3 + h) - gaussian_log_density(a, 0.2, 0.3 - h)) / (2 * h)));
  CHECK(positive_variance_grad(0.4) ==
        doctest::Approx((positive_variance(0.4 + h, 1e-3) - positive_variance(0.4 - h, 1e-3)) / (2 * h)));
  CHECK(positive_variance(-50.0, 1e-3) >= 1e-3);
}

TEST_CASE("checkpoint round trip") {
  Network net({conv1d(2, 3, Activation::kTanh), sum_pool(3), dense(3, 1)}, 5);
  save_checkpoint(net, "nn_ckpt_test", {{"role", "unit"}});
  const Network back = load_checkpoint("nn_ckpt_test");
  CHECK(back.params() == net.params());
  CHECK(back.num_layers() == 3);
  CHECK(manifest(back)["hash"] == manifest(net)["hash"]);
  std::remove("nn_ckpt_test.bin");
  std::remove("nn_ckpt_test.json");
  CHECK_THROWS(load_checkpoint("nn_ckpt_missing"));
}
