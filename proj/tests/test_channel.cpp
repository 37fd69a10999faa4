#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "leosched/channel.hpp"

using namespace leosched;
using namespace leosched::channel;

namespace {

double free_space_oracle(double d, double f) {
  const double c = 299792458.0;
  const double a = c / (4.0 * std::numbers::pi * d * f);
  return a * a;
}

ChannelParams unit_params() {
  ChannelParams p;
  p.gt_leo = p.gt_ter = p.gr = 1.0;
  p.chi = 0.0;
  return p;
}

ChannelModel single_link(const FsmcModel& m, int K = 1, int N = 1) {
  ChannelModel model;
  model.mean_gain = Eigen::MatrixXd::Ones(K, N);
  model.tx_band.assign(N, Band::kC);
  model.leo = m;
  model.ter = m;
  return model;
}

}  // namespace

TEST_CASE("LEO free-space factor at 780 km and 30 GHz") {
  const double g = leo_path_gain(780e3, unit_params(), 1.0, 1.0);
  CHECK(g == doctest::Approx(free_space_oracle(780e3, 30e9)).epsilon(1e-12));
  CHECK(g == doctest::Approx(1.04e-18).epsilon(0.01));
  CHECK(10.0 * std::log10(g) == doctest::Approx(-179.8).epsilon(1e-3));
}

TEST_CASE("atmospheric factor") {
  ChannelParams p;
  p.chi = 0.0;
  CHECK(atmospheric_factor(1.0, p) == 1.0);
  CHECK(atmospheric_factor(5e6, p) == 1.0);
  p.chi = 1.0;
  CHECK(atmospheric_factor(p.h_alt, p) == doctest::Approx(std::pow(10.0, 0.3)).epsilon(1e-14));
  CHECK(atmospheric_factor(p.h_alt, p) == doctest::Approx(1.9953).epsilon(1e-4));
  p.atmosphere_as_loss = true;
  CHECK(atmospheric_factor(p.h_alt, p) == doctest::Approx(std::pow(10.0, -0.3)).epsilon(1e-14));
}

TEST_CASE("terrestrial path gain") {
  const auto p = unit_params();
  CHECK(ter_path_gain(1e3, p, 1.0) == doctest::Approx(free_space_oracle(1e3, 4e9)).epsilon(1e-12));
  CHECK(10.0 * std::log10(ter_path_gain(1e3, p, 1.0)) == doctest::Approx(-104.5).epsilon(1e-3));
  CHECK(ter_path_gain(1e3, p, 0.0) == 0.0);
  CHECK(ter_path_gain(2e3, p, 1.0) == doctest::Approx(ter_path_gain(1e3, p, 1.0) / 4.0).epsilon(1e-14));
}

TEST_CASE("path gains reject bad distances and are monotone") {
  const ChannelParams p;
  CHECK_THROWS_AS(leo_path_gain(0.0, p, 1.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(leo_path_gain(-5.0, p, 1.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(ter_path_gain(0.0, p, 1.0), std::domain_error);
  double prev_leo = leo_path_gain(500e3, p, 0.7, 1.0);
  double prev_ter = ter_path_gain(10.0, p, 0.7);
  for (double d = 510e3; d < 2000e3; d += 10e3) {
    const double g = leo_path_gain(d, p, 0.7, 1.0);
    CHECK(g < prev_leo);
    prev_leo = g;
  }
  for (double d = 20.0; d < 5000.0; d += 10.0) {
    const double g = ter_path_gain(d, p, 0.7);
    CHECK(g < prev_ter);
    prev_ter = g;
  }
  CHECK(leo_path_gain(780e3, p, 0.3, 0.9) == leo_path_gain(780e3, p, 0.3, 0.9));
}

TEST_CASE("pitch gain table interpolates") {
  ChannelParams p;
  CHECK(p.pitch_gain(0.5) == 1.0);
  p.pitch_gain_table = {{0.0, 0.5}, {1.0, 1.5}};
  CHECK(p.pitch_gain(0.5) == doctest::Approx(1.0));
  CHECK(p.pitch_gain(-1.0) == 0.5);
  CHECK(p.pitch_gain(2.0) == 1.5);
}

TEST_CASE("constant fading process gives an identity chain") {
  FadingConfig cfg{FadingKind::kRician, 10.0, 0.9, 0.0};
  const auto m = build_fsmc(cfg, 4, 1000, 3);
  CHECK(m.degenerate);
  CHECK(m.transition.isApprox(Eigen::MatrixXd::Identity(4, 4)));
}

TEST_CASE("built chains are row-stochastic with ascending levels") {
  for (auto kind : {FadingKind::kRician, FadingKind::kRayleigh}) {
    for (int L : {2, 4, 8}) {
      const auto m = build_fsmc({kind}, L, 20000, 11 + L);
      CHECK_NOTHROW(m.validate());
      for (int l = 0; l < L; ++l) CHECK(std::abs(m.transition.row(l).sum() - 1.0) <= 1e-12);
      for (int l = 1; l < L; ++l) CHECK(m.levels[l] > m.levels[l - 1]);
    }
  }
  CHECK_THROWS_AS(build_fsmc({}, 1, 1000, 1), ValidationError);
  CHECK_THROWS_AS(build_fsmc({}, 4, 100, 1), ValidationError);
}

TEST_CASE("correlated fading gives a sticky two-level chain") {
  FadingConfig cfg{FadingKind::kRayleigh, 0.0, 0.9, 1.0};
  const auto m = build_fsmc(cfg, 2, 1000000, 5);
  CHECK(m.transition(0, 0) > m.transition(0, 1));
  CHECK(m.transition(1, 1) > m.transition(1, 0));
}

TEST_CASE("fsmc json round trip") {
  const auto m = build_fsmc({}, 3, 2000, 9);
  const auto back = fsmc_from_json(nlohmann::json::parse(to_json(m).dump()));
  CHECK(back.levels == m.levels);
  CHECK(back.transition == m.transition);
  CHECK(to_json(m).contains("levels"));
  CHECK(to_json(m).contains("transition"));
}

TEST_CASE("identity chain leaves the state unchanged") {
  FsmcModel m{{0.5, 1.0, 2.0}, Eigen::MatrixXd::Identity(3, 3), false};
  const auto model = single_link(m, 3, 2);
  Rng rng(4);
  const auto s0 = draw_stationary(model, rng);
  auto s = s0;
  for (int i = 0; i < 20; ++i) s = step_channel(s, model, rng);
  CHECK(s.level_index == s0.level_index);
  CHECK(s.grid == s0.grid);
  CHECK(is_consistent(s, model));
}

TEST_CASE("empirical transitions match the chain") {
  const auto m = build_fsmc({}, 4, 40000, 21);
  const auto model = single_link(m);
  Rng rng(99);
  auto s = draw_stationary(model, rng);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(4, 4);
  for (int i = 0; i < 100000; ++i) {
    const auto n = step_channel(s, model, rng);
    counts(s.level_index(0, 0), n.level_index(0, 0)) += 1;
    s = n;
  }
  for (int l = 0; l < 4; ++l) {
    const double row = counts.row(l).sum();
    REQUIRE(row > 0);
    for (int j = 0; j < 4; ++j) CHECK(std::abs(counts(l, j) / row - m.transition(l, j)) <= 0.01);
  }
}

TEST_CASE("uniform rows give uniform occupancy") {
  FsmcModel m{{1.0, 2.0, 3.0, 4.0}, Eigen::MatrixXd::Constant(4, 4, 0.25), false};
  const auto model = single_link(m);
  Rng rng(7);
  auto s = draw_stationary(model, rng);
  std::vector<double> occ(4, 0.0);
  const int steps = 100000;
  for (int i = 0; i < steps; ++i) {
    s = step_channel(s, model, rng);
    occ[s.level_index(0, 0)] += 1.0 / steps;
  }
  for (double o : occ) CHECK(std::abs(o - 0.25) <= 0.01);
}

TEST_CASE("seed derivation is stable") {
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
}
