#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <sstream>

#include "leosched/bench.hpp"

using namespace leosched;
using namespace leosched::bench;

namespace {

/// Tiny world the exact solvers can handle: 1 LEO, 3 devices, T = 4.
Scenario tiny_scenario(ScenarioKind kind, std::uint64_t seed) {
  Scenario sc;
  sc.kind = kind;
  sc.seed = seed;
  sc.base.gen.num_devices = 3;
  sc.base.gen.num_leo = 1;
  sc.base.gen.num_bs = 0;
  sc.base.gen.num_tst = 0;
  sc.base.gen.horizon = 4;
  sc.base.cap = 8;
  sc.base.levels = 4;
  sc.base.fsmc_samples = 4000;
  sc.min_devices = 2;
  sc.max_devices = 4;
  sc.abnormal_batch = 2;
  sc.update_interval = 8;
  sc.horizon = 32;
  return sc;
}

MetricsTrace from_losses(const std::vector<double>& loss, std::vector<int> markers, int interval) {
  MetricsTrace tr;
  tr.update_interval = interval;
  tr.markers = std::move(markers);
  for (std::size_t i = 0; i < loss.size(); ++i) {
    tr.slots.push_back({static_cast<int>(i), static_cast<int>(i) / 10, loss[i], loss[i], 0.0, 1});
  }
  return tr;
}

/// Direct evaluation of the recovery rule for one event, no prefix sums.
int recovery_oracle(const std::vector<double>& loss, int ev, double deg, double rec, int window) {
  double base = 0.0;
  for (int i = ev - window; i < ev; ++i) base += loss[i];
  base /= window;
  int d = -1;
  for (int s = ev; s < static_cast<int>(loss.size()); ++s) {
    if (loss[s] > deg * base) {
      d = s;
      break;
    }
  }
  if (d < 0) return 0;
  for (int s = d; s < static_cast<int>(loss.size()); ++s) {
    double m = 0.0;
    for (int i = s - window + 1; i <= s; ++i) m += loss[i];
    if (m / window < rec * base) return s - d;
  }
  return static_cast<int>(loss.size()) - d;
}

std::vector<double> synthetic_spike() {
  std::vector<double> loss(400, 1.0);
  for (int s = 200; s <= 260; ++s) loss[s] = 5.0 - 4.0 * (s - 200) / 60.0;
  return loss;
}

}  // namespace

TEST_CASE("names round-trip") {
  for (auto k : {ScenarioKind::kUserChurn, ScenarioKind::kDemandBurst, ScenarioKind::kChannelShock}) {
    CHECK(parse_scenario(scenario_name(k)) == k);
  }
  for (auto a : {AgentKind::kEmcl, AgentKind::kAc, AgentKind::kAdmm, AgentKind::kGreedy, AgentKind::kBnb}) {
    CHECK(parse_agent(agent_name(a)) == a);
  }
  CHECK_THROWS_AS(parse_scenario("rain"), ValidationError);
  CHECK_THROWS_AS(parse_agent("opt"), ValidationError);
}

TEST_CASE("scenario validation") {
  Scenario sc;
  sc.update_interval = 5;
  CHECK_THROWS_AS(sc.validate(), ValidationError);
  sc = Scenario();
  sc.horizon = 500;
  CHECK_THROWS_AS(sc.validate(), ValidationError);
  sc = Scenario();
  sc.base.gen.num_devices = 13;
  CHECK_THROWS_AS(sc.validate(), ValidationError);
}

TEST_CASE("events sit exactly on update boundaries") {
  for (auto k : {ScenarioKind::kUserChurn, ScenarioKind::kDemandBurst, ScenarioKind::kChannelShock}) {
    Scenario sc;
    sc.kind = k;
    sc.horizon = 1000;
    Rng rng(1);
    const auto ev = generate_events(sc, rng);
    REQUIRE(ev.size() == 4);
    for (std::size_t i = 0; i < ev.size(); ++i) CHECK(ev[i].slot == static_cast<int>(i + 1) * 200);
  }
}

TEST_CASE("poisson sampler mean") {
  Rng rng(2);
  double s = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) s += poisson(3.0, rng);
  CHECK(std::abs(s / n - 3.0) <= 3.0 * std::sqrt(3.0 / n));
  CHECK(poisson(0.0, rng) == 0);
}

TEST_CASE("user churn arrivals average 2 per normal event") {
  Scenario sc;
  sc.update_interval = 10;
  sc.horizon = 10 * 10001;
  sc.abnormal_period = 1 << 30;
  Rng rng(3);
  const auto ev = generate_events(sc, rng);
  REQUIRE(ev.size() == 10000);
  double s = 0.0;
  for (const auto& e : ev) s += e.arrivals;
  const double mean = s / ev.size();
  CHECK(std::abs(mean - 2.0) <= 3.0 * std::sqrt(2.0 / ev.size()));
}

TEST_CASE("abnormal churn batches alternate") {
  Scenario sc;
  sc.horizon = 1000;
  Rng rng(4);
  const auto ev = generate_events(sc, rng);
  CHECK(ev[1].abnormal);
  CHECK(ev[1].arrivals == 10);
  CHECK(ev[3].abnormal);
  CHECK(ev[3].departures == 10);
}

TEST_CASE("zero magnitude keeps the environment identical") {
  for (auto k : {ScenarioKind::kUserChurn, ScenarioKind::kDemandBurst, ScenarioKind::kChannelShock}) {
    Scenario sc;
    sc.kind = k;
    sc.magnitude = 0.0;
    Rng rng(5);
    ScenarioEnvironment env(sc, generate_events(sc, rng));
    const auto first = env.initial();
    for (const auto& e : env.events()) {
      const auto next = env.apply(e);
      CHECK(to_json(next->inst).dump() == to_json(first->inst).dump());
      CHECK(to_json(next->catalog).dump() == to_json(first->catalog).dump());
      CHECK(channel::to_json(next->channel.leo).dump() == channel::to_json(first->channel.leo).dump());
    }
  }
}

TEST_CASE("events change the environment as described") {
  Scenario sc;
  sc.kind = ScenarioKind::kChannelShock;
  Rng rng(6);
  ScenarioEnvironment shock(sc, generate_events(sc, rng));
  const auto before = shock.initial();
  const auto during = shock.apply(shock.events()[0]);
  // chi spike with the loss orientation weakens every LEO link
  CHECK((during->inst.mean_gain.col(0).array() < before->inst.mean_gain.col(0).array()).all());
  CHECK(during->inst.mean_gain.col(1) == before->inst.mean_gain.col(1));

  sc.kind = ScenarioKind::kDemandBurst;
  ScenarioEnvironment burst(sc, generate_events(sc, rng));
  const auto hot = burst.apply(burst.events()[0]);
  for (const auto& d : hot->inst.devices) CHECK(d.demand_bits >= 3.0 * sc.base.gen.demand_min);

  sc.kind = ScenarioKind::kUserChurn;
  Rng r2(7);
  const auto ev = generate_events(sc, r2);
  ScenarioEnvironment churn(sc, ev);
  int K = churn.initial()->inst.num_devices();
  for (const auto& e : ev) {
    const int want = std::clamp(std::clamp(K - e.departures, sc.min_devices, sc.max_devices) + e.arrivals,
                                sc.min_devices, sc.max_devices);
    K = churn.apply(e)->inst.num_devices();
    CHECK(K == want);
    CHECK(churn.initial()->inst.eta0 == doctest::Approx(sc.base.gen.eta0 / (K * K)));
  }
}

TEST_CASE("greedy on a static scenario has a flat trace") {
  Scenario sc = tiny_scenario(ScenarioKind::kChannelShock, 3);
  sc.magnitude = 0.0;
  const auto tr = run_scenario(sc, AgentKind::kGreedy, {}, nullptr, 1);
  REQUIRE(tr.slots.size() == 32);
  for (std::size_t i = 4; i < tr.slots.size(); ++i) CHECK(tr.slots[i].objective == tr.slots[4].objective);
  CHECK(tr.markers == std::vector<int>{8, 16, 24});
}

TEST_CASE("traces are deterministic") {
  RunOptions opts;
  opts.train.batch = 8;
  opts.train.wolpertinger_m = 3;
  opts.shape = {4, 3, 5, 3, 4};
  Scenario sc = tiny_scenario(ScenarioKind::kUserChurn, 9);
  const auto pool = make_task_pool(sc, 1, 2);
  agents::TrainConfig cfg = opts.train;
  cfg.episodes = 4;
  cfg.tasks_per_episode = 2;
  const auto meta = agents::meta_train(pool, cfg, opts.shape);
  for (auto a : {AgentKind::kEmcl, AgentKind::kAc, AgentKind::kGreedy, AgentKind::kAdmm}) {
    std::ostringstream x, y;
    write_trace_csv(run_scenario(sc, a, opts, &meta.critic, 4), x);
    write_trace_csv(run_scenario(sc, a, opts, &meta.critic, 4), y);
    CHECK(x.str() == y.str());
  }
  CHECK_THROWS_AS(run_scenario(sc, AgentKind::kEmcl, opts, nullptr, 4), ValidationError);
}

TEST_CASE("offline solvers per update window: bnb <= admm and bnb <= greedy") {
  int windows = 0, admm_above_greedy = 0;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    for (auto k : {ScenarioKind::kUserChurn, ScenarioKind::kDemandBurst, ScenarioKind::kChannelShock}) {
      const Scenario sc = tiny_scenario(k, s);
      const auto b = window_objectives(run_scenario(sc, AgentKind::kBnb, {}, nullptr, s));
      const auto a = window_objectives(run_scenario(sc, AgentKind::kAdmm, {}, nullptr, s));
      const auto g = window_objectives(run_scenario(sc, AgentKind::kGreedy, {}, nullptr, s));
      for (std::size_t w = 0; w < b.size(); ++w) {
        ++windows;
        CHECK(b[w] <= a[w] + 1e-12);
        CHECK(b[w] <= g[w] + 1e-12);
        if (a[w] > g[w] + 1e-12) ++admm_above_greedy;
      }
    }
  }
  // admm <= greedy per window does not hold on these instances; see notes.
  std::printf("admm above greedy in %d of %d windows\n", admm_above_greedy, windows);
}

TEST_CASE("recovery time: constant trace") {
  const auto tr = from_losses(std::vector<double>(400, 0.7), {200, 300}, 100);
  CHECK(recovery_time(tr) == std::vector<int>{0, 0});
}

TEST_CASE("recovery time: synthetic spike against the direct oracle") {
  const auto loss = synthetic_spike();
  const auto tr = from_losses(loss, {200}, 200);
  const int oracle = recovery_oracle(loss, 200, 2.0, 1.2, 20);
  CHECK(oracle == 69);
  CHECK(recovery_time(tr, 2.0, 1.2, 20) == std::vector<int>{oracle});
  const auto d = recovery_detail(loss, {200}, 2.0, 1.2, 20);
  CHECK(d[0].degraded);
  CHECK(d[0].degrade_slot == 200);
  CHECK(d[0].baseline == 1.0);
  CHECK_FALSE(d[0].censored);
}

TEST_CASE("recovery time is non-increasing in the recover factor") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> loss(300);
    for (auto& v : loss) v = 0.5 + uniform01(rng);
    for (int s = 100; s < 140; ++s) loss[s] += 4.0 * uniform01(rng);
    const auto tr = from_losses(loss, {100, 200}, 100);
    int prev = 1 << 30;
    for (double f : {1.0, 1.1, 1.2, 1.5, 2.0, 3.0}) {
      const auto r = recovery_time(tr, 2.0, f, 20);
      CHECK(r[0] <= prev);
      CHECK(r[0] == recovery_oracle(std::vector<double>(loss.begin(), loss.begin() + 200), 100, 2.0, f, 20));
      prev = r[0];
    }
  }
}

TEST_CASE("recovery time needs a pre-event window") {
  const auto tr = from_losses(std::vector<double>(100, 1.0), {10}, 10);
  CHECK_THROWS_AS(recovery_time(tr, 2.0, 1.2, 20), ValidationError);
}

TEST_CASE("censored recovery and post-recovery objective") {
  std::vector<double> loss(300, 1.0);
  for (int s = 100; s < 200; ++s) loss[s] = 10.0;
  const auto tr = from_losses(loss, {100, 200}, 100);
  const auto d = recovery_detail(loss, {100, 200}, 2.0, 1.2, 20);
  CHECK(d[0].censored);
  CHECK(d[0].slots == 100);
  const auto post = post_recovery_objective(tr, d, 20);
  CHECK(post[0] == 10.0);  // falls back to the last window before the next event
  CHECK(post[1] == 1.0);
}

TEST_CASE("summary lists every run and event") {
  auto a = from_losses(synthetic_spike(), {200}, 200);
  a.agent = "emcl";
  auto b = from_losses(std::vector<double>(400, 1.0), {200}, 200);
  b.agent = "ac";
  const auto j = summarize({a, b});
  CHECK(j["runs"].size() == 2);
  CHECK(j["runs"][0]["events"][0]["recovery_slots"] == 69);
  CHECK(j["aggregate"]["emcl"]["median_recovery_slots"] == 69.0);
  CHECK(j["aggregate"]["ac"]["median_recovery_slots"] == 0.0);
}

TEST_CASE("task pool has two families") {
  Scenario sc;
  const auto pool = make_task_pool(sc, 2, 5);
  REQUIRE(pool.size() == 4);
  CHECK(pool[0]->name == "nominal-0");
  CHECK(pool[2]->name == "stressed-0");
  for (const auto& t : pool) {
    CHECK(t->inst.num_devices() <= sc.max_devices);
    CHECK(t->inst.num_transmitters() == 4);
  }
  CHECK(pool[2]->inst.devices[0].demand_bits >= sc.burst_factor * sc.base.gen.demand_min);
}
