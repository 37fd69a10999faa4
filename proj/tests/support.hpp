#pragma once

#include <cstdint>

#include "leosched/mdp.hpp"

namespace leosched::testing {

inline mdp::TaskParams small_params(int K, int leo, int bs, int tst, int T, int cap = 8) {
  mdp::TaskParams p;
  p.gen.num_devices = K;
  p.gen.num_leo = leo;
  p.gen.num_bs = bs;
  p.gen.num_tst = tst;
  p.gen.horizon = T;
  p.levels = 4;
  p.fsmc_samples = 4000;
  p.cap = cap;
  return p;
}

/// Tiny random problem with G <= 6 and T <= 4, shape chosen by the seed.
inline Problem tiny_problem(std::uint64_t seed) {
  struct Shape {
    int K, leo, bs, tst, cap;
  };
  static constexpr Shape shapes[] = {{2, 1, 0, 0, 8}, {3, 1, 0, 0, 8}, {4, 1, 0, 0, 8},
                                     {5, 1, 0, 0, 8}, {2, 1, 1, 0, 1}, {1, 1, 1, 0, 8},
                                     {2, 0, 1, 1, 1}, {3, 0, 1, 1, 1}};
  Rng pick = make_rng(seed, "shape");
  const Shape s = shapes[pick() % std::size(shapes)];
  const int T = 2 + static_cast<int>(pick() % 3);
  auto params = small_params(s.K, s.leo, s.bs, s.tst, T, s.cap);
  params.gen.eta0 = 0.2 + 2.0 * uniform01(pick);
  params.gen.eta_data = 0.2 + 2.0 * uniform01(pick);
  const mdp::Task task = mdp::make_task(params, seed);
  Rng ch = make_rng(seed, "trajectory");
  return mdp::make_problem(task, channel::sample_trajectory(task.channel, T, ch));
}

}  // namespace leosched::testing
