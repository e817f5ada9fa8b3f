#pragma once

// Hand-built patch sets for sampler and balancing tests.

#include "mccl/cube.hpp"

#include <random>

namespace pools {

// 1x1 patches with a single static feature holding `proxy` and a one-step,
// one-feature dynamic tensor.
inline mccl::Patch point_patch(int id, int label, float proxy, int t = 0, int i = 0, int j = 0) {
  mccl::Patch p;
  p.id = id;
  p.t = t;
  p.i = i;
  p.j = j;
  p.label = label;
  p.dyn = Eigen::VectorXf::Constant(1, static_cast<float>(id));
  p.stat = Eigen::VectorXf::Constant(1, proxy);
  return p;
}

inline mccl::PatchSet point_set() {
  mccl::PatchSet s;
  s.geometry = mccl::PatchGeometry{mccl::PatchMode::sliding_center, 1, 1, 1, 1, 1};
  return s;
}

// Random pool on a small lattice: ids shuffled, clustered proxy values so
// some bins stay empty, roughly `pos_rate` positives.
inline mccl::PatchSet random_pool(std::mt19937_64& rng, int n, double pos_rate) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::bernoulli_distribution pos(pos_rate);
  std::uniform_int_distribution<int> cell(0, 3);
  std::uniform_int_distribution<int> time(0, 5);
  std::vector<int> ids(n);
  for (int k = 0; k < n; ++k) ids[k] = 3 * k + 7;
  std::shuffle(ids.begin(), ids.end(), rng);
  mccl::PatchSet s = point_set();
  const float cluster = u(rng);
  for (int k = 0; k < n; ++k) {
    const float proxy = u(rng) < 0.5f ? cluster + 0.05f * u(rng) : u(rng) * 3.0f;
    s.patches.push_back(point_patch(ids[k], pos(rng) ? 1 : 0, proxy, time(rng), cell(rng), cell(rng)));
  }
  s.reindex();
  return s;
}

}  // namespace pools
