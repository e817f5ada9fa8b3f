#pragma once

// Synthetic cubes whose fire process depends on a per-cell regime.
//
// Each cell belongs to one of `n_regimes` contiguous column bands. Dynamic
// feature f of a cell in regime r is
//   x[t] = mu[r][f] + scale[r] * u[t],   u[t] = ar * u[t-1] + sigma * eps[t]
// and fire[t+1] = 1 iff  sum_f a_f * (x[t,f] - mu[r][f]) / scale[r] > threshold,
// then flipped with probability `label_noise`. fire[0] is 0.
// Static feature 0 is the regime index rescaled to [0, 1] plus a small smooth
// field; the remaining static features are smooth fields.

#include "mccl/config.hpp"
#include "mccl/cube.hpp"

#include <cstdint>
#include <vector>

namespace mccl {

struct SynthConfig {
  int t_len = 60;
  int height = 24;
  int width = 24;
  int n_dyn = 6;
  int n_stat = 4;
  int n_regimes = 2;
  std::vector<double> regime_scales{1.0, 5.0};
  double regime_mean_spread = 1.0;  // regime means drawn in [-spread, spread]
  double threshold = 2.2;
  double noise = 1.0;
  double ar = 0.8;
  double label_noise = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
  static SynthConfig from_config(const Config& cfg);  // keys "synth.*"
};

int regime_of(const SynthConfig& cfg, int j);

// Regime-scaled ignition functional of cell (i, j) at time t.
double ignition_value(const SynthConfig& cfg, const DataCube& cube, int t, int i, int j);

DataCube generate_cube(const SynthConfig& cfg);

}  // namespace mccl
