#include "mccl/synth.hpp"

#include "mccl/errors.hpp"
#include "mccl/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace mccl {
namespace {

std::vector<std::vector<double>> regime_means(const SynthConfig& cfg) {
  Rng rng = stream_rng(cfg.seed, {3});
  std::uniform_real_distribution<double> dist(-cfg.regime_mean_spread, cfg.regime_mean_spread);
  std::vector<std::vector<double>> mu(cfg.n_regimes, std::vector<double>(cfg.n_dyn));
  for (auto& row : mu) {
    for (auto& v : row) v = cfg.regime_mean_spread > 0.0 ? dist(rng) : 0.0;
  }
  return mu;
}

// Alternating-sign unit vector.
double coefficient(const SynthConfig& cfg, int f) {
  return (f % 2 == 0 ? 1.0 : -1.0) / std::sqrt(static_cast<double>(cfg.n_dyn));
}

}  // namespace

void SynthConfig::validate() const {
  if (t_len < 2 || height < 1 || width < 1 || n_dyn < 1 || n_stat < 1) {
    throw ConfigError("synth dims must be positive (T >= 2, D_s >= 1)");
  }
  if (n_regimes < 2) throw ConfigError("synth.regimes must be >= 2");
  if (n_regimes > width) throw ConfigError("synth.regimes must not exceed W");
  if (static_cast<int>(regime_scales.size()) != n_regimes) {
    throw ConfigError("synth.regime_scales needs one value per regime");
  }
  for (double s : regime_scales) {
    if (!(s > 0.0)) throw ConfigError("synth.regime_scales must be > 0");
  }
  if (!(noise >= 0.0)) throw ConfigError("synth.noise must be >= 0");
  if (!(label_noise >= 0.0 && label_noise < 0.5)) throw ConfigError("synth.label_noise must lie in [0, 0.5)");
  if (!std::isfinite(threshold)) throw ConfigError("synth.threshold must be finite");
  if (!(std::abs(ar) < 1.0)) throw ConfigError("synth.ar must lie in (-1, 1)");
}

SynthConfig SynthConfig::from_config(const Config& cfg) {
  SynthConfig s;
  s.t_len = cfg.get_int("synth.T", s.t_len);
  s.height = cfg.get_int("synth.H", s.height);
  s.width = cfg.get_int("synth.W", s.width);
  s.n_dyn = cfg.get_int("synth.D_d", s.n_dyn);
  s.n_stat = cfg.get_int("synth.D_s", s.n_stat);
  s.n_regimes = cfg.get_int("synth.regimes", s.n_regimes);
  s.regime_scales = cfg.get_doubles("synth.regime_scales", s.regime_scales);
  s.regime_mean_spread = cfg.get_double("synth.regime_mean_spread", s.regime_mean_spread);
  s.threshold = cfg.get_double("synth.threshold", s.threshold);
  s.noise = cfg.get_double("synth.noise", s.noise);
  s.ar = cfg.get_double("synth.ar", s.ar);
  s.label_noise = cfg.get_double("synth.label_noise", s.label_noise);
  s.seed = cfg.get_u64("synth.seed", s.seed);
  s.validate();
  return s;
}

int regime_of(const SynthConfig& cfg, int j) {
  return std::min(j * cfg.n_regimes / cfg.width, cfg.n_regimes - 1);
}

double ignition_value(const SynthConfig& cfg, const DataCube& cube, int t, int i, int j) {
  const auto mu = regime_means(cfg);
  const int r = regime_of(cfg, j);
  double g = 0.0;
  for (int f = 0; f < cfg.n_dyn; ++f) {
    g += coefficient(cfg, f) * (static_cast<double>(cube.dyn_at(t, f, i, j)) - mu[r][f]) / cfg.regime_scales[r];
  }
  return g;
}

DataCube generate_cube(const SynthConfig& cfg) {
  cfg.validate();
  DataCube cube;
  cube.t_len = cfg.t_len;
  cube.height = cfg.height;
  cube.width = cfg.width;
  cube.n_dyn = cfg.n_dyn;
  cube.n_stat = cfg.n_stat;
  cube.dyn.assign(static_cast<std::size_t>(cfg.t_len) * cfg.n_dyn * cfg.height * cfg.width, 0.0f);
  cube.stat.assign(static_cast<std::size_t>(cfg.n_stat) * cfg.height * cfg.width, 0.0f);
  cube.fire.assign(static_cast<std::size_t>(cfg.t_len) * cfg.height * cfg.width, 0);
  for (int f = 0; f < cfg.n_dyn; ++f) cube.dyn_names.push_back("d" + std::to_string(f));
  cube.stat_names.push_back("regime");
  for (int f = 1; f < cfg.n_stat; ++f) cube.stat_names.push_back("s" + std::to_string(f));

  const auto mu = regime_means(cfg);
  const double two_pi = 2.0 * std::numbers::pi;

  Rng field_rng = stream_rng(cfg.seed, {4});
  std::uniform_real_distribution<double> freq(0.5, 1.5);
  std::uniform_real_distribution<double> phase(0.0, 1.0);
  for (int f = 0; f < cfg.n_stat; ++f) {
    const double fi = freq(field_rng), fj = freq(field_rng), pi = phase(field_rng), pj = phase(field_rng);
    for (int i = 0; i < cfg.height; ++i) {
      for (int j = 0; j < cfg.width; ++j) {
        const double smooth = std::sin(two_pi * (fi * i / cfg.height + pi)) * std::cos(two_pi * (fj * j / cfg.width + pj));
        double v = smooth;
        if (f == 0) v = static_cast<double>(regime_of(cfg, j)) / (cfg.n_regimes - 1) + 0.05 * smooth;
        cube.stat[cube.stat_index(f, i, j)] = static_cast<float>(v);
      }
    }
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double stationary = 1.0 / std::sqrt(1.0 - cfg.ar * cfg.ar);
  for (int i = 0; i < cfg.height; ++i) {
    for (int j = 0; j < cfg.width; ++j) {
      const int r = regime_of(cfg, j);
      const double scale = cfg.regime_scales[r];
      Rng dyn_rng = stream_rng(cfg.seed, {1, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)});
      Rng flip_rng = stream_rng(cfg.seed, {2, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)});
      std::vector<double> u(cfg.n_dyn);
      for (auto& v : u) v = cfg.noise * stationary * normal(dyn_rng);
      for (int t = 0; t < cfg.t_len; ++t) {
        if (t > 0) {
          for (auto& v : u) v = cfg.ar * v + cfg.noise * normal(dyn_rng);
        }
        double g = 0.0;
        for (int f = 0; f < cfg.n_dyn; ++f) {
          const float x = static_cast<float>(mu[r][f] + scale * u[f]);
          cube.dyn[cube.dyn_index(t, f, i, j)] = x;
          g += coefficient(cfg, f) * (static_cast<double>(x) - mu[r][f]) / scale;
        }
        if (t + 1 < cfg.t_len) {
          // One uniform per cell and step regardless of the threshold, so
          // the flip pattern does not depend on it.
          const bool flip = unit(flip_rng) < cfg.label_noise;
          const bool ignite = g > cfg.threshold;
          cube.fire[cube.fire_index(t + 1, i, j)] = static_cast<std::uint8_t>(ignite != flip);
        }
      }
    }
  }
  return cube;
}

}  // namespace mccl
