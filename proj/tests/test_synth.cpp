#include "mccl/errors.hpp"
#include "mccl/synth.hpp"
#include "tmpdir.hpp"

#include <doctest.h>

#include <cmath>

using namespace mccl;

namespace {

SynthConfig small(std::uint64_t seed = 1) {
  SynthConfig c;
  c.t_len = 30;
  c.height = 6;
  c.width = 8;
  c.n_dyn = 4;
  c.n_stat = 3;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("synthetic cube: shape, names and determinism") {
  const DataCube a = generate_cube(small());
  CHECK(a.dyn.size() == 30u * 4 * 6 * 8);
  CHECK(a.stat_names.front() == "regime");
  CHECK(a.dyn_names.size() == 4);
  a.validate();
  const DataCube b = generate_cube(small());
  CHECK(a.dyn == b.dyn);
  CHECK(a.fire == b.fire);
  CHECK(a.stat == b.stat);
  CHECK(generate_cube(small(2)).dyn != a.dyn);
}

TEST_CASE("regimes are contiguous column bands encoded in static feature 0") {
  const SynthConfig c = small();
  CHECK(regime_of(c, 0) == 0);
  CHECK(regime_of(c, 3) == 0);
  CHECK(regime_of(c, 4) == 1);
  CHECK(regime_of(c, 7) == 1);
  const DataCube cube = generate_cube(c);
  for (int i = 0; i < c.height; ++i) {
    for (int j = 0; j < c.width; ++j) {
      CHECK(std::abs(cube.stat_at(0, i, j) - regime_of(c, j)) <= 0.05f + 1e-6f);
    }
  }
}

TEST_CASE("labels follow the ignition functional") {
  SynthConfig c = small();
  const DataCube cube = generate_cube(c);
  for (int t = 0; t + 1 < c.t_len; ++t) {
    for (int i = 0; i < c.height; ++i) {
      for (int j = 0; j < c.width; ++j) {
        CHECK(cube.fire_at(t + 1, i, j) == (ignition_value(c, cube, t, i, j) > c.threshold ? 1 : 0));
      }
    }
  }
  for (int k = 0; k < c.height * c.width; ++k) CHECK(cube.fire[k] == 0);

  c.threshold = -1e9;
  const DataCube all = generate_cube(c);
  for (std::size_t k = static_cast<std::size_t>(c.height) * c.width; k < all.fire.size(); ++k) CHECK(all.fire[k] == 1);
}

TEST_CASE("raising the threshold never adds fire cells") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    SynthConfig c = small(seed);
    c.threshold = -10.0;
    DataCube prev = generate_cube(c);
    for (double theta : {-0.5, 0.0, 0.7, 1.5, 2.2, 3.0}) {
      c.threshold = theta;
      const DataCube next = generate_cube(c);
      CHECK(next.dyn == prev.dyn);
      for (std::size_t k = 0; k < next.fire.size(); ++k) CHECK(next.fire[k] <= prev.fire[k]);
      prev = next;
    }
  }
}

TEST_CASE("the high-variance regime has proportionally larger step changes") {
  SynthConfig c = small();
  c.t_len = 200;
  c.height = 10;
  c.width = 10;
  const DataCube cube = generate_cube(c);
  double step[2] = {0.0, 0.0};
  double count[2] = {0.0, 0.0};
  for (int t = 1; t < c.t_len; ++t) {
    for (int f = 0; f < c.n_dyn; ++f) {
      for (int i = 0; i < c.height; ++i) {
        for (int j = 0; j < c.width; ++j) {
          const int r = regime_of(c, j);
          step[r] += std::abs(cube.dyn_at(t, f, i, j) - cube.dyn_at(t - 1, f, i, j));
          count[r] += 1.0;
        }
      }
    }
  }
  const double ratio = (step[1] / count[1]) / (step[0] / count[0]);
  CHECK(ratio == doctest::Approx(5.0).epsilon(0.1));
}

TEST_CASE("label noise flips a matching fraction of labels") {
  SynthConfig c = small();
  c.t_len = 100;
  const DataCube clean = generate_cube(c);
  c.label_noise = 0.2;
  const DataCube noisy = generate_cube(c);
  CHECK(noisy.dyn == clean.dyn);
  double flipped = 0.0;
  const std::size_t first = static_cast<std::size_t>(c.height) * c.width;
  for (std::size_t k = first; k < clean.fire.size(); ++k) flipped += clean.fire[k] != noisy.fire[k];
  CHECK(flipped / static_cast<double>(clean.fire.size() - first) == doctest::Approx(0.2).epsilon(0.15));
}

TEST_CASE("config validation and file round trip") {
  SynthConfig bad = small();
  bad.regime_scales = {1.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small();
  bad.label_noise = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  Config cfg;
  cfg.set("synth.T", "12");
  cfg.set("synth.regime_scales", "1, 1");
  cfg.set("synth.seed", "9");
  const SynthConfig parsed = SynthConfig::from_config(cfg);
  CHECK(parsed.t_len == 12);
  CHECK(parsed.regime_scales == std::vector<double>{1.0, 1.0});
  CHECK(parsed.seed == 9);

  TempDir dir("synth_rt");
  const DataCube cube = generate_cube(parsed);
  save_cube(cube, dir.path);
  const DataCube back = load_cube(dir.path);
  CHECK(back.dyn == cube.dyn);
  CHECK(back.fire == cube.fire);
  CHECK(back.stat_names == cube.stat_names);
}
