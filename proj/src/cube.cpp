#include "mccl/cube.hpp"

#include "mccl/config.hpp"
#include "mccl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace mccl {
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kManifestKeys = {
    "format",   "version",  "dims.T",     "dims.H",     "dims.W",      "dims.D_d",
    "dims.D_s", "dtype",    "file.dyn",   "file.stat",  "file.fire",   "names.dyn",
    "names.stat", "standardize", "standardize_until"};

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(' ');
    const auto b = item.find_last_not_of(' ');
    out.push_back(a == std::string::npos ? std::string{} : item.substr(a, b - a + 1));
  }
  return out;
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (k) out += ',';
    out += names[k];
  }
  return out;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path, std::size_t expected) {
  if (!fs::exists(path)) throw MissingPathError(path.string());
  const auto actual = fs::file_size(path);
  if (actual != expected) {
    throw DataError("dim mismatch: " + path.string() + " has " + std::to_string(actual) +
                    " bytes, expected " + std::to_string(expected));
  }
  std::vector<std::uint8_t> bytes(expected);
  std::ifstream in(path, std::ios::binary);
  if (expected > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(expected))) {
    throw DataError("short read: " + path.string());
  }
  return bytes;
}

std::vector<float> read_f32(const fs::path& path, std::size_t count) {
  const auto bytes = read_bytes(path, count * 4);
  std::vector<float> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::uint32_t word = static_cast<std::uint32_t>(bytes[4 * k]) |
                         (static_cast<std::uint32_t>(bytes[4 * k + 1]) << 8) |
                         (static_cast<std::uint32_t>(bytes[4 * k + 2]) << 16) |
                         (static_cast<std::uint32_t>(bytes[4 * k + 3]) << 24);
    std::memcpy(&out[k], &word, 4);
  }
  return out;
}

void write_f32(const fs::path& path, const std::vector<float>& values) {
  std::vector<std::uint8_t> bytes(values.size() * 4);
  for (std::size_t k = 0; k < values.size(); ++k) {
    std::uint32_t word;
    std::memcpy(&word, &values[k], 4);
    bytes[4 * k] = static_cast<std::uint8_t>(word & 0xff);
    bytes[4 * k + 1] = static_cast<std::uint8_t>((word >> 8) & 0xff);
    bytes[4 * k + 2] = static_cast<std::uint8_t>((word >> 16) & 0xff);
    bytes[4 * k + 3] = static_cast<std::uint8_t>((word >> 24) & 0xff);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

void check_finite(const std::vector<float>& values, const char* name) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) {
      throw DataError(std::string("non-finite value in ") + name + " at flat index " + std::to_string(k));
    }
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void DataCube::validate() const {
  if (t_len <= 0 || height <= 0 || width <= 0 || n_dyn <= 0 || n_stat < 0) {
    throw DataError("cube: non-positive dimension");
  }
  const auto cells = static_cast<std::size_t>(height) * width;
  if (dyn.size() != static_cast<std::size_t>(t_len) * n_dyn * cells) throw DataError("cube: dyn size mismatch");
  if (stat.size() != static_cast<std::size_t>(n_stat) * cells) throw DataError("cube: stat size mismatch");
  if (fire.size() != static_cast<std::size_t>(t_len) * cells) throw DataError("cube: fire size mismatch");
  if (dyn_names.size() != static_cast<std::size_t>(n_dyn)) throw DataError("cube: dyn name count mismatch");
  if (stat_names.size() != static_cast<std::size_t>(n_stat)) throw DataError("cube: stat name count mismatch");
  check_finite(dyn, "dyn");
  check_finite(stat, "stat");
  for (std::size_t k = 0; k < fire.size(); ++k) {
    if (fire[k] > 1) throw DataError("fire entry not in {0,1} at flat index " + std::to_string(k));
  }
}

CubeStats dynamic_stats(const DataCube& cube, int t_begin, int t_end) {
  if (t_begin < 0 || t_end > cube.t_len || t_begin >= t_end) {
    throw std::invalid_argument("dynamic_stats: empty or out-of-range time range");
  }
  CubeStats stats;
  stats.mean.assign(cube.n_dyn, 0.0);
  stats.stddev.assign(cube.n_dyn, 1.0);
  const auto cells = static_cast<std::size_t>(cube.height) * cube.width;
  for (int f = 0; f < cube.n_dyn; ++f) {
    double sum = 0.0;
    double sq = 0.0;
    std::size_t n = 0;
    for (int t = t_begin; t < t_end; ++t) {
      const float* base = &cube.dyn[cube.dyn_index(t, f, 0, 0)];
      for (std::size_t c = 0; c < cells; ++c) {
        sum += base[c];
        sq += static_cast<double>(base[c]) * base[c];
        ++n;
      }
    }
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
    stats.mean[f] = mean;
    stats.stddev[f] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return stats;
}

void standardize_dynamic(DataCube& cube, const CubeStats& stats) {
  if (stats.mean.size() != static_cast<std::size_t>(cube.n_dyn) || stats.stddev.size() != stats.mean.size()) {
    throw DataError("standardization stats do not match the cube's dynamic feature count");
  }
  const auto cells = static_cast<std::size_t>(cube.height) * cube.width;
  for (int t = 0; t < cube.t_len; ++t) {
    for (int f = 0; f < cube.n_dyn; ++f) {
      float* base = &cube.dyn[cube.dyn_index(t, f, 0, 0)];
      for (std::size_t c = 0; c < cells; ++c) {
        base[c] = static_cast<float>((base[c] - stats.mean[f]) / stats.stddev[f]);
      }
    }
  }
}

void save_stats(const CubeStats& stats, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  out << "features = " << stats.mean.size() << '\n';
  for (std::size_t f = 0; f < stats.mean.size(); ++f) {
    out << "mean." << f << " = " << format_double(stats.mean[f]) << '\n';
    out << "std." << f << " = " << format_double(stats.stddev[f]) << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

CubeStats load_stats(const fs::path& path) {
  const Config cfg = Config::load(path);
  const int n = cfg.get_int("features", -1);
  if (n < 0) throw DataError("standardization file lacks 'features': " + path.string());
  CubeStats stats;
  for (int f = 0; f < n; ++f) {
    const auto m = cfg.get_optional_double("mean." + std::to_string(f));
    const auto s = cfg.get_optional_double("std." + std::to_string(f));
    if (!m || !s) throw DataError("standardization file incomplete at feature " + std::to_string(f));
    stats.mean.push_back(*m);
    stats.stddev.push_back(*s);
  }
  return stats;
}

DataCube load_cube(const fs::path& manifest_path) {
  const fs::path manifest = fs::is_directory(manifest_path) ? manifest_path / kManifestName : manifest_path;
  if (!fs::exists(manifest)) throw MissingPathError(manifest.string());
  const fs::path dir = manifest.parent_path();
  const Config cfg = Config::load(manifest);
  cfg.require_known(kManifestKeys);

  if (cfg.get_string("dtype", "f32") != "f32") throw DataError("manifest: only dtype = f32 is supported");
  DataCube cube;
  cube.t_len = cfg.get_int("dims.T", 0);
  cube.height = cfg.get_int("dims.H", 0);
  cube.width = cfg.get_int("dims.W", 0);
  cube.n_dyn = cfg.get_int("dims.D_d", 0);
  cube.n_stat = cfg.get_int("dims.D_s", 0);
  if (cube.t_len <= 0 || cube.height <= 0 || cube.width <= 0 || cube.n_dyn <= 0 || cube.n_stat < 0) {
    throw DataError("manifest: dims must be positive");
  }
  const auto cells = static_cast<std::size_t>(cube.height) * cube.width;
  cube.dyn = read_f32(dir / cfg.get_string("file.dyn", "dyn.f32"),
                      static_cast<std::size_t>(cube.t_len) * cube.n_dyn * cells);
  cube.stat = read_f32(dir / cfg.get_string("file.stat", "stat.f32"),
                       static_cast<std::size_t>(cube.n_stat) * cells);
  cube.fire = read_bytes(dir / cfg.get_string("file.fire", "fire.u8"),
                         static_cast<std::size_t>(cube.t_len) * cells);

  if (auto names = cfg.get("names.dyn")) {
    cube.dyn_names = split_names(*names);
  } else {
    for (int f = 0; f < cube.n_dyn; ++f) cube.dyn_names.push_back("dyn" + std::to_string(f));
  }
  if (auto names = cfg.get("names.stat")) {
    cube.stat_names = split_names(*names);
  } else {
    for (int f = 0; f < cube.n_stat; ++f) cube.stat_names.push_back("stat" + std::to_string(f));
  }
  cube.validate();

  if (cfg.get_bool("standardize", false)) {
    const fs::path stats_path = dir / kStatsName;
    const CubeStats stats = fs::exists(stats_path)
                                ? load_stats(stats_path)
                                : dynamic_stats(cube, 0, cfg.get_int("standardize_until", cube.t_len));
    standardize_dynamic(cube, stats);
  }
  return cube;
}

void save_cube(const DataCube& cube, const fs::path& dir, const CubeWriteOptions& options) {
  cube.validate();
  fs::create_directories(dir);
  write_f32(dir / "dyn.f32", cube.dyn);
  write_f32(dir / "stat.f32", cube.stat);
  {
    std::ofstream out(dir / "fire.u8", std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(cube.fire.data()), static_cast<std::streamsize>(cube.fire.size()));
    if (!out) throw DataError("write failed: fire.u8");
  }
  std::ofstream out(dir / kManifestName, std::ios::trunc);
  out << "format = mccl-cube\n"
      << "version = 1\n"
      << "dims.T = " << cube.t_len << '\n'
      << "dims.H = " << cube.height << '\n'
      << "dims.W = " << cube.width << '\n'
      << "dims.D_d = " << cube.n_dyn << '\n'
      << "dims.D_s = " << cube.n_stat << '\n'
      << "dtype = f32\n"
      << "file.dyn = dyn.f32\n"
      << "file.stat = stat.f32\n"
      << "file.fire = fire.u8\n"
      << "names.dyn = " << join_names(cube.dyn_names) << '\n'
      << "names.stat = " << join_names(cube.stat_names) << '\n'
      << "standardize = " << (options.standardize ? "true" : "false") << '\n';
  if (options.standardize_until) out << "standardize_until = " << *options.standardize_until << '\n';
  if (!out) throw DataError("write failed: manifest");
}

std::string to_string(PatchMode mode) {
  return mode == PatchMode::grid ? "grid" : "sliding_center";
}

std::string to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::pool: return "pool";
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
  }
  return "pool";
}

PatchMode parse_patch_mode(const std::string& text) {
  if (text == "sliding_center" || text == "sliding") return PatchMode::sliding_center;
  if (text == "grid") return PatchMode::grid;
  throw ConfigError("unknown patch mode: " + text);
}

const Patch* PatchSet::find(int id) const {
  if (by_id_.size() != patches.size()) const_cast<PatchSet*>(this)->reindex();
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &patches[it->second];
}

const Patch& PatchSet::at(int id) const {
  const Patch* p = find(id);
  if (!p) throw std::out_of_range("patch id not in set: " + std::to_string(id));
  return *p;
}

void PatchSet::reindex() {
  by_id_.clear();
  by_id_.reserve(patches.size());
  for (std::size_t k = 0; k < patches.size(); ++k) {
    if (!by_id_.emplace(patches[k].id, k).second) {
      throw std::logic_error("duplicate patch id " + std::to_string(patches[k].id));
    }
  }
}

std::size_t PatchSet::count_label(int label) const {
  std::size_t n = 0;
  for (const auto& p : patches) n += p.label == label ? 1 : 0;
  return n;
}

namespace {

void check_geometry(const DataCube& cube, const PatchGeometry& g) {
  if (g.w < 1 || g.h < 1) throw std::invalid_argument("patch extent must be positive");
  if (g.w > cube.height || g.h > cube.width) throw std::invalid_argument("window larger than cube");
  if (g.mode == PatchMode::sliding_center && (g.w % 2 == 0 || g.h % 2 == 0)) {
    throw std::invalid_argument("sliding_center requires odd window extents");
  }
  if (g.hist_len < 1 || g.hist_len > cube.t_len - 1) {
    throw std::invalid_argument("history length too large for the cube");
  }
  if (g.n_dyn != cube.n_dyn || g.n_stat != cube.n_stat) {
    throw std::invalid_argument("patch geometry feature counts differ from the cube");
  }
}

// Top-left cell of the window for an anchor.
std::pair<int, int> window_origin(const PatchGeometry& g, int i, int j) {
  if (g.mode == PatchMode::sliding_center) return {i - g.w / 2, j - g.h / 2};
  return {i, j};
}

int patch_label(const DataCube& cube, const PatchGeometry& g, int t, int i, int j) {
  if (g.mode == PatchMode::sliding_center) return cube.fire_at(t + 1, i, j);
  for (int r = 0; r < g.w; ++r) {
    for (int c = 0; c < g.h; ++c) {
      if (cube.fire_at(t + 1, i + r, j + c)) return 1;
    }
  }
  return 0;
}

}  // namespace

Patch make_patch(const DataCube& cube, const PatchGeometry& g, int id, int t, int i, int j) {
  const auto [r0, c0] = window_origin(g, i, j);
  if (r0 < 0 || c0 < 0 || r0 + g.w > cube.height || c0 + g.h > cube.width) {
    throw std::invalid_argument("patch window leaves the cube");
  }
  if (t - g.hist_len + 1 < 0 || t + 1 >= cube.t_len) throw std::invalid_argument("patch anchor time out of range");
  Patch p;
  p.id = id;
  p.t = t;
  p.i = i;
  p.j = j;
  p.label = patch_label(cube, g, t, i, j);
  p.dyn.resize(g.dyn_size());
  p.stat.resize(g.stat_size());
  Eigen::Index k = 0;
  for (int l = 0; l < g.hist_len; ++l) {
    const int tt = t - g.hist_len + 1 + l;
    for (int f = 0; f < g.n_dyn; ++f) {
      for (int r = 0; r < g.w; ++r) {
        const float* row = &cube.dyn[cube.dyn_index(tt, f, r0 + r, c0)];
        for (int c = 0; c < g.h; ++c) p.dyn[k++] = row[c];
      }
    }
  }
  k = 0;
  for (int f = 0; f < g.n_stat; ++f) {
    for (int r = 0; r < g.w; ++r) {
      const float* row = &cube.stat[cube.stat_index(f, r0 + r, c0)];
      for (int c = 0; c < g.h; ++c) p.stat[k++] = row[c];
    }
  }
  return p;
}

PatchSet extract_patches(const DataCube& cube, const PatchGeometry& g, int t_first, int t_last, int first_id) {
  check_geometry(cube, g);
  const int lo = g.hist_len - 1;
  const int hi = cube.t_len - 2;
  if (t_first < lo || t_last > hi) throw std::invalid_argument("anchor time range outside [L-1, T-2]");

  std::vector<std::pair<int, int>> anchors;
  if (g.mode == PatchMode::sliding_center) {
    for (int i = g.w / 2; i + g.w / 2 < cube.height; ++i) {
      for (int j = g.h / 2; j + g.h / 2 < cube.width; ++j) anchors.emplace_back(i, j);
    }
  } else {
    for (int bi = 0; bi < cube.height / g.w; ++bi) {
      for (int bj = 0; bj < cube.width / g.h; ++bj) anchors.emplace_back(bi * g.w, bj * g.h);
    }
  }

  PatchSet set;
  set.geometry = g;
  if (t_last >= t_first) set.patches.reserve(anchors.size() * static_cast<std::size_t>(t_last - t_first + 1));
  int id = first_id;
  for (int t = t_first; t <= t_last; ++t) {
    for (const auto& [i, j] : anchors) set.patches.push_back(make_patch(cube, g, id++, t, i, j));
  }
  set.reindex();
  return set;
}

PatchSet extract_patches(const DataCube& cube, PatchMode mode, int w, int h, int hist_len) {
  PatchGeometry g{mode, w, h, hist_len, cube.n_dyn, cube.n_stat};
  check_geometry(cube, g);
  return extract_patches(cube, g, hist_len - 1, cube.t_len - 2, 0);
}

TimeSplit split_by_time(int t_len, int hist_len, double train_frac, double val_frac) {
  TimeSplit s;
  s.first = hist_len - 1;
  s.last = t_len - 2;
  const int n = s.last - s.first + 1;
  if (n < 3) throw std::invalid_argument("need at least three valid anchor timesteps to split");
  if (train_frac <= 0.0 || val_frac <= 0.0 || train_frac + val_frac >= 1.0) {
    throw ConfigError("split fractions must be positive and sum below 1");
  }
  const int n_train = std::clamp(static_cast<int>(std::lround(n * train_frac)), 1, n - 2);
  const int n_val = std::clamp(static_cast<int>(std::lround(n * val_frac)), 1, n - n_train - 1);
  s.train_last = s.first + n_train - 1;
  s.val_last = s.train_last + n_val;
  return s;
}

}  // namespace mccl
