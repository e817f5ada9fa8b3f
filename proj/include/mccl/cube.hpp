#pragma once

// Spatio-temporal data cube, on-disk dataset format and patch extraction.
//
// A dataset is a directory holding `manifest.txt` plus three flat arrays:
//   dyn   f32 little-endian, row-major [T, D_d, H, W]
//   stat  f32 little-endian, row-major [D_s, H, W]
//   fire  u8, row-major [T, H, W], entries 0 or 1
// See docs/FORMATS.md for the manifest keys.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace mccl {

struct DataCube {
  int t_len = 0;
  int height = 0;
  int width = 0;
  int n_dyn = 0;
  int n_stat = 0;
  std::vector<float> dyn;           // [T, D_d, H, W]
  std::vector<float> stat;          // [D_s, H, W]
  std::vector<std::uint8_t> fire;   // [T, H, W]
  std::vector<std::string> dyn_names;
  std::vector<std::string> stat_names;

  std::size_t dyn_index(int t, int f, int i, int j) const {
    return ((static_cast<std::size_t>(t) * n_dyn + f) * height + i) * width + j;
  }
  std::size_t stat_index(int f, int i, int j) const {
    return (static_cast<std::size_t>(f) * height + i) * width + j;
  }
  std::size_t fire_index(int t, int i, int j) const {
    return (static_cast<std::size_t>(t) * height + i) * width + j;
  }
  float dyn_at(int t, int f, int i, int j) const { return dyn[dyn_index(t, f, i, j)]; }
  float stat_at(int f, int i, int j) const { return stat[stat_index(f, i, j)]; }
  std::uint8_t fire_at(int t, int i, int j) const { return fire[fire_index(t, i, j)]; }

  // Throws DataError on any inconsistency (sizes, fire values, non-finite entries).
  void validate() const;
};

// Per-dynamic-feature standardization statistics.
struct CubeStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

// Statistics over timesteps [t_begin, t_end).
CubeStats dynamic_stats(const DataCube& cube, int t_begin, int t_end);
void standardize_dynamic(DataCube& cube, const CubeStats& stats);
void save_stats(const CubeStats& stats, const std::filesystem::path& path);
CubeStats load_stats(const std::filesystem::path& path);

inline constexpr const char* kManifestName = "manifest.txt";
inline constexpr const char* kStatsName = "standardization.txt";

// Accepts the dataset directory or the manifest file itself. When the manifest
// sets `standardize = true`, dynamic features are standardized with the stats
// in the sibling `standardization.txt` if present, otherwise with stats over
// timesteps [0, standardize_until) (default: the whole cube).
DataCube load_cube(const std::filesystem::path& manifest_path);

struct CubeWriteOptions {
  bool standardize = false;
  std::optional<int> standardize_until;
};
void save_cube(const DataCube& cube, const std::filesystem::path& dir,
               const CubeWriteOptions& options = {});

enum class PatchMode { sliding_center, grid };
enum class SplitTag { pool, train, val, test };

std::string to_string(PatchMode mode);
std::string to_string(SplitTag tag);
PatchMode parse_patch_mode(const std::string& text);

struct PatchGeometry {
  PatchMode mode = PatchMode::sliding_center;
  int w = 5;         // rows
  int h = 5;         // cols
  int hist_len = 10;
  int n_dyn = 0;
  int n_stat = 0;

  Eigen::Index dyn_size() const { return static_cast<Eigen::Index>(hist_len) * n_dyn * w * h; }
  Eigen::Index stat_size() const { return static_cast<Eigen::Index>(n_stat) * w * h; }
  // Lattice spacing between neighbouring anchors.
  int row_step() const { return mode == PatchMode::grid ? w : 1; }
  int col_step() const { return mode == PatchMode::grid ? h : 1; }
};

// One training example. For sliding_center patches (i, j) is the centre cell;
// for grid patches it is the top-left cell of the block.
struct Patch {
  int id = 0;
  int t = 0;
  int i = 0;
  int j = 0;
  int label = 0;
  Eigen::VectorXf dyn;   // [L, D_d, w, h], timesteps t-L+1 .. t
  Eigen::VectorXf stat;  // [D_s, w, h]
};

class PatchSet {
public:
  PatchGeometry geometry;
  SplitTag split = SplitTag::pool;
  std::vector<Patch> patches;

  std::size_t size() const { return patches.size(); }
  bool empty() const { return patches.empty(); }

  // Lookup by patch id; the index is rebuilt lazily after mutation via reindex().
  const Patch* find(int id) const;
  const Patch& at(int id) const;
  void reindex();

  std::size_t count_label(int label) const;

private:
  std::unordered_map<int, std::size_t> by_id_;
};

// Anchors at t in [L-1, T-2]; every patch gets a fresh id starting at `first_id`
// in (t, row, col) order.
PatchSet extract_patches(const DataCube& cube, PatchMode mode, int w, int h, int hist_len);
PatchSet extract_patches(const DataCube& cube, const PatchGeometry& geometry, int t_first,
                         int t_last, int first_id = 0);

// Patch tensor of an already-known anchor, used to rebuild sets from a sidecar index.
Patch make_patch(const DataCube& cube, const PatchGeometry& geometry, int id, int t, int i, int j);

// Temporal split of the valid anchor range into train / val / test.
struct TimeSplit {
  int first = 0;      // first valid anchor t
  int train_last = 0;
  int val_last = 0;
  int last = 0;       // last valid anchor t
};
TimeSplit split_by_time(int t_len, int hist_len, double train_frac, double val_frac);

}  // namespace mccl
