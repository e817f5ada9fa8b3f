#pragma once

// Data preparation and the three training protocols:
//   ce_only   cross-entropy for epochs_pre epochs at lr_pre
//   finetune  cross-entropy for epochs_pre epochs, then epochs_cl epochs of
//             CE + gamma * CL at lr_cl
//   full      CE + gamma * CL for epochs_pre + epochs_cl epochs at lr_pre

#include "mccl/balance.hpp"
#include "mccl/config.hpp"
#include "mccl/cube.hpp"
#include "mccl/diagnostics.hpp"
#include "mccl/model.hpp"
#include "mccl/objective.hpp"
#include "mccl/samplers.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mccl {

struct DataConfig {
  PatchGeometry geometry;  // n_dyn / n_stat are taken from the cube
  double train_frac = 0.6;
  double val_frac = 0.2;
  BalanceConfig balance;
  CurriculumMapOptions map_options;

  void validate() const;
  static DataConfig from_config(const Config& cfg);  // keys "data.*", "balance.*"
};

struct PreparedData {
  PatchGeometry geometry;
  TimeSplit split;
  CubeStats stats;     // dynamic standardization, training timesteps only
  PatchSet train_pool;  // every training patch before balancing
  PatchSet train, val, test;  // pseudo-balanced
  ScoreMap curriculum;        // built on `train`
  HistoricalMap historical;   // built on `train_pool`
};

// Standardizes the cube in place with training-split statistics, extracts and
// balances the three splits and builds both sampler maps.
PreparedData prepare_data(DataCube& cube, const DataConfig& cfg);

// Directory layout documented in docs/FORMATS.md.
void save_prepared(const PreparedData& data, const std::filesystem::path& cube_dir,
                   const std::filesystem::path& out_dir);
PreparedData load_prepared(const std::filesystem::path& dir);

enum class Protocol { ce_only, finetune, full };
enum class LossKind { triplet, scl };

std::string to_string(Protocol p);
std::string to_string(LossKind k);
Protocol parse_protocol(const std::string& text);
LossKind parse_loss(const std::string& text);

struct TrainConfig {
  Protocol protocol = Protocol::finetune;
  Strategy strategy = Strategy::curriculum;
  LossKind loss = LossKind::triplet;
  int epochs_pre = 15;
  int epochs_cl = 5;
  double lr_pre = 0.01;
  std::optional<double> lr_cl;   // default 10 * lr_pre
  std::optional<double> margin;  // default 20 for label, 5 otherwise
  double norm_p = 2.0;
  double tau = 0.1;
  int batch_size = 32;
  std::uint64_t seed = 1;
  double q0 = 0.1;
  double q1 = 1.0;
  ModelConfig model;

  static TrainConfig from_config(const Config& cfg);  // keys "train.*", "model.*"
};

// TrainConfig with defaults filled in and invariants checked.
struct ResolvedTrainConfig {
  TrainConfig cfg;
  double lr_cl = 0.0;
  LossConfig loss;
  int cl_start = 0;      // first epoch with the contrastive term
  int total_epochs = 0;
  std::vector<std::string> warnings;
};

// Throws ConfigError naming the violated invariant.
ResolvedTrainConfig resolve(const TrainConfig& cfg);

struct HistoryRow {
  int epoch = 0;
  std::string phase;  // "ce" or "cl"
  double ce = 0.0;
  double cl = 0.0;
  double gamma = 0.0;
  Metric val_f1;
  Metric val_auroc;
  std::optional<double> window_q;  // curriculum runs in the cl phase
};

struct TrainState {
  ModelParams<float> params;
  int epochs_done = 0;
};

struct TrainOptions {
  std::optional<TrainState> resume;
  std::optional<int> stop_after;  // stop once this many epochs are complete
};

struct TrainResult {
  TrainState state;
  std::vector<HistoryRow> history;  // rows of the epochs run by this call
  std::vector<double> epoch_seconds;
  std::vector<std::string> warnings;
};

TrainResult train(const PreparedData& data, const TrainConfig& cfg, const TrainOptions& options = {});

// Logits and dynamic latents over a patch set, in set order.
std::vector<double> predict_logits(const ModelConfig& cfg, const ModelParams<float>& params, const PatchSet& set);
Eigen::MatrixXd dynamic_latents(const ModelConfig& cfg, const ModelParams<float>& params, const PatchSet& set);

// Threshold 0.5 on sigmoid(logit). Throws std::invalid_argument on an empty set.
MetricsReport evaluate(const ModelConfig& cfg, const ModelParams<float>& params, const PatchSet& set);

// Sidecar entries "param.<tensor>" (f32, row-major) plus "meta.*" scalars.
void save_checkpoint(const TrainState& state, const ModelConfig& cfg, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg);

void write_history_csv(const std::vector<HistoryRow>& rows, const std::filesystem::path& path, bool append = false);

}  // namespace mccl
