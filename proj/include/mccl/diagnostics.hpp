#pragma once

// Classification metrics, triplet feature-difference tables, latent-space
// distance reports and input-cost scaling.

#include "mccl/cube.hpp"
#include "mccl/random.hpp"
#include "mccl/samplers.hpp"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mccl {

// std::nullopt is the undefined marker (zero denominator or missing class).
using Metric = std::optional<double>;

struct ClassMetrics {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  Metric precision, recall, iou, f1;
};

struct MetricsReport {
  std::array<ClassMetrics, 2> per_class;  // [0] background, [1] event
  Metric auroc;
  // Macro means over the classes whose metric is defined.
  Metric precision, recall, iou, f1;
};

MetricsReport confusion_metrics(std::span<const int> preds, std::span<const int> labels);

// Mann-Whitney AUROC with midranks; undefined unless both classes are present.
Metric auroc(std::span<const double> scores, std::span<const int> labels);

// Thresholds probabilities at 0.5 and fills in the AUROC.
MetricsReport classification_report(std::span<const double> probabilities, std::span<const int> labels);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

struct FeatureDiffRow {
  std::string feature;
  MeanStd anchor_positive;
  MeanStd anchor_negative;
  double ratio = 0.0;  // mean_AN / mean_AP
  std::size_t anchors = 0;
};

// For each anchor draws `n_pairs` triplets with `sampler`, then per dynamic
// feature averages |x_a - x_p| and |x_a - x_n| over time and space.
// Candidate ids are resolved through the sampler's candidate set.
std::vector<FeatureDiffRow> feature_diff_report(const std::vector<const Patch*>& anchors,
                                                const TripletSampler& sampler,
                                                const std::vector<std::string>& feature_names, int n_pairs,
                                                int epoch, std::uint64_t seed);

struct LatentDistanceReport {
  double intra = 0.0;
  double inter = 0.0;
  double ratio = 0.0;  // inter / max(intra, 1e-12)
  bool intra_zero = false;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// All positives (at most `sample_cap`) plus an equal number of randomly drawn
// negatives; columns are L2-normalized before pairwise distances. The
// intra-class mean pools the positive and negative pairs.
LatentDistanceReport latent_distance_report(const Eigen::MatrixXd& latents, std::span<const int> labels,
                                            std::size_t sample_cap, std::uint64_t seed);

// Per-sample input element count L*D_d*w*h + D_s*w*h.
long long input_cost(long long w, long long h, long long hist_len, long long n_dyn, long long n_stat);

// CSV writers. Formats are documented in docs/FORMATS.md.
void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path);

struct StrategyDiffTable {
  Strategy strategy;
  std::vector<FeatureDiffRow> rows;
};
void write_feature_diff_csv(const std::vector<StrategyDiffTable>& tables, const std::filesystem::path& path);

struct NamedLatentReport {
  std::string model;
  LatentDistanceReport report;
};
void write_latent_distance_csv(const std::vector<NamedLatentReport>& reports, const std::filesystem::path& path);

// Grouped bar chart of AN/AP ratios per feature.
void write_ratio_svg(const std::vector<StrategyDiffTable>& tables, const std::filesystem::path& path);

std::string format_metric(const Metric& m);

}  // namespace mccl
