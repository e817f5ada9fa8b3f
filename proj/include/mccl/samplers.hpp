#pragma once

// Triplet selection: label, historical and curriculum sampling, plus the
// morphology score the curriculum ranks candidates by.

#include "mccl/cube.hpp"
#include "mccl/random.hpp"
#include "mccl/sidecar.hpp"

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mccl {

enum class Strategy { label, historical, curriculum };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& text);

// Euclidean norm of the difference of two standardized static tensors.
template <typename DerivedA, typename DerivedB>
double morphology_score(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("morphology_score: shape mismatch");
  }
  return (a.template cast<double>() - b.template cast<double>()).norm();
}

// Static tensors of every patch, standardized per static feature over all
// cells of all patches in the set. Parallel to set.patches.
std::vector<Eigen::VectorXf> standardized_statics(const PatchSet& set);

struct CandidateList {
  std::vector<int> ids;
  std::vector<float> scores;  // ascending; ties ordered by id

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

struct ScoreEntry {
  CandidateList same;  // candidates sharing the anchor's label
  CandidateList diff;  // candidates with the other label
};

struct ScoreMap {
  std::vector<int> anchor_ids;
  std::vector<ScoreEntry> entries;  // parallel to anchor_ids

  const ScoreEntry* find(int anchor_id) const;
  void reindex();

private:
  std::unordered_map<int, std::size_t> by_id_;
};

struct CurriculumMapOptions {
  // Sets larger than this keep only the `nearest_k` lowest-score candidates per list.
  std::size_t cap_threshold = 2048;
  std::size_t nearest_k = 256;
};

// Throws std::invalid_argument on a single-class set or fewer than two patches.
ScoreMap build_curriculum_map(const PatchSet& set, const CurriculumMapOptions& options = {});

struct HistoricalEntry {
  std::vector<int> positives;
  std::vector<int> negatives;
};

struct HistoricalMap {
  std::vector<int> anchor_ids;  // every positive patch of the source set
  std::vector<HistoricalEntry> entries;

  const HistoricalEntry* find(int anchor_id) const;
  void reindex();

private:
  std::unordered_map<int, std::size_t> by_id_;
};

// Candidates come from the anchor's own cell at other times; a list that is
// still empty is filled from the 8 neighbouring lattice cells.
HistoricalMap build_historical_map(const PatchSet& set);

struct CurriculumSchedule {
  double q0 = 0.1;
  double q1 = 1.0;
  int epochs = 1;

  void validate() const;
  // Admissible percentile at `epoch`, linear from q0 to q1; clamped past the last epoch.
  double percentile(int epoch) const;
  // Number of admissible entries, ceil(q * len).
  static std::size_t window(double q, std::size_t len);
};

struct Triplet {
  int anchor = 0;
  int positive = 0;
  int negative = 0;
};

// Draws (positive, negative) for an anchor according to one strategy.
// Candidates are resolved against `candidates` (the set the maps were built on).
class TripletSampler {
public:
  TripletSampler(Strategy strategy, const PatchSet& candidates, const ScoreMap* curriculum,
                 const HistoricalMap* historical, CurriculumSchedule schedule = {});

  Strategy strategy() const { return strategy_; }
  const CurriculumSchedule& schedule() const { return schedule_; }
  const PatchSet& candidates() const { return *candidates_; }

  // Nullopt when a required candidate list is empty.
  std::optional<Triplet> sample(const Patch& anchor, int epoch, Rng& rng) const;

  // Admissible candidate ids for the anchor at `epoch` (same-label / other-label).
  std::vector<int> admissible(const Patch& anchor, int epoch, bool same_label) const;

private:
  Strategy strategy_;
  const PatchSet* candidates_;
  const ScoreMap* curriculum_;
  const HistoricalMap* historical_;
  CurriculumSchedule schedule_;
  std::vector<int> by_label_[2];
  std::unordered_map<int, std::size_t> label_pos_;
};

// Sidecar entries "curriculum.*" and "historical.*": flattened lists with
// offsets, see docs/FORMATS.md.
void put_score_map(Sidecar& out, const ScoreMap& map);
ScoreMap get_score_map(const Sidecar& in);
void put_historical_map(Sidecar& out, const HistoricalMap& map);
HistoricalMap get_historical_map(const Sidecar& in);

}  // namespace mccl
