#include "mccl/samplers.hpp"

#include "mccl/errors.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace mccl {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::label: return "label";
    case Strategy::historical: return "historical";
    case Strategy::curriculum: return "curriculum";
  }
  return "label";
}

Strategy parse_strategy(const std::string& text) {
  if (text == "label") return Strategy::label;
  if (text == "historical") return Strategy::historical;
  if (text == "curriculum") return Strategy::curriculum;
  throw ConfigError("unknown strategy: " + text);
}

std::vector<Eigen::VectorXf> standardized_statics(const PatchSet& set) {
  const auto& g = set.geometry;
  const Eigen::Index cells = static_cast<Eigen::Index>(g.w) * g.h;
  std::vector<double> mean(g.n_stat, 0.0);
  std::vector<double> sd(g.n_stat, 1.0);
  for (int f = 0; f < g.n_stat; ++f) {
    double sum = 0.0;
    double sq = 0.0;
    for (const auto& p : set.patches) {
      const auto seg = p.stat.segment(f * cells, cells).cast<double>();
      sum += seg.sum();
      sq += seg.squaredNorm();
    }
    const double n = static_cast<double>(set.size()) * static_cast<double>(cells);
    mean[f] = sum / n;
    const double var = sq / n - mean[f] * mean[f];
    sd[f] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  std::vector<Eigen::VectorXf> out;
  out.reserve(set.size());
  for (const auto& p : set.patches) {
    Eigen::VectorXf s(p.stat.size());
    for (int f = 0; f < g.n_stat; ++f) {
      s.segment(f * cells, cells) =
          ((p.stat.segment(f * cells, cells).cast<double>().array() - mean[f]) / sd[f]).cast<float>().matrix();
    }
    out.push_back(std::move(s));
  }
  return out;
}

const ScoreEntry* ScoreMap::find(int anchor_id) const {
  if (by_id_.size() != anchor_ids.size()) const_cast<ScoreMap*>(this)->reindex();
  auto it = by_id_.find(anchor_id);
  return it == by_id_.end() ? nullptr : &entries[it->second];
}

void ScoreMap::reindex() {
  by_id_.clear();
  for (std::size_t k = 0; k < anchor_ids.size(); ++k) by_id_[anchor_ids[k]] = k;
}

const HistoricalEntry* HistoricalMap::find(int anchor_id) const {
  if (by_id_.size() != anchor_ids.size()) const_cast<HistoricalMap*>(this)->reindex();
  auto it = by_id_.find(anchor_id);
  return it == by_id_.end() ? nullptr : &entries[it->second];
}

void HistoricalMap::reindex() {
  by_id_.clear();
  for (std::size_t k = 0; k < anchor_ids.size(); ++k) by_id_[anchor_ids[k]] = k;
}

ScoreMap build_curriculum_map(const PatchSet& set, const CurriculumMapOptions& options) {
  if (set.size() < 2) throw std::invalid_argument("build_curriculum_map: need at least two patches");
  if (set.count_label(1) == 0 || set.count_label(0) == 0) {
    throw std::invalid_argument("build_curriculum_map: single-class patch set");
  }
  // Canonical order by id makes the map independent of input order.
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return set.patches[a].id < set.patches[b].id; });

  const auto statics = standardized_statics(set);
  const std::size_t n = order.size();
  const bool capped = n > options.cap_threshold;

  ScoreMap map;
  map.anchor_ids.reserve(n);
  map.entries.reserve(n);
  std::vector<std::pair<float, int>> same;
  std::vector<std::pair<float, int>> diff;
  for (std::size_t a : order) {
    const Patch& anchor = set.patches[a];
    same.clear();
    diff.clear();
    for (std::size_t b : order) {
      if (b == a) continue;
      const Patch& cand = set.patches[b];
      const auto score = static_cast<float>(morphology_score(statics[a], statics[b]));
      (cand.label == anchor.label ? same : diff).emplace_back(score, cand.id);
    }
    auto finish = [&](std::vector<std::pair<float, int>>& items) {
      CandidateList list;
      if (capped && items.size() > options.nearest_k) {
        std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(options.nearest_k),
                          items.end());
        items.resize(options.nearest_k);
      } else {
        std::sort(items.begin(), items.end());
      }
      list.ids.reserve(items.size());
      list.scores.reserve(items.size());
      for (const auto& [score, id] : items) {
        list.scores.push_back(score);
        list.ids.push_back(id);
      }
      return list;
    };
    map.anchor_ids.push_back(anchor.id);
    map.entries.push_back({finish(same), finish(diff)});
  }
  map.reindex();
  return map;
}

HistoricalMap build_historical_map(const PatchSet& set) {
  const int rs = set.geometry.row_step();
  const int cs = set.geometry.col_step();
  // (row, col) -> patch indices sorted by (t, id).
  std::map<std::pair<int, int>, std::vector<std::size_t>> by_cell;
  for (std::size_t k = 0; k < set.size(); ++k) {
    by_cell[{set.patches[k].i, set.patches[k].j}].push_back(k);
  }
  for (auto& [cell, members] : by_cell) {
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      const auto& pa = set.patches[a];
      const auto& pb = set.patches[b];
      return pa.t != pb.t ? pa.t < pb.t : pa.id < pb.id;
    });
  }

  std::vector<std::size_t> anchors;
  for (std::size_t k = 0; k < set.size(); ++k) {
    if (set.patches[k].label == 1) anchors.push_back(k);
  }
  std::sort(anchors.begin(), anchors.end(),
            [&](std::size_t a, std::size_t b) { return set.patches[a].id < set.patches[b].id; });

  HistoricalMap map;
  for (std::size_t a : anchors) {
    const Patch& anchor = set.patches[a];
    HistoricalEntry entry;
    auto collect = [&](int ci, int cj, bool own_cell, bool want_pos, std::vector<int>& out) {
      auto it = by_cell.find({ci, cj});
      if (it == by_cell.end()) return;
      for (std::size_t k : it->second) {
        const Patch& p = set.patches[k];
        if (own_cell && p.t == anchor.t) continue;
        if ((p.label == anchor.label) == want_pos) out.push_back(p.id);
      }
    };
    for (int pass = 0; pass < 2; ++pass) {
      const bool want_pos = pass == 0;
      auto& out = want_pos ? entry.positives : entry.negatives;
      collect(anchor.i, anchor.j, true, want_pos, out);
      if (!out.empty()) continue;
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          collect(anchor.i + di * rs, anchor.j + dj * cs, false, want_pos, out);
        }
      }
    }
    map.anchor_ids.push_back(anchor.id);
    map.entries.push_back(std::move(entry));
  }
  map.reindex();
  return map;
}

void CurriculumSchedule::validate() const {
  if (!(q0 > 0.0 && q0 <= 1.0)) throw ConfigError("curriculum q0 must lie in (0, 1]");
  if (!(q1 >= q0 && q1 <= 1.0)) throw ConfigError("curriculum q1 must lie in [q0, 1]");
  if (epochs < 1) throw ConfigError("curriculum epochs must be >= 1");
}

double CurriculumSchedule::percentile(int epoch) const {
  if (epochs <= 1) return q1;
  const int e = std::clamp(epoch, 0, epochs - 1);
  return q0 + (q1 - q0) * static_cast<double>(e) / static_cast<double>(epochs - 1);
}

std::size_t CurriculumSchedule::window(double q, std::size_t len) {
  if (len == 0) return 0;
  // The small offset keeps exact products such as 0.25 * 8 from rounding up.
  const double raw = std::ceil(q * static_cast<double>(len) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, len);
}

TripletSampler::TripletSampler(Strategy strategy, const PatchSet& candidates, const ScoreMap* curriculum,
                               const HistoricalMap* historical, CurriculumSchedule schedule)
    : strategy_(strategy),
      candidates_(&candidates),
      curriculum_(curriculum),
      historical_(historical),
      schedule_(schedule) {
  schedule_.validate();
  if (strategy_ == Strategy::curriculum && curriculum_ == nullptr) {
    throw std::invalid_argument("curriculum sampling needs a score map");
  }
  if (strategy_ == Strategy::historical && historical_ == nullptr) {
    throw std::invalid_argument("historical sampling needs a historical map");
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return candidates.patches[a].id < candidates.patches[b].id;
  });
  for (std::size_t k : order) {
    const Patch& p = candidates.patches[k];
    auto& list = by_label_[p.label ? 1 : 0];
    label_pos_[p.id] = list.size();
    list.push_back(p.id);
  }
}

namespace {

// Uniform draw from `ids` excluding `skip_pos` (when valid).
std::optional<int> draw_excluding(const std::vector<int>& ids, std::optional<std::size_t> skip_pos, Rng& rng) {
  const std::size_t n = ids.size() - (skip_pos ? 1 : 0);
  if (ids.empty() || n == 0) return std::nullopt;
  std::size_t k = uniform_index(rng, n);
  if (skip_pos && k >= *skip_pos) ++k;
  return ids[k];
}

std::optional<int> draw_prefix(const CandidateList& list, double q, Rng& rng) {
  if (list.empty()) return std::nullopt;
  return list.ids[uniform_index(rng, CurriculumSchedule::window(q, list.size()))];
}

std::optional<int> draw_any(const std::vector<int>& ids, Rng& rng) {
  if (ids.empty()) return std::nullopt;
  return ids[uniform_index(rng, ids.size())];
}

}  // namespace

std::optional<Triplet> TripletSampler::sample(const Patch& anchor, int epoch, Rng& rng) const {
  std::optional<int> pos;
  std::optional<int> neg;
  switch (strategy_) {
    case Strategy::label: {
      const int l = anchor.label ? 1 : 0;
      std::optional<std::size_t> skip;
      if (auto it = label_pos_.find(anchor.id); it != label_pos_.end()) skip = it->second;
      pos = draw_excluding(by_label_[l], skip, rng);
      if (!pos) return std::nullopt;
      neg = draw_excluding(by_label_[1 - l], std::nullopt, rng);
      break;
    }
    case Strategy::historical: {
      const HistoricalEntry* e = historical_->find(anchor.id);
      if (e == nullptr) return std::nullopt;
      pos = draw_any(e->positives, rng);
      if (!pos) return std::nullopt;
      neg = draw_any(e->negatives, rng);
      break;
    }
    case Strategy::curriculum: {
      const ScoreEntry* e = curriculum_->find(anchor.id);
      if (e == nullptr) return std::nullopt;
      const double q = schedule_.percentile(epoch);
      pos = draw_prefix(e->same, q, rng);
      if (!pos) return std::nullopt;
      neg = draw_prefix(e->diff, q, rng);
      break;
    }
  }
  if (!neg) return std::nullopt;
  return Triplet{anchor.id, *pos, *neg};
}

std::vector<int> TripletSampler::admissible(const Patch& anchor, int epoch, bool same_label) const {
  switch (strategy_) {
    case Strategy::label: {
      const int l = anchor.label ? 1 : 0;
      std::vector<int> out = by_label_[same_label ? l : 1 - l];
      std::erase(out, anchor.id);
      return out;
    }
    case Strategy::historical: {
      const HistoricalEntry* e = historical_->find(anchor.id);
      if (e == nullptr) return {};
      return same_label ? e->positives : e->negatives;
    }
    case Strategy::curriculum: {
      const ScoreEntry* e = curriculum_->find(anchor.id);
      if (e == nullptr) return {};
      const CandidateList& list = same_label ? e->same : e->diff;
      const std::size_t w = CurriculumSchedule::window(schedule_.percentile(epoch), list.size());
      return {list.ids.begin(), list.ids.begin() + static_cast<std::ptrdiff_t>(w)};
    }
  }
  return {};
}

namespace {

template <typename T, typename Get>
void put_lists(Sidecar& out, const std::string& prefix, std::size_t n, Get get) {
  std::vector<std::int32_t> offsets{0};
  std::vector<std::int32_t> flat;
  for (std::size_t k = 0; k < n; ++k) {
    const std::vector<T>& items = get(k);
    flat.insert(flat.end(), items.begin(), items.end());
    offsets.push_back(static_cast<std::int32_t>(flat.size()));
  }
  out.put_i32(prefix + "_offsets", offsets);
  out.put_i32(prefix + "_ids", flat);
}

std::vector<std::vector<int>> get_lists(const Sidecar& in, const std::string& prefix, std::size_t n) {
  const auto offsets = in.get_i32(prefix + "_offsets");
  const auto flat = in.get_i32(prefix + "_ids");
  if (offsets.size() != n + 1 || offsets.back() != static_cast<std::int32_t>(flat.size())) {
    throw DataError("sidecar lists " + prefix + " are inconsistent");
  }
  std::vector<std::vector<int>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (offsets[k] > offsets[k + 1]) throw DataError("sidecar lists " + prefix + " are inconsistent");
    out[k].assign(flat.begin() + offsets[k], flat.begin() + offsets[k + 1]);
  }
  return out;
}

}  // namespace

void put_score_map(Sidecar& out, const ScoreMap& map) {
  out.put_i32("curriculum.anchor_ids", map.anchor_ids);
  const std::size_t n = map.anchor_ids.size();
  for (int side = 0; side < 2; ++side) {
    const std::string name = side == 0 ? "curriculum.same" : "curriculum.diff";
    auto list = [&](std::size_t k) -> const CandidateList& { return side == 0 ? map.entries[k].same : map.entries[k].diff; };
    put_lists<int>(out, name, n, [&](std::size_t k) -> const std::vector<int>& { return list(k).ids; });
    std::vector<float> scores;
    for (std::size_t k = 0; k < n; ++k) scores.insert(scores.end(), list(k).scores.begin(), list(k).scores.end());
    out.put_f32(name + "_scores", scores);
  }
}

ScoreMap get_score_map(const Sidecar& in) {
  ScoreMap map;
  const auto anchors = in.get_i32("curriculum.anchor_ids");
  map.anchor_ids.assign(anchors.begin(), anchors.end());
  const std::size_t n = anchors.size();
  map.entries.resize(n);
  for (int side = 0; side < 2; ++side) {
    const std::string name = side == 0 ? "curriculum.same" : "curriculum.diff";
    const auto ids = get_lists(in, name, n);
    const auto scores = in.get_f32(name + "_scores");
    std::size_t pos = 0;
    for (std::size_t k = 0; k < n; ++k) {
      CandidateList& list = side == 0 ? map.entries[k].same : map.entries[k].diff;
      list.ids = ids[k];
      if (pos + ids[k].size() > scores.size()) throw DataError("sidecar " + name + " scores are short");
      list.scores.assign(scores.begin() + static_cast<std::ptrdiff_t>(pos),
                         scores.begin() + static_cast<std::ptrdiff_t>(pos + ids[k].size()));
      pos += ids[k].size();
    }
  }
  map.reindex();
  return map;
}

void put_historical_map(Sidecar& out, const HistoricalMap& map) {
  out.put_i32("historical.anchor_ids", map.anchor_ids);
  const std::size_t n = map.anchor_ids.size();
  put_lists<int>(out, "historical.pos", n, [&](std::size_t k) -> const std::vector<int>& { return map.entries[k].positives; });
  put_lists<int>(out, "historical.neg", n, [&](std::size_t k) -> const std::vector<int>& { return map.entries[k].negatives; });
}

HistoricalMap get_historical_map(const Sidecar& in) {
  HistoricalMap map;
  const auto anchors = in.get_i32("historical.anchor_ids");
  map.anchor_ids.assign(anchors.begin(), anchors.end());
  const auto pos = get_lists(in, "historical.pos", anchors.size());
  const auto neg = get_lists(in, "historical.neg", anchors.size());
  for (std::size_t k = 0; k < anchors.size(); ++k) map.entries.push_back({pos[k], neg[k]});
  map.reindex();
  return map;
}

}  // namespace mccl
