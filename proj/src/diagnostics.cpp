#include "mccl/diagnostics.hpp"

#include "mccl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace mccl {
namespace {

Metric ratio_or_undefined(double num, double den) {
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

Metric macro_mean(const Metric& a, const Metric& b) {
  if (a && b) return (*a + *b) / 2.0;
  if (a) return a;
  return b;
}

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - out.mean) * (x - out.mean);
  out.stddev = std::sqrt(sq / static_cast<double>(xs.size()));
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

std::string format_metric(const Metric& m) { return m ? fmt(*m) : "NA"; }

MetricsReport confusion_metrics(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw std::invalid_argument("confusion_metrics: length mismatch");
  if (preds.empty()) throw std::invalid_argument("confusion_metrics: empty input");
  MetricsReport r;
  for (int c = 0; c < 2; ++c) {
    ClassMetrics& m = r.per_class[c];
    for (std::size_t k = 0; k < preds.size(); ++k) {
      const bool p = (preds[k] != 0) == (c == 1);
      const bool l = (labels[k] != 0) == (c == 1);
      m.tp += p && l;
      m.fp += p && !l;
      m.fn += !p && l;
      m.tn += !p && !l;
    }
    const auto tp = static_cast<double>(m.tp);
    m.precision = ratio_or_undefined(tp, tp + m.fp);
    m.recall = ratio_or_undefined(tp, tp + m.fn);
    m.iou = ratio_or_undefined(tp, tp + m.fp + m.fn);
    m.f1 = ratio_or_undefined(2.0 * tp, 2.0 * tp + m.fp + m.fn);
  }
  r.precision = macro_mean(r.per_class[0].precision, r.per_class[1].precision);
  r.recall = macro_mean(r.per_class[0].recall, r.per_class[1].recall);
  r.iou = macro_mean(r.per_class[0].iou, r.per_class[1].iou);
  r.f1 = macro_mean(r.per_class[0].f1, r.per_class[1].f1);
  return r;
}

Metric auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auroc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum = 0.0;
  double n_pos = 0.0;
  std::size_t k = 0;
  while (k < n) {
    std::size_t e = k;
    while (e + 1 < n && scores[order[e + 1]] == scores[order[k]]) ++e;
    const double midrank = (static_cast<double>(k) + static_cast<double>(e)) / 2.0 + 1.0;
    for (std::size_t q = k; q <= e; ++q) {
      if (labels[order[q]] != 0) {
        rank_sum += midrank;
        n_pos += 1.0;
      }
    }
    k = e + 1;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) return std::nullopt;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

MetricsReport classification_report(std::span<const double> probabilities, std::span<const int> labels) {
  std::vector<int> preds(probabilities.size());
  for (std::size_t k = 0; k < preds.size(); ++k) preds[k] = probabilities[k] >= 0.5 ? 1 : 0;
  MetricsReport r = confusion_metrics(preds, labels);
  r.auroc = auroc(probabilities, labels);
  return r;
}

std::vector<FeatureDiffRow> feature_diff_report(const std::vector<const Patch*>& anchors,
                                                const TripletSampler& sampler,
                                                const std::vector<std::string>& feature_names, int n_pairs,
                                                int epoch, std::uint64_t seed) {
  const PatchGeometry& g = sampler.candidates().geometry;
  if (static_cast<int>(feature_names.size()) != g.n_dyn) {
    throw std::invalid_argument("feature_diff_report: feature name count mismatch");
  }
  if (n_pairs < 1) throw std::invalid_argument("feature_diff_report: n_pairs must be >= 1");
  const Eigen::Index cells = static_cast<Eigen::Index>(g.w) * g.h;

  // Mean |a - b| of feature f over all timesteps and cells.
  auto feature_diff = [&](const Patch& a, const Patch& b, int f) {
    double sum = 0.0;
    for (int l = 0; l < g.hist_len; ++l) {
      const Eigen::Index off = (static_cast<Eigen::Index>(l) * g.n_dyn + f) * cells;
      sum += (a.dyn.segment(off, cells) - b.dyn.segment(off, cells)).cwiseAbs().template cast<double>().sum();
    }
    return sum / static_cast<double>(g.hist_len * cells);
  };

  std::vector<std::vector<double>> ap(g.n_dyn), an(g.n_dyn);
  for (const Patch* anchor : anchors) {
    Rng rng = stream_rng(seed, {static_cast<std::uint64_t>(anchor->id)});
    std::vector<Triplet> drawn;
    for (int k = 0; k < n_pairs; ++k) {
      if (auto t = sampler.sample(*anchor, epoch, rng)) drawn.push_back(*t);
    }
    if (drawn.empty()) continue;
    for (int f = 0; f < g.n_dyn; ++f) {
      double sp = 0.0;
      double sn = 0.0;
      for (const auto& t : drawn) {
        sp += feature_diff(*anchor, sampler.candidates().at(t.positive), f);
        sn += feature_diff(*anchor, sampler.candidates().at(t.negative), f);
      }
      ap[f].push_back(sp / static_cast<double>(drawn.size()));
      an[f].push_back(sn / static_cast<double>(drawn.size()));
    }
  }

  std::vector<FeatureDiffRow> rows;
  for (int f = 0; f < g.n_dyn; ++f) {
    FeatureDiffRow row;
    row.feature = feature_names[f];
    row.anchor_positive = mean_std(ap[f]);
    row.anchor_negative = mean_std(an[f]);
    row.ratio = row.anchor_negative.mean / std::max(row.anchor_positive.mean, 1e-12);
    row.anchors = ap[f].size();
    rows.push_back(row);
  }
  return rows;
}

LatentDistanceReport latent_distance_report(const Eigen::MatrixXd& latents, std::span<const int> labels,
                                            std::size_t sample_cap, std::uint64_t seed) {
  if (static_cast<std::size_t>(latents.cols()) != labels.size()) {
    throw std::invalid_argument("latent_distance_report: label count mismatch");
  }
  std::vector<Eigen::Index> pos, neg;
  for (std::size_t k = 0; k < labels.size(); ++k) (labels[k] ? pos : neg).push_back(static_cast<Eigen::Index>(k));
  Rng rng = stream_rng(seed, {0x7ab1e3});
  if (pos.size() > sample_cap) {
    std::shuffle(pos.begin(), pos.end(), rng);
    pos.resize(sample_cap);
    std::sort(pos.begin(), pos.end());
  }
  std::shuffle(neg.begin(), neg.end(), rng);
  neg.resize(std::min(neg.size(), pos.size()));
  std::sort(neg.begin(), neg.end());
  if (pos.size() < 2 || neg.size() < 2) throw std::invalid_argument("latent_distance_report: class shortage");

  auto unit = [&](Eigen::Index c) -> Eigen::VectorXd {
    const double n = latents.col(c).norm();
    return n > 0.0 ? Eigen::VectorXd(latents.col(c) / n) : Eigen::VectorXd(latents.col(c));
  };
  std::vector<Eigen::VectorXd> up, un;
  for (auto c : pos) up.push_back(unit(c));
  for (auto c : neg) un.push_back(unit(c));

  double intra_sum = 0.0;
  double intra_pairs = 0.0;
  for (const auto* group : {&up, &un}) {
    for (std::size_t a = 0; a < group->size(); ++a) {
      for (std::size_t b = a + 1; b < group->size(); ++b) {
        intra_sum += ((*group)[a] - (*group)[b]).norm();
        intra_pairs += 1.0;
      }
    }
  }
  double inter_sum = 0.0;
  for (const auto& a : up) {
    for (const auto& b : un) inter_sum += (a - b).norm();
  }

  LatentDistanceReport r;
  r.positives = up.size();
  r.negatives = un.size();
  r.intra = intra_sum / intra_pairs;
  r.inter = inter_sum / static_cast<double>(up.size() * un.size());
  r.intra_zero = r.intra == 0.0;
  r.ratio = r.inter / std::max(r.intra, 1e-12);
  return r;
}

long long input_cost(long long w, long long h, long long hist_len, long long n_dyn, long long n_stat) {
  if (w < 1 || h < 1 || hist_len < 1 || n_dyn < 1 || n_stat < 0) {
    throw std::invalid_argument("input_cost: dimensions must be positive");
  }
  return hist_len * n_dyn * w * h + n_stat * w * h;
}

void write_metrics_csv(const MetricsReport& r, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "class,precision,recall,iou,f1,auroc,tp,fp,fn,tn\n";
  const char* names[2] = {"background", "event"};
  for (int c = 0; c < 2; ++c) {
    const auto& m = r.per_class[c];
    out << names[c] << ',' << format_metric(m.precision) << ',' << format_metric(m.recall) << ','
        << format_metric(m.iou) << ',' << format_metric(m.f1) << ',' << format_metric(r.auroc) << ',' << m.tp
        << ',' << m.fp << ',' << m.fn << ',' << m.tn << '\n';
  }
  out << "aggregate_macro," << format_metric(r.precision) << ',' << format_metric(r.recall) << ','
      << format_metric(r.iou) << ',' << format_metric(r.f1) << ',' << format_metric(r.auroc) << ",,,,\n";
}

void write_feature_diff_csv(const std::vector<StrategyDiffTable>& tables, const std::filesystem::path& path) {
  const Strategy order[3] = {Strategy::label, Strategy::historical, Strategy::curriculum};
  const StrategyDiffTable* by[3] = {nullptr, nullptr, nullptr};
  std::vector<std::string> features;
  for (const auto& t : tables) {
    by[static_cast<int>(t.strategy)] = &t;
    if (features.empty()) {
      for (const auto& row : t.rows) features.push_back(row.feature);
    }
  }
  auto out = open_out(path);
  out << "feature";
  for (const char* part : {"ap", "an"}) {
    for (Strategy s : order) out << ',' << part << '_' << to_string(s) << ',' << part << '_' << to_string(s) << "_std";
  }
  for (Strategy s : order) out << ",ratio_" << to_string(s);
  out << '\n';
  for (std::size_t f = 0; f < features.size(); ++f) {
    out << features[f];
    for (int part = 0; part < 2; ++part) {
      for (Strategy s : order) {
        const auto* t = by[static_cast<int>(s)];
        if (t == nullptr) {
          out << ",,";
          continue;
        }
        const MeanStd& ms = part == 0 ? t->rows[f].anchor_positive : t->rows[f].anchor_negative;
        out << ',' << fmt(ms.mean) << ',' << fmt(ms.stddev);
      }
    }
    for (Strategy s : order) {
      const auto* t = by[static_cast<int>(s)];
      out << ',' << (t ? fmt(t->rows[f].ratio) : std::string{});
    }
    out << '\n';
  }
}

void write_latent_distance_csv(const std::vector<NamedLatentReport>& reports, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "distance";
  for (const auto& r : reports) out << ',' << r.model;
  out << '\n';
  out << "intra_pooled";
  for (const auto& r : reports) out << ',' << fmt(r.report.intra);
  out << "\ninter";
  for (const auto& r : reports) out << ',' << fmt(r.report.inter);
  out << "\nratio";
  for (const auto& r : reports) out << ',' << fmt(r.report.ratio);
  out << '\n';
}

void write_ratio_svg(const std::vector<StrategyDiffTable>& tables, const std::filesystem::path& path) {
  if (tables.empty()) return;
  const std::size_t n_feat = tables.front().rows.size();
  double max_ratio = 1.0;
  for (const auto& t : tables) {
    for (const auto& r : t.rows) max_ratio = std::max(max_ratio, r.ratio);
  }
  const double bar = 14.0;
  const double group = bar * static_cast<double>(tables.size()) + 16.0;
  const double height = 240.0;
  const double left = 40.0;
  const double width = left + group * static_cast<double>(n_feat) + 20.0;
  const char* colors[3] = {"#8c8c8c", "#4c72b0", "#dd8452"};

  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height + 60
      << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  out << "<line x1=\"" << left << "\" y1=\"" << height << "\" x2=\"" << width - 10 << "\" y2=\"" << height
      << "\" stroke=\"black\"/>\n";
  const double unit_y = height - (1.0 / max_ratio) * (height - 20.0);
  out << "<line x1=\"" << left << "\" y1=\"" << unit_y << "\" x2=\"" << width - 10 << "\" y2=\"" << unit_y
      << "\" stroke=\"#999\" stroke-dasharray=\"4 2\"/>\n";
  for (std::size_t f = 0; f < n_feat; ++f) {
    const double x0 = left + group * static_cast<double>(f) + 8.0;
    for (std::size_t s = 0; s < tables.size(); ++s) {
      const double v = tables[s].rows[f].ratio;
      const double h = (v / max_ratio) * (height - 20.0);
      out << "<rect x=\"" << x0 + bar * static_cast<double>(s) << "\" y=\"" << height - h << "\" width=\""
          << bar - 2 << "\" height=\"" << h << "\" fill=\"" << colors[static_cast<int>(tables[s].strategy)]
          << "\"><title>" << to_string(tables[s].strategy) << ' ' << fmt(v) << "</title></rect>\n";
    }
    out << "<text x=\"" << x0 << "\" y=\"" << height + 14 << "\">" << tables.front().rows[f].feature << "</text>\n";
  }
  for (std::size_t s = 0; s < tables.size(); ++s) {
    const double y = height + 30 + 12.0 * static_cast<double>(s);
    out << "<rect x=\"" << left << "\" y=\"" << y - 8 << "\" width=\"8\" height=\"8\" fill=\""
        << colors[static_cast<int>(tables[s].strategy)] << "\"/><text x=\"" << left + 12 << "\" y=\"" << y
        << "\">" << to_string(tables[s].strategy) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace mccl
