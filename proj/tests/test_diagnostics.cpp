#include "mccl/diagnostics.hpp"
#include "oracles.hpp"
#include "pools.hpp"
#include "tmpdir.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace mccl;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("confusion metrics: hand cases") {
  // tp=2 fp=1 fn=1 tn=2 for the event class.
  const std::vector<int> preds{1, 1, 1, 0, 0, 0}, labels{1, 1, 0, 1, 0, 0};
  const auto r = confusion_metrics(preds, labels);
  const auto& ev = r.per_class[1];
  CHECK(ev.tp == 2);
  CHECK(ev.fp == 1);
  CHECK(ev.fn == 1);
  CHECK(ev.tn == 2);
  CHECK(*ev.precision == doctest::Approx(2.0 / 3.0));
  CHECK(*ev.recall == doctest::Approx(2.0 / 3.0));
  CHECK(*ev.iou == doctest::Approx(0.5));
  CHECK(*ev.f1 == doctest::Approx(2.0 / 3.0));
  CHECK(r.per_class[0].tp == 2);
  CHECK(*r.f1 == doctest::Approx(2.0 / 3.0));

  // No predicted and no actual events: event precision/recall/IoU/F1 undefined,
  // macro means fall back to the background class.
  const std::vector<int> zeros{0, 0, 0};
  const auto z = confusion_metrics(zeros, zeros);
  CHECK_FALSE(z.per_class[1].precision.has_value());
  CHECK_FALSE(z.per_class[1].recall.has_value());
  CHECK_FALSE(z.per_class[1].iou.has_value());
  CHECK_FALSE(z.per_class[1].f1.has_value());
  CHECK(*z.per_class[0].f1 == 1.0);
  CHECK(*z.f1 == 1.0);

  // Predicts only events, labels only background: event precision is 0, recall undefined.
  const std::vector<int> ones{1, 1};
  const auto w = confusion_metrics(ones, std::vector<int>{0, 0});
  CHECK(*w.per_class[1].precision == 0.0);
  CHECK_FALSE(w.per_class[1].recall.has_value());
  CHECK(*w.per_class[1].f1 == 0.0);
  CHECK_FALSE(w.per_class[0].precision.has_value());
  CHECK(*w.per_class[0].recall == 0.0);
  CHECK(*w.precision == 0.0);  // only the event class is defined

  CHECK_THROWS(confusion_metrics(ones, zeros));
}

TEST_CASE("F1 is the harmonic mean of precision and recall when both are positive") {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> p(1 + rng() % 30), y(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] = coin(rng);
      y[k] = coin(rng);
    }
    const auto r = confusion_metrics(p, y);
    for (const auto& c : r.per_class) {
      CHECK(c.tp + c.fp + c.fn + c.tn == static_cast<long>(p.size()));
      if (c.precision && c.recall && *c.precision + *c.recall > 0.0) {
        CHECK(*c.f1 == doctest::Approx(2.0 * *c.precision * *c.recall / (*c.precision + *c.recall)).epsilon(1e-12));
      }
      if (c.iou && c.f1) CHECK(*c.iou == doctest::Approx(*c.f1 / (2.0 - *c.f1)).epsilon(1e-12));
    }
  }
}

TEST_CASE("AUROC: hand cases and exhaustive pair counting") {
  CHECK(*auroc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}) == doctest::Approx(0.75));
  CHECK(*auroc(std::vector<double>{0.0, 0.0, 0.0}, std::vector<int>{0, 1, 1}) == 0.5);
  CHECK(*auroc(std::vector<double>{1.0, 2.0}, std::vector<int>{0, 1}) == 1.0);
  CHECK(*auroc(std::vector<double>{2.0, 1.0}, std::vector<int>{0, 1}) == 0.0);
  CHECK_FALSE(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}).has_value());

  std::mt19937_64 rng(8);
  for (std::size_t n = 2; n <= 50; ++n) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> s(n);
      std::vector<int> y(n);
      // Coarse scores produce many ties.
      for (std::size_t k = 0; k < n; ++k) {
        s[k] = static_cast<double>(rng() % (trial % 2 ? 4 : 1000)) / 7.0;
        y[k] = static_cast<int>(rng() % 2);
      }
      const auto a = auroc(s, y);
      const bool both = std::count(y.begin(), y.end(), 1) > 0 && std::count(y.begin(), y.end(), 0) > 0;
      REQUIRE(a.has_value() == both);
      if (both) CHECK(*a == doctest::Approx(oracle::auroc_pairs(s, y)).epsilon(1e-12));
    }
  }
}

TEST_CASE("classification_report thresholds at 0.5") {
  const std::vector<double> prob{0.5, 0.49, 0.9, 0.1};
  const std::vector<int> y{1, 1, 0, 0};
  const auto r = classification_report(prob, y);
  CHECK(r.per_class[1].tp == 1);
  CHECK(r.per_class[1].fn == 1);
  CHECK(r.per_class[1].fp == 1);
  CHECK(*r.auroc == doctest::Approx(0.5));
}

TEST_CASE("latent distance report: examples and O(n^2) oracle") {
  Eigen::MatrixXd z(2, 4);
  z << 1, 2, 0, 0,
       0, 0, 3, 1;
  const std::vector<int> y{1, 1, 0, 0};
  const auto r = latent_distance_report(z, y, 1000, 1);
  CHECK(r.intra == 0.0);
  CHECK(r.intra_zero);
  CHECK(r.inter == doctest::Approx(std::sqrt(2.0)));
  CHECK(r.ratio == doctest::Approx(std::sqrt(2.0) / 1e-12));
  CHECK_THROWS(latent_distance_report(z, std::vector<int>{1, 0, 0, 0}, 1000, 1));

  std::mt19937_64 rng(12);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd lat(32, 200);
    std::vector<int> lab(200);
    std::vector<oracle::Vec> cols(200);
    for (int c = 0; c < 200; ++c) {
      lab[c] = c % 2;
      for (int r2 = 0; r2 < 32; ++r2) lat(r2, c) = normal(rng) + (lab[c] ? 0.7 : -0.2);
      cols[c].assign(lat.col(c).data(), lat.col(c).data() + 32);
    }
    const auto rep = latent_distance_report(lat, lab, 1000, 3);
    const auto want = oracle::latent_means(cols, lab);
    CHECK(std::abs(rep.intra - want.intra) <= 1e-10);
    CHECK(std::abs(rep.inter - want.inter) <= 1e-10);

    const auto scaled = latent_distance_report(Eigen::MatrixXd(lat * 37.5), lab, 1000, 3);
    CHECK(std::abs(scaled.intra - rep.intra) <= 1e-12);
    CHECK(std::abs(scaled.inter - rep.inter) <= 1e-12);
  }
}

TEST_CASE("latent distance report balances classes and caps positives") {
  Eigen::MatrixXd lat = Eigen::MatrixXd::Random(4, 60);
  std::vector<int> lab(60, 0);
  for (int k = 0; k < 20; ++k) lab[k] = 1;
  const auto r = latent_distance_report(lat, lab, 8, 2);
  CHECK(r.positives == 8);
  CHECK(r.negatives == 8);
  const auto again = latent_distance_report(lat, lab, 8, 2);
  CHECK(again.inter == r.inter);
}

TEST_CASE("input_cost") {
  CHECK(input_cost(1, 1, 10, 6, 4) == 64);
  CHECK(input_cost(25, 25, 10, 6, 4) == 64 * 625);
  CHECK(input_cost(25, 25, 10, 6, 4) / input_cost(1, 1, 10, 6, 4) == 625);
  CHECK(input_cost(3, 5, 2, 1, 0) == 30);
  CHECK_THROWS(input_cost(0, 1, 1, 1, 1));
}

TEST_CASE("feature differences: identical candidates give zero AP distance") {
  PatchSet s = pools::point_set();
  // Two features, two timesteps; ids 0,1 share a tensor, id 2 differs by 3 on feature 1.
  s.geometry.hist_len = 2;
  s.geometry.n_dyn = 2;
  for (int id = 0; id < 3; ++id) {
    Patch p = pools::point_patch(id, id < 2 ? 1 : 0, 0.f);
    p.dyn = Eigen::VectorXf::Zero(4);
    if (id == 2) p.dyn << 0, 3, 0, 3;
    s.patches.push_back(p);
  }
  s.reindex();
  const TripletSampler sampler(Strategy::label, s, nullptr, nullptr);
  const std::vector<const Patch*> anchors{&s.patches[0]};
  const auto rows = feature_diff_report(anchors, sampler, {"a", "b"}, 5, 0, 1);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].anchor_positive.mean == 0.0);
  CHECK(rows[0].anchor_negative.mean == 0.0);
  CHECK(rows[1].anchor_positive.mean == 0.0);
  CHECK(rows[1].anchor_negative.mean == doctest::Approx(3.0));
  CHECK(rows[1].ratio == doctest::Approx(3.0 / 1e-12));
  CHECK(rows[1].anchors == 1);
  CHECK_THROWS(feature_diff_report(anchors, sampler, {"a"}, 5, 0, 1));
}

TEST_CASE("CSV writers") {
  TempDir dir("csv");
  const std::vector<int> preds{0, 0}, labels{0, 0};
  MetricsReport r = confusion_metrics(preds, labels);
  write_metrics_csv(r, dir.path / "m.csv");
  const std::string m = read_file(dir.path / "m.csv");
  CHECK(m.rfind("class,precision,recall,iou,f1,auroc,tp,fp,fn,tn\n", 0) == 0);
  CHECK(m.find("event,NA,NA,NA,NA,NA,0,0,0,2\n") != std::string::npos);
  CHECK(m.find("aggregate_macro,1,1,1,1,NA,,,,\n") != std::string::npos);

  write_latent_distance_csv({{"base", {0.5, 1.0, 2.0, false, 4, 4}}, {"ctl", {0.25, 1.0, 4.0, false, 4, 4}}},
                            dir.path / "l.csv");
  CHECK(read_file(dir.path / "l.csv") == "distance,base,ctl\nintra_pooled,0.5,0.25\ninter,1,1\nratio,2,4\n");

  FeatureDiffRow row{"x", {1.0, 0.1}, {2.0, 0.2}, 2.0, 3};
  write_feature_diff_csv({{Strategy::label, {row}}, {Strategy::historical, {row}}, {Strategy::curriculum, {row}}},
                         dir.path / "f.csv");
  const std::string f = read_file(dir.path / "f.csv");
  CHECK(f.rfind("feature,ap_label,ap_label_std,ap_historical,", 0) == 0);
  CHECK(f.find("\nx,1,0.1,1,0.1,1,0.1,2,0.2,2,0.2,2,0.2,2,2,2\n") != std::string::npos);
  write_ratio_svg({{Strategy::label, {row}}}, dir.path / "r.svg");
  CHECK(read_file(dir.path / "r.svg").find("<svg") != std::string::npos);
  CHECK(format_metric(std::nullopt) == "NA");
  CHECK(format_metric(0.125) == "0.125");
}
