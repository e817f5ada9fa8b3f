#include "mccl/errors.hpp"
#include "mccl/synth.hpp"
#include "mccl/trainer.hpp"
#include "pools.hpp"
#include "tmpdir.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace mccl;

namespace {

const PreparedData& small_data() {
  static const PreparedData data = [] {
    SynthConfig sc;
    sc.t_len = 24;
    sc.height = sc.width = 12;
    sc.threshold = 1.2;
    sc.seed = 3;
    DataCube cube = generate_cube(sc);
    DataConfig dc;
    dc.geometry.w = dc.geometry.h = 3;
    dc.geometry.hist_len = 3;
    return prepare_data(cube, dc);
  }();
  return data;
}

TrainConfig small_train(Protocol p, Strategy s) {
  TrainConfig t;
  t.protocol = p;
  t.strategy = s;
  t.epochs_pre = 2;
  t.epochs_cl = 2;
  t.model.hidden_dyn = 8;
  t.model.hidden_stat = 4;
  t.model.hidden_head = 4;
  t.model.latent_dim = 4;
  return t;
}

bool same_params(const ModelParams<float>& a, const ModelParams<float>& b) {
  bool same = true;
  for_each_tensor([&same](const char*, const auto& x, const auto& y) { same = same && x == y; }, a, b);
  return same;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("resolve: protocol invariants and defaults") {
  TrainConfig t;
  t.protocol = Protocol::full;
  t.strategy = Strategy::historical;
  try {
    resolve(t);
    FAIL("forbidden combination accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("protocol=full strategy=historical") != std::string::npos);
  }

  t = TrainConfig{};
  t.epochs_pre = 0;
  CHECK_THROWS_WITH_AS(resolve(t), "protocol=finetune requires epochs_pre > 0", ConfigError);
  t.protocol = Protocol::full;
  const auto full = resolve(t);
  CHECK(full.cl_start == 0);
  CHECK(full.total_epochs == t.epochs_cl);

  t = TrainConfig{};
  t.strategy = Strategy::label;
  t.epochs_cl = 9;
  const auto clamped = resolve(t);
  CHECK(clamped.cfg.epochs_cl == 5);
  CHECK(clamped.total_epochs == t.epochs_pre + 5);
  REQUIRE(clamped.warnings.size() == 1);
  CHECK(clamped.warnings[0] == "epochs_cl clamped from 9 to 5 for label-sampled triplet finetuning");
  CHECK(clamped.loss.margin == 20.0);
  t.loss = LossKind::scl;
  CHECK(resolve(t).warnings.empty());
  CHECK(resolve(t).cfg.epochs_cl == 9);

  t = TrainConfig{};
  CHECK(resolve(t).loss.margin == 5.0);
  CHECK(resolve(t).lr_cl == doctest::Approx(10.0 * t.lr_pre));
  t.margin = 2.5;
  t.lr_cl = 0.3;
  CHECK(resolve(t).loss.margin == 2.5);
  CHECK(resolve(t).lr_cl == 0.3);
  t.q0 = 0.0;
  CHECK_THROWS_AS(resolve(t), ConfigError);
  t = TrainConfig{};
  t.loss = LossKind::scl;
  t.batch_size = 1;
  CHECK_THROWS_AS(resolve(t), ConfigError);

  CHECK_THROWS_AS(parse_protocol("both"), ConfigError);
  CHECK(parse_loss("scl") == LossKind::scl);
  CHECK_THROWS_AS(parse_strategy("random"), ConfigError);
}

TEST_CASE("prepared data: splits, balancing and standardization") {
  const PreparedData& d = small_data();
  CHECK(d.train.count_label(1) > 0);
  CHECK(d.val.count_label(1) > 0);
  CHECK(d.test.count_label(1) > 0);
  CHECK(d.train.count_label(0) == d.train.count_label(1));
  CHECK(d.train_pool.count_label(1) == d.train.count_label(1));
  for (const auto& p : d.train.patches) CHECK(p.t <= d.split.train_last);
  for (const auto& p : d.val.patches) CHECK((p.t > d.split.train_last && p.t <= d.split.val_last));
  for (const auto& p : d.test.patches) CHECK(p.t > d.split.val_last);
  CHECK(d.curriculum.anchor_ids.size() == d.train.size());
  CHECK(d.historical.anchor_ids.size() == d.train_pool.count_label(1));
  CHECK(d.stats.mean.size() == 6);

  SUBCASE("save / load round trip") {
    TempDir dir("prepared");
    SynthConfig sc;
    sc.t_len = 24;
    sc.height = sc.width = 12;
    sc.threshold = 1.2;
    sc.seed = 3;
    save_cube(generate_cube(sc), dir.path / "cube");
    save_prepared(d, dir.path / "cube", dir.path / "prep");
    const PreparedData back = load_prepared(dir.path / "prep");
    REQUIRE(back.train.size() == d.train.size());
    for (std::size_t k = 0; k < d.train.size(); ++k) {
      CHECK(back.train.patches[k].id == d.train.patches[k].id);
      CHECK(back.train.patches[k].dyn.isApprox(d.train.patches[k].dyn, 1e-6f));
    }
    CHECK(back.test.size() == d.test.size());
    CHECK(back.train_pool.size() == d.train_pool.size());
    CHECK(back.curriculum.entries[0].same.ids == d.curriculum.entries[0].same.ids);
    CHECK(back.historical.anchor_ids == d.historical.anchor_ids);
    CHECK(back.stats.mean == d.stats.mean);
  }
}

TEST_CASE("evaluate: zero logits, single class, separable data") {
  const PreparedData& d = small_data();
  TrainConfig t = small_train(Protocol::ce_only, Strategy::label);
  auto zero = init_params<float>(t.model, d.geometry.dyn_size(), d.geometry.stat_size(), 1);
  for_each_tensor([](const char*, auto& x) { x.setZero(); }, zero);
  const auto r = evaluate(t.model, zero, d.test);
  CHECK(*r.auroc == 0.5);
  CHECK(r.per_class[1].fn == 0);  // p = 0.5 counts as an event prediction

  PatchSet single = d.test;
  std::erase_if(single.patches, [](const Patch& p) { return p.label == 0; });
  single.reindex();
  CHECK_FALSE(evaluate(t.model, zero, single).auroc.has_value());

  // 1-d dynamic input whose sign is the label.
  PreparedData sep;
  sep.geometry = PatchGeometry{PatchMode::sliding_center, 1, 1, 1, 1, 1};
  sep.train.geometry = sep.val.geometry = sep.test.geometry = sep.train_pool.geometry = sep.geometry;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(0.2f, 2.0f);
  for (int k = 0; k < 200; ++k) {
    Patch p = pools::point_patch(k, k % 2, u(rng), k, k % 7, k % 5);
    p.dyn[0] = (k % 2 ? 1.0f : -1.0f) * u(rng);
    (k < 140 ? sep.train : sep.val).patches.push_back(p);
  }
  sep.train.reindex();
  sep.val.reindex();
  sep.train_pool = sep.train;
  sep.curriculum = build_curriculum_map(sep.train);
  sep.historical = build_historical_map(sep.train_pool);
  TrainConfig st = small_train(Protocol::ce_only, Strategy::label);
  st.epochs_pre = 40;
  st.lr_pre = 0.1;
  const auto res = train(sep, st);
  CHECK(*res.history.back().val_auroc >= 0.99);
  CHECK(*evaluate(st.model, res.state.params, sep.val).f1 >= 0.95);
}

TEST_CASE("training is reproducible and follows the protocol schedule") {
  const PreparedData& d = small_data();
  const TrainConfig t = small_train(Protocol::finetune, Strategy::curriculum);
  const TrainResult a = train(d, t);
  const TrainResult b = train(d, t);
  CHECK(same_params(a.state.params, b.state.params));
  REQUIRE(a.history.size() == 4);
  for (std::size_t k = 0; k < a.history.size(); ++k) {
    CHECK(a.history[k].ce == b.history[k].ce);
    CHECK(a.history[k].cl == b.history[k].cl);
  }
  CHECK(a.history[1].phase == "ce");
  CHECK(a.history[2].phase == "cl");
  CHECK(a.history[2].epoch == t.epochs_pre);
  CHECK(a.history[1].gamma == 0.0);
  CHECK(a.history[2].gamma > 0.0);
  CHECK_FALSE(a.history[1].window_q.has_value());
  CHECK(*a.history[2].window_q == doctest::Approx(t.q0));
  CHECK(*a.history[3].window_q == doctest::Approx(t.q1));

  TrainConfig longer = small_train(Protocol::full, Strategy::curriculum);
  longer.epochs_pre = 1;
  longer.epochs_cl = 4;
  const TrainResult f = train(d, longer);
  for (std::size_t k = 0; k < f.history.size(); ++k) {
    CHECK(f.history[k].phase == "cl");
    if (k > 0) CHECK(*f.history[k].window_q >= *f.history[k - 1].window_q);
  }

  const TrainResult c = train(d, small_train(Protocol::ce_only, Strategy::curriculum));
  CHECK(c.history.size() == 2);
  CHECK(c.history[0].cl == 0.0);

  const TrainResult h = train(d, small_train(Protocol::finetune, Strategy::historical));
  CHECK(h.history.back().cl > 0.0);
  const TrainResult s = train(d, [] {
    TrainConfig x = small_train(Protocol::full, Strategy::label);
    x.loss = LossKind::scl;
    return x;
  }());
  CHECK(s.history.back().cl > 0.0);
}

TEST_CASE("checkpoints: round trip, config mismatch and bit-identical resume") {
  const PreparedData& d = small_data();
  const TrainConfig t = small_train(Protocol::finetune, Strategy::curriculum);
  const TrainResult full = train(d, t);

  TempDir dir("ckpt");
  save_checkpoint(full.state, t.model, dir.path / "c.bin");
  const TrainState back = load_checkpoint(dir.path / "c.bin", t.model);
  CHECK(back.epochs_done == 4);
  CHECK(same_params(back.params, full.state.params));
  ModelConfig other = t.model;
  other.hidden_dyn += 1;
  CHECK_THROWS_AS(load_checkpoint(dir.path / "c.bin", other), ConfigError);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "missing.bin", t.model), MissingPathError);

  for (int cut : {1, 2, 3}) {
    TrainOptions first;
    first.stop_after = cut;
    const TrainResult head = train(d, t, first);
    CHECK(head.history.size() == static_cast<std::size_t>(cut));
    save_checkpoint(head.state, t.model, dir.path / "h.bin");
    TrainOptions rest;
    rest.resume = load_checkpoint(dir.path / "h.bin", t.model);
    const TrainResult tail = train(d, t, rest);
    CHECK(same_params(tail.state.params, full.state.params));
    REQUIRE(tail.history.size() == static_cast<std::size_t>(4 - cut));
    for (std::size_t k = 0; k < tail.history.size(); ++k) {
      CHECK(tail.history[k].epoch == full.history[cut + k].epoch);
      CHECK(tail.history[k].ce == full.history[cut + k].ce);
      CHECK(tail.history[k].val_f1 == full.history[cut + k].val_f1);
    }
  }

  write_history_csv(full.history, dir.path / "h.csv");
  const std::string csv = read_file(dir.path / "h.csv");
  CHECK(csv.rfind("epoch,phase,ce,cl,gamma,val_f1,val_auroc,window_q\n", 0) == 0);
  CHECK(csv.find("\n0,ce,") != std::string::npos);
  CHECK(csv.find(",NA\n") != std::string::npos);
}
