#include "mccl/trainer.hpp"

#include "mccl/errors.hpp"
#include "mccl/random.hpp"
#include "mccl/sidecar.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace mccl {
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kShuffleKey = 0x5ff1e;
constexpr std::uint64_t kTripletKey = 0x7219;
constexpr const char* kPreparedName = "prepared.txt";
constexpr const char* kPatchIndexName = "patches.bin";
constexpr const char* kMapsName = "maps.bin";
constexpr const char* kSplitNames[4] = {"pool", "train", "val", "test"};

PatchSet balanced_split(const PatchSet& pool, const BalanceConfig& base, std::uint64_t salt, SplitTag tag) {
  BalanceConfig cfg = base;
  cfg.seed = base.seed + salt;
  PatchSet out = pseudo_balance(pool, cfg).patches;
  out.split = tag;
  if (out.count_label(1) == 0) throw DataError(to_string(tag) + " split has no positive patches");
  return out;
}

void put_index(Sidecar& sc, const std::string& prefix, const PatchSet& set) {
  std::vector<std::int32_t> id, t, i, j, label;
  for (const auto& p : set.patches) {
    id.push_back(p.id);
    t.push_back(p.t);
    i.push_back(p.i);
    j.push_back(p.j);
    label.push_back(p.label);
  }
  sc.put_i32(prefix + ".id", id);
  sc.put_i32(prefix + ".t", t);
  sc.put_i32(prefix + ".i", i);
  sc.put_i32(prefix + ".j", j);
  sc.put_i32(prefix + ".label", label);
}

PatchSet get_index(const Sidecar& sc, const std::string& prefix, const DataCube& cube, const PatchGeometry& g,
                   SplitTag tag) {
  const auto id = sc.get_i32(prefix + ".id");
  const auto t = sc.get_i32(prefix + ".t");
  const auto i = sc.get_i32(prefix + ".i");
  const auto j = sc.get_i32(prefix + ".j");
  const auto label = sc.get_i32(prefix + ".label");
  if (t.size() != id.size() || i.size() != id.size() || j.size() != id.size() || label.size() != id.size()) {
    throw DataError("patch index " + prefix + " has inconsistent lengths");
  }
  PatchSet set;
  set.geometry = g;
  set.split = tag;
  set.patches.reserve(id.size());
  for (std::size_t k = 0; k < id.size(); ++k) {
    set.patches.push_back(make_patch(cube, g, id[k], t[k], i[k], j[k]));
    if (set.patches.back().label != label[k]) {
      throw DataError("patch index " + prefix + ": label of patch " + std::to_string(id[k]) +
                      " disagrees with the cube");
    }
  }
  set.reindex();
  return set;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void DataConfig::validate() const {
  if (geometry.w < 1 || geometry.h < 1) throw ConfigError("data.w and data.h must be >= 1");
  if (geometry.mode == PatchMode::sliding_center && (geometry.w % 2 == 0 || geometry.h % 2 == 0)) {
    throw ConfigError("sliding_center patches need odd data.w and data.h");
  }
  if (geometry.hist_len < 1) throw ConfigError("data.hist_len must be >= 1");
  if (!(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0)) {
    throw ConfigError("data.train_frac and data.val_frac must be positive and sum below 1");
  }
  if (map_options.nearest_k < 1) throw ConfigError("data.map_nearest_k must be >= 1");
}

DataConfig DataConfig::from_config(const Config& cfg) {
  DataConfig d;
  d.geometry.mode = parse_patch_mode(cfg.get_string("data.patch_mode", to_string(d.geometry.mode)));
  d.geometry.w = cfg.get_int("data.w", d.geometry.w);
  d.geometry.h = cfg.get_int("data.h", d.geometry.h);
  d.geometry.hist_len = cfg.get_int("data.hist_len", d.geometry.hist_len);
  d.train_frac = cfg.get_double("data.train_frac", d.train_frac);
  d.val_frac = cfg.get_double("data.val_frac", d.val_frac);
  d.map_options.cap_threshold = static_cast<std::size_t>(
      cfg.get_u64("data.map_cap_threshold", d.map_options.cap_threshold));
  d.map_options.nearest_k = static_cast<std::size_t>(cfg.get_u64("data.map_nearest_k", d.map_options.nearest_k));
  d.balance.proxy_feature_index = cfg.get_int("balance.proxy_feature", d.balance.proxy_feature_index);
  d.balance.n_bins = cfg.get_int("balance.n_bins", d.balance.n_bins);
  d.balance.neg_per_pos = cfg.get_int("balance.neg_per_pos", d.balance.neg_per_pos);
  d.balance.seed = cfg.get_u64("balance.seed", d.balance.seed);
  d.validate();
  return d;
}

PreparedData prepare_data(DataCube& cube, const DataConfig& cfg) {
  cfg.validate();
  cube.validate();
  cfg.balance.validate(cube.n_stat);
  PreparedData out;
  out.geometry = cfg.geometry;
  out.geometry.n_dyn = cube.n_dyn;
  out.geometry.n_stat = cube.n_stat;
  out.split = split_by_time(cube.t_len, cfg.geometry.hist_len, cfg.train_frac, cfg.val_frac);

  // Training anchors read dynamic timesteps 0 .. train_last.
  out.stats = dynamic_stats(cube, 0, out.split.train_last + 1);
  standardize_dynamic(cube, out.stats);

  const auto& s = out.split;
  out.train_pool = extract_patches(cube, out.geometry, s.first, s.train_last, 0);
  out.train_pool.split = SplitTag::pool;
  const int n_train = static_cast<int>(out.train_pool.size());
  PatchSet val_pool = extract_patches(cube, out.geometry, s.train_last + 1, s.val_last, n_train);
  PatchSet test_pool =
      extract_patches(cube, out.geometry, s.val_last + 1, s.last, n_train + static_cast<int>(val_pool.size()));

  out.train = balanced_split(out.train_pool, cfg.balance, 0, SplitTag::train);
  out.val = balanced_split(val_pool, cfg.balance, 1, SplitTag::val);
  out.test = balanced_split(test_pool, cfg.balance, 2, SplitTag::test);
  out.curriculum = build_curriculum_map(out.train, cfg.map_options);
  out.historical = build_historical_map(out.train_pool);
  return out;
}

void save_prepared(const PreparedData& data, const fs::path& cube_dir, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir / kPreparedName, std::ios::trunc);
    if (!out) throw DataError("cannot write " + (out_dir / kPreparedName).string());
    const auto& g = data.geometry;
    out << "[prepared]\n"
        << "cube = " << fs::absolute(cube_dir).lexically_normal().string() << "\n"
        << "patch_mode = " << to_string(g.mode) << "\n"
        << "w = " << g.w << "\nh = " << g.h << "\nhist_len = " << g.hist_len << "\n"
        << "split_first = " << data.split.first << "\nsplit_train_last = " << data.split.train_last << "\n"
        << "split_val_last = " << data.split.val_last << "\nsplit_last = " << data.split.last << "\n"
        << "patch_index = " << kPatchIndexName << "\nmaps = " << kMapsName << "\nstats = " << kStatsName << "\n";
  }
  save_stats(data.stats, out_dir / kStatsName);

  Sidecar index;
  const PatchSet* sets[4] = {&data.train_pool, &data.train, &data.val, &data.test};
  for (int k = 0; k < 4; ++k) put_index(index, kSplitNames[k], *sets[k]);
  index.save(out_dir / kPatchIndexName);

  Sidecar maps;
  put_score_map(maps, data.curriculum);
  put_historical_map(maps, data.historical);
  maps.save(out_dir / kMapsName);
}

PreparedData load_prepared(const fs::path& dir) {
  const fs::path manifest = dir / kPreparedName;
  if (!fs::exists(manifest)) throw MissingPathError(manifest.string());
  const Config cfg = Config::load(manifest);
  cfg.require_known({"prepared.cube", "prepared.patch_mode", "prepared.w", "prepared.h", "prepared.hist_len",
                     "prepared.split_first", "prepared.split_train_last", "prepared.split_val_last",
                     "prepared.split_last", "prepared.patch_index", "prepared.maps", "prepared.stats"});

  PreparedData out;
  DataCube cube = load_cube(cfg.get_string("prepared.cube", ""));
  out.stats = load_stats(dir / cfg.get_string("prepared.stats", kStatsName));
  standardize_dynamic(cube, out.stats);

  auto& g = out.geometry;
  g.mode = parse_patch_mode(cfg.get_string("prepared.patch_mode", "sliding_center"));
  g.w = cfg.get_int("prepared.w", 0);
  g.h = cfg.get_int("prepared.h", 0);
  g.hist_len = cfg.get_int("prepared.hist_len", 0);
  g.n_dyn = cube.n_dyn;
  g.n_stat = cube.n_stat;
  out.split.first = cfg.get_int("prepared.split_first", 0);
  out.split.train_last = cfg.get_int("prepared.split_train_last", 0);
  out.split.val_last = cfg.get_int("prepared.split_val_last", 0);
  out.split.last = cfg.get_int("prepared.split_last", 0);

  const Sidecar index = Sidecar::load(dir / cfg.get_string("prepared.patch_index", kPatchIndexName));
  PatchSet* sets[4] = {&out.train_pool, &out.train, &out.val, &out.test};
  const SplitTag tags[4] = {SplitTag::pool, SplitTag::train, SplitTag::val, SplitTag::test};
  for (int k = 0; k < 4; ++k) *sets[k] = get_index(index, kSplitNames[k], cube, g, tags[k]);

  const Sidecar maps = Sidecar::load(dir / cfg.get_string("prepared.maps", kMapsName));
  out.curriculum = get_score_map(maps);
  out.historical = get_historical_map(maps);
  return out;
}

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::ce_only: return "ce_only";
    case Protocol::finetune: return "finetune";
    case Protocol::full: return "full";
  }
  return "ce_only";
}

std::string to_string(LossKind k) { return k == LossKind::triplet ? "triplet" : "scl"; }

Protocol parse_protocol(const std::string& text) {
  if (text == "ce_only") return Protocol::ce_only;
  if (text == "finetune") return Protocol::finetune;
  if (text == "full") return Protocol::full;
  throw ConfigError("unknown protocol: " + text);
}

LossKind parse_loss(const std::string& text) {
  if (text == "triplet") return LossKind::triplet;
  if (text == "scl") return LossKind::scl;
  throw ConfigError("unknown loss: " + text);
}

TrainConfig TrainConfig::from_config(const Config& cfg) {
  TrainConfig t;
  t.protocol = parse_protocol(cfg.get_string("train.protocol", to_string(t.protocol)));
  t.strategy = parse_strategy(cfg.get_string("train.strategy", to_string(t.strategy)));
  t.loss = parse_loss(cfg.get_string("train.loss", to_string(t.loss)));
  t.epochs_pre = cfg.get_int("train.epochs_pre", t.epochs_pre);
  t.epochs_cl = cfg.get_int("train.epochs_cl", t.epochs_cl);
  t.lr_pre = cfg.get_double("train.lr_pre", t.lr_pre);
  t.lr_cl = cfg.get_optional_double("train.lr_cl");
  t.margin = cfg.get_optional_double("train.margin");
  t.norm_p = cfg.get_double("train.norm_p", t.norm_p);
  t.tau = cfg.get_double("train.tau", t.tau);
  t.batch_size = cfg.get_int("train.batch_size", t.batch_size);
  t.seed = cfg.get_u64("train.seed", t.seed);
  t.q0 = cfg.get_double("train.q0", t.q0);
  t.q1 = cfg.get_double("train.q1", t.q1);
  t.model.latent_dim = cfg.get_int("model.latent_dim", t.model.latent_dim);
  t.model.hidden_dyn = cfg.get_int("model.hidden_dyn", t.model.hidden_dyn);
  t.model.hidden_stat = cfg.get_int("model.hidden_stat", t.model.hidden_stat);
  t.model.hidden_head = cfg.get_int("model.hidden_head", t.model.hidden_head);
  t.model.modulation = cfg.get_bool("model.modulation", t.model.modulation);
  return t;
}

ResolvedTrainConfig resolve(const TrainConfig& cfg) {
  ResolvedTrainConfig r;
  r.cfg = cfg;
  auto& c = r.cfg;
  try {
    c.model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.epochs_pre < 0 || c.epochs_cl < 0) throw ConfigError("epoch counts must be >= 0");
  if (c.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (c.loss == LossKind::scl && c.batch_size < 2) throw ConfigError("train.batch_size must be >= 2 for scl");
  if (!(c.lr_pre >= 0.0) || (c.lr_cl && !(*c.lr_cl >= 0.0))) throw ConfigError("learning rates must be >= 0");

  switch (c.protocol) {
    case Protocol::ce_only:
      if (c.epochs_pre < 1) throw ConfigError("protocol=ce_only requires epochs_pre > 0");
      r.cl_start = c.epochs_pre;
      r.total_epochs = c.epochs_pre;
      break;
    case Protocol::finetune:
      if (c.epochs_pre < 1) throw ConfigError("protocol=finetune requires epochs_pre > 0");
      if (c.epochs_cl < 1) throw ConfigError("protocol=finetune requires epochs_cl > 0");
      if (c.strategy == Strategy::label && c.loss == LossKind::triplet && c.epochs_cl > 5) {
        r.warnings.push_back("epochs_cl clamped from " + std::to_string(c.epochs_cl) +
                             " to 5 for label-sampled triplet finetuning");
        c.epochs_cl = 5;
      }
      r.cl_start = c.epochs_pre;
      r.total_epochs = c.epochs_pre + c.epochs_cl;
      break;
    case Protocol::full:
      if (c.strategy == Strategy::historical) {
        throw ConfigError("forbidden combination protocol=full strategy=historical: historical sampling is "
                          "only supported as finetuning");
      }
      if (c.epochs_pre + c.epochs_cl < 1) throw ConfigError("protocol=full requires epochs_pre + epochs_cl > 0");
      r.cl_start = 0;
      r.total_epochs = c.epochs_pre + c.epochs_cl;
      break;
  }

  r.lr_cl = c.lr_cl.value_or(10.0 * c.lr_pre);
  r.loss.margin = c.margin.value_or(c.strategy == Strategy::label ? 20.0 : 5.0);
  r.loss.p = c.norm_p;
  r.loss.tau = c.tau;
  try {
    r.loss.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  CurriculumSchedule{c.q0, c.q1, 1}.validate();
  return r;
}

std::vector<double> predict_logits(const ModelConfig& cfg, const ModelParams<float>& params, const PatchSet& set) {
  std::vector<double> out;
  out.reserve(set.size());
  const Eigen::Index rows_d = set.geometry.dyn_size();
  const Eigen::Index rows_s = set.geometry.stat_size();
  constexpr std::size_t kChunk = 256;
  std::vector<const Patch*> chunk;
  for (std::size_t k = 0; k < set.size(); k += kChunk) {
    chunk.clear();
    for (std::size_t q = k; q < std::min(set.size(), k + kChunk); ++q) chunk.push_back(&set.patches[q]);
    const auto tr = forward(cfg, params, stack_dynamic<float>(chunk, rows_d), stack_static<float>(chunk, rows_s));
    for (Eigen::Index c = 0; c < tr.logits.cols(); ++c) out.push_back(tr.logits(0, c));
  }
  return out;
}

Eigen::MatrixXd dynamic_latents(const ModelConfig& cfg, const ModelParams<float>& params, const PatchSet& set) {
  Eigen::MatrixXd out(params.latent_dim(), static_cast<Eigen::Index>(set.size()));
  const Eigen::Index rows_d = set.geometry.dyn_size();
  const Eigen::Index rows_s = set.geometry.stat_size();
  constexpr std::size_t kChunk = 256;
  std::vector<const Patch*> chunk;
  for (std::size_t k = 0; k < set.size(); k += kChunk) {
    chunk.clear();
    for (std::size_t q = k; q < std::min(set.size(), k + kChunk); ++q) chunk.push_back(&set.patches[q]);
    const auto tr = forward(cfg, params, stack_dynamic<float>(chunk, rows_d), stack_static<float>(chunk, rows_s));
    out.middleCols(static_cast<Eigen::Index>(k), tr.z_d.cols()) = tr.z_d.cast<double>();
  }
  return out;
}

MetricsReport evaluate(const ModelConfig& cfg, const ModelParams<float>& params, const PatchSet& set) {
  if (set.empty()) throw std::invalid_argument("evaluate: empty patch set");
  const auto logits = predict_logits(cfg, params, set);
  std::vector<double> probs(logits.size());
  std::vector<int> labels(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    probs[k] = 1.0 / (1.0 + std::exp(-logits[k]));
    labels[k] = set.patches[k].label;
  }
  return classification_report(probs, labels);
}

TrainResult train(const PreparedData& data, const TrainConfig& cfg_in, const TrainOptions& options) {
  const ResolvedTrainConfig r = resolve(cfg_in);
  const TrainConfig& cfg = r.cfg;
  if (data.train.empty() || data.val.empty()) throw std::invalid_argument("train: empty training or validation split");
  const PatchGeometry& g = data.train.geometry;

  TrainResult out;
  out.warnings = r.warnings;
  if (options.resume) {
    out.state = *options.resume;
    if (out.state.params.in_dyn() != g.dyn_size() || out.state.params.in_stat() != g.stat_size()) {
      throw ConfigError("checkpoint geometry does not match the prepared data");
    }
  } else {
    out.state.params = init_params<float>(cfg.model, g.dyn_size(), g.stat_size(), cfg.seed);
    out.state.epochs_done = 0;
  }

  const bool contrastive = cfg.protocol != Protocol::ce_only;
  const CurriculumSchedule schedule{cfg.q0, cfg.q1, std::max(1, r.total_epochs - r.cl_start)};
  const PatchSet& candidates = cfg.strategy == Strategy::historical ? data.train_pool : data.train;
  const TripletSampler sampler(cfg.strategy, candidates, &data.curriculum, &data.historical, schedule);

  ObjectiveOptions opts;
  opts.loss = r.loss;
  const int stop = std::min(r.total_epochs, options.stop_after.value_or(r.total_epochs));
  std::vector<std::size_t> order(data.train.size());
  std::vector<const Patch*> anchors, pos, neg;

  for (int e = out.state.epochs_done; e < stop; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    const bool cl_phase = contrastive && e >= r.cl_start;
    const int cl_epoch = e - r.cl_start;
    const bool bumped = cl_phase && cfg.protocol == Protocol::finetune;
    const float lr = static_cast<float>(bumped ? r.lr_cl : cfg.lr_pre);
    opts.kind = !cl_phase ? ContrastiveKind::none
                          : (cfg.loss == LossKind::triplet ? ContrastiveKind::triplet : ContrastiveKind::scl);

    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = stream_rng(cfg.seed, {kShuffleKey, static_cast<std::uint64_t>(e)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double ce_sum = 0.0, cl_sum = 0.0, gamma_sum = 0.0;
    int batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      anchors.clear();
      for (std::size_t k = b0; k < b1; ++k) anchors.push_back(&data.train.patches[order[k]]);

      ObjectiveInputs<float> in;
      in.x_dyn = stack_dynamic<float>(anchors, g.dyn_size());
      in.x_stat = stack_static<float>(anchors, g.stat_size());
      for (const Patch* a : anchors) in.labels.push_back(a->label);
      if (opts.kind == ContrastiveKind::triplet) {
        pos.clear();
        neg.clear();
        for (std::size_t k = 0; k < anchors.size(); ++k) {
          Rng rng = stream_rng(cfg.seed, {kTripletKey, static_cast<std::uint64_t>(e),
                                          static_cast<std::uint64_t>(anchors[k]->id)});
          const auto t = sampler.sample(*anchors[k], cl_epoch, rng);
          if (!t) continue;
          in.triplet_anchor.push_back(static_cast<Eigen::Index>(k));
          pos.push_back(&candidates.at(t->positive));
          neg.push_back(&candidates.at(t->negative));
        }
        in.pos_dyn = stack_dynamic<float>(pos, g.dyn_size());
        in.pos_stat = stack_static<float>(pos, g.stat_size());
        in.neg_dyn = stack_dynamic<float>(neg, g.dyn_size());
        in.neg_stat = stack_static<float>(neg, g.stat_size());
      }

      const auto res = compute_objective(cfg.model, out.state.params, in, opts);
      if (!std::isfinite(res.value)) {
        throw std::runtime_error("training diverged at epoch " + std::to_string(e));
      }
      sgd_step(out.state.params, res.grad, lr);
      ce_sum += res.ce;
      cl_sum += res.cl;
      gamma_sum += res.gamma;
      ++batches;
    }

    HistoryRow row;
    row.epoch = e;
    row.phase = cl_phase ? "cl" : "ce";
    row.ce = ce_sum / batches;
    row.cl = cl_sum / batches;
    row.gamma = gamma_sum / batches;
    const MetricsReport val = evaluate(cfg.model, out.state.params, data.val);
    row.val_f1 = val.f1;
    row.val_auroc = val.auroc;
    if (cl_phase && cfg.strategy == Strategy::curriculum && cfg.loss == LossKind::triplet) {
      row.window_q = schedule.percentile(cl_epoch);
    }
    out.history.push_back(row);
    out.state.epochs_done = e + 1;
    out.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return out;
}

void save_checkpoint(const TrainState& state, const ModelConfig& cfg, const fs::path& path) {
  Sidecar sc;
  sc.put_scalar("meta.epochs_done", state.epochs_done);
  sc.put_scalar("meta.latent_dim", cfg.latent_dim);
  sc.put_scalar("meta.hidden_dyn", cfg.hidden_dyn);
  sc.put_scalar("meta.hidden_stat", cfg.hidden_stat);
  sc.put_scalar("meta.hidden_head", cfg.hidden_head);
  sc.put_scalar("meta.modulation", cfg.modulation ? 1 : 0);
  for_each_tensor([&sc](const char* name, const auto& t) {
    using T = std::decay_t<decltype(t)>;
    const std::string key = std::string("param.") + name;
    if constexpr (T::ColsAtCompileTime == 1) {
      sc.put_f32(key, {static_cast<std::uint64_t>(t.size())}, t.data());
    } else {
      const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = t;
      sc.put_f32(key, {static_cast<std::uint64_t>(t.rows()), static_cast<std::uint64_t>(t.cols())}, rm.data());
    }
  }, state.params);
  sc.save(path);
}

TrainState load_checkpoint(const fs::path& path, const ModelConfig& cfg) {
  const Sidecar sc = Sidecar::load(path);
  auto expect = [&sc](const char* key, int value) {
    if (sc.get_scalar(key) != value) {
      throw ConfigError(std::string("checkpoint ") + key + " = " + std::to_string(sc.get_scalar(key)) +
                        " does not match the model config (" + std::to_string(value) + ")");
    }
  };
  expect("meta.latent_dim", cfg.latent_dim);
  expect("meta.hidden_dyn", cfg.hidden_dyn);
  expect("meta.hidden_stat", cfg.hidden_stat);
  expect("meta.hidden_head", cfg.hidden_head);
  expect("meta.modulation", cfg.modulation ? 1 : 0);

  TrainState state;
  state.epochs_done = sc.get_scalar("meta.epochs_done");
  for_each_tensor([&sc](const char* name, auto& t) {
    using T = std::decay_t<decltype(t)>;
    const std::string key = std::string("param.") + name;
    const auto& entry = sc.at(key);
    const auto values = sc.get_f32(key);
    if constexpr (T::ColsAtCompileTime == 1) {
      if (entry.dims.size() != 1) throw DataError("checkpoint " + key + " has the wrong rank");
      t = Eigen::Map<const Eigen::VectorXf>(values.data(), static_cast<Eigen::Index>(values.size()));
    } else {
      if (entry.dims.size() != 2) throw DataError("checkpoint " + key + " has the wrong rank");
      t = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          values.data(), static_cast<Eigen::Index>(entry.dims[0]), static_cast<Eigen::Index>(entry.dims[1]));
    }
  }, state.params);
  return state;
}

void write_history_csv(const std::vector<HistoryRow>& rows, const fs::path& path, bool append) {
  const bool header = !append || !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  if (header) out << "epoch,phase,ce,cl,gamma,val_f1,val_auroc,window_q\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.phase << ',' << fmt(r.ce) << ',' << fmt(r.cl) << ',' << fmt(r.gamma) << ','
        << format_metric(r.val_f1) << ',' << format_metric(r.val_auroc) << ','
        << (r.window_q ? fmt(*r.window_q) : std::string("NA")) << '\n';
  }
}

}  // namespace mccl
