#include "mccl/cli.hpp"

#include "mccl/config.hpp"
#include "mccl/diagnostics.hpp"
#include "mccl/errors.hpp"
#include "mccl/random.hpp"
#include "mccl/synth.hpp"
#include "mccl/trainer.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace mccl {
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kConfigKeys = {
    "synth.T", "synth.H", "synth.W", "synth.D_d", "synth.D_s", "synth.regimes", "synth.regime_scales",
    "synth.regime_mean_spread", "synth.threshold", "synth.noise", "synth.ar", "synth.label_noise", "synth.seed",
    "data.patch_mode", "data.w", "data.h", "data.hist_len", "data.train_frac", "data.val_frac",
    "data.map_cap_threshold", "data.map_nearest_k",
    "balance.proxy_feature", "balance.n_bins", "balance.neg_per_pos", "balance.seed",
    "train.protocol", "train.strategy", "train.loss", "train.epochs_pre", "train.epochs_cl", "train.lr_pre",
    "train.lr_cl", "train.margin", "train.norm_p", "train.tau", "train.batch_size", "train.seed", "train.q0",
    "train.q1",
    "model.latent_dim", "model.hidden_dyn", "model.hidden_stat", "model.hidden_head", "model.modulation",
    "diagnose.pairs", "diagnose.epoch", "diagnose.sample_cap", "diagnose.seed", "diagnose.svg"};

struct CliError : std::runtime_error {
  int code;
  std::string kind;
  CliError(int c, std::string k, const std::string& msg) : std::runtime_error(msg), code(c), kind(std::move(k)) {}
};

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    if (c == '"' || c == '\\') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

int report(int code, const std::string& kind, const std::string& message) {
  std::cerr << "mccl: error kind=" << kind << " exit=" << code << " message=\"" << escape(message) << "\"\n";
  return code;
}

// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Run config file (key = value with [sections])");
  cmd->add_option("--set", c.overrides, "Override a config key, e.g. --set train.seed=3")->take_all();
}

Config load_config(const Common& c, const std::map<std::string, std::string>& flag_values) {
  Config cfg = c.config_path.empty() ? Config{} : Config::load(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw CliError(kExitUsage, "usage", "--set expects key=value, got " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [key, value] : flag_values) cfg.set(key, value);
  cfg.require_known(kConfigKeys);
  return cfg;
}

// One section per subcommand in `dir/run_summary.txt`; sections of other
// subcommands already in the file are kept.
void write_summary(const fs::path& dir, const std::string& command,
                   const std::vector<std::pair<std::string, fs::path>>& artifacts) {
  const fs::path path = dir / "run_summary.txt";
  Config summary = fs::exists(path) ? Config::load(path) : Config{};
  Config merged;
  for (const auto& [key, value] : summary.values()) {
    if (key.rfind(command + ".", 0) != 0) merged.set(key, value);
  }
  merged.set(command + ".test_mode", test_mode() ? "1" : "0");
  for (const auto& [name, p] : artifacts) merged.set(command + "." + name, p.string());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << merged.to_string();
}

int cmd_synth(const Common& common, const fs::path& out_dir, std::optional<std::uint64_t> seed) {
  std::map<std::string, std::string> flags;
  if (seed) flags["synth.seed"] = std::to_string(*seed);
  const Config cfg = load_config(common, flags);
  const SynthConfig sc = SynthConfig::from_config(cfg);
  const DataCube cube = generate_cube(sc);
  save_cube(cube, out_dir);
  std::size_t positives = 0;
  for (auto v : cube.fire) positives += v;
  write_summary(out_dir, "synth",
                {{"manifest", out_dir / kManifestName},
                 {"dyn", out_dir / "dyn.f32"},
                 {"stat", out_dir / "stat.f32"},
                 {"fire", out_dir / "fire.u8"}});
  std::cout << "synth: wrote " << (out_dir / kManifestName).string() << " (T=" << cube.t_len << " H=" << cube.height
            << " W=" << cube.width << ", " << positives << " fire cells)\n";
  return kExitOk;
}

int cmd_prepare(const Common& common, const fs::path& cube_dir, const fs::path& out_dir, const std::string& strategy) {
  if (!strategy.empty() && strategy != "all") parse_strategy(strategy);
  const Config cfg = load_config(common, {});
  const DataConfig dc = DataConfig::from_config(cfg);
  DataCube cube = load_cube(cube_dir);
  const PreparedData data = prepare_data(cube, dc);
  save_prepared(data, cube_dir, out_dir);
  write_summary(out_dir, "prepare",
                {{"prepared", out_dir / "prepared.txt"},
                 {"stats", out_dir / kStatsName},
                 {"patch_index", out_dir / "patches.bin"},
                 {"maps", out_dir / "maps.bin"}});
  std::cout << "prepare: train " << data.train.size() << " (" << data.train.count_label(1) << " positive) val "
            << data.val.size() << " test " << data.test.size() << "; maps " << data.curriculum.anchor_ids.size()
            << " curriculum / " << data.historical.anchor_ids.size() << " historical anchors\n";
  return kExitOk;
}

// History rows of an earlier run up to (excluding) `epoch`, header included.
std::vector<std::string> history_prefix(const fs::path& path, int epoch) {
  std::vector<std::string> lines;
  std::ifstream in(path);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      lines.push_back(line);
      header = false;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    if (std::stoi(line.substr(0, comma)) < epoch) lines.push_back(line);
  }
  return lines;
}

int cmd_train(const Common& common, const fs::path& prepared, const fs::path& out_dir,
              const std::map<std::string, std::string>& flags, const std::string& resume,
              std::optional<int> stop_after) {
  const Config cfg = load_config(common, flags);
  const TrainConfig tc = TrainConfig::from_config(cfg);
  const ResolvedTrainConfig resolved = resolve(tc);
  if (!resume.empty() && !fs::exists(resume)) throw MissingPathError(resume);
  const PreparedData data = load_prepared(prepared);

  fs::create_directories(out_dir);
  const fs::path ckpt = out_dir / "checkpoint.bin";
  const fs::path history = out_dir / "history.csv";
  TrainOptions opts;
  opts.stop_after = stop_after;
  std::vector<std::string> kept;
  if (!resume.empty()) {
    opts.resume = load_checkpoint(resume, tc.model);
    kept = history_prefix(history, opts.resume->epochs_done);
  }
  for (const auto& w : resolved.warnings) std::cerr << "mccl: warning " << w << "\n";

  const TrainResult result = train(data, tc, opts);
  save_checkpoint(result.state, tc.model, ckpt);
  if (!kept.empty()) {
    std::ofstream out(history, std::ios::trunc);
    for (const auto& line : kept) out << line << '\n';
  }
  write_history_csv(result.history, history, !kept.empty());
  {
    std::ofstream out(out_dir / "train_config.txt", std::ios::trunc);
    out << cfg.to_string();
  }
  write_summary(out_dir, "train",
                {{"checkpoint", ckpt}, {"history", history}, {"config", out_dir / "train_config.txt"}});
  std::cout << "train: " << result.state.epochs_done << "/" << resolved.total_epochs << " epochs, protocol "
            << to_string(tc.protocol) << ", strategy " << to_string(tc.strategy) << ", loss " << to_string(tc.loss);
  if (!result.history.empty()) std::cout << ", last val F1 " << format_metric(result.history.back().val_f1);
  std::cout << "\n";
  return kExitOk;
}

const PatchSet& pick_split(const PreparedData& data, const std::string& split) {
  if (split == "test") return data.test;
  if (split == "val") return data.val;
  if (split == "train") return data.train;
  throw CliError(kExitUsage, "usage", "unknown split: " + split);
}

int cmd_eval(const Common& common, const fs::path& prepared, const fs::path& checkpoint, const fs::path& out,
             const std::string& split) {
  const Config cfg = load_config(common, {});
  const TrainConfig tc = TrainConfig::from_config(cfg);
  if (!fs::exists(checkpoint)) throw MissingPathError(checkpoint.string());
  const PreparedData data = load_prepared(prepared);
  const TrainState state = load_checkpoint(checkpoint, tc.model);
  const MetricsReport report = evaluate(tc.model, state.params, pick_split(data, split));
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_metrics_csv(report, out);
  const fs::path dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
  write_summary(dir, "eval", {{"metrics", out}});
  std::cout << "eval: " << split << " F1 " << format_metric(report.f1) << " AUROC " << format_metric(report.auroc)
            << " precision " << format_metric(report.precision) << " IoU " << format_metric(report.iou) << "\n";
  return kExitOk;
}

int cmd_diagnose(const Common& common, const fs::path& prepared, const fs::path& out_dir,
                 const std::vector<std::string>& checkpoints, bool svg_flag) {
  const Config cfg = load_config(common, {});
  const TrainConfig tc = TrainConfig::from_config(cfg);
  const ResolvedTrainConfig resolved = resolve(tc);
  const int pairs = cfg.get_int("diagnose.pairs", 10);
  const int epoch = cfg.get_int("diagnose.epoch", 0);
  const auto cap = static_cast<std::size_t>(cfg.get_u64("diagnose.sample_cap", 1000));
  const std::uint64_t seed = cfg.get_u64("diagnose.seed", tc.seed);
  const bool svg = svg_flag || cfg.get_bool("diagnose.svg", false);
  for (const auto& entry : checkpoints) {
    const auto eq = entry.find('=');
    const std::string path = eq == std::string::npos ? entry : entry.substr(eq + 1);
    if (!fs::exists(path)) throw MissingPathError(path);
  }

  const PreparedData data = load_prepared(prepared);
  fs::create_directories(out_dir);
  std::vector<std::pair<std::string, fs::path>> artifacts;

  std::vector<const Patch*> anchors;
  for (const auto& p : data.train.patches) {
    if (p.label == 1) anchors.push_back(&p);
  }
  DataCube names_source = load_cube(Config::load(prepared / "prepared.txt").get_string("prepared.cube", ""));
  const CurriculumSchedule schedule{tc.q0, tc.q1, std::max(1, resolved.total_epochs - resolved.cl_start)};
  std::vector<StrategyDiffTable> tables;
  for (Strategy s : {Strategy::label, Strategy::historical, Strategy::curriculum}) {
    const PatchSet& candidates = s == Strategy::historical ? data.train_pool : data.train;
    const TripletSampler sampler(s, candidates, &data.curriculum, &data.historical, schedule);
    tables.push_back({s, feature_diff_report(anchors, sampler, names_source.dyn_names, pairs, epoch, seed)});
  }
  write_feature_diff_csv(tables, out_dir / "feature_diff.csv");
  artifacts.emplace_back("feature_diff", out_dir / "feature_diff.csv");
  if (svg) {
    write_ratio_svg(tables, out_dir / "feature_ratio.svg");
    artifacts.emplace_back("feature_ratio_svg", out_dir / "feature_ratio.svg");
  }

  if (!checkpoints.empty()) {
    std::vector<int> labels;
    for (const auto& p : data.test.patches) labels.push_back(p.label);
    std::vector<NamedLatentReport> reports;
    for (const auto& entry : checkpoints) {
      const auto eq = entry.find('=');
      const std::string name = eq == std::string::npos ? fs::path(entry).parent_path().filename().string()
                                                       : entry.substr(0, eq);
      const std::string path = eq == std::string::npos ? entry : entry.substr(eq + 1);
      const TrainState state = load_checkpoint(path, tc.model);
      const Eigen::MatrixXd z = dynamic_latents(tc.model, state.params, data.test);
      reports.push_back({name.empty() ? path : name, latent_distance_report(z, labels, cap, seed)});
    }
    write_latent_distance_csv(reports, out_dir / "latent_distances.csv");
    artifacts.emplace_back("latent_distances", out_dir / "latent_distances.csv");
  }
  write_summary(out_dir, "diagnose", artifacts);
  std::cout << "diagnose: " << anchors.size() << " anchors, wrote " << artifacts.size() << " artifacts to "
            << out_dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  std::vector<char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, char** argv) {
  if (test_mode()) Eigen::setNbThreads(1);

  CLI::App app{"Curriculum contrastive learning pipeline for spatio-temporal risk prediction", "mccl"};
  app.require_subcommand(1);
  Common common;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic cube");
  add_common(synth, common);
  std::string synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--out", synth_out, "Output cube directory")->required();
  synth->add_option("--seed", synth_seed, "Overrides synth.seed");

  auto* prepare = app.add_subcommand("prepare", "Extract, balance and index patches; build sampler maps");
  add_common(prepare, common);
  std::string prep_cube, prep_out = "prepared", prep_strategy = "all";
  prepare->add_option("--cube", prep_cube, "Cube directory or manifest")->required();
  prepare->add_option("--out", prep_out, "Output directory");
  prepare->add_option("--strategy", prep_strategy, "label|historical|curriculum|all (maps for all are written)");

  auto* trn = app.add_subcommand("train", "Train a model");
  add_common(trn, common);
  std::string train_prepared, train_out = "run", resume;
  std::optional<std::string> protocol, strategy, loss;
  std::optional<int> epochs_pre, epochs_cl, stop_after;
  std::optional<double> lr_pre, lr_cl, margin;
  std::optional<std::uint64_t> train_seed;
  trn->add_option("--prepared", train_prepared, "Prepared data directory")->required();
  trn->add_option("--out", train_out, "Output directory");
  trn->add_option("--protocol", protocol, "ce_only|finetune|full");
  trn->add_option("--strategy", strategy, "label|historical|curriculum");
  trn->add_option("--loss", loss, "triplet|scl");
  trn->add_option("--epochs-pre", epochs_pre);
  trn->add_option("--epochs-cl", epochs_cl);
  trn->add_option("--lr-pre", lr_pre);
  trn->add_option("--lr-cl", lr_cl);
  trn->add_option("--margin", margin);
  trn->add_option("--seed", train_seed);
  trn->add_option("--resume", resume, "Checkpoint to continue from");
  trn->add_option("--stop-after", stop_after, "Stop once this many epochs are complete");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(ev, common);
  std::string eval_prepared, eval_ckpt, eval_out = "metrics.csv", eval_split = "test";
  ev->add_option("--prepared", eval_prepared)->required();
  ev->add_option("--checkpoint", eval_ckpt)->required();
  ev->add_option("--out", eval_out, "Metrics CSV path");
  ev->add_option("--split", eval_split, "train|val|test");

  auto* diag = app.add_subcommand("diagnose", "Feature-difference and latent-distance tables");
  add_common(diag, common);
  std::string diag_prepared, diag_out = "diagnostics";
  std::vector<std::string> diag_ckpts;
  bool diag_svg = false;
  diag->add_option("--prepared", diag_prepared)->required();
  diag->add_option("--out", diag_out, "Output directory");
  diag->add_option("--checkpoint", diag_ckpts, "name=path, repeatable");
  diag->add_flag("--svg", diag_svg, "Also write the ratio bar chart");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const std::string kind = dynamic_cast<const CLI::ExtrasError*>(&e) ? "unknown_flag" : "usage";
    return report(kExitUsage, kind, e.what());
  }

  try {
    if (synth->parsed()) return cmd_synth(common, synth_out, synth_seed);
    if (prepare->parsed()) return cmd_prepare(common, prep_cube, prep_out, prep_strategy);
    if (trn->parsed()) {
      std::map<std::string, std::string> flags;
      auto put = [&flags](const char* key, const auto& v) {
        if (!v) return;
        std::ostringstream ss;
        ss.precision(17);
        ss << *v;
        flags[key] = ss.str();
      };
      put("train.protocol", protocol);
      put("train.strategy", strategy);
      put("train.loss", loss);
      put("train.epochs_pre", epochs_pre);
      put("train.epochs_cl", epochs_cl);
      put("train.lr_pre", lr_pre);
      put("train.lr_cl", lr_cl);
      put("train.margin", margin);
      put("train.seed", train_seed);
      return cmd_train(common, train_prepared, train_out, flags, resume, stop_after);
    }
    if (ev->parsed()) return cmd_eval(common, eval_prepared, eval_ckpt, eval_out, eval_split);
    if (diag->parsed()) return cmd_diagnose(common, diag_prepared, diag_out, diag_ckpts, diag_svg);
  } catch (const CliError& e) {
    return report(e.code, e.kind, e.what());
  } catch (const UnknownKeyError& e) {
    return report(kExitUnknownKey, "unknown_key", e.what());
  } catch (const MissingPathError& e) {
    return report(kExitMissingPath, "missing_path", e.what());
  } catch (const ConfigError& e) {
    return report(kExitConfig, "invalid_config", e.what());
  } catch (const DataError& e) {
    return report(kExitData, "bad_data", e.what());
  } catch (const std::exception& e) {
    return report(kExitFailure, "failure", e.what());
  }
  return report(kExitUsage, "usage", "no subcommand");
}

}  // namespace mccl
