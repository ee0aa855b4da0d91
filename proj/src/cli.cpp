#include "dysfluency/cli.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "CLI11.hpp"
#include "json.hpp"
#include "dysfluency/config_file.hpp"
#include "dysfluency/data.hpp"
#include "dysfluency/grad_check.hpp"
#include "dysfluency/metrics.hpp"
#include "dysfluency/synth.hpp"
#include "dysfluency/training.hpp"

namespace dysfluency::cli {

namespace {

ClassVocabulary vocab_from_flag(const std::string& name) {
  if (name == "en6") return ClassVocabulary::en6();
  if (name == "full7") return ClassVocabulary::full7();
  throw InvalidArgument("vocabulary must be en6 or full7, got '" + name + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

SplitRatios parse_ratios(const std::string& s) {
  const auto parts = split_list(s);
  if (parts.size() != 3) throw InvalidArgument("--ratios expects train,dev,test");
  SplitRatios r;
  try {
    r.train = std::stod(parts[0]);
    r.dev = std::stod(parts[1]);
    r.test = std::stod(parts[2]);
  } catch (const std::exception&) {
    throw InvalidArgument("--ratios expects three numbers");
  }
  return r;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

// Joins predictions to references by clip id, in prediction-file order.
std::vector<EvalPair> join_predictions(const CorpusTable& refs, const std::vector<PredictionRow>& preds) {
  std::unordered_map<std::string, const ClipRecord*> by_id;
  for (const auto& r : refs.records) by_id.emplace(r.clip_id, &r);
  std::vector<EvalPair> pairs;
  pairs.reserve(preds.size());
  for (const auto& p : preds) {
    const auto it = by_id.find(p.clip_id);
    if (it == by_id.end()) throw InvalidArgument("prediction for unknown clip '" + p.clip_id + "'");
    pairs.push_back({p.clip_id, it->second->labels, p.prediction});
  }
  return pairs;
}

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::string config;
  std::string preset = "default";
};

struct SplitArgs {
  std::string manifest, ratios = "0.8,0.1,0.1", out;
  std::uint64_t seed = 0;
};

struct MergeArgs {
  std::string manifests, vocab, out;
};

struct TrainArgs {
  std::string train, dev, head_cfg, train_cfg, out, test;
  std::optional<std::uint64_t> seed;
};

struct EvalArgs {
  std::string refs, preds, report;
  std::size_t min_count = 50;
  bool exclude_mod = false;
  bool pmr_all_clips = false;
};

struct GradCheckArgs {
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  double eps = 1e-5;
  double tolerance = 1e-4;
};

int run_synth(const SynthArgs& a, std::ostream& out) {
  SynthConfig cfg = a.preset == "hard" ? hard_synth_config() : default_synth_config();
  if (a.preset != "hard" && a.preset != "default") throw InvalidArgument("--preset must be default or hard");
  if (!a.config.empty()) apply_config(load_key_values(a.config), cfg);
  cfg.seed = a.seed;
  const CorpusTable table = write_synthetic_corpus(cfg, a.out);
  out << "wrote " << table.records.size() << " clips to " << a.out << '\n';
  return 0;
}

int run_split(const SplitArgs& a, std::ostream& out) {
  const CorpusTable table = load_manifest(a.manifest);
  const CorpusTable split = speaker_exclusive_split(table, parse_ratios(a.ratios), a.seed);
  const std::filesystem::path dir(a.out);
  std::filesystem::create_directories(dir);
  save_manifest(split, dir / "manifest.csv");
  save_manifest(split.subset(Split::kTrain), dir / "train.csv");
  save_manifest(split.subset(Split::kDev), dir / "dev.csv");
  save_manifest(split.subset(Split::kTest), dir / "test.csv");
  out << "train " << split.subset(Split::kTrain).records.size() << ", dev " << split.subset(Split::kDev).records.size()
      << ", test " << split.subset(Split::kTest).records.size() << '\n';
  return 0;
}

int run_merge(const MergeArgs& a, std::ostream& out) {
  const auto paths = split_list(a.manifests);
  if (paths.size() < 2) throw InvalidArgument("--manifests expects at least two comma-separated paths");
  std::vector<CorpusTable> tables;
  for (const auto& p : paths) tables.push_back(load_manifest(p));
  const CorpusTable merged = merge_corpora(tables, vocab_from_flag(a.vocab));
  const std::filesystem::path dest(a.out);
  if (dest.has_parent_path()) std::filesystem::create_directories(dest.parent_path());
  save_manifest(merged, dest);
  out << "merged " << merged.records.size() << " clips into " << a.out << '\n';
  return 0;
}

int run_train(const TrainArgs& a, std::ostream& out) {
  const CorpusTable train_table = load_manifest(a.train);
  const CorpusTable dev_table = load_manifest(a.dev);
  if (train_table.records.empty()) throw InvalidArgument("training manifest is empty");

  HeadConfig head;
  head.num_classes = static_cast<int>(train_table.vocabulary.size());
  head.feature_dim =
      static_cast<int>(read_feature_file_f32(train_table.feature_file(train_table.records.front())).cols());
  if (!a.head_cfg.empty()) apply_config(load_key_values(a.head_cfg), head);
  TrainConfig tc;
  if (!a.train_cfg.empty()) apply_config(load_key_values(a.train_cfg), tc);
  if (a.seed) {
    tc.seed = *a.seed;
    head.seed = *a.seed;
  }

  const TrainResult result = train(train_table, dev_table, head, tc, [&](const EpochRecord& e) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "epoch %2d  train_loss %.5f  dev_loss %.5f  dev_macro_f1 %.4f\n", e.epoch,
                  e.train_loss, e.dev_loss, e.dev_macro_f1);
    out << buf << std::flush;
  });
  const std::filesystem::path dir(a.out);
  write_run_directory(dir, head, tc, result);
  out << "best epoch " << result.history.best_epoch << " (" << to_string(result.history.stop_reason) << ")\n";
  if (!a.test.empty()) {
    const CorpusTable test_table = load_manifest(a.test);
    const auto rows = predict_table(result.params, test_table, tc.threshold);
    write_predictions(dir / "predictions.csv", test_table.vocabulary, rows);
  }
  return 0;
}

MetricsReport evaluate_files(const EvalArgs& a) {
  const CorpusTable refs = load_manifest(a.refs);
  const auto preds = read_predictions(a.preds, refs.vocabulary);
  const auto pairs = join_predictions(refs, preds);
  ReportOptions opts;
  opts.min_pair_count = a.min_count;
  opts.include_mod_as_relevant = !a.exclude_mod;
  opts.pmr_denominator = a.pmr_all_clips ? PmrDenominator::kAllClips : PmrDenominator::kPositiveReferences;
  return evaluate(pairs, refs.vocabulary, opts);
}

int run_evaluate(const EvalArgs& a, std::ostream& out) {
  const MetricsReport report = evaluate_files(a);
  write_text(a.report, report_to_json(report));
  out << report_to_text(report);
  return 0;
}

int run_analyze(const EvalArgs& a, std::ostream& out) {
  const MetricsReport report = evaluate_files(a);
  nlohmann::ordered_json j;
  j["min_count"] = a.min_count;
  const auto full = nlohmann::ordered_json::parse(report_to_json(report));
  j["test"] = {{"clips", full["clips"]}, {"emr", full["emr"]}, {"pmr", full["pmr"]},
               {"hamming_loss", full["hamming_loss"]}};
  j["test_multi"] = full["multi"];
  j["pair_analysis"] = full["pair_analysis"];
  write_text(a.report, j.dump(2) + "\n");
  out << report_to_text(report);
  return 0;
}

int run_grad_check(const GradCheckArgs& a, std::ostream& out) {
  const GradCheckSummary s = run_head_grad_checks(a.trials, a.seed, a.eps);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "trials %zu  max_relative_error %.3e  worst_trial %zu\n", s.trials,
                s.max_relative_error, s.worst_trial);
  out << buf;
  if (!(s.max_relative_error < a.tolerance)) {
    throw Error("grad_check", "max relative error exceeds tolerance");
  }
  return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-label dysfluency classification toolkit", "dysfluency"};
  app.require_subcommand(1, 1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus (manifest + feature files)");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Random seed")->required();
  synth_cmd->add_option("--config", synth.config, "key=value synth config file");
  synth_cmd->add_option("--preset", synth.preset, "default or hard");

  SplitArgs split;
  auto* split_cmd = app.add_subcommand("split", "Speaker-exclusive train/dev/test split");
  split_cmd->add_option("--manifest", split.manifest, "Input manifest")->required();
  split_cmd->add_option("--ratios", split.ratios, "train,dev,test ratios");
  split_cmd->add_option("--seed", split.seed, "Random seed")->required();
  split_cmd->add_option("--out", split.out, "Output directory")->required();

  MergeArgs merge;
  auto* merge_cmd = app.add_subcommand("merge", "Merge corpora (ALL-EN, M-Ling-S, M-Ling)");
  merge_cmd->add_option("--manifests", merge.manifests, "Comma-separated manifests")->required();
  merge_cmd->add_option("--vocab", merge.vocab, "en6 or full7")->required();
  merge_cmd->add_option("--out", merge.out, "Output manifest")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the classification head");
  train_cmd->add_option("--train", train_args.train, "Training manifest")->required();
  train_cmd->add_option("--dev", train_args.dev, "Development manifest")->required();
  train_cmd->add_option("--head-cfg", train_args.head_cfg, "key=value head config file");
  train_cmd->add_option("--train-cfg", train_args.train_cfg, "key=value training config file");
  train_cmd->add_option("--out", train_args.out, "Run directory")->required();
  train_cmd->add_option("--test", train_args.test, "Manifest to write predictions.csv for");
  train_cmd->add_option("--seed", train_args.seed, "Seed for initialization, shuffling and dropout");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Multi-label metrics report");
  eval_cmd->add_option("--refs", eval.refs, "Reference manifest")->required();
  eval_cmd->add_option("--preds", eval.preds, "Predictions CSV")->required();
  eval_cmd->add_option("--report", eval.report, "Output JSON report")->required();
  eval_cmd->add_option("--min-count", eval.min_count, "Minimum clips per label pair");
  eval_cmd->add_flag("--exclude-mod", eval.exclude_mod, "Do not count Mod as dysfluency-relevant");
  eval_cmd->add_flag("--pmr-all-clips", eval.pmr_all_clips, "PMR over all clips, not only labeled ones");

  EvalArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Multi-label subset and label-pair error analysis");
  analyze_cmd->add_option("--refs", analyze.refs, "Reference manifest")->required();
  analyze_cmd->add_option("--preds", analyze.preds, "Predictions CSV")->required();
  analyze_cmd->add_option("--min-count", analyze.min_count, "Minimum clips per label pair");
  analyze_cmd->add_option("--report", analyze.report, "Output JSON report")->required();
  analyze_cmd->add_flag("--exclude-mod", analyze.exclude_mod, "Do not count Mod as dysfluency-relevant");

  GradCheckArgs gc;
  auto* gc_cmd = app.add_subcommand("grad-check", "Finite-difference check of the head gradients");
  gc_cmd->add_option("--trials", gc.trials, "Number of random instances")->required();
  gc_cmd->add_option("--seed", gc.seed, "Random seed")->required();
  gc_cmd->add_option("--eps", gc.eps, "Central-difference step");
  gc_cmd->add_option("--tolerance", gc.tolerance, "Maximum accepted relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    err << "error: usage: " << msg << '\n';
    return 2;
  }

  try {
    if (*synth_cmd) return run_synth(synth, out);
    if (*split_cmd) return run_split(split, out);
    if (*merge_cmd) return run_merge(merge, out);
    if (*train_cmd) return run_train(train_args, out);
    if (*eval_cmd) return run_evaluate(eval, out);
    if (*analyze_cmd) return run_analyze(analyze, out);
    if (*gc_cmd) return run_grad_check(gc, out);
  } catch (const Error& e) {
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    err << "error: " << e.kind() << ": " << msg << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace dysfluency::cli
