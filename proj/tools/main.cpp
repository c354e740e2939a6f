#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "artree/compact.hpp"
#include "artree/dataset.hpp"
#include "artree/errors.hpp"
#include "artree/eval.hpp"
#include "artree/forest.hpp"
#include "artree/parallel.hpp"

namespace {

using namespace artree;
using CLI::App;

struct CommonOpts {
  std::uint64_t seed = 1;
  unsigned threads = 0;  // 0 = all cores
};

void log_kv(std::ostream& out, const std::string& cmd, const std::string& detail) {
  out << "# " << cmd << " " << detail << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"EEG artifact detection: FFT/DWT features, Extra-Trees ensembles,\n"
               "cost-complexity pruning to a byte budget, compact 9-byte-per-node models"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from an INI/TOML config file");

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "Generate a synthetic annotated corpus");
  SynthConfig synth_cfg;
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--patients", synth_cfg.n_patients, "Number of patients");
  synth->add_option("--channels", synth_cfg.n_channels, "Channels per recording");
  synth->add_option("--fs", synth_cfg.fs, "Sampling rate in Hz");
  synth->add_option("--duration", synth_cfg.duration_s, "Recording length in seconds");
  synth->add_option("--artifact-rate", synth_cfg.artifact_rate,
                    "Target fraction of time covered by artifacts");
  synth->add_option("--classes", synth_cfg.class_count, "Artifact classes (1..12)");
  synth->add_option("--seed", synth_cfg.seed, "Random seed");

  // --- features ---
  auto* features = app.add_subcommand("features", "Extract per-window feature table");
  std::string feat_corpus, feat_out, feat_split;
  std::string feat_group = "a", feat_scheme = "bc";
  std::vector<double> feat_ratios = {0.8, 0.1, 0.1};
  CommonOpts feat_opts;
  features->add_option("--corpus", feat_corpus, "Corpus directory")->required();
  features->add_option("--out", feat_out, "Output CSV path")->required();
  features->add_option("--group", feat_group, "Frequency group (a|b|c|d|e)");
  features->add_option("--scheme", feat_scheme, "Label scheme (bc|mc|mmc)");
  features->add_option("--split", feat_split,
                       "Keep one patient-independent partition (train|val|test)")
      ->check(CLI::IsMember({"train", "val", "test"}));
  features->add_option("--ratios", feat_ratios, "Split ratios (three values)")
      ->expected(3);
  features->add_option("--seed", feat_opts.seed, "Split shuffle seed");
  features->add_option("--threads", feat_opts.threads, "Worker threads (0 = all cores)");

  // --- train ---
  auto* train = app.add_subcommand("train", "Grow an Extra-Trees ensemble and pack it");
  std::string train_features, train_out, train_scheme;
  int train_trees = 64, train_lanes = kDefaultLaneWidth;
  GrowParams train_params;
  CommonOpts train_opts;
  train->add_option("--features", train_features, "Training feature CSV")->required();
  train->add_option("--out", train_out, "Output model path (.ctf)")->required();
  train->add_option("--scheme", train_scheme,
                    "Expected label scheme; must match the feature file");
  train->add_option("--trees", train_trees, "Trees per output (multiple of lane width)");
  train->add_option("--lanes", train_lanes, "Lane width the tree count must divide into");
  train->add_option("--max-depth", train_params.max_depth, "Maximum tree depth");
  train->add_option("--k-features", train_params.k_features,
                    "Candidate features per split (0 = ceil(sqrt(d)))");
  train->add_option("--min-leaf", train_params.min_samples_leaf, "Minimum samples per leaf");
  train->add_option("--seed", train_opts.seed, "Random seed");
  train->add_option("--threads", train_opts.threads, "Worker threads (0 = all cores)");

  // --- prune ---
  auto* prune = app.add_subcommand("prune", "Cost-complexity prune a packed model");
  std::string prune_model, prune_features, prune_out;
  std::uint64_t prune_budget = 0;
  double prune_alpha = -1.0;
  prune->add_option("--model", prune_model, "Input model (.ctf)")->required();
  prune->add_option("--features", prune_features,
                    "Training feature CSV used to rebuild per-node statistics")
      ->required();
  prune->add_option("--out", prune_out, "Output model path (.ctf)")->required();
  auto* budget_opt =
      prune->add_option("--budget", prune_budget, "Node payload budget in bytes (9 B/node)");
  auto* alpha_opt = prune->add_option("--alpha", prune_alpha, "Prune at a fixed alpha");
  budget_opt->excludes(alpha_opt);

  // --- sweep ---
  auto* sweep = app.add_subcommand("sweep", "Accuracy-vs-size prune curve CSV");
  std::string sweep_model, sweep_features, sweep_train_features, sweep_out;
  std::size_t sweep_max_points = 200;
  CommonOpts sweep_opts;
  sweep->add_option("--model", sweep_model, "Input model (.ctf)")->required();
  sweep->add_option("--features", sweep_features, "Evaluation feature CSV")->required();
  sweep->add_option("--train-features", sweep_train_features,
                    "Feature CSV for pruning statistics (default: --features)");
  sweep->add_option("--out", sweep_out, "Output curve CSV")->required();
  sweep->add_option("--max-points", sweep_max_points, "Subsample the alpha set (0 = all)");
  sweep->add_option("--threads", sweep_opts.threads, "Worker threads (0 = all cores)");

  // --- eval ---
  auto* eval_cmd = app.add_subcommand("eval", "Classification metrics for a model");
  std::string eval_model, eval_features;
  CommonOpts eval_opts;
  eval_cmd->add_option("--model", eval_model, "Input model (.ctf)")->required();
  eval_cmd->add_option("--features", eval_features, "Evaluation feature CSV")->required();
  eval_cmd->add_option("--threads", eval_opts.threads, "Worker threads (0 = all cores)");

  // --- bench ---
  auto* bench = app.add_subcommand("bench", "Inference throughput microbenchmark");
  std::string bench_model, bench_features;
  int bench_reps = 10;
  bench->add_option("--model", bench_model, "Input model (.ctf)")->required();
  bench->add_option("--features", bench_features, "Feature CSV to replay")->required();
  bench->add_option("--reps", bench_reps, "Passes over the feature table");

  for (App* sub : app.get_subcommands([](App*) { return true; })) {
    sub->configurable();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // anything but --help/--version is a usage error
  }

  if (synth->parsed()) {
    log_kv(std::cerr, "synth",
           "out=" + synth_out + " patients=" + std::to_string(synth_cfg.n_patients) +
               " channels=" + std::to_string(synth_cfg.n_channels) +
               " fs=" + std::to_string(synth_cfg.fs) +
               " duration=" + std::to_string(synth_cfg.duration_s) +
               " artifact_rate=" + std::to_string(synth_cfg.artifact_rate) +
               " classes=" + std::to_string(synth_cfg.class_count) +
               " seed=" + std::to_string(synth_cfg.seed));
    save_corpus(synth_corpus(synth_cfg), synth_out);
    return 0;
  }

  if (features->parsed()) {
    log_kv(std::cerr, "features",
           "corpus=" + feat_corpus + " group=" + feat_group + " scheme=" + feat_scheme +
               (feat_split.empty()
                    ? ""
                    : " split=" + feat_split + " ratios=" + std::to_string(feat_ratios[0]) +
                          "," + std::to_string(feat_ratios[1]) + "," +
                          std::to_string(feat_ratios[2]) +
                          " seed=" + std::to_string(feat_opts.seed)) +
               " out=" + feat_out + " threads=" + std::to_string(feat_opts.threads));
    const Corpus corpus = load_corpus(feat_corpus);
    Corpus grouped = extract_group(corpus, group_from_string(feat_group));
    if (!feat_split.empty()) {
      SplitResult split = split_patient_independent(
          grouped, {feat_ratios[0], feat_ratios[1], feat_ratios[2]}, feat_opts.seed);
      if (feat_split == "train") grouped = std::move(split.train);
      else if (feat_split == "val") grouped = std::move(split.val);
      else grouped = std::move(split.test);
    }
    const FeatureTable table =
        build_feature_table(grouped, scheme_from_string(feat_scheme), feat_opts.threads);
    write_feature_csv(table, std::filesystem::path(feat_out));
    std::cerr << "# wrote " << table.rows.size() << " windows x "
              << table.n_features() << " features\n";
    return 0;
  }

  if (train->parsed()) {
    log_kv(std::cerr, "train",
           "features=" + train_features + " trees=" + std::to_string(train_trees) +
               " lanes=" + std::to_string(train_lanes) +
               " max_depth=" + std::to_string(train_params.max_depth) +
               " k_features=" + std::to_string(train_params.k_features) +
               " min_leaf=" + std::to_string(train_params.min_samples_leaf) +
               " seed=" + std::to_string(train_opts.seed) +
               " threads=" + std::to_string(train_opts.threads) + " out=" + train_out);
    const FeatureTable table = read_feature_csv(train_features);
    if (!train_scheme.empty() && scheme_from_string(train_scheme) != table.scheme) {
      throw std::invalid_argument("train: feature file carries scheme '" +
                                  std::string(to_string(table.scheme)) +
                                  "', not '" + train_scheme + "'");
    }
    const ForestModel forest = grow_forest(table, train_trees, train_params,
                                           train_opts.seed, train_opts.threads, train_lanes);
    const CompactForest packed = pack_forest(forest);
    write_model_file(packed, train_out);
    std::cerr << "# model: " << packed.total_nodes() << " nodes, payload "
              << payload_size_bytes(packed) << " B, file " << packed_size_bytes(packed)
              << " B\n";
    return 0;
  }

  if (prune->parsed()) {
    log_kv(std::cerr, "prune",
           "model=" + prune_model + " features=" + prune_features +
               (budget_opt->count() ? " budget=" + std::to_string(prune_budget)
                                    : " alpha=" + std::to_string(prune_alpha)) +
               " out=" + prune_out);
    if (!budget_opt->count() && !alpha_opt->count()) {
      throw std::invalid_argument("prune: one of --budget or --alpha is required");
    }
    const CompactForest packed = read_model_file(prune_model);
    ForestModel forest = unpack_forest(packed);
    refit_statistics(forest, read_feature_csv(prune_features));
    ForestModel pruned;
    double alpha_used = 0.0;
    if (budget_opt->count()) {
      BudgetResult result = prune_to_budget(forest, prune_budget);
      pruned = std::move(result.forest);
      alpha_used = result.alpha;
    } else {
      if (prune_alpha < 0.0) throw std::invalid_argument("prune: alpha must be >= 0");
      pruned = prune_forest_at_alpha(forest, prune_alpha);
      alpha_used = prune_alpha;
    }
    const CompactForest out = pack_forest(pruned);
    write_model_file(out, prune_out);
    std::cerr << "# pruned at alpha=" << alpha_used << ": " << out.total_nodes()
              << " nodes, payload " << payload_size_bytes(out) << " B, file "
              << packed_size_bytes(out) << " B\n";
    return 0;
  }

  if (sweep->parsed()) {
    if (sweep_train_features.empty()) sweep_train_features = sweep_features;
    log_kv(std::cerr, "sweep",
           "model=" + sweep_model + " features=" + sweep_features +
               " train_features=" + sweep_train_features + " out=" + sweep_out +
               " max_points=" + std::to_string(sweep_max_points) +
               " threads=" + std::to_string(sweep_opts.threads));
    const CompactForest packed = read_model_file(sweep_model);
    ForestModel forest = unpack_forest(packed);
    refit_statistics(forest, read_feature_csv(sweep_train_features));
    const FeatureTable eval_table = read_feature_csv(sweep_features);
    const auto rows = prune_curve(forest, eval_table, nullptr, sweep_opts.threads,
                                  sweep_max_points);
    std::ofstream out(sweep_out, std::ios::binary);
    if (!out) throw FormatError("cannot write " + sweep_out);
    write_prune_curve_csv(rows, out);
    std::cerr << "# wrote " << rows.size() << " curve rows\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    log_kv(std::cerr, "eval",
           "model=" + eval_model + " features=" + eval_features +
               " threads=" + std::to_string(eval_opts.threads));
    const CompactForest packed = read_model_file(eval_model);
    const FeatureTable table = read_feature_csv(eval_features);
    const Metrics metrics = evaluate(packed, table, eval_opts.threads);
    write_metrics_csv(metrics, std::cout);
    return 0;
  }

  if (bench->parsed()) {
    log_kv(std::cerr, "bench",
           "model=" + bench_model + " features=" + bench_features +
               " reps=" + std::to_string(bench_reps));
    const CompactForest packed = read_model_file(bench_model);
    const FeatureTable table = read_feature_csv(bench_features);
    const BenchResult result = bench_inference(packed, table, bench_reps);
    std::printf("inferences,%llu\n", static_cast<unsigned long long>(result.inferences));
    std::printf("windows_per_s,%.1f\n", result.windows_per_s);
    std::printf("mean_us,%.3f\n", result.mean_us);
    std::printf("p99_us,%.3f\n", result.p99_us);
    std::printf("mean_nodes_visited,%.4f\n", result.mean_nodes_visited);
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CapacityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
