#include "deepaer/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "deepaer/data.hpp"
#include "deepaer/eval.hpp"
#include "deepaer/gradcheck.hpp"
#include "deepaer/serialize.hpp"
#include "deepaer/version.hpp"

namespace deepaer::cli {

namespace fs = std::filesystem;

namespace {

struct RunConfig {
  std::string command;
  std::string dataset;
  std::string problem = "valence";
  std::string region = "FRONT";
  std::string variant = "M2";
  int tw = 5;
  int batch = 64;
  int epochs = 50;
  double alpha = 1e-4;
  std::uint64_t seed = 0;
  std::string out;
  int threads = 1;
  std::string region_map;
  std::string precision = "f32";
  int folds = 10;
  // synth parameters
  int synth_trials = 200;
  int synth_channels = 12;
  int synth_samples = 8064;
  double synth_separability = 0.8;
  // gradcheck
  double tolerance = 1e-4;
};

// Config file: JSON object whose keys mirror the long flags. Values act as
// defaults; explicit flags override them.
void load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed config file: ") + e.what());
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("dataset", cfg.dataset);
  get("problem", cfg.problem);
  get("region", cfg.region);
  get("variant", cfg.variant);
  get("tw", cfg.tw);
  get("batch", cfg.batch);
  get("epochs", cfg.epochs);
  get("alpha", cfg.alpha);
  get("seed", cfg.seed);
  get("out", cfg.out);
  get("threads", cfg.threads);
  get("region_map", cfg.region_map);
  get("precision", cfg.precision);
  get("folds", cfg.folds);
}

nlohmann::json config_json(const RunConfig& cfg) {
  return {{"command", cfg.command}, {"dataset", cfg.dataset},   {"problem", cfg.problem},
          {"region", cfg.region},   {"variant", cfg.variant},   {"tw", cfg.tw},
          {"batch", cfg.batch},     {"epochs", cfg.epochs},     {"alpha", cfg.alpha},     {"seed", cfg.seed},
          {"out", cfg.out},         {"threads", cfg.threads},   {"region_map", cfg.region_map},
          {"precision", cfg.precision}, {"folds", cfg.folds}};
}

void write_run_manifest(const RunConfig& cfg, const fs::path& out_dir) {
  nlohmann::json manifest = {{"tool", "deepaer"},
                             {"version", kVersion},
                             {"config", config_json(cfg)}};
  write_file(out_dir / "run_manifest.json", manifest.dump(2) + "\n");
}

fs::path ensure_out_dir(const RunConfig& cfg) {
  if (cfg.out.empty())
    throw DataError("no output directory: pass --out or set DEEPAER_OUT");
  fs::path dir(cfg.out);
  fs::create_directories(dir);
  return dir;
}

RegionTable region_table_for(const RunConfig& cfg) {
  RegionTable table = RegionTable::defaults();
  if (!cfg.region_map.empty()) table.apply_override_file(cfg.region_map);
  return table;
}

CvOptions cv_options(const RunConfig& cfg) {
  CvOptions opt;
  opt.problem = problem_from_name(cfg.problem);
  opt.region_name = cfg.region;
  opt.variant = variant_from_name(cfg.variant);
  opt.tw_seconds = cfg.tw;
  opt.k = cfg.folds;
  opt.seed = cfg.seed;
  opt.threads = cfg.threads;
  opt.train.batch_size = cfg.batch;
  opt.train.epochs = cfg.epochs;
  opt.train.adam.alpha = cfg.alpha;
  return opt;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_validate(const RunConfig& cfg) {
  EegDataset ds = load_dataset(cfg.dataset);
  long long low_v = 0, low_a = 0;
  for (int t = 0; t < ds.n_trials; ++t) {
    if (ds.label(t, Problem::valence) == 0) ++low_v;
    if (ds.label(t, Problem::arousal) == 0) ++low_a;
  }
  std::printf("dataset: %s\n", cfg.dataset.c_str());
  std::printf("trials: %d  channels: %d  samples: %d  rate: %.1f Hz  synthetic: %s\n",
              ds.n_trials, ds.n_channels, ds.n_samples, ds.sample_rate_hz,
              ds.synthetic ? "yes" : "no");
  std::printf("valence: %lld Low / %lld High\n", low_v, ds.n_trials - low_v);
  std::printf("arousal: %lld Low / %lld High\n", low_a, ds.n_trials - low_a);
  std::printf("container OK\n");
  return kExitOk;
}

int cmd_synth(const RunConfig& cfg) {
  fs::path out_dir = ensure_out_dir(cfg);
  EegDataset ds = generate_synthetic(cfg.synth_trials, cfg.synth_channels, cfg.synth_samples,
                                     cfg.synth_separability, cfg.seed);
  save_dataset(ds, out_dir / "dataset.json");
  write_run_manifest(cfg, out_dir);
  std::printf("wrote synthetic dataset (%d trials x %d channels x %d samples) to %s\n",
              ds.n_trials, ds.n_channels, ds.n_samples, out_dir.string().c_str());
  return kExitOk;
}

template <typename T>
int cmd_train_impl(const RunConfig& cfg) {
  fs::path out_dir = ensure_out_dir(cfg);
  EegDataset ds = load_dataset(cfg.dataset);
  RegionTable table = region_table_for(cfg);
  const auto channels = select_region(ds, table.get(cfg.region));

  const Problem problem = problem_from_name(cfg.problem);
  const Variant variant = variant_from_name(cfg.variant);
  const int window_samples = window_samples_for(cfg.tw);
  const ModelSpec spec = make_spec(variant, window_samples);

  std::vector<int> labels(ds.n_trials);
  for (int t = 0; t < ds.n_trials; ++t) labels[t] = ds.label(t, problem);

  std::vector<std::string> all_warnings;
  parallel_for(channels.size(), cfg.threads, [&](std::size_t ci) {
    const int channel = channels[ci];
    WindowBatch<T> batch;
    batch.channel_index = channel;
    batch.window_len = window_samples;
    for (int trial = 0; trial < ds.n_trials; ++trial) {
      const auto segs = segment_channel(ds, trial, channel, window_samples);
      for (std::size_t k = 0; k < segs.size(); ++k) {
        const std::size_t off = batch.data.size();
        batch.data.resize(off + window_samples);
        zscore_into<T, float>(segs[k], std::span<T>(batch.data.data() + off,
                                                    static_cast<std::size_t>(window_samples)));
        batch.labels.push_back(labels[trial]);
        batch.trial_ids.push_back(trial);
        batch.window_index.push_back(static_cast<int>(k));
      }
    }

    Rng init_rng(derive_seed(cfg.seed, {0x1417, 0, static_cast<std::uint64_t>(channel)}));
    Model<T> model = build_model<T>(spec, init_rng, variant, channel);
    TrainConfig tc;
    tc.batch_size = cfg.batch;
    tc.epochs = cfg.epochs;
    tc.adam.alpha = cfg.alpha;
    tc.seed = derive_seed(cfg.seed, {0x7124, 0, static_cast<std::uint64_t>(channel)});
    TrainResult tr = train_channel_model(model, batch, tc);

    const std::string& name = ds.channel_names[channel];
    save_weights(model, out_dir / ("model_" + name + ".lpw"));
    write_file(out_dir / ("loss_" + name + ".csv"), loss_curve_csv(tr));
  });

  write_run_manifest(cfg, out_dir);
  std::printf("trained %zu channel models (%s, %s) into %s\n", channels.size(),
              cfg.variant.c_str(), cfg.region.c_str(), out_dir.string().c_str());
  return kExitOk;
}

template <typename T>
EvalReport run_cv_for(const RunConfig& cfg, const EegDataset& ds) {
  RegionTable table = region_table_for(cfg);
  const auto channels = select_region(ds, table.get(cfg.region));
  return run_cv<T>(ds, channels, cv_options(cfg));
}

template <typename T>
int cmd_cv_impl(const RunConfig& cfg) {
  fs::path out_dir = ensure_out_dir(cfg);
  EegDataset ds = load_dataset(cfg.dataset);
  EvalReport report = run_cv_for<T>(cfg, ds);
  write_file(out_dir / "report.csv", report_csv(report));
  write_file(out_dir / "report.txt", report_text(report));
  write_run_manifest(cfg, out_dir);
  std::printf("%s", report_text(report).c_str());
  return kExitOk;
}

template <typename T>
int cmd_regions_impl(const RunConfig& cfg) {
  fs::path out_dir = ensure_out_dir(cfg);
  EegDataset ds = load_dataset(cfg.dataset);
  RegionTable table = region_table_for(cfg);

  std::string summary = "region,channels,mean_acc,std_acc\n";
  for (const auto& name : table.names()) {
    RunConfig sub = cfg;
    sub.region = name;
    EvalReport report = run_cv_for<T>(sub, ds);
    fs::path region_dir = out_dir / name;
    fs::create_directories(region_dir);
    write_file(region_dir / "report.csv", report_csv(report));
    write_file(region_dir / "report.txt", report_text(report));
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s,%zu,%.2f,%.2f\n", name.c_str(),
                  report.region_channels.size(), report.mean_acc_percent,
                  report.std_acc_percent);
    summary += buf;
    std::printf("%-6s mean acc %.2f%% (std %.2f)\n", name.c_str(), report.mean_acc_percent,
                report.std_acc_percent);
  }
  write_file(out_dir / "regions.csv", summary);
  write_run_manifest(cfg, out_dir);
  return kExitOk;
}

template <typename T>
int cmd_correlate_impl(const RunConfig& cfg) {
  fs::path out_dir = ensure_out_dir(cfg);
  EegDataset ds = load_dataset(cfg.dataset);
  EvalReport report = run_cv_for<T>(cfg, ds);

  CorrMatrix matrix = channel_correlation_matrix(report.vote_fractions);
  std::vector<std::string> names;
  for (int c : report.region_channels) names.push_back(ds.channel_names[c]);

  write_file(out_dir / "correlation.csv", correlation_csv(matrix, names));
  write_file(out_dir / "report.csv", report_csv(report));
  write_file(out_dir / "report.txt", report_text(report));
  write_run_manifest(cfg, out_dir);
  std::printf("%s", correlation_csv(matrix, names).c_str());
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& cfg) {
  const Variant variant = variant_from_name(cfg.variant);
  const int window_samples = window_samples_for(cfg.tw);
  GradCheckReport report = run_gradient_suite(variant, window_samples, cfg.seed);
  bool ok = true;
  for (const auto& e : report.entries) {
    const bool pass = e.max_rel_err < cfg.tolerance;
    ok = ok && pass;
    std::printf("%-24s max rel err %.3e over %zu elements  [%s]\n", e.name.c_str(),
                e.max_rel_err, e.elements, pass ? "ok" : "FAIL");
  }
  std::printf("gradient check %s (tolerance %.1e)\n", ok ? "passed" : "FAILED", cfg.tolerance);
  return ok ? kExitOk : kExitCheckFailed;
}

template <typename Fn32, typename Fn64>
int dispatch_precision(const RunConfig& cfg, Fn32&& f32, Fn64&& f64) {
  if (cfg.precision == "f32") return f32();
  if (cfg.precision == "f64") return f64();
  throw std::invalid_argument("precision must be f32 or f64");
}

}  // namespace

int run(int argc, const char* const* argv) {
  RunConfig cfg;
  if (const char* env_out = std::getenv("DEEPAER_OUT")) cfg.out = env_out;

  // The config file provides defaults, so it has to be read before the
  // regular parse; flags then override whatever it set.
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      try {
        load_config_file(argv[i + 1], cfg);
      } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
      }
      break;
    }
  }

  CLI::App app{"Deep-AER: per-channel 1D-CNN EEG emotion classification with two-level "
               "majority-vote fusion"};
  app.set_version_flag("--version", std::string(kVersion));
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file with flag defaults");

  auto add_common = [&](CLI::App* sub, bool needs_dataset) {
    if (needs_dataset)
      sub->add_option("--dataset", cfg.dataset, "dataset manifest path")->required();
    sub->add_option("--problem", cfg.problem, "valence|arousal")
        ->check(CLI::IsMember({"valence", "arousal"}));
    sub->add_option("--region", cfg.region, "FRONT|CENT|PERI|OCCIP|ALL")
        ->check(CLI::IsMember({"FRONT", "CENT", "PERI", "OCCIP", "ALL"}));
    sub->add_option("--variant", cfg.variant, "model variant M1..M4")
        ->check(CLI::IsMember({"M1", "M2", "M3", "M4"}));
    sub->add_option("--tw", cfg.tw, "window length in seconds (5, 10, 15)")
        ->check(CLI::IsMember({5, 10, 15}));
    sub->add_option("--batch", cfg.batch, "training batch size");
    sub->add_option("--epochs", cfg.epochs, "training epochs");
    sub->add_option("--alpha", cfg.alpha, "Adam learning rate");
    sub->add_option("--seed", cfg.seed, "root seed");
    sub->add_option("--out", cfg.out, "output directory (env DEEPAER_OUT)");
    sub->add_option("--threads", cfg.threads, "worker threads for channel training");
    sub->add_option("--region-map", cfg.region_map, "JSON region override file");
    sub->add_option("--precision", cfg.precision, "f32|f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    sub->add_option("--folds", cfg.folds, "number of cross-validation folds");
  };

  CLI::App* validate = app.add_subcommand("validate", "audit a dataset container");
  validate->add_option("--dataset", cfg.dataset, "dataset manifest path")->required();

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
  synth->add_option("--trials", cfg.synth_trials, "number of trials");
  synth->add_option("--channels", cfg.synth_channels, "number of channels");
  synth->add_option("--samples", cfg.synth_samples, "samples per channel");
  synth->add_option("--sep", cfg.synth_separability, "class separability in [0, 1]");
  synth->add_option("--seed", cfg.seed, "root seed");
  synth->add_option("--out", cfg.out, "output directory (env DEEPAER_OUT)");

  CLI::App* train = app.add_subcommand("train", "train per-channel models for a region");
  add_common(train, true);

  CLI::App* cv = app.add_subcommand("cv", "k-fold cross validation with the two-level ensemble");
  add_common(cv, true);

  CLI::App* regions = app.add_subcommand("regions", "run cv across all five brain regions");
  add_common(regions, true);

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--variant", cfg.variant, "model variant M1..M4")
      ->check(CLI::IsMember({"M1", "M2", "M3", "M4"}));
  gradcheck->add_option("--tw", cfg.tw, "window length in seconds (5, 10, 15)")
      ->check(CLI::IsMember({5, 10, 15}));
  gradcheck->add_option("--seed", cfg.seed, "root seed");
  gradcheck->add_option("--tolerance", cfg.tolerance, "max relative error");

  CLI::App* correlate = app.add_subcommand("correlate",
                                           "channel correlation matrix of first-level votes");
  add_common(correlate, true);

  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand(validate)) {
      cfg.command = "validate";
      return cmd_validate(cfg);
    }
    if (app.got_subcommand(synth)) {
      cfg.command = "synth";
      return cmd_synth(cfg);
    }
    if (app.got_subcommand(train)) {
      cfg.command = "train";
      return dispatch_precision(cfg, [&] { return cmd_train_impl<float>(cfg); },
                                [&] { return cmd_train_impl<double>(cfg); });
    }
    if (app.got_subcommand(cv)) {
      cfg.command = "cv";
      return dispatch_precision(cfg, [&] { return cmd_cv_impl<float>(cfg); },
                                [&] { return cmd_cv_impl<double>(cfg); });
    }
    if (app.got_subcommand(regions)) {
      cfg.command = "regions";
      return dispatch_precision(cfg, [&] { return cmd_regions_impl<float>(cfg); },
                                [&] { return cmd_regions_impl<double>(cfg); });
    }
    if (app.got_subcommand(gradcheck)) {
      cfg.command = "gradcheck";
      return cmd_gradcheck(cfg);
    }
    if (app.got_subcommand(correlate)) {
      cfg.command = "correlate";
      return dispatch_precision(cfg, [&] { return cmd_correlate_impl<float>(cfg); },
                                [&] { return cmd_correlate_impl<double>(cfg); });
    }
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const WeightsError& e) {
    std::fprintf(stderr, "weights error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("deepaer");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace deepaer::cli
