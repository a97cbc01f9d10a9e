#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepaer/data.hpp"
#include "deepaer/ensemble.hpp"
#include "deepaer/parallel.hpp"
#include "deepaer/trainer.hpp"

namespace deepaer {

// Positive class is Low (LV/LA): TP counts Low trials identified as Low.
struct ConfusionMatrix {
  long long tp = 0;
  long long fn = 0;
  long long fp = 0;
  long long tn = 0;

  long long total() const { return tp + fn + fp + tn; }
  void add(int actual, int predicted) {
    if (actual == static_cast<int>(BinaryLabel::Low))
      (predicted == actual ? tp : fn) += 1;
    else
      (predicted == actual ? tn : fp) += 1;
  }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    fn += o.fn;
    fp += o.fp;
    tn += o.tn;
    return *this;
  }
};

// The six metrics; a metric whose denominator is zero is reported as
// not-applicable (nullopt), never as NaN.
struct Metrics {
  std::optional<double> acc, sens, spec, prec, fm, gm;
};

Metrics compute_metrics(const ConfusionMatrix& cm);

// Pearson correlation. Throws on length mismatch / length < 2 / both vectors
// constant; returns nullopt when exactly one vector is constant.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

using CorrMatrix = std::vector<std::vector<std::optional<double>>>;

// Entry (i, j) correlates channels i and j over trials of their per-channel
// window-vote fractions. Diagonal is exactly 1 for non-degenerate channels;
// rows/columns of constant channels are not-applicable.
CorrMatrix channel_correlation_matrix(const std::vector<std::vector<double>>& vote_fractions);

// ---------------------------------------------------------------------------
// Cross-validation reports
// ---------------------------------------------------------------------------

struct FoldResult {
  int fold = 0;  // 1-based in reports
  ConfusionMatrix cm;
  Metrics metrics;
  long long ties_level1 = 0;
  long long ties_level2 = 0;
};

struct EvalReport {
  std::string problem;
  std::string region;
  std::string variant;
  int tw_seconds = 5;
  int k = 10;
  std::vector<FoldResult> folds;
  ConfusionMatrix aggregate;
  Metrics aggregate_metrics;
  double mean_acc_percent = 0.0;
  double std_acc_percent = 0.0;  // population std over folds
  long long ties_level1 = 0;
  long long ties_level2 = 0;
  // Per-trial fraction of windows voting High, per region channel, taken from
  // the fold where the trial was under test. Feeds the correlation matrix.
  std::vector<std::vector<double>> vote_fractions;
  std::vector<int> region_channels;
  std::vector<std::string> warnings;
};

// Accuracy percentages are truncated (not rounded) to two decimals: 126/128
// prints as 98.43%.
std::string format_percent_truncated(double fraction);
std::string format_metric(const std::optional<double>& m);

std::string report_csv(const EvalReport& report);
std::string report_text(const EvalReport& report);
std::string correlation_csv(const CorrMatrix& matrix, const std::vector<std::string>& names);

void write_file(const std::filesystem::path& path, const std::string& content);

// ---------------------------------------------------------------------------
// run_cv: the full per-fold train + two-level-ensemble evaluation loop
// ---------------------------------------------------------------------------

struct CvOptions {
  Problem problem = Problem::valence;
  std::string region_name = "FRONT";
  Variant variant = Variant::M2;
  int tw_seconds = 5;
  int k = 10;
  std::uint64_t seed = 0;
  int threads = 1;
  TrainConfig train{};
};

// For every fold: one model per region channel is trained on the training
// folds' windows, then the held-out trials are classified through the
// two-level ensemble. Channel trainings are independent jobs; everything is
// reduced in fixed order so the report does not depend on scheduling.
template <typename T>
EvalReport run_cv(const EegDataset& ds, const std::vector<int>& region_channels,
                  const CvOptions& opt) {
  if (region_channels.empty()) throw DataError("run_cv: empty region");
  const int window_samples = window_samples_for(opt.tw_seconds);
  const ModelSpec spec = make_spec(opt.variant, window_samples);

  std::vector<int> labels(ds.n_trials);
  for (int t = 0; t < ds.n_trials; ++t) labels[t] = ds.label(t, opt.problem);

  const FoldPlan plan = make_folds(labels, opt.k, derive_seed(opt.seed, {0xF01D}));

  EvalReport report;
  report.problem = problem_name(opt.problem);
  report.region = opt.region_name;
  report.variant = variant_name(opt.variant);
  report.tw_seconds = opt.tw_seconds;
  report.k = opt.k;
  report.region_channels = region_channels;
  report.warnings = plan.warnings;
  report.vote_fractions.assign(ds.n_trials, std::vector<double>(region_channels.size(), 0.0));

  for (int f = 0; f < opt.k; ++f) {
    std::vector<Model<T>> models(region_channels.size());
    std::vector<std::vector<std::string>> train_warnings(region_channels.size());

    parallel_for(region_channels.size(), opt.threads, [&](std::size_t ci) {
      const int channel = region_channels[ci];
      auto split = build_training_windows<T>(ds, plan, f, channel, window_samples, labels);
      Rng init_rng(derive_seed(opt.seed, {0x1417, static_cast<std::uint64_t>(f),
                                          static_cast<std::uint64_t>(channel)}));
      Model<T> model = build_model<T>(spec, init_rng, opt.variant, channel);
      TrainConfig cfg = opt.train;
      cfg.seed = derive_seed(opt.seed, {0x7124, static_cast<std::uint64_t>(f),
                                        static_cast<std::uint64_t>(channel)});
      TrainResult tr = train_channel_model(model, split.train, cfg);
      train_warnings[ci] = std::move(tr.warnings);
      models[ci] = std::move(model);
    });
    for (auto& w : train_warnings)
      report.warnings.insert(report.warnings.end(), w.begin(), w.end());

    FoldResult fold;
    fold.fold = f + 1;
    for (int trial : plan.folds[f]) {
      TrialDecision decision =
          classify_trial(models, ds, trial, region_channels, window_samples);
      fold.cm.add(labels[trial], decision.outcome.label);
      fold.ties_level1 += decision.level1_ties;
      fold.ties_level2 += decision.level2_tie ? 1 : 0;
      for (std::size_t ci = 0; ci < region_channels.size(); ++ci)
        report.vote_fractions[trial][ci] = decision.channels[ci].high_vote_fraction;
    }
    fold.metrics = compute_metrics(fold.cm);
    report.aggregate += fold.cm;
    report.ties_level1 += fold.ties_level1;
    report.ties_level2 += fold.ties_level2;
    report.folds.push_back(std::move(fold));
  }

  report.aggregate_metrics = compute_metrics(report.aggregate);
  double mean = 0.0;
  for (const auto& fr : report.folds) mean += *fr.metrics.acc * 100.0;
  mean /= static_cast<double>(report.folds.size());
  double var = 0.0;
  for (const auto& fr : report.folds) {
    const double d = *fr.metrics.acc * 100.0 - mean;
    var += d * d;
  }
  var /= static_cast<double>(report.folds.size());
  report.mean_acc_percent = mean;
  report.std_acc_percent = std::sqrt(var);
  return report;
}

}  // namespace deepaer
