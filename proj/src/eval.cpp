#include "deepaer/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace deepaer {

Metrics compute_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw std::invalid_argument("compute_metrics: empty confusion matrix");
  if (cm.tp < 0 || cm.fn < 0 || cm.fp < 0 || cm.tn < 0)
    throw std::invalid_argument("compute_metrics: negative counts");

  Metrics m;
  const auto ratio = [](long long num, long long den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.acc = ratio(cm.tp + cm.tn, cm.total());
  m.spec = ratio(cm.tn, cm.tn + cm.fp);
  m.sens = ratio(cm.tp, cm.fn + cm.tp);
  m.prec = ratio(cm.tp, cm.tp + cm.fp);
  if (m.prec && m.sens && (*m.prec + *m.sens) > 0.0)
    m.fm = 2.0 * *m.prec * *m.sens / (*m.prec + *m.sens);
  if (m.spec && m.sens) m.gm = std::sqrt(*m.spec * *m.sens);
  return m;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: need length >= 2");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const bool x_const = sxx == 0.0;
  const bool y_const = syy == 0.0;
  if (x_const && y_const) throw std::invalid_argument("pearson: both vectors are constant");
  if (x_const || y_const) return std::nullopt;
  double r = sxy / std::sqrt(sxx * syy);
  if (r > 1.0) r = 1.0;
  if (r < -1.0) r = -1.0;
  return r;
}

CorrMatrix channel_correlation_matrix(const std::vector<std::vector<double>>& vote_fractions) {
  if (vote_fractions.size() < 2)
    throw std::invalid_argument("channel_correlation_matrix: need >= 2 trials");
  const std::size_t n_trials = vote_fractions.size();
  const std::size_t n_channels = vote_fractions.front().size();
  for (const auto& row : vote_fractions)
    if (row.size() != n_channels)
      throw std::invalid_argument("channel_correlation_matrix: ragged input");

  std::vector<std::vector<double>> columns(n_channels, std::vector<double>(n_trials));
  std::vector<bool> constant(n_channels);
  for (std::size_t c = 0; c < n_channels; ++c) {
    for (std::size_t t = 0; t < n_trials; ++t) columns[c][t] = vote_fractions[t][c];
    constant[c] = true;
    for (std::size_t t = 1; t < n_trials; ++t)
      if (columns[c][t] != columns[c][0]) {
        constant[c] = false;
        break;
      }
  }

  CorrMatrix m(n_channels, std::vector<std::optional<double>>(n_channels));
  for (std::size_t i = 0; i < n_channels; ++i) {
    for (std::size_t j = i; j < n_channels; ++j) {
      std::optional<double> r;
      if (constant[i] || constant[j]) {
        r = std::nullopt;  // degenerate channel, including its own diagonal
      } else if (i == j) {
        r = 1.0;
      } else {
        r = pearson(columns[i], columns[j]);
      }
      m[i][j] = r;
      m[j][i] = r;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

std::string format_percent_truncated(double fraction) {
  double pct = fraction * 100.0;
  // Truncate to two decimals; nudge by half an ulp-scale epsilon so values
  // that are exact two-decimal figures do not fall down a bin.
  double scaled = std::floor(pct * 100.0 + 1e-9) / 100.0;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", scaled);
  return buf;
}

std::string format_metric(const std::optional<double>& m) {
  if (!m) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *m);
  return buf;
}

std::string report_csv(const EvalReport& report) {
  std::string out = "fold,region,problem,acc,sens,spec,prec,fm,gm,ties_level1,ties_level2\n";
  for (const auto& f : report.folds) {
    out += std::to_string(f.fold);
    out += ',';
    out += report.region;
    out += ',';
    out += report.problem;
    out += ',';
    out += format_percent_truncated(f.metrics.acc.value_or(0.0));
    out += ',';
    out += format_metric(f.metrics.sens);
    out += ',';
    out += format_metric(f.metrics.spec);
    out += ',';
    out += format_metric(f.metrics.prec);
    out += ',';
    out += format_metric(f.metrics.fm);
    out += ',';
    out += format_metric(f.metrics.gm);
    out += ',';
    out += std::to_string(f.ties_level1);
    out += ',';
    out += std::to_string(f.ties_level2);
    out += '\n';
  }
  return out;
}

std::string report_text(const EvalReport& report) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf),
                "%s | region %s | model %s | Tw %d s | %d-fold cross validation\n",
                report.problem.c_str(), report.region.c_str(), report.variant.c_str(),
                report.tw_seconds, report.k);
  out += buf;
  out += "classes: positive = Low (label 0), negative = High (label 1)\n\n";
  out += "fold   acc%     sens    spec    prec    fm      gm      ties1 ties2\n";
  for (const auto& f : report.folds) {
    std::snprintf(buf, sizeof(buf), "K%-4d  %-7s  %-6s  %-6s  %-6s  %-6s  %-6s  %-5lld %-5lld\n",
                  f.fold, format_percent_truncated(f.metrics.acc.value_or(0.0)).c_str(),
                  format_metric(f.metrics.sens).c_str(), format_metric(f.metrics.spec).c_str(),
                  format_metric(f.metrics.prec).c_str(), format_metric(f.metrics.fm).c_str(),
                  format_metric(f.metrics.gm).c_str(), f.ties_level1, f.ties_level2);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "mean   %.2f\nstd    %.2f\n\n", report.mean_acc_percent,
                report.std_acc_percent);
  out += buf;

  const auto& cm = report.aggregate;
  out += "aggregate confusion matrix (rows: actual, cols: predicted)\n";
  out += "            Low        High\n";
  std::snprintf(buf, sizeof(buf), "Low   %8lld    %8lld\n", cm.tp, cm.fn);
  out += buf;
  std::snprintf(buf, sizeof(buf), "High  %8lld    %8lld\n", cm.fp, cm.tn);
  out += buf;
  const auto& am = report.aggregate_metrics;
  std::snprintf(buf, sizeof(buf),
                "\naggregate: acc %s%%  sens %s  spec %s  prec %s  fm %s  gm %s\n",
                format_percent_truncated(am.acc.value_or(0.0)).c_str(),
                format_metric(am.sens).c_str(), format_metric(am.spec).c_str(),
                format_metric(am.prec).c_str(), format_metric(am.fm).c_str(),
                format_metric(am.gm).c_str());
  out += buf;
  if (!report.warnings.empty()) {
    out += "\nwarnings:\n";
    for (const auto& w : report.warnings) out += "  - " + w + "\n";
  }
  return out;
}

std::string correlation_csv(const CorrMatrix& matrix, const std::vector<std::string>& names) {
  if (matrix.size() != names.size())
    throw std::invalid_argument("correlation_csv: name count mismatch");
  std::string out = "channel";
  for (const auto& n : names) {
    out += ',';
    out += n;
  }
  out += '\n';
  char buf[32];
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    out += names[i];
    for (std::size_t j = 0; j < matrix[i].size(); ++j) {
      out += ',';
      if (matrix[i][j]) {
        std::snprintf(buf, sizeof(buf), "%.4f", *matrix[i][j]);
        out += buf;
      } else {
        out += "NA";
      }
    }
    out += '\n';
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write file: " + path.string());
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw std::runtime_error("short write: " + path.string());
}

}  // namespace deepaer
