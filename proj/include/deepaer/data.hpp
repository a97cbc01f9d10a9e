#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "deepaer/errors.hpp"
#include "deepaer/rng.hpp"

namespace deepaer {

enum class Problem { valence, arousal };

Problem problem_from_name(const std::string& name);
const char* problem_name(Problem p);

// Class convention used throughout: Low = 0, High = 1. Low is the positive
// class of the evaluation metrics.
enum class BinaryLabel : int { Low = 0, High = 1 };

// Ratings below 5 map to Low, 5 and above to High; the same cut applies to
// both dimensions.
BinaryLabel binarize_label(double rating, Problem problem = Problem::valence);

// DEAP geometry used for validation of non-synthetic containers.
inline constexpr int kDeapTrials = 1280;
inline constexpr int kDeapChannels = 32;
inline constexpr int kDeapSamples = 8064;
inline constexpr double kDeapSampleRate = 128.0;

// Collection of labeled multi-channel trials. Samples are stored in 32-bit
// floats, trial-major then channel-major then sample order, matching the
// on-disk blob exactly.
struct EegDataset {
  int n_trials = 0;
  int n_channels = 0;
  int n_samples = 0;
  double sample_rate_hz = kDeapSampleRate;
  bool synthetic = false;
  std::vector<std::string> channel_names;
  std::vector<int> subject_ids;                 // per trial
  std::vector<std::array<double, 2>> ratings;   // per trial (valence, arousal)
  std::vector<float> samples;

  std::span<const float> trial_channel(int trial, int channel) const {
    const std::size_t base =
        (static_cast<std::size_t>(trial) * n_channels + channel) * n_samples;
    return {samples.data() + base, static_cast<std::size_t>(n_samples)};
  }
  double rating(int trial, Problem p) const {
    return ratings[trial][p == Problem::valence ? 0 : 1];
  }
  int label(int trial, Problem p) const {
    return static_cast<int>(binarize_label(rating(trial, p), p));
  }
};

// Container IO: JSON manifest + raw float32 little-endian blob referenced by
// it. load validates sizes, sample finiteness and rating range; non-synthetic
// containers must have the exact DEAP geometry.
EegDataset load_dataset(const std::filesystem::path& manifest_path);
void save_dataset(const EegDataset& ds, const std::filesystem::path& manifest_path);

// ---------------------------------------------------------------------------
// Normalization and windowing
// ---------------------------------------------------------------------------

// Per-window z-score with population variance. A (near-)constant window maps
// to all zeros via the variance floor instead of blowing up.
inline constexpr double kVarianceFloor = 1e-12;

template <typename T, typename S>
void zscore_into(std::span<const S> src, std::span<T> dst) {
  const std::size_t n = src.size();
  if (n < 2) throw DimensionError("zscore: window length must be >= 2");
  if (dst.size() != n) throw DimensionError("zscore: output size mismatch");
  double mean = 0.0;
  for (S v : src) mean += static_cast<double>(v);
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (S v : src) {
    const double d = static_cast<double>(v) - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  if (var < kVarianceFloor) {
    for (auto& v : dst) v = T(0);
    return;
  }
  const double inv_std = 1.0 / std::sqrt(var);
  for (std::size_t i = 0; i < n; ++i)
    dst[i] = static_cast<T>((static_cast<double>(src[i]) - mean) * inv_std);
}

template <typename T>
std::vector<T> zscore(std::span<const T> window) {
  std::vector<T> out(window.size());
  zscore_into<T, T>(window, std::span<T>(out));
  return out;
}

// Window sizes follow the trial partition: a DEAP trial or 8064 samples
// splits into K = 12 / 6 / 4 whole windows for the 5 / 10 / 15 s settings.
int window_samples_for(int tw_seconds);

// K non-overlapping consecutive windows; a trailing remainder shorter than
// the window is dropped.
std::vector<std::span<const float>> segment_signal(std::span<const float> signal, int window_samples);

std::vector<std::span<const float>> segment_channel(const EegDataset& ds, int trial, int channel,
                                                    int window_samples);

// ---------------------------------------------------------------------------
// Folds
// ---------------------------------------------------------------------------

struct FoldPlan {
  int k = 0;
  std::vector<std::vector<int>> folds;  // disjoint, exhaustive trial-index sets
  std::vector<std::string> warnings;

  bool contains(int fold, int trial) const;
};

// Stratified k-fold split: indices of each class are shuffled under the seed
// and dealt round-robin, so per-class counts across folds differ by at most
// one.
FoldPlan make_folds(const std::vector<int>& labels, int k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Regions
// ---------------------------------------------------------------------------

struct RegionMap {
  std::string name;
  std::vector<std::string> channels;  // empty means "every channel" (ALL)
};

// The five named regions. FRONT/CENT/PERI/OCCIP carry fixed channel lists
// (overridable via a region file); ALL selects every channel of the dataset
// in its own order.
class RegionTable {
 public:
  static RegionTable defaults();
  // JSON file: { "FRONT": ["Fp1", ...], ... }. Region sizes are fixed
  // (12/4/6/4); an override changing a size is rejected.
  void apply_override_file(const std::filesystem::path& path);

  const RegionMap& get(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, RegionMap> regions_;
};

// Ordered channel indices of the region within the dataset. Unknown channel
// names raise DataError.
std::vector<int> select_region(const EegDataset& ds, const RegionMap& region);

const std::vector<std::string>& deap_channel_names();

// ---------------------------------------------------------------------------
// Training-window construction
// ---------------------------------------------------------------------------

template <typename T>
struct WindowBatch {
  int channel_index = -1;
  int window_len = 0;
  std::vector<T> data;            // size() * window_len, z-scored
  std::vector<int> labels;        // 0/1 per window
  std::vector<int> trial_ids;     // provenance
  std::vector<int> window_index;  // k within the trial

  std::size_t size() const { return labels.size(); }
  std::span<const T> window(std::size_t i) const {
    return {data.data() + i * static_cast<std::size_t>(window_len),
            static_cast<std::size_t>(window_len)};
  }
};

template <typename T>
struct TrainTestSplit {
  WindowBatch<T> train;
  std::vector<int> test_trials;
};

// Windows for one channel from the k-1 training folds, each z-scored, labeled
// with its trial's binarized label. Test trials are returned untouched.
template <typename T>
TrainTestSplit<T> build_training_windows(const EegDataset& ds, const FoldPlan& plan, int test_fold,
                                         int channel, int window_samples,
                                         const std::vector<int>& trial_labels) {
  if (test_fold < 0 || test_fold >= plan.k) throw DataError("invalid fold index");
  if (plan.folds[test_fold].empty()) throw DataError("empty test fold");

  std::vector<bool> in_test(ds.n_trials, false);
  for (int t : plan.folds[test_fold]) in_test[t] = true;

  TrainTestSplit<T> split;
  split.test_trials = plan.folds[test_fold];
  WindowBatch<T>& batch = split.train;
  batch.channel_index = channel;
  batch.window_len = window_samples;

  for (int trial = 0; trial < ds.n_trials; ++trial) {
    if (in_test[trial]) continue;
    const auto windows = segment_channel(ds, trial, channel, window_samples);
    for (std::size_t k = 0; k < windows.size(); ++k) {
      const std::size_t off = batch.data.size();
      batch.data.resize(off + window_samples);
      zscore_into<T, float>(windows[k],
                            std::span<T>(batch.data.data() + off, static_cast<std::size_t>(window_samples)));
      batch.labels.push_back(trial_labels[trial]);
      batch.trial_ids.push_back(trial);
      batch.window_index.push_back(static_cast<int>(k));
    }
  }
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

// Class-conditioned band-limited tone plus unit Gaussian noise. High-class
// trials carry a per-channel tone whose amplitude scales with `separability`
// and a per-channel discriminability factor, so channels differ in how easy
// they are — that is what makes the two ensemble levels measurable. At
// separability 0 the labels are independent of the signals.
EegDataset generate_synthetic(int n_trials, int n_channels, int n_samples, double separability,
                              std::uint64_t seed);

}  // namespace deepaer
