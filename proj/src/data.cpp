#include "deepaer/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace deepaer {

Problem problem_from_name(const std::string& name) {
  if (name == "valence") return Problem::valence;
  if (name == "arousal") return Problem::arousal;
  throw std::invalid_argument("unknown problem: " + name + " (expected valence or arousal)");
}

const char* problem_name(Problem p) {
  return p == Problem::valence ? "valence" : "arousal";
}

BinaryLabel binarize_label(double rating, Problem) {
  if (!(rating >= 1.0 && rating <= 9.0))
    throw RatingError("rating " + std::to_string(rating) + " outside [1, 9]");
  return rating < 5.0 ? BinaryLabel::Low : BinaryLabel::High;
}

// ---------------------------------------------------------------------------
// Container IO
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kContainerFormat = "deepaer-eeg";
constexpr int kContainerVersion = 1;

}  // namespace

EegDataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream mf(manifest_path);
  if (!mf) throw ManifestError("cannot open dataset manifest: " + manifest_path.string());
  nlohmann::json j;
  try {
    mf >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("malformed dataset manifest: ") + e.what());
  }

  EegDataset ds;
  try {
    if (j.at("format").get<std::string>() != kContainerFormat)
      throw ManifestError("manifest format is not " + std::string(kContainerFormat));
    if (j.at("version").get<int>() != kContainerVersion)
      throw ManifestError("unsupported container version");
    if (j.at("dtype").get<std::string>() != "f32")
      throw ManifestError("unsupported sample dtype (expected f32)");
    if (j.at("byte_order").get<std::string>() != "little")
      throw ManifestError("unsupported byte order (expected little)");
    ds.n_trials = j.at("n_trials").get<int>();
    ds.n_channels = j.at("n_channels").get<int>();
    ds.n_samples = j.at("n_samples").get<int>();
    ds.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    ds.synthetic = j.at("synthetic").get<bool>();
    ds.channel_names = j.at("channel_names").get<std::vector<std::string>>();
    ds.subject_ids = j.at("subject_ids").get<std::vector<int>>();
    for (const auto& r : j.at("ratings"))
      ds.ratings.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("dataset manifest missing fields: ") + e.what());
  }

  if (ds.n_trials < 1 || ds.n_channels < 1 || ds.n_samples < 1)
    throw ManifestError("dataset manifest declares empty dimensions");
  if (static_cast<int>(ds.channel_names.size()) != ds.n_channels)
    throw SizeMismatchError("channel_names count does not match n_channels");
  if (static_cast<int>(ds.subject_ids.size()) != ds.n_trials)
    throw SizeMismatchError("subject_ids count does not match n_trials");
  if (static_cast<int>(ds.ratings.size()) != ds.n_trials)
    throw SizeMismatchError("ratings count does not match n_trials");
  if (!ds.synthetic) {
    if (ds.n_trials != kDeapTrials || ds.n_channels != kDeapChannels ||
        ds.n_samples != kDeapSamples)
      throw SizeMismatchError("non-synthetic container must have DEAP geometry 1280x32x8064");
  }
  for (const auto& r : ds.ratings) {
    if (!(r[0] >= 1.0 && r[0] <= 9.0) || !(r[1] >= 1.0 && r[1] <= 9.0))
      throw RatingError("rating outside [1, 9] in dataset");
  }

  const std::string blob_name = j.at("blob").get<std::string>();
  const std::filesystem::path blob_path = manifest_path.parent_path() / blob_name;
  const std::size_t expected =
      static_cast<std::size_t>(ds.n_trials) * ds.n_channels * ds.n_samples;
  const std::size_t expected_bytes = expected * sizeof(float);
  if (j.contains("blob_bytes") && j.at("blob_bytes").get<std::size_t>() != expected_bytes)
    throw SizeMismatchError("manifest blob_bytes disagrees with declared dimensions");

  std::ifstream bf(blob_path, std::ios::binary);
  if (!bf) throw DataError("cannot open dataset blob: " + blob_path.string());
  bf.seekg(0, std::ios::end);
  const auto actual_bytes = static_cast<std::size_t>(bf.tellg());
  if (actual_bytes != expected_bytes)
    throw SizeMismatchError("dataset blob is " + std::to_string(actual_bytes) + " bytes, expected " +
                            std::to_string(expected_bytes));
  bf.seekg(0);
  ds.samples.resize(expected);
  bf.read(reinterpret_cast<char*>(ds.samples.data()),
          static_cast<std::streamsize>(expected_bytes));
  if (!bf) throw DataError("short read from dataset blob");

  for (float v : ds.samples)
    if (!std::isfinite(v)) throw SampleError("non-finite sample in dataset blob");
  return ds;
}

void save_dataset(const EegDataset& ds, const std::filesystem::path& manifest_path) {
  const std::string blob_name = manifest_path.stem().string() + ".f32";
  const std::filesystem::path blob_path = manifest_path.parent_path() / blob_name;

  nlohmann::json ratings = nlohmann::json::array();
  for (const auto& r : ds.ratings) ratings.push_back({r[0], r[1]});
  nlohmann::json j = {{"format", kContainerFormat},
                      {"version", kContainerVersion},
                      {"n_trials", ds.n_trials},
                      {"n_channels", ds.n_channels},
                      {"n_samples", ds.n_samples},
                      {"sample_rate_hz", ds.sample_rate_hz},
                      {"dtype", "f32"},
                      {"byte_order", "little"},
                      {"synthetic", ds.synthetic},
                      {"channel_names", ds.channel_names},
                      {"subject_ids", ds.subject_ids},
                      {"ratings", ratings},
                      {"blob", blob_name},
                      {"blob_bytes", ds.samples.size() * sizeof(float)}};

  std::ofstream mf(manifest_path);
  if (!mf) throw DataError("cannot write dataset manifest: " + manifest_path.string());
  mf << j.dump(2) << "\n";

  std::ofstream bf(blob_path, std::ios::binary);
  if (!bf) throw DataError("cannot write dataset blob: " + blob_path.string());
  bf.write(reinterpret_cast<const char*>(ds.samples.data()),
           static_cast<std::streamsize>(ds.samples.size() * sizeof(float)));
  if (!bf) throw DataError("short write to dataset blob");
}

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

int window_samples_for(int tw_seconds) {
  switch (tw_seconds) {
    case 5: return 672;
    case 10: return 1344;
    case 15: return 2016;
    default:
      throw DimensionError("window length must be 5, 10 or 15 seconds, got " +
                           std::to_string(tw_seconds));
  }
}

std::vector<std::span<const float>> segment_signal(std::span<const float> signal,
                                                   int window_samples) {
  if (window_samples < 1) throw DimensionError("window length must be positive");
  if (static_cast<std::size_t>(window_samples) > signal.size())
    throw DimensionError("window of " + std::to_string(window_samples) +
                         " samples is longer than the signal (" + std::to_string(signal.size()) + ")");
  const std::size_t k = signal.size() / static_cast<std::size_t>(window_samples);
  std::vector<std::span<const float>> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i)
    out.push_back(signal.subspan(i * window_samples, window_samples));
  return out;
}

std::vector<std::span<const float>> segment_channel(const EegDataset& ds, int trial, int channel,
                                                    int window_samples) {
  return segment_signal(ds.trial_channel(trial, channel), window_samples);
}

// ---------------------------------------------------------------------------
// Folds
// ---------------------------------------------------------------------------

bool FoldPlan::contains(int fold, int trial) const {
  const auto& f = folds[fold];
  return std::find(f.begin(), f.end(), trial) != f.end();
}

FoldPlan make_folds(const std::vector<int>& labels, int k, std::uint64_t seed) {
  const int n = static_cast<int>(labels.size());
  if (k < 2) throw std::invalid_argument("make_folds: k must be >= 2");
  if (n < k) throw std::invalid_argument("make_folds: fewer samples than folds");

  std::vector<int> class0, class1;
  for (int i = 0; i < n; ++i) (labels[i] == 0 ? class0 : class1).push_back(i);
  if (class0.empty() || class1.empty())
    throw std::invalid_argument("make_folds: both classes must be present");

  FoldPlan plan;
  plan.k = k;
  plan.folds.assign(k, {});
  Rng rng(seed);
  for (auto* cls : {&class0, &class1}) {
    if (static_cast<int>(cls->size()) < k)
      plan.warnings.push_back("class with " + std::to_string(cls->size()) +
                              " members cannot appear in every one of " + std::to_string(k) +
                              " folds");
    rng.shuffle(*cls);
    for (std::size_t i = 0; i < cls->size(); ++i)
      plan.folds[i % k].push_back((*cls)[i]);
  }
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

// ---------------------------------------------------------------------------
// Regions
// ---------------------------------------------------------------------------

const std::vector<std::string>& deap_channel_names() {
  static const std::vector<std::string> names = {
      "Fp1", "AF3", "F3",  "F7",  "FC5", "FC1", "C3",  "T7",  "CP5", "CP1", "P3",
      "P7",  "PO3", "O1",  "Oz",  "Pz",  "Fp2", "AF4", "Fz",  "F4",  "F8",  "FC6",
      "FC2", "Cz",  "C4",  "T8",  "CP6", "CP2", "P4",  "P8",  "PO4", "O2"};
  return names;
}

namespace {

const std::map<std::string, std::size_t> kRegionSizes = {
    {"FRONT", 12}, {"CENT", 4}, {"PERI", 6}, {"OCCIP", 4}};

}  // namespace

RegionTable RegionTable::defaults() {
  RegionTable t;
  t.regions_["FRONT"] = {"FRONT", {"Fp1", "AF3", "F3", "F7", "FC1", "FC5",
                                   "Fp2", "AF4", "F4", "F8", "FC2", "FC6"}};
  t.regions_["CENT"] = {"CENT", {"C3", "C4", "CP1", "CP2"}};
  t.regions_["PERI"] = {"PERI", {"P3", "P7", "Pz", "P4", "P8", "CP5"}};
  t.regions_["OCCIP"] = {"OCCIP", {"O1", "PO3", "O2", "PO4"}};
  t.regions_["ALL"] = {"ALL", {}};
  return t;
}

void RegionTable::apply_override_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open region map file: " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed region map file: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string name = it.key();
    auto found = regions_.find(name);
    if (found == regions_.end()) throw DataError("region map file names unknown region: " + name);
    if (name == "ALL") throw DataError("region ALL cannot be overridden");
    auto channels = it.value().get<std::vector<std::string>>();
    const auto size_it = kRegionSizes.find(name);
    if (channels.size() != size_it->second)
      throw DataError("region " + name + " must list exactly " +
                      std::to_string(size_it->second) + " channels");
    found->second.channels = std::move(channels);
  }
}

const RegionMap& RegionTable::get(const std::string& name) const {
  auto it = regions_.find(name);
  if (it == regions_.end()) throw DataError("unknown region: " + name);
  return it->second;
}

std::vector<std::string> RegionTable::names() const {
  return {"FRONT", "CENT", "PERI", "OCCIP", "ALL"};
}

std::vector<int> select_region(const EegDataset& ds, const RegionMap& region) {
  std::vector<int> indices;
  if (region.channels.empty()) {  // ALL
    indices.resize(ds.n_channels);
    std::iota(indices.begin(), indices.end(), 0);
    return indices;
  }
  for (const auto& name : region.channels) {
    auto it = std::find(ds.channel_names.begin(), ds.channel_names.end(), name);
    if (it == ds.channel_names.end())
      throw DataError("region " + region.name + " references channel '" + name +
                      "' absent from the dataset");
    indices.push_back(static_cast<int>(it - ds.channel_names.begin()));
  }
  return indices;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

EegDataset generate_synthetic(int n_trials, int n_channels, int n_samples, double separability,
                              std::uint64_t seed) {
  if (separability < 0.0 || separability > 1.0)
    throw std::invalid_argument("separability must be in [0, 1]");
  if (n_trials < 2 || n_channels < 1 || n_samples < 2)
    throw std::invalid_argument("synthetic dataset needs >= 2 trials, >= 1 channel, >= 2 samples");

  EegDataset ds;
  ds.n_trials = n_trials;
  ds.n_channels = n_channels;
  ds.n_samples = n_samples;
  ds.sample_rate_hz = kDeapSampleRate;
  ds.synthetic = true;
  if (n_channels == kDeapChannels) {
    ds.channel_names = deap_channel_names();
  } else {
    for (int c = 0; c < n_channels; ++c) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "S%02d", c + 1);
      ds.channel_names.emplace_back(buf);
    }
  }

  // Balanced labels, shuffled; both rating dimensions follow the same latent
  // state so either problem sees the same structure.
  std::vector<int> labels(n_trials);
  for (int i = 0; i < n_trials; ++i) labels[i] = i % 2;
  Rng label_rng(derive_seed(seed, {0xA}));
  label_rng.shuffle(labels);

  Rng rating_rng(derive_seed(seed, {0xB}));
  for (int i = 0; i < n_trials; ++i) {
    ds.subject_ids.push_back(i / 40 + 1);
    double v, a;
    if (labels[i] == 0) {  // Low: [1, 5)
      v = 1.0 + 3.9 * rating_rng.uniform();
      a = 1.0 + 3.9 * rating_rng.uniform();
    } else {  // High: [5, 9]
      v = 5.0 + 4.0 * rating_rng.uniform();
      a = 5.0 + 4.0 * rating_rng.uniform();
    }
    ds.ratings.push_back({v, a});
  }

  // Per-channel discriminability and tone frequency, fixed by the seed.
  Rng chan_rng(derive_seed(seed, {0xC}));
  std::vector<double> amplitude(n_channels), freq_hz(n_channels);
  for (int c = 0; c < n_channels; ++c) {
    const double disc = 0.3 + 0.7 * chan_rng.uniform();
    amplitude[c] = 3.0 * separability * disc;
    freq_hz[c] = 6.0 + 10.0 * chan_rng.uniform();
  }

  const double two_pi = 2.0 * 3.14159265358979323846;
  ds.samples.resize(static_cast<std::size_t>(n_trials) * n_channels * n_samples);
  for (int i = 0; i < n_trials; ++i) {
    for (int c = 0; c < n_channels; ++c) {
      Rng rng(derive_seed(seed, {0xD, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(c)}));
      const double phase = two_pi * rng.uniform();
      const double amp = labels[i] == 1 ? amplitude[c] : 0.0;
      const double omega = two_pi * freq_hz[c] / ds.sample_rate_hz;
      float* out = ds.samples.data() +
                   (static_cast<std::size_t>(i) * n_channels + c) * n_samples;
      for (int t = 0; t < n_samples; ++t)
        out[t] = static_cast<float>(rng.gaussian() + amp * std::sin(omega * t + phase));
    }
  }
  return ds;
}

}  // namespace deepaer
