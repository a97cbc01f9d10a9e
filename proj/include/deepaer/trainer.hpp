#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "deepaer/adam.hpp"
#include "deepaer/data.hpp"
#include "deepaer/model.hpp"

namespace deepaer {

struct TrainConfig {
  int batch_size = 64;
  int epochs = 50;
  std::uint64_t seed = 0;
  bool shuffle = true;
  AdamConfig adam{};
};

struct EpochStats {
  int epoch;         // 1-based
  double mean_loss;  // mean cross-entropy over the windows seen this epoch
  double train_acc;  // accuracy of the train-mode predictions this epoch
};

struct TrainResult {
  std::vector<EpochStats> curve;
  std::vector<std::string> warnings;
};

// Mini-batch training of one per-channel model with Adam. Deterministic given
// the seed: shuffling uses a per-epoch derived stream and dropout a dedicated
// one. A trailing batch of a single window is dropped (batch norm needs two).
template <typename T>
TrainResult train_channel_model(Model<T>& model, const WindowBatch<T>& windows,
                                const TrainConfig& cfg) {
  const std::size_t n = windows.size();
  if (n == 0) throw DataError("train: empty training set");
  if (cfg.batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2");
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");

  TrainResult result;
  {
    const int first = windows.labels.front();
    bool single_class = true;
    for (int l : windows.labels)
      if (l != first) {
        single_class = false;
        break;
      }
    if (single_class)
      result.warnings.push_back("training set contains a single class (" +
                                std::to_string(first) + "); proceeding");
  }

  auto params = param_refs(model);
  AdamState<T> adam = AdamState<T>::init(params, cfg.adam);
  Rng dropout_rng(derive_seed(cfg.seed, {0xD0}));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      Rng shuffle_rng(derive_seed(cfg.seed, {0xE0, static_cast<std::uint64_t>(epoch)}));
      shuffle_rng.shuffle(order);
    }

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t seen = 0;

    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bs = std::min(static_cast<std::size_t>(cfg.batch_size), n - start);
      if (bs < 2) break;  // cannot batch-normalize a single window

      std::vector<std::span<const T>> views;
      std::vector<int> labels;
      views.reserve(bs);
      labels.reserve(bs);
      for (std::size_t i = 0; i < bs; ++i) {
        views.push_back(windows.window(order[start + i]));
        labels.push_back(windows.labels[order[start + i]]);
      }

      ForwardCache<T> cache;
      auto out = forward_train(model, views, dropout_rng, cache);

      std::vector<std::array<T, 2>> logit_grads(bs);
      for (std::size_t i = 0; i < bs; ++i) {
        auto ce = softmax_cross_entropy(std::span<const T>(out.logits[i].data(), 2), labels[i]);
        loss_sum += static_cast<double>(ce.loss);
        if (argmax_label(out.probs[i]) == labels[i]) ++correct;
        logit_grads[i] = {ce.logit_grad[0] / static_cast<T>(bs),
                          ce.logit_grad[1] / static_cast<T>(bs)};
      }
      seen += bs;

      GradBundle<T> grads = backward_batch(model, cache, logit_grads);
      adam_step(params, grads, adam);
    }

    if (seen == 0) throw DataError("train: no batch of >= 2 windows could be formed");
    result.curve.push_back({epoch, loss_sum / static_cast<double>(seen),
                            static_cast<double>(correct) / static_cast<double>(seen)});
  }
  return result;
}

template <typename T>
struct Predictions {
  std::vector<int> labels;                      // argmax, ties to class 0
  std::vector<std::array<double, 2>> probs;
};

// Eval-mode predictions, one window at a time; stateless and order-preserving.
template <typename T>
Predictions<T> predict_windows(const Model<T>& model, const WindowBatch<T>& windows) {
  Predictions<T> p;
  p.labels.reserve(windows.size());
  p.probs.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto probs = forward_eval(model, windows.window(i));
    p.labels.push_back(argmax_label(probs));
    p.probs.push_back({static_cast<double>(probs[0]), static_cast<double>(probs[1])});
  }
  return p;
}

// Loss-curve emission: CSV with one row per epoch.
inline std::string loss_curve_csv(const TrainResult& result) {
  std::string out = "epoch,mean_loss,train_acc\n";
  char buf[96];
  for (const auto& e : result.curve) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f\n", e.epoch, e.mean_loss, e.train_acc);
    out += buf;
  }
  return out;
}

}  // namespace deepaer
