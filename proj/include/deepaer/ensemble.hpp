#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <vector>

#include "deepaer/data.hpp"
#include "deepaer/model.hpp"

namespace deepaer {

struct VoteRecord {
  int voter_id = 0;
  int label = 0;                            // 0 or 1
  std::array<double, 2> probs = {0.5, 0.5}; // kept for tie-breaking
};

struct VoteOutcome {
  int label = 0;
  std::array<int, 2> tally = {0, 0};
  bool tie = false;  // vote counts were exactly equal
};

// Majority vote with the documented tie rule: the label with strictly more
// votes wins; on an exact tie the class with the larger summed probability
// wins; if those are equal too, class 0. Order-invariant.
inline VoteOutcome majority_vote(const std::vector<VoteRecord>& votes) {
  if (votes.empty()) throw std::invalid_argument("majority_vote: empty vote list");
  VoteOutcome out;
  double prob_sum0 = 0.0, prob_sum1 = 0.0;
  for (const auto& v : votes) {
    if (v.label != 0 && v.label != 1)
      throw std::invalid_argument("majority_vote: labels must be 0 or 1");
    ++out.tally[v.label];
    prob_sum0 += v.probs[0];
    prob_sum1 += v.probs[1];
  }
  if (out.tally[0] != out.tally[1]) {
    out.label = out.tally[1] > out.tally[0] ? 1 : 0;
  } else {
    out.tie = true;
    out.label = prob_sum1 > prob_sum0 ? 1 : 0;
  }
  return out;
}

// First-level decision O^i for one channel of one trial: segment, z-score,
// predict every window with the channel's model, fuse by majority vote.
struct ChannelDecision {
  VoteOutcome outcome;
  std::array<double, 2> mean_probs = {0.0, 0.0};  // mean of the window probability pairs
  double high_vote_fraction = 0.0;                // fraction of windows voting High
  std::vector<VoteRecord> window_votes;
};

template <typename T>
ChannelDecision classify_channel(const Model<T>& model, std::span<const float> channel_signal,
                                 int window_samples) {
  if (window_samples != model.spec.input_length)
    throw DimensionError("classify_channel: window length " + std::to_string(window_samples) +
                         " does not match the model input length " +
                         std::to_string(model.spec.input_length));
  const auto segments = segment_signal(channel_signal, window_samples);

  ChannelDecision d;
  std::vector<T> window(window_samples);
  for (std::size_t k = 0; k < segments.size(); ++k) {
    zscore_into<T, float>(segments[k], std::span<T>(window));
    const auto probs = forward_eval(model, std::span<const T>(window));
    VoteRecord v;
    v.voter_id = static_cast<int>(k);
    v.probs = {static_cast<double>(probs[0]), static_cast<double>(probs[1])};
    v.label = argmax_label(probs);
    d.mean_probs[0] += v.probs[0];
    d.mean_probs[1] += v.probs[1];
    if (v.label == 1) d.high_vote_fraction += 1.0;
    d.window_votes.push_back(v);
  }
  const double k_count = static_cast<double>(d.window_votes.size());
  d.mean_probs[0] /= k_count;
  d.mean_probs[1] /= k_count;
  d.high_vote_fraction /= k_count;
  d.outcome = majority_vote(d.window_votes);
  return d;
}

template <typename T>
ChannelDecision classify_channel(const Model<T>& model, const EegDataset& ds, int trial,
                                 int channel, int window_samples) {
  if (model.channel_index >= 0 && model.channel_index != channel)
    throw DimensionError("classify_channel: model was trained for channel " +
                         std::to_string(model.channel_index) + ", asked to score channel " +
                         std::to_string(channel));
  return classify_channel(model, ds.trial_channel(trial, channel), window_samples);
}

// Second-level decision O for one trial: fuse the region's channel decisions.
// Each channel contributes one vote carrying its mean window probabilities.
struct TrialDecision {
  VoteOutcome outcome;
  std::vector<ChannelDecision> channels;
  int level1_ties = 0;
  bool level2_tie = false;
};

template <typename T>
TrialDecision classify_trial(const std::vector<Model<T>>& models, const EegDataset& ds, int trial,
                             const std::vector<int>& region_channels, int window_samples) {
  if (models.size() != region_channels.size())
    throw DimensionError("classify_trial: need one trained model per region channel (" +
                         std::to_string(models.size()) + " models for " +
                         std::to_string(region_channels.size()) + " channels)");
  TrialDecision t;
  std::vector<VoteRecord> channel_votes;
  for (std::size_t i = 0; i < models.size(); ++i) {
    ChannelDecision d =
        classify_channel(models[i], ds, trial, region_channels[i], window_samples);
    VoteRecord v;
    v.voter_id = region_channels[i];
    v.label = d.outcome.label;
    v.probs = d.mean_probs;
    channel_votes.push_back(v);
    if (d.outcome.tie) ++t.level1_ties;
    t.channels.push_back(std::move(d));
  }
  t.outcome = majority_vote(channel_votes);
  t.level2_tie = t.outcome.tie;
  return t;
}

}  // namespace deepaer
