#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deepaer/nn.hpp"
#include "deepaer/rng.hpp"

namespace deepaer {

struct ConvBlockSpec {
  int out_channels;
  int receptive_field;
  int stride;
};

// Architecture description of one per-channel model. The conv chain defaults
// to the pyramidal 32 -> 24 -> 16 -> 8 layout with strides 3, 2, 2, 2; the
// variants differ only in FC1 width and the presence of dropout.
struct ModelSpec {
  std::vector<ConvBlockSpec> conv_blocks{{32, 5, 3}, {24, 3, 2}, {16, 3, 2}, {8, 3, 2}};
  int fc1_units = 20;
  bool dropout_before_fc2 = true;
  double dropout_p = 0.5;
  int n_classes = 2;
  int input_length = 672;
  bool batchnorm_affine = false;
};

enum class Variant { M1, M2, M3, M4 };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Table of variants: M1 (fc1=20), M2 (fc1=20, dropout), M3 (fc1=40),
// M4 (fc1=40, dropout).
ModelSpec make_spec(Variant v, int input_length = 672);

struct LayerShape {
  int channels;
  int length;
};

// Per-conv-block (channels, length) chain. Throws DimensionError naming the
// failing block when the input is too short for the chain.
std::vector<LayerShape> infer_shapes(const ModelSpec& spec);

// Flattened dimension feeding FC1 (= channels * length of the last block).
int flatten_dim(const ModelSpec& spec);

// Learnable parameters: conv (out*r*in + out) and FC (in*out + out). Batch
// norm contributes none unless batchnorm_affine is set.
long long count_params(const ModelSpec& spec);

void validate_spec(const ModelSpec& spec);

template <typename T>
struct Model {
  ModelSpec spec;
  Variant variant = Variant::M2;
  int channel_index = -1;  // EEG channel this model is trained for
  std::vector<ConvKernelSet<T>> conv;
  std::vector<BatchNormState<T>> bn;
  FcWeights<T> fc1;
  FcWeights<T> fc2;
};

// Named view of one learnable parameter array.
template <typename T>
struct ParamRef {
  std::string name;
  std::span<T> values;
};

template <typename T>
std::vector<ParamRef<T>> param_refs(Model<T>& m) {
  std::vector<ParamRef<T>> refs;
  for (std::size_t b = 0; b < m.conv.size(); ++b) {
    const std::string tag = "conv" + std::to_string(b + 1);
    refs.push_back({tag + ".weights", std::span<T>(m.conv[b].weights)});
    refs.push_back({tag + ".bias", std::span<T>(m.conv[b].biases)});
    if (m.bn[b].affine) {
      refs.push_back({"bn" + std::to_string(b + 1) + ".gamma", std::span<T>(m.bn[b].gamma)});
      refs.push_back({"bn" + std::to_string(b + 1) + ".beta", std::span<T>(m.bn[b].beta)});
    }
  }
  refs.push_back({"fc1.weights", std::span<T>(m.fc1.w)});
  refs.push_back({"fc1.bias", std::span<T>(m.fc1.b)});
  refs.push_back({"fc2.weights", std::span<T>(m.fc2.w)});
  refs.push_back({"fc2.bias", std::span<T>(m.fc2.b)});
  return refs;
}

// Gradients for every learnable array, in param_refs order.
template <typename T>
struct GradBundle {
  std::vector<std::string> names;
  std::vector<std::vector<T>> groups;
};

// Scaled-normal init, std = sqrt(2 / fan_in); biases zero; BN stats at (0, 1).
template <typename T>
Model<T> build_model(const ModelSpec& spec, Rng& rng, Variant variant = Variant::M2,
                     int channel_index = -1) {
  validate_spec(spec);
  infer_shapes(spec);  // throws if the chain is infeasible

  Model<T> m;
  m.spec = spec;
  m.variant = variant;
  m.channel_index = channel_index;

  int in_c = 1;
  for (const auto& blk : spec.conv_blocks) {
    ConvKernelSet<T> k(blk.out_channels, in_c, blk.receptive_field, blk.stride);
    const double std_dev = std::sqrt(2.0 / (static_cast<double>(blk.receptive_field) * in_c));
    for (T& w : k.weights) w = static_cast<T>(rng.gaussian() * std_dev);
    m.conv.push_back(std::move(k));
    m.bn.emplace_back(blk.out_channels, spec.batchnorm_affine);
    in_c = blk.out_channels;
  }

  const int flat = flatten_dim(spec);
  m.fc1 = FcWeights<T>(flat, spec.fc1_units);
  {
    const double std_dev = std::sqrt(2.0 / flat);
    for (T& w : m.fc1.w) w = static_cast<T>(rng.gaussian() * std_dev);
  }
  m.fc2 = FcWeights<T>(spec.fc1_units, spec.n_classes);
  {
    const double std_dev = std::sqrt(2.0 / spec.fc1_units);
    for (T& w : m.fc2.w) w = static_cast<T>(rng.gaussian() * std_dev);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Forward / backward over a batch of windows
// ---------------------------------------------------------------------------

template <typename T>
struct ForwardCache {
  std::vector<std::vector<Tensor1D<T>>> conv_in;   // [block][sample]
  std::vector<std::vector<Tensor1D<T>>> conv_out;  // pre-BN
  std::vector<BatchNormCache<T>> bn_cache;         // [block]
  std::vector<std::vector<Tensor1D<T>>> bn_out;    // pre-ReLU
  std::vector<std::vector<T>> flat;                // FC1 inputs
  std::vector<std::vector<T>> fc1_pre;
  std::vector<std::vector<T>> drop_mask;
  std::vector<std::vector<T>> fc2_in;
  std::size_t batch_size = 0;
};

template <typename T>
struct ForwardResult {
  std::vector<std::array<T, 2>> logits;
  std::vector<std::array<T, 2>> probs;
};

namespace detail {

template <typename T>
std::array<T, 2> stable_softmax2(const std::vector<T>& logits) {
  const T m = std::max(logits[0], logits[1]);
  const T e0 = std::exp(logits[0] - m);
  const T e1 = std::exp(logits[1] - m);
  const T z = e0 + e1;
  return {e0 / z, e1 / z};
}

}  // namespace detail

// Train-mode forward over a whole batch. Batch norm couples the samples, so
// the batch is processed jointly; the cache holds what the backward pass
// needs. The RNG drives dropout only.
template <typename T>
ForwardResult<T> forward_train(Model<T>& m, const std::vector<std::span<const T>>& windows,
                               Rng& rng, ForwardCache<T>& cache) {
  const std::size_t n = windows.size();
  if (n < 2) throw DimensionError("forward_train: batch size must be >= 2 (batch norm)");
  for (const auto& w : windows)
    if (static_cast<int>(w.size()) != m.spec.input_length)
      throw DimensionError("forward: window length " + std::to_string(w.size()) +
                           " != input_length " + std::to_string(m.spec.input_length));

  const std::size_t n_blocks = m.conv.size();
  cache.conv_in.assign(n_blocks, {});
  cache.conv_out.assign(n_blocks, {});
  cache.bn_cache.assign(n_blocks, {});
  cache.bn_out.assign(n_blocks, {});
  cache.batch_size = n;

  std::vector<Tensor1D<T>> cur(n);
  for (std::size_t i = 0; i < n; ++i) {
    cur[i] = Tensor1D<T>(1, m.spec.input_length);
    std::copy(windows[i].begin(), windows[i].end(), cur[i].data.begin());
  }

  for (std::size_t b = 0; b < n_blocks; ++b) {
    cache.conv_in[b] = cur;
    std::vector<Tensor1D<T>> conv_out(n);
    for (std::size_t i = 0; i < n; ++i) conv_out[i] = conv1d_forward(cur[i], m.conv[b]);
    cache.conv_out[b] = conv_out;
    std::vector<Tensor1D<T>> bn_out =
        batchnorm_apply(conv_out, m.bn[b], Mode::train, &cache.bn_cache[b]);
    cache.bn_out[b] = bn_out;
    for (std::size_t i = 0; i < n; ++i) relu_inplace(std::span<T>(bn_out[i].data));
    cur = std::move(bn_out);
  }

  cache.flat.resize(n);
  cache.fc1_pre.resize(n);
  cache.drop_mask.resize(n);
  cache.fc2_in.resize(n);

  ForwardResult<T> res;
  res.logits.resize(n);
  res.probs.resize(n);
  const bool use_dropout = m.spec.dropout_before_fc2 && m.spec.dropout_p > 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cache.flat[i] = std::move(cur[i].data);
    cache.fc1_pre[i] = fc_forward(std::span<const T>(cache.flat[i]), m.fc1);
    std::vector<T> act = cache.fc1_pre[i];
    relu_inplace(std::span<T>(act));
    if (use_dropout) {
      cache.drop_mask[i] = dropout_mask<T>(act.size(), m.spec.dropout_p, Mode::train, rng);
      apply_mask_inplace(std::span<T>(act), std::span<const T>(cache.drop_mask[i]));
    } else {
      cache.drop_mask[i].assign(act.size(), T(1));
    }
    cache.fc2_in[i] = std::move(act);
    std::vector<T> logits = fc_forward(std::span<const T>(cache.fc2_in[i]), m.fc2);
    res.logits[i] = {logits[0], logits[1]};
    const auto p = detail::stable_softmax2(logits);
    res.probs[i] = p;
  }
  return res;
}

// Eval-mode forward for one window: BN uses running stats, dropout is
// identity, nothing is cached. Deterministic.
template <typename T>
std::array<T, 2> forward_eval(const Model<T>& m, std::span<const T> window) {
  if (static_cast<int>(window.size()) != m.spec.input_length)
    throw DimensionError("forward: window length " + std::to_string(window.size()) +
                         " != input_length " + std::to_string(m.spec.input_length));
  Tensor1D<T> cur(1, m.spec.input_length);
  std::copy(window.begin(), window.end(), cur.data.begin());

  for (std::size_t b = 0; b < m.conv.size(); ++b) {
    Tensor1D<T> z = conv1d_forward(cur, m.conv[b]);
    const auto& st = m.bn[b];
    for (int c = 0; c < z.channels; ++c) {
      const T mean = st.running_mean[c];
      const T inv_std = T(1) / std::sqrt(st.running_var[c] + st.epsilon);
      const T g = st.affine ? st.gamma[c] : T(1);
      const T bb = st.affine ? st.beta[c] : T(0);
      T* row = z.row(c);
      for (int j = 0; j < z.length; ++j) {
        const T xh = g * (row[j] - mean) * inv_std + bb;
        row[j] = xh > T(0) ? xh : T(0);
      }
    }
    cur = std::move(z);
  }

  std::vector<T> act = fc_forward(std::span<const T>(cur.data), m.fc1);
  relu_inplace(std::span<T>(act));
  std::vector<T> logits = fc_forward(std::span<const T>(act), m.fc2);
  return detail::stable_softmax2(logits);
}

// Backward through the whole chain for a batch; logit_grads must already
// carry any loss scaling (e.g. 1/batch for a mean loss). Gradients are summed
// over the batch. Returns parameter gradients in param_refs order; input
// gradients are written to dinputs when provided.
template <typename T>
GradBundle<T> backward_batch(Model<T>& m, const ForwardCache<T>& cache,
                             const std::vector<std::array<T, 2>>& logit_grads,
                             std::vector<std::vector<T>>* dinputs = nullptr) {
  const std::size_t n = cache.batch_size;
  if (logit_grads.size() != n) throw DimensionError("backward: logit gradient count mismatch");
  const std::size_t n_blocks = m.conv.size();

  GradBundle<T> g;
  std::vector<std::vector<T>> conv_dw(n_blocks), conv_db(n_blocks);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    conv_dw[b].assign(m.conv[b].weights.size(), T(0));
    conv_db[b].assign(m.conv[b].biases.size(), T(0));
  }
  std::vector<std::vector<T>> bn_dgamma(n_blocks), bn_dbeta(n_blocks);
  std::vector<T> fc1_dw(m.fc1.w.size(), T(0)), fc1_db(m.fc1.b.size(), T(0));
  std::vector<T> fc2_dw(m.fc2.w.size(), T(0)), fc2_db(m.fc2.b.size(), T(0));

  // FC stage per sample, collecting the gradient entering the last conv block.
  std::vector<Tensor1D<T>> dcur(n);
  const auto& last_bn_out = cache.bn_out[n_blocks - 1];
  for (std::size_t i = 0; i < n; ++i) {
    const std::array<T, 2>& lg = logit_grads[i];
    std::vector<T> gz2(lg.begin(), lg.end());
    FcGrads<T> g2 = fc_backward(std::span<const T>(cache.fc2_in[i]), m.fc2, std::span<const T>(gz2));
    for (std::size_t j = 0; j < fc2_dw.size(); ++j) fc2_dw[j] += g2.dw[j];
    for (std::size_t j = 0; j < fc2_db.size(); ++j) fc2_db[j] += g2.db[j];

    apply_mask_inplace(std::span<T>(g2.da), std::span<const T>(cache.drop_mask[i]));
    relu_backward_inplace(std::span<const T>(cache.fc1_pre[i]), std::span<T>(g2.da));

    FcGrads<T> g1 = fc_backward(std::span<const T>(cache.flat[i]), m.fc1, std::span<const T>(g2.da));
    for (std::size_t j = 0; j < fc1_dw.size(); ++j) fc1_dw[j] += g1.dw[j];
    for (std::size_t j = 0; j < fc1_db.size(); ++j) fc1_db[j] += g1.db[j];

    const auto& shape = last_bn_out[i];
    dcur[i] = Tensor1D<T>(shape.channels, shape.length);
    dcur[i].data = std::move(g1.da);
  }

  for (std::size_t b = n_blocks; b-- > 0;) {
    // ReLU
    for (std::size_t i = 0; i < n; ++i)
      relu_backward_inplace(std::span<const T>(cache.bn_out[b][i].data),
                            std::span<T>(dcur[i].data));
    // Batch norm
    BatchNormGrads<T> bng = batchnorm_backward(m.bn[b], cache.bn_cache[b], dcur);
    if (m.bn[b].affine) {
      bn_dgamma[b] = std::move(bng.dgamma);
      bn_dbeta[b] = std::move(bng.dbeta);
    }
    // Conv
    for (std::size_t i = 0; i < n; ++i) {
      ConvGrads<T> cg = conv1d_backward(cache.conv_in[b][i], m.conv[b], bng.dinputs[i]);
      for (std::size_t j = 0; j < conv_dw[b].size(); ++j) conv_dw[b][j] += cg.dweights[j];
      for (std::size_t j = 0; j < conv_db[b].size(); ++j) conv_db[b][j] += cg.dbiases[j];
      dcur[i] = std::move(cg.dinput);
    }
  }

  if (dinputs) {
    dinputs->resize(n);
    for (std::size_t i = 0; i < n; ++i) (*dinputs)[i] = std::move(dcur[i].data);
  }

  for (std::size_t b = 0; b < n_blocks; ++b) {
    const std::string tag = "conv" + std::to_string(b + 1);
    g.names.push_back(tag + ".weights");
    g.groups.push_back(std::move(conv_dw[b]));
    g.names.push_back(tag + ".bias");
    g.groups.push_back(std::move(conv_db[b]));
    if (m.bn[b].affine) {
      g.names.push_back("bn" + std::to_string(b + 1) + ".gamma");
      g.groups.push_back(std::move(bn_dgamma[b]));
      g.names.push_back("bn" + std::to_string(b + 1) + ".beta");
      g.groups.push_back(std::move(bn_dbeta[b]));
    }
  }
  g.names.push_back("fc1.weights");
  g.groups.push_back(std::move(fc1_dw));
  g.names.push_back("fc1.bias");
  g.groups.push_back(std::move(fc1_db));
  g.names.push_back("fc2.weights");
  g.groups.push_back(std::move(fc2_dw));
  g.names.push_back("fc2.bias");
  g.groups.push_back(std::move(fc2_db));
  return g;
}

// Total element count across all learnable arrays (cross-check for
// count_params).
template <typename T>
long long enumerate_param_count(Model<T>& m) {
  long long total = 0;
  for (const auto& r : param_refs(m)) total += static_cast<long long>(r.values.size());
  return total;
}

}  // namespace deepaer
