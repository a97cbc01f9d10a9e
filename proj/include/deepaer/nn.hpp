#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "deepaer/errors.hpp"
#include "deepaer/rng.hpp"
#include "deepaer/tensor.hpp"

namespace deepaer {

enum class Mode { train, eval };

// Valid (no-padding) convolution: floor((N - r) / s) + 1.
inline int conv_output_length(int input_length, int receptive_field, int stride) {
  if (receptive_field < 1 || stride < 1)
    throw DimensionError("conv: receptive field and stride must be >= 1");
  if (input_length < receptive_field)
    throw DimensionError("conv: input length " + std::to_string(input_length) +
                         " shorter than receptive field " + std::to_string(receptive_field));
  return (input_length - receptive_field) / stride + 1;
}

// ---------------------------------------------------------------------------
// 1D convolution
// ---------------------------------------------------------------------------

// Kernel bank of one conv layer. Weights are stored [out][in][tap] so the
// innermost loop walks contiguous input samples.
template <typename T>
struct ConvKernelSet {
  int out_channels = 0;
  int in_channels = 0;
  int receptive_field = 1;
  int stride = 1;
  std::vector<T> weights;  // out_channels * in_channels * receptive_field
  std::vector<T> biases;   // out_channels

  ConvKernelSet() = default;
  ConvKernelSet(int out_c, int in_c, int r, int s)
      : out_channels(out_c), in_channels(in_c), receptive_field(r), stride(s),
        weights(static_cast<std::size_t>(out_c) * in_c * r, T(0)), biases(out_c, T(0)) {
    if (out_c < 1 || in_c < 1 || r < 1 || s < 1)
      throw DimensionError("conv: all kernel dimensions must be >= 1");
  }

  T* kernel(int o, int c) {
    return weights.data() + (static_cast<std::size_t>(o) * in_channels + c) * receptive_field;
  }
  const T* kernel(int o, int c) const {
    return weights.data() + (static_cast<std::size_t>(o) * in_channels + c) * receptive_field;
  }
};

namespace detail {

// Compile-time receptive field and stride let the tap loop unroll; the
// Table-1 shapes (1x5 /3 and 1x3 /2) get dedicated instantiations and
// everything else takes the generic path.
template <typename T, int R, int S>
void conv_forward_rs(const Tensor1D<T>& input, const ConvKernelSet<T>& k, Tensor1D<T>& out) {
  const int out_len = out.length;
  for (int o = 0; o < k.out_channels; ++o) {
    T* orow = out.row(o);
    const T b = k.biases[o];
    for (int j = 0; j < out_len; ++j) orow[j] = b;
    for (int c = 0; c < k.in_channels; ++c) {
      const T* irow = input.row(c);
      const T* w = k.kernel(o, c);
      for (int j = 0; j < out_len; ++j) {
        const T* seg = irow + static_cast<std::size_t>(j) * S;
        T acc = T(0);
        for (int t = 0; t < R; ++t) acc += w[t] * seg[t];
        orow[j] += acc;
      }
    }
  }
}

template <typename T>
void conv_forward_generic(const Tensor1D<T>& input, const ConvKernelSet<T>& k, Tensor1D<T>& out) {
  const int out_len = out.length;
  const int r = k.receptive_field;
  const int s = k.stride;
  for (int o = 0; o < k.out_channels; ++o) {
    T* orow = out.row(o);
    const T b = k.biases[o];
    for (int j = 0; j < out_len; ++j) orow[j] = b;
    for (int c = 0; c < k.in_channels; ++c) {
      const T* irow = input.row(c);
      const T* w = k.kernel(o, c);
      for (int j = 0; j < out_len; ++j) {
        const T* seg = irow + static_cast<std::size_t>(j) * s;
        T acc = T(0);
        for (int t = 0; t < r; ++t) acc += w[t] * seg[t];
        orow[j] += acc;
      }
    }
  }
}

}  // namespace detail

template <typename T>
Tensor1D<T> conv1d_forward(const Tensor1D<T>& input, const ConvKernelSet<T>& k) {
  if (input.channels != k.in_channels)
    throw DimensionError("conv: input has " + std::to_string(input.channels) +
                         " channels, kernels expect " + std::to_string(k.in_channels));
  const int out_len = conv_output_length(input.length, k.receptive_field, k.stride);
  Tensor1D<T> out(k.out_channels, out_len);
  if (k.receptive_field == 5 && k.stride == 3)
    detail::conv_forward_rs<T, 5, 3>(input, k, out);
  else if (k.receptive_field == 3 && k.stride == 2)
    detail::conv_forward_rs<T, 3, 2>(input, k, out);
  else
    detail::conv_forward_generic(input, k, out);
  return out;
}

template <typename T>
struct ConvGrads {
  std::vector<T> dweights;
  std::vector<T> dbiases;
  Tensor1D<T> dinput;
};

namespace detail {

template <typename T, int R, int S>
void conv_backward_rs(const Tensor1D<T>& input, const ConvKernelSet<T>& k,
                      const Tensor1D<T>& output_grad, ConvGrads<T>& g) {
  const int out_len = output_grad.length;
  for (int o = 0; o < k.out_channels; ++o) {
    const T* grow = output_grad.row(o);
    T db = T(0);
    for (int j = 0; j < out_len; ++j) db += grow[j];
    g.dbiases[o] = db;
    for (int c = 0; c < k.in_channels; ++c) {
      const T* irow = input.row(c);
      const T* w = k.kernel(o, c);
      T* dw = g.dweights.data() + (static_cast<std::size_t>(o) * k.in_channels + c) * R;
      T* di = g.dinput.row(c);
      T acc[R] = {};
      for (int j = 0; j < out_len; ++j) {
        const T gj = grow[j];
        const std::size_t base = static_cast<std::size_t>(j) * S;
        for (int t = 0; t < R; ++t) {
          acc[t] += gj * irow[base + t];
          di[base + t] += gj * w[t];
        }
      }
      for (int t = 0; t < R; ++t) dw[t] += acc[t];
    }
  }
}

template <typename T>
void conv_backward_generic(const Tensor1D<T>& input, const ConvKernelSet<T>& k,
                           const Tensor1D<T>& output_grad, ConvGrads<T>& g) {
  const int out_len = output_grad.length;
  const int r = k.receptive_field;
  const int s = k.stride;
  for (int o = 0; o < k.out_channels; ++o) {
    const T* grow = output_grad.row(o);
    T db = T(0);
    for (int j = 0; j < out_len; ++j) db += grow[j];
    g.dbiases[o] = db;
    for (int c = 0; c < k.in_channels; ++c) {
      const T* irow = input.row(c);
      const T* w = k.kernel(o, c);
      T* dw = g.dweights.data() + (static_cast<std::size_t>(o) * k.in_channels + c) * r;
      T* di = g.dinput.row(c);
      for (int j = 0; j < out_len; ++j) {
        const T gj = grow[j];
        const std::size_t base = static_cast<std::size_t>(j) * s;
        for (int t = 0; t < r; ++t) {
          dw[t] += gj * irow[base + t];
          di[base + t] += gj * w[t];
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
ConvGrads<T> conv1d_backward(const Tensor1D<T>& input, const ConvKernelSet<T>& k,
                             const Tensor1D<T>& output_grad) {
  const int out_len = conv_output_length(input.length, k.receptive_field, k.stride);
  if (output_grad.channels != k.out_channels || output_grad.length != out_len)
    throw DimensionError("conv backward: output gradient shape mismatch");
  if (input.channels != k.in_channels)
    throw DimensionError("conv backward: input channel mismatch");

  ConvGrads<T> g;
  g.dweights.assign(k.weights.size(), T(0));
  g.dbiases.assign(k.biases.size(), T(0));
  g.dinput = Tensor1D<T>(input.channels, input.length);

  if (k.receptive_field == 5 && k.stride == 3)
    detail::conv_backward_rs<T, 5, 3>(input, k, output_grad, g);
  else if (k.receptive_field == 3 && k.stride == 2)
    detail::conv_backward_rs<T, 3, 2>(input, k, output_grad, g);
  else
    detail::conv_backward_generic(input, k, output_grad, g);
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.9);  // weight kept on the previous running estimate
  T epsilon = T(1e-5);
  bool affine = false;
  std::vector<T> gamma;
  std::vector<T> beta;

  BatchNormState() = default;
  explicit BatchNormState(int maps, bool affine_ = false)
      : running_mean(maps, T(0)), running_var(maps, T(1)), affine(affine_) {
    if (affine_) {
      gamma.assign(maps, T(1));
      beta.assign(maps, T(0));
    }
  }
  int maps() const { return static_cast<int>(running_mean.size()); }
};

template <typename T>
struct BatchNormCache {
  bool valid = false;  // set only by train-mode forward
  int length = 0;
  std::vector<T> inv_std;            // per map, 1/sqrt(var + eps)
  std::vector<Tensor1D<T>> xhat;     // normalized inputs, per sample
};

// Statistics are taken per feature map over all samples and positions of the
// batch. Train mode updates the running estimates (population variance);
// eval mode normalizes with the stored estimates and accepts any batch size.
template <typename T>
std::vector<Tensor1D<T>> batchnorm_apply(const std::vector<Tensor1D<T>>& batch,
                                         BatchNormState<T>& state, Mode mode,
                                         BatchNormCache<T>* cache = nullptr) {
  if (batch.empty()) throw DimensionError("batchnorm: empty batch");
  const int maps = state.maps();
  const int length = batch.front().length;
  for (const auto& x : batch)
    if (x.channels != maps || x.length != length)
      throw DimensionError("batchnorm: inconsistent batch shapes");

  const std::size_t n = batch.size();
  std::vector<Tensor1D<T>> out(n, Tensor1D<T>(maps, length));

  if (mode == Mode::train) {
    if (n < 2) throw DimensionError("batchnorm: train mode requires batch size >= 2");
    if (cache) {
      cache->valid = true;
      cache->length = length;
      cache->inv_std.assign(maps, T(0));
      cache->xhat.assign(n, Tensor1D<T>(maps, length));
    }
    const T m_count = static_cast<T>(n * static_cast<std::size_t>(length));
    for (int c = 0; c < maps; ++c) {
      T sum = T(0);
      for (std::size_t i = 0; i < n; ++i) {
        const T* row = batch[i].row(c);
        for (int j = 0; j < length; ++j) sum += row[j];
      }
      const T mean = sum / m_count;
      T sq = T(0);
      for (std::size_t i = 0; i < n; ++i) {
        const T* row = batch[i].row(c);
        for (int j = 0; j < length; ++j) {
          const T d = row[j] - mean;
          sq += d * d;
        }
      }
      const T var = sq / m_count;
      const T inv_std = T(1) / std::sqrt(var + state.epsilon);
      if (cache) cache->inv_std[c] = inv_std;

      const T g = state.affine ? state.gamma[c] : T(1);
      const T b = state.affine ? state.beta[c] : T(0);
      for (std::size_t i = 0; i < n; ++i) {
        const T* row = batch[i].row(c);
        T* orow = out[i].row(c);
        T* xrow = cache ? cache->xhat[i].row(c) : nullptr;
        for (int j = 0; j < length; ++j) {
          const T xh = (row[j] - mean) * inv_std;
          if (xrow) xrow[j] = xh;
          orow[j] = g * xh + b;
        }
      }
      state.running_mean[c] = state.momentum * state.running_mean[c] + (T(1) - state.momentum) * mean;
      state.running_var[c] = state.momentum * state.running_var[c] + (T(1) - state.momentum) * var;
    }
  } else {
    for (int c = 0; c < maps; ++c) {
      const T mean = state.running_mean[c];
      const T inv_std = T(1) / std::sqrt(state.running_var[c] + state.epsilon);
      const T g = state.affine ? state.gamma[c] : T(1);
      const T b = state.affine ? state.beta[c] : T(0);
      for (std::size_t i = 0; i < n; ++i) {
        const T* row = batch[i].row(c);
        T* orow = out[i].row(c);
        for (int j = 0; j < length; ++j) orow[j] = g * (row[j] - mean) * inv_std + b;
      }
    }
  }
  return out;
}

template <typename T>
struct BatchNormGrads {
  std::vector<Tensor1D<T>> dinputs;
  std::vector<T> dgamma;  // empty unless affine
  std::vector<T> dbeta;
};

// dx = (inv_std / m) * (m*gy - sum(gy) - xhat * sum(gy * xhat)), gy = g * gamma
template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormState<T>& state, const BatchNormCache<T>& cache,
                                     const std::vector<Tensor1D<T>>& output_grad) {
  if (!cache.valid)
    throw DimensionError("batchnorm backward: no train-mode cache (eval-mode backward is not defined)");
  const int maps = state.maps();
  const int length = cache.length;
  const std::size_t n = cache.xhat.size();
  if (output_grad.size() != n) throw DimensionError("batchnorm backward: batch size mismatch");
  for (const auto& g : output_grad)
    if (g.channels != maps || g.length != length)
      throw DimensionError("batchnorm backward: gradient shape mismatch");

  BatchNormGrads<T> res;
  res.dinputs.assign(n, Tensor1D<T>(maps, length));
  if (state.affine) {
    res.dgamma.assign(maps, T(0));
    res.dbeta.assign(maps, T(0));
  }

  const T m_count = static_cast<T>(n * static_cast<std::size_t>(length));
  for (int c = 0; c < maps; ++c) {
    const T gscale = state.affine ? state.gamma[c] : T(1);
    T sum_g = T(0);
    T sum_gx = T(0);
    for (std::size_t i = 0; i < n; ++i) {
      const T* grow = output_grad[i].row(c);
      const T* xrow = cache.xhat[i].row(c);
      for (int j = 0; j < length; ++j) {
        sum_g += grow[j];
        sum_gx += grow[j] * xrow[j];
      }
    }
    if (state.affine) {
      res.dgamma[c] = sum_gx;
      res.dbeta[c] = sum_g;
    }
    const T k = gscale * cache.inv_std[c] / m_count;
    for (std::size_t i = 0; i < n; ++i) {
      const T* grow = output_grad[i].row(c);
      const T* xrow = cache.xhat[i].row(c);
      T* drow = res.dinputs[i].row(c);
      for (int j = 0; j < length; ++j)
        drow[j] = k * (m_count * grow[j] - sum_g - xrow[j] * sum_gx);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

template <typename T>
void relu_inplace(std::span<T> x) {
  for (T& v : x) v = v > T(0) ? v : T(0);
}

template <typename T>
Tensor1D<T> relu(const Tensor1D<T>& x) {
  Tensor1D<T> y = x;
  relu_inplace(std::span<T>(y.data));
  return y;
}

// Gradient at exactly zero is defined as 0.
template <typename T>
void relu_backward_inplace(std::span<const T> x, std::span<T> grad) {
  if (x.size() != grad.size()) throw DimensionError("relu backward: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!(x[i] > T(0))) grad[i] = T(0);
}

template <typename T>
std::vector<T> relu_backward(std::span<const T> x, std::span<const T> output_grad) {
  std::vector<T> g(output_grad.begin(), output_grad.end());
  relu_backward_inplace(x, std::span<T>(g));
  return g;
}

// ---------------------------------------------------------------------------
// Fully connected
// ---------------------------------------------------------------------------

template <typename T>
struct FcWeights {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<T> w;  // [in][out], z = W^T a + b
  std::vector<T> b;

  FcWeights() = default;
  FcWeights(int in_d, int out_d)
      : in_dim(in_d), out_dim(out_d),
        w(static_cast<std::size_t>(in_d) * out_d, T(0)), b(out_d, T(0)) {}
};

template <typename T>
std::vector<T> fc_forward(std::span<const T> a, const FcWeights<T>& fc) {
  if (static_cast<int>(a.size()) != fc.in_dim)
    throw DimensionError("fc: input dim " + std::to_string(a.size()) + " != " +
                         std::to_string(fc.in_dim));
  std::vector<T> z(fc.b.begin(), fc.b.end());
  for (int i = 0; i < fc.in_dim; ++i) {
    const T ai = a[i];
    const T* wrow = fc.w.data() + static_cast<std::size_t>(i) * fc.out_dim;
    for (int k = 0; k < fc.out_dim; ++k) z[k] += wrow[k] * ai;
  }
  return z;
}

template <typename T>
struct FcGrads {
  std::vector<T> dw;
  std::vector<T> db;
  std::vector<T> da;
};

// dW = a g^T, db = g, da = W g
template <typename T>
FcGrads<T> fc_backward(std::span<const T> a, const FcWeights<T>& fc, std::span<const T> gz) {
  if (static_cast<int>(a.size()) != fc.in_dim || static_cast<int>(gz.size()) != fc.out_dim)
    throw DimensionError("fc backward: shape mismatch");
  FcGrads<T> g;
  g.dw.assign(fc.w.size(), T(0));
  g.db.assign(gz.begin(), gz.end());
  g.da.assign(fc.in_dim, T(0));
  for (int i = 0; i < fc.in_dim; ++i) {
    const T ai = a[i];
    const T* wrow = fc.w.data() + static_cast<std::size_t>(i) * fc.out_dim;
    T* dwrow = g.dw.data() + static_cast<std::size_t>(i) * fc.out_dim;
    T acc = T(0);
    for (int k = 0; k < fc.out_dim; ++k) {
      dwrow[k] += ai * gz[k];
      acc += wrow[k] * gz[k];
    }
    g.da[i] = acc;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Dropout (inverted: survivors scaled by 1/(1-p) at train time, eval is identity)
// ---------------------------------------------------------------------------

template <typename T>
std::vector<T> dropout_mask(std::size_t n, double p, Mode mode, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw DimensionError("dropout: p must be in [0, 1)");
  std::vector<T> mask(n, T(1));
  if (mode == Mode::eval || p == 0.0) return mask;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < n; ++i) mask[i] = rng.bernoulli(p) ? T(0) : keep_scale;
  return mask;
}

template <typename T>
void apply_mask_inplace(std::span<T> x, std::span<const T> mask) {
  if (x.size() != mask.size()) throw DimensionError("dropout: mask size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) x[i] *= mask[i];
}

// ---------------------------------------------------------------------------
// Softmax + cross entropy (binary head)
// ---------------------------------------------------------------------------

template <typename T>
struct SoftmaxCEResult {
  T loss;
  std::array<T, 2> probs;
  std::array<T, 2> logit_grad;  // probs - onehot(label)
};

template <typename T>
SoftmaxCEResult<T> softmax_cross_entropy(std::span<const T> logits, int label) {
  if (logits.size() != 2) throw DimensionError("softmax_cross_entropy: expected 2 logits");
  if (label != 0 && label != 1) throw DimensionError("softmax_cross_entropy: label must be 0 or 1");
  if (!std::isfinite(static_cast<double>(logits[0])) || !std::isfinite(static_cast<double>(logits[1])))
    throw NumericError("softmax_cross_entropy: non-finite logits");

  const T m = std::max(logits[0], logits[1]);
  const T e0 = std::exp(logits[0] - m);
  const T e1 = std::exp(logits[1] - m);
  const T z = e0 + e1;

  SoftmaxCEResult<T> r;
  r.probs = {e0 / z, e1 / z};
  r.loss = std::log(z) - (logits[label] - m);
  r.logit_grad = r.probs;
  r.logit_grad[label] -= T(1);
  return r;
}

// Argmax with the deterministic tie rule: exactly equal probabilities go to
// class 0.
template <typename T>
int argmax_label(const std::array<T, 2>& probs) {
  return probs[1] > probs[0] ? 1 : 0;
}

}  // namespace deepaer
