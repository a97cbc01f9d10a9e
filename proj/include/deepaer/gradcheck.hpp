#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "deepaer/model.hpp"
#include "deepaer/nn.hpp"

namespace deepaer {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t elements = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double worst() const {
    double w = 0.0;
    for (const auto& e : entries) w = std::max(w, e.max_rel_err);
    return w;
  }
  bool passed(double tol) const { return worst() < tol; }
};

// Relative error with a floor on the denominator so that finite-difference
// noise on near-zero gradients does not register as disagreement.
inline double grad_rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

// Central differences of a scalar loss with respect to every element of every
// parameter group. The loss callable must be a pure function of the current
// parameter values (fix any RNG by re-seeding inside it).
template <typename T, typename LossFn>
std::vector<std::vector<double>> numerical_gradients(LossFn&& loss,
                                                     std::vector<ParamRef<T>>& params,
                                                     double h = 1e-5) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (auto& group : params) {
    std::vector<double> g(group.values.size(), 0.0);
    for (std::size_t i = 0; i < group.values.size(); ++i) {
      const T saved = group.values[i];
      group.values[i] = static_cast<T>(static_cast<double>(saved) + h);
      const double up = loss();
      group.values[i] = static_cast<T>(static_cast<double>(saved) - h);
      const double down = loss();
      group.values[i] = saved;
      g[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

template <typename T>
GradCheckReport compare_gradients(const std::vector<std::string>& names,
                                  const std::vector<std::vector<T>>& analytic,
                                  const std::vector<std::vector<double>>& numeric) {
  if (analytic.size() != numeric.size())
    throw DimensionError("gradient check: group count mismatch");
  GradCheckReport report;
  for (std::size_t g = 0; g < analytic.size(); ++g) {
    if (analytic[g].size() != numeric[g].size())
      throw DimensionError("gradient check: group '" + names[g] + "' size mismatch");
    GradCheckEntry e;
    e.name = names[g];
    e.elements = analytic[g].size();
    for (std::size_t i = 0; i < analytic[g].size(); ++i)
      e.max_rel_err = std::max(e.max_rel_err,
                               grad_rel_err(static_cast<double>(analytic[g][i]), numeric[g][i]));
    report.entries.push_back(std::move(e));
  }
  return report;
}

// Full-model check: mean cross-entropy over a small batch, dropout re-seeded
// per evaluation so the loss is a fixed function of the parameters.
template <typename T>
GradCheckReport finite_difference_check(Model<T>& model,
                                        const std::vector<std::vector<T>>& windows,
                                        const std::vector<int>& labels,
                                        double h = 1e-5,
                                        std::uint64_t dropout_seed = 0x5eed) {
  if (windows.size() != labels.size() || windows.size() < 2)
    throw DimensionError("finite_difference_check: need a batch of >= 2 labeled windows");
  const std::size_t n = windows.size();

  auto views = [&]() {
    std::vector<std::span<const T>> v;
    v.reserve(n);
    for (const auto& w : windows) v.emplace_back(w);
    return v;
  };

  auto loss_fn = [&]() -> double {
    Rng rng(dropout_seed);
    ForwardCache<T> cache;
    auto out = forward_train(model, views(), rng, cache);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto ce = softmax_cross_entropy(std::span<const T>(out.logits[i].data(), 2), labels[i]);
      total += static_cast<double>(ce.loss);
    }
    return total / static_cast<double>(n);
  };

  // Analytic gradients of the same mean loss.
  Rng rng(dropout_seed);
  ForwardCache<T> cache;
  auto out = forward_train(model, views(), rng, cache);
  std::vector<std::array<T, 2>> logit_grads(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto ce = softmax_cross_entropy(std::span<const T>(out.logits[i].data(), 2), labels[i]);
    logit_grads[i] = {ce.logit_grad[0] / static_cast<T>(n), ce.logit_grad[1] / static_cast<T>(n)};
  }
  GradBundle<T> analytic = backward_batch(model, cache, logit_grads);

  auto params = param_refs(model);
  auto numeric = numerical_gradients(loss_fn, params, h);
  return compare_gradients(analytic.names, analytic.groups, numeric);
}

// ---------------------------------------------------------------------------
// Per-layer checks on random small instances. Each uses a fixed random linear
// functional of the layer output as the scalar loss.
// ---------------------------------------------------------------------------

namespace detail {

inline double dot_loss(std::span<const double> x, std::span<const double> coeff) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * coeff[i];
  return s;
}

}  // namespace detail

inline GradCheckEntry check_conv1d_layer(std::uint64_t seed, int in_c = 2, int n = 11, int out_c = 3,
                                         int r = 3, int s = 2, double h = 1e-6) {
  Rng rng(seed);
  Tensor1D<double> input(in_c, n);
  for (auto& v : input.data) v = rng.gaussian();
  ConvKernelSet<double> k(out_c, in_c, r, s);
  for (auto& w : k.weights) w = rng.gaussian();
  for (auto& b : k.biases) b = rng.gaussian();

  const int out_len = conv_output_length(n, r, s);
  std::vector<double> coeff(static_cast<std::size_t>(out_c) * out_len);
  for (auto& c : coeff) c = rng.gaussian();

  auto loss = [&]() {
    Tensor1D<double> out = conv1d_forward(input, k);
    return detail::dot_loss(out.data, coeff);
  };

  Tensor1D<double> gout(out_c, out_len);
  gout.data.assign(coeff.begin(), coeff.end());
  ConvGrads<double> analytic = conv1d_backward(input, k, gout);

  std::vector<ParamRef<double>> params{{"weights", std::span<double>(k.weights)},
                                       {"bias", std::span<double>(k.biases)},
                                       {"input", std::span<double>(input.data)}};
  auto numeric = numerical_gradients(loss, params, h);

  GradCheckEntry e{"conv1d", 0.0, 0};
  auto fold = [&](const std::vector<double>& a, const std::vector<double>& num) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      e.max_rel_err = std::max(e.max_rel_err, grad_rel_err(a[i], num[i]));
      ++e.elements;
    }
  };
  fold(analytic.dweights, numeric[0]);
  fold(analytic.dbiases, numeric[1]);
  fold(analytic.dinput.data, numeric[2]);
  return e;
}

inline GradCheckEntry check_batchnorm_layer(std::uint64_t seed, int maps = 3, int len = 7,
                                            int batch = 4, bool affine = false, double h = 1e-6) {
  Rng rng(seed);
  std::vector<Tensor1D<double>> batch_in(batch, Tensor1D<double>(maps, len));
  for (auto& t : batch_in)
    for (auto& v : t.data) v = rng.gaussian();

  BatchNormState<double> state(maps, affine);
  if (affine)
    for (auto& g : state.gamma) g = 1.0 + 0.1 * rng.gaussian();

  std::vector<std::vector<double>> coeff(batch, std::vector<double>(static_cast<std::size_t>(maps) * len));
  for (auto& c : coeff)
    for (auto& v : c) v = rng.gaussian();

  auto loss = [&]() {
    BatchNormState<double> st = state;  // forward mutates running stats
    auto out = batchnorm_apply(batch_in, st, Mode::train);
    double s = 0.0;
    for (int i = 0; i < batch; ++i) s += detail::dot_loss(out[i].data, coeff[i]);
    return s;
  };

  BatchNormState<double> st = state;
  BatchNormCache<double> cache;
  batchnorm_apply(batch_in, st, Mode::train, &cache);
  std::vector<Tensor1D<double>> gout(batch, Tensor1D<double>(maps, len));
  for (int i = 0; i < batch; ++i) gout[i].data.assign(coeff[i].begin(), coeff[i].end());
  BatchNormGrads<double> analytic = batchnorm_backward(state, cache, gout);

  std::vector<ParamRef<double>> params;
  for (int i = 0; i < batch; ++i)
    params.push_back({"input" + std::to_string(i), std::span<double>(batch_in[i].data)});
  if (affine) {
    params.push_back({"gamma", std::span<double>(state.gamma)});
    params.push_back({"beta", std::span<double>(state.beta)});
  }
  auto numeric = numerical_gradients(loss, params, h);

  GradCheckEntry e{"batchnorm", 0.0, 0};
  for (int i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < analytic.dinputs[i].data.size(); ++j) {
      e.max_rel_err = std::max(e.max_rel_err, grad_rel_err(analytic.dinputs[i].data[j], numeric[i][j]));
      ++e.elements;
    }
  if (affine) {
    for (std::size_t j = 0; j < analytic.dgamma.size(); ++j)
      e.max_rel_err = std::max(e.max_rel_err, grad_rel_err(analytic.dgamma[j], numeric[batch][j]));
    for (std::size_t j = 0; j < analytic.dbeta.size(); ++j)
      e.max_rel_err = std::max(e.max_rel_err, grad_rel_err(analytic.dbeta[j], numeric[batch + 1][j]));
    e.elements += analytic.dgamma.size() + analytic.dbeta.size();
  }
  return e;
}

inline GradCheckEntry check_fc_layer(std::uint64_t seed, int in_dim = 9, int out_dim = 4,
                                     double h = 1e-6) {
  Rng rng(seed);
  FcWeights<double> fc(in_dim, out_dim);
  for (auto& w : fc.w) w = rng.gaussian();
  for (auto& b : fc.b) b = rng.gaussian();
  std::vector<double> a(in_dim);
  for (auto& v : a) v = rng.gaussian();
  std::vector<double> coeff(out_dim);
  for (auto& v : coeff) v = rng.gaussian();

  auto loss = [&]() {
    auto z = fc_forward(std::span<const double>(a), fc);
    return detail::dot_loss(z, coeff);
  };

  FcGrads<double> analytic = fc_backward(std::span<const double>(a), fc, std::span<const double>(coeff));
  std::vector<ParamRef<double>> params{{"w", std::span<double>(fc.w)},
                                       {"b", std::span<double>(fc.b)},
                                       {"a", std::span<double>(a)}};
  auto numeric = numerical_gradients(loss, params, h);

  GradCheckEntry e{"fc", 0.0, 0};
  auto fold = [&](const std::vector<double>& an, const std::vector<double>& num) {
    for (std::size_t i = 0; i < an.size(); ++i) {
      e.max_rel_err = std::max(e.max_rel_err, grad_rel_err(an[i], num[i]));
      ++e.elements;
    }
  };
  fold(analytic.dw, numeric[0]);
  fold(analytic.db, numeric[1]);
  fold(analytic.da, numeric[2]);
  return e;
}

inline GradCheckEntry check_softmax_ce(std::uint64_t seed, double h = 1e-7) {
  Rng rng(seed);
  GradCheckEntry e{"softmax_ce", 0.0, 0};
  for (int trial = 0; trial < 8; ++trial) {
    std::vector<double> logits{rng.gaussian() * 2.0, rng.gaussian() * 2.0};
    const int label = trial % 2;
    auto res = softmax_cross_entropy(std::span<const double>(logits), label);
    auto loss = [&]() {
      return static_cast<double>(
          softmax_cross_entropy(std::span<const double>(logits), label).loss);
    };
    std::vector<ParamRef<double>> params{{"logits", std::span<double>(logits)}};
    auto numeric = numerical_gradients(loss, params, h);
    for (int i = 0; i < 2; ++i) {
      e.max_rel_err = std::max(e.max_rel_err, grad_rel_err(res.logit_grad[i], numeric[0][i]));
      ++e.elements;
    }
  }
  return e;
}

// Runs the whole layer suite plus the full-model check. `variant` at 64-bit
// precision is the validation configuration.
inline GradCheckReport run_gradient_suite(Variant variant, int input_length, std::uint64_t seed) {
  GradCheckReport report;
  report.entries.push_back(check_conv1d_layer(derive_seed(seed, {1})));
  report.entries.push_back(check_batchnorm_layer(derive_seed(seed, {2})));
  {
    auto e = check_batchnorm_layer(derive_seed(seed, {3}), 3, 7, 4, /*affine=*/true);
    e.name = "batchnorm_affine";
    report.entries.push_back(e);
  }
  report.entries.push_back(check_fc_layer(derive_seed(seed, {4})));
  report.entries.push_back(check_softmax_ce(derive_seed(seed, {5})));

  ModelSpec spec = make_spec(variant, input_length);
  Rng rng(derive_seed(seed, {6}));
  Model<double> model = build_model<double>(spec, rng, variant);
  const std::size_t batch = 3;
  std::vector<std::vector<double>> windows(batch, std::vector<double>(input_length));
  std::vector<int> labels(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    for (auto& v : windows[i]) v = rng.gaussian();
    labels[i] = static_cast<int>(i % 2);
  }
  GradCheckReport full = finite_difference_check(model, windows, labels);
  for (auto& e : full.entries) {
    e.name = std::string(variant_name(variant)) + "." + e.name;
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace deepaer
