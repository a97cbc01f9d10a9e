#include <doctest.h>

#include <cmath>
#include <vector>

#include "deepaer/gradcheck.hpp"
#include "deepaer/nn.hpp"

using namespace deepaer;

namespace {

// Brute-force sliding dot product, the oracle for the conv kernel.
Tensor1D<double> conv_reference(const Tensor1D<double>& in, const ConvKernelSet<double>& k) {
  std::vector<double> outs;
  const int out_len = (in.length - k.receptive_field) / k.stride + 1;
  Tensor1D<double> out(k.out_channels, out_len);
  for (int o = 0; o < k.out_channels; ++o)
    for (int j = 0; j < out_len; ++j) {
      double acc = k.biases[o];
      for (int c = 0; c < k.in_channels; ++c)
        for (int t = 0; t < k.receptive_field; ++t)
          acc += k.kernel(o, c)[t] * in.at(c, j * k.stride + t);
      out.at(o, j) = acc;
    }
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("nn");

TEST_CASE("conv output length formula") {
  CHECK(conv_output_length(672, 5, 3) == 223);
  CHECK(conv_output_length(3, 3, 1) == 1);
  CHECK(conv_output_length(5, 5, 7) == 1);
  CHECK_THROWS_AS(conv_output_length(4, 5, 1), DimensionError);
}

TEST_CASE("conv output length matches brute-force enumeration") {
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const int r = 1 + static_cast<int>(rng.below(6));
    const int s = 1 + static_cast<int>(rng.below(4));
    const int n = r + static_cast<int>(rng.below(40));
    // count positions the window fits at, stepping by stride
    int count = 0;
    for (int start = 0; start + r <= n; start += s) ++count;
    CHECK(conv_output_length(n, r, s) == count);
  }
}

TEST_CASE("conv forward selects first element with a delta kernel") {
  Tensor1D<double> in(1, 3);
  in.data = {1, 2, 3};
  ConvKernelSet<double> k(1, 1, 3, 1);
  k.weights = {1, 0, 0};
  k.biases = {0};
  auto out = conv1d_forward(in, k);
  REQUIRE(out.length == 1);
  CHECK(out.at(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("conv forward on zero input returns the bias") {
  Tensor1D<double> in(2, 9);
  ConvKernelSet<double> k(3, 2, 3, 2);
  Rng rng(7);
  for (auto& w : k.weights) w = rng.gaussian();
  k.biases = {0.5, -1.5, 2.0};
  auto out = conv1d_forward(in, k);
  for (int o = 0; o < 3; ++o)
    for (int j = 0; j < out.length; ++j) CHECK(out.at(o, j) == doctest::Approx(k.biases[o]));
}

TEST_CASE("conv forward agrees with the sliding dot-product oracle") {
  Rng rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    const int in_c = 1 + static_cast<int>(rng.below(3));
    const int out_c = 1 + static_cast<int>(rng.below(4));
    const int r = 1 + static_cast<int>(rng.below(5));
    const int s = 1 + static_cast<int>(rng.below(3));
    const int n = r + static_cast<int>(rng.below(30));
    Tensor1D<double> in(in_c, n);
    for (auto& v : in.data) v = rng.gaussian();
    ConvKernelSet<double> k(out_c, in_c, r, s);
    for (auto& w : k.weights) w = rng.gaussian();
    for (auto& b : k.biases) b = rng.gaussian();
    auto got = conv1d_forward(in, k);
    auto want = conv_reference(in, k);
    REQUIRE(got.data.size() == want.data.size());
    for (std::size_t i = 0; i < got.data.size(); ++i)
      CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv with zero bias is linear") {
  Rng rng(77);
  Tensor1D<double> x(2, 17), y(2, 17);
  for (auto& v : x.data) v = rng.gaussian();
  for (auto& v : y.data) v = rng.gaussian();
  ConvKernelSet<double> k(3, 2, 3, 2);
  for (auto& w : k.weights) w = rng.gaussian();
  const double a = 1.7, b = -0.4;
  Tensor1D<double> mix(2, 17);
  for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = a * x.data[i] + b * y.data[i];
  auto lhs = conv1d_forward(mix, k);
  auto fx = conv1d_forward(x, k);
  auto fy = conv1d_forward(y, k);
  for (std::size_t i = 0; i < lhs.data.size(); ++i)
    CHECK(std::abs(lhs.data[i] - (a * fx.data[i] + b * fy.data[i])) < 1e-10);
}

TEST_CASE("conv backward: zero output grad gives zero gradients") {
  Rng rng(5);
  Tensor1D<double> in(2, 11);
  for (auto& v : in.data) v = rng.gaussian();
  ConvKernelSet<double> k(3, 2, 3, 2);
  for (auto& w : k.weights) w = rng.gaussian();
  Tensor1D<double> gout(3, conv_output_length(11, 3, 2));
  auto g = conv1d_backward(in, k, gout);
  for (double v : g.dweights) CHECK(v == 0.0);
  for (double v : g.dbiases) CHECK(v == 0.0);
  for (double v : g.dinput.data) CHECK(v == 0.0);
}

TEST_CASE("conv backward: bias gradient is the sum over positions") {
  Rng rng(6);
  Tensor1D<double> in(1, 13);
  for (auto& v : in.data) v = rng.gaussian();
  ConvKernelSet<double> k(1, 1, 3, 2);
  for (auto& w : k.weights) w = rng.gaussian();
  Tensor1D<double> gout(1, conv_output_length(13, 3, 2));
  double sum = 0.0;
  for (auto& v : gout.data) {
    v = rng.gaussian();
    sum += v;
  }
  auto g = conv1d_backward(in, k, gout);
  CHECK(g.dbiases[0] == doctest::Approx(sum).epsilon(1e-12));
}

TEST_CASE("conv backward matches finite differences") {
  auto entry = check_conv1d_layer(/*seed=*/2024, /*in_c=*/1, /*n=*/11, /*out_c=*/2,
                                  /*r=*/3, /*s=*/2);
  CHECK(entry.max_rel_err < 1e-4);
}

TEST_CASE("conv backward rejects mismatched gradient shape") {
  Tensor1D<double> in(1, 11);
  ConvKernelSet<double> k(2, 1, 3, 2);
  Tensor1D<double> bad(2, 99);
  CHECK_THROWS_AS(conv1d_backward(in, k, bad), DimensionError);
}

TEST_CASE("batchnorm train mode normalizes each map") {
  Rng rng(8);
  std::vector<Tensor1D<double>> batch(5, Tensor1D<double>(3, 7));
  for (auto& t : batch)
    for (auto& v : t.data) v = 2.0 + 3.0 * rng.gaussian();
  BatchNormState<double> st(3);
  auto out = batchnorm_apply(batch, st, Mode::train);
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (const auto& t : out)
      for (int j = 0; j < 7; ++j) mean += t.at(c, j);
    mean /= 5 * 7;
    for (const auto& t : out)
      for (int j = 0; j < 7; ++j) var += (t.at(c, j) - mean) * (t.at(c, j) - mean);
    var /= 5 * 7;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-5);
  }
}

TEST_CASE("batchnorm eval with identity stats passes input through") {
  Rng rng(9);
  std::vector<Tensor1D<double>> batch(1, Tensor1D<double>(2, 5));
  for (auto& v : batch[0].data) v = rng.gaussian();
  BatchNormState<double> st(2);  // running (0, 1)
  auto out = batchnorm_apply(batch, st, Mode::eval);
  for (std::size_t i = 0; i < batch[0].data.size(); ++i)
    CHECK(out[0].data[i] == doctest::Approx(batch[0].data[i]).epsilon(1e-5));
}

TEST_CASE("batchnorm maps a constant feature map to zero") {
  std::vector<Tensor1D<double>> batch(3, Tensor1D<double>(1, 4));
  for (auto& t : batch)
    for (auto& v : t.data) v = 42.0;
  BatchNormState<double> st(1);
  auto out = batchnorm_apply(batch, st, Mode::train);
  for (const auto& t : out)
    for (double v : t.data) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("batchnorm train mode requires batch size >= 2") {
  std::vector<Tensor1D<double>> batch(1, Tensor1D<double>(1, 4));
  BatchNormState<double> st(1);
  CHECK_THROWS_AS(batchnorm_apply(batch, st, Mode::train), DimensionError);
}

TEST_CASE("batchnorm running stats follow the decayed average") {
  std::vector<Tensor1D<double>> batch(2, Tensor1D<double>(1, 2));
  batch[0].data = {1.0, 1.0};
  batch[1].data = {3.0, 3.0};  // batch mean 2, population var 1
  BatchNormState<double> st(1);
  batchnorm_apply(batch, st, Mode::train);
  CHECK(st.running_mean[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0));
  CHECK(st.running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));
}

TEST_CASE("batchnorm backward: zero grad in, zero grad out") {
  Rng rng(10);
  std::vector<Tensor1D<double>> batch(3, Tensor1D<double>(2, 5));
  for (auto& t : batch)
    for (auto& v : t.data) v = rng.gaussian();
  BatchNormState<double> st(2);
  BatchNormCache<double> cache;
  batchnorm_apply(batch, st, Mode::train, &cache);
  std::vector<Tensor1D<double>> gout(3, Tensor1D<double>(2, 5));
  auto g = batchnorm_backward(st, cache, gout);
  for (const auto& t : g.dinputs)
    for (double v : t.data) CHECK(v == 0.0);
}

TEST_CASE("batchnorm backward: uniform grad lands in the mean-subtraction nullspace") {
  Rng rng(11);
  std::vector<Tensor1D<double>> batch(4, Tensor1D<double>(1, 6));
  for (auto& t : batch)
    for (auto& v : t.data) v = rng.gaussian();
  BatchNormState<double> st(1);
  BatchNormCache<double> cache;
  batchnorm_apply(batch, st, Mode::train, &cache);
  std::vector<Tensor1D<double>> gout(4, Tensor1D<double>(1, 6));
  for (auto& t : gout)
    for (auto& v : t.data) v = 0.37;
  auto g = batchnorm_backward(st, cache, gout);
  for (const auto& t : g.dinputs)
    for (double v : t.data) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("batchnorm backward matches finite differences") {
  auto entry = check_batchnorm_layer(/*seed=*/31337);
  CHECK(entry.max_rel_err < 1e-4);
  auto affine = check_batchnorm_layer(/*seed=*/31338, 3, 7, 4, /*affine=*/true);
  CHECK(affine.max_rel_err < 1e-4);
}

TEST_CASE("batchnorm backward without a train cache is an error") {
  BatchNormState<double> st(1);
  BatchNormCache<double> cache;  // never filled
  std::vector<Tensor1D<double>> gout(2, Tensor1D<double>(1, 3));
  CHECK_THROWS_AS(batchnorm_backward(st, cache, gout), DimensionError);
}

TEST_CASE("relu forward and backward") {
  std::vector<double> x = {-1.0, 0.0, 2.0};
  std::vector<double> y = x;
  relu_inplace(std::span<double>(y));
  CHECK(y == std::vector<double>{0.0, 0.0, 2.0});

  std::vector<double> g = {1.0, 1.0, 1.0};
  auto gi = relu_backward(std::span<const double>(x), std::span<const double>(g));
  CHECK(gi == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("relu is idempotent") {
  Rng rng(12);
  std::vector<double> x(64);
  for (auto& v : x) v = rng.gaussian();
  std::vector<double> once = x;
  relu_inplace(std::span<double>(once));
  std::vector<double> twice = once;
  relu_inplace(std::span<double>(twice));
  CHECK(once == twice);
}

TEST_CASE("fc identity weights pass input through") {
  FcWeights<double> fc(3, 3);
  for (int i = 0; i < 3; ++i) fc.w[i * 3 + i] = 1.0;
  std::vector<double> a = {1.5, -2.0, 0.25};
  auto z = fc_forward(std::span<const double>(a), fc);
  CHECK(z == a);
}

TEST_CASE("fc rejects wrong input dimension") {
  FcWeights<double> fc(4, 2);
  std::vector<double> a = {1.0, 2.0};
  CHECK_THROWS_AS(fc_forward(std::span<const double>(a), fc), DimensionError);
}

TEST_CASE("fc backward matches finite differences") {
  auto entry = check_fc_layer(/*seed=*/99);
  CHECK(entry.max_rel_err < 1e-7);  // linear map, central differences are exact
}

TEST_CASE("dropout eval mode is bit-exact identity") {
  Rng rng(13);
  auto mask = dropout_mask<double>(100, 0.5, Mode::eval, rng);
  for (double m : mask) CHECK(m == 1.0);
}

TEST_CASE("dropout p=0 keeps everything") {
  Rng rng(14);
  auto mask = dropout_mask<double>(50, 0.0, Mode::train, rng);
  for (double m : mask) CHECK(m == 1.0);
}

TEST_CASE("dropout keeps roughly 1-p survivors and preserves expected activation") {
  Rng rng(15);
  const std::size_t n = 100000;
  auto mask = dropout_mask<double>(n, 0.5, Mode::train, rng);
  std::size_t survivors = 0;
  double mean_scale = 0.0;
  for (double m : mask) {
    if (m != 0.0) ++survivors;
    mean_scale += m;
  }
  mean_scale /= static_cast<double>(n);
  CHECK(std::abs(static_cast<double>(survivors) / n - 0.5) < 0.01);
  CHECK(std::abs(mean_scale - 1.0) < 0.02);  // inverted scaling keeps E[mask] = 1
}

TEST_CASE("dropout rejects p >= 1") {
  Rng rng(16);
  CHECK_THROWS_AS(dropout_mask<double>(10, 1.0, Mode::train, rng), DimensionError);
}

TEST_CASE("softmax cross entropy at symmetric logits") {
  std::vector<double> logits = {0.0, 0.0};
  auto r = softmax_cross_entropy(std::span<const double>(logits), 0);
  CHECK(r.probs[0] == doctest::Approx(0.5));
  CHECK(r.probs[1] == doctest::Approx(0.5));
  CHECK(r.loss == doctest::Approx(std::log(2.0)));
}

TEST_CASE("softmax cross entropy is stable at extreme logits") {
  std::vector<double> logits = {1000.0, -1000.0};
  auto r = softmax_cross_entropy(std::span<const double>(logits), 0);
  CHECK(r.loss == doctest::Approx(0.0));
  CHECK(std::isfinite(r.probs[0]));
  CHECK(r.probs[0] == doctest::Approx(1.0));
}

TEST_CASE("softmax probabilities are a distribution for any finite logits") {
  Rng rng(17);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> logits = {rng.gaussian() * 50.0, rng.gaussian() * 50.0};
    auto r = softmax_cross_entropy(std::span<const double>(logits), 1);
    CHECK(r.probs[0] >= 0.0);
    CHECK(r.probs[1] >= 0.0);
    CHECK(r.probs[0] <= 1.0);
    CHECK(r.probs[1] <= 1.0);
    CHECK(std::abs(r.probs[0] + r.probs[1] - 1.0) < 1e-9);
  }
}

TEST_CASE("softmax rejects non-finite logits") {
  std::vector<double> logits = {std::numeric_limits<double>::quiet_NaN(), 0.0};
  CHECK_THROWS_AS(softmax_cross_entropy(std::span<const double>(logits), 0), NumericError);
}

TEST_CASE("softmax logit gradient matches finite differences") {
  auto entry = check_softmax_ce(/*seed=*/4242);
  CHECK(entry.max_rel_err < 1e-4);
}

TEST_CASE("corrupted backward fails the gradient comparison") {
  // Negative control: sign-flip one analytic group and make sure the check
  // machinery notices.
  Rng rng(18);
  FcWeights<double> fc(5, 3);
  for (auto& w : fc.w) w = rng.gaussian();
  std::vector<double> a(5);
  for (auto& v : a) v = rng.gaussian();
  std::vector<double> coeff = {0.3, -1.2, 0.8};

  auto analytic = fc_backward(std::span<const double>(a), fc, std::span<const double>(coeff));
  for (auto& v : analytic.dw) v = -v;  // corruption

  auto loss = [&]() {
    auto z = fc_forward(std::span<const double>(a), fc);
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += z[i] * coeff[i];
    return s;
  };
  std::vector<ParamRef<double>> params{{"w", std::span<double>(fc.w)}};
  auto numeric = numerical_gradients(loss, params, 1e-6);
  auto report = compare_gradients<double>({"w"}, {analytic.dw}, numeric);
  CHECK_FALSE(report.passed(1e-4));
}

TEST_SUITE_END();
