#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "deepaer/gradcheck.hpp"
#include "deepaer/model.hpp"
#include "deepaer/serialize.hpp"

using namespace deepaer;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "deepaer_model_tests";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("parameter counts match the published totals at input length 672") {
  CHECK(count_params(make_spec(Variant::M1, 672)) == 8462);
  CHECK(count_params(make_spec(Variant::M2, 672)) == 8462);  // dropout adds none
  CHECK(count_params(make_spec(Variant::M3, 672)) == 12842);
  CHECK(count_params(make_spec(Variant::M4, 672)) == 12842);
}

TEST_CASE("M2 parameter count decomposes as the hand sum") {
  // conv chains 192 + 2328 + 1168 + 392, then FC1 4340 and FC2 42
  const ModelSpec spec = make_spec(Variant::M2, 672);
  long long conv1 = 32 * 5 * 1 + 32;
  long long conv2 = 24 * 3 * 32 + 24;
  long long conv3 = 16 * 3 * 24 + 16;
  long long conv4 = 8 * 3 * 16 + 8;
  long long fc1 = 216 * 20 + 20;
  long long fc2 = 20 * 2 + 2;
  CHECK(conv1 == 192);
  CHECK(conv2 == 2328);
  CHECK(conv3 == 1168);
  CHECK(conv4 == 392);
  CHECK(fc1 == 4340);
  CHECK(fc2 == 42);
  CHECK(count_params(spec) == conv1 + conv2 + conv3 + conv4 + fc1 + fc2);
}

TEST_CASE("count_params equals the enumerated parameter arrays for every variant") {
  for (Variant v : {Variant::M1, Variant::M2, Variant::M3, Variant::M4}) {
    for (int len : {672, 1344, 2016, 97}) {
      ModelSpec spec = make_spec(v, len);
      Rng rng(1);
      Model<double> m = build_model<double>(spec, rng, v);
      CHECK(enumerate_param_count(m) == count_params(spec));
    }
  }
}

TEST_CASE("shape chain for the 672-sample window") {
  const auto shapes = infer_shapes(make_spec(Variant::M2, 672));
  REQUIRE(shapes.size() == 4);
  CHECK(shapes[0].channels == 32);
  CHECK(shapes[0].length == 223);
  CHECK(shapes[1].channels == 24);
  CHECK(shapes[1].length == 111);
  CHECK(shapes[2].channels == 16);
  CHECK(shapes[2].length == 55);
  CHECK(shapes[3].channels == 8);
  CHECK(shapes[3].length == 27);
  CHECK(flatten_dim(make_spec(Variant::M2, 672)) == 216);
}

TEST_CASE("shape chain for the 1344-sample window") {
  const auto shapes = infer_shapes(make_spec(Variant::M2, 1344));
  CHECK(shapes[0].length == 447);
  CHECK(shapes[1].length == 223);
  CHECK(shapes[2].length == 111);
  CHECK(shapes[3].length == 55);
  CHECK(flatten_dim(make_spec(Variant::M2, 1344)) == 440);
}

TEST_CASE("boundary: first block consumes a window exactly its receptive field long") {
  ModelSpec spec = make_spec(Variant::M2, 5);
  spec.conv_blocks.resize(1);  // single 1x5 /3 block
  const auto shapes = infer_shapes(spec);
  CHECK(shapes[0].length == 1);
}

TEST_CASE("infeasible shape chain names the failing block") {
  ModelSpec spec = make_spec(Variant::M2, 10);  // dies at block 2
  try {
    infer_shapes(spec);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("block 2") != std::string::npos);
  }
}

TEST_CASE("infer_shapes agrees with actual forward tensor shapes") {
  ModelSpec spec = make_spec(Variant::M2, 672);
  Rng rng(3);
  Model<double> m = build_model<double>(spec, rng, Variant::M2);
  const auto shapes = infer_shapes(spec);

  std::vector<std::vector<double>> windows(2, std::vector<double>(672));
  for (auto& w : windows)
    for (auto& v : w) v = rng.gaussian();
  std::vector<std::span<const double>> views{windows[0], windows[1]};
  ForwardCache<double> cache;
  Rng drop(1);
  forward_train(m, views, drop, cache);
  for (std::size_t b = 0; b < shapes.size(); ++b) {
    CHECK(cache.conv_out[b][0].channels == shapes[b].channels);
    CHECK(cache.conv_out[b][0].length == shapes[b].length);
  }
  CHECK(static_cast<int>(cache.flat[0].size()) == flatten_dim(spec));
}

TEST_CASE("same seed gives bit-identical initial weights") {
  ModelSpec spec = make_spec(Variant::M2, 672);
  Rng rng_a(42), rng_b(42);
  Model<float> a = build_model<float>(spec, rng_a, Variant::M2);
  Model<float> b = build_model<float>(spec, rng_b, Variant::M2);
  auto ra = param_refs(a);
  auto rb = param_refs(b);
  REQUIRE(ra.size() == rb.size());
  for (std::size_t g = 0; g < ra.size(); ++g) {
    REQUIRE(ra[g].values.size() == rb[g].values.size());
    for (std::size_t i = 0; i < ra[g].values.size(); ++i)
      CHECK(ra[g].values[i] == rb[g].values[i]);
  }
}

TEST_CASE("all-zero weights give symmetric probabilities") {
  ModelSpec spec = make_spec(Variant::M1, 97);
  Rng rng(7);
  Model<double> m = build_model<double>(spec, rng, Variant::M1);
  for (auto& ref : param_refs(m))
    for (auto& v : ref.values) v = 0.0;
  std::vector<double> window(97);
  for (auto& v : window) v = rng.gaussian();
  auto probs = forward_eval(m, std::span<const double>(window));
  CHECK(probs[0] == doctest::Approx(0.5));
  CHECK(probs[1] == doctest::Approx(0.5));
}

TEST_CASE("eval forward is deterministic (dropout disabled)") {
  ModelSpec spec = make_spec(Variant::M2, 97);
  Rng rng(11);
  Model<double> m = build_model<double>(spec, rng, Variant::M2);
  std::vector<double> window(97);
  for (auto& v : window) v = rng.gaussian();
  auto p1 = forward_eval(m, std::span<const double>(window));
  auto p2 = forward_eval(m, std::span<const double>(window));
  CHECK(p1[0] == p2[0]);
  CHECK(p1[1] == p2[1]);
  CHECK((argmax_label(p1) == 0 || argmax_label(p1) == 1));
}

TEST_CASE("forward rejects a wrong-length window") {
  ModelSpec spec = make_spec(Variant::M2, 672);
  Rng rng(13);
  Model<double> m = build_model<double>(spec, rng, Variant::M2);
  std::vector<double> window(100);
  CHECK_THROWS_AS(forward_eval(m, std::span<const double>(window)), DimensionError);
}

TEST_CASE("weights round-trip bit-exactly through the file format") {
  ModelSpec spec = make_spec(Variant::M2, 97);
  Rng rng(17);
  Model<float> m = build_model<float>(spec, rng, Variant::M2, /*channel=*/3);
  // give the BN stats non-trivial values
  for (auto& bn : m.bn) {
    for (auto& v : bn.running_mean) v = static_cast<float>(rng.gaussian());
    for (auto& v : bn.running_var) v = static_cast<float>(0.5 + rng.uniform());
  }
  const auto path = temp_dir() / "roundtrip.lpw";
  save_weights(m, path);
  Model<float> loaded = load_weights<float>(path);

  CHECK(loaded.variant == Variant::M2);
  CHECK(loaded.channel_index == 3);
  std::vector<float> window(97);
  for (auto& v : window) v = static_cast<float>(rng.gaussian());
  auto p1 = forward_eval(m, std::span<const float>(window));
  auto p2 = forward_eval(loaded, std::span<const float>(window));
  CHECK(p1[0] == p2[0]);  // bit-identical
  CHECK(p1[1] == p2[1]);
}

TEST_CASE("truncated weight file raises a header error") {
  ModelSpec spec = make_spec(Variant::M1, 97);
  Rng rng(19);
  Model<float> m = build_model<float>(spec, rng, Variant::M1);
  const auto path = temp_dir() / "truncated.lpw";
  save_weights(m, path);
  const auto full = fs::file_size(path);
  fs::resize_file(path, full / 2);
  CHECK_THROWS_AS(load_weights<float>(path), WeightsHeaderError);
  fs::resize_file(path, 6);  // cuts into the magic
  CHECK_THROWS_AS(load_weights<float>(path), WeightsHeaderError);
}

TEST_CASE("loading against a mismatched spec raises a shape error") {
  Rng rng(23);
  Model<float> m = build_model<float>(make_spec(Variant::M2, 97), rng, Variant::M2);
  const auto path = temp_dir() / "m2.lpw";
  save_weights(m, path);
  const ModelSpec m3 = make_spec(Variant::M3, 97);
  CHECK_THROWS_AS(load_weights<float>(path, &m3), WeightsShapeError);
}

TEST_CASE("version and magic are checked") {
  Rng rng(29);
  Model<float> m = build_model<float>(make_spec(Variant::M1, 97), rng, Variant::M1);
  const auto path = temp_dir() / "tampered.lpw";
  save_weights(m, path);

  {  // bump the version field (bytes 8..11)
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const char v2[4] = {2, 0, 0, 0};
    f.write(v2, 4);
  }
  CHECK_THROWS_AS(load_weights<float>(path), WeightsVersionError);

  {  // corrupt the magic
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXXXXXX", 8);
  }
  CHECK_THROWS_AS(load_weights<float>(path), WeightsHeaderError);
}

TEST_CASE("full M2 model passes the finite-difference check") {
  // Small input keeps this fast; the acceptance suite runs the full-size one.
  ModelSpec spec = make_spec(Variant::M2, 97);
  Rng rng(31);
  Model<double> m = build_model<double>(spec, rng, Variant::M2);
  std::vector<std::vector<double>> windows(3, std::vector<double>(97));
  std::vector<int> labels = {0, 1, 0};
  for (auto& w : windows)
    for (auto& v : w) v = rng.gaussian();
  auto report = finite_difference_check(m, windows, labels);
  CHECK(report.passed(1e-4));
  for (const auto& e : report.entries) CHECK(e.max_rel_err < 1e-4);
}

TEST_SUITE_END();
