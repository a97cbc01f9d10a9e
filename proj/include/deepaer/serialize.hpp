#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "deepaer/errors.hpp"
#include "deepaer/model.hpp"

namespace deepaer {

// Weight file layout:
//   8-byte magic "LPCNNWT\0" | u32 version (LE) | u32 header length (LE)
//   | JSON header | named arrays, raw little-endian reals in header order.
// The header echoes the model spec, variant, channel id and value dtype so a
// file is self-describing and loads never guess shapes.
inline constexpr char kWeightsMagic[8] = {'L', 'P', 'C', 'N', 'N', 'W', 'T', '\0'};
inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

template <typename T>
const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else return "f64";
}

template <typename T>
void append_array_entry(nlohmann::json& arrays, const std::string& name, std::size_t count) {
  arrays.push_back({{"name", name}, {"count", count}});
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw WeightsHeaderError("weight file truncated in header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

// Values are written byte-for-byte; on the (ubiquitous) little-endian hosts
// this is the documented format directly.
template <typename T>
void write_values(std::ostream& os, const std::vector<T>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
void read_values(std::istream& is, std::vector<T>& v) {
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  if (!is) throw WeightsHeaderError("weight file truncated in array data");
}

template <typename T>
nlohmann::json spec_to_json(const ModelSpec& spec) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : spec.conv_blocks)
    blocks.push_back({b.out_channels, b.receptive_field, b.stride});
  return {{"conv_blocks", blocks},
          {"fc1_units", spec.fc1_units},
          {"dropout_before_fc2", spec.dropout_before_fc2},
          {"dropout_p", spec.dropout_p},
          {"n_classes", spec.n_classes},
          {"input_length", spec.input_length},
          {"batchnorm_affine", spec.batchnorm_affine}};
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  spec.conv_blocks.clear();
  for (const auto& b : j.at("conv_blocks"))
    spec.conv_blocks.push_back({b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>()});
  spec.fc1_units = j.at("fc1_units").get<int>();
  spec.dropout_before_fc2 = j.at("dropout_before_fc2").get<bool>();
  spec.dropout_p = j.at("dropout_p").get<double>();
  spec.n_classes = j.at("n_classes").get<int>();
  spec.input_length = j.at("input_length").get<int>();
  spec.batchnorm_affine = j.at("batchnorm_affine").get<bool>();
  return spec;
}

inline bool specs_equal(const ModelSpec& a, const ModelSpec& b) {
  if (a.conv_blocks.size() != b.conv_blocks.size()) return false;
  for (std::size_t i = 0; i < a.conv_blocks.size(); ++i) {
    if (a.conv_blocks[i].out_channels != b.conv_blocks[i].out_channels ||
        a.conv_blocks[i].receptive_field != b.conv_blocks[i].receptive_field ||
        a.conv_blocks[i].stride != b.conv_blocks[i].stride)
      return false;
  }
  return a.fc1_units == b.fc1_units && a.dropout_before_fc2 == b.dropout_before_fc2 &&
         a.n_classes == b.n_classes && a.input_length == b.input_length &&
         a.batchnorm_affine == b.batchnorm_affine;
}

// Arrays in file order: per block weights/bias plus BN running stats, then
// the FC pairs.
template <typename T, typename Fn>
void for_each_stored_array(Model<T>& m, Fn&& fn) {
  for (std::size_t b = 0; b < m.conv.size(); ++b) {
    const std::string tag = std::to_string(b + 1);
    fn("conv" + tag + ".weights", m.conv[b].weights);
    fn("conv" + tag + ".bias", m.conv[b].biases);
    fn("bn" + tag + ".running_mean", m.bn[b].running_mean);
    fn("bn" + tag + ".running_var", m.bn[b].running_var);
    if (m.bn[b].affine) {
      fn("bn" + tag + ".gamma", m.bn[b].gamma);
      fn("bn" + tag + ".beta", m.bn[b].beta);
    }
  }
  fn("fc1.weights", m.fc1.w);
  fn("fc1.bias", m.fc1.b);
  fn("fc2.weights", m.fc2.w);
  fn("fc2.bias", m.fc2.b);
}

}  // namespace detail

template <typename T>
void save_weights(Model<T>& model, const std::filesystem::path& path) {
  nlohmann::json arrays = nlohmann::json::array();
  detail::for_each_stored_array(model, [&](const std::string& name, std::vector<T>& v) {
    detail::append_array_entry<T>(arrays, name, v.size());
  });
  nlohmann::json header = {{"dtype", detail::dtype_name<T>()},
                           {"variant", variant_name(model.variant)},
                           {"channel_index", model.channel_index},
                           {"spec", detail::spec_to_json<T>(model.spec)},
                           {"weight_layout", "out,in,tap"},
                           {"byte_order", "little"},
                           {"arrays", arrays}};
  const std::string hdr = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw WeightsError("cannot open weight file for writing: " + path.string());
  os.write(kWeightsMagic, 8);
  detail::write_u32(os, kWeightsVersion);
  detail::write_u32(os, static_cast<std::uint32_t>(hdr.size()));
  os.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  detail::for_each_stored_array(model, [&](const std::string&, std::vector<T>& v) {
    detail::write_values(os, v);
  });
  if (!os) throw WeightsError("short write to weight file: " + path.string());
}

template <typename T>
Model<T> load_weights(const std::filesystem::path& path, const ModelSpec* expected = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw WeightsError("cannot open weight file: " + path.string());

  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kWeightsMagic, 8) != 0)
    throw WeightsHeaderError("bad magic in weight file: " + path.string());
  const std::uint32_t version = detail::read_u32(is);
  if (version != kWeightsVersion)
    throw WeightsVersionError("unsupported weight file version " + std::to_string(version));
  const std::uint32_t hdr_len = detail::read_u32(is);
  std::string hdr(hdr_len, '\0');
  is.read(hdr.data(), hdr_len);
  if (!is) throw WeightsHeaderError("weight file truncated in header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hdr);
  } catch (const nlohmann::json::exception& e) {
    throw WeightsHeaderError(std::string("corrupt weight file header: ") + e.what());
  }

  const std::string dtype = header.at("dtype").get<std::string>();
  if (dtype != detail::dtype_name<T>()) {
    // Widening f32 -> f64 is exact and allowed; anything else is refused.
    if (!(dtype == "f32" && std::is_same_v<T, double>))
      throw WeightsShapeError("weight file dtype " + dtype + " does not fit requested precision " +
                              detail::dtype_name<T>());
  }

  ModelSpec spec = detail::spec_from_json(header.at("spec"));
  if (expected && !detail::specs_equal(spec, *expected))
    throw WeightsShapeError("weight file spec does not match the requested model spec");

  Model<T> m;
  m.spec = spec;
  m.variant = variant_from_name(header.at("variant").get<std::string>());
  m.channel_index = header.at("channel_index").get<int>();
  int in_c = 1;
  for (const auto& blk : spec.conv_blocks) {
    m.conv.emplace_back(blk.out_channels, in_c, blk.receptive_field, blk.stride);
    m.bn.emplace_back(blk.out_channels, spec.batchnorm_affine);
    in_c = blk.out_channels;
  }
  m.fc1 = FcWeights<T>(flatten_dim(spec), spec.fc1_units);
  m.fc2 = FcWeights<T>(spec.fc1_units, spec.n_classes);

  // Validate the manifest against the constructed shapes, then read.
  std::vector<std::pair<std::string, std::size_t>> declared;
  for (const auto& a : header.at("arrays"))
    declared.emplace_back(a.at("name").get<std::string>(), a.at("count").get<std::size_t>());

  std::size_t idx = 0;
  auto check = [&](const std::string& name, std::size_t count) {
    if (idx >= declared.size() || declared[idx].first != name || declared[idx].second != count)
      throw WeightsShapeError("weight file array mismatch at '" + name + "'");
    ++idx;
  };
  detail::for_each_stored_array(m, [&](const std::string& name, std::vector<T>& v) {
    check(name, v.size());
  });
  if (idx != declared.size()) throw WeightsShapeError("weight file declares extra arrays");

  if (dtype == detail::dtype_name<T>()) {
    detail::for_each_stored_array(m, [&](const std::string&, std::vector<T>& v) {
      detail::read_values(is, v);
    });
  } else {  // f32 widened into f64
    detail::for_each_stored_array(m, [&](const std::string&, std::vector<T>& v) {
      std::vector<float> tmp(v.size());
      detail::read_values(is, tmp);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(tmp[i]);
    });
  }
  return m;
}

}  // namespace deepaer
