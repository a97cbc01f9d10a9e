#include "deepaer/model.hpp"

#include <stdexcept>

namespace deepaer {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::M1: return "M1";
    case Variant::M2: return "M2";
    case Variant::M3: return "M3";
    case Variant::M4: return "M4";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "M1") return Variant::M1;
  if (name == "M2") return Variant::M2;
  if (name == "M3") return Variant::M3;
  if (name == "M4") return Variant::M4;
  throw std::invalid_argument("unknown model variant: " + name);
}

ModelSpec make_spec(Variant v, int input_length) {
  ModelSpec s;
  s.input_length = input_length;
  switch (v) {
    case Variant::M1:
      s.fc1_units = 20;
      s.dropout_before_fc2 = false;
      break;
    case Variant::M2:
      s.fc1_units = 20;
      s.dropout_before_fc2 = true;
      break;
    case Variant::M3:
      s.fc1_units = 40;
      s.dropout_before_fc2 = false;
      break;
    case Variant::M4:
      s.fc1_units = 40;
      s.dropout_before_fc2 = true;
      break;
  }
  return s;
}

void validate_spec(const ModelSpec& spec) {
  if (spec.conv_blocks.empty()) throw DimensionError("spec: at least one conv block required");
  if (spec.n_classes != 2) throw DimensionError("spec: n_classes must be 2");
  if (spec.fc1_units < 1) throw DimensionError("spec: fc1_units must be >= 1");
  if (spec.dropout_p < 0.0 || spec.dropout_p >= 1.0)
    throw DimensionError("spec: dropout_p must be in [0, 1)");
  if (spec.input_length < 1) throw DimensionError("spec: input_length must be >= 1");
  int prev = 0;
  for (std::size_t b = 0; b < spec.conv_blocks.size(); ++b) {
    const auto& blk = spec.conv_blocks[b];
    if (blk.out_channels < 1 || blk.receptive_field < 1 || blk.stride < 1)
      throw DimensionError("spec: conv block " + std::to_string(b + 1) + " has invalid dimensions");
    if (b > 0 && blk.out_channels >= prev)
      throw DimensionError("spec: conv chain must be pyramidal (strictly decreasing kernel counts)");
    prev = blk.out_channels;
  }
}

std::vector<LayerShape> infer_shapes(const ModelSpec& spec) {
  std::vector<LayerShape> shapes;
  int length = spec.input_length;
  int channels = 1;
  for (std::size_t b = 0; b < spec.conv_blocks.size(); ++b) {
    const auto& blk = spec.conv_blocks[b];
    if (length < blk.receptive_field)
      throw DimensionError("infer_shapes: conv block " + std::to_string(b + 1) +
                           " needs input length >= " + std::to_string(blk.receptive_field) +
                           ", got " + std::to_string(length));
    length = conv_output_length(length, blk.receptive_field, blk.stride);
    channels = blk.out_channels;
    shapes.push_back({channels, length});
  }
  return shapes;
}

int flatten_dim(const ModelSpec& spec) {
  const auto shapes = infer_shapes(spec);
  const auto& last = shapes.back();
  return last.channels * last.length;
}

long long count_params(const ModelSpec& spec) {
  validate_spec(spec);
  long long total = 0;
  int in_c = 1;
  for (const auto& blk : spec.conv_blocks) {
    total += static_cast<long long>(blk.out_channels) * blk.receptive_field * in_c;  // weights
    total += blk.out_channels;                                                       // biases
    if (spec.batchnorm_affine) total += 2LL * blk.out_channels;                      // gamma, beta
    in_c = blk.out_channels;
  }
  const long long flat = flatten_dim(spec);
  total += flat * spec.fc1_units + spec.fc1_units;
  total += static_cast<long long>(spec.fc1_units) * spec.n_classes + spec.n_classes;
  return total;
}

}  // namespace deepaer
