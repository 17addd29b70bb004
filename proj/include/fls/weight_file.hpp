#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fls/model.hpp"

namespace fls {

/// One tensor of a weight file.
struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

// Binary layout, all integers little-endian:
//   "FLSW" | u32 version (1) | u32 tensor count
//   per tensor: u16 name length | UTF-8 name | u8 ndim | u32 dims[ndim] | f32 payload
inline constexpr std::uint32_t kWeightFileVersion = 1;

void write_weight_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_weight_tensors(std::istream& in);

void save_weights(Model& model, const std::string& path);

/// Replaces every parameter of `model` with the tensor of the same name.
/// Missing or extra names and shape mismatches raise ConfigError; malformed
/// or truncated files raise IoError.
Model load_weights(Model model, const std::vector<NamedTensor>& tensors);
Model load_weights(Model model, const std::string& path);

std::vector<NamedTensor> model_tensors(Model& model);

}  // namespace fls
