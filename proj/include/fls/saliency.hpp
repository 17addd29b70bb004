#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "fls/feature_map.hpp"
#include "fls/model.hpp"

namespace fls {

/// Input-resolution non-negative saliency grid (single channel).
using SaliencyMap = FeatureMap;

/// Receptive-field geometry of a conv stack as a single equivalent layer.
struct RFGeometry {
  int kernel = 1;
  int stride = 1;
  int padding = 0;

  friend bool operator==(const RFGeometry&, const RFGeometry&) = default;
};

/// Folds layers (input first):
///   S = prod s_i,  K = 1 + sum (k_i - 1) prod_{j<i} s_j,  P = sum p_i prod_{j<i} s_j
RFGeometry compose(std::span<const RFGeometry> layers);

/// Geometry of the conv layers between the network input and attention tap
/// `tap` of `config`, including the 1-pixel input pad when configured.
/// Throws ConfigError if `config` has no module at `tap`.
RFGeometry compose_geometry(const ModelConfig& config, int tap);

/// True if a conv with `geom` maps an `input`-sized axis to exactly `cells` cells.
bool geometry_fits(const RFGeometry& geom, int cells, int input);

/// Paints every attention cell's receptive field with its activation:
/// a transposed convolution with an all-ones K x K kernel, stride S and
/// padding P, cropped to `output_size` x `output_size`.
SaliencyMap render(const AttentionMap& attention, const RFGeometry& geom, int output_size = 84);

/// Sum of the renderings of every map.
SaliencyMap render_multi(std::span<const TaggedAttention> maps, const ModelConfig& config);

/// Bilinear upscale of an 84x84 map to the 160x210 frame.
SaliencyMap upscale_to_frame(const SaliencyMap& saliency);

/// Little-endian float32 grid plus `<path>.json` sidecar {"width", "height"}.
void write_saliency_raw(const std::filesystem::path& path, const SaliencyMap& map);
SaliencyMap read_saliency_raw(const std::filesystem::path& path);

/// 8-bit PGM (P5) after min-max scaling; a constant map is written as zeros.
void write_saliency_pgm(const std::filesystem::path& path, const SaliencyMap& map);

}  // namespace fls
