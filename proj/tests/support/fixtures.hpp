#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fls/feature_map.hpp"
#include "fls/model.hpp"
#include "fls/preprocess.hpp"
#include "fls/rng.hpp"
#include "fls/saliency.hpp"
#include "fls/tensor_ops.hpp"

namespace fls::testing {

/// Frames of a bright square sweeping over a dark background.
std::vector<RawFrame> moving_square_frames(int count, std::int64_t first_index = 0);

/// Centre of the square in frame `index`.
struct Point {
  int x;
  int y;
};
Point square_centre(std::int64_t index);

/// A few fixations per frame jittered around the square centre.
std::vector<FixationRecord> clustered_fixations(int frame_count, std::uint64_t seed, int per_frame = 3,
                                                std::int64_t first_index = 0);

/// Fixation map of one frame built directly from clustered fixations.
FixationMap frame_fixation_map(std::span<const FixationRecord> records, std::int64_t frame);

struct RecordingFixture {
  std::filesystem::path frames;     // PPM directory
  std::filesystem::path fixations;  // CSV
};

/// Writes a PPM directory and fixation CSV under `dir`. `out_of_range` extra
/// rows with coordinates outside the frame are appended to the CSV.
RecordingFixture write_recording(const std::filesystem::path& dir, int frame_count, std::uint64_t seed,
                                 int out_of_range = 0);

FeatureMap random_map(Rng& rng, int h, int w, int c, double lo = -1.0, double hi = 1.0);
FeatureMapD random_map_d(Rng& rng, int h, int w, int c, double lo = -1.0, double hi = 1.0);
ConvKernel random_kernel(Rng& rng, int out, int in, int k, int stride, int padding, bool bias);

/// Direct quadruple loop, accumulated in double.
FeatureMap naive_conv2d(const FeatureMap& input, const ConvKernel& kernel);

/// Adds each neuron's activation over its receptive-field rectangle, clipped
/// to the output, visiting neurons in row-major order.
SaliencyMap paint_receptive_fields(const AttentionMap& attention, const RFGeometry& geom, int output_size = 84);

/// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag);
  ~ScratchDir();
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

std::vector<char> read_bytes(const std::filesystem::path& path);

}  // namespace fls::testing
