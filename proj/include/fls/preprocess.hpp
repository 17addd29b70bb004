#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fls/feature_map.hpp"

namespace fls {

inline constexpr int kFrameWidth = 160;
inline constexpr int kFrameHeight = 210;
inline constexpr int kObservationSize = 84;
inline constexpr int kFramesPerGroup = 4;
inline constexpr int kStackDepth = 4;
inline constexpr int kRawFramesPerObservation = kFramesPerGroup * kStackDepth;

/// One 160x210 RGB frame, row-major, 3 bytes per pixel.
struct RawFrame {
  std::int64_t index = 0;
  std::vector<std::uint8_t> pixels;

  /// Throws ConfigError unless the pixel buffer holds exactly 160x210x3 bytes.
  void validate() const;
};

/// 84x84x4 network input. Channel c holds the c-th oldest processed frame.
struct ObservationStack {
  FeatureMap data;
  std::vector<std::int64_t> source_indices;    // 16 consecutive raw indices
  std::vector<std::int64_t> retained_indices;  // the 8 frames that were kept
};

struct FixationRecord {
  std::int64_t frame_index = 0;
  int x = 0;
  int y = 0;
};

/// Per-pixel fixation counts.
struct FixationMap {
  int width = kFrameWidth;
  int height = kFrameHeight;
  std::vector<std::uint32_t> counts;

  FixationMap() : counts(static_cast<std::size_t>(width) * height, 0) {}
  FixationMap(int w, int h) : width(w), height(h), counts(static_cast<std::size_t>(w) * h, 0) {}

  std::uint32_t& at(int y, int x) { return counts[static_cast<std::size_t>(y) * width + x]; }
  std::uint32_t at(int y, int x) const { return counts[static_cast<std::size_t>(y) * width + x]; }
  std::uint64_t total() const;
};

/// BT.601 luma, 210x160x1.
FeatureMap grayscale(const RawFrame& frame);

/// Bilinear 84x84 resample with half-pixel centres.
FeatureMap resize_84(const FeatureMap& gray);

/// Elementwise maximum; throws ConfigError on shape mismatch.
FeatureMap max_merge(const FeatureMap& a, const FeatureMap& b);

/// 84x84 grayscale of raw frames 4k+2 and 4k+3, merged by pixelwise max.
FeatureMap process_group(std::span<const RawFrame> group);

/// Non-overlapping observations from a raw stream: each consumes 16 raw
/// frames and keeps indices 4k+2, 4k+3 of every group of four. An
/// incomplete tail is dropped.
std::vector<ObservationStack> build_observations(std::span<const RawFrame> frames);

struct FixationAccumulation {
  FixationMap map;
  std::size_t rejected = 0;  // records outside the frame bounds
};

/// Raw indices kept by observation `n` of a stream starting at `first_index`.
std::vector<std::int64_t> retained_indices_for(std::int64_t first_index, std::size_t n);

/// Union of the fixations on an observation's retained frames.
FixationAccumulation fixations_for_observation(std::span<const FixationRecord> records,
                                               const ObservationStack& obs);

}  // namespace fls
