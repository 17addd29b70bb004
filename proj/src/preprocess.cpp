#include "fls/preprocess.hpp"

#include <algorithm>
#include <numeric>

#include "fls/tensor_ops.hpp"

namespace fls {

void RawFrame::validate() const {
  const std::size_t expected = static_cast<std::size_t>(kFrameWidth) * kFrameHeight * 3;
  if (pixels.size() != expected) {
    throw ConfigError("raw frame " + std::to_string(index) + " has " + std::to_string(pixels.size()) +
                      " bytes, expected " + std::to_string(expected));
  }
}

std::uint64_t FixationMap::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

FeatureMap grayscale(const RawFrame& frame) {
  frame.validate();
  FeatureMap out(kFrameHeight, kFrameWidth, 1);
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const double r = frame.pixels[3 * i];
    const double g = frame.pixels[3 * i + 1];
    const double b = frame.pixels[3 * i + 2];
    dst[i] = static_cast<float>(0.299 * r + 0.587 * g + 0.114 * b);
  }
  return out;
}

FeatureMap resize_84(const FeatureMap& gray) {
  return resize_bilinear(gray, kObservationSize, kObservationSize);
}

FeatureMap max_merge(const FeatureMap& a, const FeatureMap& b) {
  if (!a.same_shape(b)) {
    throw ConfigError("max_merge: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
  FeatureMap out = a;
  auto dst = out.data();
  const auto src = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(dst[i], src[i]);
  return out;
}

FeatureMap process_group(std::span<const RawFrame> group) {
  if (group.size() != kFramesPerGroup) throw ConfigError("process_group needs exactly 4 frames");
  return max_merge(resize_84(grayscale(group[2])), resize_84(grayscale(group[3])));
}

std::vector<ObservationStack> build_observations(std::span<const RawFrame> frames) {
  std::vector<ObservationStack> out;
  const std::size_t count = frames.size() / kRawFramesPerObservation;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const auto chunk = frames.subspan(n * kRawFramesPerObservation, kRawFramesPerObservation);
    ObservationStack obs;
    obs.data = FeatureMap(kObservationSize, kObservationSize, kStackDepth);
    for (int c = 0; c < kStackDepth; ++c) {
      const auto group = chunk.subspan(static_cast<std::size_t>(c) * kFramesPerGroup, kFramesPerGroup);
      const FeatureMap processed = process_group(group);
      for (int y = 0; y < kObservationSize; ++y)
        for (int x = 0; x < kObservationSize; ++x)
          obs.data.at(y, x, c) = processed.at(y, x, 0) / 255.0f;
      for (int k = 0; k < kFramesPerGroup; ++k) {
        obs.source_indices.push_back(group[k].index);
        if (k >= 2) obs.retained_indices.push_back(group[k].index);
      }
    }
    out.push_back(std::move(obs));
  }
  return out;
}

std::vector<std::int64_t> retained_indices_for(std::int64_t first_index, std::size_t n) {
  std::vector<std::int64_t> out;
  const std::int64_t base = first_index + static_cast<std::int64_t>(n) * kRawFramesPerObservation;
  for (int g = 0; g < kStackDepth; ++g) {
    out.push_back(base + g * kFramesPerGroup + 2);
    out.push_back(base + g * kFramesPerGroup + 3);
  }
  return out;
}

FixationAccumulation fixations_for_observation(std::span<const FixationRecord> records,
                                               const ObservationStack& obs) {
  FixationAccumulation acc;
  for (const auto& r : records) {
    if (std::find(obs.retained_indices.begin(), obs.retained_indices.end(), r.frame_index) ==
        obs.retained_indices.end())
      continue;
    if (r.x < 0 || r.x >= kFrameWidth || r.y < 0 || r.y >= kFrameHeight) {
      ++acc.rejected;
      continue;
    }
    ++acc.map.at(r.y, r.x);
  }
  return acc;
}

}  // namespace fls
