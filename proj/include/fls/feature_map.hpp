#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fls/error.hpp"

namespace fls {

/// Spatial extent of a grid.
struct Extent {
  int height = 0;
  int width = 0;

  friend bool operator==(const Extent&, const Extent&) = default;
};

/// Rank-3 grid stored row-major in (h, w, c) order.
///
/// The storage type is a template parameter so that verification code can
/// run the exact same kernels in double precision; production code uses the
/// 32-bit `FeatureMap` alias.
template <typename T>
class BasicFeatureMap {
 public:
  using value_type = T;

  BasicFeatureMap() = default;

  BasicFeatureMap(int height, int width, int channels, T fill = T{0})
      : height_(height), width_(width), channels_(channels) {
    if (height <= 0 || width <= 0 || channels <= 0) {
      throw ConfigError("feature map dimensions must be positive, got " +
                        std::to_string(height) + "x" + std::to_string(width) +
                        "x" + std::to_string(channels));
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  BasicFeatureMap(int height, int width, int channels, std::vector<T> data)
      : BasicFeatureMap(height, width, channels) {
    if (data.size() != data_.size()) {
      throw ConfigError("feature map data length " + std::to_string(data.size()) +
                        " does not match " + std::to_string(data_.size()));
    }
    data_ = std::move(data);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  Extent extent() const { return {height_, width_}; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int h, int w, int c) const {
    return (static_cast<std::size_t>(h) * width_ + w) * channels_ + c;
  }

  T& at(int h, int w, int c = 0) { return data_[index(h, w, c)]; }
  const T& at(int h, int w, int c = 0) const { return data_[index(h, w, c)]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_shape(const BasicFeatureMap& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  std::string shape_string() const {
    return std::to_string(height_) + "x" + std::to_string(width_) + "x" +
           std::to_string(channels_);
  }

  template <typename U>
  BasicFeatureMap<U> cast() const {
    BasicFeatureMap<U> out(height_, width_, channels_);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      out.storage()[i] = static_cast<U>(data_[i]);
    }
    return out;
  }

  friend bool operator==(const BasicFeatureMap&, const BasicFeatureMap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using FeatureMap = BasicFeatureMap<float>;
using FeatureMapD = BasicFeatureMap<double>;

/// Single-channel non-negative map produced by an attention module.
using AttentionMap = FeatureMap;

}  // namespace fls
