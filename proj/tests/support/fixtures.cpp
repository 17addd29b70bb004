#include "fixtures.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include <unistd.h>

#include "fls/frame_io.hpp"

namespace fls::testing {

namespace fs = std::filesystem;

namespace {
constexpr int kSquare = 14;
}

Point square_centre(std::int64_t index) {
  const double t = static_cast<double>(index);
  const double x = 80.0 + 55.0 * std::sin(0.21 * t);
  const double y = 105.0 + 75.0 * std::sin(0.13 * t + 0.7);
  return {static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y))};
}

std::vector<RawFrame> moving_square_frames(int count, std::int64_t first_index) {
  std::vector<RawFrame> frames;
  for (int i = 0; i < count; ++i) {
    RawFrame f{first_index + i, std::vector<std::uint8_t>(static_cast<std::size_t>(kFrameWidth) * kFrameHeight * 3)};
    const Point c = square_centre(f.index);
    for (int y = 0; y < kFrameHeight; ++y) {
      for (int x = 0; x < kFrameWidth; ++x) {
        const bool inside = std::abs(x - c.x) <= kSquare / 2 && std::abs(y - c.y) <= kSquare / 2;
        auto* px = &f.pixels[(static_cast<std::size_t>(y) * kFrameWidth + x) * 3];
        px[0] = inside ? 240 : static_cast<std::uint8_t>(20 + (x + y) % 7);
        px[1] = inside ? 220 : 30;
        px[2] = inside ? 60 : 40;
      }
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<FixationRecord> clustered_fixations(int frame_count, std::uint64_t seed, int per_frame,
                                                std::int64_t first_index) {
  Rng rng(seed);
  std::vector<FixationRecord> records;
  for (int i = 0; i < frame_count; ++i) {
    const std::int64_t index = first_index + i;
    const Point c = square_centre(index);
    for (int k = 0; k < per_frame; ++k) {
      const int x = std::clamp(c.x + static_cast<int>(rng.below(9)) - 4, 0, kFrameWidth - 1);
      const int y = std::clamp(c.y + static_cast<int>(rng.below(9)) - 4, 0, kFrameHeight - 1);
      records.push_back({index, x, y});
    }
  }
  return records;
}

FixationMap frame_fixation_map(std::span<const FixationRecord> records, std::int64_t frame) {
  FixationMap map;
  for (const auto& r : records)
    if (r.frame_index == frame) ++map.at(r.y, r.x);
  return map;
}

RecordingFixture write_recording(const fs::path& dir, int frame_count, std::uint64_t seed, int out_of_range) {
  RecordingFixture fx{dir / "frames", dir / "fixations.csv"};
  fs::create_directories(fx.frames);
  for (const auto& f : moving_square_frames(frame_count)) {
    write_ppm(fx.frames / (std::to_string(f.index) + ".ppm"), f);
  }
  auto records = clustered_fixations(frame_count, seed);
  for (int k = 0; k < out_of_range; ++k) {
    records.push_back({static_cast<std::int64_t>(2 + 4 * k) % std::max(frame_count, 1), kFrameWidth + 5 + k, 10});
  }
  write_fixation_csv(fx.fixations, records);
  return fx;
}

FeatureMap random_map(Rng& rng, int h, int w, int c, double lo, double hi) {
  FeatureMap m(h, w, c);
  for (auto& v : m.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return m;
}

FeatureMapD random_map_d(Rng& rng, int h, int w, int c, double lo, double hi) {
  FeatureMapD m(h, w, c);
  for (auto& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

ConvKernel random_kernel(Rng& rng, int out, int in, int k, int stride, int padding, bool bias) {
  ConvKernel kernel = ConvKernel::zeros(out, in, k, stride, padding, bias);
  for (auto& v : kernel.weights) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  if (kernel.bias)
    for (auto& v : *kernel.bias) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return kernel;
}

FeatureMap naive_conv2d(const FeatureMap& input, const ConvKernel& kernel) {
  const int oh = (input.height() + 2 * kernel.padding - kernel.kernel_h) / kernel.stride + 1;
  const int ow = (input.width() + 2 * kernel.padding - kernel.kernel_w) / kernel.stride + 1;
  FeatureMap out(oh, ow, kernel.out_channels);
  for (int co = 0; co < kernel.out_channels; ++co) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = kernel.bias ? (*kernel.bias)[co] : 0.0;
        for (int ci = 0; ci < kernel.in_channels; ++ci) {
          for (int ky = 0; ky < kernel.kernel_h; ++ky) {
            for (int kx = 0; kx < kernel.kernel_w; ++kx) {
              const int iy = oy * kernel.stride - kernel.padding + ky;
              const int ix = ox * kernel.stride - kernel.padding + kx;
              if (iy < 0 || ix < 0 || iy >= input.height() || ix >= input.width()) continue;
              acc += static_cast<double>(kernel.w(co, ci, ky, kx)) * input.at(iy, ix, ci);
            }
          }
        }
        out.at(oy, ox, co) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

SaliencyMap paint_receptive_fields(const AttentionMap& attention, const RFGeometry& geom, int output_size) {
  std::vector<double> acc(static_cast<std::size_t>(output_size) * output_size, 0.0);
  for (int r = 0; r < attention.height(); ++r) {
    for (int c = 0; c < attention.width(); ++c) {
      const double a = attention.at(r, c, 0);
      const int y0 = std::max(0, r * geom.stride - geom.padding);
      const int y1 = std::min(output_size, r * geom.stride - geom.padding + geom.kernel);
      const int x0 = std::max(0, c * geom.stride - geom.padding);
      const int x1 = std::min(output_size, c * geom.stride - geom.padding + geom.kernel);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) acc[static_cast<std::size_t>(y) * output_size + x] += a;
    }
  }
  SaliencyMap out(output_size, output_size, 1);
  for (std::size_t i = 0; i < acc.size(); ++i) out.data()[i] = static_cast<float>(acc[i]);
  return out;
}

ScratchDir::ScratchDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("fls_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

ScratchDir::~ScratchDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fls::testing
