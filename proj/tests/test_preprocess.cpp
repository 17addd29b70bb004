#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "fls/error.hpp"
#include "fls/frame_io.hpp"
#include "fls/preprocess.hpp"
#include "support/fixtures.hpp"

using namespace fls;
using fls::testing::moving_square_frames;
using fls::testing::ScratchDir;

namespace {

RawFrame solid(std::int64_t index, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  RawFrame f{index, std::vector<std::uint8_t>(static_cast<std::size_t>(kFrameWidth) * kFrameHeight * 3)};
  for (std::size_t i = 0; i < f.pixels.size(); i += 3) {
    f.pixels[i] = r;
    f.pixels[i + 1] = g;
    f.pixels[i + 2] = b;
  }
  return f;
}

std::vector<RawFrame> stream(int count) {
  std::vector<RawFrame> frames;
  for (int i = 0; i < count; ++i) frames.push_back(solid(i, static_cast<std::uint8_t>(i * 7), 10, 200));
  return frames;
}

}  // namespace

TEST(Grayscale, Bt601Values) {
  EXPECT_FLOAT_EQ(grayscale(solid(0, 255, 255, 255)).at(0, 0, 0), 255.0f);
  EXPECT_NEAR(grayscale(solid(0, 255, 0, 0)).at(5, 5, 0), 76.245, 1e-4);
  EXPECT_EQ(grayscale(solid(0, 0, 0, 0)).at(100, 100, 0), 0.0f);
  const auto g = grayscale(solid(0, 1, 2, 3));
  EXPECT_EQ(g.shape_string(), "210x160x1");
}

TEST(Grayscale, RejectsWrongFrameSize) {
  RawFrame f{0, std::vector<std::uint8_t>(100)};
  EXPECT_THROW(grayscale(f), ConfigError);
}

TEST(Resize84, ConstantStaysConstant) {
  const auto r = resize_84(FeatureMap(kFrameHeight, kFrameWidth, 1, 42.5f));
  EXPECT_EQ(r.shape_string(), "84x84x1");
  for (float v : r.data()) EXPECT_FLOAT_EQ(v, 42.5f);
}

TEST(Resize84, BoundedByInputRange) {
  Rng rng(3);
  const auto src = fls::testing::random_map(rng, kFrameHeight, kFrameWidth, 1, 10.0, 200.0);
  const auto [lo, hi] = std::minmax_element(src.data().begin(), src.data().end());
  const auto resized = resize_84(src);
  for (float v : resized.data()) {
    EXPECT_GE(v, *lo);
    EXPECT_LE(v, *hi);
  }
}

TEST(Resize84, HorizontalRampStaysLinear) {
  FeatureMap ramp(kFrameHeight, kFrameWidth, 1);
  for (int y = 0; y < kFrameHeight; ++y)
    for (int x = 0; x < kFrameWidth; ++x) ramp.at(y, x, 0) = static_cast<float>(x);
  const auto r = resize_84(ramp);
  const double scale = static_cast<double>(kFrameWidth) / kObservationSize;
  // Away from the clamped border columns, sample x maps to source (x + 0.5) * scale - 0.5.
  for (int y = 0; y < 84; ++y)
    for (int x = 1; x < 83; ++x) ASSERT_NEAR(r.at(y, x, 0), (x + 0.5) * scale - 0.5, 1e-3) << x;
}

TEST(MaxMerge, Properties) {
  Rng rng(4);
  const auto a = fls::testing::random_map(rng, 84, 84, 1, 0.0, 255.0);
  const auto b = fls::testing::random_map(rng, 84, 84, 1, 0.0, 255.0);
  EXPECT_EQ(max_merge(a, a), a);
  EXPECT_EQ(max_merge(a, FeatureMap(84, 84, 1)), a);
  EXPECT_EQ(max_merge(a, b), max_merge(b, a));
  EXPECT_THROW(max_merge(a, FeatureMap(84, 83, 1)), ConfigError);
}

TEST(BuildObservations, SixteenFrames) {
  const auto frames = stream(16);
  const auto obs = build_observations(frames);
  ASSERT_EQ(obs.size(), 1u);
  std::vector<std::int64_t> all(16);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(obs[0].source_indices, all);
  EXPECT_EQ(obs[0].retained_indices, (std::vector<std::int64_t>{2, 3, 6, 7, 10, 11, 14, 15}));
  EXPECT_EQ(obs[0].data.shape_string(), "84x84x4");
}

TEST(BuildObservations, ChannelOrderAndScaling) {
  // Frame i is a constant gray; each channel keeps the brighter of 4c+2, 4c+3.
  const auto frames = stream(16);
  const auto obs = build_observations(frames).at(0);
  for (int c = 0; c < 4; ++c) {
    const float want = grayscale(frames[4 * c + 3]).at(0, 0, 0) / 255.0f;
    EXPECT_FLOAT_EQ(obs.data.at(40, 40, c), want) << c;
  }
  for (float v : obs.data.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(BuildObservations, TailDropped) {
  EXPECT_EQ(build_observations(stream(31)).size(), 1u);
  EXPECT_EQ(build_observations(stream(15)).size(), 0u);
  EXPECT_EQ(build_observations(stream(47)).size(), 2u);
}

TEST(BuildObservations, IdenticalFramesGiveIdenticalChannels) {
  std::vector<RawFrame> frames;
  for (int i = 0; i < 32; ++i) frames.push_back(moving_square_frames(1).front());
  for (int i = 0; i < 32; ++i) frames[i].index = i;
  const auto obs = build_observations(frames);
  ASSERT_EQ(obs.size(), 2u);
  for (const auto& o : obs)
    for (int y = 0; y < 84; ++y)
      for (int x = 0; x < 84; ++x)
        for (int c = 1; c < 4; ++c) ASSERT_EQ(o.data.at(y, x, c), o.data.at(y, x, 0));
}

TEST(BuildObservations, RetainedIndicesPartitionTheStream) {
  const auto frames = stream(64);
  const auto obs = build_observations(frames);
  std::multiset<std::int64_t> seen;
  for (std::size_t n = 0; n < obs.size(); ++n) {
    EXPECT_EQ(obs[n].retained_indices, retained_indices_for(0, n));
    seen.insert(obs[n].retained_indices.begin(), obs[n].retained_indices.end());
  }
  for (std::int64_t i = 0; i < 64; ++i) EXPECT_EQ(seen.count(i), (i % 4 >= 2) ? 1u : 0u) << i;
}

TEST(FixationsForObservation, Membership) {
  ObservationStack obs;
  obs.retained_indices = retained_indices_for(0, 0);
  EXPECT_EQ(fixations_for_observation({}, obs).map.total(), 0u);

  const std::vector<FixationRecord> records{{2, 10, 10}, {7, 20, 30}, {15, 20, 30}, {0, 5, 5}, {12, 6, 6}};
  const auto acc = fixations_for_observation(records, obs);
  EXPECT_EQ(acc.map.total(), 3u);
  EXPECT_EQ(acc.map.at(30, 20), 2u);
  EXPECT_EQ(acc.map.at(10, 10), 1u);
  EXPECT_EQ(acc.map.at(5, 5), 0u);
  EXPECT_EQ(acc.rejected, 0u);
}

TEST(FixationsForObservation, OutOfBoundsRejected) {
  ObservationStack obs;
  obs.retained_indices = retained_indices_for(0, 0);
  const std::vector<FixationRecord> records{{2, -1, 10}, {3, 160, 0}, {6, 0, 210}, {6, 159, 209}};
  const auto acc = fixations_for_observation(records, obs);
  EXPECT_EQ(acc.rejected, 3u);
  EXPECT_EQ(acc.map.total(), 1u);
}

TEST(FrameIo, PpmAndRawStreamRoundTrip) {
  ScratchDir dir("frames");
  const auto frames = moving_square_frames(5, 100);
  std::filesystem::create_directories(dir.path() / "ppm");
  for (const auto& f : frames) write_ppm(dir.path() / "ppm" / (std::to_string(f.index) + ".ppm"), f);
  const auto from_dir = read_frames(dir.path() / "ppm");
  ASSERT_EQ(from_dir.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(from_dir[i].index, frames[i].index);
    EXPECT_EQ(from_dir[i].pixels, frames[i].pixels);
  }
  write_raw_stream(dir.path() / "stream.rgb", frames);
  const auto from_raw = read_frames(dir.path() / "stream.rgb");
  ASSERT_EQ(from_raw.size(), 5u);
  EXPECT_EQ(from_raw[3].index, 103);
  EXPECT_EQ(from_raw[3].pixels, frames[3].pixels);
}

TEST(FrameIo, Errors) {
  ScratchDir dir("frameio");
  EXPECT_THROW(read_frames(dir.path() / "missing"), IoError);
  {
    std::ofstream out(dir.path() / "bad.ppm");
    out << "P6\n10 10\n255\n";
  }
  EXPECT_THROW(read_ppm(dir.path() / "bad.ppm", 0), IoError);
  {
    std::ofstream out(dir.path() / "fix.csv");
    out << "frame_index,x,y\n1,2,3\n4,five,6\n";
  }
  EXPECT_THROW(read_fixation_csv(dir.path() / "fix.csv"), IoError);
}

TEST(FrameIo, FixationCsvRoundTrip) {
  ScratchDir dir("fixcsv");
  const std::vector<FixationRecord> records{{0, 1, 2}, {17, 159, 209}, {3, -4, 500}};
  write_fixation_csv(dir.path() / "f.csv", records);
  const auto back = read_fixation_csv(dir.path() / "f.csv");
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(back[i].frame_index, records[i].frame_index);
    EXPECT_EQ(back[i].x, records[i].x);
    EXPECT_EQ(back[i].y, records[i].y);
  }
}
