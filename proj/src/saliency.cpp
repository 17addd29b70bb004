#include "fls/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "fls/preprocess.hpp"
#include "fls/tensor_ops.hpp"

namespace fls {

namespace fs = std::filesystem;

RFGeometry compose(std::span<const RFGeometry> layers) {
  RFGeometry out{1, 1, 0};
  for (const auto& l : layers) {
    out.kernel += (l.kernel - 1) * out.stride;
    out.padding += l.padding * out.stride;
    out.stride *= l.stride;
  }
  return out;
}

RFGeometry compose_geometry(const ModelConfig& config, int tap) {
  const auto taps = config.attention_taps();
  if (std::find(taps.begin(), taps.end(), tap) == taps.end()) {
    throw ConfigError("model has no attention module at " + tap_tag(tap));
  }
  std::vector<RFGeometry> layers;
  if (config.pad_input_1px) layers.push_back({1, 1, 1});
  const auto block = block_layers(config.block);
  for (int i = 0; i < tap; ++i) layers.push_back({block[i].kernel, block[i].stride, block[i].padding});
  return compose(layers);
}

bool geometry_fits(const RFGeometry& geom, int cells, int input) {
  return conv_output_size(input, geom.kernel, geom.stride, geom.padding) == cells;
}

SaliencyMap render(const AttentionMap& attention, const RFGeometry& geom, int output_size) {
  if (attention.channels() != 1) throw ConfigError("render: attention map must have one channel");
  if (!geometry_fits(geom, attention.height(), output_size) ||
      !geometry_fits(geom, attention.width(), output_size)) {
    throw ConfigError("render: " + std::to_string(attention.height()) + "x" +
                      std::to_string(attention.width()) + " attention does not match geometry K=" +
                      std::to_string(geom.kernel) + " S=" + std::to_string(geom.stride) +
                      " P=" + std::to_string(geom.padding) + " for a " + std::to_string(output_size) +
                      " input");
  }
  ConvKernel unit = ConvKernel::zeros(1, 1, geom.kernel, geom.stride, geom.padding, false);
  std::fill(unit.weights.begin(), unit.weights.end(), 1.0f);
  return transposed_conv2d(attention, unit, Extent{output_size, output_size});
}

SaliencyMap render_multi(std::span<const TaggedAttention> maps, const ModelConfig& config) {
  SaliencyMap total(config.input_size, config.input_size, 1);
  for (const auto& m : maps) {
    const SaliencyMap one = render(m.map, compose_geometry(config, m.tap), config.input_size);
    auto dst = total.data();
    const auto src = one.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  return total;
}

SaliencyMap upscale_to_frame(const SaliencyMap& saliency) {
  return resize_bilinear(saliency, kFrameHeight, kFrameWidth);
}

void write_saliency_raw(const fs::path& path, const SaliencyMap& map) {
  if (map.channels() != 1) throw ConfigError("saliency export expects a single-channel map");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(map.data().data()),
            static_cast<std::streamsize>(map.size() * sizeof(float)));
  fs::path sidecar = path;
  sidecar += ".json";
  std::ofstream meta(sidecar);
  meta << nlohmann::json{{"width", map.width()}, {"height", map.height()}, {"dtype", "float32-le"}}.dump()
       << "\n";
  if (!out || !meta) throw IoError("failed writing " + path.string());
}

SaliencyMap read_saliency_raw(const fs::path& path) {
  fs::path sidecar = path;
  sidecar += ".json";
  std::ifstream meta(sidecar);
  if (!meta) throw IoError("missing saliency descriptor " + sidecar.string());
  nlohmann::json desc;
  try {
    meta >> desc;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(sidecar.string() + ": " + e.what());
  }
  const int w = desc.value("width", 0);
  const int h = desc.value("height", 0);
  if (w <= 0 || h <= 0) throw IoError(sidecar.string() + ": bad dimensions");
  SaliencyMap map(h, w, 1);
  std::ifstream in(path, std::ios::binary);
  if (!in || !in.read(reinterpret_cast<char*>(map.data().data()),
                      static_cast<std::streamsize>(map.size() * sizeof(float)))) {
    throw IoError(path.string() + ": truncated saliency grid");
  }
  return map;
}

void write_saliency_pgm(const fs::path& path, const SaliencyMap& map) {
  const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
  const double range = static_cast<double>(*hi) - *lo;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << map.width() << ' ' << map.height() << "\n255\n";
  std::vector<std::uint8_t> bytes(map.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double t = range > 0 ? (map.data()[i] - *lo) / range : 0.0;
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace fls
