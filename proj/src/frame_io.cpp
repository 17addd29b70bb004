#include "fls/frame_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fls {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kFrameBytes = static_cast<std::size_t>(kFrameWidth) * kFrameHeight * 3;

// Next whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string token;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string ignored;
      std::getline(in, ignored);
      if (!token.empty()) break;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(ch);
  }
  return token;
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
    text.remove_suffix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

RawFrame read_ppm(const fs::path& path, std::int64_t index) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  if (ppm_token(in) != "P6") throw IoError(path.string() + ": not a binary PPM (P6)");
  int w = 0, h = 0, maxval = 0;
  if (!parse_number(ppm_token(in), w) || !parse_number(ppm_token(in), h) ||
      !parse_number(ppm_token(in), maxval)) {
    throw IoError(path.string() + ": malformed PPM header");
  }
  if (w != kFrameWidth || h != kFrameHeight || maxval != 255) {
    throw IoError(path.string() + ": expected 160x210 maxval 255, got " + std::to_string(w) + "x" +
                  std::to_string(h) + " maxval " + std::to_string(maxval));
  }
  RawFrame frame{index, std::vector<std::uint8_t>(kFrameBytes)};
  if (!in.read(reinterpret_cast<char*>(frame.pixels.data()), kFrameBytes)) {
    throw IoError(path.string() + ": truncated pixel data");
  }
  return frame;
}

void write_ppm(const fs::path& path, const RawFrame& frame) {
  frame.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P6\n" << kFrameWidth << ' ' << kFrameHeight << "\n255\n";
  out.write(reinterpret_cast<const char*>(frame.pixels.data()), static_cast<std::streamsize>(kFrameBytes));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<RawFrame> read_ppm_directory(const fs::path& dir) {
  std::vector<std::pair<std::int64_t, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".ppm") continue;
    std::int64_t index = 0;
    if (!parse_number(entry.path().stem().string(), index)) {
      throw IoError("frame file name is not an index: " + entry.path().string());
    }
    files.emplace_back(index, entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RawFrame> frames;
  frames.reserve(files.size());
  for (const auto& [index, path] : files) frames.push_back(read_ppm(path, index));
  return frames;
}

std::vector<RawFrame> read_raw_stream(const fs::path& path) {
  fs::path sidecar = path;
  sidecar += ".json";
  std::ifstream meta(sidecar);
  if (!meta) throw IoError("missing raw-stream descriptor " + sidecar.string());
  nlohmann::json desc;
  try {
    meta >> desc;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(sidecar.string() + ": " + e.what());
  }
  if (desc.value("width", 0) != kFrameWidth || desc.value("height", 0) != kFrameHeight) {
    throw IoError(sidecar.string() + ": raw stream must be 160x210");
  }
  const std::int64_t count = desc.value("frames", std::int64_t{-1});
  const std::int64_t first = desc.value("first_index", std::int64_t{0});
  if (count < 0) throw IoError(sidecar.string() + ": missing frame count");

  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<RawFrame> frames;
  frames.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    RawFrame f{first + i, std::vector<std::uint8_t>(kFrameBytes)};
    if (!in.read(reinterpret_cast<char*>(f.pixels.data()), kFrameBytes)) {
      throw IoError(path.string() + ": truncated at frame " + std::to_string(i));
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

void write_raw_stream(const fs::path& path, const std::vector<RawFrame>& frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& f : frames) {
    f.validate();
    out.write(reinterpret_cast<const char*>(f.pixels.data()), static_cast<std::streamsize>(kFrameBytes));
  }
  fs::path sidecar = path;
  sidecar += ".json";
  std::ofstream meta(sidecar);
  meta << nlohmann::json{{"width", kFrameWidth},
                         {"height", kFrameHeight},
                         {"frames", frames.size()},
                         {"first_index", frames.empty() ? 0 : frames.front().index}}
              .dump(2)
       << "\n";
  if (!out || !meta) throw IoError("failed writing " + path.string());
}

std::vector<RawFrame> read_frames(const fs::path& source) {
  if (fs::is_directory(source)) return read_ppm_directory(source);
  if (fs::is_regular_file(source)) return read_raw_stream(source);
  throw IoError("frame source does not exist: " + source.string());
}

std::vector<FixationRecord> read_fixation_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fixation log " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty fixation log");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "frame_index,x,y") throw IoError(path.string() + ": expected header frame_index,x,y");

  std::vector<FixationRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    FixationRecord r;
    const std::string_view view(line);
    if (c2 == std::string::npos || !parse_number(view.substr(0, c1), r.frame_index) ||
        !parse_number(view.substr(c1 + 1, c2 - c1 - 1), r.x) || !parse_number(view.substr(c2 + 1), r.y)) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed fixation row");
    }
    records.push_back(r);
  }
  return records;
}

void write_fixation_csv(const fs::path& path, const std::vector<FixationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "frame_index,x,y\n";
  for (const auto& r : records) out << r.frame_index << ',' << r.x << ',' << r.y << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace fls
