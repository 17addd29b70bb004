#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fls/preprocess.hpp"

namespace fls {

/// Binary PPM (P6, maxval 255). Dimensions must be 160x210.
RawFrame read_ppm(const std::filesystem::path& path, std::int64_t index);
void write_ppm(const std::filesystem::path& path, const RawFrame& frame);

/// All *.ppm files in `dir`; each file stem is the zero-padded frame index.
/// Frames are returned sorted by index.
std::vector<RawFrame> read_ppm_directory(const std::filesystem::path& dir);

/// Concatenated RGB frames with a JSON sidecar `<path>.json` holding
/// {"width": 160, "height": 210, "frames": N, "first_index": k}.
std::vector<RawFrame> read_raw_stream(const std::filesystem::path& path);
void write_raw_stream(const std::filesystem::path& path, const std::vector<RawFrame>& frames);

/// Directory of PPMs or a raw stream, decided by what `source` is.
std::vector<RawFrame> read_frames(const std::filesystem::path& source);

/// CSV with header "frame_index,x,y". Malformed lines raise IoError.
std::vector<FixationRecord> read_fixation_csv(const std::filesystem::path& path);
void write_fixation_csv(const std::filesystem::path& path, const std::vector<FixationRecord>& records);

}  // namespace fls
