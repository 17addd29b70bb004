#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fls/metrics.hpp"
#include "fls/model.hpp"
#include "fls/preprocess.hpp"
#include "fls/saliency.hpp"

namespace fls {

inline constexpr int kManifestSchemaVersion = 1;

nlohmann::json config_to_json(const ModelConfig& config);
/// Throws ConfigError on unknown enum values or missing fields.
ModelConfig config_from_json(const nlohmann::json& j);

enum class NegativePoolScope { Recording, Dataset };

struct RecordingSource {
  std::string name;
  std::filesystem::path frames;     // PPM directory or raw stream
  std::filesystem::path fixations;  // CSV
};

/// Everything needed to reproduce an evaluation run.
struct RunManifest {
  std::string model_name;  // preset name or free-form label
  ModelConfig config;
  std::optional<std::filesystem::path> weights;  // built from rng_seed when absent
  std::string game = "unknown";
  std::vector<RecordingSource> recordings;
  std::filesystem::path output_dir;
  std::uint64_t rng_seed = 0;
  NegativePoolScope negative_pool = NegativePoolScope::Recording;
  std::size_t max_negatives = 0;
  double blur_sigma = 5.0;
  int workers = 1;
  bool dump_saliency = true;
};

nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
RunManifest read_manifest(const std::filesystem::path& path);

/// Loads the model a manifest names: its weight file, or fresh weights from
/// the manifest seed.
Model load_model(const RunManifest& m);

/// Attention maps of one observation rendered at 84x84 and upscaled to 160x210.
SaliencyMap saliency_for_observation(const Model& model, const FeatureMap& observation);

struct RecordingResult {
  std::string name;
  std::vector<FrameScore> scores;
  std::vector<SaliencyMap> saliency;  // 160x210, one per observation
  std::size_t observations = 0;
  std::size_t rejected_fixations = 0;
};

struct EvalResult {
  std::vector<RecordingResult> recordings;
  std::vector<SummaryRow> summary;
};

/// Runs frames -> observations -> forward -> render -> upscale -> metrics ->
/// aggregate without touching the output directory. Frame-level work is
/// spread over `workers` threads; results are ordered by observation index.
EvalResult run_eval(const RunManifest& manifest);

/// Writes manifest.json, frames_<recording>.csv, summary.csv, run.log and
/// (optionally) saliency dumps into manifest.output_dir.
void write_eval_outputs(const RunManifest& manifest, const EvalResult& result);

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace fls
