#include "fls/pipeline.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "fls/frame_io.hpp"
#include "fls/rng.hpp"
#include "fls/weight_file.hpp"

namespace fls {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T, typename Parser>
T parse_enum(const json& j, const char* key, Parser parse) {
  if (!j.contains(key) || !j[key].is_string()) throw ConfigError(std::string("missing string field '") + key + "'");
  const std::string text = j[key].get<std::string>();
  const auto v = parse(text);
  if (!v) throw ConfigError(std::string("unknown ") + key + " '" + text + "'");
  return *v;
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad field '") + key + "': " + e.what());
  }
}

std::optional<Activation> parse_terminal(std::string_view s) {
  if (s == "softplus") return Activation::SoftPlus;
  if (s == "softplus2") return Activation::SoftPlus2;
  return std::nullopt;
}

std::optional<NegativePoolScope> parse_scope(std::string_view s) {
  if (s == "recording") return NegativePoolScope::Recording;
  if (s == "dataset") return NegativePoolScope::Dataset;
  return std::nullopt;
}

const char* scope_name(NegativePoolScope s) { return s == NegativePoolScope::Recording ? "recording" : "dataset"; }

}  // namespace

json config_to_json(const ModelConfig& c) {
  json j;
  j["block"] = to_string(c.block);
  if (c.attention) {
    j["attention"] = {{"kind", to_string(c.attention->kind)},
                      {"daqn_width", c.attention->daqn_width},
                      {"terminal", to_string(c.attention->terminal)},
                      {"normalize_output", c.attention->normalize_output},
                      {"pre_relu", c.attention->pre_relu}};
  } else {
    j["attention"] = nullptr;
  }
  j["placement"] = to_string(c.placement);
  j["readout"] = to_string(c.readout);
  j["pad_input_1px"] = c.pad_input_1px;
  j["l2_norm_features"] = c.l2_norm_features;
  j["fc_width"] = c.fc_width;
  j["num_actions"] = c.num_actions;
  j["input_size"] = c.input_size;
  j["input_channels"] = c.input_channels;
  return j;
}

ModelConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  c.block = parse_enum<BlockKind>(j, "block", parse_block);
  if (j.contains("attention") && !j["attention"].is_null()) {
    const json& a = j["attention"];
    AttentionConfig ac;
    ac.kind = parse_enum<AttentionKind>(a, "kind", parse_attention);
    ac.daqn_width = a.value("daqn_width", ac.daqn_width);
    if (a.contains("terminal")) ac.terminal = parse_enum<Activation>(a, "terminal", parse_terminal);
    ac.normalize_output = a.value("normalize_output", false);
    ac.pre_relu = a.value("pre_relu", true);
    c.attention = ac;
  }
  c.placement = parse_enum<Placement>(j, "placement", parse_placement);
  c.readout = parse_enum<Readout>(j, "readout", parse_readout);
  c.pad_input_1px = j.value("pad_input_1px", false);
  c.l2_norm_features = j.value("l2_norm_features", false);
  c.fc_width = j.value("fc_width", 512);
  c.num_actions = j.value("num_actions", 4);
  c.input_size = j.value("input_size", 84);
  c.input_channels = j.value("input_channels", 4);
  c.validate();
  return c;
}

json manifest_to_json(const RunManifest& m) {
  json recs = json::array();
  for (const auto& r : m.recordings) {
    recs.push_back({{"name", r.name}, {"frames", r.frames.string()}, {"fixations", r.fixations.string()}});
  }
  return {{"schema_version", kManifestSchemaVersion},
          {"model_name", m.model_name},
          {"model", config_to_json(m.config)},
          {"weights", m.weights ? json(m.weights->string()) : json(nullptr)},
          {"game", m.game},
          {"recordings", recs},
          {"output_dir", m.output_dir.string()},
          {"rng_seed", m.rng_seed},
          {"negative_pool", scope_name(m.negative_pool)},
          {"max_negatives", m.max_negatives},
          {"blur_sigma", m.blur_sigma},
          {"workers", m.workers},
          {"dump_saliency", m.dump_saliency}};
}

RunManifest manifest_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("manifest must be a JSON object");
  const int version = field<int>(j, "schema_version");
  if (version != kManifestSchemaVersion) {
    throw ConfigError("unsupported manifest schema_version " + std::to_string(version));
  }
  RunManifest m;
  m.config = config_from_json(field<json>(j, "model"));
  m.model_name = j.value("model_name", std::string("model"));
  if (j.contains("weights") && !j["weights"].is_null()) m.weights = field<std::string>(j, "weights");
  m.game = j.value("game", m.game);
  for (const auto& r : field<json>(j, "recordings")) {
    m.recordings.push_back({field<std::string>(r, "name"), field<std::string>(r, "frames"),
                            field<std::string>(r, "fixations")});
  }
  if (m.recordings.empty()) throw ConfigError("manifest lists no recordings");
  m.output_dir = field<std::string>(j, "output_dir");
  m.rng_seed = j.value("rng_seed", std::uint64_t{0});
  if (j.contains("negative_pool")) m.negative_pool = parse_enum<NegativePoolScope>(j, "negative_pool", parse_scope);
  m.max_negatives = j.value("max_negatives", std::size_t{0});
  m.blur_sigma = j.value("blur_sigma", 5.0);
  m.workers = j.value("workers", 1);
  m.dump_saliency = j.value("dump_saliency", true);
  if (m.workers < 1) throw ConfigError("workers must be >= 1");
  if (m.blur_sigma < 0) throw ConfigError("blur_sigma must be non-negative");
  return m;
}

RunManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

Model load_model(const RunManifest& m) {
  Rng root(m.rng_seed);
  Model model = build_model(m.config, root.next());
  if (m.weights) model = load_weights(std::move(model), m.weights->string());
  return model;
}

SaliencyMap saliency_for_observation(const Model& model, const FeatureMap& observation) {
  const ModelOutput out = model.forward(observation);
  if (out.attention_maps.empty()) throw ConfigError("model has no attention module to render");
  return upscale_to_frame(render_multi(out.attention_maps, model.config()));
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

EvalResult run_eval(const RunManifest& manifest) {
  const Model model = load_model(manifest);
  if (model.attention_modules().empty()) throw ConfigError("model '" + manifest.model_name + "' has no attention module");
  const BlurParams blur = BlurParams::with_sigma(manifest.blur_sigma);

  struct Loaded {
    std::vector<ObservationStack> observations;
    std::vector<FixationMap> fixations;
    std::size_t rejected = 0;
  };
  std::vector<Loaded> loaded;
  for (const auto& rec : manifest.recordings) {
    const auto frames = read_frames(rec.frames);
    const auto records = read_fixation_csv(rec.fixations);
    Loaded l;
    l.observations = build_observations(frames);
    for (const auto& obs : l.observations) {
      l.fixations.push_back(fixations_for_observation(records, obs).map);
    }
    for (const auto& f : records) {
      if (f.x < 0 || f.x >= kFrameWidth || f.y < 0 || f.y >= kFrameHeight) ++l.rejected;
    }
    loaded.push_back(std::move(l));
  }

  FixationPool dataset_pool(kFrameWidth, kFrameHeight);
  if (manifest.negative_pool == NegativePoolScope::Dataset)
    for (const auto& l : loaded)
      for (const auto& f : l.fixations) dataset_pool.add(f);

  Rng root(manifest.rng_seed);
  root.next();  // model initialisation
  const std::uint64_t sauc_base = root.next();

  EvalResult result;
  for (std::size_t r = 0; r < loaded.size(); ++r) {
    const Loaded& l = loaded[r];
    RecordingResult rec;
    rec.name = manifest.recordings[r].name;
    rec.observations = l.observations.size();
    rec.rejected_fixations = l.rejected;
    rec.saliency.resize(l.observations.size());
    rec.scores.resize(l.observations.size());

    FixationPool recording_pool(kFrameWidth, kFrameHeight);
    for (const auto& f : l.fixations) recording_pool.add(f);
    const FixationPool& pool =
        manifest.negative_pool == NegativePoolScope::Dataset ? dataset_pool : recording_pool;

    parallel_for(l.observations.size(), manifest.workers, [&](std::size_t i) {
      SaliencyMap s = saliency_for_observation(model, l.observations[i].data);
      FrameScore score;
      score.recording = rec.name;
      score.frame = static_cast<std::int64_t>(i);
      score.nss = nss(s, l.fixations[i]);
      score.kl = kl_divergence(s, l.fixations[i], blur);
      const SaucOptions opts{manifest.max_negatives, sauc_base ^ (0x9E3779B97F4A7C15ULL * (r + 1)) ^ i};
      score.sauc = shuffled_auc_masked(s, l.fixations[i], pool.negatives_for(l.fixations[i]), opts);
      rec.scores[i] = std::move(score);
      rec.saliency[i] = std::move(s);
    });
    result.recordings.push_back(std::move(rec));
  }

  std::vector<FrameScore> all;
  for (const auto& rec : result.recordings) all.insert(all.end(), rec.scores.begin(), rec.scores.end());
  result.summary = aggregate(all);
  return result;
}

void write_eval_outputs(const RunManifest& manifest, const EvalResult& result) {
  const fs::path dir = manifest.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

  {
    std::ofstream out(dir / "manifest.json");
    out << manifest_to_json(manifest).dump(2) << "\n";
    if (!out) throw IoError("failed writing manifest.json");
  }
  std::ofstream log(dir / "run.log");
  log << "model " << manifest.model_name << " (" << count_params(manifest.config) << " parameters)\n";
  log << "negative pool: " << scope_name(manifest.negative_pool) << "\n";
  for (const auto& rec : result.recordings) {
    write_frame_csv(dir / ("frames_" + rec.name + ".csv"), rec.scores);
    log << "recording " << rec.name << ": " << rec.observations << " observations, "
        << rec.rejected_fixations << " fixation rows skipped (out of bounds)\n";
    std::size_t undefined[3] = {0, 0, 0};
    for (const auto& s : rec.scores) {
      undefined[0] += !s.nss.defined();
      undefined[1] += !s.kl.defined();
      undefined[2] += !s.sauc.defined();
    }
    log << "  undefined frames: nss " << undefined[0] << ", kl " << undefined[1] << ", sauc " << undefined[2]
        << "\n";
    if (manifest.dump_saliency) {
      const fs::path sal_dir = dir / "saliency";
      fs::create_directories(sal_dir);
      for (std::size_t i = 0; i < rec.saliency.size(); ++i) {
        const std::string stem = rec.name + "_" + std::to_string(i);
        write_saliency_raw(sal_dir / (stem + ".f32"), rec.saliency[i]);
        write_saliency_pgm(sal_dir / (stem + ".pgm"), rec.saliency[i]);
      }
    }
  }
  write_summary_csv(dir / "summary.csv", manifest.model_name, manifest.game, result.summary);
  log << "summary: mean and std are taken across recordings\n";
  if (!log) throw IoError("failed writing run.log");
}

}  // namespace fls
