#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fls/error.hpp"
#include "fls/frame_io.hpp"
#include "fls/grad_check.hpp"
#include "fls/metrics.hpp"
#include "fls/model.hpp"
#include "fls/pipeline.hpp"
#include "fls/preprocess.hpp"
#include "fls/rng.hpp"
#include "fls/saliency.hpp"
#include "fls/weight_file.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kIo = 2, kVerification = 3 };

// Preset plus overrides, shared by every subcommand that builds a model.
struct ModelFlags {
  std::string preset = "nature-cnn";
  std::string block;
  std::string attention;
  std::string placement;
  std::string readout;
  bool softplus2 = false;
  bool normalize_output = false;
  bool no_final_relu = false;
  bool fls_1x1 = false;
  std::optional<int> daqn_width;
  std::optional<int> actions;

  void attach(CLI::App* app) {
    app->add_option("--preset", preset, "Model preset (see `fls params --list`)");
    app->add_option("--block", block, "Override the conv block: sparse | dense");
    app->add_option("--attention", attention, "Override attention: none | fls | fls-1x1 | rs | daqn | mousavi");
    app->add_option("--placement", placement,
                    "Override placement: after-block | after-first-conv | after-each-conv");
    app->add_option("--readout", readout, "Override the readout: flatten | sum-pool");
    app->add_flag("--softplus2", softplus2, "Use the base-2 SoftPlus terminal activation");
    app->add_flag("--normalize-output", normalize_output, "Normalize each attention map to sum 1");
    app->add_flag("--no-final-relu", no_final_relu, "Drop the ReLU feeding the attention module");
    app->add_flag("--fls-1x1", fls_1x1, "Use 1x1 kernels in the FLS module");
    app->add_option("--daqn-width", daqn_width, "Hidden width of the DAQN module");
    app->add_option("--actions", actions, "Number of policy outputs");
  }

  fls::ModelConfig resolve() const {
    auto config = fls::find_preset(preset);
    if (!config) throw fls::ConfigError("unknown preset '" + preset + "'");
    if (!block.empty()) {
      const auto b = fls::parse_block(block);
      if (!b) throw fls::ConfigError("unknown block '" + block + "'");
      config->block = *b;
    }
    if (!attention.empty()) {
      if (attention == "none") {
        config->attention.reset();
      } else {
        const auto a = fls::parse_attention(attention);
        if (!a) throw fls::ConfigError("unknown attention '" + attention + "'");
        fls::AttentionConfig ac = config->attention.value_or(fls::AttentionConfig{});
        ac.kind = *a;
        config->attention = ac;
      }
    }
    if (!placement.empty()) {
      const auto p = fls::parse_placement(placement);
      if (!p) throw fls::ConfigError("unknown placement '" + placement + "'");
      config->placement = *p;
    }
    if (!readout.empty()) {
      const auto r = fls::parse_readout(readout);
      if (!r) throw fls::ConfigError("unknown readout '" + readout + "'");
      config->readout = *r;
    }
    auto need_attention = [&](const char* flag) -> fls::AttentionConfig& {
      if (!config->attention) throw fls::ConfigError(std::string(flag) + " requires an attention module");
      return *config->attention;
    };
    if (softplus2) {
      auto& ac = need_attention("--softplus2");
      if (ac.kind != fls::AttentionKind::FLS && ac.kind != fls::AttentionKind::FLS1x1)
        throw fls::ConfigError("--softplus2 applies only to FLS modules");
      ac.terminal = fls::Activation::SoftPlus2;
    }
    if (fls_1x1) {
      auto& ac = need_attention("--fls-1x1");
      if (ac.kind != fls::AttentionKind::FLS && ac.kind != fls::AttentionKind::FLS1x1)
        throw fls::ConfigError("--fls-1x1 applies only to FLS modules");
      ac.kind = fls::AttentionKind::FLS1x1;
    }
    if (normalize_output) need_attention("--normalize-output").normalize_output = true;
    if (no_final_relu) need_attention("--no-final-relu").pre_relu = false;
    if (daqn_width) need_attention("--daqn-width").daqn_width = *daqn_width;
    if (actions) config->num_actions = *actions;
    config->validate();
    return *config;
  }
};

std::string with_commas(std::int64_t v) {
  std::string digits = std::to_string(v < 0 ? -v : v);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out.push_back(',');
    out.push_back(digits[i]);
  }
  return v < 0 ? "-" + out : out;
}

void write_observation(const fs::path& path, const fls::ObservationStack& obs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw fls::IoError("cannot open " + path.string() + " for writing");
  const auto data = obs.data.data();
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!out) throw fls::IoError("failed writing " + path.string());
  fs::path sidecar = path;
  sidecar += ".json";
  std::ofstream meta(sidecar);
  meta << nlohmann::json{{"width", obs.data.width()},
                         {"height", obs.data.height()},
                         {"channels", obs.data.channels()},
                         {"source_indices", obs.source_indices},
                         {"retained_indices", obs.retained_indices}}
              .dump(2)
       << "\n";
  if (!meta) throw fls::IoError("failed writing " + sidecar.string());
}

int cmd_params(const ModelFlags& flags, const std::optional<std::string>& save, std::uint64_t seed, bool list) {
  if (list) {
    for (const auto& p : fls::presets()) std::printf("%-36s %s\n", p.name.c_str(), p.label.c_str());
    return kOk;
  }
  const auto config = flags.resolve();
  const auto layers = fls::describe(config);
  std::printf("%-40s %-16s %12s\n", "layer", "output", "params");
  std::int64_t total = 0;
  for (const auto& l : layers) {
    std::printf("%-40s %-16s %12s\n", l.name.c_str(), l.output_shape.c_str(), with_commas(l.params).c_str());
    total += l.params;
  }
  std::printf("%-40s %-16s %12s\n", "total", "", with_commas(total).c_str());
  if (save) {
    fls::Model model = fls::build_model(config, fls::Rng(seed).next());
    fls::save_weights(model, *save);
    std::printf("weights written to %s\n", save->c_str());
  }
  return kOk;
}

int cmd_preprocess(const fs::path& frames_src, const std::optional<fs::path>& fixations, const fs::path& out_dir) {
  const auto frames = fls::read_frames(frames_src);
  const auto observations = fls::build_observations(frames);
  std::vector<fls::FixationRecord> records;
  if (fixations) records = fls::read_fixation_csv(*fixations);
  fs::create_directories(out_dir);
  std::size_t rejected = 0;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    write_observation(out_dir / ("obs_" + std::to_string(i) + ".f32"), observations[i]);
    if (fixations) {
      const auto acc = fls::fixations_for_observation(records, observations[i]);
      rejected += acc.rejected;
      std::ofstream out(out_dir / ("fixations_" + std::to_string(i) + ".pgm"), std::ios::binary);
      std::uint32_t peak = 1;
      for (auto c : acc.map.counts) peak = std::max(peak, c);
      out << "P5\n" << acc.map.width << ' ' << acc.map.height << "\n" << (peak > 255 ? 65535 : 255) << "\n";
      for (auto c : acc.map.counts) {
        if (peak > 255) {
          const auto v = static_cast<std::uint16_t>(std::min<std::uint32_t>(c, 65535));
          out.put(static_cast<char>(v >> 8)).put(static_cast<char>(v & 0xff));
        } else {
          out.put(static_cast<char>(c));
        }
      }
      if (!out) throw fls::IoError("failed writing fixation map " + std::to_string(i));
    }
  }
  std::printf("%zu frames -> %zu observations (%zu tail frames dropped)\n", frames.size(), observations.size(),
              frames.size() - observations.size() * fls::kRawFramesPerObservation);
  if (fixations) std::printf("%zu fixation rows outside the frame skipped\n", rejected);
  return kOk;
}

int cmd_saliency(const ModelFlags& flags, const std::optional<fs::path>& weights, std::uint64_t seed,
                 const fs::path& frames_src, const fs::path& out_dir, bool native) {
  const auto config = flags.resolve();
  if (!config.attention) throw fls::ConfigError("saliency needs a model with an attention module");
  fls::Model model = fls::build_model(config, fls::Rng(seed).next());
  if (weights) model = fls::load_weights(std::move(model), weights->string());
  const auto frames = fls::read_frames(frames_src);
  const auto observations = fls::build_observations(frames);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const auto output = model.forward(observations[i].data);
    fls::SaliencyMap map = fls::render_multi(output.attention_maps, config);
    if (!native) map = fls::upscale_to_frame(map);
    fls::write_saliency_raw(out_dir / (std::to_string(i) + ".f32"), map);
    fls::write_saliency_pgm(out_dir / (std::to_string(i) + ".pgm"), map);
  }
  std::printf("%zu saliency maps written to %s\n", observations.size(), out_dir.string().c_str());
  return kOk;
}

int cmd_metrics(const fs::path& saliency_dir, const fs::path& fixations, std::int64_t first_index,
                const std::string& recording, const fs::path& out, double sigma, std::size_t max_negatives,
                std::uint64_t seed) {
  std::vector<fls::SaliencyMap> maps;
  for (std::size_t i = 0;; ++i) {
    const fs::path p = saliency_dir / (std::to_string(i) + ".f32");
    if (!fs::exists(p)) break;
    maps.push_back(fls::read_saliency_raw(p));
  }
  if (maps.empty()) throw fls::IoError("no saliency maps (0.f32, 1.f32, ...) in " + saliency_dir.string());
  const auto records = fls::read_fixation_csv(fixations);

  std::vector<fls::FixationMap> fix;
  std::size_t rejected = 0;
  fls::FixationPool pool(fls::kFrameWidth, fls::kFrameHeight);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto& m = maps[i];
    if (m.width() != fls::kFrameWidth || m.height() != fls::kFrameHeight || m.channels() != 1)
      throw fls::ConfigError("saliency map " + std::to_string(i) + " is " + m.shape_string() +
                             ", expected 210x160x1");
    fls::ObservationStack stub;
    stub.retained_indices = fls::retained_indices_for(first_index, i);
    auto acc = fls::fixations_for_observation(records, stub);
    rejected += acc.rejected;
    pool.add(acc.map);
    fix.push_back(std::move(acc.map));
  }

  const auto blur = fls::BlurParams::with_sigma(sigma);
  fls::Rng seeds(seed);
  std::vector<fls::FrameScore> scores;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    fls::FrameScore s;
    s.recording = recording;
    s.frame = static_cast<std::int64_t>(i);
    s.nss = fls::nss(maps[i], fix[i]);
    s.kl = fls::kl_divergence(maps[i], fix[i], blur);
    s.sauc = fls::shuffled_auc_masked(maps[i], fix[i], pool.negatives_for(fix[i]),
                                      {max_negatives, seeds.next()});
    scores.push_back(std::move(s));
  }
  fls::write_frame_csv(out, scores);
  for (const auto& row : fls::aggregate(scores)) {
    std::printf("%-5s mean=%s n=%zu\n", row.metric.c_str(),
                row.mean ? fls::format_real(*row.mean).c_str() : "undefined", row.frames);
  }
  std::printf("%zu fixation rows outside the frame skipped\n", rejected);
  return kOk;
}

int cmd_eval(const fs::path& manifest_path, std::optional<int> workers) {
  auto manifest = fls::read_manifest(manifest_path);
  if (workers) manifest.workers = *workers;
  const auto result = fls::run_eval(manifest);
  fls::write_eval_outputs(manifest, result);
  for (const auto& rec : result.recordings) {
    std::printf("%s: %zu observations, %zu fixation rows skipped\n", rec.name.c_str(), rec.observations,
                rec.rejected_fixations);
  }
  for (const auto& row : result.summary) {
    std::printf("%-5s mean=%s std=%s n=%zu\n", row.metric.c_str(),
                row.mean ? fls::format_real(*row.mean).c_str() : "undefined",
                row.std ? fls::format_real(*row.std).c_str() : "undefined", row.frames);
  }
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, double eps, double tol, int instances) {
  const auto results = fls::run_grad_check_suite(seed, eps, tol, instances);
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-4s %-24s max_rel_err=%.3e\n", r.passed ? "ok" : "FAIL", r.name.c_str(), r.max_relative_error);
    ok = ok && r.passed;
  }
  std::printf("%s (eps=%g, tol=%g, %d instances, seed=%llu)\n", ok ? "all checks passed" : "gradient check failed",
              eps, tol, instances, static_cast<unsigned long long>(seed));
  return ok ? kOk : kVerification;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& model, const std::string& game,
               const std::optional<fs::path>& out) {
  std::vector<fls::FrameScore> scores;
  for (const auto& item : inputs) {
    const auto eq = item.find('=');
    const std::string name = eq == std::string::npos ? fs::path(item).stem().string() : item.substr(0, eq);
    const fs::path path = eq == std::string::npos ? fs::path(item) : fs::path(item.substr(eq + 1));
    auto rows = fls::read_frame_csv(path, name);
    scores.insert(scores.end(), rows.begin(), rows.end());
  }
  const auto summary = fls::aggregate(scores);
  std::printf("%-12s %-12s %-5s %-22s %-22s %s\n", "model", "game", "metric", "mean", "std", "n");
  for (const auto& row : summary) {
    std::printf("%-12s %-12s %-5s %-22s %-22s %zu\n", model.c_str(), game.c_str(), row.metric.c_str(),
                row.mean ? fls::format_real(*row.mean).c_str() : "-",
                row.std ? fls::format_real(*row.std).c_str() : "-", row.frames);
  }
  if (out) fls::write_summary_csv(*out, model, game, summary);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-module inspection, saliency rendering and saliency metrics"};
  app.require_subcommand(1);

  ModelFlags params_flags;
  std::optional<std::string> save_weights;
  std::uint64_t params_seed = 0;
  bool list = false;
  auto* params = app.add_subcommand("params", "Per-layer shapes and parameter counts");
  params_flags.attach(params);
  params->add_option("--save-weights", save_weights, "Write freshly initialised weights to this file");
  params->add_option("--seed", params_seed, "Initialisation seed for --save-weights");
  params->add_flag("--list", list, "List the presets");

  fs::path pre_frames, pre_out;
  std::optional<fs::path> pre_fix;
  auto* preprocess = app.add_subcommand("preprocess", "Turn raw frames into 84x84x4 observation stacks");
  preprocess->add_option("--frames", pre_frames, "PPM directory or raw stream")->required();
  preprocess->add_option("--fixations", pre_fix, "Fixation CSV; writes per-observation fixation maps");
  preprocess->add_option("--out", pre_out, "Output directory")->required();

  ModelFlags sal_flags;
  std::optional<fs::path> sal_weights;
  std::uint64_t sal_seed = 0;
  fs::path sal_frames, sal_out;
  bool sal_native = false;
  auto* saliency = app.add_subcommand("saliency", "Render attention saliency for every observation");
  sal_flags.attach(saliency);
  saliency->add_option("--weights", sal_weights, "Weight file (default: seeded random weights)");
  saliency->add_option("--seed", sal_seed, "Seed for random weights");
  saliency->add_option("--frames", sal_frames, "PPM directory or raw stream")->required();
  saliency->add_option("--out", sal_out, "Output directory")->required();
  saliency->add_flag("--native", sal_native, "Keep the 84x84 rendering instead of upscaling to 160x210");

  fs::path met_sal, met_fix, met_out = "frames.csv";
  std::int64_t met_first = 0;
  std::string met_rec = "recording";
  double met_sigma = 5.0;
  std::size_t met_maxneg = 0;
  std::uint64_t met_seed = 0;
  auto* metrics = app.add_subcommand("metrics", "Score 160x210 saliency maps against fixations");
  metrics->add_option("--saliency", met_sal, "Directory of <i>.f32 maps")->required();
  metrics->add_option("--fixations", met_fix, "Fixation CSV")->required();
  metrics->add_option("--first-index", met_first, "Raw index of the first frame of the stream");
  metrics->add_option("--recording", met_rec, "Recording name");
  metrics->add_option("--out", met_out, "Per-frame CSV path");
  metrics->add_option("--sigma", met_sigma, "Fixation blur sigma in pixels");
  metrics->add_option("--max-negatives", met_maxneg, "Subsample sAUC negatives (0 = all)");
  metrics->add_option("--seed", met_seed, "Seed for negative subsampling");

  fs::path manifest;
  std::optional<int> workers;
  auto* eval = app.add_subcommand("eval", "Run the full evaluation described by a manifest");
  eval->add_option("--manifest", manifest, "Run manifest (JSON)")->required();
  eval->add_option("--workers", workers, "Override the manifest worker count");

  std::uint64_t gc_seed = 0;
  double gc_eps = 1e-3, gc_tol = 1e-4;
  int gc_instances = 20;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of the analytic gradients");
  gradcheck->add_option("--seed", gc_seed, "Seed for inputs and parameters");
  gradcheck->add_option("--eps", gc_eps, "Central-difference step");
  gradcheck->add_option("--tol", gc_tol, "Relative error tolerance");
  gradcheck->add_option("--instances", gc_instances, "Random instances per op")->check(CLI::PositiveNumber);

  std::vector<std::string> rep_inputs;
  std::string rep_model = "model", rep_game = "unknown";
  std::optional<fs::path> rep_out;
  auto* report = app.add_subcommand("report", "Aggregate per-frame CSVs into a summary table");
  report->add_option("inputs", rep_inputs, "Per-frame CSVs, optionally as name=path")->required();
  report->add_option("--model", rep_model, "Model label");
  report->add_option("--game", rep_game, "Game label");
  report->add_option("--out", rep_out, "Summary CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    if (*params) return cmd_params(params_flags, save_weights, params_seed, list);
    if (*preprocess) return cmd_preprocess(pre_frames, pre_fix, pre_out);
    if (*saliency) return cmd_saliency(sal_flags, sal_weights, sal_seed, sal_frames, sal_out, sal_native);
    if (*metrics)
      return cmd_metrics(met_sal, met_fix, met_first, met_rec, met_out, met_sigma, met_maxneg, met_seed);
    if (*eval) return cmd_eval(manifest, workers);
    if (*gradcheck) return cmd_gradcheck(gc_seed, gc_eps, gc_tol, gc_instances);
    if (*report) return cmd_report(rep_inputs, rep_model, rep_game, rep_out);
  } catch (const fls::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const fls::EvalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const fls::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  }
  return kOk;
}
