#include <cstdio>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "fls/error.hpp"
#include "fls/pipeline.hpp"
#include "fls/weight_file.hpp"
#include "support/fixtures.hpp"

using namespace fls;
using fls::testing::read_bytes;
using fls::testing::ScratchDir;
namespace fs = std::filesystem;

namespace {

struct CommandResult {
  int exit_code;
  std::string output;
};

CommandResult run_cli(const std::string& args) {
  const std::string cmd = std::string(FLS_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  std::string out;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

RunManifest fixture_manifest(const fs::path& root, int frames = 32) {
  RunManifest m;
  m.model_name = "sparse-fls";
  m.config = *find_preset("sparse-fls");
  m.game = "synthetic";
  m.output_dir = root / "out";
  m.rng_seed = 1234;
  m.workers = 2;
  for (int r = 0; r < 2; ++r) {
    const std::string name = "rec" + std::to_string(r);
    const auto fx = fls::testing::write_recording(root / name, frames, 100 + r, r == 0 ? 3 : 0);
    m.recordings.push_back({name, fx.frames, fx.fixations});
  }
  return m;
}

void write_manifest(const RunManifest& m, const fs::path& path) {
  std::ofstream out(path);
  out << manifest_to_json(m).dump(2);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Manifest, JsonRoundTrip) {
  RunManifest m;
  m.model_name = "dense";
  m.config = *find_preset("dense-fls-no-final-relu-sum-pool");
  m.config.attention->terminal = Activation::SoftPlus2;
  m.config.num_actions = 6;
  m.weights = "w.flsw";
  m.recordings = {{"a", "frames/a", "a.csv"}, {"b", "b.rgb", "b.csv"}};
  m.output_dir = "out";
  m.rng_seed = 0xFFFFFFFFFFFFFFF1ULL;
  m.negative_pool = NegativePoolScope::Dataset;
  m.max_negatives = 500;
  m.blur_sigma = 3.5;
  m.workers = 4;
  m.dump_saliency = false;
  const auto back = manifest_from_json(nlohmann::json::parse(manifest_to_json(m).dump()));
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(back.model_name, m.model_name);
  EXPECT_EQ(back.weights, m.weights);
  EXPECT_EQ(back.recordings.size(), 2u);
  EXPECT_EQ(back.recordings[1].frames, m.recordings[1].frames);
  EXPECT_EQ(back.rng_seed, m.rng_seed);
  EXPECT_EQ(back.negative_pool, m.negative_pool);
  EXPECT_EQ(back.max_negatives, m.max_negatives);
  EXPECT_EQ(back.blur_sigma, m.blur_sigma);
  EXPECT_EQ(back.workers, m.workers);
  EXPECT_EQ(back.dump_saliency, m.dump_saliency);
}

TEST(Manifest, RejectsUnknownSchemaAndEnums) {
  RunManifest m;
  m.config = *find_preset("sparse-fls");
  m.output_dir = "out";
  auto j = manifest_to_json(m);
  j["schema_version"] = 99;
  EXPECT_THROW(manifest_from_json(j), ConfigError);
  j = manifest_to_json(m);
  j["model"]["block"] = "wide";
  EXPECT_THROW(manifest_from_json(j), ConfigError);
}

TEST(ParallelFor, CoversEveryIndexAndRethrows) {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                 if (i == 7) throw EvalError("boom");
               }),
               EvalError);
}

TEST(RunEval, DeterministicAcrossRunsAndWorkerCounts) {
  ScratchDir dir("eval_det");
  auto m = fixture_manifest(dir.path());
  const auto a = run_eval(m);
  const auto b = run_eval(m);
  m.workers = 1;
  const auto c = run_eval(m);
  ASSERT_EQ(a.recordings.size(), 2u);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_EQ(a.recordings[r].observations, 2u);
    EXPECT_EQ(a.recordings[r].scores, b.recordings[r].scores);
    EXPECT_EQ(a.recordings[r].scores, c.recordings[r].scores);
    EXPECT_EQ(a.recordings[r].saliency, c.recordings[r].saliency);
    for (std::size_t i = 0; i < a.recordings[r].scores.size(); ++i)
      EXPECT_EQ(a.recordings[r].scores[i].frame, static_cast<std::int64_t>(i));
  }
}

TEST(RunEval, OutOfRangeFixationsSkippedAndLogged) {
  ScratchDir dir("eval_oob");
  const auto m = fixture_manifest(dir.path());
  const auto result = run_eval(m);
  EXPECT_EQ(result.recordings[0].rejected_fixations, 3u);
  EXPECT_EQ(result.recordings[1].rejected_fixations, 0u);
  write_eval_outputs(m, result);
  const std::string log = slurp(m.output_dir / "run.log");
  EXPECT_NE(log.find("recording rec0: 2 observations, 3 fixation rows skipped"), std::string::npos) << log;
  EXPECT_TRUE(fs::exists(m.output_dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(m.output_dir / "summary.csv"));
  EXPECT_TRUE(fs::exists(m.output_dir / "saliency" / "rec1_1.f32"));
  EXPECT_EQ(manifest_to_json(read_manifest(m.output_dir / "manifest.json")), manifest_to_json(m));
}

TEST(RunEval, ConstantSaliencyMakesNssUndefined) {
  ScratchDir dir("eval_const");
  auto m = fixture_manifest(dir.path());
  Model model = zero_model(m.config);
  for (auto& p : model.parameters())
    if (p.name == "attention.after_conv3.conv2.bias") p.values[0] = -1e4f;
  const auto weights = dir.path() / "constant.flsw";
  save_weights(model, weights.string());
  m.weights = weights;
  const auto result = run_eval(m);
  for (const auto& rec : result.recordings) {
    for (const auto& s : rec.scores) {
      EXPECT_EQ(s.nss.reason, Undefined::ZeroVariance);
      EXPECT_EQ(*s.sauc.value, 0.5);
    }
    for (const auto& sal : rec.saliency)
      for (float v : sal.data()) ASSERT_EQ(v, sal.data()[0]);
  }
}

TEST(RunEval, ModelWithoutAttentionRejected) {
  ScratchDir dir("eval_noatt");
  auto m = fixture_manifest(dir.path(), 16);
  m.config = *find_preset("nature-cnn");
  EXPECT_THROW(run_eval(m), ConfigError);
}

TEST(Cli, ParamsTotals) {
  auto r = run_cli("params --preset nature-cnn --actions 4");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("1,686,693"), std::string::npos) << r.output;
  r = run_cli("params --preset sparse-fls --readout sum-pool --actions 4");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("263,846"), std::string::npos) << r.output;
  r = run_cli("params --preset nature-cnn --actions 0");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("num_actions"), std::string::npos) << r.output;
}

TEST(Cli, ParamsRejectsBadCombinations) {
  EXPECT_EQ(run_cli("params --preset nature-cnn --softplus2").exit_code, 1);
  EXPECT_EQ(run_cli("params --preset daqn --fls-1x1").exit_code, 1);
  EXPECT_EQ(run_cli("params --preset no-such-model").exit_code, 1);
  EXPECT_EQ(run_cli("params --bogus-flag").exit_code, 1);
  const auto r = run_cli("params --preset sparse-fls --placement after-each-conv");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("2,063,016"), std::string::npos);
}

TEST(Cli, GradcheckReports) {
  const auto a = run_cli("gradcheck --seed 7");
  const auto b = run_cli("gradcheck --seed 7");
  EXPECT_EQ(a.exit_code, 0) << a.output;
  EXPECT_EQ(a.output, b.output);
  const auto coarse = run_cli("gradcheck --eps 1e-1");
  EXPECT_EQ(coarse.exit_code, 3);
  EXPECT_NE(coarse.output.find("FAIL"), std::string::npos);
  EXPECT_NE(coarse.output.find("softplus"), std::string::npos);
}

TEST(Cli, EvalTwiceIsBitwiseIdentical) {
  ScratchDir dir("cli_eval");
  auto m = fixture_manifest(dir.path());
  m.output_dir = dir.path() / "run1";
  write_manifest(m, dir.path() / "m1.json");
  m.output_dir = dir.path() / "run2";
  write_manifest(m, dir.path() / "m2.json");
  ASSERT_EQ(run_cli("eval --manifest " + (dir.path() / "m1.json").string()).exit_code, 0);
  ASSERT_EQ(run_cli("eval --manifest " + (dir.path() / "m2.json").string() + " --workers 3").exit_code, 0);
  for (const char* f : {"frames_rec0.csv", "frames_rec1.csv", "summary.csv", "saliency/rec0_1.f32"}) {
    const auto x = read_bytes(dir.path() / "run1" / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, read_bytes(dir.path() / "run2" / f)) << f;
  }
}

TEST(Cli, EvalMissingInputsLeavesNoSummary) {
  ScratchDir dir("cli_missing");
  auto m = fixture_manifest(dir.path(), 16);
  m.recordings[1].fixations = dir.path() / "nope.csv";
  write_manifest(m, dir.path() / "m.json");
  const auto r = run_cli("eval --manifest " + (dir.path() / "m.json").string());
  EXPECT_EQ(r.exit_code, 2) << r.output;
  EXPECT_FALSE(fs::exists(m.output_dir / "summary.csv"));
  EXPECT_EQ(run_cli("eval --manifest " + (dir.path() / "absent.json").string()).exit_code, 2);
}

TEST(Cli, SaliencyMetricsAndReport) {
  ScratchDir dir("cli_stages");
  const auto fx = fls::testing::write_recording(dir.path() / "rec", 32, 5);
  const auto weights = dir.path() / "w.flsw";
  ASSERT_EQ(run_cli("params --preset sparse-fls --seed 3 --save-weights " + weights.string()).exit_code, 0);
  const auto sal = dir.path() / "sal";
  auto r = run_cli("saliency --preset sparse-fls --weights " + weights.string() + " --frames " + fx.frames.string() +
                   " --out " + sal.string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(fs::exists(sal / "1.f32"));
  const auto csv = dir.path() / "frames.csv";
  r = run_cli("metrics --saliency " + sal.string() + " --fixations " + fx.fixations.string() + " --out " +
              csv.string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(read_frame_csv(csv, "rec").size(), 2u);
  r = run_cli("report rec=" + csv.string() + " --model sparse-fls --game synthetic --out " +
              (dir.path() / "summary.csv").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(slurp(dir.path() / "summary.csv").find("sparse-fls,synthetic,nss"), std::string::npos);
  r = run_cli("preprocess --frames " + fx.frames.string() + " --fixations " + fx.fixations.string() + " --out " +
              (dir.path() / "obs").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("2 observations"), std::string::npos) << r.output;
}
