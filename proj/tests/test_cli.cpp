#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "gkcmn/cli/annotations.hpp"
#include "gkcmn/cli/commands.hpp"
#include "gkcmn/cli/weights_manifest.hpp"
#include "gkcmn/pipeline.hpp"
#include "gkcmn/tensor_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace gkcmn;

namespace {

const fs::path kData = GKCMN_TEST_DATA_DIR;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') q += "'\\''";
    else q += c;
  }
  return q + "'";
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("gkcmn_cli_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override {
    if (!HasFailure()) fs::remove_all(dir_);
  }

  Outcome run(const std::vector<std::string>& args) {
    std::string cmd = quote(GKCMN_CLI_PATH);
    for (const auto& a : args) cmd += " " + quote(a);
    const fs::path o = dir_ / "stdout.txt", e = dir_ / "stderr.txt";
    cmd += " >" + quote(o.string()) + " 2>" + quote(e.string());
    const int status = std::system(cmd.c_str());
    Outcome r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  fs::path dir_;
};

std::vector<std::string> files_under(const fs::path& root) {
  std::vector<std::string> names;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) names.push_back(fs::relative(entry.path(), root).string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

void expect_same_tree(const fs::path& a, const fs::path& b) {
  const auto names = files_under(a);
  ASSERT_EQ(names, files_under(b));
  ASSERT_FALSE(names.empty());
  for (const auto& n : names) EXPECT_EQ(slurp(a / n), slurp(b / n)) << n;
}

}  // namespace

TEST_F(CliTest, EncodeWritesTargetShapes) {
  const Outcome r = run({"encode-targets", "--annotations", (kData / "one_video.json").string(), "--map-size", "16",
                         "--out", path("enc").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path v = path("enc") / "walk";
  EXPECT_EQ(read_gktn(v / "heatmaps.gktn").shape(), (Shape{3, 16, 16}));
  EXPECT_EQ(read_gktn(v / "size_targets.gktn").shape(), (Shape{3, 4, 16, 16}));
  EXPECT_EQ(read_gktn(v / "annotation_mask.gktn").shape(), (Shape{3, 16, 16}));
  const json sidecar = json::parse(slurp(v / "targets.json"));
  EXPECT_EQ(sidecar["map_size"], 16);
  EXPECT_EQ(sidecar["num_frames"], 3);
  EXPECT_EQ(sidecar["frames"].size(), 3u);
  // box 56..168 on a 224 frame covers cells 4..12
  EXPECT_EQ(sidecar["frames"][0]["box_cells"], json::array({4.0, 4.0, 12.0, 12.0}));
  EXPECT_EQ(sidecar["frames"][0]["center_x"], 8);
  EXPECT_EQ(read_gktn(v / "heatmaps.gktn")(std::size_t{0}, std::size_t{8}, std::size_t{8}), 1.0f);
  EXPECT_TRUE(json::accept(r.out));
}

TEST_F(CliTest, EncodeEchoesSigma) {
  const std::string ann = (kData / "one_video.json").string();
  ASSERT_EQ(run({"encode-targets", "--annotations", ann, "--sigma", "fixed:2.0", "--out", path("fixed").string()}).code,
            0);
  ASSERT_EQ(run({"encode-targets", "--annotations", ann, "--sigma", "adaptive", "--out", path("adapt").string()}).code,
            0);
  const json fixed = json::parse(slurp(path("fixed") / "walk" / "targets.json"));
  const json adapt = json::parse(slurp(path("adapt") / "walk" / "targets.json"));
  for (const auto& f : fixed["frames"]) EXPECT_EQ(f["sigma"].get<double>(), 2.0);
  // adaptive: max(1, min(w', h') / 6) with an 8-cell box on frame 0
  EXPECT_NEAR(adapt["frames"][0]["sigma"].get<double>(), 8.0 / 6.0, 1e-12);
  EXPECT_NE(fixed["sigma_mode"], adapt["sigma_mode"]);
}

TEST_F(CliTest, EncodeIsByteIdenticalAcrossRuns) {
  const std::string ann = (kData / "one_video.json").string();
  ASSERT_EQ(run({"encode-targets", "--annotations", ann, "--out", path("a").string()}).code, 0);
  ASSERT_EQ(run({"encode-targets", "--annotations", ann, "--out", path("b").string()}).code, 0);
  expect_same_tree(path("a"), path("b"));
}

TEST_F(CliTest, EncodeRejectsMalformedJsonWithPosition) {
  const Outcome r = run({"encode-targets", "--annotations", (kData / "malformed.json").string(), "--out",
                         path("x").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 4"), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());
}

TEST_F(CliTest, EncodeNamesMissingField) {
  const Outcome r = run({"encode-targets", "--annotations", (kData / "missing_field.json").string(), "--out",
                         path("x").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("videos[0].tube"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("t_end"), std::string::npos) << r.err;
}

TEST_F(CliTest, EncodeNamesInvalidVideo) {
  const Outcome r = run({"encode-targets", "--annotations", (kData / "invalid_box.json").string(), "--out",
                         path("x").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("bad_video"), std::string::npos) << r.err;
  EXPECT_EQ(r.err.find("ok_video"), std::string::npos) << r.err;
}

TEST_F(CliTest, EvalSelfIsAllOnes) {
  for (const char* file : {"gt_two_videos.json", "one_video.json", "pred_two_videos.json"}) {
    const std::string p = (kData / file).string();
    const Outcome r = run({"eval", "--gt", p, "--pred", p});
    ASSERT_EQ(r.code, 0) << file << r.err;
    const json m = json::parse(r.out);
    EXPECT_EQ(m["m_tiou"], 1.0) << file;
    EXPECT_EQ(m["m_viou"], 1.0) << file;
    EXPECT_EQ(m["viou_at"]["0.3"], 1.0) << file;
    EXPECT_EQ(m["viou_at"]["0.5"], 1.0) << file;
  }
}

TEST_F(CliTest, EvalHandCorpus) {
  // clip_a: gt frames 0..3, pred frames 2..5 with equal boxes: tIoU 2/6, vIoU 2/6.
  // clip_b: same interval, boxes offset by half a width: every frame IoU 50/150.
  const Outcome r = run({"eval", "--gt", (kData / "gt_two_videos.json").string(), "--pred",
                         (kData / "pred_two_videos.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json m = json::parse(r.out);
  EXPECT_NEAR(m["m_tiou"].get<double>(), (2.0 / 6.0 + 1.0) / 2.0, 1e-12);
  EXPECT_NEAR(m["m_viou"].get<double>(), (2.0 / 6.0 + 50.0 / 150.0) / 2.0, 1e-12);
  EXPECT_EQ(m["viou_at"]["0.3"], 1.0);
  EXPECT_EQ(m["viou_at"]["0.5"], 0.0);
  EXPECT_EQ(m["n_videos"], 2);
}

TEST_F(CliTest, EvalTemporalGroundTruthIsolatesBoxes) {
  const std::string gt = (kData / "gt_two_videos.json").string();
  const std::string pred = (kData / "pred_wrong_intervals.json").string();
  const json plain = json::parse(run({"eval", "--gt", gt, "--pred", pred}).out);
  EXPECT_EQ(plain["m_tiou"], 0.0);
  EXPECT_EQ(plain["m_viou"], 0.0);
  const Outcome r = run({"eval", "--gt", gt, "--pred", pred, "--temporal-gt"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["m_viou"], 1.0);
}

TEST_F(CliTest, EvalIdMismatchListsMissingIds) {
  const Outcome r = run({"eval", "--gt", (kData / "gt_two_videos.json").string(), "--pred",
                         (kData / "pred_mismatched_ids.json").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("clip_b"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("clip_c"), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());
}

TEST_F(CliTest, UnknownFlagsAndCommandsAreParseErrors) {
  EXPECT_EQ(run({"eval", "--gt"}).code, 2);
  EXPECT_EQ(run({"no-such-command"}).code, 2);
  EXPECT_EQ(run({"fit-demo", "--demo", "spiral", "--out", path("x").string()}).code, 2);
  EXPECT_EQ(run({"gradcheck", "--loss", "l2"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, HeatmapDemoConvergesWithDefaults) {
  const Outcome r = run({"fit-demo", "--demo", "heatmap", "--seed", "0", "--out", path("fit").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json s = json::parse(slurp(path("fit") / "summary.json"));
  EXPECT_EQ(s, json::parse(r.out));
  EXPECT_TRUE(s["converged"].get<bool>());
  EXPECT_TRUE(s["argmax_matches"].get<bool>());
  EXPECT_LE(s["final_loss"].get<double>(), 0.01 * s["initial_loss"].get<double>());
  EXPECT_EQ(s["steps"], 2000);
  EXPECT_EQ(s["lr"], 0.5);

  std::istringstream csv(slurp(path("fit") / "loss_curve.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "step,loss");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 2001);
}

TEST_F(CliTest, FitDemoCurvesAreReproducible) {
  for (const char* demo : {"heatmap", "sizes", "temporal"}) {
    const std::string a = path(std::string(demo) + "_a").string(), b = path(std::string(demo) + "_b").string();
    ASSERT_EQ(run({"fit-demo", "--demo", demo, "--seed", "3", "--steps", "300", "--out", a}).code, 0) << demo;
    ASSERT_EQ(run({"fit-demo", "--demo", demo, "--seed", "3", "--steps", "300", "--out", b}).code, 0) << demo;
    expect_same_tree(a, b);
  }
  ASSERT_EQ(run({"fit-demo", "--demo", "heatmap", "--seed", "4", "--steps", "300", "--out", path("c").string()}).code,
            0);
  EXPECT_NE(slurp(path("heatmap_a") / "loss_curve.csv"), slurp(path("c") / "loss_curve.csv"));
}

TEST_F(CliTest, AbsurdLearningRateExitsFourWithStep) {
  for (const char* demo : {"heatmap", "sizes", "temporal"}) {
    const Outcome r = run({"fit-demo", "--demo", demo, "--lr", "1e6", "--out", path(demo).string()});
    EXPECT_EQ(r.code, 4) << demo << r.err;
    EXPECT_NE(r.err.find("(step "), std::string::npos) << r.err;
    const json s = json::parse(slurp(path(demo) / "summary.json"));
    EXPECT_TRUE(s["diverged"].get<bool>());
    EXPECT_GE(s["diverged_at_step"].get<int>(), 1);
  }
}

TEST_F(CliTest, GradcheckExitCodes) {
  for (const char* loss : {"focal", "giou", "smooth-l1", "boundary"}) {
    const Outcome r = run({"gradcheck", "--loss", loss, "--trials", "100", "--tol", "1e-4"});
    EXPECT_EQ(r.code, 0) << loss << r.err;
    EXPECT_TRUE(json::parse(r.out)["passed"].get<bool>());
  }
  EXPECT_EQ(run({"gradcheck", "--loss", "smooth-l1", "--trials", "7", "--seed", "11"}).code, 0);
  const Outcome neg = run({"gradcheck", "--loss", "focal", "--trials", "5", "--tol", "1e-12"});
  EXPECT_EQ(neg.code, 5);
  EXPECT_NE(neg.err.find("worst relative error"), std::string::npos) << neg.err;
}

TEST_F(CliTest, ForwardWithZeroWeights) {
  ASSERT_EQ(run({"synth-features", "--frames", "8", "--seed", "1", "--out", path("feat").string()}).code, 0);
  ASSERT_EQ(run({"init-weights", "--zero", "--out", path("w").string()}).code, 0);
  const Outcome r = run({"forward", "--features", path("feat").string(), "--weights", path("w").string(), "--config",
                         (path("feat") / "config.json").string(), "--out", path("out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const Tensor hm = read_gktn(path("out") / "heatmaps.gktn");
  EXPECT_EQ(hm.shape(), (Shape{8, 16, 16}));
  for (float v : hm.data()) ASSERT_EQ(v, 0.5f);
  const Tensor raw = read_gktn(path("out") / "size_raw.gktn");
  for (float v : raw.data()) ASSERT_EQ(v, 0.0f);  // exp(0) = 1 cell

  const auto videos = cli::read_tube_file(path("out") / "predictions.json");
  ASSERT_EQ(videos.size(), 1u);
  const auto& v = videos[0];
  EXPECT_EQ(v.confidence.value(), 0.5);
  ASSERT_EQ(v.frame_boxes.size(), 8u);
  const double cell = 224.0 / 16.0;
  for (const auto& [t, tb] : v.frame_boxes) {
    // uniform heatmap: the first cell wins, then one cell out on each side clamps to the frame
    EXPECT_EQ(tb.peak_score.value(), 0.5);
    EXPECT_DOUBLE_EQ(tb.box.x1, 0.0);
    EXPECT_DOUBLE_EQ(tb.box.y1, 0.0);
    EXPECT_DOUBLE_EQ(tb.box.x2, cell);
    EXPECT_DOUBLE_EQ(tb.box.y2, cell);
  }
}

TEST_F(CliTest, ForwardIsByteIdenticalAndMatchesLibrary) {
  ASSERT_EQ(run({"synth-features", "--seed", "5", "--out", path("feat").string()}).code, 0);
  ASSERT_EQ(run({"init-weights", "--seed", "9", "--blocks", "2", "--out", path("w").string()}).code, 0);
  const std::vector<std::string> base{"forward", "--features", path("feat").string(), "--weights",
                                      (path("w") / "manifest.json").string(), "--config",
                                      (path("feat") / "config.json").string(), "--out"};
  auto a = base, b = base;
  a.push_back(path("out_a").string());
  b.push_back(path("out_b").string());
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  expect_same_tree(path("out_a"), path("out_b"));

  // the same network, one library call at a time
  const cli::ForwardConfig cfg = cli::read_forward_config(path("feat") / "config.json");
  const PipelineWeights w = cli::load_weights(path("w") / "manifest.json", cfg.map_size);
  const VisualFeatureMap visual{read_gktn(path("feat") / "visual.gktn")};
  const SentenceFeature sentence{read_gktn(path("feat") / "sentence.gktn")};
  const FusedFeature fused = cross_modal_fuse(visual, sentence, w.fusion);
  FusedFeature x{fused.tensor};
  for (const auto& block : w.blocks) x.tensor = mixed_forward(x, block);
  const SpatialPrediction sp = spatial_head_forward(x.tensor, w.spatial);
  EXPECT_EQ(encode_gktn(sp.heatmaps), slurp(path("out_a") / "heatmaps.gktn"));
  EXPECT_EQ(encode_gktn(sp.size_raw), slurp(path("out_a") / "size_raw.gktn"));

  const int T = static_cast<int>(x.tensor.extent(1));
  const auto boxes = decode_boxes(sp, cfg.pipeline.frame_height, cfg.pipeline.frame_width);
  CandidateScheme scheme = CandidateScheme::default_for(T);
  scheme.stride_fraction = cfg.pipeline.candidates.stride_fraction;
  std::vector<TubeCandidate> cands = generate_candidates(scheme);
  apply_predictions(cands, temporal_embed_forward(x.tensor, w.temporal, cands));
  const TemporalInterval selected = select_tube(cands, T);

  const json stdout_json = json::parse(run(a).out);
  EXPECT_EQ(stdout_json["selected"][0].get<double>(), selected.start);
  EXPECT_EQ(stdout_json["selected"][1].get<double>(), selected.end);

  const auto videos = cli::read_tube_file(path("out_a") / "predictions.json");
  ASSERT_EQ(videos.size(), 1u);
  const auto [first, last] = covered_steps(selected, T);
  EXPECT_EQ(videos[0].t_start, first);
  EXPECT_EQ(videos[0].t_end, std::max(last, first + 1));
  ASSERT_EQ(videos[0].frame_boxes.size(), boxes.size());
  for (const auto& b : boxes) {
    const auto& tb = videos[0].frame_boxes.at(b.t);
    EXPECT_EQ(tb.box, b.box);
    EXPECT_EQ(tb.peak_score.value(), b.peak_score);
  }
  double confidence = 0.0;
  for (const auto& c : cands) confidence = std::max(confidence, c.predicted_score);
  EXPECT_EQ(videos[0].confidence.value(), confidence);
}

TEST_F(CliTest, ForwardShapeMismatchNamesTensor) {
  ASSERT_EQ(run({"synth-features", "--visual-dim", "24", "--out", path("feat").string()}).code, 0);
  ASSERT_EQ(run({"init-weights", "--out", path("w").string()}).code, 0);
  Outcome r = run({"forward", "--features", path("feat").string(), "--weights", path("w").string(), "--config",
               (path("feat") / "config.json").string(), "--out", path("out").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("visual.gktn"), std::string::npos) << r.err;

  ASSERT_EQ(run({"synth-features", "--word-dim", "12", "--out", path("feat2").string()}).code, 0);
  r = run({"forward", "--features", path("feat2").string(), "--weights", path("w").string(), "--config",
           (path("feat2") / "config.json").string(), "--out", path("out2").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("sentence.gktn"), std::string::npos) << r.err;
}

TEST_F(CliTest, InProcessEntryMatchesExitCodes) {
  const std::string gt = (kData / "gt_two_videos.json").string();
  const std::string mismatched = (kData / "pred_mismatched_ids.json").string();
  const char* argv[] = {"gkcmn-cli", "eval", "--gt", gt.c_str(), "--pred", mismatched.c_str()};
  std::ostringstream out, err;
  EXPECT_EQ(cli::run_cli(6, argv, out, err), 3);
  EXPECT_TRUE(out.str().empty());
  EXPECT_NE(err.str().find("clip_c"), std::string::npos);
}
