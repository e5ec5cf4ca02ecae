#include "gkcmn/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "gkcmn/cli/annotations.hpp"
#include "gkcmn/cli/weights_manifest.hpp"
#include "gkcmn/errors.hpp"
#include "gkcmn/gradcheck_suite.hpp"
#include "gkcmn/metrics.hpp"
#include "gkcmn/optimization.hpp"
#include "gkcmn/tensor_io.hpp"
#include "json.hpp"

namespace gkcmn::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Maps library and CLI exceptions to the exit-code contract.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitParse;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DivergenceError& e) {
    err << "error: diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

Tensor read_tensor(const fs::path& path) {
  if (!fs::exists(path)) throw ParseError("missing tensor file " + path.string());
  try {
    return read_gktn(path);
  } catch (const FormatError& e) {
    throw ParseError(path.filename().string() + ": " + e.what());
  }
}

json box_array(const BoundingBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

std::string threshold_key(double r) {
  std::ostringstream ss;
  ss << r;
  return ss.str();
}

void check_video_id(const std::string& id) {
  if (id.empty() || id == "." || id == ".." || id.find_first_of("/\\") != std::string::npos) {
    throw ValidationError("video '" + id + "': id cannot be used as a directory name");
  }
}

}  // namespace

DemoDefaults demo_defaults(const std::string& demo) {
  if (demo == "heatmap") return {2000, 0.5};
  if (demo == "sizes") return {40000, 5.0};
  if (demo == "temporal") return {2000, 0.5};
  throw ParseError("unknown demo '" + demo + "' (expected heatmap, sizes or temporal)");
}

int cmd_encode_targets(const EncodeOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    SigmaPolicy sigma;
    try {
      sigma = SigmaPolicy::parse(o.sigma);
    } catch (const DomainError& e) {
      throw ParseError(std::string("--sigma: ") + e.what());
    }
    if (o.map_size < 2) throw ParseError("--map-size must be at least 2");
    const auto videos = read_tube_file(o.annotations);
    for (const auto& v : videos) check_video_id(v.id);

    json listing = json::array();
    for (const auto& v : videos) {
      std::vector<FrameBox> boxes;
      for (const auto& [t, tb] : v.boxes) boxes.push_back({t, tb.box});
      GaussianTargets targets;
      try {
        targets = encode_gaussian_targets(boxes, v.num_frames, v.frame_height, v.frame_width, o.map_size, sigma);
      } catch (const std::invalid_argument& e) {
        throw ValidationError("video '" + v.id + "': " + e.what());
      }
      const fs::path dir = o.out / v.id;
      fs::create_directories(dir);
      write_gktn(dir / "heatmaps.gktn", targets.heatmaps);
      write_gktn(dir / "size_targets.gktn", targets.size_targets);
      write_gktn(dir / "annotation_mask.gktn", targets.annotation_mask);

      json frames = json::array();
      for (const auto& f : targets.frames) {
        frames.push_back({{"t", f.t},
                          {"center_x", f.center_x},
                          {"center_y", f.center_y},
                          {"sigma", f.sigma},
                          {"box_cells", box_array(f.box_cells)},
                          {"box_pixels", box_array(f.box_pixels)}});
      }
      const json sidecar = {{"video_id", v.id},
                            {"num_frames", v.num_frames},
                            {"map_size", o.map_size},
                            {"sigma_mode", sigma.describe()},
                            {"frames", frames}};
      write_text(dir / "targets.json", sidecar.dump(2) + "\n");
      listing.push_back(v.id);
    }
    out << json{{"videos", listing}, {"out", o.out.string()}}.dump() << "\n";
    return int{kExitOk};
  });
}

int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto gt = read_tube_file(o.gt);
    const auto pred = read_tube_file(o.pred);
    const auto results = match_results(gt, pred, o.temporal_gt);
    const MetricsReport report = aggregate(results);
    json at = json::object();
    for (const auto& [r, v] : report.viou_at) at[threshold_key(r)] = v;
    const json j = {{"m_tiou", report.m_tiou}, {"m_viou", report.m_viou}, {"viou_at", at}, {"n_videos", report.n_videos}};
    out << j.dump(2) << "\n";
    return int{kExitOk};
  });
}

int cmd_fit_demo(const FitDemoOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const DemoDefaults d = demo_defaults(o.demo);
    OptimizerConfig cfg;
    cfg.steps = o.steps.value_or(d.steps);
    cfg.learning_rate = o.lr.value_or(d.lr);
    cfg.seed = o.seed;
    cfg.backtracking = o.backtracking;
    try {
      cfg.validate();
    } catch (const DomainError& e) {
      throw ParseError(e.what());
    }
    fs::create_directories(o.out);

    json summary = {{"demo", o.demo},
                    {"seed", o.seed},
                    {"steps", cfg.steps},
                    {"lr", cfg.learning_rate},
                    {"backtracking", cfg.backtracking}};
    Rng rng(o.seed);
    FitTrace trace;
    bool converged = false;
    try {
      if (o.demo == "heatmap") {
        const GaussianTargets targets = make_demo_targets(rng, 4, 16);
        const HeatmapFit fit = fit_heatmap_demo(targets, cfg);
        converged = fit.final() <= 0.01 * fit.initial() && fit.argmax_matches;
        summary["argmax_matches"] = fit.argmax_matches;
        trace = fit;
      } else if (o.demo == "sizes") {
        const GaussianTargets targets = make_demo_targets(rng, 4, 16);
        const SizesFit fit = fit_sizes_demo(targets, cfg);
        converged = fit.mean_giou >= 0.95;
        summary["mean_giou"] = fit.mean_giou;
        trace = fit;
      } else {
        const int T = 32;
        const TemporalInterval gt = make_demo_interval(rng, T);
        const TemporalFit fit = fit_temporal_demo(gt, CandidateScheme::default_for(T), cfg);
        converged = fit.selected_tiou >= 0.9;
        summary["ground_truth"] = {gt.start, gt.end};
        summary["selected"] = {fit.selected.start, fit.selected.end};
        summary["selected_tiou"] = fit.selected_tiou;
        trace = fit;
      }
    } catch (const DivergenceError& e) {
      summary["diverged"] = true;
      summary["diverged_at_step"] = e.step();
      summary["converged"] = false;
      write_text(o.out / "summary.json", summary.dump(2) + "\n");
      throw;
    }

    std::ostringstream csv;
    csv << "step,loss\n" << std::setprecision(17);
    for (std::size_t i = 0; i < trace.loss_curve.size(); ++i) csv << i << "," << trace.loss_curve[i] << "\n";
    write_text(o.out / "loss_curve.csv", csv.str());

    summary["diverged"] = false;
    summary["initial_loss"] = trace.initial();
    summary["final_loss"] = trace.final();
    summary["ratio"] = trace.initial() > 0 ? trace.final() / trace.initial() : 0.0;
    summary["converged"] = converged;
    write_text(o.out / "summary.json", summary.dump(2) + "\n");
    out << summary.dump(2) << "\n";
    if (!converged) err << "warning: " << o.demo << " demo did not reach its target\n";
    return int{kExitOk};
  });
}

int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    CheckedLoss which;
    try {
      which = parse_checked_loss(o.loss);
    } catch (const DomainError& e) {
      throw ParseError(e.what());
    }
    if (o.trials < 1) throw ParseError("--trials must be positive");
    if (!(o.tol > 0)) throw ParseError("--tol must be positive");
    const GradCheckSummary s = run_gradcheck_suite(which, o.trials, o.tol, o.seed);
    const json j = {{"loss", std::string(to_string(which))},
                    {"trials", s.trials},
                    {"tolerance", o.tol},
                    {"failed_trials", s.failed_trials},
                    {"worst_rel_error", s.worst_rel_error},
                    {"worst_trial", s.worst_trial},
                    {"worst_index", s.worst_index},
                    {"passed", s.passed()}};
    out << j.dump(2) << "\n";
    if (s.passed()) return int{kExitOk};
    err << "gradcheck failed: " << s.failed_trials << " of " << s.trials << " trials above tolerance " << o.tol
        << "; worst relative error " << s.worst_rel_error << " in trial " << s.worst_trial << " at coordinate "
        << s.worst_index << "\n";
    return int{kExitGradcheck};
  });
}

ForwardConfig read_forward_config(const fs::path& path) {
  const json doc = read_json(path);
  const std::string src = path.string();
  if (!doc.is_object()) throw ParseError(src + ": top level must be an object");
  const auto int_of = [&](const char* key, int fallback) {
    if (!doc.contains(key)) return fallback;
    if (!doc[key].is_number_integer()) throw ParseError(src + ": " + key + ": expected an integer");
    return doc[key].get<int>();
  };
  ForwardConfig c;
  if (doc.contains("video_id")) {
    if (!doc["video_id"].is_string()) throw ParseError(src + ": video_id: expected a string");
    c.pipeline.video_id = doc["video_id"].get<std::string>();
  } else {
    c.pipeline.video_id = "video";
  }
  c.pipeline.frame_height = int_of("frame_height", 224);
  c.pipeline.frame_width = int_of("frame_width", 224);
  const int L = int_of("map_size", 16);
  if (L < 2) throw ValidationError(src + ": map_size must be at least 2");
  c.map_size = static_cast<std::size_t>(L);
  if (c.pipeline.frame_height < 1 || c.pipeline.frame_width < 1) {
    throw ValidationError(src + ": frame extents must be positive");
  }
  if (doc.contains("candidates")) {
    const json& cand = doc["candidates"];
    if (!cand.is_object()) throw ParseError(src + ": candidates: expected an object");
    if (cand.contains("scales")) {
      if (!cand["scales"].is_array()) throw ParseError(src + ": candidates.scales: expected a list");
      for (const auto& s : cand["scales"]) {
        if (!s.is_number_integer()) throw ParseError(src + ": candidates.scales: expected integers");
        c.pipeline.candidates.scales.push_back(s.get<int>());
      }
    }
    if (cand.contains("stride_fraction")) {
      if (!cand["stride_fraction"].is_number()) throw ParseError(src + ": candidates.stride_fraction: expected a number");
      c.pipeline.candidates.stride_fraction = cand["stride_fraction"].get<double>();
    }
  }
  return c;
}

int cmd_forward(const ForwardOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ForwardConfig cfg = read_forward_config(o.config);
    check_video_id(cfg.pipeline.video_id);
    const fs::path manifest = fs::is_directory(o.weights) ? o.weights / "manifest.json" : o.weights;
    const PipelineWeights w = load_weights(manifest, cfg.map_size);

    VisualFeatureMap visual{read_tensor(o.features / "visual.gktn")};
    SentenceFeature sentence{read_tensor(o.features / "sentence.gktn")};
    if (visual.tensor.rank() != 4) {
      throw ValidationError("visual.gktn must be (d, T, h, w), got " + to_string(visual.tensor.shape()));
    }
    if (sentence.words.rank() != 2) {
      throw ValidationError("sentence.gktn must be (N, D), got " + to_string(sentence.words.shape()));
    }
    if (w.fusion.visual_gate.rank() == 2 && w.fusion.visual_gate.extent(0) != visual.feature_dim()) {
      throw ValidationError("visual.gktn has " + std::to_string(visual.feature_dim()) + " channels, W_v1 expects " +
                            std::to_string(w.fusion.visual_gate.extent(0)));
    }
    if (w.fusion.sentence_gate.rank() == 2 && w.fusion.sentence_gate.extent(0) != sentence.word_dim()) {
      throw ValidationError("sentence.gktn has word dimension " + std::to_string(sentence.word_dim()) +
                            ", W_s1 expects " + std::to_string(w.fusion.sentence_gate.extent(0)));
    }
    const PipelineOutput result = run_pipeline(visual, sentence, w, cfg.pipeline);

    const int T = static_cast<int>(visual.frames());
    fs::create_directories(o.out);
    write_gktn(o.out / "heatmaps.gktn", result.spatial.heatmaps);
    write_gktn(o.out / "size_raw.gktn", result.spatial.size_raw);

    VideoTube tube;
    tube.id = cfg.pipeline.video_id;
    tube.num_frames = T;
    tube.frame_height = cfg.pipeline.frame_height;
    tube.frame_width = cfg.pipeline.frame_width;
    const auto [first, last] = covered_steps(result.selected, T);
    tube.t_start = first;
    tube.t_end = std::max(last, first + 1);
    double confidence = 0.0;
    for (const auto& c : result.candidates) confidence = std::max(confidence, c.predicted_score);
    tube.confidence = confidence;
    for (const auto& b : result.boxes) {
      const TubeBox tb{b.box, b.peak_score};
      tube.frame_boxes.emplace(b.t, tb);
      if (b.t >= tube.t_start && b.t < tube.t_end) tube.boxes.emplace(b.t, tb);
    }
    write_text(o.out / "predictions.json", dump_tube_file({tube}));

    out << json{{"video_id", tube.id},
                {"selected", {result.selected.start, result.selected.end}},
                {"confidence", confidence},
                {"out", o.out.string()}}
               .dump()
        << "\n";
    return int{kExitOk};
  });
}

int cmd_init_weights(const InitWeightsOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Activation act;
    try {
      act = parse_activation(o.activation);
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string("--activation: ") + e.what());
    }
    const PipelineDims& d = o.dims;
    if (!d.visual || !d.word || !d.gate || !d.interaction || !d.visual_out) {
      throw ParseError("every dimension must be positive");
    }
    PipelineWeights w;
    if (o.zero) {
      w.fusion = {Tensor(Shape{d.visual, d.gate}), Tensor(Shape{d.word, d.gate}), Tensor(Shape{d.gate, d.interaction}),
                  Tensor(Shape{d.visual, d.visual_out}), act};
      for (std::size_t i = 0; i < o.blocks; ++i) w.blocks.push_back(MixedConvWeights::zeros(d.fused()));
      w.spatial = SpatialHeadWeights::zeros(d.fused(), 16);
      w.temporal = TemporalHeadWeights::zeros(d.fused());
    } else {
      Rng rng(o.seed);
      w = PipelineWeights::random(d, 16, o.blocks, rng, act);
    }
    save_weights(o.out, w);
    out << json{{"manifest", (o.out / "manifest.json").string()}}.dump() << "\n";
    return int{kExitOk};
  });
}

int cmd_synth_features(const SynthFeaturesOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!o.visual_dim || !o.word_dim || !o.frames || !o.height || !o.width || !o.words) {
      throw ParseError("every extent must be positive");
    }
    Rng rng(o.seed);
    Tensor visual(Shape{o.visual_dim, o.frames, o.height, o.width});
    for (auto& v : visual.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor sentence(Shape{o.words, o.word_dim});
    for (auto& v : sentence.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    fs::create_directories(o.out);
    write_gktn(o.out / "visual.gktn", visual);
    write_gktn(o.out / "sentence.gktn", sentence);
    const json config = {{"video_id", "synthetic"},
                         {"frame_height", 224},
                         {"frame_width", 224},
                         {"map_size", 16},
                         {"candidates", {{"stride_fraction", 0.25}}}};
    write_text(o.out / "config.json", config.dump(2) + "\n");
    out << json{{"out", o.out.string()}}.dump() << "\n";
    return int{kExitOk};
  });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"gkcmn: grounding heads, losses and metrics", "gkcmn-cli"};
  app.require_subcommand(1);

  EncodeOptions enc;
  auto* c_enc = app.add_subcommand("encode-targets", "Gaussian heatmap, size and mask targets per video");
  c_enc->add_option("--annotations", enc.annotations, "annotation JSON")->required();
  c_enc->add_option("--map-size", enc.map_size, "feature map size L")->capture_default_str();
  c_enc->add_option("--sigma", enc.sigma, "adaptive or fixed:<value>")->capture_default_str();
  c_enc->add_option("--out", enc.out, "output directory")->required();

  EvalOptions ev;
  auto* c_eval = app.add_subcommand("eval", "tIoU / vIoU metrics of predictions against ground truth");
  c_eval->add_option("--gt", ev.gt, "ground-truth JSON")->required();
  c_eval->add_option("--pred", ev.pred, "prediction JSON")->required();
  c_eval->add_flag("--temporal-gt", ev.temporal_gt, "score boxes inside the ground-truth interval");

  FitDemoOptions fit;
  auto* c_fit = app.add_subcommand("fit-demo", "fit free parameters to a synthetic target");
  c_fit->add_option("--demo", fit.demo, "heatmap, sizes or temporal")->required();
  c_fit->add_option("--steps", fit.steps, "gradient steps (demo default if omitted)");
  c_fit->add_option("--lr", fit.lr, "learning rate (demo default if omitted)");
  c_fit->add_option("--seed", fit.seed, "random seed")->capture_default_str();
  c_fit->add_flag("--backtracking", fit.backtracking, "halve steps that increase the loss");
  c_fit->add_option("--out", fit.out, "output directory")->required();

  GradcheckOptions gc;
  auto* c_gc = app.add_subcommand("gradcheck", "compare analytic gradients to central differences");
  c_gc->add_option("--loss", gc.loss, "focal, giou, smooth-l1 or boundary")->required();
  c_gc->add_option("--trials", gc.trials, "random instances")->capture_default_str();
  c_gc->add_option("--tol", gc.tol, "relative error tolerance")->capture_default_str();
  c_gc->add_option("--seed", gc.seed, "random seed")->capture_default_str();

  ForwardOptions fw;
  auto* c_fw = app.add_subcommand("forward", "run the network on feature tensors");
  c_fw->add_option("--features", fw.features, "directory with visual.gktn and sentence.gktn")->required();
  c_fw->add_option("--weights", fw.weights, "weights manifest or its directory")->required();
  c_fw->add_option("--config", fw.config, "config JSON")->required();
  c_fw->add_option("--out", fw.out, "output directory")->required();

  InitWeightsOptions iw;
  auto* c_iw = app.add_subcommand("init-weights", "write a weights directory");
  c_iw->add_option("--visual-dim", iw.dims.visual, "d")->capture_default_str();
  c_iw->add_option("--word-dim", iw.dims.word, "D")->capture_default_str();
  c_iw->add_option("--gate-dim", iw.dims.gate, "d_p")->capture_default_str();
  c_iw->add_option("--interaction-dim", iw.dims.interaction, "c1")->capture_default_str();
  c_iw->add_option("--visual-out-dim", iw.dims.visual_out, "c2")->capture_default_str();
  c_iw->add_option("--blocks", iw.blocks, "mixed convolution blocks")->capture_default_str();
  c_iw->add_option("--activation", iw.activation, "relu, sigmoid, exp or identity")->capture_default_str();
  c_iw->add_flag("--zero", iw.zero, "all-zero weights");
  c_iw->add_option("--seed", iw.seed, "random seed")->capture_default_str();
  c_iw->add_option("--out", iw.out, "output directory")->required();

  SynthFeaturesOptions sf;
  auto* c_sf = app.add_subcommand("synth-features", "write random feature tensors and a config");
  c_sf->add_option("--visual-dim", sf.visual_dim, "d")->capture_default_str();
  c_sf->add_option("--word-dim", sf.word_dim, "D")->capture_default_str();
  c_sf->add_option("--frames", sf.frames, "T")->capture_default_str();
  c_sf->add_option("--height", sf.height, "feature rows")->capture_default_str();
  c_sf->add_option("--width", sf.width, "feature columns")->capture_default_str();
  c_sf->add_option("--words", sf.words, "N")->capture_default_str();
  c_sf->add_option("--seed", sf.seed, "random seed")->capture_default_str();
  c_sf->add_option("--out", sf.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    app.exit(e, err, err);
    return kExitParse;
  }

  if (*c_enc) return cmd_encode_targets(enc, out, err);
  if (*c_eval) return cmd_eval(ev, out, err);
  if (*c_fit) return cmd_fit_demo(fit, out, err);
  if (*c_gc) return cmd_gradcheck(gc, out, err);
  if (*c_fw) return cmd_forward(fw, out, err);
  if (*c_iw) return cmd_init_weights(iw, out, err);
  return cmd_synth_features(sf, out, err);
}

}  // namespace gkcmn::cli
