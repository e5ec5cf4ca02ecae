#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "gkcmn/cli/errors.hpp"
#include "gkcmn/pipeline.hpp"

namespace gkcmn::cli {

struct EncodeOptions {
  std::filesystem::path annotations;
  int map_size = 16;
  std::string sigma = "adaptive";
  std::filesystem::path out;
};

struct EvalOptions {
  std::filesystem::path gt;
  std::filesystem::path pred;
  bool temporal_gt = false;
};

struct FitDemoOptions {
  std::string demo;
  std::optional<int> steps;      // per-demo default when unset
  std::optional<double> lr;      // per-demo default when unset
  std::uint64_t seed = 0;
  bool backtracking = false;
  std::filesystem::path out;
};

struct GradcheckOptions {
  std::string loss;
  int trials = 100;
  double tol = 1e-4;
  std::uint64_t seed = 0;
};

struct ForwardOptions {
  std::filesystem::path features;  // directory with visual.gktn and sentence.gktn
  std::filesystem::path weights;   // manifest.json or its directory
  std::filesystem::path config;
  std::filesystem::path out;
};

struct InitWeightsOptions {
  PipelineDims dims;
  std::size_t blocks = 1;
  std::string activation = "relu";
  bool zero = false;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

struct SynthFeaturesOptions {
  std::size_t visual_dim = 32;
  std::size_t word_dim = 32;
  std::size_t frames = 16;
  std::size_t height = 7;
  std::size_t width = 7;
  std::size_t words = 8;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

/// Default step count and learning rate of each demo.
struct DemoDefaults {
  int steps;
  double lr;
};
DemoDefaults demo_defaults(const std::string& demo);

// Each command returns its exit code. Machine-readable output goes to out,
// diagnostics to err.
int cmd_encode_targets(const EncodeOptions& o, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err);
int cmd_fit_demo(const FitDemoOptions& o, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out, std::ostream& err);
int cmd_forward(const ForwardOptions& o, std::ostream& out, std::ostream& err);
int cmd_init_weights(const InitWeightsOptions& o, std::ostream& out, std::ostream& err);
int cmd_synth_features(const SynthFeaturesOptions& o, std::ostream& out, std::ostream& err);

/// Reads the forward config JSON.
///   {"video_id", "frame_height", "frame_width", "map_size",
///    "candidates": {"scales": [...], "stride_fraction": 0.25}}
struct ForwardConfig {
  PipelineConfig pipeline;
  std::size_t map_size = 16;
};
ForwardConfig read_forward_config(const std::filesystem::path& path);

/// Parses argv and dispatches to a command.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gkcmn::cli
