#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "gkcmn/random.hpp"
#include "gkcmn/spatial_head.hpp"
#include "gkcmn/temporal_head.hpp"

namespace gkcmn {

/// Balance between the four training losses.
struct LossWeights {
  double localization = 1.0;     // heatmap focal loss
  double size_regression = 2.0;  // GIoU size loss
  double confidence = 0.2;       // tube confidence loss
  double boundary = 0.1;         // tube boundary loss

  void validate() const;
};

struct LossComponents {
  double localization = 0;
  double size_regression = 0;
  double confidence = 0;
  double boundary = 0;
};

double total_loss(const LossComponents& parts, const LossWeights& weights = {});

struct OptimizerConfig {
  double learning_rate = 0.003;
  int steps = 1;
  std::uint64_t seed = 0;
  /// Halve the step until the loss does not increase.
  bool backtracking = false;
  // Every demo throws DivergenceError when its loss turns non-finite or
  // grows past 100x max(initial loss, 1).

  void validate() const;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

using LossFunction = std::function<LossGrad<double>(const TensorD&)>;

struct GradCheckOptions {
  double step = 1e-6;
  /// Tensors larger than this are checked on a random subset of this many
  /// coordinates (never fewer than 64).
  std::size_t max_coordinates = 4096;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  std::vector<std::size_t> failing;
  std::size_t checked = 0;

  bool passed() const { return failing.empty(); }
};

/// |a - b| / max(1e-8, |a| + |b|)
double gradient_relative_error(double analytic, double numeric);

/// Compares the analytic gradient of `loss` at `params` to central differences.
/// Throws DomainError if the loss is non-finite at a perturbed point.
GradCheckReport grad_check(const LossFunction& loss, const TensorD& params, double tolerance,
                           const GradCheckOptions& options = {});

// ---------------------------------------------------------------------------
// Fit demos

enum class InitMode {
  random,  // uniform(-0.1, 0.1) from the seeded generator
  exact,   // parameters that reproduce the targets
};

struct FitTrace {
  std::vector<double> loss_curve;  // entry 0 is the initial loss, then one per step

  double initial() const { return loss_curve.front(); }
  double final() const { return loss_curve.back(); }
};

struct HeatmapFit : FitTrace {
  TensorD logits;    // (T, L, L) free parameters
  TensorD heatmaps;  // sigmoid(logits)
  bool argmax_matches = false;  // every annotated frame peaks at its encoded center
};

/// Free logits per cell, heatmap = sigmoid(logits), gradient descent on the focal loss.
/// Throws DivergenceError if the loss turns non-finite or a prediction saturates to 0 or 1.
HeatmapFit fit_heatmap_demo(const GaussianTargets& targets, const OptimizerConfig& cfg, const FocalConfig& focal = {},
                            InitMode init = InitMode::random);

struct SizesFit : FitTrace {
  TensorD size_raw;                 // (T, 4, L, L)
  double mean_giou = 0;             // over masked cells
  std::vector<BoundingBox> decoded;  // per annotated frame, at its center cell, in cells
};

/// Free log-distances per cell, gradient descent on the GIoU loss.
SizesFit fit_sizes_demo(const GaussianTargets& targets, const OptimizerConfig& cfg, InitMode init = InitMode::random);

struct TemporalFitOptions {
  LossWeights weights;
  double threshold = 0.3;
  BoundaryRegression regression = BoundaryRegression::positives_only;
};

struct TemporalFit : FitTrace {
  std::vector<TubeCandidate> candidates;
  TemporalInterval selected;
  double selected_tiou = 0;
};

/// Free score and offsets per candidate, gradient descent on the weighted sum
/// of the confidence and boundary losses, followed by tube selection.
TemporalFit fit_temporal_demo(const TemporalInterval& gt, const CandidateScheme& scheme, const OptimizerConfig& cfg,
                              const TemporalFitOptions& options = {}, InitMode init = InitMode::random);

/// Synthetic annotated clip: one box per frame, sides between min_cells and
/// max_cells feature cells, on a frame of frame_size x frame_size pixels.
GaussianTargets make_demo_targets(Rng& rng, int frames, int map_size, int frame_size = 224, double min_cells = 4.0,
                                  double max_cells = 8.0, const SigmaPolicy& sigma = SigmaPolicy::adaptive());

/// Random ground-truth interval of integer bounds and length >= min_length.
TemporalInterval make_demo_interval(Rng& rng, int sequence_length, int min_length = 4);

}  // namespace gkcmn
