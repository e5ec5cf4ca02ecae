#pragma once

#include <span>
#include <vector>

#include "gkcmn/random.hpp"
#include "gkcmn/tensor.hpp"
#include "gkcmn/tensor_ops.hpp"

namespace gkcmn {

/// Half-open interval [start, end) in feature-step units.
struct TemporalInterval {
  double start = 0;
  double end = 0;

  double length() const noexcept { return end - start; }
  bool valid_within(double sequence_length) const noexcept {
    return start >= 0 && start < end && end <= sequence_length;
  }
  bool operator==(const TemporalInterval&) const = default;
};

/// Intersection over union of two intervals on the real line.
double tiou(const TemporalInterval& a, const TemporalInterval& b);

struct BoundaryOffsets {
  double start = 0;
  double end = 0;

  bool operator==(const BoundaryOffsets&) const = default;
};

struct TubeCandidate {
  TemporalInterval interval;
  double target_iou = 0;      // thresholded tIoU with the ground truth
  double predicted_score = 0;
  BoundaryOffsets offset_target;  // ground truth minus candidate, per boundary
  BoundaryOffsets offset_pred;
};

/// Multi-scale sliding windows. Window of length s advances by
/// max(1, floor(s * stride_fraction)).
struct CandidateScheme {
  std::vector<int> scales;
  double stride_fraction = 0.25;
  int sequence_length = 0;

  /// Scales {T/8, T/4, T/2, T}, rounded, at least 1, deduplicated.
  static CandidateScheme default_for(int sequence_length);
};

std::vector<TubeCandidate> generate_candidates(const CandidateScheme& scheme);

/// Sets target_iou (zeroed below threshold) and offset_target for each candidate.
std::vector<TubeCandidate> label_candidates(std::vector<TubeCandidate> cands, const TemporalInterval& gt,
                                            double threshold);

/// Huber-style smooth L1 with the transition at |x| = 1.
double smooth_l1(double x);
double smooth_l1_derivative(double x);

struct ScoreLoss {
  double loss = 0;
  std::vector<double> grad;  // d loss / d predicted_score
};

struct OffsetLoss {
  double loss = 0;
  std::vector<BoundaryOffsets> grad;  // d loss / d offset_pred
};

/// Which candidates contribute to the boundary regression loss.
enum class BoundaryRegression { positives_only, all };

ScoreLoss confidence_loss(std::span<const TubeCandidate> cands);

/// Mean of smooth-L1 over both boundaries of the regressed candidates. With
/// positives_only, only candidates with target_iou > 0 are regressed and the
/// mean runs over them; the loss is 0 if there are none.
OffsetLoss boundary_loss(std::span<const TubeCandidate> cands,
                         BoundaryRegression mode = BoundaryRegression::positives_only);

/// Highest-scoring candidate (ties: earlier start, then shorter), rectified by
/// its predicted offsets and clamped to [0, sequence_length]. Falls back to
/// the unrectified interval when rectification inverts it.
TemporalInterval select_tube(std::span<const TubeCandidate> cands, int sequence_length);

/// Three parallel 3D convolutions (temporal extents 1, 3, 5) followed by
/// linear score and offset maps over pooled candidate features.
struct TemporalHeadWeights {
  ConvKernel<float> short_range;  // kt = 1
  ConvKernel<float> mid_range;    // kt = 3
  ConvKernel<float> long_range;   // kt = 5
  Tensor score_weight;            // (D')
  float score_bias = 0;
  Tensor offset_weight;           // (2, D')
  Tensor offset_bias;             // (2)

  void validate(std::size_t channels) const;
  static TemporalHeadWeights zeros(std::size_t channels);
  static TemporalHeadWeights random(std::size_t channels, Rng& rng);
};

struct TemporalEmbedding {
  Tensor pooled;    // (D', T) spatially averaged multi-range features
  Tensor features;  // (N, D') candidate features
  std::vector<double> scores;
  std::vector<BoundaryOffsets> offsets;
};

TemporalEmbedding temporal_embed_forward(const Tensor& m_mix, const TemporalHeadWeights& w,
                                         std::span<const TubeCandidate> cands);

/// Copies predicted scores and offsets into the candidates.
void apply_predictions(std::span<TubeCandidate> cands, const TemporalEmbedding& embedding);

/// Integer time steps t with floor(start) <= t < ceil(end), clipped to [0, T).
std::pair<int, int> covered_steps(const TemporalInterval& interval, int sequence_length);

}  // namespace gkcmn
