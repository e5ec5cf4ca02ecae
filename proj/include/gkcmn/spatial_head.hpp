#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gkcmn/box.hpp"
#include "gkcmn/random.hpp"
#include "gkcmn/tensor.hpp"
#include "gkcmn/tensor_ops.hpp"

namespace gkcmn {

/// Kernel width used for a box's heatmap. Adaptive ties the width to the
/// rescaled box: max(1, min(w', h') / 6) cells.
struct SigmaPolicy {
  enum class Mode { adaptive, fixed };
  Mode mode = Mode::adaptive;
  double value = 0.0;

  static SigmaPolicy adaptive() { return {}; }
  static SigmaPolicy fixed(double sigma);
  /// Accepts "adaptive" or "fixed:<positive real>".
  static SigmaPolicy parse(std::string_view text);

  double resolve(const BoundingBox& box_cells) const;
  std::string describe() const;
};

/// One annotated frame: frame index plus box in pixel coordinates.
struct FrameBox {
  int t = 0;
  BoundingBox box;
};

struct FrameTarget {
  int t = 0;
  int center_x = 0;  // column of the peak cell
  int center_y = 0;  // row of the peak cell
  double sigma = 1.0;
  BoundingBox box_cells;   // box rescaled to the L x L map
  BoundingBox box_pixels;  // original annotation
};

/// Dense supervision for the spatial head.
///   heatmaps        (T, L, L)     Gaussian bumps, peak 1 at each center
///   size_targets    (T, 4, L, L)  (left, top, right, bottom) distances in cells
///   annotation_mask (T, L, L)     1 on cells inside the rescaled box
/// Frames without a box are all zero in every tensor.
struct GaussianTargets {
  Tensor heatmaps;
  Tensor size_targets;
  Tensor annotation_mask;
  std::vector<FrameTarget> frames;  // annotated frames, increasing t
  std::size_t map_size = 0;

  std::size_t frame_count() const { return heatmaps.extent(0); }
  const FrameTarget* frame(int t) const;
};

GaussianTargets encode_gaussian_targets(std::span<const FrameBox> boxes, int num_frames, int frame_h, int frame_w,
                                        int map_size, const SigmaPolicy& sigma = SigmaPolicy::adaptive());

/// Exponents and positive threshold of the penalty-reduced focal loss.
struct FocalConfig {
  double alpha = 2.0;  // exponent on the prediction term
  double beta = 4.0;   // exponent on (1 - h) for negatives
  double gamma = 0.8;  // cells with h > gamma are positives

  void validate() const;
};

/// Clamp applied inside the logarithms of the focal loss.
inline constexpr double kFocalEpsilon = 1e-6;

template <typename T>
struct LossGrad {
  double loss = 0.0;
  BasicTensor<T> grad;
};

/// Focal heatmap loss normalized by the number of annotated boxes, with the
/// analytic gradient with respect to the predicted heatmap. Predictions must
/// lie in [0, 1].
template <typename T>
LossGrad<T> focal_loss(const BasicTensor<T>& pred, const GaussianTargets& targets, const FocalConfig& cfg = {});

/// Box that a cell at (x, y) decodes to from (left, top, right, bottom) distances.
inline BoundingBox box_from_distances(double x, double y, double l, double t, double r, double b) {
  return {x - l, y - t, x + r, y + b};
}

/// Mean of 1 - GIoU over masked cells, with the gradient with respect to the
/// raw (log-distance) size predictions of shape (T, 4, L, L).
template <typename T>
LossGrad<T> giou_loss(const BasicTensor<T>& size_raw, const GaussianTargets& targets);

/// Sigmoid heatmaps (T, L, L) and raw log-distances (T, 4, L, L).
struct SpatialPrediction {
  Tensor heatmaps;
  Tensor size_raw;
};

struct DecodedBox {
  int t = 0;
  BoundingBox box;  // pixels, clamped to the frame
  double peak_score = 0.0;
  int cell_x = 0;
  int cell_y = 0;
};

/// One box per frame from the heatmap argmax (ties: smallest row-major index).
std::vector<DecodedBox> decode_boxes(const SpatialPrediction& pred, int frame_h, int frame_w);

/// 1x1 heads applied after upsampling to map_size x map_size.
struct SpatialHeadWeights {
  ConvKernel<float> heatmap;  // (1, D', 1, 1)
  ConvKernel<float> size;     // (4, D', 1, 1)
  std::size_t map_size = 16;

  void validate(std::size_t channels) const;
  static SpatialHeadWeights zeros(std::size_t channels, std::size_t map_size);
  static SpatialHeadWeights random(std::size_t channels, std::size_t map_size, Rng& rng);
};

SpatialPrediction spatial_head_forward(const Tensor& m_mix, const SpatialHeadWeights& w);

}  // namespace gkcmn
