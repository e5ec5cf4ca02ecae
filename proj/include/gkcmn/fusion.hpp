#pragma once

#include "gkcmn/tensor.hpp"
#include "gkcmn/tensor_ops.hpp"

namespace gkcmn {

/// Per-frame visual features, shape (d, T, H/r_h, W/r_w).
struct VisualFeatureMap {
  Tensor tensor;
  std::size_t source_height = 0;  // H, optional bookkeeping
  std::size_t source_width = 0;   // W

  std::size_t feature_dim() const { return tensor.extent(0); }
  std::size_t frames() const { return tensor.extent(1); }
  std::size_t height() const { return tensor.extent(2); }
  std::size_t width() const { return tensor.extent(3); }
};

/// Word-level sentence features, shape (N, D).
struct SentenceFeature {
  Tensor words;

  std::size_t word_count() const { return words.extent(0); }
  std::size_t word_dim() const { return words.extent(1); }
};

/// Channel-mixing matrices, each stored as (in_channels, out_channels) so that
/// a feature row vector times the matrix gives the projected vector.
struct FusionWeights {
  Tensor visual_gate;       // W_v1: d -> d_p
  Tensor sentence_gate;     // W_s1: D -> d_p
  Tensor interaction_proj;  // W_f2: d_p -> c1
  Tensor visual_proj;       // W_v2: d -> c2
  Activation act = Activation::relu;

  /// Throws ShapeError unless the matrices chain for visual dim d and word dim D.
  void validate(std::size_t d, std::size_t D) const;
  std::size_t output_channels() const { return interaction_proj.extent(1) + visual_proj.extent(1); }
};

/// Fused cross-modal feature, shape (c1 + c2, T, h, w).
struct FusedFeature {
  Tensor tensor;
};

Tensor mean_pool_words(const SentenceFeature& s);

/// Broadcasts a (D) vector to every location of a (D, T, h, w) tensor.
Tensor repeat_sentence(const Tensor& pooled, std::size_t frames, std::size_t height, std::size_t width);

/// Applies a (in, out) matrix at every location of a (in, ...) tensor, bias-free.
Tensor project_channels(const Tensor& x, const Tensor& matrix);

FusedFeature cross_modal_fuse(const VisualFeatureMap& v, const SentenceFeature& s, const FusionWeights& w);

}  // namespace gkcmn
