#pragma once

#include <span>

#include "gkcmn/fusion.hpp"
#include "gkcmn/random.hpp"
#include "gkcmn/tensor_ops.hpp"

namespace gkcmn {

/// Kernels of one mixed convolution block. Every kernel maps D' channels to
/// D' channels so that the residual sums are well-typed.
struct MixedConvWeights {
  ConvKernel<float> spatial;            // 2D kernel applied per frame
  ConvKernel<float> serial_temporal;    // 3D kernel after the per-frame 2D stage
  ConvKernel<float> parallel_temporal;  // 3D branch of the parallel network
  ConvKernel<float> shortcut_temporal;  // 3D branch of the mixed network

  void validate(std::size_t channels) const;

  /// Bias-free zero kernels with the given extents.
  static MixedConvWeights zeros(std::size_t channels, std::size_t k2 = 3, std::size_t k3 = 3);
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero bias.
  static MixedConvWeights random(std::size_t channels, Rng& rng, std::size_t k2 = 3, std::size_t k3 = 3);
};

/// Spatial 2D convolution per frame followed by a 3D convolution.
Tensor serial_forward(const FusedFeature& f, const MixedConvWeights& w);
/// Sum of a 3D branch and a per-frame 2D branch.
Tensor parallel_forward(const FusedFeature& f, const MixedConvWeights& w);
/// 3D branch + serial network + identity shortcut.
Tensor mixed_forward(const FusedFeature& f, const MixedConvWeights& w);

/// Chains mixed blocks; an empty block list returns the input unchanged.
Tensor mixed_network_forward(const FusedFeature& f, std::span<const MixedConvWeights> blocks);

}  // namespace gkcmn
