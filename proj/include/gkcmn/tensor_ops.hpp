#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "gkcmn/tensor.hpp"

namespace gkcmn {

/// Convolution weights of shape (out, in, kh, kw) for 2D or (out, in, kt, kh, kw)
/// for 3D, with a bias of shape (out). Kernel extents are odd so that
/// same-padding is symmetric.
template <typename T>
class ConvKernel {
 public:
  ConvKernel() = default;
  explicit ConvKernel(BasicTensor<T> weights);
  ConvKernel(BasicTensor<T> weights, BasicTensor<T> bias);

  /// 1x1 (or 1x1x1) kernel mapping every channel to itself with weight 1.
  static ConvKernel identity(std::size_t channels, int dims);
  static ConvKernel zeros(std::size_t out_channels, std::size_t in_channels,
                          std::vector<std::size_t> extents);

  int dims() const noexcept { return static_cast<int>(weights_.rank()) - 2; }
  std::size_t out_channels() const { return weights_.extent(0); }
  std::size_t in_channels() const { return weights_.extent(1); }
  std::size_t depth() const { return dims() == 3 ? weights_.extent(2) : 1; }
  std::size_t height() const { return weights_.extent(weights_.rank() - 2); }
  std::size_t width() const { return weights_.extent(weights_.rank() - 1); }

  const BasicTensor<T>& weights() const noexcept { return weights_; }
  const BasicTensor<T>& bias() const noexcept { return bias_; }

 private:
  void validate() const;

  BasicTensor<T> weights_;
  BasicTensor<T> bias_;
};

// Same-padded (zero), stride-1 cross-correlation plus bias.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvKernel<T>& kernel);
template <typename T>
BasicTensor<T> conv3d_forward(const BasicTensor<T>& input, const ConvKernel<T>& kernel);

/// Direct nested-loop definition of the same convolution. Slow on purpose;
/// it is the reference the fast paths are tested against.
template <typename T>
BasicTensor<T> conv_forward_naive(const BasicTensor<T>& input, const ConvKernel<T>& kernel);

/// (C, T, H, W) -> T tensors of shape (C, H, W).
template <typename T>
std::vector<BasicTensor<T>> reshape_frames(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> reshape_frames_back(std::span<const BasicTensor<T>> frames);

/// Applies a 2D kernel to every frame of a (C, T, H, W) tensor independently.
template <typename T>
BasicTensor<T> conv2d_per_frame(const BasicTensor<T>& input, const ConvKernel<T>& kernel);

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::size_t begin, std::size_t count);

enum class Activation { relu, sigmoid, exp, identity };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation kind);

template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& x, Activation kind);

template <typename T>
T sigmoid(T x);

/// Corner-aligned bilinear upsampling of a (C, h, w) tensor.
template <typename T>
BasicTensor<T> upsample_bilinear(const BasicTensor<T>& input, std::size_t out_h, std::size_t out_w);

// Elementwise helpers used by the network blocks.
template <typename T>
BasicTensor<T>& add_inplace(BasicTensor<T>& acc, const BasicTensor<T>& x);

}  // namespace gkcmn
