#include "gkcmn/mixed_conv.hpp"

#include <cmath>
#include <string>

namespace gkcmn {

namespace {

void require_square(const ConvKernel<float>& k, std::size_t channels, int dims, const char* name) {
  if (k.weights().empty()) throw ShapeError(std::string(name) + " kernel is missing");
  if (k.dims() != dims) {
    throw ShapeError(std::string(name) + " must be a " + std::to_string(dims) + "D kernel");
  }
  if (k.in_channels() != channels || k.out_channels() != channels) {
    throw ShapeError(std::string(name) + " must map " + std::to_string(channels) + " channels to " +
                     std::to_string(channels) + ", got " + to_string(k.weights().shape()));
  }
}

ConvKernel<float> random_kernel(std::size_t channels, std::vector<std::size_t> extents, Rng& rng) {
  Shape shape{channels, channels};
  shape.insert(shape.end(), extents.begin(), extents.end());
  Tensor w(shape);
  const double fan_in = static_cast<double>(w.size() / channels);
  const double bound = 1.0 / std::sqrt(fan_in);
  for (auto& v : w.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return ConvKernel<float>(std::move(w));
}

}  // namespace

void MixedConvWeights::validate(std::size_t channels) const {
  require_square(spatial, channels, 2, "k2");
  require_square(serial_temporal, channels, 3, "k3_serial");
  require_square(parallel_temporal, channels, 3, "k3_parallel");
  require_square(shortcut_temporal, channels, 3, "k3_mixed");
}

MixedConvWeights MixedConvWeights::zeros(std::size_t channels, std::size_t k2, std::size_t k3) {
  return {ConvKernel<float>::zeros(channels, channels, {k2, k2}),
          ConvKernel<float>::zeros(channels, channels, {k3, k3, k3}),
          ConvKernel<float>::zeros(channels, channels, {k3, k3, k3}),
          ConvKernel<float>::zeros(channels, channels, {k3, k3, k3})};
}

MixedConvWeights MixedConvWeights::random(std::size_t channels, Rng& rng, std::size_t k2, std::size_t k3) {
  MixedConvWeights w;
  w.spatial = random_kernel(channels, {k2, k2}, rng);
  w.serial_temporal = random_kernel(channels, {k3, k3, k3}, rng);
  w.parallel_temporal = random_kernel(channels, {k3, k3, k3}, rng);
  w.shortcut_temporal = random_kernel(channels, {k3, k3, k3}, rng);
  return w;
}

Tensor serial_forward(const FusedFeature& f, const MixedConvWeights& w) {
  if (f.tensor.rank() != 4) throw ShapeError("fused feature must be (D', T, h, w)");
  w.validate(f.tensor.extent(0));
  return conv3d_forward(conv2d_per_frame(f.tensor, w.spatial), w.serial_temporal);
}

Tensor parallel_forward(const FusedFeature& f, const MixedConvWeights& w) {
  if (f.tensor.rank() != 4) throw ShapeError("fused feature must be (D', T, h, w)");
  w.validate(f.tensor.extent(0));
  Tensor out = conv3d_forward(f.tensor, w.parallel_temporal);
  return add_inplace(out, conv2d_per_frame(f.tensor, w.spatial));
}

Tensor mixed_forward(const FusedFeature& f, const MixedConvWeights& w) {
  const Tensor serial = serial_forward(f, w);
  Tensor out = conv3d_forward(f.tensor, w.shortcut_temporal);
  add_inplace(out, serial);
  return add_inplace(out, f.tensor);
}

Tensor mixed_network_forward(const FusedFeature& f, std::span<const MixedConvWeights> blocks) {
  FusedFeature x{f.tensor};
  for (const auto& block : blocks) x.tensor = mixed_forward(x, block);
  return x.tensor;
}

}  // namespace gkcmn
