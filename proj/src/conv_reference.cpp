#include <string>

#include "gkcmn/tensor_ops.hpp"

namespace gkcmn {

template <typename T>
BasicTensor<T> conv_forward_naive(const BasicTensor<T>& input, const ConvKernel<T>& kernel) {
  if (input.empty() || kernel.weights().empty()) throw ShapeError("convolution on empty tensor");
  if (input.extent(0) != kernel.in_channels()) {
    throw ShapeError("convolution expects " + std::to_string(kernel.in_channels()) +
                     " input channels, got " + std::to_string(input.extent(0)));
  }
  const auto& w = kernel.weights();
  const long Cin = static_cast<long>(kernel.in_channels());
  const long Cout = static_cast<long>(kernel.out_channels());

  if (kernel.dims() == 2) {
    if (input.rank() != 3) throw ShapeError("2D convolution expects (C, H, W)");
    const long H = static_cast<long>(input.extent(1)), W = static_cast<long>(input.extent(2));
    const long KH = static_cast<long>(kernel.height()), KW = static_cast<long>(kernel.width());
    BasicTensor<T> out(Shape{kernel.out_channels(), input.extent(1), input.extent(2)});
    for (long o = 0; o < Cout; ++o)
      for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
          double sum = kernel.bias()[o];
          for (long i = 0; i < Cin; ++i)
            for (long ky = 0; ky < KH; ++ky)
              for (long kx = 0; kx < KW; ++kx) {
                const long iy = y + ky - KH / 2;
                const long ix = x + kx - KW / 2;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                sum += static_cast<double>(w(o, i, ky, kx)) * static_cast<double>(input(i, iy, ix));
              }
          out(o, y, x) = static_cast<T>(sum);
        }
    return out;
  }

  if (input.rank() != 4) throw ShapeError("3D convolution expects (C, T, H, W)");
  const long F = static_cast<long>(input.extent(1));
  const long H = static_cast<long>(input.extent(2)), W = static_cast<long>(input.extent(3));
  const long KT = static_cast<long>(kernel.depth());
  const long KH = static_cast<long>(kernel.height()), KW = static_cast<long>(kernel.width());
  BasicTensor<T> out(Shape{kernel.out_channels(), input.extent(1), input.extent(2), input.extent(3)});
  for (long o = 0; o < Cout; ++o)
    for (long t = 0; t < F; ++t)
      for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
          double sum = kernel.bias()[o];
          for (long i = 0; i < Cin; ++i)
            for (long kt = 0; kt < KT; ++kt)
              for (long ky = 0; ky < KH; ++ky)
                for (long kx = 0; kx < KW; ++kx) {
                  const long it = t + kt - KT / 2;
                  const long iy = y + ky - KH / 2;
                  const long ix = x + kx - KW / 2;
                  if (it < 0 || it >= F || iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                  sum += static_cast<double>(w(o, i, kt, ky, kx)) * static_cast<double>(input(i, it, iy, ix));
                }
          out(o, t, y, x) = static_cast<T>(sum);
        }
  return out;
}

template BasicTensor<float> conv_forward_naive(const BasicTensor<float>&, const ConvKernel<float>&);
template BasicTensor<double> conv_forward_naive(const BasicTensor<double>&, const ConvKernel<double>&);

}  // namespace gkcmn
