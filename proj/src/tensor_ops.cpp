#include "gkcmn/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gkcmn {

template <typename T>
ConvKernel<T>::ConvKernel(BasicTensor<T> weights)
    : weights_(std::move(weights)) {
  if (weights_.rank() < 4) throw ShapeError("conv kernel weights must have rank 4 or 5");
  bias_ = BasicTensor<T>(Shape{weights_.extent(0)});
  validate();
}

template <typename T>
ConvKernel<T>::ConvKernel(BasicTensor<T> weights, BasicTensor<T> bias)
    : weights_(std::move(weights)), bias_(std::move(bias)) {
  validate();
}

template <typename T>
void ConvKernel<T>::validate() const {
  if (weights_.rank() != 4 && weights_.rank() != 5) {
    throw ShapeError("conv kernel weights must have rank 4 (2D) or 5 (3D), got " +
                     to_string(weights_.shape()));
  }
  if (bias_.rank() != 1 || bias_.extent(0) != weights_.extent(0)) {
    throw ShapeError("conv bias shape " + to_string(bias_.shape()) + " does not match " +
                     std::to_string(weights_.extent(0)) + " output channels");
  }
  for (std::size_t axis = 2; axis < weights_.rank(); ++axis) {
    if (weights_.extent(axis) % 2 == 0) {
      throw ShapeError("conv kernel extents must be odd, got " + to_string(weights_.shape()));
    }
  }
}

template <typename T>
ConvKernel<T> ConvKernel<T>::identity(std::size_t channels, int dims) {
  Shape shape{channels, channels, 1, 1};
  if (dims == 3) shape.push_back(1);
  BasicTensor<T> w(shape);
  for (std::size_t c = 0; c < channels; ++c) w[c * channels + c] = T{1};
  return ConvKernel(std::move(w));
}

template <typename T>
ConvKernel<T> ConvKernel<T>::zeros(std::size_t out_channels, std::size_t in_channels,
                                   std::vector<std::size_t> extents) {
  Shape shape{out_channels, in_channels};
  shape.insert(shape.end(), extents.begin(), extents.end());
  return ConvKernel(BasicTensor<T>(shape));
}

namespace {

struct Volume {
  std::size_t channels, depth, height, width;
};

// Shared fast path: for each kernel tap, accumulate a shifted, clipped copy of
// the input plane into a double accumulator with contiguous inner rows.
template <typename T>
BasicTensor<T> conv_same(const BasicTensor<T>& input, const Volume& v, const ConvKernel<T>& k,
                         const Shape& out_shape) {
  const std::size_t out_c = k.out_channels();
  const std::ptrdiff_t kd = static_cast<std::ptrdiff_t>(k.depth());
  const std::ptrdiff_t kh = static_cast<std::ptrdiff_t>(k.height());
  const std::ptrdiff_t kw = static_cast<std::ptrdiff_t>(k.width());
  const std::ptrdiff_t D = static_cast<std::ptrdiff_t>(v.depth);
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(v.height);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(v.width);
  const std::size_t plane = v.depth * v.height * v.width;
  const auto in = input.data();
  const auto weights = k.weights().data();

  BasicTensor<T> output(out_shape);
  std::vector<double> acc(plane);
  for (std::size_t oc = 0; oc < out_c; ++oc) {
    std::fill(acc.begin(), acc.end(), static_cast<double>(k.bias()[oc]));
    for (std::size_t ic = 0; ic < v.channels; ++ic) {
      const T* src = in.data() + ic * plane;
      const T* taps = weights.data() + (oc * v.channels + ic) * static_cast<std::size_t>(kd * kh * kw);
      for (std::ptrdiff_t a = 0; a < kd; ++a) {
        const std::ptrdiff_t dz = a - kd / 2;
        const std::ptrdiff_t z0 = std::max<std::ptrdiff_t>(0, -dz);
        const std::ptrdiff_t z1 = std::min(D, D - dz);
        for (std::ptrdiff_t b = 0; b < kh; ++b) {
          const std::ptrdiff_t dy = b - kh / 2;
          const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
          const std::ptrdiff_t y1 = std::min(H, H - dy);
          for (std::ptrdiff_t c = 0; c < kw; ++c) {
            const double w = static_cast<double>(taps[(a * kh + b) * kw + c]);
            if (w == 0.0) continue;
            const std::ptrdiff_t dx = c - kw / 2;
            const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
            const std::ptrdiff_t x1 = std::min(W, W - dx);
            for (std::ptrdiff_t z = z0; z < z1; ++z) {
              for (std::ptrdiff_t y = y0; y < y1; ++y) {
                double* dst_row = acc.data() + (z * H + y) * W;
                const T* src_row = src + ((z + dz) * H + (y + dy)) * W + dx;
                for (std::ptrdiff_t x = x0; x < x1; ++x) {
                  dst_row[x] += w * static_cast<double>(src_row[x]);
                }
              }
            }
          }
        }
      }
    }
    std::transform(acc.begin(), acc.end(), output.data().begin() + oc * plane,
                   [](double s) { return static_cast<T>(s); });
  }
  return output;
}

template <typename T>
void check_channels(const BasicTensor<T>& input, const ConvKernel<T>& kernel) {
  if (input.empty()) throw ShapeError("convolution input is empty");
  if (kernel.weights().empty()) throw ShapeError("convolution kernel is empty");
  if (input.extent(0) != kernel.in_channels()) {
    throw ShapeError("convolution expects " + std::to_string(kernel.in_channels()) +
                     " input channels, got " + std::to_string(input.extent(0)));
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvKernel<T>& kernel) {
  if (kernel.dims() != 2) throw ShapeError("conv2d_forward requires a 2D kernel");
  if (input.rank() != 3) throw ShapeError("conv2d_forward expects (C, H, W), got " + to_string(input.shape()));
  check_channels(input, kernel);
  const Volume v{input.extent(0), 1, input.extent(1), input.extent(2)};
  return conv_same(input, v, kernel, Shape{kernel.out_channels(), v.height, v.width});
}

template <typename T>
BasicTensor<T> conv3d_forward(const BasicTensor<T>& input, const ConvKernel<T>& kernel) {
  if (kernel.dims() != 3) throw ShapeError("conv3d_forward requires a 3D kernel");
  if (input.rank() != 4) throw ShapeError("conv3d_forward expects (C, T, H, W), got " + to_string(input.shape()));
  check_channels(input, kernel);
  const Volume v{input.extent(0), input.extent(1), input.extent(2), input.extent(3)};
  return conv_same(input, v, kernel, Shape{kernel.out_channels(), v.depth, v.height, v.width});
}

template <typename T>
std::vector<BasicTensor<T>> reshape_frames(const BasicTensor<T>& input) {
  if (input.rank() != 4) throw ShapeError("reshape_frames expects rank 4, got " + to_string(input.shape()));
  const std::size_t C = input.extent(0), F = input.extent(1), H = input.extent(2), W = input.extent(3);
  const std::size_t plane = H * W;
  std::vector<BasicTensor<T>> frames;
  frames.reserve(F);
  for (std::size_t t = 0; t < F; ++t) {
    BasicTensor<T> frame(Shape{C, H, W});
    for (std::size_t c = 0; c < C; ++c) {
      const auto src = input.data().subspan((c * F + t) * plane, plane);
      std::copy(src.begin(), src.end(), frame.data().begin() + c * plane);
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

template <typename T>
BasicTensor<T> reshape_frames_back(std::span<const BasicTensor<T>> frames) {
  if (frames.empty()) throw ShapeError("reshape_frames_back needs at least one frame");
  const Shape& fs = frames.front().shape();
  if (fs.size() != 3) throw ShapeError("frames must have shape (C, H, W)");
  const std::size_t C = fs[0], F = frames.size(), plane = fs[1] * fs[2];
  BasicTensor<T> out(Shape{C, F, fs[1], fs[2]});
  for (std::size_t t = 0; t < F; ++t) {
    if (frames[t].shape() != fs) throw ShapeError("frame " + std::to_string(t) + " has a different shape");
    for (std::size_t c = 0; c < C; ++c) {
      const auto src = frames[t].data().subspan(c * plane, plane);
      std::copy(src.begin(), src.end(), out.data().begin() + (c * F + t) * plane);
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> conv2d_per_frame(const BasicTensor<T>& input, const ConvKernel<T>& kernel) {
  auto frames = reshape_frames(input);
  for (auto& frame : frames) frame = conv2d_forward(frame, kernel);
  return reshape_frames_back<T>(frames);
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.empty() || b.empty()) throw ShapeError("concat_channels on empty tensor");
  if (a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw ShapeError("concat_channels: non-channel extents differ, " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  Shape shape = a.shape();
  shape[0] += b.extent(0);
  std::vector<T> data;
  data.reserve(a.size() + b.size());
  data.insert(data.end(), a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return BasicTensor<T>(std::move(shape), std::move(data));
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > x.extent(0)) throw ShapeError("slice_channels out of range");
  Shape shape = x.shape();
  const std::size_t stride = x.size() / shape[0];
  shape[0] = count;
  const auto src = x.data().subspan(begin * stride, count * stride);
  return BasicTensor<T>(std::move(shape), std::vector<T>(src.begin(), src.end()));
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "exp") return Activation::exp;
  if (name == "identity") return Activation::identity;
  throw DomainError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation kind) {
  switch (kind) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::exp: return "exp";
    case Activation::identity: return "identity";
  }
  return "identity";
}

template <typename T>
T sigmoid(T x) {
  // Split on sign so exp never overflows.
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& x, Activation kind) {
  BasicTensor<T> out = x;
  switch (kind) {
    case Activation::relu:
      for (auto& v : out.data()) v = v > T{0} ? v : T{0};
      break;
    case Activation::sigmoid:
      for (auto& v : out.data()) v = sigmoid(v);
      break;
    case Activation::exp:
      for (auto& v : out.data()) v = std::exp(v);
      break;
    case Activation::identity:
      break;
  }
  return out;
}

template <typename T>
BasicTensor<T> upsample_bilinear(const BasicTensor<T>& input, std::size_t out_h, std::size_t out_w) {
  if (input.rank() != 3) throw ShapeError("upsample_bilinear expects (C, h, w), got " + to_string(input.shape()));
  const std::size_t C = input.extent(0), h = input.extent(1), w = input.extent(2);
  if (out_h < h || out_w < w) {
    throw DomainError("upsample_bilinear target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                      " is smaller than input " + std::to_string(h) + "x" + std::to_string(w));
  }
  const double sy = out_h > 1 ? static_cast<double>(h - 1) / static_cast<double>(out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(w - 1) / static_cast<double>(out_w - 1) : 0.0;

  BasicTensor<T> out(Shape{C, out_h, out_w});
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double fy = static_cast<double>(oy) * sy;
    const std::size_t y0 = std::min(static_cast<std::size_t>(fy), h - 1);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double fx = static_cast<double>(ox) * sx;
      const std::size_t x0 = std::min(static_cast<std::size_t>(fx), w - 1);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < C; ++c) {
        const double top = (1.0 - wx) * input(c, y0, x0) + wx * input(c, y0, x1);
        const double bottom = (1.0 - wx) * input(c, y1, x0) + wx * input(c, y1, x1);
        out(c, oy, ox) = static_cast<T>((1.0 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T>& add_inplace(BasicTensor<T>& acc, const BasicTensor<T>& x) {
  if (acc.shape() != x.shape()) {
    throw ShapeError("cannot add " + to_string(x.shape()) + " to " + to_string(acc.shape()));
  }
  auto dst = acc.data();
  const auto src = x.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return acc;
}

#define GKCMN_INSTANTIATE(T)                                                                       \
  template class ConvKernel<T>;                                                                    \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const ConvKernel<T>&);             \
  template BasicTensor<T> conv3d_forward(const BasicTensor<T>&, const ConvKernel<T>&);             \
  template std::vector<BasicTensor<T>> reshape_frames(const BasicTensor<T>&);                      \
  template BasicTensor<T> reshape_frames_back(std::span<const BasicTensor<T>>);                    \
  template BasicTensor<T> conv2d_per_frame(const BasicTensor<T>&, const ConvKernel<T>&);           \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);           \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, std::size_t, std::size_t);         \
  template BasicTensor<T> activation(const BasicTensor<T>&, Activation);                           \
  template T sigmoid(T);                                                                           \
  template BasicTensor<T> upsample_bilinear(const BasicTensor<T>&, std::size_t, std::size_t);      \
  template BasicTensor<T>& add_inplace(BasicTensor<T>&, const BasicTensor<T>&);

GKCMN_INSTANTIATE(float)
GKCMN_INSTANTIATE(double)

#undef GKCMN_INSTANTIATE

}  // namespace gkcmn
