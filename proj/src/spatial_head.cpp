#include "gkcmn/spatial_head.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gkcmn {

SigmaPolicy SigmaPolicy::fixed(double sigma) {
  if (!(sigma > 0) || !std::isfinite(sigma)) throw DomainError("fixed sigma must be a positive finite number");
  return {Mode::fixed, sigma};
}

SigmaPolicy SigmaPolicy::parse(std::string_view text) {
  if (text == "adaptive") return adaptive();
  constexpr std::string_view prefix = "fixed:";
  if (text.starts_with(prefix)) {
    const std::string number(text.substr(prefix.size()));
    std::size_t used = 0;
    double value = 0;
    try {
      value = std::stod(number, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != number.size()) throw DomainError("bad sigma value in '" + std::string(text) + "'");
    return fixed(value);
  }
  throw DomainError("sigma mode must be 'adaptive' or 'fixed:<value>', got '" + std::string(text) + "'");
}

double SigmaPolicy::resolve(const BoundingBox& box_cells) const {
  if (mode == Mode::fixed) return value;
  return std::max(1.0, std::min(box_cells.width(), box_cells.height()) / 6.0);
}

std::string SigmaPolicy::describe() const {
  if (mode == Mode::adaptive) return "adaptive";
  std::ostringstream out;
  out << "fixed:" << value;
  return out.str();
}

const FrameTarget* GaussianTargets::frame(int t) const {
  for (const auto& f : frames) {
    if (f.t == t) return &f;
  }
  return nullptr;
}

GaussianTargets encode_gaussian_targets(std::span<const FrameBox> boxes, int num_frames, int frame_h, int frame_w,
                                        int map_size, const SigmaPolicy& sigma) {
  if (map_size < 2) throw DomainError("map size L must be at least 2");
  if (num_frames < 1 || frame_h < 1 || frame_w < 1) throw DomainError("frame count and extents must be positive");

  const auto T = static_cast<std::size_t>(num_frames);
  const auto L = static_cast<std::size_t>(map_size);
  GaussianTargets out;
  out.map_size = L;
  out.heatmaps = Tensor(Shape{T, L, L});
  out.size_targets = Tensor(Shape{T, 4, L, L});
  out.annotation_mask = Tensor(Shape{T, L, L});

  const double sx = static_cast<double>(map_size) / frame_w;
  const double sy = static_cast<double>(map_size) / frame_h;
  std::vector<FrameBox> sorted(boxes.begin(), boxes.end());
  std::sort(sorted.begin(), sorted.end(), [](const FrameBox& a, const FrameBox& b) { return a.t < b.t; });

  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const FrameBox& fb = sorted[i];
    const BoundingBox& b = fb.box;
    const std::string where = "box at frame " + std::to_string(fb.t);
    if (fb.t < 0 || fb.t >= num_frames) throw DomainError(where + " lies outside the clip");
    if (i > 0 && sorted[i - 1].t == fb.t) throw DomainError("more than one box at frame " + std::to_string(fb.t));
    if (!(b.x2 > b.x1) || !(b.y2 > b.y1)) throw DomainError(where + " is degenerate (zero area)");
    if (b.x1 < 0 || b.y1 < 0 || b.x2 > frame_w || b.y2 > frame_h) throw DomainError(where + " exceeds frame bounds");

    FrameTarget ft;
    ft.t = fb.t;
    ft.box_pixels = b;
    ft.box_cells = b.scaled(sx, sy);
    const BoundingBox& c = ft.box_cells;
    // Nearest cell to the midpoint; exact half-cell ties go down.
    const auto nearest = [L](double m) {
      return static_cast<int>(std::clamp(std::ceil(m - 0.5), 0.0, static_cast<double>(L - 1)));
    };
    ft.center_x = nearest(0.5 * (c.x1 + c.x2));
    ft.center_y = nearest(0.5 * (c.y1 + c.y2));
    ft.sigma = sigma.resolve(c);

    const auto t = static_cast<std::size_t>(fb.t);
    const double two_sigma_sq = 2.0 * ft.sigma * ft.sigma;
    bool any_inside = false;
    for (std::size_t y = 0; y < L; ++y) {
      for (std::size_t x = 0; x < L; ++x) {
        const double dx = static_cast<double>(x) - ft.center_x;
        const double dy = static_cast<double>(y) - ft.center_y;
        out.heatmaps(t, y, x) = static_cast<float>(std::exp(-(dx * dx + dy * dy) / two_sigma_sq));

        const double xd = static_cast<double>(x), yd = static_cast<double>(y);
        if (xd >= c.x1 && xd <= c.x2 && yd >= c.y1 && yd <= c.y2) {
          any_inside = true;
          out.annotation_mask(t, y, x) = 1.0f;
          out.size_targets(t, 0, y, x) = static_cast<float>(xd - c.x1);
          out.size_targets(t, 1, y, x) = static_cast<float>(yd - c.y1);
          out.size_targets(t, 2, y, x) = static_cast<float>(c.x2 - xd);
          out.size_targets(t, 3, y, x) = static_cast<float>(c.y2 - yd);
        }
      }
    }
    if (!any_inside) {
      // Box thinner than one cell and between lattice points: regress at the
      // center cell with distances clamped at zero.
      const auto x = static_cast<std::size_t>(ft.center_x), y = static_cast<std::size_t>(ft.center_y);
      const double xd = ft.center_x, yd = ft.center_y;
      out.annotation_mask(t, y, x) = 1.0f;
      out.size_targets(t, 0, y, x) = static_cast<float>(std::max(0.0, xd - c.x1));
      out.size_targets(t, 1, y, x) = static_cast<float>(std::max(0.0, yd - c.y1));
      out.size_targets(t, 2, y, x) = static_cast<float>(std::max(0.0, c.x2 - xd));
      out.size_targets(t, 3, y, x) = static_cast<float>(std::max(0.0, c.y2 - yd));
    }
    out.frames.push_back(ft);
  }
  return out;
}

void FocalConfig::validate() const {
  if (!(alpha > 0) || !(beta > 0)) throw DomainError("focal exponents alpha and beta must be positive");
  if (!(gamma > 0 && gamma < 1)) throw DomainError("focal threshold gamma must lie in (0, 1)");
}

template <typename T>
LossGrad<T> focal_loss(const BasicTensor<T>& pred, const GaussianTargets& targets, const FocalConfig& cfg) {
  cfg.validate();
  if (pred.shape() != targets.heatmaps.shape()) {
    throw ShapeError("predicted heatmaps " + to_string(pred.shape()) + " do not match targets " +
                     to_string(targets.heatmaps.shape()));
  }
  if (targets.frames.empty()) throw DomainError("focal loss needs at least one annotated box");
  const double inv_m = 1.0 / static_cast<double>(targets.frames.size());
  const double eps = kFocalEpsilon;

  LossGrad<T> out{0.0, BasicTensor<T>(pred.shape())};
  const auto p_all = pred.data();
  const auto h_all = targets.heatmaps.data();
  auto g_all = out.grad.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < p_all.size(); ++i) {
    const double p = static_cast<double>(p_all[i]);
    if (!(p >= 0.0 && p <= 1.0)) {
      throw DomainError("predicted heatmap value " + std::to_string(p) + " outside [0, 1] at index " +
                        std::to_string(i));
    }
    const double h = h_all[i];
    double f = 0.0, df = 0.0;
    if (h > cfg.gamma) {
      const double q = 1.0 - p;
      const double log_p = std::log(std::max(p, eps));
      const double d_log_p = p > eps ? 1.0 / p : 0.0;
      const double q_a = std::pow(q, cfg.alpha);
      f = q_a * log_p;
      df = (q > 0 ? -cfg.alpha * std::pow(q, cfg.alpha - 1.0) * log_p : 0.0) + q_a * d_log_p;
    } else {
      const double q = 1.0 - p;
      const double weight = std::pow(1.0 - h, cfg.beta);
      const double log_q = std::log(std::max(q, eps));
      const double d_log_q = q > eps ? -1.0 / q : 0.0;
      const double p_a = std::pow(p, cfg.alpha);
      f = weight * p_a * log_q;
      df = weight * ((p > 0 ? cfg.alpha * std::pow(p, cfg.alpha - 1.0) * log_q : 0.0) + p_a * d_log_q);
    }
    sum += f;
    g_all[i] = static_cast<T>(-df * inv_m);
  }
  out.loss = -sum * inv_m;
  return out;
}

template <typename T>
LossGrad<T> giou_loss(const BasicTensor<T>& size_raw, const GaussianTargets& targets) {
  const std::size_t Tn = targets.frame_count(), L = targets.map_size;
  if (size_raw.shape() != Shape{Tn, 4, L, L}) {
    throw ShapeError("size predictions " + to_string(size_raw.shape()) + " do not match (T, 4, L, L) = " +
                     to_string(Shape{Tn, 4, L, L}));
  }
  LossGrad<T> out{0.0, BasicTensor<T>(size_raw.shape())};
  std::size_t samples = 0;
  double sum = 0.0;
  for (const auto& ft : targets.frames) {
    const auto t = static_cast<std::size_t>(ft.t);
    for (std::size_t y = 0; y < L; ++y) {
      for (std::size_t x = 0; x < L; ++x) {
        if (targets.annotation_mask(t, y, x) == 0.0f) continue;
        ++samples;
        std::array<double, 4> dist{};
        for (std::size_t k = 0; k < 4; ++k) dist[k] = std::exp(static_cast<double>(size_raw(t, k, y, x)));
        const BoundingBox pred = box_from_distances(static_cast<double>(x), static_cast<double>(y), dist[0], dist[1],
                                                    dist[2], dist[3]);
        const GiouGradient g = giou_with_gradient(pred, ft.box_cells);
        sum += 1.0 - g.value;
        // x1 = x - l, y1 = y - t, x2 = x + r, y2 = y + b; then through exp.
        const std::array<double, 4> sign{-1.0, -1.0, 1.0, 1.0};
        for (std::size_t k = 0; k < 4; ++k) {
          out.grad(t, k, y, x) = static_cast<T>(-g.d_pred[k] * sign[k] * dist[k]);
        }
      }
    }
  }
  if (samples == 0) throw DomainError("GIoU loss needs at least one masked cell");
  const double inv_m = 1.0 / static_cast<double>(samples);
  out.loss = sum * inv_m;
  for (auto& v : out.grad.data()) v = static_cast<T>(v * inv_m);
  return out;
}

std::vector<DecodedBox> decode_boxes(const SpatialPrediction& pred, int frame_h, int frame_w) {
  const auto& hm = pred.heatmaps;
  if (hm.rank() != 3 || hm.extent(1) != hm.extent(2)) throw ShapeError("heatmaps must be (T, L, L)");
  const std::size_t T = hm.extent(0), L = hm.extent(1);
  if (pred.size_raw.shape() != Shape{T, 4, L, L}) throw ShapeError("size predictions must be (T, 4, L, L)");
  const double sx = static_cast<double>(frame_w) / static_cast<double>(L);
  const double sy = static_cast<double>(frame_h) / static_cast<double>(L);

  std::vector<DecodedBox> out;
  out.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::size_t best = 0;
    float best_value = hm(t, std::size_t{0}, std::size_t{0});
    for (std::size_t i = 1; i < L * L; ++i) {
      const float v = hm[t * L * L + i];
      if (v > best_value) {
        best_value = v;
        best = i;
      }
    }
    const std::size_t y = best / L, x = best % L;
    std::array<double, 4> dist{};
    for (std::size_t k = 0; k < 4; ++k) dist[k] = std::exp(static_cast<double>(pred.size_raw(t, k, y, x)));
    BoundingBox b = box_from_distances(static_cast<double>(x), static_cast<double>(y), dist[0], dist[1], dist[2],
                                       dist[3])
                        .scaled(sx, sy);
    b.x1 = std::clamp(b.x1, 0.0, static_cast<double>(frame_w));
    b.x2 = std::clamp(b.x2, 0.0, static_cast<double>(frame_w));
    b.y1 = std::clamp(b.y1, 0.0, static_cast<double>(frame_h));
    b.y2 = std::clamp(b.y2, 0.0, static_cast<double>(frame_h));
    out.push_back({static_cast<int>(t), b, best_value, static_cast<int>(x), static_cast<int>(y)});
  }
  return out;
}

void SpatialHeadWeights::validate(std::size_t channels) const {
  const auto check = [channels](const ConvKernel<float>& k, std::size_t out, const char* name) {
    if (k.weights().empty() || k.dims() != 2 || k.out_channels() != out || k.in_channels() != channels ||
        k.height() != 1 || k.width() != 1) {
      throw ShapeError(std::string(name) + " head must be a (" + std::to_string(out) + ", " +
                       std::to_string(channels) + ", 1, 1) kernel");
    }
  };
  check(heatmap, 1, "heatmap");
  check(size, 4, "size");
  if (map_size < 2) throw DomainError("map size L must be at least 2");
}

SpatialHeadWeights SpatialHeadWeights::zeros(std::size_t channels, std::size_t map_size) {
  return {ConvKernel<float>::zeros(1, channels, {1, 1}), ConvKernel<float>::zeros(4, channels, {1, 1}), map_size};
}

SpatialHeadWeights SpatialHeadWeights::random(std::size_t channels, std::size_t map_size, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  const auto make = [&](std::size_t out) {
    Tensor w(Shape{out, channels, 1, 1});
    for (auto& v : w.data()) v = static_cast<float>(rng.uniform(-bound, bound));
    Tensor b(Shape{out});
    for (auto& v : b.data()) v = static_cast<float>(rng.uniform(-0.1, 0.1));
    return ConvKernel<float>(std::move(w), std::move(b));
  };
  SpatialHeadWeights w;
  w.heatmap = make(1);
  w.size = make(4);
  w.map_size = map_size;
  return w;
}

SpatialPrediction spatial_head_forward(const Tensor& m_mix, const SpatialHeadWeights& w) {
  if (m_mix.rank() != 4) throw ShapeError("spatial head expects (D', T, h, w), got " + to_string(m_mix.shape()));
  w.validate(m_mix.extent(0));
  const std::size_t T = m_mix.extent(1), L = w.map_size;
  if (L < m_mix.extent(2) || L < m_mix.extent(3)) throw DomainError("map size L must be at least the feature extent");

  SpatialPrediction out{Tensor(Shape{T, L, L}), Tensor(Shape{T, 4, L, L})};
  const auto frames = reshape_frames(m_mix);
  const std::size_t plane = L * L;
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor up = upsample_bilinear(frames[t], L, L);
    const Tensor heat = activation(conv2d_forward(up, w.heatmap), Activation::sigmoid);
    const Tensor size = conv2d_forward(up, w.size);
    std::copy(heat.data().begin(), heat.data().end(), out.heatmaps.data().begin() + t * plane);
    std::copy(size.data().begin(), size.data().end(), out.size_raw.data().begin() + t * 4 * plane);
  }
  return out;
}

template LossGrad<float> focal_loss(const BasicTensor<float>&, const GaussianTargets&, const FocalConfig&);
template LossGrad<double> focal_loss(const BasicTensor<double>&, const GaussianTargets&, const FocalConfig&);
template LossGrad<float> giou_loss(const BasicTensor<float>&, const GaussianTargets&);
template LossGrad<double> giou_loss(const BasicTensor<double>&, const GaussianTargets&);

}  // namespace gkcmn
