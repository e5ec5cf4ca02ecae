#include "gkcmn/temporal_head.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gkcmn {

double tiou(const TemporalInterval& a, const TemporalInterval& b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

CandidateScheme CandidateScheme::default_for(int sequence_length) {
  if (sequence_length < 1) throw DomainError("sequence length must be positive");
  CandidateScheme s;
  s.sequence_length = sequence_length;
  for (int div : {8, 4, 2, 1}) {
    const int scale = std::max(1, static_cast<int>(std::lround(static_cast<double>(sequence_length) / div)));
    if (std::find(s.scales.begin(), s.scales.end(), scale) == s.scales.end()) s.scales.push_back(scale);
  }
  return s;
}

std::vector<TubeCandidate> generate_candidates(const CandidateScheme& scheme) {
  if (scheme.scales.empty()) throw DomainError("candidate scheme has no scales");
  if (scheme.sequence_length < 1) throw DomainError("candidate scheme needs a positive sequence length");
  if (!(scheme.stride_fraction > 0)) throw DomainError("stride fraction must be positive");

  std::vector<int> scales = scheme.scales;
  std::sort(scales.begin(), scales.end());
  scales.erase(std::unique(scales.begin(), scales.end()), scales.end());

  std::vector<TubeCandidate> out;
  for (int s : scales) {
    if (s < 1 || s > scheme.sequence_length) {
      throw DomainError("window scale " + std::to_string(s) + " must lie in [1, " +
                        std::to_string(scheme.sequence_length) + "]");
    }
    const int stride = std::max(1, static_cast<int>(std::floor(s * scheme.stride_fraction)));
    for (int start = 0; start + s <= scheme.sequence_length; start += stride) {
      TubeCandidate c;
      c.interval = {static_cast<double>(start), static_cast<double>(start + s)};
      out.push_back(c);
    }
  }
  return out;
}

std::vector<TubeCandidate> label_candidates(std::vector<TubeCandidate> cands, const TemporalInterval& gt,
                                            double threshold) {
  if (!(gt.start < gt.end)) throw DomainError("ground-truth interval must satisfy start < end");
  for (auto& c : cands) {
    const double overlap = tiou(c.interval, gt);
    c.target_iou = overlap >= threshold ? overlap : 0.0;
    c.offset_target = {gt.start - c.interval.start, gt.end - c.interval.end};
  }
  return cands;
}

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_derivative(double x) {
  if (x >= 1.0) return 1.0;
  if (x <= -1.0) return -1.0;
  return x;
}

ScoreLoss confidence_loss(std::span<const TubeCandidate> cands) {
  if (cands.empty()) throw DomainError("confidence loss needs at least one candidate");
  const double inv_n = 1.0 / static_cast<double>(cands.size());
  ScoreLoss out{0.0, std::vector<double>(cands.size())};
  for (std::size_t n = 0; n < cands.size(); ++n) {
    const double r = cands[n].target_iou - cands[n].predicted_score;
    out.loss += smooth_l1(r);
    out.grad[n] = -smooth_l1_derivative(r) * inv_n;
  }
  out.loss *= inv_n;
  return out;
}

OffsetLoss boundary_loss(std::span<const TubeCandidate> cands, BoundaryRegression mode) {
  if (cands.empty()) throw DomainError("boundary loss needs at least one candidate");
  OffsetLoss out{0.0, std::vector<BoundaryOffsets>(cands.size())};
  std::size_t regressed = 0;
  for (const auto& c : cands) {
    if (mode == BoundaryRegression::all || c.target_iou > 0) ++regressed;
  }
  if (regressed == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(regressed);
  for (std::size_t k = 0; k < cands.size(); ++k) {
    const auto& c = cands[k];
    if (mode == BoundaryRegression::positives_only && !(c.target_iou > 0)) continue;
    const double rs = c.offset_target.start - c.offset_pred.start;
    const double re = c.offset_target.end - c.offset_pred.end;
    out.loss += smooth_l1(rs) + smooth_l1(re);
    out.grad[k] = {-smooth_l1_derivative(rs) * inv_n, -smooth_l1_derivative(re) * inv_n};
  }
  out.loss *= inv_n;
  return out;
}

TemporalInterval select_tube(std::span<const TubeCandidate> cands, int sequence_length) {
  if (cands.empty()) throw DomainError("cannot select a tube from an empty candidate list");
  const TubeCandidate* best = &cands.front();
  for (const auto& c : cands.subspan(1)) {
    if (c.predicted_score > best->predicted_score) {
      best = &c;
    } else if (c.predicted_score == best->predicted_score) {
      const bool earlier = c.interval.start < best->interval.start;
      const bool shorter = c.interval.start == best->interval.start && c.interval.length() < best->interval.length();
      if (earlier || shorter) best = &c;
    }
  }
  const double T = static_cast<double>(sequence_length);
  TemporalInterval rectified{std::clamp(best->interval.start + best->offset_pred.start, 0.0, T),
                             std::clamp(best->interval.end + best->offset_pred.end, 0.0, T)};
  if (!(rectified.start < rectified.end)) return best->interval;
  return rectified;
}

std::pair<int, int> covered_steps(const TemporalInterval& interval, int sequence_length) {
  const int first = std::max(0, static_cast<int>(std::floor(interval.start)));
  const int last = std::min(sequence_length, static_cast<int>(std::ceil(interval.end)));
  return {first, last};
}

void TemporalHeadWeights::validate(std::size_t channels) const {
  const auto check = [channels](const ConvKernel<float>& k, std::size_t kt, const char* name) {
    if (k.weights().empty() || k.dims() != 3 || k.in_channels() != channels || k.out_channels() != channels ||
        k.depth() != kt) {
      throw ShapeError(std::string(name) + " must be a 3D (" + std::to_string(channels) + ", " +
                       std::to_string(channels) + ", " + std::to_string(kt) + ", kh, kw) kernel");
    }
  };
  check(short_range, 1, "t1");
  check(mid_range, 3, "t3");
  check(long_range, 5, "t5");
  if (score_weight.shape() != Shape{channels}) throw ShapeError("score_w must have shape (D')");
  if (offset_weight.shape() != Shape{2, channels}) throw ShapeError("offset_w must have shape (2, D')");
  if (offset_bias.shape() != Shape{2}) throw ShapeError("offset_b must have shape (2)");
}

TemporalHeadWeights TemporalHeadWeights::zeros(std::size_t channels) {
  TemporalHeadWeights w;
  w.short_range = ConvKernel<float>::zeros(channels, channels, {1, 1, 1});
  w.mid_range = ConvKernel<float>::zeros(channels, channels, {3, 3, 3});
  w.long_range = ConvKernel<float>::zeros(channels, channels, {5, 5, 5});
  w.score_weight = Tensor(Shape{channels});
  w.offset_weight = Tensor(Shape{2, channels});
  w.offset_bias = Tensor(Shape{2});
  return w;
}

TemporalHeadWeights TemporalHeadWeights::random(std::size_t channels, Rng& rng) {
  TemporalHeadWeights w = zeros(channels);
  for (auto* k : {&w.short_range, &w.mid_range, &w.long_range}) {
    Tensor weights = k->weights();
    const double bound = 1.0 / std::sqrt(static_cast<double>(weights.size() / channels));
    for (auto& v : weights.data()) v = static_cast<float>(rng.uniform(-bound, bound));
    *k = ConvKernel<float>(std::move(weights));
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  for (auto& v : w.score_weight.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  for (auto& v : w.offset_weight.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  w.score_bias = static_cast<float>(rng.uniform(-0.1, 0.1));
  for (auto& v : w.offset_bias.data()) v = static_cast<float>(rng.uniform(-0.1, 0.1));
  return w;
}

TemporalEmbedding temporal_embed_forward(const Tensor& m_mix, const TemporalHeadWeights& w,
                                         std::span<const TubeCandidate> cands) {
  if (m_mix.rank() != 4) throw ShapeError("temporal head expects (D', T, h, w), got " + to_string(m_mix.shape()));
  const std::size_t C = m_mix.extent(0), T = m_mix.extent(1), plane = m_mix.extent(2) * m_mix.extent(3);
  w.validate(C);

  Tensor summed = conv3d_forward(m_mix, w.short_range);
  add_inplace(summed, conv3d_forward(m_mix, w.mid_range));
  add_inplace(summed, conv3d_forward(m_mix, w.long_range));

  TemporalEmbedding out;
  out.pooled = Tensor(Shape{C, T});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < T; ++t) {
      const auto cell = summed.data().subspan((c * T + t) * plane, plane);
      double s = 0.0;
      for (float v : cell) s += v;
      out.pooled(c, t) = static_cast<float>(s / static_cast<double>(plane));
    }
  }

  const std::size_t N = cands.size();
  if (N == 0) return out;
  out.features = Tensor(Shape{N, C});
  out.scores.resize(N);
  out.offsets.resize(N);
  for (std::size_t n = 0; n < N; ++n) {
    const auto [first, last] = covered_steps(cands[n].interval, static_cast<int>(T));
    if (first >= last) throw DomainError("candidate " + std::to_string(n) + " covers no time step");
    double logit = w.score_bias;
    double off_s = w.offset_bias[0], off_e = w.offset_bias[1];
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (int t = first; t < last; ++t) s += out.pooled(c, static_cast<std::size_t>(t));
      const float feature = static_cast<float>(s / (last - first));
      out.features(n, c) = feature;
      logit += static_cast<double>(w.score_weight[c]) * feature;
      off_s += static_cast<double>(w.offset_weight(std::size_t{0}, c)) * feature;
      off_e += static_cast<double>(w.offset_weight(std::size_t{1}, c)) * feature;
    }
    out.scores[n] = sigmoid(logit);
    out.offsets[n] = {off_s, off_e};
  }
  return out;
}

void apply_predictions(std::span<TubeCandidate> cands, const TemporalEmbedding& embedding) {
  if (embedding.scores.size() != cands.size()) throw ShapeError("embedding does not match candidate count");
  for (std::size_t n = 0; n < cands.size(); ++n) {
    cands[n].predicted_score = embedding.scores[n];
    cands[n].offset_pred = embedding.offsets[n];
  }
}

}  // namespace gkcmn
