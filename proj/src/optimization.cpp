#include "gkcmn/optimization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace gkcmn {

void LossWeights::validate() const {
  for (double w : {localization, size_regression, confidence, boundary}) {
    if (!(w >= 0) || !std::isfinite(w)) throw DomainError("loss weights must be finite and nonnegative");
  }
}

double total_loss(const LossComponents& parts, const LossWeights& weights) {
  weights.validate();
  for (double v : {parts.localization, parts.size_regression, parts.confidence, parts.boundary}) {
    if (!std::isfinite(v)) throw DomainError("loss components must be finite");
  }
  return weights.localization * parts.localization + weights.size_regression * parts.size_regression +
         weights.confidence * parts.confidence + weights.boundary * parts.boundary;
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw DomainError("learning rate must be positive");
  if (steps < 1) throw DomainError("step count must be at least 1");
}

double gradient_relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckReport grad_check(const LossFunction& loss, const TensorD& params, double tolerance,
                           const GradCheckOptions& options) {
  const LossGrad<double> base = loss(params);
  if (!std::isfinite(base.loss)) throw DomainError("loss is non-finite at the check point");
  if (base.grad.shape() != params.shape()) throw ShapeError("analytic gradient shape differs from parameters");

  std::vector<std::size_t> coords(params.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  const std::size_t limit = std::max<std::size_t>(64, options.max_coordinates);
  if (coords.size() > limit) {
    Rng rng(options.seed);
    for (std::size_t i = 0; i < limit; ++i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                              static_cast<std::int64_t>(coords.size() - 1)));
      std::swap(coords[i], coords[j]);
    }
    coords.resize(limit);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  TensorD probe = params;
  for (std::size_t i : coords) {
    const double saved = probe[i];
    probe[i] = saved + options.step;
    const double up = loss(probe).loss;
    probe[i] = saved - options.step;
    const double down = loss(probe).loss;
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw DomainError("loss is non-finite when perturbing coordinate " + std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * options.step);
    const double err = gradient_relative_error(base.grad[i], numeric);
    if (report.checked == 0 || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
    }
    if (!(err <= tolerance)) report.failing.push_back(i);
    ++report.checked;
  }
  return report;
}

namespace {

// Evaluates the objective; nullopt marks a point outside the region where the
// objective is finite and differentiable.
using Objective = std::function<std::optional<LossGrad<double>>(const TensorD&)>;

FitTrace descend(TensorD& params, const Objective& objective, const OptimizerConfig& cfg) {
  constexpr int kMaxHalvings = 40;
  constexpr double kBlowUp = 100.0;
  auto current = objective(params);
  if (!current) throw DivergenceError("objective is not finite at the initial point", 0);

  FitTrace trace;
  trace.loss_curve.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  trace.loss_curve.push_back(current->loss);
  TensorD candidate = params;
  for (int step = 1; step <= cfg.steps; ++step) {
    double lr = cfg.learning_rate;
    for (int attempt = 0; attempt <= (cfg.backtracking ? kMaxHalvings : 0); ++attempt, lr *= 0.5) {
      const auto g = current->grad.data();
      auto c = candidate.data();
      const auto p = params.data();
      for (std::size_t i = 0; i < c.size(); ++i) c[i] = p[i] - lr * g[i];
      auto next = objective(candidate);
      if (!next) {
        if (cfg.backtracking) continue;
        throw DivergenceError("loss left the finite region", step);
      }
      if (cfg.backtracking && next->loss > current->loss) continue;
      if (next->loss > kBlowUp * std::max(trace.initial(), 1.0)) {
        throw DivergenceError("loss grew past " + std::to_string(static_cast<int>(kBlowUp)) + "x its initial value", step);
      }
      std::swap(params, candidate);
      current = std::move(next);
      break;
    }
    // Without an acceptable step the parameters stay put and the loss repeats.
    trace.loss_curve.push_back(current->loss);
  }
  return trace;
}

TensorD random_parameters(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  TensorD out(shape);
  for (auto& v : out.data()) v = rng.uniform(-0.1, 0.1);
  return out;
}

TensorD sigmoid_of(const TensorD& logits) {
  TensorD out = logits;
  for (auto& v : out.data()) v = sigmoid(v);
  return out;
}

}  // namespace

HeatmapFit fit_heatmap_demo(const GaussianTargets& targets, const OptimizerConfig& cfg, const FocalConfig& focal,
                            InitMode init) {
  cfg.validate();
  focal.validate();
  TensorD logits;
  if (init == InitMode::exact) {
    logits = targets.heatmaps.cast<double>();
    for (auto& v : logits.data()) {
      const double h = std::clamp(v, kFocalEpsilon, 1.0 - kFocalEpsilon);
      v = std::log(h / (1.0 - h));
    }
  } else {
    logits = random_parameters(targets.heatmaps.shape(), cfg.seed);
  }

  const Objective objective = [&](const TensorD& theta) -> std::optional<LossGrad<double>> {
    TensorD p = sigmoid_of(theta);
    for (double v : p.data()) {
      if (!(v > 0.0 && v < 1.0)) return std::nullopt;  // saturated sigmoid: no gradient signal left
    }
    LossGrad<double> lg = focal_loss(p, targets, focal);
    if (!std::isfinite(lg.loss)) return std::nullopt;
    for (std::size_t i = 0; i < p.size(); ++i) lg.grad[i] *= p[i] * (1.0 - p[i]);
    return lg;
  };

  HeatmapFit fit;
  static_cast<FitTrace&>(fit) = descend(logits, objective, cfg);
  fit.heatmaps = sigmoid_of(logits);
  fit.logits = std::move(logits);

  const std::size_t L = targets.map_size;
  fit.argmax_matches = true;
  for (const auto& ft : targets.frames) {
    const auto t = static_cast<std::size_t>(ft.t);
    std::size_t best = 0;
    for (std::size_t i = 1; i < L * L; ++i) {
      if (fit.heatmaps[t * L * L + i] > fit.heatmaps[t * L * L + best]) best = i;
    }
    if (best != static_cast<std::size_t>(ft.center_y) * L + static_cast<std::size_t>(ft.center_x)) {
      fit.argmax_matches = false;
    }
  }
  return fit;
}

SizesFit fit_sizes_demo(const GaussianTargets& targets, const OptimizerConfig& cfg, InitMode init) {
  cfg.validate();
  const std::size_t L = targets.map_size;
  TensorD raw;
  if (init == InitMode::exact) {
    raw = TensorD(targets.size_targets.shape());
    for (const auto& ft : targets.frames) {
      const auto t = static_cast<std::size_t>(ft.t);
      const BoundingBox& b = ft.box_cells;
      for (std::size_t y = 0; y < L; ++y) {
        for (std::size_t x = 0; x < L; ++x) {
          if (targets.annotation_mask(t, y, x) == 0.0f) continue;
          const double xd = static_cast<double>(x), yd = static_cast<double>(y);
          const double dist[4] = {xd - b.x1, yd - b.y1, b.x2 - xd, b.y2 - yd};
          for (std::size_t k = 0; k < 4; ++k) raw(t, k, y, x) = std::log(std::max(0.0, dist[k]));
        }
      }
    }
  } else {
    raw = random_parameters(targets.size_targets.shape(), cfg.seed);
  }

  const Objective objective = [&](const TensorD& params) -> std::optional<LossGrad<double>> {
    for (double v : params.data()) {
      // -inf is a legal log-distance of zero; anything that overflows exp is not.
      if (std::isnan(v) || !std::isfinite(std::exp(v))) {
        return std::nullopt;
      }
    }
    LossGrad<double> lg = giou_loss(params, targets);
    if (!std::isfinite(lg.loss)) return std::nullopt;
    return lg;
  };

  SizesFit fit;
  static_cast<FitTrace&>(fit) = descend(raw, objective, cfg);
  fit.mean_giou = 1.0 - fit.final();
  for (const auto& ft : targets.frames) {
    const auto t = static_cast<std::size_t>(ft.t);
    const auto x = static_cast<std::size_t>(ft.center_x), y = static_cast<std::size_t>(ft.center_y);
    fit.decoded.push_back(box_from_distances(static_cast<double>(x), static_cast<double>(y), std::exp(raw(t, 0, y, x)),
                                             std::exp(raw(t, 1, y, x)), std::exp(raw(t, 2, y, x)),
                                             std::exp(raw(t, 3, y, x))));
  }
  fit.size_raw = std::move(raw);
  return fit;
}

TemporalFit fit_temporal_demo(const TemporalInterval& gt, const CandidateScheme& scheme, const OptimizerConfig& cfg,
                              const TemporalFitOptions& options, InitMode init) {
  cfg.validate();
  options.weights.validate();
  if (!gt.valid_within(scheme.sequence_length)) throw DomainError("ground-truth interval must lie inside the sequence");

  std::vector<TubeCandidate> cands = label_candidates(generate_candidates(scheme), gt, options.threshold);
  const std::size_t N = cands.size();
  // Layout: [score_0..score_{N-1}, start_0..start_{N-1}, end_0..end_{N-1}]
  TensorD params;
  if (init == InitMode::exact) {
    params = TensorD(Shape{3 * N});
    for (std::size_t n = 0; n < N; ++n) {
      params[n] = cands[n].target_iou;
      params[N + n] = cands[n].offset_target.start;
      params[2 * N + n] = cands[n].offset_target.end;
    }
  } else {
    params = random_parameters(Shape{3 * N}, cfg.seed);
  }

  const auto unpack = [N](std::vector<TubeCandidate>& cs, const TensorD& p) {
    for (std::size_t n = 0; n < N; ++n) {
      cs[n].predicted_score = p[n];
      cs[n].offset_pred = {p[N + n], p[2 * N + n]};
    }
  };

  const Objective objective = [&](const TensorD& p) -> std::optional<LossGrad<double>> {
    std::vector<TubeCandidate> cs = cands;
    unpack(cs, p);
    const ScoreLoss con = confidence_loss(cs);
    const OffsetLoss reg = boundary_loss(cs, options.regression);
    LossGrad<double> lg{options.weights.confidence * con.loss + options.weights.boundary * reg.loss, TensorD(p.shape())};
    if (!std::isfinite(lg.loss)) return std::nullopt;
    for (std::size_t n = 0; n < N; ++n) {
      lg.grad[n] = options.weights.confidence * con.grad[n];
      lg.grad[N + n] = options.weights.boundary * reg.grad[n].start;
      lg.grad[2 * N + n] = options.weights.boundary * reg.grad[n].end;
    }
    return lg;
  };

  TemporalFit fit;
  static_cast<FitTrace&>(fit) = descend(params, objective, cfg);
  unpack(cands, params);
  fit.candidates = std::move(cands);
  fit.selected = select_tube(fit.candidates, scheme.sequence_length);
  fit.selected_tiou = tiou(fit.selected, gt);
  return fit;
}

GaussianTargets make_demo_targets(Rng& rng, int frames, int map_size, int frame_size, double min_cells,
                                  double max_cells, const SigmaPolicy& sigma) {
  if (max_cells > map_size || min_cells <= 0 || min_cells > max_cells) {
    throw DomainError("demo box sides must satisfy 0 < min <= max <= L");
  }
  const double cell = static_cast<double>(frame_size) / map_size;
  std::vector<FrameBox> boxes;
  for (int t = 0; t < frames; ++t) {
    const double w = rng.uniform(min_cells, max_cells) * cell;
    const double h = rng.uniform(min_cells, max_cells) * cell;
    const double x1 = rng.uniform(0.0, frame_size - w);
    const double y1 = rng.uniform(0.0, frame_size - h);
    boxes.push_back({t, {x1, y1, x1 + w, y1 + h}});
  }
  return encode_gaussian_targets(boxes, frames, frame_size, frame_size, map_size, sigma);
}

TemporalInterval make_demo_interval(Rng& rng, int sequence_length, int min_length) {
  if (min_length < 1 || min_length > sequence_length) throw DomainError("bad minimum interval length");
  const auto length = rng.uniform_int(min_length, sequence_length);
  const auto start = rng.uniform_int(0, sequence_length - length);
  return {static_cast<double>(start), static_cast<double>(start + length)};
}

}  // namespace gkcmn
