#include "gkcmn/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace gkcmn {

CheckedLoss parse_checked_loss(std::string_view name) {
  if (name == "focal") return CheckedLoss::focal;
  if (name == "giou") return CheckedLoss::giou;
  if (name == "smooth-l1") return CheckedLoss::smooth_l1;
  if (name == "boundary") return CheckedLoss::boundary;
  throw DomainError("unknown loss '" + std::string(name) + "' (expected focal, giou, smooth-l1 or boundary)");
}

std::string_view to_string(CheckedLoss loss) {
  switch (loss) {
    case CheckedLoss::focal: return "focal";
    case CheckedLoss::giou: return "giou";
    case CheckedLoss::smooth_l1: return "smooth-l1";
    case CheckedLoss::boundary: return "boundary";
  }
  return "focal";
}

namespace {

// Small clip with boxes on a random nonempty subset of frames.
GaussianTargets random_targets(Rng& rng) {
  const int T = static_cast<int>(rng.uniform_int(1, 3));
  const int L = static_cast<int>(rng.uniform_int(4, 8));
  const int frame = 64;
  std::vector<FrameBox> boxes;
  for (int t = 0; t < T; ++t) {
    if (t > 0 && rng.uniform() < 0.3) continue;
    const double w = rng.uniform(0.15, 0.9) * frame;
    const double h = rng.uniform(0.15, 0.9) * frame;
    const double x1 = rng.uniform(0.0, frame - w);
    const double y1 = rng.uniform(0.0, frame - h);
    boxes.push_back({t, {x1, y1, x1 + w, y1 + h}});
  }
  const SigmaPolicy sigma = rng.uniform() < 0.5 ? SigmaPolicy::adaptive() : SigmaPolicy::fixed(rng.uniform(0.5, 2.5));
  return encode_gaussian_targets(boxes, T, frame, frame, L, sigma);
}

std::vector<TubeCandidate> random_candidates(Rng& rng) {
  const int T = static_cast<int>(rng.uniform_int(8, 24));
  const TemporalInterval gt = make_demo_interval(rng, T, 2);
  auto cands = label_candidates(generate_candidates(CandidateScheme::default_for(T)), gt, 0.3);
  // Keep a random subset so instance sizes vary.
  std::vector<TubeCandidate> kept;
  for (const auto& c : cands) {
    if (kept.empty() || rng.uniform() < 0.6) kept.push_back(c);
  }
  return kept;
}

}  // namespace

GradCheckInstance make_gradcheck_instance(CheckedLoss which, Rng& rng) {
  switch (which) {
    case CheckedLoss::focal: {
      auto targets = std::make_shared<GaussianTargets>(random_targets(rng));
      // Predictions scattered around the targets in logit space.
      TensorD p(targets->heatmaps.shape());
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double h = std::clamp(static_cast<double>(targets->heatmaps[i]), 0.05, 0.95);
        p[i] = std::clamp(sigmoid(std::log(h / (1.0 - h)) + 1.5 * rng.normal()), 0.02, 0.98);
      }
      return {[targets](const TensorD& x) { return focal_loss(x, *targets); }, std::move(p)};
    }
    case CheckedLoss::giou: {
      auto targets = std::make_shared<GaussianTargets>(random_targets(rng));
      TensorD raw(targets->size_targets.shape());
      for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = std::log(targets->size_targets[i] + 0.5) + 0.6 * rng.normal();
      }
      return {[targets](const TensorD& x) { return giou_loss(x, *targets); }, std::move(raw)};
    }
    case CheckedLoss::smooth_l1: {
      auto cands = std::make_shared<std::vector<TubeCandidate>>(random_candidates(rng));
      TensorD scores(Shape{cands->size()});
      for (std::size_t n = 0; n < cands->size(); ++n) scores[n] = (*cands)[n].target_iou + rng.uniform(-2.5, 2.5);
      return {[cands](const TensorD& x) {
                std::vector<TubeCandidate> cs = *cands;
                for (std::size_t n = 0; n < cs.size(); ++n) cs[n].predicted_score = x[n];
                const ScoreLoss l = confidence_loss(cs);
                return LossGrad<double>{l.loss, TensorD(x.shape(), l.grad)};
              },
              std::move(scores)};
    }
    case CheckedLoss::boundary: {
      auto cands = std::make_shared<std::vector<TubeCandidate>>(random_candidates(rng));
      const BoundaryRegression mode =
          rng.uniform() < 0.5 ? BoundaryRegression::positives_only : BoundaryRegression::all;
      const std::size_t N = cands->size();
      TensorD offsets(Shape{N, 2});
      for (std::size_t n = 0; n < N; ++n) {
        offsets(n, std::size_t{0}) = (*cands)[n].offset_target.start + rng.uniform(-2.5, 2.5);
        offsets(n, std::size_t{1}) = (*cands)[n].offset_target.end + rng.uniform(-2.5, 2.5);
      }
      return {[cands, mode, N](const TensorD& x) {
                std::vector<TubeCandidate> cs = *cands;
                for (std::size_t n = 0; n < N; ++n) cs[n].offset_pred = {x(n, std::size_t{0}), x(n, std::size_t{1})};
                const OffsetLoss l = boundary_loss(cs, mode);
                TensorD g(x.shape());
                for (std::size_t n = 0; n < N; ++n) {
                  g(n, std::size_t{0}) = l.grad[n].start;
                  g(n, std::size_t{1}) = l.grad[n].end;
                }
                return LossGrad<double>{l.loss, std::move(g)};
              },
              std::move(offsets)};
    }
  }
  throw DomainError("unhandled loss kind");
}

GradCheckSummary run_gradcheck_suite(CheckedLoss which, int trials, double tolerance, std::uint64_t seed) {
  if (trials < 1) throw DomainError("gradcheck needs at least one trial");
  Rng rng(seed);
  GradCheckSummary summary;
  summary.trials = trials;
  for (int trial = 0; trial < trials; ++trial) {
    const GradCheckInstance instance = make_gradcheck_instance(which, rng);
    GradCheckOptions options;
    options.seed = rng.next();
    const GradCheckReport report = grad_check(instance.loss, instance.params, tolerance, options);
    if (!report.passed()) ++summary.failed_trials;
    if (summary.worst_trial < 0 || report.max_rel_error > summary.worst_rel_error) {
      summary.worst_rel_error = report.max_rel_error;
      summary.worst_trial = trial;
      summary.worst_index = report.worst_index;
    }
  }
  return summary;
}

}  // namespace gkcmn
