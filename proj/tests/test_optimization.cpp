#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "gkcmn/errors.hpp"
#include "gkcmn/gradcheck_suite.hpp"
#include "gkcmn/optimization.hpp"

using namespace gkcmn;

namespace {

LossGrad<double> half_square(const TensorD& x) {
  LossGrad<double> lg{0.0, x};
  for (double v : x.data()) lg.loss += 0.5 * v * v;
  return lg;
}

TensorD random_point(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  TensorD x(Shape{n});
  for (auto& v : x.data()) v = rng.uniform(-3.0, 3.0);
  return x;
}

bool non_increasing(const std::vector<double>& curve) {
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i] > curve[i - 1]) return false;
  }
  return true;
}

OptimizerConfig config(double lr, int steps, std::uint64_t seed = 0, bool backtracking = false) {
  OptimizerConfig cfg;
  cfg.learning_rate = lr;
  cfg.steps = steps;
  cfg.seed = seed;
  cfg.backtracking = backtracking;
  return cfg;
}

}  // namespace

TEST(TotalLoss, ZeroComponents) { EXPECT_EQ(total_loss({0, 0, 0, 0}), 0.0); }

TEST(TotalLoss, DefaultWeightsHandSum) {
  const LossWeights w;
  EXPECT_EQ(w.localization, 1.0);
  EXPECT_EQ(w.size_regression, 2.0);
  EXPECT_EQ(w.confidence, 0.2);
  EXPECT_EQ(w.boundary, 0.1);
  EXPECT_NEAR(total_loss({0.17329, 0.2, 0.05, 0.125}), 0.59579, 1e-6);
}

TEST(TotalLoss, ProjectionOntoLocalization) {
  EXPECT_DOUBLE_EQ(total_loss({0.7, 3.0, 5.0, 11.0}, {1, 0, 0, 0}), 0.7);
}

TEST(TotalLoss, LinearInComponentsAndWeights) {
  const LossComponents a{0.3, 0.1, 0.9, 0.4}, b{1.1, 0.2, 0.05, 0.6};
  const LossComponents sum{a.localization + b.localization, a.size_regression + b.size_regression,
                           a.confidence + b.confidence, a.boundary + b.boundary};
  EXPECT_NEAR(total_loss(sum), total_loss(a) + total_loss(b), 1e-12);
  const LossWeights w{2.0, 4.0, 0.4, 0.2};
  EXPECT_NEAR(total_loss(a, w), 2.0 * total_loss(a), 1e-12);
}

TEST(TotalLoss, RejectsNonFinite) {
  EXPECT_THROW(total_loss({NAN, 0, 0, 0}), DomainError);
  EXPECT_THROW(total_loss({0, INFINITY, 0, 0}), DomainError);
  EXPECT_THROW(total_loss({0, 0, 0, 0}, {-1, 0, 0, 0}), DomainError);
}

TEST(GradCheck, QuadraticIsExact) {
  const GradCheckReport r = grad_check(half_square, random_point(50, 3), 1e-4);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.checked, 50u);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(GradCheck, DoubledGradientFailsEverywhere) {
  const LossFunction wrong = [](const TensorD& x) {
    LossGrad<double> lg = half_square(x);
    for (auto& g : lg.grad.data()) g *= 2.0;
    return lg;
  };
  const TensorD x = random_point(40, 4);
  const GradCheckReport r = grad_check(wrong, x, 1e-4);
  EXPECT_FALSE(r.passed());
  EXPECT_EQ(r.failing.size(), x.size());
  // |2x - x| / (2|x| + |x|)
  EXPECT_NEAR(r.max_rel_error, 1.0 / 3.0, 1e-6);
}

TEST(GradCheck, SamplesLargeTensors) {
  GradCheckOptions opt;
  opt.max_coordinates = 10;  // raised to the 64 floor
  const GradCheckReport r = grad_check(half_square, random_point(500, 5), 1e-4, opt);
  EXPECT_EQ(r.checked, 64u);
  EXPECT_TRUE(r.passed());
}

TEST(GradCheck, NonFiniteLossThrows) {
  const LossFunction bad = [](const TensorD& x) {
    LossGrad<double> lg = half_square(x);
    if (x[0] > 1.0) lg.loss = NAN;
    return lg;
  };
  TensorD x(Shape{2});
  x[0] = 1.0;
  EXPECT_THROW(grad_check(bad, x, 1e-4), DomainError);
}

class GradCheckSuite : public ::testing::TestWithParam<CheckedLoss> {};

TEST_P(GradCheckSuite, HundredTrialsWithinTolerance) {
  const GradCheckSummary s = run_gradcheck_suite(GetParam(), 100, 1e-4, 0);
  EXPECT_EQ(s.trials, 100);
  EXPECT_TRUE(s.passed()) << to_string(GetParam()) << " worst " << s.worst_rel_error << " at trial "
                          << s.worst_trial;
  EXPECT_LT(s.worst_rel_error, 1e-4);
}

TEST_P(GradCheckSuite, TinyToleranceFails) {
  const GradCheckSummary s = run_gradcheck_suite(GetParam(), 5, 1e-12, 0);
  EXPECT_FALSE(s.passed());
}

INSTANTIATE_TEST_SUITE_P(Losses, GradCheckSuite,
                         ::testing::Values(CheckedLoss::focal, CheckedLoss::giou, CheckedLoss::smooth_l1,
                                           CheckedLoss::boundary),
                         [](const auto& info) {
                           std::string name(to_string(info.param));
                           std::replace(name.begin(), name.end(), '-', '_');
                           return name;
                         });

TEST(GradCheckSuite, ParsesNames) {
  EXPECT_EQ(parse_checked_loss("focal"), CheckedLoss::focal);
  EXPECT_EQ(parse_checked_loss("smooth-l1"), CheckedLoss::smooth_l1);
  EXPECT_THROW(parse_checked_loss("l2"), DomainError);
}

TEST(HeatmapDemo, SingleFrameReachesOnePercent) {
  Rng rng(0);
  const GaussianTargets targets = make_demo_targets(rng, 1, 16);
  const HeatmapFit fit = fit_heatmap_demo(targets, config(0.5, 2000));
  EXPECT_EQ(fit.loss_curve.size(), 2001u);
  EXPECT_LE(fit.final(), 0.01 * fit.initial());
  EXPECT_TRUE(fit.argmax_matches);
}

TEST(HeatmapDemo, ArgmaxOnEveryFrameAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(seed);
    const GaussianTargets targets = make_demo_targets(rng, 4, 16);
    const HeatmapFit fit = fit_heatmap_demo(targets, config(0.5, 2000, seed));
    EXPECT_TRUE(fit.argmax_matches) << "seed " << seed;
    EXPECT_LE(fit.final(), 0.01 * fit.initial()) << "seed " << seed;
  }
}

TEST(HeatmapDemo, ExactLogitStartNearFloor) {
  Rng rng(1);
  const GaussianTargets targets = make_demo_targets(rng, 2, 16, 224, 4.0, 8.0, SigmaPolicy::fixed(0.25));
  const HeatmapFit fit = fit_heatmap_demo(targets, config(0.5, 200), {}, InitMode::exact);
  // the focal loss is nonnegative, so its floor is 0
  EXPECT_GE(fit.initial(), 0.0);
  EXPECT_LT(fit.initial(), 1e-3);
  EXPECT_TRUE(non_increasing(fit.loss_curve));
  EXPECT_TRUE(fit.argmax_matches);
}

TEST(HeatmapDemo, Reproducible) {
  Rng a(7), b(7);
  const HeatmapFit x = fit_heatmap_demo(make_demo_targets(a, 2, 16), config(0.5, 300, 7));
  const HeatmapFit y = fit_heatmap_demo(make_demo_targets(b, 2, 16), config(0.5, 300, 7));
  EXPECT_EQ(x.loss_curve, y.loss_curve);
  EXPECT_EQ(x.logits.data().size(), y.logits.data().size());
  EXPECT_TRUE(std::equal(x.logits.data().begin(), x.logits.data().end(), y.logits.data().begin()));
}

TEST(HeatmapDemo, AbsurdRateDiverges) {
  Rng rng(0);
  const GaussianTargets targets = make_demo_targets(rng, 1, 16);
  try {
    fit_heatmap_demo(targets, config(1e6, 100));
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.step(), 1);
  }
}

TEST(SizesDemo, ReachesMeanGiou) {
  Rng rng(0);
  const GaussianTargets targets = make_demo_targets(rng, 4, 16);
  const SizesFit fit = fit_sizes_demo(targets, config(5.0, 40000));
  EXPECT_GE(fit.mean_giou, 0.95);
  EXPECT_EQ(fit.decoded.size(), 4u);
}

TEST(SizesDemo, ExactStartHasZeroLoss) {
  Rng rng(2);
  const GaussianTargets targets = make_demo_targets(rng, 3, 16);
  EXPECT_NEAR(fit_sizes_demo(targets, config(0.1, 1), InitMode::exact).initial(), 0.0, 1e-12);
  // the loss has a kink at its minimum, so only a line search holds the start in place
  const SizesFit fit = fit_sizes_demo(targets, config(0.1, 5, 0, true), InitMode::exact);
  for (double l : fit.loss_curve) EXPECT_NEAR(l, 0.0, 1e-12);
  EXPECT_NEAR(fit.mean_giou, 1.0, 1e-12);
  for (std::size_t i = 0; i < fit.decoded.size(); ++i) {
    EXPECT_NEAR(iou(fit.decoded[i], targets.frames[i].box_cells), 1.0, 1e-9);
  }
}

TEST(SizesDemo, BacktrackingNeverIncreases) {
  Rng rng(3);
  const GaussianTargets targets = make_demo_targets(rng, 2, 16);
  const SizesFit fit = fit_sizes_demo(targets, config(50.0, 500, 3, true));
  EXPECT_TRUE(non_increasing(fit.loss_curve));
  EXPECT_LT(fit.final(), fit.initial());
}

TEST(SizesDemo, Reproducible) {
  Rng a(4), b(4);
  const SizesFit x = fit_sizes_demo(make_demo_targets(a, 2, 16), config(5.0, 500, 4));
  const SizesFit y = fit_sizes_demo(make_demo_targets(b, 2, 16), config(5.0, 500, 4));
  EXPECT_EQ(x.loss_curve, y.loss_curve);
}

TEST(TemporalDemo, SelectedTubeMatchesGroundTruth) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(seed);
    const TemporalInterval gt = make_demo_interval(rng, 32);
    const TemporalFit fit = fit_temporal_demo(gt, CandidateScheme::default_for(32), config(0.5, 2000, seed));
    EXPECT_GE(fit.selected_tiou, 0.9) << "seed " << seed;
    EXPECT_LT(fit.final(), fit.initial());
  }
}

TEST(TemporalDemo, PerfectStart) {
  const TemporalInterval gt{5.0, 19.0};
  const TemporalFit fit = fit_temporal_demo(gt, CandidateScheme::default_for(32), config(0.5, 3), {}, InitMode::exact);
  EXPECT_EQ(fit.initial(), 0.0);
  EXPECT_EQ(fit.final(), 0.0);
  EXPECT_DOUBLE_EQ(fit.selected.start, gt.start);
  EXPECT_DOUBLE_EQ(fit.selected.end, gt.end);
  EXPECT_DOUBLE_EQ(fit.selected_tiou, 1.0);
}

TEST(TemporalDemo, SingleCandidateEqualToGroundTruth) {
  CandidateScheme scheme;
  scheme.scales = {16};
  scheme.sequence_length = 16;
  const TemporalInterval gt{0.0, 16.0};
  const TemporalFit fit = fit_temporal_demo(gt, scheme, config(0.5, 2000));
  ASSERT_EQ(fit.candidates.size(), 1u);
  const TubeCandidate& c = fit.candidates[0];
  EXPECT_EQ(c.target_iou, 1.0);
  EXPECT_EQ(c.offset_target.start, 0.0);
  EXPECT_EQ(c.offset_target.end, 0.0);
  EXPECT_NEAR(c.predicted_score, 1.0, 1e-3);
  EXPECT_NEAR(c.offset_pred.start, 0.0, 1e-3);
  EXPECT_NEAR(c.offset_pred.end, 0.0, 1e-3);
  EXPECT_NEAR(fit.selected_tiou, 1.0, 1e-3);
}

TEST(TemporalDemo, RejectsIntervalOutsideSequence) {
  EXPECT_THROW(fit_temporal_demo({10.0, 40.0}, CandidateScheme::default_for(32), config(0.5, 1)), DomainError);
}

TEST(OptimizerConfig, Validation) {
  EXPECT_THROW(config(0.0, 1).validate(), DomainError);
  EXPECT_THROW(config(0.1, 0).validate(), DomainError);
  EXPECT_NO_THROW(config(0.1, 1).validate());
}

TEST(DemoData, IntervalsAndBoxesInRange) {
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const TemporalInterval gt = make_demo_interval(rng, 32);
    EXPECT_GE(gt.start, 0.0);
    EXPECT_LE(gt.end, 32.0);
    EXPECT_GE(gt.end - gt.start, 4.0);
  }
  const GaussianTargets t = make_demo_targets(rng, 5, 16);
  EXPECT_EQ(t.frames.size(), 5u);
  for (const auto& f : t.frames) {
    EXPECT_GE(f.box_cells.width(), 4.0 - 1e-9);
    EXPECT_LE(f.box_cells.width(), 8.0 + 1e-9);
  }
  EXPECT_THROW(make_demo_targets(rng, 1, 16, 224, 4.0, 20.0), DomainError);
  EXPECT_THROW(make_demo_interval(rng, 8, 9), DomainError);
}
