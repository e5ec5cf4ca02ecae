#pragma once

#include <cstdint>
#include <string_view>

#include "gkcmn/optimization.hpp"

namespace gkcmn {

enum class CheckedLoss { focal, giou, smooth_l1, boundary };

CheckedLoss parse_checked_loss(std::string_view name);
std::string_view to_string(CheckedLoss loss);

/// A randomized problem instance: the loss as a function of its parameters
/// and the point to check at.
struct GradCheckInstance {
  LossFunction loss;
  TensorD params;
};

/// Draws one random instance of the given loss.
GradCheckInstance make_gradcheck_instance(CheckedLoss which, Rng& rng);

struct GradCheckSummary {
  int trials = 0;
  int failed_trials = 0;
  double worst_rel_error = 0;
  int worst_trial = -1;
  std::size_t worst_index = 0;

  bool passed() const { return failed_trials == 0; }
};

GradCheckSummary run_gradcheck_suite(CheckedLoss which, int trials, double tolerance, std::uint64_t seed);

}  // namespace gkcmn
