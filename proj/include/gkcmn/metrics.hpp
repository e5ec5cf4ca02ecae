#pragma once

#include <map>
#include <span>
#include <vector>

#include "gkcmn/box.hpp"
#include "gkcmn/temporal_head.hpp"

namespace gkcmn {

/// One video's predicted tube paired with its ground truth. Box maps are keyed
/// by integer frame index.
struct GroundingResult {
  TemporalInterval gt_interval;
  TemporalInterval pred_interval;
  std::map<int, BoundingBox> gt_boxes;
  std::map<int, BoundingBox> pred_boxes;

  /// Throws DomainError unless each box map covers exactly its interval's frames.
  void validate() const;
};

/// Integer frames belonging to an interval: floor(start) <= t < ceil(end).
std::vector<int> interval_frames(const TemporalInterval& interval);

/// Mean per-frame box IoU over the frame union. Frames in the intersection
/// must have a box in both maps.
double viou(const GroundingResult& r);

/// Threshold predicate shared by every vIoU@R computation.
inline bool viou_exceeds(double value, double threshold) { return value > threshold; }

double viou_at_r(std::span<const double> vious, double threshold);
double viou_at_r(std::span<const GroundingResult> results, double threshold);

struct MetricsReport {
  double m_tiou = 0;
  double m_viou = 0;
  std::map<double, double> viou_at;
  std::size_t n_videos = 0;
};

MetricsReport aggregate(std::span<const GroundingResult> results,
                        std::span<const double> thresholds = std::span<const double>());

}  // namespace gkcmn
