#include "gkcmn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gkcmn/errors.hpp"

namespace gkcmn {

namespace {

constexpr double kDefaultThresholds[] = {0.3, 0.5};

void check_cover(const std::map<int, BoundingBox>& boxes, const TemporalInterval& interval, const char* side) {
  const auto frames = interval_frames(interval);
  if (boxes.size() != frames.size() ||
      !std::equal(frames.begin(), frames.end(), boxes.begin(), [](int t, const auto& kv) { return kv.first == t; })) {
    throw DomainError(std::string(side) + " boxes must cover exactly the frames of the " + side + " interval");
  }
}

}  // namespace

std::vector<int> interval_frames(const TemporalInterval& interval) {
  std::vector<int> frames;
  const int first = static_cast<int>(std::floor(interval.start));
  const int last = static_cast<int>(std::ceil(interval.end));
  for (int t = first; t < last; ++t) frames.push_back(t);
  return frames;
}

void GroundingResult::validate() const {
  if (!(gt_interval.start < gt_interval.end)) throw DomainError("ground-truth interval is empty");
  if (!(pred_interval.start < pred_interval.end)) throw DomainError("predicted interval is empty");
  check_cover(gt_boxes, gt_interval, "gt");
  check_cover(pred_boxes, pred_interval, "pred");
}

double viou(const GroundingResult& r) {
  const auto gt = interval_frames(r.gt_interval);
  const auto pred = interval_frames(r.pred_interval);
  std::vector<int> both, either;
  std::set_intersection(gt.begin(), gt.end(), pred.begin(), pred.end(), std::back_inserter(both));
  std::set_union(gt.begin(), gt.end(), pred.begin(), pred.end(), std::back_inserter(either));
  if (either.empty()) throw DomainError("vIoU undefined: no frame in either interval");

  double sum = 0.0;
  for (int t : both) {
    const auto g = r.gt_boxes.find(t);
    const auto p = r.pred_boxes.find(t);
    if (g == r.gt_boxes.end() || p == r.pred_boxes.end()) {
      throw DomainError("frame " + std::to_string(t) + " lacks a ground-truth or predicted box");
    }
    sum += iou(p->second, g->second);
  }
  return sum / static_cast<double>(either.size());
}

double viou_at_r(std::span<const double> vious, double threshold) {
  if (vious.empty()) throw DomainError("vIoU@R needs at least one result");
  const auto hits = std::count_if(vious.begin(), vious.end(), [&](double v) { return viou_exceeds(v, threshold); });
  return static_cast<double>(hits) / static_cast<double>(vious.size());
}

double viou_at_r(std::span<const GroundingResult> results, double threshold) {
  std::vector<double> vious;
  vious.reserve(results.size());
  for (const auto& r : results) vious.push_back(viou(r));
  return viou_at_r(vious, threshold);
}

MetricsReport aggregate(std::span<const GroundingResult> results, std::span<const double> thresholds) {
  if (results.empty()) throw DomainError("cannot aggregate an empty result list");
  if (thresholds.empty()) thresholds = kDefaultThresholds;

  MetricsReport report;
  report.n_videos = results.size();
  std::vector<double> vious;
  vious.reserve(results.size());
  double tiou_sum = 0.0;
  for (const auto& r : results) {
    tiou_sum += tiou(r.pred_interval, r.gt_interval);
    vious.push_back(viou(r));
  }
  const double n = static_cast<double>(results.size());
  report.m_tiou = tiou_sum / n;
  double viou_sum = 0.0;
  for (double v : vious) viou_sum += v;
  report.m_viou = viou_sum / n;
  for (double R : thresholds) report.viou_at[R] = viou_at_r(vious, R);
  return report;
}

}  // namespace gkcmn
