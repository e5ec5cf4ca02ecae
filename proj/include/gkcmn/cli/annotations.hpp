#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gkcmn/box.hpp"
#include "gkcmn/cli/errors.hpp"
#include "gkcmn/metrics.hpp"

namespace gkcmn::cli {

struct TubeBox {
  BoundingBox box;
  std::optional<double> peak_score;
};

/// One video of an annotation or prediction file. The tube covers frames
/// t_start <= t < t_end with one box each.
struct VideoTube {
  std::string id;
  int num_frames = 0;
  int frame_height = 0;
  int frame_width = 0;
  int t_start = 0;
  int t_end = 0;
  std::map<int, TubeBox> boxes;
  std::optional<double> confidence;
  /// Predictions only: a box for every frame of the clip.
  std::map<int, TubeBox> frame_boxes;

  TemporalInterval interval() const {
    return {static_cast<double>(t_start), static_cast<double>(t_end)};
  }
  std::map<int, BoundingBox> plain_boxes() const;
};

/// Parses the JSON text. Syntax and type problems throw ParseError with the
/// line or field path; broken invariants throw ValidationError naming the video.
std::vector<VideoTube> parse_tube_file(const std::string& text, const std::string& source);
std::vector<VideoTube> read_tube_file(const std::filesystem::path& path);

/// Throws ValidationError naming the video id.
void validate_tube(const VideoTube& v);

std::string dump_tube_file(const std::vector<VideoTube>& videos);

/// Pairs predictions with ground truth by id. With temporal_gt the predicted
/// interval is replaced by the ground-truth one and boxes are taken from
/// frame_boxes when the tube lacks them.
std::vector<GroundingResult> match_results(const std::vector<VideoTube>& gt, const std::vector<VideoTube>& pred,
                                           bool temporal_gt);

}  // namespace gkcmn::cli
