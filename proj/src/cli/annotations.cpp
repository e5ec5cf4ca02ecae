#include "gkcmn/cli/annotations.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace gkcmn::cli {

using nlohmann::json;

namespace {

const json& field(const json& obj, const std::string& key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path + ": missing field '" + key + "'");
  return *it;
}

int int_field(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 1e9) return static_cast<int>(d);
  }
  throw ParseError(path + "." + key + ": expected an integer");
}

double real_field(const json& v, const std::string& path) {
  if (!v.is_number()) throw ParseError(path + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ParseError(path + ": expected a finite number");
  return d;
}

double real_field(const json& obj, const std::string& key, const std::string& path) {
  return real_field(field(obj, key, path), path + "." + key);
}

std::string where(const std::string& id) { return "video '" + id + "'"; }

std::map<int, TubeBox> parse_boxes(const json& list, const std::string& path, const std::string& id) {
  if (!list.is_array()) throw ParseError(path + ": expected a list");
  std::map<int, TubeBox> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    const json& b = list[i];
    if (!b.is_object()) throw ParseError(p + ": expected an object");
    const int t = int_field(b, "t", p);
    TubeBox tb;
    tb.box = {real_field(b, "x1", p), real_field(b, "y1", p), real_field(b, "x2", p), real_field(b, "y2", p)};
    if (b.contains("peak_score")) tb.peak_score = real_field(b["peak_score"], p + ".peak_score");
    if (!out.emplace(t, tb).second) {
      throw ValidationError(where(id) + ": more than one box at frame " + std::to_string(t));
    }
  }
  return out;
}

json box_json(int t, const TubeBox& tb) {
  json b = {{"t", t}, {"x1", tb.box.x1}, {"y1", tb.box.y1}, {"x2", tb.box.x2}, {"y2", tb.box.y2}};
  if (tb.peak_score) b["peak_score"] = *tb.peak_score;
  return b;
}

void check_box(const VideoTube& v, int t, const BoundingBox& b) {
  const std::string at = where(v.id) + ": box at frame " + std::to_string(t);
  if (!(b.x2 > b.x1) || !(b.y2 > b.y1)) throw ValidationError(at + " is degenerate");
  if (b.x1 < 0 || b.y1 < 0 || b.x2 > v.frame_width || b.y2 > v.frame_height) {
    throw ValidationError(at + " exceeds the " + std::to_string(v.frame_width) + "x" +
                          std::to_string(v.frame_height) + " frame");
  }
}

}  // namespace

std::map<int, BoundingBox> VideoTube::plain_boxes() const {
  std::map<int, BoundingBox> out;
  for (const auto& [t, tb] : boxes) out.emplace(t, tb.box);
  return out;
}

void validate_tube(const VideoTube& v) {
  if (v.id.empty()) throw ValidationError("a video has an empty id");
  if (v.num_frames < 1) throw ValidationError(where(v.id) + ": num_frames must be positive");
  if (v.frame_height < 1 || v.frame_width < 1) throw ValidationError(where(v.id) + ": frame extents must be positive");
  if (!(0 <= v.t_start && v.t_start < v.t_end && v.t_end <= v.num_frames)) {
    throw ValidationError(where(v.id) + ": tube [" + std::to_string(v.t_start) + ", " + std::to_string(v.t_end) +
                          ") must satisfy 0 <= t_start < t_end <= num_frames");
  }
  for (const auto& [t, tb] : v.boxes) {
    if (t < v.t_start || t >= v.t_end) {
      throw ValidationError(where(v.id) + ": box at frame " + std::to_string(t) + " lies outside the tube");
    }
    check_box(v, t, tb.box);
  }
  for (int t = v.t_start; t < v.t_end; ++t) {
    if (!v.boxes.count(t)) throw ValidationError(where(v.id) + ": no box at frame " + std::to_string(t));
  }
  for (const auto& [t, tb] : v.frame_boxes) {
    if (t < 0 || t >= v.num_frames) {
      throw ValidationError(where(v.id) + ": frame box at " + std::to_string(t) + " lies outside the clip");
    }
    check_box(v, t, tb.box);
  }
}

std::vector<VideoTube> parse_tube_file(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError(source + ": top level must be an object");
  const json& videos = field(doc, "videos", source);
  if (!videos.is_array()) throw ParseError(source + ": videos: expected a list");

  std::vector<VideoTube> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const std::string p = source + ": videos[" + std::to_string(i) + "]";
    const json& jv = videos[i];
    if (!jv.is_object()) throw ParseError(p + ": expected an object");
    VideoTube v;
    const json& id = field(jv, "id", p);
    if (!id.is_string()) throw ParseError(p + ".id: expected a string");
    v.id = id.get<std::string>();
    v.num_frames = int_field(jv, "num_frames", p);
    v.frame_height = int_field(jv, "frame_height", p);
    v.frame_width = int_field(jv, "frame_width", p);
    const json& tube = field(jv, "tube", p);
    if (!tube.is_object()) throw ParseError(p + ".tube: expected an object");
    v.t_start = int_field(tube, "t_start", p + ".tube");
    v.t_end = int_field(tube, "t_end", p + ".tube");
    v.boxes = parse_boxes(field(tube, "boxes", p + ".tube"), p + ".tube.boxes", v.id);
    if (tube.contains("confidence")) v.confidence = real_field(tube["confidence"], p + ".tube.confidence");
    if (jv.contains("frame_boxes")) v.frame_boxes = parse_boxes(jv["frame_boxes"], p + ".frame_boxes", v.id);
    if (!seen.insert(v.id).second) throw ValidationError(where(v.id) + " appears more than once");
    validate_tube(v);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<VideoTube> read_tube_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_tube_file(ss.str(), path.string());
}

std::string dump_tube_file(const std::vector<VideoTube>& videos) {
  json list = json::array();
  for (const auto& v : videos) {
    json boxes = json::array();
    for (const auto& [t, tb] : v.boxes) boxes.push_back(box_json(t, tb));
    json tube = {{"t_start", v.t_start}, {"t_end", v.t_end}, {"boxes", boxes}};
    if (v.confidence) tube["confidence"] = *v.confidence;
    json jv = {{"id", v.id},
               {"num_frames", v.num_frames},
               {"frame_height", v.frame_height},
               {"frame_width", v.frame_width},
               {"tube", tube}};
    if (!v.frame_boxes.empty()) {
      json fb = json::array();
      for (const auto& [t, tb] : v.frame_boxes) fb.push_back(box_json(t, tb));
      jv["frame_boxes"] = fb;
    }
    list.push_back(jv);
  }
  return json{{"videos", list}}.dump(2) + "\n";
}

std::vector<GroundingResult> match_results(const std::vector<VideoTube>& gt, const std::vector<VideoTube>& pred,
                                           bool temporal_gt) {
  std::map<std::string, const VideoTube*> by_id;
  for (const auto& p : pred) by_id[p.id] = &p;
  std::string missing, extra;
  std::set<std::string> gt_ids;
  for (const auto& g : gt) {
    gt_ids.insert(g.id);
    if (!by_id.count(g.id)) missing += (missing.empty() ? "" : ", ") + g.id;
  }
  for (const auto& p : pred) {
    if (!gt_ids.count(p.id)) extra += (extra.empty() ? "" : ", ") + p.id;
  }
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "video ids do not match";
    if (!missing.empty()) msg += "; missing from predictions: " + missing;
    if (!extra.empty()) msg += "; missing from ground truth: " + extra;
    throw ValidationError(msg);
  }

  std::vector<GroundingResult> out;
  for (const auto& g : gt) {
    const VideoTube& p = *by_id.at(g.id);
    GroundingResult r;
    r.gt_interval = g.interval();
    r.gt_boxes = g.plain_boxes();
    if (temporal_gt) {
      r.pred_interval = g.interval();
      for (int t = g.t_start; t < g.t_end; ++t) {
        if (auto it = p.boxes.find(t); it != p.boxes.end()) {
          r.pred_boxes.emplace(t, it->second.box);
        } else if (auto fb = p.frame_boxes.find(t); fb != p.frame_boxes.end()) {
          r.pred_boxes.emplace(t, fb->second.box);
        } else {
          throw ValidationError(where(g.id) + ": prediction has no box at frame " + std::to_string(t) +
                                " of the ground-truth interval");
        }
      }
    } else {
      r.pred_interval = p.interval();
      r.pred_boxes = p.plain_boxes();
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace gkcmn::cli
