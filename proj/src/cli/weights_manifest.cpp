#include "gkcmn/cli/weights_manifest.hpp"

#include <fstream>
#include <sstream>

#include "gkcmn/cli/errors.hpp"
#include "gkcmn/tensor_io.hpp"
#include "json.hpp"

namespace gkcmn::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class Loader {
 public:
  Loader(fs::path base, const json& table, std::string scope) : base_(std::move(base)), table_(table), scope_(std::move(scope)) {
    if (!table_.is_object()) throw ParseError(scope_ + ": expected an object of tensor paths");
  }

  bool has(const std::string& name) const { return table_.contains(name); }

  Tensor tensor(const std::string& name) const {
    if (!has(name)) throw ParseError(scope_ + ": missing tensor '" + name + "'");
    const json& entry = table_.at(name);
    if (!entry.is_string()) throw ParseError(scope_ + "." + name + ": expected a file path");
    try {
      return read_gktn(base_ / entry.get<std::string>());
    } catch (const FormatError& e) {
      throw ParseError("tensor " + label(name) + ": " + e.what());
    }
  }

  ConvKernel<float> kernel(const std::string& name, const std::string& bias_name) const {
    Tensor w = tensor(name);
    try {
      if (has(bias_name)) return ConvKernel<float>(std::move(w), tensor(bias_name));
      return ConvKernel<float>(std::move(w));
    } catch (const std::invalid_argument& e) {
      throw ValidationError("tensor " + label(name) + ": " + e.what());
    }
  }

  std::string label(const std::string& name) const { return scope_ == "tensors" ? name : scope_ + "." + name; }

 private:
  fs::path base_;
  const json& table_;
  std::string scope_;
};

}  // namespace

PipelineWeights load_weights(const fs::path& manifest, std::size_t map_size) {
  std::ifstream in(manifest, std::ios::binary);
  if (!in) throw ParseError("cannot open " + manifest.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(manifest.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("tensors")) throw ParseError(manifest.string() + ": missing field 'tensors'");
  const fs::path base = manifest.parent_path();
  const Loader t(base, doc["tensors"], "tensors");

  PipelineWeights w;
  if (doc.contains("activation")) {
    if (!doc["activation"].is_string()) throw ParseError(manifest.string() + ": activation: expected a string");
    try {
      w.fusion.act = parse_activation(doc["activation"].get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ParseError(manifest.string() + ": activation: " + e.what());
    }
  }
  w.fusion.visual_gate = t.tensor("W_v1");
  w.fusion.sentence_gate = t.tensor("W_s1");
  w.fusion.interaction_proj = t.tensor("W_f2");
  w.fusion.visual_proj = t.tensor("W_v2");

  if (doc.contains("blocks")) {
    const json& blocks = doc["blocks"];
    if (!blocks.is_array()) throw ParseError(manifest.string() + ": blocks: expected a list");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const Loader b(base, blocks[i], "blocks[" + std::to_string(i) + "]");
      MixedConvWeights m;
      m.spatial = b.kernel("k2", "k2_bias");
      m.serial_temporal = b.kernel("k3_serial", "k3_serial_bias");
      m.parallel_temporal = b.kernel("k3_parallel", "k3_parallel_bias");
      m.shortcut_temporal = b.kernel("k3_mixed", "k3_mixed_bias");
      w.blocks.push_back(std::move(m));
    }
  }

  w.spatial.heatmap = t.kernel("heat_w", "heat_b");
  w.spatial.size = t.kernel("size_w", "size_b");
  w.spatial.map_size = map_size;
  w.temporal.short_range = t.kernel("t1", "t1_bias");
  w.temporal.mid_range = t.kernel("t3", "t3_bias");
  w.temporal.long_range = t.kernel("t5", "t5_bias");
  w.temporal.score_weight = t.tensor("score_w");
  const Tensor score_b = t.tensor("score_b");
  if (score_b.size() != 1) throw ValidationError("tensor score_b must hold a single value, got " + to_string(score_b.shape()));
  w.temporal.score_bias = score_b[0];
  w.temporal.offset_weight = t.tensor("offset_w");
  w.temporal.offset_bias = t.tensor("offset_b");
  return w;
}

void save_weights(const fs::path& dir, const PipelineWeights& w) {
  fs::create_directories(dir);
  json tensors = json::object();
  const auto put = [&](json& table, const std::string& name, const Tensor& x) {
    write_gktn(dir / (name + ".gktn"), x);
    table[name.substr(name.find('.') + 1)] = name + ".gktn";
  };
  const auto put_kernel = [&](json& table, const std::string& name, const std::string& bias, const ConvKernel<float>& k) {
    put(table, name, k.weights());
    put(table, bias, k.bias());
  };
  put(tensors, "W_v1", w.fusion.visual_gate);
  put(tensors, "W_s1", w.fusion.sentence_gate);
  put(tensors, "W_f2", w.fusion.interaction_proj);
  put(tensors, "W_v2", w.fusion.visual_proj);
  json blocks = json::array();
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    json b = json::object();
    put_kernel(b, p + "k2", p + "k2_bias", w.blocks[i].spatial);
    put_kernel(b, p + "k3_serial", p + "k3_serial_bias", w.blocks[i].serial_temporal);
    put_kernel(b, p + "k3_parallel", p + "k3_parallel_bias", w.blocks[i].parallel_temporal);
    put_kernel(b, p + "k3_mixed", p + "k3_mixed_bias", w.blocks[i].shortcut_temporal);
    blocks.push_back(b);
  }
  put_kernel(tensors, "heat_w", "heat_b", w.spatial.heatmap);
  put_kernel(tensors, "size_w", "size_b", w.spatial.size);
  put_kernel(tensors, "t1", "t1_bias", w.temporal.short_range);
  put_kernel(tensors, "t3", "t3_bias", w.temporal.mid_range);
  put_kernel(tensors, "t5", "t5_bias", w.temporal.long_range);
  put(tensors, "score_w", w.temporal.score_weight);
  put(tensors, "score_b", Tensor(Shape{1}, w.temporal.score_bias));
  put(tensors, "offset_w", w.temporal.offset_weight);
  put(tensors, "offset_b", w.temporal.offset_bias);

  const json doc = {{"activation", std::string(to_string(w.fusion.act))}, {"tensors", tensors}, {"blocks", blocks}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << doc.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
}

}  // namespace gkcmn::cli
