#pragma once

#include <filesystem>

#include "gkcmn/pipeline.hpp"

namespace gkcmn::cli {

// Weights directory layout: manifest.json maps tensor names to GKTN files
// relative to the manifest.
//
//   {"activation": "relu",
//    "tensors": {"W_v1": "W_v1.gktn", ..., "heat_w": ..., "t1": ..., "score_b": ...},
//    "blocks": [{"k2": ..., "k3_serial": ..., "k3_parallel": ..., "k3_mixed": ...}]}
//
// Kernel biases are optional entries named "<kernel>_bias" (or heat_b, size_b).

/// Throws ParseError for a malformed manifest or tensor file and
/// ValidationError naming the tensor for shape problems.
PipelineWeights load_weights(const std::filesystem::path& manifest, std::size_t map_size);

/// Writes manifest.json and one GKTN file per tensor into dir.
void save_weights(const std::filesystem::path& dir, const PipelineWeights& w);

}  // namespace gkcmn::cli
