#pragma once

#include <string>
#include <vector>

#include "gkcmn/fusion.hpp"
#include "gkcmn/mixed_conv.hpp"
#include "gkcmn/spatial_head.hpp"
#include "gkcmn/temporal_head.hpp"

namespace gkcmn {

struct PipelineDims {
  std::size_t visual = 32;       // d
  std::size_t word = 32;         // D
  std::size_t gate = 16;         // d_p
  std::size_t interaction = 16;  // c1
  std::size_t visual_out = 16;   // c2

  std::size_t fused() const { return interaction + visual_out; }
};

struct PipelineWeights {
  FusionWeights fusion;
  std::vector<MixedConvWeights> blocks;
  SpatialHeadWeights spatial;
  TemporalHeadWeights temporal;

  void validate(const PipelineDims& dims) const;
  static PipelineWeights random(const PipelineDims& dims, std::size_t map_size, std::size_t num_blocks, Rng& rng,
                                Activation act = Activation::relu);
};

struct PipelineConfig {
  std::string video_id;
  int frame_height = 0;
  int frame_width = 0;
  CandidateScheme candidates;  // sequence_length is taken from the features
};

struct PipelineOutput {
  SpatialPrediction spatial;
  std::vector<DecodedBox> boxes;  // one per frame
  std::vector<TubeCandidate> candidates;
  TemporalInterval selected;
};

/// Features to fused map to mixed blocks to both heads, then decoding.
PipelineOutput run_pipeline(const VisualFeatureMap& visual, const SentenceFeature& sentence, const PipelineWeights& w,
                            const PipelineConfig& cfg);

}  // namespace gkcmn
