#include "gkcmn/pipeline.hpp"

#include <cmath>

namespace gkcmn {

namespace {

Tensor random_matrix(std::size_t in, std::size_t out, Rng& rng) {
  Tensor m(Shape{in, out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& v : m.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return m;
}

}  // namespace

void PipelineWeights::validate(const PipelineDims& dims) const {
  fusion.validate(dims.visual, dims.word);
  if (fusion.output_channels() != dims.fused()) throw ShapeError("fusion output does not match c1 + c2");
  for (const auto& b : blocks) b.validate(dims.fused());
  spatial.validate(dims.fused());
  temporal.validate(dims.fused());
}

PipelineWeights PipelineWeights::random(const PipelineDims& dims, std::size_t map_size, std::size_t num_blocks,
                                        Rng& rng, Activation act) {
  PipelineWeights w;
  w.fusion.visual_gate = random_matrix(dims.visual, dims.gate, rng);
  w.fusion.sentence_gate = random_matrix(dims.word, dims.gate, rng);
  w.fusion.interaction_proj = random_matrix(dims.gate, dims.interaction, rng);
  w.fusion.visual_proj = random_matrix(dims.visual, dims.visual_out, rng);
  w.fusion.act = act;
  for (std::size_t i = 0; i < num_blocks; ++i) w.blocks.push_back(MixedConvWeights::random(dims.fused(), rng));
  w.spatial = SpatialHeadWeights::random(dims.fused(), map_size, rng);
  w.temporal = TemporalHeadWeights::random(dims.fused(), rng);
  return w;
}

PipelineOutput run_pipeline(const VisualFeatureMap& visual, const SentenceFeature& sentence, const PipelineWeights& w,
                            const PipelineConfig& cfg) {
  if (cfg.frame_height < 1 || cfg.frame_width < 1) throw DomainError("frame size must be positive");
  const FusedFeature fused = cross_modal_fuse(visual, sentence, w.fusion);
  const Tensor m_mix = mixed_network_forward(fused, w.blocks);

  PipelineOutput out;
  out.spatial = spatial_head_forward(m_mix, w.spatial);
  out.boxes = decode_boxes(out.spatial, cfg.frame_height, cfg.frame_width);

  CandidateScheme scheme = cfg.candidates;
  scheme.sequence_length = static_cast<int>(m_mix.extent(1));
  if (scheme.scales.empty()) {
    const double fraction = scheme.stride_fraction;
    scheme = CandidateScheme::default_for(scheme.sequence_length);
    scheme.stride_fraction = fraction;
  }
  out.candidates = generate_candidates(scheme);
  const TemporalEmbedding emb = temporal_embed_forward(m_mix, w.temporal, out.candidates);
  apply_predictions(out.candidates, emb);
  out.selected = select_tube(out.candidates, scheme.sequence_length);
  return out;
}

}  // namespace gkcmn
