#include "gkcmn/fusion.hpp"

#include <string>

namespace gkcmn {

namespace {

void require_matrix(const Tensor& m, std::size_t rows, const char* name) {
  if (m.rank() != 2) throw ShapeError(std::string(name) + " must be a matrix, got " + to_string(m.shape()));
  if (m.extent(0) != rows) {
    throw ShapeError(std::string(name) + " expects " + std::to_string(m.extent(0)) + " input channels, operand has " +
                     std::to_string(rows));
  }
}

}  // namespace

void FusionWeights::validate(std::size_t d, std::size_t D) const {
  require_matrix(visual_gate, d, "W_v1");
  require_matrix(sentence_gate, D, "W_s1");
  if (visual_gate.extent(1) != sentence_gate.extent(1)) {
    throw ShapeError("W_v1 and W_s1 must project to the same width, got " + std::to_string(visual_gate.extent(1)) +
                     " and " + std::to_string(sentence_gate.extent(1)));
  }
  require_matrix(interaction_proj, visual_gate.extent(1), "W_f2");
  require_matrix(visual_proj, d, "W_v2");
}

Tensor mean_pool_words(const SentenceFeature& s) {
  if (s.words.empty() || s.words.rank() != 2) throw DomainError("sentence feature must be a non-empty (N, D) matrix");
  const std::size_t N = s.word_count(), D = s.word_dim();
  std::vector<double> sum(D, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < D; ++k) sum[k] += s.words(n, k);
  Tensor pooled(Shape{D});
  for (std::size_t k = 0; k < D; ++k) pooled[k] = static_cast<float>(sum[k] / static_cast<double>(N));
  return pooled;
}

Tensor repeat_sentence(const Tensor& pooled, std::size_t frames, std::size_t height, std::size_t width) {
  if (pooled.empty()) throw DomainError("cannot repeat an empty sentence vector");
  if (pooled.rank() != 1) throw ShapeError("repeat_sentence expects a pooled (D) vector");
  const std::size_t D = pooled.extent(0), volume = frames * height * width;
  Tensor out(Shape{D, frames, height, width});
  for (std::size_t k = 0; k < D; ++k) {
    std::fill_n(out.data().begin() + k * volume, volume, pooled[k]);
  }
  return out;
}

Tensor project_channels(const Tensor& x, const Tensor& matrix) {
  if (matrix.rank() != 2 || x.empty() || matrix.extent(0) != x.extent(0)) {
    throw ShapeError("projection " + to_string(matrix.shape()) + " does not apply to " + to_string(x.shape()));
  }
  const std::size_t in = matrix.extent(0), out = matrix.extent(1);
  // A 1x1x1 convolution whose weight (o, i) is the transposed matrix entry.
  Tensor w(Shape{out, in, 1, 1, 1});
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t i = 0; i < in; ++i) w[o * in + i] = matrix(i, o);
  const ConvKernel<float> kernel(std::move(w));
  if (x.rank() == 4) return conv3d_forward(x, kernel);
  const Shape original = x.shape();
  std::size_t rest = x.size() / in;
  Shape projected = original;
  projected[0] = out;
  return conv3d_forward(x.reshaped(Shape{in, 1, 1, rest}), kernel).reshaped(projected);
}

FusedFeature cross_modal_fuse(const VisualFeatureMap& v, const SentenceFeature& s, const FusionWeights& w) {
  if (v.tensor.rank() != 4) throw ShapeError("visual features must be (d, T, h, w), got " + to_string(v.tensor.shape()));
  if (s.words.rank() != 2) throw ShapeError("sentence features must be (N, D), got " + to_string(s.words.shape()));
  w.validate(v.feature_dim(), s.word_dim());

  const Tensor repeated = repeat_sentence(mean_pool_words(s), v.frames(), v.height(), v.width());
  Tensor gated = activation(project_channels(v.tensor, w.visual_gate), w.act);
  const Tensor sentence = activation(project_channels(repeated, w.sentence_gate), w.act);
  auto g = gated.data();
  const auto sv = sentence.data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= sv[i];

  Tensor interaction = activation(project_channels(gated, w.interaction_proj), w.act);
  Tensor visual = activation(project_channels(v.tensor, w.visual_proj), w.act);
  return FusedFeature{concat_channels(interaction, visual)};
}

}  // namespace gkcmn
