// Copyright 2026 The pvkit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pvkit/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "pvkit/error.hpp"
#include "pvkit/rng.hpp"

namespace pvkit::decoder {

namespace {

constexpr double kLayerNormEps = 1e-5;

Matrix random_matrix(int rows, int cols, double bound, SplitMix64& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
  }
  return m;
}

AttentionWeights random_attention(int source_dim, int dim, SplitMix64& rng) {
  const double bq = 1.0 / std::sqrt(static_cast<double>(dim));
  const double bs = 1.0 / std::sqrt(static_cast<double>(source_dim));
  AttentionWeights w;
  w.query = random_matrix(dim, dim, bq, rng);
  w.key = random_matrix(source_dim, dim, bs, rng);
  w.value = random_matrix(source_dim, dim, bs, rng);
  w.out = random_matrix(dim, dim, bq, rng);
  return w;
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Per-row layer normalisation without affine parameters.
Matrix layer_norm(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    out.row(i) = (x.row(i).array() - mean) / std::sqrt(var + kLayerNormEps);
  }
  return out;
}

// Pixels x channels view of a feature map.
Matrix pixel_matrix(const FeatureMap& f) {
  Matrix m(static_cast<Eigen::Index>(f.pixels()), f.channels());
  for (int c = 0; c < f.channels(); ++c) {
    for (std::size_t p = 0; p < f.pixels(); ++p) m(static_cast<Eigen::Index>(p), c) = f.at(c, p);
  }
  return m;
}

// Row-wise softmax restricted to `allowed`; all-false rows use every column.
Matrix masked_softmax(const Matrix& scores, const BoolMatrix& allowed) {
  Matrix out = Matrix::Zero(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const bool fallback = !allowed.row(i).any();
    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (fallback || allowed(i, j)) peak = std::max(peak, scores(i, j));
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (fallback || allowed(i, j)) {
        out(i, j) = std::exp(scores(i, j) - peak);
        total += out(i, j);
      }
    }
    out.row(i) /= total;
  }
  return out;
}

Matrix self_attention(const Matrix& x, const AttentionWeights& w) {
  const Matrix q = x * w.query;
  const Matrix k = x * w.key;
  const Matrix v = x * w.value;
  const Matrix scores = (q * k.transpose()) / std::sqrt(static_cast<double>(x.cols()));
  const BoolMatrix all = BoolMatrix::Constant(scores.rows(), scores.cols(), true);
  return masked_softmax(scores, all) * v * w.out;
}

struct Predictions {
  Matrix class_logits;
  Matrix mask_logits;
};

Predictions predict(const Matrix& x, const Matrix& finest, const DecoderWeights& w) {
  const Matrix embed = w.mask_out.apply(relu(w.mask_hidden.apply(x)));
  return {w.class_head.apply(x), embed * finest.transpose()};
}

// Nearest-neighbour resampling of finest-scale mask logits to (h, w), then
// thresholding of sigmoid(logit).
BoolMatrix attention_masks(const Matrix& mask_logits, int src_h, int src_w, int h, int w,
                           double threshold) {
  const double logit_threshold = std::log(threshold / (1.0 - threshold));
  BoolMatrix masks(mask_logits.rows(), static_cast<Eigen::Index>(h) * w);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(src_h - 1, static_cast<int>((y + 0.5) * src_h / h));
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(src_w - 1, static_cast<int>((x + 0.5) * src_w / w));
      const Eigen::Index src = static_cast<Eigen::Index>(sy) * src_w + sx;
      const Eigen::Index dst = static_cast<Eigen::Index>(y) * w + x;
      for (Eigen::Index i = 0; i < mask_logits.rows(); ++i) {
        masks(i, dst) = mask_logits(i, src) > logit_threshold;
      }
    }
  }
  return masks;
}

}  // namespace

std::vector<ScaleShape> shapes_of(const std::vector<FeatureMap>& features) {
  std::vector<ScaleShape> shapes;
  shapes.reserve(features.size());
  for (const FeatureMap& f : features) shapes.push_back({f.channels(), f.height(), f.width()});
  return shapes;
}

int finest_scale(const std::vector<ScaleShape>& scales) {
  int best = 0;
  for (std::size_t l = 1; l < scales.size(); ++l) {
    if (scales[l].pixels() > scales[static_cast<std::size_t>(best)].pixels()) {
      best = static_cast<int>(l);
    }
  }
  return best;
}

Matrix QuerySet::class_probabilities() const {
  Matrix probs(class_logits.rows(), class_logits.cols());
  for (Eigen::Index i = 0; i < class_logits.rows(); ++i) {
    const double peak = class_logits.row(i).maxCoeff();
    probs.row(i) = (class_logits.row(i).array() - peak).exp();
    probs.row(i) /= probs.row(i).sum();
  }
  return probs;
}

std::vector<int> QuerySet::predicted_classes() const {
  std::vector<int> out(static_cast<std::size_t>(class_logits.rows()), num_classes);
  for (Eigen::Index i = 0; i < class_logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < class_logits.cols(); ++j) {
      if (class_logits(i, j) > class_logits(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

std::vector<bool> QuerySet::non_empty() const {
  const std::vector<int> cls = predicted_classes();
  std::vector<bool> out(cls.size());
  for (std::size_t i = 0; i < cls.size(); ++i) out[i] = cls[i] != num_classes;
  return out;
}

void DecoderConfig::validate() const {
  if (layers < 1) throw ValidationError(fmt::format("decoder needs >= 1 layer, got {}", layers));
  if (num_queries < 1 || embed_dim < 1 || num_classes < 1) {
    throw ValidationError("decoder needs >= 1 query, embedding dim and class");
  }
  if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) {
    throw ValidationError("mask threshold must lie in (0, 1)");
  }
}

Matrix Linear::apply(const Matrix& x) const {
  Matrix y = x * weight;
  y.rowwise() += bias;
  return y;
}

Linear Linear::random(int in, int out, std::uint64_t seed) {
  SplitMix64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l{random_matrix(in, out, bound, rng), Vector(out)};
  for (Eigen::Index j = 0; j < l.bias.size(); ++j) l.bias(j) = rng.uniform(-bound, bound);
  return l;
}

Linear Linear::zeros(int in, int out) { return {Matrix::Zero(in, out), Vector::Zero(out)}; }

LaqHead LaqHead::random(int embed_dim, int hidden_dim, std::uint64_t seed) {
  SplitMix64 rng(seed);
  return {Linear::random(embed_dim, hidden_dim, rng.next()),
          Linear::random(hidden_dim, hidden_dim, rng.next()),
          Linear::random(hidden_dim, 2, rng.next())};
}

LaqHead LaqHead::zeros(int embed_dim, int hidden_dim) {
  return {Linear::zeros(embed_dim, hidden_dim), Linear::zeros(hidden_dim, hidden_dim),
          Linear::zeros(hidden_dim, 2)};
}

DecoderWeights DecoderWeights::init(const DecoderConfig& cfg,
                                    const std::vector<ScaleShape>& scales,
                                    const LaqConfig& laq) {
  cfg.validate();
  if (scales.empty()) throw ValidationError("decoder needs at least one feature scale");
  const std::vector<int> schedule = scale_schedule(scales, cfg.layers);
  SplitMix64 rng(cfg.seed);
  const int c = cfg.embed_dim;

  DecoderWeights w;
  w.query_init.resize(cfg.num_queries, c);
  for (Eigen::Index i = 0; i < w.query_init.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.query_init.cols(); ++j) w.query_init(i, j) = rng.normal();
  }

  for (int l = 0; l < cfg.layers; ++l) {
    LayerWeights layer;
    const int source = scales[static_cast<std::size_t>(schedule[static_cast<std::size_t>(l)])].channels;
    layer.cross = random_attention(source, c, rng);
    layer.self = random_attention(c, c, rng);
    layer.ffn_in = Linear::random(c, 2 * c, rng.next());
    layer.ffn_out = Linear::random(2 * c, c, rng.next());
    w.layers.push_back(std::move(layer));
  }
  w.class_head = Linear::random(c, cfg.num_classes + 1, rng.next());
  w.mask_hidden = Linear::random(c, c, rng.next());
  w.mask_out = Linear::random(c, scales[static_cast<std::size_t>(finest_scale(scales))].channels,
                              rng.next());
  const int hidden = laq.hidden_dim > 0 ? laq.hidden_dim : c;
  w.laq = LaqHead::random(c, hidden, rng.next());
  return w;
}

CrossAttentionResult masked_cross_attention(const Matrix& queries, const FeatureMap& features,
                                            const BoolMatrix& attn_masks,
                                            const AttentionWeights& weights) {
  const auto n = queries.rows();
  const auto p = static_cast<Eigen::Index>(features.pixels());
  if (attn_masks.rows() != n || attn_masks.cols() != p) {
    throw ValidationError(fmt::format("attention masks are {}x{}, expected {}x{}",
                                      attn_masks.rows(), attn_masks.cols(), n, p));
  }
  if (weights.query.rows() != queries.cols() || weights.key.rows() != features.channels() ||
      weights.value.rows() != features.channels() || weights.key.cols() != queries.cols()) {
    throw ValidationError(fmt::format(
        "cross-attention weights do not fit {}-dim queries over {}-channel features",
        queries.cols(), features.channels()));
  }
  const Matrix source = pixel_matrix(features);
  const Matrix q = queries * weights.query;
  const Matrix k = source * weights.key;
  const Matrix v = source * weights.value;
  const Matrix scores = (q * k.transpose()) / std::sqrt(static_cast<double>(queries.cols()));
  CrossAttentionResult result;
  result.attention = masked_softmax(scores, attn_masks);
  result.embeddings = queries + result.attention * v * weights.out;
  return result;
}

QuerySet initial_queries(const DecoderConfig& cfg, const DecoderWeights& weights) {
  QuerySet qs;
  qs.num_classes = cfg.num_classes;
  qs.embeddings = weights.query_init;
  return qs;
}

std::vector<int> scale_schedule(const std::vector<ScaleShape>& scales, int layers) {
  std::vector<int> order(scales.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scales[static_cast<std::size_t>(a)].pixels() <
           scales[static_cast<std::size_t>(b)].pixels();
  });
  std::vector<int> schedule;
  for (int l = 0; l < layers; ++l) schedule.push_back(order[static_cast<std::size_t>(l) % order.size()]);
  return schedule;
}

QuerySet run_decoder(const QuerySet& initial, const std::vector<FeatureMap>& features,
                     const DecoderConfig& cfg, const DecoderWeights& weights) {
  cfg.validate();
  if (features.empty()) throw ValidationError("decoder needs at least one feature scale");
  if (initial.dim() != cfg.embed_dim || initial.size() != cfg.num_queries) {
    throw ValidationError(fmt::format("initial queries are {}x{}, config expects {}x{}",
                                      initial.size(), initial.dim(), cfg.num_queries,
                                      cfg.embed_dim));
  }
  if (static_cast<int>(weights.layers.size()) != cfg.layers) {
    throw ValidationError("decoder weights were built for a different layer count");
  }
  const std::vector<ScaleShape> shapes = shapes_of(features);
  const FeatureMap& finest_map = features[static_cast<std::size_t>(finest_scale(shapes))];
  if (weights.mask_out.weight.cols() != finest_map.channels()) {
    throw ValidationError(fmt::format("mask head emits {} channels, finest scale has {}",
                                      weights.mask_out.weight.cols(), finest_map.channels()));
  }
  const Matrix finest = pixel_matrix(finest_map);
  const std::vector<int> schedule = scale_schedule(shapes, cfg.layers);

  Matrix x = initial.embeddings;
  Predictions pred = predict(x, finest, weights);
  for (int l = 0; l < cfg.layers; ++l) {
    const LayerWeights& lw = weights.layers[static_cast<std::size_t>(l)];
    const FeatureMap& source = features[static_cast<std::size_t>(schedule[static_cast<std::size_t>(l)])];
    const BoolMatrix masks =
        attention_masks(pred.mask_logits, finest_map.height(), finest_map.width(),
                        source.height(), source.width(), cfg.mask_threshold);
    x = layer_norm(masked_cross_attention(x, source, masks, lw.cross).embeddings);
    if (cfg.self_attention) x = layer_norm(x + self_attention(x, lw.self));
    x = layer_norm(x + lw.ffn_out.apply(relu(lw.ffn_in.apply(x))));
    pred = predict(x, finest, weights);
  }

  QuerySet out;
  out.num_classes = cfg.num_classes;
  out.embeddings = x;
  out.class_logits = std::move(pred.class_logits);
  out.mask_logits = std::move(pred.mask_logits);
  out.mask_height = finest_map.height();
  out.mask_width = finest_map.width();
  out.centers = laq_head(x, weights.laq);
  return out;
}

QuerySet taq_select(const QuerySet& prev_out, const QuerySet& learned_init) {
  if (prev_out.size() != learned_init.size() || prev_out.dim() != learned_init.dim()) {
    throw ValidationError(fmt::format(
        "TAQ: previous frame has {}x{} queries, learned init has {}x{}", prev_out.size(),
        prev_out.dim(), learned_init.size(), learned_init.dim()));
  }
  if (prev_out.class_logits.rows() != prev_out.size()) {
    throw ValidationError("TAQ: previous frame queries carry no class logits");
  }
  QuerySet next = learned_init;
  const std::vector<bool> keep = prev_out.non_empty();
  for (int i = 0; i < prev_out.size(); ++i) {
    if (keep[static_cast<std::size_t>(i)]) next.embeddings.row(i) = prev_out.embeddings.row(i);
  }
  return next;
}

Matrix laq_head(const Matrix& queries, const LaqHead& head) {
  if (queries.cols() != head.first.weight.rows()) {
    throw ValidationError(fmt::format("LAQ head expects {}-dim queries, got {}",
                                      head.first.weight.rows(), queries.cols()));
  }
  const Matrix z3 = head.third.apply(relu(head.second.apply(relu(head.first.apply(queries)))));
  return z3.unaryExpr([](double v) { return sigmoid(v); });
}

LaqHeadGrads laq_head_backward(const Matrix& queries, const LaqHead& head,
                               const Matrix& upstream) {
  if (upstream.rows() != queries.rows() || upstream.cols() != 2) {
    throw ValidationError("LAQ head backward: upstream must be N x 2");
  }
  const Matrix z1 = head.first.apply(queries);
  const Matrix a1 = relu(z1);
  const Matrix z2 = head.second.apply(a1);
  const Matrix a2 = relu(z2);
  const Matrix y = laq_head(queries, head);

  const Matrix dz3 = upstream.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
  const Matrix dz2 = (dz3 * head.third.weight.transpose()).cwiseProduct(
      (z2.array() > 0.0).cast<double>().matrix());
  const Matrix dz1 = (dz2 * head.second.weight.transpose()).cwiseProduct(
      (z1.array() > 0.0).cast<double>().matrix());

  LaqHeadGrads g;
  g.params.third = {a2.transpose() * dz3, dz3.colwise().sum()};
  g.params.second = {a1.transpose() * dz2, dz2.colwise().sum()};
  g.params.first = {queries.transpose() * dz1, dz1.colwise().sum()};
  g.queries = dz1 * head.first.weight.transpose();
  return g;
}

LaqLoss laq_loss(const Matrix& pred_centers, const Matrix& gt_centers,
                 const std::vector<bool>& is_thing, const LaqConfig& cfg) {
  if (pred_centers.rows() != gt_centers.rows() || pred_centers.cols() != 2 ||
      gt_centers.cols() != 2 || is_thing.size() != static_cast<std::size_t>(pred_centers.rows())) {
    throw ValidationError("LAQ loss: predictions, targets and thing flags must align (N x 2)");
  }
  if (!(cfg.loss_weight >= 0.0)) throw ValidationError("LAQ loss weight must be >= 0");
  LaqLoss out{0.0, Matrix::Zero(pred_centers.rows(), 2)};
  const auto things = std::count(is_thing.begin(), is_thing.end(), true);
  if (things == 0) return out;
  const double scale = cfg.loss_weight / (2.0 * static_cast<double>(things));
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred_centers.rows(); ++i) {
    if (!is_thing[static_cast<std::size_t>(i)]) continue;
    for (Eigen::Index k = 0; k < 2; ++k) {
      const double d = pred_centers(i, k) - gt_centers(i, k);
      total += std::abs(d);
      out.grad(i, k) = scale * static_cast<double>((d > 0.0) - (d < 0.0));
    }
  }
  out.loss = scale * total;
  return out;
}

std::vector<int> assign_pixels(const QuerySet& queries) {
  const Matrix probs = queries.class_probabilities();
  const std::vector<int> cls = queries.predicted_classes();
  const auto pixels = queries.mask_logits.cols();
  std::vector<int> owner(static_cast<std::size_t>(pixels), -1);
  std::vector<double> best(static_cast<std::size_t>(pixels), -1.0);
  for (int i = 0; i < queries.size(); ++i) {
    const int c = cls[static_cast<std::size_t>(i)];
    if (c == queries.num_classes) continue;
    const double score = probs(i, c);
    for (Eigen::Index p = 0; p < pixels; ++p) {
      const double s = score * sigmoid(queries.mask_logits(i, p));
      if (s > best[static_cast<std::size_t>(p)]) {
        best[static_cast<std::size_t>(p)] = s;
        owner[static_cast<std::size_t>(p)] = i;
      }
    }
  }
  return owner;
}

}  // namespace pvkit::decoder
