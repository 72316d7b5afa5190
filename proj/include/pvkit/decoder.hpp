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

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "pvkit/feature_map.hpp"

namespace pvkit::decoder {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::RowVectorXd;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// N object queries with their predictions. Row i of every matrix belongs to
/// query slot i. The last class column is the no-object class.
struct QuerySet {
  int num_classes = 0;     // K, excluding no-object
  Matrix embeddings;       // N x C_x
  Matrix class_logits;     // N x (K + 1)
  Matrix centers;          // N x 2, normalised (x, y)
  Matrix mask_logits;      // N x (mask_height * mask_width)
  int mask_height = 0;
  int mask_width = 0;

  int size() const { return static_cast<int>(embeddings.rows()); }
  int dim() const { return static_cast<int>(embeddings.cols()); }

  // Softmax over each class_logits row.
  Matrix class_probabilities() const;
  // argmax(class_logits_i) != no-object; ties go to the lower class index.
  std::vector<bool> non_empty() const;
  // Argmax class per slot (K means no-object).
  std::vector<int> predicted_classes() const;
};

struct DecoderConfig {
  int layers = 3;
  int num_queries = 8;
  int embed_dim = 16;
  int num_classes = 4;
  double mask_threshold = 0.5;
  bool self_attention = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LaqConfig {
  int hidden_dim = 0;  // 0 selects embed_dim
  double loss_weight = 5.0;
};

// Row-vector convention everywhere: y = x * W + b with W stored in x out.
struct Linear {
  Matrix weight;
  Vector bias;

  Matrix apply(const Matrix& x) const;
  static Linear random(int in, int out, std::uint64_t seed);
  static Linear zeros(int in, int out);
};

struct AttentionWeights {
  Matrix query;  // C x C
  Matrix key;    // C_src x C
  Matrix value;  // C_src x C
  Matrix out;    // C x C
};

struct LayerWeights {
  AttentionWeights cross;
  AttentionWeights self;
  Linear ffn_in;
  Linear ffn_out;
};

/// Location head: three affine layers, ReLU between them, sigmoid output.
struct LaqHead {
  Linear first;
  Linear second;
  Linear third;

  static LaqHead random(int embed_dim, int hidden_dim, std::uint64_t seed);
  static LaqHead zeros(int embed_dim, int hidden_dim);
};

struct LaqHeadGrads {
  LaqHead params;   // same layout as the head, holding gradients
  Matrix queries;   // dL/dX, N x C_x
};

struct ScaleShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
};

std::vector<ScaleShape> shapes_of(const std::vector<FeatureMap>& features);

struct DecoderWeights {
  Matrix query_init;  // learned initial queries, N x C_x
  std::vector<LayerWeights> layers;
  Linear class_head;
  Linear mask_hidden;
  Linear mask_out;
  LaqHead laq;

  // Deterministic in (cfg, scales, laq). `scales` lists the feature
  // pyramid in the order it will be passed to run_decoder.
  static DecoderWeights init(const DecoderConfig& cfg, const std::vector<ScaleShape>& scales,
                             const LaqConfig& laq = {});
};

struct CrossAttentionResult {
  Matrix embeddings;  // X + softmax(QK^T / sqrt(C)) V W_o
  Matrix attention;   // N x H*W, rows sum to 1, zero where masked out
};

// Single-head attention of the queries over the pixels of `features`. Query i
// only sees locations where attn_masks(i, p) is true; a row with no true entry
// falls back to attending everywhere.
CrossAttentionResult masked_cross_attention(const Matrix& queries, const FeatureMap& features,
                                            const BoolMatrix& attn_masks,
                                            const AttentionWeights& weights);

// Learned initial queries as a QuerySet (embeddings only).
QuerySet initial_queries(const DecoderConfig& cfg, const DecoderWeights& weights);

// Order in which layers visit the scales: coarse to fine by pixel count, ties
// in list order, cycling when there are more layers than scales.
std::vector<int> scale_schedule(const std::vector<ScaleShape>& scales, int layers);
// Index of the scale with the most pixels (first on ties).
int finest_scale(const std::vector<ScaleShape>& scales);

// Full forward pass. The mask head runs on the finest scale.
QuerySet run_decoder(const QuerySet& initial, const std::vector<FeatureMap>& features,
                     const DecoderConfig& cfg, const DecoderWeights& weights);

// Initial queries for the next frame: slot i reuses prev_out's embedding when
// prev_out's slot i is non-empty, else the learned embedding.
QuerySet taq_select(const QuerySet& prev_out, const QuerySet& learned_init);

Matrix laq_head(const Matrix& queries, const LaqHead& head);
LaqHeadGrads laq_head_backward(const Matrix& queries, const LaqHead& head,
                               const Matrix& upstream);

struct LaqLoss {
  double loss = 0.0;
  Matrix grad;  // dloss/dpred, N x 2
};

// weight * mean |pred - gt| over thing rows and both coordinates.
LaqLoss laq_loss(const Matrix& pred_centers, const Matrix& gt_centers,
                 const std::vector<bool>& is_thing, const LaqConfig& cfg);

// Panoptic inference: every pixel goes to the non-empty slot maximising
// p(class) * sigmoid(mask logit); -1 where no slot is non-empty.
std::vector<int> assign_pixels(const QuerySet& queries);

}  // namespace pvkit::decoder
