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

#include <gtest/gtest.h>

#include <cmath>

#include "oracles/oracles.hpp"
#include "pvkit/decoder.hpp"
#include "pvkit/error.hpp"
#include "pvkit/rng.hpp"

using pvkit::FeatureMap;
using namespace pvkit::decoder;

namespace {

FeatureMap random_map(int c, int h, int w, pvkit::SplitMix64& rng) {
  FeatureMap m(c, h, w);
  for (double& v : m.values()) v = rng.uniform(-1.0, 1.0);
  return m;
}

Matrix random_matrix(int rows, int cols, pvkit::SplitMix64& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-scale, scale);
  }
  return m;
}

AttentionWeights random_attention(int c, int cs, pvkit::SplitMix64& rng) {
  return {random_matrix(c, c, rng, 0.5), random_matrix(cs, c, rng, 0.5),
          random_matrix(cs, c, rng, 0.5), random_matrix(c, c, rng, 0.5)};
}

std::vector<FeatureMap> pyramid(int channels, pvkit::SplitMix64& rng) {
  return {random_map(channels, 8, 8, rng), random_map(channels, 4, 4, rng),
          random_map(channels, 2, 2, rng)};
}

// N slots of width `dim`; slot i is non-empty iff bit i of `pattern` is set.
QuerySet with_pattern(int n, int dim, int classes, unsigned pattern, pvkit::SplitMix64& rng) {
  QuerySet q;
  q.num_classes = classes;
  q.embeddings = random_matrix(n, dim, rng);
  q.class_logits = Matrix::Zero(n, classes + 1);
  for (int i = 0; i < n; ++i) {
    const bool on = (pattern >> i) & 1u;
    q.class_logits(i, on ? static_cast<int>(rng.below(classes)) : classes) = 3.0;
  }
  q.centers = Matrix::Constant(n, 2, 0.5);
  q.mask_height = 2;
  q.mask_width = 2;
  q.mask_logits = Matrix::Zero(n, 4);
  return q;
}

void expect_bitwise(const Matrix& a, const Matrix& b) {
  ASSERT_EQ(a.rows(), b.rows());
  ASSERT_EQ(a.cols(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) ASSERT_EQ(a(i, j), b(i, j)) << i << "," << j;
  }
}

double laq_sum(const Matrix& x, const LaqHead& h, const Matrix& up) {
  return (laq_head(x, h).array() * up.array()).sum();
}

}  // namespace

TEST(CrossAttention, AllTrueMaskEqualsUnmasked) {
  pvkit::SplitMix64 rng(1);
  const Matrix x = random_matrix(5, 6, rng);
  const FeatureMap f = random_map(4, 3, 4, rng);
  const AttentionWeights w = random_attention(6, 4, rng);
  const auto all = masked_cross_attention(x, f, BoolMatrix::Constant(5, 12, true), w);
  const auto none = masked_cross_attention(x, f, BoolMatrix::Constant(5, 12, false), w);
  expect_bitwise(all.embeddings, none.embeddings);
}

TEST(CrossAttention, MatchesScalarOracleWithFallbackRow) {
  pvkit::SplitMix64 rng(2);
  const Matrix x = random_matrix(4, 6, rng);
  const FeatureMap f = random_map(3, 4, 4, rng);
  const AttentionWeights w = random_attention(6, 3, rng);
  BoolMatrix mask(4, 16);
  for (int i = 0; i < 4; ++i) {
    for (int p = 0; p < 16; ++p) mask(i, p) = rng.uniform() < 0.4;
  }
  for (int p = 0; p < 16; ++p) mask(2, p) = false;
  const auto got = masked_cross_attention(x, f, mask, w);
  const Matrix expected = oracle::attention(x, f, mask, w);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 6; ++j) EXPECT_NEAR(got.embeddings(i, j), expected(i, j), 1e-12);
  }
  // Row 2 equals its dense counterpart.
  const Matrix dense = oracle::attention(x, f, BoolMatrix::Constant(4, 16, true), w);
  for (int j = 0; j < 6; ++j) EXPECT_NEAR(got.embeddings(2, j), dense(2, j), 1e-12);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(got.attention.row(i).sum(), 1.0, 1e-12);
    if (i == 2) continue;
    for (int p = 0; p < 16; ++p) {
      if (!mask(i, p)) EXPECT_EQ(got.attention(i, p), 0.0);
    }
  }
}

TEST(CrossAttention, RejectsShapeMismatch) {
  pvkit::SplitMix64 rng(3);
  const Matrix x = random_matrix(2, 4, rng);
  const FeatureMap f = random_map(3, 2, 2, rng);
  EXPECT_THROW(masked_cross_attention(x, f, BoolMatrix::Constant(2, 5, true),
                                      random_attention(4, 3, rng)),
               pvkit::ValidationError);
  EXPECT_THROW(masked_cross_attention(x, f, BoolMatrix::Constant(2, 4, true),
                                      random_attention(4, 2, rng)),
               pvkit::ValidationError);
}

TEST(Decoder, ConfigValidation) {
  DecoderConfig cfg;
  cfg.layers = 0;
  EXPECT_THROW(cfg.validate(), pvkit::ValidationError);
  pvkit::SplitMix64 rng(4);
  DecoderConfig ok;
  const auto w = DecoderWeights::init(ok, shapes_of(pyramid(16, rng)));
  EXPECT_THROW(run_decoder(initial_queries(ok, w), {}, ok, w), pvkit::ValidationError);
}

TEST(Decoder, SingleLayerShapes) {
  pvkit::SplitMix64 rng(5);
  const auto feats = pyramid(16, rng);
  DecoderConfig cfg;
  cfg.layers = 1;
  const auto w = DecoderWeights::init(cfg, shapes_of(feats));
  const QuerySet out = run_decoder(initial_queries(cfg, w), feats, cfg, w);
  EXPECT_EQ(out.size(), cfg.num_queries);
  EXPECT_EQ(out.dim(), cfg.embed_dim);
  EXPECT_EQ(out.class_logits.cols(), cfg.num_classes + 1);
  EXPECT_EQ(out.mask_height, 8);
  EXPECT_EQ(out.mask_width, 8);
  EXPECT_EQ(out.mask_logits.cols(), 64);
  EXPECT_TRUE(out.mask_logits.allFinite());
  EXPECT_TRUE(out.class_logits.allFinite());
  for (int i = 0; i < out.size(); ++i) {
    for (int j = 0; j < 2; ++j) {
      EXPECT_GE(out.centers(i, j), 0.0);
      EXPECT_LE(out.centers(i, j), 1.0);
    }
  }
  const Matrix probs = out.class_probabilities();
  for (int i = 0; i < probs.rows(); ++i) EXPECT_NEAR(probs.row(i).sum(), 1.0, 1e-12);
}

TEST(Decoder, Deterministic) {
  pvkit::SplitMix64 rng(6);
  const auto feats = pyramid(16, rng);
  DecoderConfig cfg;
  cfg.seed = 17;
  const auto w1 = DecoderWeights::init(cfg, shapes_of(feats));
  const auto w2 = DecoderWeights::init(cfg, shapes_of(feats));
  const QuerySet a = run_decoder(initial_queries(cfg, w1), feats, cfg, w1);
  const QuerySet b = run_decoder(initial_queries(cfg, w2), feats, cfg, w2);
  expect_bitwise(a.embeddings, b.embeddings);
  expect_bitwise(a.class_logits, b.class_logits);
  expect_bitwise(a.mask_logits, b.mask_logits);
  expect_bitwise(a.centers, b.centers);
}

TEST(Decoder, RowsAreIndependentWithoutSelfAttention) {
  pvkit::SplitMix64 rng(7);
  const auto feats = pyramid(16, rng);
  DecoderConfig cfg;
  cfg.self_attention = false;
  const auto w = DecoderWeights::init(cfg, shapes_of(feats));
  const QuerySet init = initial_queries(cfg, w);
  const QuerySet base = run_decoder(init, feats, cfg, w);

  QuerySet shuffled = init;
  // Keep row 0, reverse the others.
  for (int i = 1; i < init.size(); ++i) shuffled.embeddings.row(i) = init.embeddings.row(init.size() - i);
  const QuerySet out = run_decoder(shuffled, feats, cfg, w);
  for (int p = 0; p < base.mask_logits.cols(); ++p) EXPECT_EQ(out.mask_logits(0, p), base.mask_logits(0, p));
  for (int i = 1; i < init.size(); ++i) {
    for (int p = 0; p < base.mask_logits.cols(); ++p) {
      EXPECT_EQ(out.mask_logits(i, p), base.mask_logits(init.size() - i, p));
    }
  }

  // With self-attention on, the other rows leak in.
  cfg.self_attention = true;
  const auto ws = DecoderWeights::init(cfg, shapes_of(feats));
  const QuerySet on_a = run_decoder(init, feats, cfg, ws);
  const QuerySet on_b = run_decoder(shuffled, feats, cfg, ws);
  EXPECT_NE((on_a.mask_logits.row(0) - on_b.mask_logits.row(0)).norm(), 0.0);
}

TEST(Decoder, ScaleScheduleCyclesCoarseToFine) {
  const std::vector<ScaleShape> scales = {{4, 8, 8}, {4, 2, 2}, {4, 4, 4}};
  EXPECT_EQ(scale_schedule(scales, 5), (std::vector<int>{1, 2, 0, 1, 2}));
  EXPECT_EQ(finest_scale(scales), 0);
}

TEST(Taq, EveryPatternAtFourSlots) {
  pvkit::SplitMix64 rng(8);
  for (unsigned pattern = 0; pattern < 16; ++pattern) {
    const QuerySet prev = with_pattern(4, 5, 3, pattern, rng);
    const QuerySet learned = with_pattern(4, 5, 3, 0, rng);
    const QuerySet out = taq_select(prev, learned);
    ASSERT_EQ(out.size(), 4);
    for (int i = 0; i < 4; ++i) {
      const Matrix& source = ((pattern >> i) & 1u) ? prev.embeddings : learned.embeddings;
      for (int j = 0; j < 5; ++j) EXPECT_EQ(out.embeddings(i, j), source(i, j));
    }
    const QuerySet again = taq_select(prev, out);
    expect_bitwise(again.embeddings, out.embeddings);
  }
}

TEST(Taq, AllEmptyAndAllFull) {
  pvkit::SplitMix64 rng(9);
  const QuerySet learned = with_pattern(6, 4, 2, 0, rng);
  expect_bitwise(taq_select(with_pattern(6, 4, 2, 0, rng), learned).embeddings, learned.embeddings);
  const QuerySet full = with_pattern(6, 4, 2, 0x3f, rng);
  expect_bitwise(taq_select(full, learned).embeddings, full.embeddings);
  EXPECT_THROW(taq_select(with_pattern(5, 4, 2, 0, rng), learned), pvkit::ValidationError);
}

TEST(Taq, NonEmptyTiesGoToLowerClass) {
  QuerySet q;
  q.num_classes = 2;
  q.embeddings = Matrix::Zero(2, 1);
  q.class_logits = Matrix(2, 3);
  q.class_logits << 1.0, 0.0, 1.0,  // tie with no-object: class 0 wins
      0.0, 0.0, 0.5;
  EXPECT_EQ(q.non_empty(), (std::vector<bool>{true, false}));
  EXPECT_EQ(q.predicted_classes(), (std::vector<int>{0, 2}));
}

TEST(Laq, ZeroWeightsGiveCentre) {
  const Matrix c = laq_head(Matrix::Ones(3, 6), LaqHead::zeros(6, 6));
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(c(i, 0), 0.5);
    EXPECT_EQ(c(i, 1), 0.5);
  }
}

TEST(Laq, HeadMatchesScalarOracleAndStaysInRange) {
  pvkit::SplitMix64 rng(10);
  const LaqHead h = LaqHead::random(6, 5, 11);
  const Matrix x = random_matrix(7, 6, rng, 3.0);
  const Matrix got = laq_head(x, h);
  const Matrix expected = oracle::laq_head(x, h);
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 2; ++j) {
      EXPECT_NEAR(got(i, j), expected(i, j), 1e-12);
      EXPECT_GE(got(i, j), 0.0);
      EXPECT_LE(got(i, j), 1.0);
    }
  }
}

TEST(Laq, HeadBackwardMatchesFiniteDifferences) {
  pvkit::SplitMix64 rng(12);
  LaqHead h = LaqHead::random(4, 5, 13);
  Matrix x = random_matrix(3, 4, rng);
  const Matrix up = random_matrix(3, 2, rng);
  const LaqHeadGrads g = laq_head_backward(x, h, up);
  const auto f = [&] { return laq_sum(x, h, up); };

  const auto check = [&](Matrix& values, const Matrix& grads, const char* what) {
    ASSERT_EQ(values.rows(), grads.rows());
    ASSERT_EQ(values.cols(), grads.cols());
    for (int i = 0; i < values.rows(); ++i) {
      for (int j = 0; j < values.cols(); ++j) {
        const double numeric = oracle::central_difference(f, values(i, j), 1e-6);
        EXPECT_LT(oracle::relative_error(grads(i, j), numeric), 1e-6)
            << what << "(" << i << "," << j << ") " << grads(i, j) << " vs " << numeric;
      }
    }
  };
  const auto check_vec = [&](Vector& values, const Vector& grads, const char* what) {
    ASSERT_EQ(values.size(), grads.size());
    for (int j = 0; j < values.size(); ++j) {
      const double numeric = oracle::central_difference(f, values(j), 1e-6);
      EXPECT_LT(oracle::relative_error(grads(j), numeric), 1e-6) << what << "[" << j << "]";
    }
  };
  check(x, g.queries, "queries");
  check(h.first.weight, g.params.first.weight, "first.weight");
  check(h.second.weight, g.params.second.weight, "second.weight");
  check(h.third.weight, g.params.third.weight, "third.weight");
  check_vec(h.first.bias, g.params.first.bias, "first.bias");
  check_vec(h.second.bias, g.params.second.bias, "second.bias");
  check_vec(h.third.bias, g.params.third.bias, "third.bias");
}

TEST(Laq, LossWorkedExample) {
  Matrix pred(1, 2), gt(1, 2);
  pred << 0.2, 0.4;
  gt << 0.5, 0.8;
  const LaqLoss l = laq_loss(pred, gt, {true}, {});
  EXPECT_NEAR(l.loss, 1.75, 1e-12);
  EXPECT_NEAR(l.grad(0, 0), -2.5, 1e-12);
  EXPECT_NEAR(l.grad(0, 1), -2.5, 1e-12);
}

TEST(Laq, LossZeroCasesAndStuffOnly) {
  pvkit::SplitMix64 rng(14);
  const Matrix pred = random_matrix(4, 2, rng);
  const LaqLoss same = laq_loss(pred, pred, {true, true, false, true}, {});
  EXPECT_EQ(same.loss, 0.0);
  EXPECT_EQ(same.grad.cwiseAbs().maxCoeff(), 0.0);
  const LaqLoss stuff = laq_loss(pred, random_matrix(4, 2, rng), {false, false, false, false}, {});
  EXPECT_EQ(stuff.loss, 0.0);
  EXPECT_EQ(stuff.grad.cwiseAbs().maxCoeff(), 0.0);
  LaqConfig bad;
  bad.loss_weight = -1.0;
  EXPECT_THROW(laq_loss(pred, pred, {true, true, true, true}, bad), pvkit::ValidationError);
}

TEST(Laq, LossGradientMatchesFiniteDifferencesAwayFromKinks) {
  pvkit::SplitMix64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix pred(5, 2);
    const Matrix gt = random_matrix(5, 2, rng);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 2; ++j) {
        // Keep every coordinate at least 1e-3 from its kink.
        const double off = rng.uniform(1e-3, 0.5);
        pred(i, j) = gt(i, j) + (rng.uniform() < 0.5 ? -off : off);
      }
    }
    std::vector<bool> thing;
    for (int i = 0; i < 5; ++i) thing.push_back(rng.uniform() < 0.6);
    const LaqLoss l = laq_loss(pred, gt, thing, {});
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 2; ++j) {
        const double numeric = oracle::central_difference(
            [&] { return laq_loss(pred, gt, thing, {}).loss; }, pred(i, j), 1e-6);
        EXPECT_LT(oracle::relative_error(l.grad(i, j), numeric), 1e-6);
      }
    }
  }
}

TEST(AssignPixels, PicksBestNonEmptySlot) {
  QuerySet q;
  q.num_classes = 1;
  q.embeddings = Matrix::Zero(3, 1);
  q.class_logits = Matrix(3, 2);
  q.class_logits << 2.0, 0.0,  // non-empty
      2.0, 0.0,                // non-empty
      0.0, 5.0;                // empty
  q.mask_height = 1;
  q.mask_width = 3;
  q.mask_logits = Matrix(3, 3);
  q.mask_logits << 4.0, -4.0, 0.0,  //
      -4.0, 4.0, 0.0,               //
      9.0, 9.0, 9.0;
  EXPECT_EQ(assign_pixels(q), (std::vector<int>{0, 1, 0}));

  q.class_logits.col(1).setConstant(10.0);
  EXPECT_EQ(assign_pixels(q), (std::vector<int>{-1, -1, -1}));
}
