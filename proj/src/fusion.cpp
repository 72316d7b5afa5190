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

#include "pvkit/fusion.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pvkit/error.hpp"
#include "pvkit/rng.hpp"

namespace pvkit::fusion {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_pair(const FeatureMap& image, const FeatureMap& depth, const FusionParams& p) {
  p.validate();
  if (image.height() != depth.height() || image.width() != depth.width()) {
    throw ValidationError(fmt::format(
        "fusion: image features are {}x{} but depth features are {}x{} (H x W)", image.height(),
        image.width(), depth.height(), depth.width()));
  }
  if (image.channels() != p.image_channels) {
    throw ValidationError(fmt::format("fusion: image features have {} channels, params expect {}",
                                      image.channels(), p.image_channels));
  }
  if (depth.channels() != p.depth_channels) {
    throw ValidationError(fmt::format("fusion: depth features have {} channels, params expect {}",
                                      depth.channels(), p.depth_channels));
  }
}

// Gate pre-activation W f + b for every depth channel at pixel px.
void gate_logits(const FeatureMap& image, const FusionParams& p, std::size_t px,
                 std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(p.depth_channels), 0.0);
  for (int c = 0; c < p.depth_channels; ++c) {
    double g = p.bias[static_cast<std::size_t>(c)];
    for (int k = 0; k < p.image_channels; ++k) g += p.w(c, k) * image.at(k, px);
    out[static_cast<std::size_t>(c)] = g;
  }
}

}  // namespace

FusionParams FusionParams::identity_gate(int image_channels, int depth_channels,
                                         double gamma_init) {
  FusionParams p;
  p.image_channels = image_channels;
  p.depth_channels = depth_channels;
  p.weights.assign(static_cast<std::size_t>(image_channels) * depth_channels, 0.0);
  p.bias.assign(static_cast<std::size_t>(depth_channels), 0.0);
  p.gamma.assign(static_cast<std::size_t>(depth_channels), gamma_init);
  p.validate();
  return p;
}

FusionParams FusionParams::random(int image_channels, int depth_channels, std::uint64_t seed,
                                  double gamma_init) {
  FusionParams p = identity_gate(image_channels, depth_channels, gamma_init);
  SplitMix64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(image_channels));
  for (double& v : p.weights) v = rng.uniform(-bound, bound);
  for (double& v : p.bias) v = rng.uniform(-bound, bound);
  return p;
}

void FusionParams::validate() const {
  if (image_channels < 1 || depth_channels < 1) {
    throw ValidationError("fusion params: channel counts must be >= 1");
  }
  if (weights.size() != static_cast<std::size_t>(image_channels) * depth_channels) {
    throw ValidationError(fmt::format("fusion params: gate weights need {}x{} entries, got {}",
                                      depth_channels, image_channels, weights.size()));
  }
  if (bias.size() != static_cast<std::size_t>(depth_channels) ||
      gamma.size() != static_cast<std::size_t>(depth_channels)) {
    throw ValidationError(fmt::format(
        "fusion params: bias and gamma need {} entries, got {} and {}", depth_channels,
        bias.size(), gamma.size()));
  }
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(weights) || !finite(bias) || !finite(gamma)) {
    throw ValidationError("fusion params must be finite");
  }
}

FeatureMap fuse_features(const FeatureMap& image, const FeatureMap& depth, const FusionParams& p) {
  check_pair(image, depth, p);
  FeatureMap out = image;
  const int shared = std::min(p.image_channels, p.depth_channels);
  std::vector<double> g;
  for (std::size_t px = 0; px < image.pixels(); ++px) {
    gate_logits(image, p, px, g);
    for (int c = 0; c < shared; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      out.at(c, px) += sigmoid(g[cu]) * (p.gamma[cu] * depth.at(c, px));
    }
  }
  return out;
}

FusionGrads fuse_backward(const FeatureMap& image, const FeatureMap& depth, const FusionParams& p,
                          const FeatureMap& upstream) {
  check_pair(image, depth, p);
  if (!upstream.same_shape(image)) {
    throw ValidationError(fmt::format("fusion backward: upstream is {}x{}x{}, output is {}x{}x{}",
                                      upstream.channels(), upstream.height(), upstream.width(),
                                      image.channels(), image.height(), image.width()));
  }
  FusionGrads grads{upstream,
                    FeatureMap(depth.channels(), depth.height(), depth.width(),
                               depth.scale_index()),
                    std::vector<double>(p.weights.size(), 0.0),
                    std::vector<double>(p.bias.size(), 0.0),
                    std::vector<double>(p.gamma.size(), 0.0)};

  const int shared = std::min(p.image_channels, p.depth_channels);
  std::vector<double> g;
  for (std::size_t px = 0; px < image.pixels(); ++px) {
    gate_logits(image, p, px, g);
    for (int c = 0; c < shared; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      const double up = upstream.at(c, px);
      if (up == 0.0) continue;
      const double s = sigmoid(g[cu]);
      const double fd = depth.at(c, px);
      grads.depth.at(c, px) = up * s * p.gamma[cu];
      grads.gamma[cu] += up * s * fd;
      // Back through the sigmoid into the 1x1 gate convolution.
      const double dg = up * p.gamma[cu] * fd * s * (1.0 - s);
      grads.bias[cu] += dg;
      for (int k = 0; k < p.image_channels; ++k) {
        grads.weights[cu * static_cast<std::size_t>(p.image_channels) + k] += dg * image.at(k, px);
        grads.image.at(k, px) += dg * p.w(c, k);
      }
    }
  }
  return grads;
}

FeatureMap fuse_sum(const FeatureMap& image, const FeatureMap& depth) {
  if (!image.same_shape(depth)) {
    throw ValidationError(fmt::format("sum fusion: shapes {}x{}x{} and {}x{}x{} differ",
                                      image.channels(), image.height(), image.width(),
                                      depth.channels(), depth.height(), depth.width()));
  }
  FeatureMap out = image;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] += depth.values()[i];
  return out;
}

std::vector<FeatureMap> multi_scale_fuse(const std::vector<FeatureMap>& image,
                                         const std::vector<FeatureMap>& depth,
                                         const std::vector<FusionParams>& params, Mode mode) {
  if (image.size() != depth.size() || (mode == Mode::kDynamic && image.size() != params.size())) {
    throw ValidationError(fmt::format(
        "multi-scale fusion: {} image scales, {} depth scales, {} parameter sets", image.size(),
        depth.size(), params.size()));
  }
  std::vector<FeatureMap> out;
  out.reserve(image.size());
  for (std::size_t l = 0; l < image.size(); ++l) {
    try {
      out.push_back(mode == Mode::kSum ? fuse_sum(image[l], depth[l])
                                       : fuse_features(image[l], depth[l], params[l]));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("scale {}: {}", l + 1, e.what()));
    }
  }
  return out;
}

}  // namespace pvkit::fusion
