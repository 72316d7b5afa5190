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

#include "pvkit/feature_map.hpp"

namespace pvkit::fusion {

/// Parameters of the depth gate at one scale.
///
///   out = F_I + sigmoid(W F_I + b) * (gamma * F_D)
///
/// evaluated independently at every spatial location. W is C_D x C_I
/// (row-major), b and gamma have C_D entries.
///
/// When C_D != C_I the gated depth term is aligned to the C_I output
/// channels by truncation (C_D > C_I) or zero padding (C_D < C_I): output
/// channel c receives the depth term of channel c if it exists.
struct FusionParams {
  int image_channels = 0;
  int depth_channels = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  std::vector<double> gamma;

  // W = 0, b = 0, gamma = gamma_init.
  static FusionParams identity_gate(int image_channels, int depth_channels,
                                    double gamma_init = 1.0);
  // Uniform(-1/sqrt(C_I), 1/sqrt(C_I)) weights and bias, gamma = gamma_init.
  static FusionParams random(int image_channels, int depth_channels, std::uint64_t seed,
                             double gamma_init = 1.0);

  double w(int out_c, int in_c) const {
    return weights[static_cast<std::size_t>(out_c) * image_channels + in_c];
  }
  void validate() const;
};

struct FusionGrads {
  FeatureMap image;   // dL/dF_I
  FeatureMap depth;   // dL/dF_D
  std::vector<double> weights;
  std::vector<double> bias;
  std::vector<double> gamma;
};

enum class Mode { kDynamic, kSum };

FeatureMap fuse_features(const FeatureMap& image, const FeatureMap& depth, const FusionParams& p);

// Gradients of sum(upstream * fuse_features(image, depth, p)).
FusionGrads fuse_backward(const FeatureMap& image, const FeatureMap& depth, const FusionParams& p,
                          const FeatureMap& upstream);

// Plain summation baseline; shapes must match exactly.
FeatureMap fuse_sum(const FeatureMap& image, const FeatureMap& depth);

// Applies the fusion per scale; lists are aligned by position.
std::vector<FeatureMap> multi_scale_fuse(const std::vector<FeatureMap>& image,
                                         const std::vector<FeatureMap>& depth,
                                         const std::vector<FusionParams>& params,
                                         Mode mode = Mode::kDynamic);

}  // namespace pvkit::fusion
