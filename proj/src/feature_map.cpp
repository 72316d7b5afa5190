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

#include "pvkit/feature_map.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pvkit/error.hpp"

namespace pvkit {

FeatureMap::FeatureMap(int channels, int height, int width, int scale_index, double fill)
    : channels_(channels), height_(height), width_(width), scale_index_(scale_index) {
  if (channels < 1 || height < 1 || width < 1) {
    throw ValidationError(
        fmt::format("feature map dims must be >= 1, got {}x{}x{}", channels, height, width));
  }
  values_.assign(static_cast<std::size_t>(channels) * pixels(), fill);
}

FeatureMap::FeatureMap(int channels, int height, int width, std::vector<double> values,
                       int scale_index)
    : FeatureMap(channels, height, width, scale_index) {
  if (values.size() != values_.size()) {
    throw ValidationError(fmt::format("feature map {}x{}x{} needs {} values, got {}", channels,
                                      height, width, values_.size(), values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("feature map values must be finite");
  }
  values_ = std::move(values);
}

FeatureMap downsample2x(const FeatureMap& in) {
  const int h = (in.height() + 1) / 2;
  const int w = (in.width() + 1) / 2;
  FeatureMap out(in.channels(), h, w, in.scale_index() + 1);
  for (int c = 0; c < in.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double sum = 0.0;
        int n = 0;
        for (int yy = 2 * y; yy < std::min(2 * y + 2, in.height()); ++yy) {
          for (int xx = 2 * x; xx < std::min(2 * x + 2, in.width()); ++xx) {
            sum += in.at(c, yy, xx);
            ++n;
          }
        }
        out.at(c, y, x) = sum / n;
      }
    }
  }
  return out;
}

}  // namespace pvkit
