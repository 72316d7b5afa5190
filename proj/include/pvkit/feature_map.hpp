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

#include <cstddef>
#include <vector>

namespace pvkit {

/// One level of a multi-scale feature pyramid: C x H x W, channel-major.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int channels, int height, int width, int scale_index = 1, double fill = 0.0);
  FeatureMap(int channels, int height, int width, std::vector<double> values, int scale_index = 1);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int scale_index() const { return scale_index_; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return values_.size(); }

  double& at(int c, int y, int x) { return values_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return values_[index(c, y, x)]; }
  // Flat spatial index p = y * W + x.
  double& at(int c, std::size_t p) { return values_[static_cast<std::size_t>(c) * pixels() + p]; }
  double at(int c, std::size_t p) const {
    return values_[static_cast<std::size_t>(c) * pixels() + p];
  }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  bool same_shape(const FeatureMap& o) const {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + static_cast<std::size_t>(y)) * width_ +
           static_cast<std::size_t>(x);
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  int scale_index_ = 1;
  std::vector<double> values_;
};

// 2x2 average pooling (odd trailing rows/cols are averaged over what exists).
FeatureMap downsample2x(const FeatureMap& in);

}  // namespace pvkit
