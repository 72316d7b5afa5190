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
#include <filesystem>
#include <optional>
#include <vector>

#include "pvkit/depth.hpp"
#include "pvkit/metrics.hpp"
#include "pvkit/report.hpp"
#include "pvkit/tracking.hpp"

namespace pvkit::demo {

/// Synthetic 64 x 128 street scene, 4 frames: sky and road (stuff), two cars
/// and a pedestrian (things) moving across the image.
struct SyntheticSequence {
  depth::CameraIntrinsics intrinsics;
  metrics::CategoryTable categories;
  std::vector<depth::DepthMap> depth;
  std::vector<metrics::PanopticMap> panoptic;
};

SyntheticSequence make_sequence(int frames = 4);

struct DemoOptions {
  std::uint64_t seed = 42;
  int threads = 1;
  double alpha_position = 0.0;
  tracking::MatchScope scope = tracking::MatchScope::kAllSlots;
  bool taq = true;
  std::optional<std::filesystem::path> output_dir;
};

// Runs disparity -> depth -> LiDAR simulation -> completion -> fusion ->
// decoding (with TAQ) -> tracking -> evaluation and returns the report.
report::Json run_demo(const DemoOptions& options);

}  // namespace pvkit::demo
