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
#include <optional>
#include <utility>
#include <vector>

namespace pvkit::depth {

/// Per-pixel metric depth on an H x W grid, row-major. A value of 0.0 marks
/// "no measurement"; every other value is finite and strictly positive.
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int width, int height, double fill = 0.0);
  DepthMap(int width, int height, std::vector<double> values);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }

  double& at(int row, int col) { return values_[index(row, col)]; }
  double at(int row, int col) const { return values_[index(row, col)]; }
  bool valid(int row, int col) const { return at(row, col) > 0.0; }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  std::size_t valid_count() const;
  // Smallest and largest valid value; nullopt when nothing is valid.
  std::optional<std::pair<double, double>> valid_range() const;
  // Index of the highest (smallest row index) row holding a valid pixel.
  std::optional<int> top_valid_row() const;

  friend bool operator==(const DepthMap&, const DepthMap&) = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

/// Raw 16-bit samples as read from a grayscale PNG.
struct RawImage16 {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> values;
};

struct CameraIntrinsics {
  double focal_x = 0.0;
  double focal_y = 0.0;
  double principal_x = 0.0;
  double principal_y = 0.0;
  double baseline = 0.0;  // meters; only needed for disparity conversion

  void validate(bool need_baseline) const;
};

struct LidarSimConfig {
  int beams = 64;
  double fov_min_deg = -24.8;
  double fov_max_deg = 2.0;
  double keep_ratio = 0.7;
  std::uint64_t seed = 0;

  void validate(int image_height) const;
};

struct CompletionConfig {
  int dilation_kernel = 5;   // diamond
  int close_kernel = 5;      // full
  int small_fill_kernel = 7;
  int large_fill_kernel = 31;
  int median_kernel = 5;
  int blur_kernel = 5;       // binomial (Gaussian) weights
  bool enable_blur = true;
  // Inversion cap: depth d is handled as (max_depth - d), so values at or
  // beyond the cap carry no information and are dropped on input.
  double max_depth = 100.0;

  void validate() const;
};

// Cityscapes convention: p == 0 invalid, else disparity (p - 1) / 256 and
// depth = baseline * focal_x / disparity. Throws if no pixel is valid.
DepthMap disparity_to_depth(const RawImage16& disparity, const CameraIntrinsics& intr);

// Inverse of disparity_to_depth up to quantization; used to synthesise
// disparity inputs. Depths whose disparity overflows 16 bits are clamped.
RawImage16 depth_to_disparity(const DepthMap& depth, const CameraIntrinsics& intr);

// Vertical angle (radians) of the ray through the centre of image row `row`.
double row_angle(const CameraIntrinsics& intr, double row);

// Rows sampled by the simulated sensor, ascending. Each of the uniformly
// spaced beam angles inside the FOV picks the in-FOV image row whose angle is
// nearest (ties go to the lower row index); beams that leave the image's
// angular extent hit nothing.
std::vector<int> lidar_rows(int height, const CameraIntrinsics& intr, const LidarSimConfig& cfg);

// Keeps only the rows chosen by lidar_rows; values are copied unchanged.
DepthMap simulate_lidar(const DepthMap& dense, const CameraIntrinsics& intr,
                        const LidarSimConfig& cfg);

// Keeps each valid pixel independently with probability keep_ratio. Pixels
// are visited in row-major order and each valid one consumes one SplitMix64
// draw u; it is kept iff u < keep_ratio.
DepthMap ray_drop(const DepthMap& sparse, double keep_ratio, std::uint64_t seed);

/// Classical morphological depth completion.
///
/// The stages run on inverted depth (max_depth - d) so that the nearest
/// return wins every dilation. The implementation works directly on depth
/// with the comparison order reversed, which selects exactly the same values
/// without the round-off of subtracting twice:
///
///   1. dilation with a diamond kernel
///   2. closing (dilate, then erode) with a full kernel
///   3. empty pixels take a full-kernel dilation (small holes)
///   4. the topmost value of each column is extended up to the top valid row
///   5. empty pixels at or below the top valid row take a large-kernel
///      dilation, repeated until that region is dense
///   6. median over the valid pixels of each window, valid pixels only
///   7. normalised binomial blur over valid pixels, valid pixels only
///
/// Out-of-image neighbours are ignored by every stage.
DepthMap complete_depth(const DepthMap& sparse, const CompletionConfig& cfg = {});

// Individual stages, exposed for testing. All operate on depth with
// 0 = invalid and treat smaller depth as "larger" inverted value.
namespace stages {
DepthMap dilate_nearest(const DepthMap& in, int kernel, bool diamond);
DepthMap erode_nearest(const DepthMap& in, int kernel);
DepthMap fill_empty(const DepthMap& in, int kernel, int first_row);
DepthMap extend_columns_up(const DepthMap& in);
DepthMap fill_large(const DepthMap& in, int kernel);
DepthMap median_valid(const DepthMap& in, int kernel);
DepthMap blur_valid(const DepthMap& in, int kernel);
}  // namespace stages

}  // namespace pvkit::depth
