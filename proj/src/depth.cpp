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

#include "pvkit/depth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "pvkit/error.hpp"
#include "pvkit/rng.hpp"

namespace pvkit::depth {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void check_dims(int width, int height) {
  if (width < 1 || height < 1) {
    throw ValidationError(fmt::format("depth map dims must be >= 1, got {}x{}", width, height));
  }
}

void check_kernel(const char* name, int k) {
  if (k < 3 || k % 2 == 0) {
    throw ValidationError(fmt::format("{} must be odd and >= 3, got {}", name, k));
  }
}

// Nearer (smaller) depth is the larger value in inverted space.
bool nearer(double a, double b) { return a < b; }

}  // namespace

DepthMap::DepthMap(int width, int height, double fill) : width_(width), height_(height) {
  check_dims(width, height);
  values_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

DepthMap::DepthMap(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
  check_dims(width, height);
  if (values_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw ValidationError(fmt::format("depth map {}x{} needs {} values, got {}", width, height,
                                      static_cast<std::size_t>(width) * height, values_.size()));
  }
  for (double& v : values_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ValidationError("depth values must be finite and non-negative");
    }
  }
}

std::size_t DepthMap::valid_count() const {
  return static_cast<std::size_t>(
      std::count_if(values_.begin(), values_.end(), [](double v) { return v > 0.0; }));
}

std::optional<std::pair<double, double>> DepthMap::valid_range() const {
  std::optional<std::pair<double, double>> range;
  for (double v : values_) {
    if (v <= 0.0) continue;
    if (!range) {
      range.emplace(v, v);
    } else {
      range->first = std::min(range->first, v);
      range->second = std::max(range->second, v);
    }
  }
  return range;
}

std::optional<int> DepthMap::top_valid_row() const {
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      if (valid(r, c)) return r;
    }
  }
  return std::nullopt;
}

void CameraIntrinsics::validate(bool need_baseline) const {
  if (!(focal_y > 0.0) || !std::isfinite(focal_y)) {
    throw ValidationError("intrinsics: focal_y must be > 0");
  }
  if (need_baseline) {
    if (!(focal_x > 0.0) || !std::isfinite(focal_x)) {
      throw ValidationError("intrinsics: focal_x must be > 0 for disparity conversion");
    }
    if (!(baseline > 0.0) || !std::isfinite(baseline)) {
      throw ValidationError("intrinsics: baseline must be > 0 for disparity conversion");
    }
  }
}

void LidarSimConfig::validate(int image_height) const {
  if (beams < 1 || beams > image_height) {
    throw ValidationError(
        fmt::format("beams must lie in [1, image height {}], got {}", image_height, beams));
  }
  if (!(keep_ratio >= 0.0 && keep_ratio <= 1.0)) {
    throw ValidationError(fmt::format("keep ratio must lie in [0, 1], got {}", keep_ratio));
  }
  if (!(fov_min_deg < fov_max_deg)) {
    throw ValidationError(
        fmt::format("vertical FOV min {} must be below max {}", fov_min_deg, fov_max_deg));
  }
}

void CompletionConfig::validate() const {
  check_kernel("dilation kernel", dilation_kernel);
  check_kernel("close kernel", close_kernel);
  check_kernel("small fill kernel", small_fill_kernel);
  check_kernel("large fill kernel", large_fill_kernel);
  check_kernel("median kernel", median_kernel);
  check_kernel("blur kernel", blur_kernel);
  if (!(max_depth > 0.0) || !std::isfinite(max_depth)) {
    throw ValidationError("completion max_depth must be finite and > 0");
  }
}

DepthMap disparity_to_depth(const RawImage16& disparity, const CameraIntrinsics& intr) {
  intr.validate(true);
  check_dims(disparity.width, disparity.height);
  if (disparity.values.size() !=
      static_cast<std::size_t>(disparity.width) * static_cast<std::size_t>(disparity.height)) {
    throw ValidationError("disparity image size does not match its dims");
  }
  DepthMap out(disparity.width, disparity.height);
  const double numerator = intr.baseline * intr.focal_x;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < disparity.values.size(); ++i) {
    const std::uint16_t p = disparity.values[i];
    if (p == 0) continue;
    const double d = (static_cast<double>(p) - 1.0) / 256.0;
    if (d <= 0.0) continue;
    out.values()[i] = numerator / d;
    ++valid;
  }
  if (valid == 0) throw ValidationError("disparity image holds no valid pixel");
  return out;
}

RawImage16 depth_to_disparity(const DepthMap& depth, const CameraIntrinsics& intr) {
  intr.validate(true);
  RawImage16 out{depth.width(), depth.height(), std::vector<std::uint16_t>(depth.size(), 0)};
  const double numerator = intr.baseline * intr.focal_x;
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double z = depth.values()[i];
    if (z <= 0.0) continue;
    const double code = std::round(numerator / z * 256.0) + 1.0;
    out.values[i] = static_cast<std::uint16_t>(std::clamp(code, 1.0, 65535.0));
  }
  return out;
}

double row_angle(const CameraIntrinsics& intr, double row) {
  return std::atan((intr.principal_y - row) / intr.focal_y);
}

std::vector<int> lidar_rows(int height, const CameraIntrinsics& intr, const LidarSimConfig& cfg) {
  check_dims(1, height);
  intr.validate(false);
  cfg.validate(height);

  const double lo = cfg.fov_min_deg * kDegToRad;
  const double hi = cfg.fov_max_deg * kDegToRad;

  // Row angles decrease with the row index, so in-FOV rows are contiguous.
  int first = -1;
  int last = -1;
  for (int r = 0; r < height; ++r) {
    const double a = row_angle(intr, r);
    if (a >= lo && a <= hi) {
      if (first < 0) first = r;
      last = r;
    }
  }
  if (first < 0) {
    throw ValidationError(fmt::format(
        "no image row falls inside the vertical FOV [{}, {}] deg", cfg.fov_min_deg,
        cfg.fov_max_deg));
  }

  const double extent_top = row_angle(intr, -0.5);
  const double extent_bottom = row_angle(intr, height - 0.5);

  std::vector<int> rows;
  for (int b = 0; b < cfg.beams; ++b) {
    const double beam = cfg.beams == 1 ? 0.5 * (lo + hi)
                                       : lo + (hi - lo) * static_cast<double>(b) / (cfg.beams - 1);
    if (beam < extent_bottom || beam > extent_top) continue;
    int best = first;
    double best_gap = std::numeric_limits<double>::infinity();
    for (int r = first; r <= last; ++r) {
      const double gap = std::abs(row_angle(intr, r) - beam);
      if (gap < best_gap) {
        best_gap = gap;
        best = r;
      }
    }
    rows.push_back(best);
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

DepthMap simulate_lidar(const DepthMap& dense, const CameraIntrinsics& intr,
                        const LidarSimConfig& cfg) {
  const std::vector<int> rows = lidar_rows(dense.height(), intr, cfg);
  DepthMap out(dense.width(), dense.height());
  for (int r : rows) {
    for (int c = 0; c < dense.width(); ++c) out.at(r, c) = dense.at(r, c);
  }
  return out;
}

DepthMap ray_drop(const DepthMap& sparse, double keep_ratio, std::uint64_t seed) {
  if (!(keep_ratio >= 0.0 && keep_ratio <= 1.0)) {
    throw ValidationError(fmt::format("keep ratio must lie in [0, 1], got {}", keep_ratio));
  }
  SplitMix64 rng(seed);
  DepthMap out = sparse;
  for (double& v : out.values()) {
    if (v <= 0.0) continue;
    if (!(rng.uniform() < keep_ratio)) v = 0.0;
  }
  return out;
}

namespace stages {

DepthMap dilate_nearest(const DepthMap& in, int kernel, bool diamond) {
  const int h = kernel / 2;
  DepthMap out(in.width(), in.height());
  for (int r = 0; r < in.height(); ++r) {
    for (int c = 0; c < in.width(); ++c) {
      double best = 0.0;
      for (int dr = -h; dr <= h; ++dr) {
        const int rr = r + dr;
        if (rr < 0 || rr >= in.height()) continue;
        const int span = diamond ? h - std::abs(dr) : h;
        for (int dc = -span; dc <= span; ++dc) {
          const int cc = c + dc;
          if (cc < 0 || cc >= in.width()) continue;
          const double v = in.at(rr, cc);
          if (v > 0.0 && (best == 0.0 || nearer(v, best))) best = v;
        }
      }
      out.at(r, c) = best;
    }
  }
  return out;
}

DepthMap erode_nearest(const DepthMap& in, int kernel) {
  const int h = kernel / 2;
  DepthMap out(in.width(), in.height());
  for (int r = 0; r < in.height(); ++r) {
    for (int c = 0; c < in.width(); ++c) {
      double worst = 0.0;
      bool hole = false;
      for (int rr = std::max(0, r - h); rr <= std::min(in.height() - 1, r + h) && !hole; ++rr) {
        for (int cc = std::max(0, c - h); cc <= std::min(in.width() - 1, c + h); ++cc) {
          const double v = in.at(rr, cc);
          if (v <= 0.0) {
            hole = true;
            break;
          }
          if (worst == 0.0 || nearer(worst, v)) worst = v;
        }
      }
      out.at(r, c) = hole ? 0.0 : worst;
    }
  }
  return out;
}

DepthMap fill_empty(const DepthMap& in, int kernel, int first_row) {
  const DepthMap dilated = dilate_nearest(in, kernel, false);
  DepthMap out = in;
  for (int r = std::max(0, first_row); r < in.height(); ++r) {
    for (int c = 0; c < in.width(); ++c) {
      if (!in.valid(r, c)) out.at(r, c) = dilated.at(r, c);
    }
  }
  return out;
}

DepthMap extend_columns_up(const DepthMap& in) {
  DepthMap out = in;
  const auto top = in.top_valid_row();
  if (!top) return out;
  for (int c = 0; c < in.width(); ++c) {
    int first = -1;
    for (int r = *top; r < in.height(); ++r) {
      if (in.valid(r, c)) {
        first = r;
        break;
      }
    }
    if (first < 0) continue;
    for (int r = *top; r < first; ++r) out.at(r, c) = in.at(first, c);
  }
  return out;
}

DepthMap fill_large(const DepthMap& in, int kernel) {
  const auto top = in.top_valid_row();
  if (!top) return in;
  DepthMap out = in;
  auto region_dense = [&] {
    for (int r = *top; r < out.height(); ++r) {
      for (int c = 0; c < out.width(); ++c) {
        if (!out.valid(r, c)) return false;
      }
    }
    return true;
  };
  // The first pass is the single large dilation; further passes only run
  // when holes wider than the kernel remain.
  do {
    out = fill_empty(out, kernel, *top);
  } while (!region_dense());
  return out;
}

DepthMap median_valid(const DepthMap& in, int kernel) {
  const int h = kernel / 2;
  DepthMap out = in;
  std::vector<double> window;
  window.reserve(static_cast<std::size_t>(kernel) * kernel);
  for (int r = 0; r < in.height(); ++r) {
    for (int c = 0; c < in.width(); ++c) {
      if (!in.valid(r, c)) continue;
      window.clear();
      for (int rr = std::max(0, r - h); rr <= std::min(in.height() - 1, r + h); ++rr) {
        for (int cc = std::max(0, c - h); cc <= std::min(in.width() - 1, c + h); ++cc) {
          if (in.valid(rr, cc)) window.push_back(in.at(rr, cc));
        }
      }
      // Index n/2 of ascending depth is the lower median of inverted depth.
      const auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
      std::nth_element(window.begin(), mid, window.end());
      out.at(r, c) = *mid;
    }
  }
  return out;
}

DepthMap blur_valid(const DepthMap& in, int kernel) {
  // Binomial row of order kernel-1; for kernel 5 this is 1 4 6 4 1, the
  // fixed 5-tap Gaussian.
  std::vector<double> taps(static_cast<std::size_t>(kernel), 1.0);
  for (int i = 1; i < kernel; ++i) {
    taps[static_cast<std::size_t>(i)] =
        taps[static_cast<std::size_t>(i - 1)] * static_cast<double>(kernel - i) / i;
  }
  const int h = kernel / 2;
  DepthMap out = in;
  for (int r = 0; r < in.height(); ++r) {
    for (int c = 0; c < in.width(); ++c) {
      if (!in.valid(r, c)) continue;
      double num = 0.0;
      double den = 0.0;
      double lo = in.at(r, c);
      double hi = lo;
      for (int dr = -h; dr <= h; ++dr) {
        const int rr = r + dr;
        if (rr < 0 || rr >= in.height()) continue;
        for (int dc = -h; dc <= h; ++dc) {
          const int cc = c + dc;
          if (cc < 0 || cc >= in.width() || !in.valid(rr, cc)) continue;
          const double w =
              taps[static_cast<std::size_t>(dr + h)] * taps[static_cast<std::size_t>(dc + h)];
          const double v = in.at(rr, cc);
          num += w * v;
          den += w;
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
      // A weighted mean lies in [lo, hi]; the clamp removes rounding drift.
      out.at(r, c) = std::clamp(num / den, lo, hi);
    }
  }
  return out;
}

}  // namespace stages

DepthMap complete_depth(const DepthMap& sparse, const CompletionConfig& cfg) {
  cfg.validate();
  DepthMap depth = sparse;
  for (double& v : depth.values()) {
    if (v >= cfg.max_depth) v = 0.0;
  }
  if (depth.valid_count() == 0) {
    throw ValidationError("depth completion needs at least one valid pixel below max_depth");
  }

  depth = stages::dilate_nearest(depth, cfg.dilation_kernel, true);
  depth = stages::erode_nearest(stages::dilate_nearest(depth, cfg.close_kernel, false),
                                cfg.close_kernel);
  depth = stages::fill_empty(depth, cfg.small_fill_kernel, 0);
  depth = stages::extend_columns_up(depth);
  depth = stages::fill_large(depth, cfg.large_fill_kernel);
  depth = stages::median_valid(depth, cfg.median_kernel);
  if (cfg.enable_blur) depth = stages::blur_valid(depth, cfg.blur_kernel);
  return depth;
}

}  // namespace pvkit::depth
