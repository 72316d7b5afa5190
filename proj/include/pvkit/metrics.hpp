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
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pvkit::metrics {

using SegmentId = std::uint32_t;  // 0 is void
inline constexpr SegmentId kVoid = 0;

struct SegmentInfo {
  SegmentId id = 0;
  int category_id = 0;
  bool is_thing = false;
};

/// Per-pixel segment ids plus the table mapping ids to categories.
class PanopticMap {
 public:
  PanopticMap() = default;
  PanopticMap(int width, int height, std::vector<SegmentId> ids, std::vector<SegmentInfo> segments);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixels() const { return ids_.size(); }
  SegmentId id(std::size_t p) const { return ids_[p]; }
  SegmentId id(int row, int col) const {
    return ids_[static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(col)];
  }
  const std::vector<SegmentId>& ids() const { return ids_; }
  const std::map<SegmentId, SegmentInfo>& segments() const { return segments_; }
  const SegmentInfo& segment(SegmentId id) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<SegmentId> ids_;
  std::map<SegmentId, SegmentInfo> segments_;
};

struct Category {
  std::string name;
  bool is_thing = false;
};
using CategoryTable = std::map<int, Category>;

// Categories referenced by the maps' segments_info, named by id.
CategoryTable infer_categories(const std::vector<PanopticMap>& maps);

struct PqStat {
  double iou_sum = 0.0;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  bool participates() const { return tp + fp + fn > 0; }
  double pq() const;
  double sq() const;
  double rq() const;
  PqStat& operator+=(const PqStat& o);
};
using PqStats = std::map<int, PqStat>;  // keyed by category id

struct Match {
  SegmentId gt_id = 0;
  SegmentId pred_id = 0;
  double iou = 0.0;
};

// Same-category pairs with IoU > 0.5. Ground-truth void pixels are excluded
// from both intersection and union. Ascending by gt id.
std::vector<Match> match_segments(const PanopticMap& pred, const PanopticMap& gt);

// Category-level statistics of one frame.
PqStats frame_stats(const PanopticMap& pred, const PanopticMap& gt, const CategoryTable& cats);

struct GroupScores {
  std::optional<double> all;
  std::optional<double> things;
  std::optional<double> stuff;
};

// Mean of per-class values over all / thing / stuff classes.
GroupScores summarize(const std::map<int, double>& per_class, const CategoryTable& cats);

struct PqResult {
  GroupScores pq;
  GroupScores sq;
  GroupScores rq;
  PqStats per_class;
};

// Statistics are pooled over all frame pairs; classes with no gt and no
// prediction anywhere are skipped.
PqResult compute_pq(const std::vector<PanopticMap>& preds, const std::vector<PanopticMap>& gts,
                    const CategoryTable& cats);

struct TubeInfo {
  int category_id = 0;
  bool is_thing = false;
  SegmentId track_id = 0;
  std::int64_t area = 0;
};

/// The frames [start, start + length) concatenated into one pixel list.
/// keys[p] identifies the tube (category, track id) owning pixel p; 0 is void.
struct TubeSet {
  std::vector<std::uint64_t> keys;
  std::map<std::uint64_t, TubeInfo> tubes;
};

std::uint64_t tube_key(int category_id, SegmentId track_id);

TubeSet build_tubes(const std::vector<PanopticMap>& frames, std::size_t start, std::size_t length);

// Tube-level statistics of one window.
PqStats tube_stats(const TubeSet& pred, const TubeSet& gt, const CategoryTable& cats);

enum class VpqAveraging {
  kWindowThenClass,  // per class: mean over windows; then mean over classes
  kClassThenWindow,  // per window: mean over classes; then mean over windows
};

struct VpqConfig {
  std::vector<int> k_labels{0, 5, 10, 15};
  std::map<int, int> frames_per_label{{0, 1}, {5, 2}, {10, 3}, {15, 4}};
  VpqAveraging averaging = VpqAveraging::kWindowThenClass;
  int threads = 1;

  // k -> k / stride + 1 for every label, for sequences sampled every
  // `stride` frames.
  static VpqConfig for_stride(int stride, std::vector<int> k_labels = {0, 5, 10, 15});
  void validate() const;
};

struct VpqAtK {
  int k = 0;
  int window = 0;
  bool present = false;  // false when the sequence is shorter than the window
  std::size_t windows = 0;
  GroupScores scores;
};

struct VpqResult {
  GroupScores mean;
  std::vector<VpqAtK> per_k;
};

VpqResult compute_vpq(const std::vector<PanopticMap>& preds, const std::vector<PanopticMap>& gts,
                      const CategoryTable& cats, const VpqConfig& cfg = {});

// Per-frame PQ through the frame matcher, averaged over frames in the given
// order. Equal to the window-1 VPQ by construction of the tube path.
GroupScores frame_averaged_pq(const std::vector<PanopticMap>& preds,
                              const std::vector<PanopticMap>& gts, const CategoryTable& cats,
                              VpqAveraging averaging = VpqAveraging::kWindowThenClass);

}  // namespace pvkit::metrics
