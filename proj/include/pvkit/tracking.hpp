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
#include <vector>

#include <Eigen/Dense>

#include "pvkit/decoder.hpp"

namespace pvkit::tracking {

using CostMatrix = Eigen::MatrixXd;  // rows: previous frame, cols: current frame
using TrackId = std::int64_t;

enum class MatchScope { kAllSlots, kNonEmptyOnly };

struct MatchConfig {
  double alpha_position = 0.0;
  MatchScope scope = MatchScope::kAllSlots;

  void validate() const;
};

struct Pair {
  int prev = 0;
  int cur = 0;
  double cost = 0.0;

  friend bool operator==(const Pair&, const Pair&) = default;
};

struct TrackAssignment {
  std::vector<Pair> pairs;                  // ascending by prev
  std::vector<std::optional<TrackId>> ids;  // per current slot; empty slots get none
  std::vector<TrackId> fresh_ids;           // ids minted in this frame, ascending
};

// 1 - cos(prev_i, cur_j); a zero-norm embedding costs 1 against everything.
CostMatrix cosine_cost(const Eigen::MatrixXd& prev, const Eigen::MatrixXd& cur);

// Euclidean distance between normalised centres.
CostMatrix position_cost(const Eigen::MatrixXd& prev_centers, const Eigen::MatrixXd& cur_centers);

CostMatrix combine_costs(const CostMatrix& appearance, const CostMatrix& position,
                         const MatchConfig& cfg);

/// Minimum-cost one-to-one assignment (Kuhn-Munkres with potentials,
/// O(n^3)). Rectangular inputs are padded to square with cost 1 + max entry;
/// pad matches are dropped, so min(rows, cols) pairs come back. The column
/// scan keeps the lowest index on equal reduced costs, which makes the result
/// deterministic.
std::vector<Pair> hungarian(const CostMatrix& cost);

double total_cost(const std::vector<Pair>& pairs);

// Matched non-empty current slots inherit the previous slot's id; other
// non-empty slots draw fresh ids from next_id (monotone, never reused).
TrackAssignment propagate_ids(const std::vector<Pair>& pairs,
                              const std::vector<std::optional<TrackId>>& prev_ids,
                              const std::vector<bool>& non_empty_cur, TrackId& next_id);

/// Frame-by-frame tracker over decoder query sets.
class QueryTracker {
 public:
  explicit QueryTracker(MatchConfig cfg = {});

  struct Entry {
    int slot = 0;
    TrackId track_id = 0;
    std::optional<double> cost;  // nullopt for a fresh track
    double center_x = 0.0;
    double center_y = 0.0;
  };

  // Returns one entry per non-empty slot, ascending by slot.
  std::vector<Entry> step(const decoder::QuerySet& frame);
  std::vector<Entry> step(const Eigen::MatrixXd& embeddings, const Eigen::MatrixXd& centers,
                          const std::vector<bool>& non_empty);

  const MatchConfig& config() const { return cfg_; }

 private:
  MatchConfig cfg_;
  bool has_prev_ = false;
  Eigen::MatrixXd prev_embeddings_;
  Eigen::MatrixXd prev_centers_;
  std::vector<bool> prev_non_empty_;
  std::vector<std::optional<TrackId>> prev_ids_;
  TrackId next_id_ = 1;
};

}  // namespace pvkit::tracking
