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

#include "pvkit/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "pvkit/error.hpp"

namespace pvkit::tracking {

namespace {

void check_finite(const CostMatrix& m, const char* what) {
  if (!m.allFinite()) throw ValidationError(fmt::format("{} holds non-finite entries", what));
}

}  // namespace

void MatchConfig::validate() const {
  if (!std::isfinite(alpha_position) || alpha_position < 0.0) {
    throw ValidationError(fmt::format("alpha must be finite and >= 0, got {}", alpha_position));
  }
}

CostMatrix cosine_cost(const Eigen::MatrixXd& prev, const Eigen::MatrixXd& cur) {
  if (prev.cols() != cur.cols()) {
    throw ValidationError(fmt::format("cosine cost: embedding dims {} and {} differ",
                                      prev.cols(), cur.cols()));
  }
  const Eigen::VectorXd np = prev.rowwise().norm();
  const Eigen::VectorXd nc = cur.rowwise().norm();
  const Eigen::MatrixXd dots = prev * cur.transpose();
  CostMatrix cost(prev.rows(), cur.rows());
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    for (Eigen::Index j = 0; j < cost.cols(); ++j) {
      if (np(i) == 0.0 || nc(j) == 0.0) {
        cost(i, j) = 1.0;
        continue;
      }
      const double cosine = std::clamp(dots(i, j) / (np(i) * nc(j)), -1.0, 1.0);
      cost(i, j) = 1.0 - cosine;
    }
  }
  return cost;
}

CostMatrix position_cost(const Eigen::MatrixXd& prev_centers,
                         const Eigen::MatrixXd& cur_centers) {
  if (prev_centers.cols() != 2 || cur_centers.cols() != 2) {
    throw ValidationError("position cost: centres must be N x 2");
  }
  CostMatrix cost(prev_centers.rows(), cur_centers.rows());
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    for (Eigen::Index j = 0; j < cost.cols(); ++j) {
      cost(i, j) = (prev_centers.row(i) - cur_centers.row(j)).norm();
    }
  }
  return cost;
}

CostMatrix combine_costs(const CostMatrix& appearance, const CostMatrix& position,
                         const MatchConfig& cfg) {
  cfg.validate();
  if (appearance.rows() != position.rows() || appearance.cols() != position.cols()) {
    throw ValidationError(fmt::format("cost shapes {}x{} and {}x{} differ", appearance.rows(),
                                      appearance.cols(), position.rows(), position.cols()));
  }
  if (cfg.alpha_position == 0.0) return appearance;
  return appearance + cfg.alpha_position * position;
}

std::vector<Pair> hungarian(const CostMatrix& cost) {
  const auto rows = static_cast<int>(cost.rows());
  const auto cols = static_cast<int>(cost.cols());
  if (rows == 0 || cols == 0) return {};
  check_finite(cost, "cost matrix");

  const int n = std::max(rows, cols);
  const double pad = 1.0 + cost.maxCoeff();
  auto at = [&](int i, int j) { return (i < rows && j < cols) ? cost(i, j) : pad; };

  // 1-based potentials; column 0 is the virtual start.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> match(static_cast<std::size_t>(n) + 1, 0);  // column -> row
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);

  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (used[ju]) continue;
        const double reduced = at(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[ju];
        if (reduced < minv[ju]) {
          minv[ju] = reduced;
          way[ju] = j0;
        }
        if (minv[ju] < delta) {
          delta = minv[ju];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (used[ju]) {
          u[static_cast<std::size_t>(match[ju])] += delta;
          v[ju] -= delta;
        } else {
          minv[ju] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<Pair> pairs;
  for (int j = 1; j <= n; ++j) {
    const int i = match[static_cast<std::size_t>(j)] - 1;
    if (i < rows && j - 1 < cols) pairs.push_back({i, j - 1, cost(i, j - 1)});
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.prev < b.prev; });
  return pairs;
}

double total_cost(const std::vector<Pair>& pairs) {
  double total = 0.0;
  for (const Pair& p : pairs) total += p.cost;
  return total;
}

TrackAssignment propagate_ids(const std::vector<Pair>& pairs,
                              const std::vector<std::optional<TrackId>>& prev_ids,
                              const std::vector<bool>& non_empty_cur, TrackId& next_id) {
  TrackAssignment out;
  out.pairs = pairs;
  out.ids.assign(non_empty_cur.size(), std::nullopt);

  std::vector<int> source(non_empty_cur.size(), -1);
  for (const Pair& p : pairs) {
    if (p.prev < 0 || static_cast<std::size_t>(p.prev) >= prev_ids.size() || p.cur < 0 ||
        static_cast<std::size_t>(p.cur) >= non_empty_cur.size()) {
      throw ValidationError(fmt::format("pair ({}, {}) is out of range", p.prev, p.cur));
    }
    if (source[static_cast<std::size_t>(p.cur)] >= 0) {
      throw ValidationError(fmt::format("current slot {} appears in two pairs", p.cur));
    }
    source[static_cast<std::size_t>(p.cur)] = p.prev;
  }

  for (std::size_t j = 0; j < non_empty_cur.size(); ++j) {
    if (!non_empty_cur[j]) continue;
    const int prev = source[j];
    if (prev >= 0 && prev_ids[static_cast<std::size_t>(prev)]) {
      out.ids[j] = prev_ids[static_cast<std::size_t>(prev)];
    } else {
      out.ids[j] = next_id;
      out.fresh_ids.push_back(next_id);
      ++next_id;
    }
  }
  return out;
}

QueryTracker::QueryTracker(MatchConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::vector<QueryTracker::Entry> QueryTracker::step(const decoder::QuerySet& frame) {
  return step(frame.embeddings, frame.centers, frame.non_empty());
}

std::vector<QueryTracker::Entry> QueryTracker::step(const Eigen::MatrixXd& embeddings,
                                                    const Eigen::MatrixXd& centers,
                                                    const std::vector<bool>& non_empty) {
  if (centers.rows() != embeddings.rows() || centers.cols() != 2 ||
      non_empty.size() != static_cast<std::size_t>(embeddings.rows())) {
    throw ValidationError("tracker: embeddings, centres and flags must cover the same slots");
  }
  if (has_prev_ && embeddings.cols() != prev_embeddings_.cols()) {
    throw ValidationError("tracker: embedding dim changed between frames");
  }

  std::vector<Pair> pairs;
  if (has_prev_) {
    // Slot lists taking part in matching.
    std::vector<int> prev_slots;
    std::vector<int> cur_slots;
    for (int i = 0; i < prev_embeddings_.rows(); ++i) {
      if (cfg_.scope == MatchScope::kAllSlots || prev_non_empty_[static_cast<std::size_t>(i)]) {
        prev_slots.push_back(i);
      }
    }
    for (int j = 0; j < embeddings.rows(); ++j) {
      if (cfg_.scope == MatchScope::kAllSlots || non_empty[static_cast<std::size_t>(j)]) {
        cur_slots.push_back(j);
      }
    }
    const auto pick = [](const Eigen::MatrixXd& m, const std::vector<int>& slots) {
      Eigen::MatrixXd out(static_cast<Eigen::Index>(slots.size()), m.cols());
      for (std::size_t k = 0; k < slots.size(); ++k) {
        out.row(static_cast<Eigen::Index>(k)) = m.row(slots[k]);
      }
      return out;
    };
    const CostMatrix cost = combine_costs(
        cosine_cost(pick(prev_embeddings_, prev_slots), pick(embeddings, cur_slots)),
        position_cost(pick(prev_centers_, prev_slots), pick(centers, cur_slots)), cfg_);
    for (const Pair& p : hungarian(cost)) {
      pairs.push_back({prev_slots[static_cast<std::size_t>(p.prev)],
                       cur_slots[static_cast<std::size_t>(p.cur)], p.cost});
    }
  }

  const std::vector<std::optional<TrackId>> prev_ids =
      has_prev_ ? prev_ids_
                : std::vector<std::optional<TrackId>>(static_cast<std::size_t>(embeddings.rows()));
  const TrackAssignment assignment = propagate_ids(pairs, prev_ids, non_empty, next_id_);

  std::vector<std::optional<double>> pair_cost(non_empty.size());
  for (const Pair& p : pairs) {
    if (prev_ids[static_cast<std::size_t>(p.prev)]) pair_cost[static_cast<std::size_t>(p.cur)] = p.cost;
  }

  std::vector<Entry> entries;
  for (std::size_t j = 0; j < non_empty.size(); ++j) {
    if (!assignment.ids[j]) continue;
    const auto row = static_cast<Eigen::Index>(j);
    entries.push_back({static_cast<int>(j), *assignment.ids[j], pair_cost[j], centers(row, 0),
                       centers(row, 1)});
  }

  has_prev_ = true;
  prev_embeddings_ = embeddings;
  prev_centers_ = centers;
  prev_non_empty_ = non_empty;
  prev_ids_ = assignment.ids;
  return entries;
}

}  // namespace pvkit::tracking
