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

#include "pvkit/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include <fmt/format.h>

#include "pvkit/error.hpp"

namespace pvkit::metrics {

namespace {

struct SegmentMeta {
  int category_id = 0;
  std::int64_t area = 0;
};

struct PairHash {
  std::size_t operator()(const std::pair<std::uint64_t, std::uint64_t>& p) const {
    return std::hash<std::uint64_t>{}(p.first * 0x9E3779B97F4A7C15ULL ^ p.second);
  }
};

struct Accumulated {
  PqStats stats;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> matched;  // (gt key, pred key)
  std::vector<double> ious;
};

/// Shared PQ core over two pixel labelings of equal length. Key 0 is void.
/// `pred_meta` / `gt_meta` hold category and area per key.
Accumulated accumulate(const std::vector<std::uint64_t>& pred, const std::vector<std::uint64_t>& gt,
                       const std::map<std::uint64_t, SegmentMeta>& pred_meta,
                       const std::map<std::uint64_t, SegmentMeta>& gt_meta,
                       const CategoryTable& cats) {
  std::unordered_map<std::pair<std::uint64_t, std::uint64_t>, std::int64_t, PairHash> inter;
  std::map<std::uint64_t, std::int64_t> pred_on_void;
  for (std::size_t p = 0; p < pred.size(); ++p) {
    if (pred[p] == 0) continue;
    if (gt[p] == 0) {
      ++pred_on_void[pred[p]];
    } else {
      ++inter[{gt[p], pred[p]}];
    }
  }

  auto category_of = [&](int category_id) -> const Category& {
    const auto it = cats.find(category_id);
    if (it == cats.end()) {
      throw ValidationError(fmt::format("category {} is missing from the category table",
                                        category_id));
    }
    return it->second;
  };

  Accumulated acc;
  // Touch every category present so that per-class output is complete.
  for (const auto& [key, meta] : gt_meta) {
    category_of(meta.category_id);
    acc.stats[meta.category_id];
  }
  for (const auto& [key, meta] : pred_meta) {
    category_of(meta.category_id);
    acc.stats[meta.category_id];
  }

  // Deterministic order: ascending gt key, then pred key.
  std::vector<std::pair<std::pair<std::uint64_t, std::uint64_t>, std::int64_t>> overlaps(
      inter.begin(), inter.end());
  std::sort(overlaps.begin(), overlaps.end());

  std::set<std::uint64_t> gt_matched;
  std::set<std::uint64_t> pred_matched;
  for (const auto& [keys, intersection] : overlaps) {
    const auto& [gk, pk] = keys;
    const SegmentMeta& g = gt_meta.at(gk);
    const SegmentMeta& pm = pred_meta.at(pk);
    if (g.category_id != pm.category_id) continue;
    const auto void_it = pred_on_void.find(pk);
    const std::int64_t on_void = void_it == pred_on_void.end() ? 0 : void_it->second;
    const std::int64_t union_area = pm.area + g.area - intersection - on_void;
    const double iou = static_cast<double>(intersection) / static_cast<double>(union_area);
    if (iou <= 0.5) continue;
    if (!gt_matched.insert(gk).second || !pred_matched.insert(pk).second) {
      throw std::logic_error("IoU > 0.5 matched a segment twice");
    }
    PqStat& s = acc.stats[g.category_id];
    ++s.tp;
    s.iou_sum += iou;
    acc.matched.emplace_back(gk, pk);
    acc.ious.push_back(iou);
  }

  for (const auto& [gk, meta] : gt_meta) {
    if (!gt_matched.count(gk)) ++acc.stats[meta.category_id].fn;
  }
  for (const auto& [pk, meta] : pred_meta) {
    if (pred_matched.count(pk)) continue;
    const auto void_it = pred_on_void.find(pk);
    const std::int64_t on_void = void_it == pred_on_void.end() ? 0 : void_it->second;
    // Predictions lying mostly on void are not false positives.
    if (2 * on_void > meta.area) continue;
    ++acc.stats[meta.category_id].fp;
  }
  return acc;
}

void frame_labeling(const PanopticMap& m, std::vector<std::uint64_t>& keys,
                    std::map<std::uint64_t, SegmentMeta>& meta) {
  keys.assign(m.ids().begin(), m.ids().end());
  meta.clear();
  for (SegmentId id : m.ids()) {
    if (id == kVoid) continue;
    auto [it, fresh] = meta.try_emplace(id);
    if (fresh) it->second.category_id = m.segment(id).category_id;
    ++it->second.area;
  }
}

void check_pair(const PanopticMap& pred, const PanopticMap& gt) {
  if (pred.width() != gt.width() || pred.height() != gt.height()) {
    throw ValidationError(fmt::format("prediction is {}x{} but ground truth is {}x{}",
                                      pred.width(), pred.height(), gt.width(), gt.height()));
  }
}

void check_aligned(const std::vector<PanopticMap>& preds, const std::vector<PanopticMap>& gts) {
  if (preds.size() != gts.size()) {
    throw ValidationError(
        fmt::format("{} predicted frames vs {} ground-truth frames", preds.size(), gts.size()));
  }
}

std::map<int, double> per_class_pq(const PqStats& stats) {
  std::map<int, double> out;
  for (const auto& [cat, s] : stats) {
    if (s.participates()) out[cat] = s.pq();
  }
  return out;
}

std::optional<double> mean(const std::vector<double>& values) {
  if (values.empty()) return std::nullopt;
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

// Averages a sequence of per-class PQ maps (one per window or frame).
GroupScores average_units(const std::vector<std::map<int, double>>& units,
                          const CategoryTable& cats, VpqAveraging averaging) {
  if (averaging == VpqAveraging::kWindowThenClass) {
    std::map<int, std::vector<double>> by_class;
    for (const auto& unit : units) {
      for (const auto& [cat, pq] : unit) by_class[cat].push_back(pq);
    }
    std::map<int, double> per_class;
    for (const auto& [cat, values] : by_class) per_class[cat] = *mean(values);
    return summarize(per_class, cats);
  }
  std::vector<double> all;
  std::vector<double> things;
  std::vector<double> stuff;
  for (const auto& unit : units) {
    const GroupScores s = summarize(unit, cats);
    if (s.all) all.push_back(*s.all);
    if (s.things) things.push_back(*s.things);
    if (s.stuff) stuff.push_back(*s.stuff);
  }
  return {mean(all), mean(things), mean(stuff)};
}

}  // namespace

PanopticMap::PanopticMap(int width, int height, std::vector<SegmentId> ids,
                         std::vector<SegmentInfo> segments)
    : width_(width), height_(height), ids_(std::move(ids)) {
  if (width < 1 || height < 1) {
    throw ValidationError(fmt::format("panoptic map dims must be >= 1, got {}x{}", width, height));
  }
  if (ids_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw ValidationError("panoptic map id count does not match its dims");
  }
  for (const SegmentInfo& s : segments) {
    if (s.id == kVoid) throw ValidationError("segments_info may not describe id 0 (void)");
    if (!segments_.emplace(s.id, s).second) {
      throw ValidationError(fmt::format("duplicate segment id {} in segments_info", s.id));
    }
  }
  for (SegmentId id : ids_) {
    if (id != kVoid && !segments_.count(id)) {
      throw ValidationError(fmt::format("pixel segment id {} is missing from segments_info", id));
    }
  }
}

const SegmentInfo& PanopticMap::segment(SegmentId id) const {
  const auto it = segments_.find(id);
  if (it == segments_.end()) throw ValidationError(fmt::format("unknown segment id {}", id));
  return it->second;
}

CategoryTable infer_categories(const std::vector<PanopticMap>& maps) {
  CategoryTable cats;
  for (const PanopticMap& m : maps) {
    for (const auto& [id, info] : m.segments()) {
      auto [it, fresh] = cats.try_emplace(info.category_id,
                                          Category{std::to_string(info.category_id), info.is_thing});
      if (!fresh && it->second.is_thing != info.is_thing) {
        throw ValidationError(
            fmt::format("category {} is marked both thing and stuff", info.category_id));
      }
    }
  }
  return cats;
}

double PqStat::pq() const {
  const double denom = static_cast<double>(tp) + 0.5 * static_cast<double>(fp) +
                       0.5 * static_cast<double>(fn);
  return denom > 0.0 ? iou_sum / denom : 0.0;
}

double PqStat::sq() const { return tp > 0 ? iou_sum / static_cast<double>(tp) : 0.0; }

double PqStat::rq() const {
  const double denom = static_cast<double>(tp) + 0.5 * static_cast<double>(fp) +
                       0.5 * static_cast<double>(fn);
  return denom > 0.0 ? static_cast<double>(tp) / denom : 0.0;
}

PqStat& PqStat::operator+=(const PqStat& o) {
  iou_sum += o.iou_sum;
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

std::vector<Match> match_segments(const PanopticMap& pred, const PanopticMap& gt) {
  check_pair(pred, gt);
  std::vector<std::uint64_t> pk;
  std::vector<std::uint64_t> gk;
  std::map<std::uint64_t, SegmentMeta> pm;
  std::map<std::uint64_t, SegmentMeta> gm;
  frame_labeling(pred, pk, pm);
  frame_labeling(gt, gk, gm);
  // Matching needs no category table beyond the ids themselves.
  CategoryTable cats;
  for (const auto& [k, m] : pm) cats[m.category_id];
  for (const auto& [k, m] : gm) cats[m.category_id];
  const Accumulated acc = accumulate(pk, gk, pm, gm, cats);
  std::vector<Match> out;
  for (std::size_t i = 0; i < acc.matched.size(); ++i) {
    out.push_back({static_cast<SegmentId>(acc.matched[i].first),
                   static_cast<SegmentId>(acc.matched[i].second), acc.ious[i]});
  }
  return out;
}

PqStats frame_stats(const PanopticMap& pred, const PanopticMap& gt, const CategoryTable& cats) {
  check_pair(pred, gt);
  std::vector<std::uint64_t> pk;
  std::vector<std::uint64_t> gk;
  std::map<std::uint64_t, SegmentMeta> pm;
  std::map<std::uint64_t, SegmentMeta> gm;
  frame_labeling(pred, pk, pm);
  frame_labeling(gt, gk, gm);
  return accumulate(pk, gk, pm, gm, cats).stats;
}

GroupScores summarize(const std::map<int, double>& per_class, const CategoryTable& cats) {
  std::vector<double> all;
  std::vector<double> things;
  std::vector<double> stuff;
  for (const auto& [cat, value] : per_class) {
    const auto it = cats.find(cat);
    if (it == cats.end()) {
      throw ValidationError(fmt::format("category {} is missing from the category table", cat));
    }
    all.push_back(value);
    (it->second.is_thing ? things : stuff).push_back(value);
  }
  return {mean(all), mean(things), mean(stuff)};
}

PqResult compute_pq(const std::vector<PanopticMap>& preds, const std::vector<PanopticMap>& gts,
                    const CategoryTable& cats) {
  check_aligned(preds, gts);
  PqResult result;
  for (std::size_t f = 0; f < preds.size(); ++f) {
    for (const auto& [cat, s] : frame_stats(preds[f], gts[f], cats)) result.per_class[cat] += s;
  }
  std::map<int, double> pq;
  std::map<int, double> sq;
  std::map<int, double> rq;
  for (const auto& [cat, s] : result.per_class) {
    if (!s.participates()) continue;
    pq[cat] = s.pq();
    sq[cat] = s.sq();
    rq[cat] = s.rq();
  }
  result.pq = summarize(pq, cats);
  result.sq = summarize(sq, cats);
  result.rq = summarize(rq, cats);
  return result;
}

std::uint64_t tube_key(int category_id, SegmentId track_id) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(category_id)) << 32) | track_id;
}

TubeSet build_tubes(const std::vector<PanopticMap>& frames, std::size_t start,
                    std::size_t length) {
  if (length == 0 || start + length > frames.size()) {
    throw ValidationError(fmt::format("window [{}, {}) exceeds the {}-frame sequence", start,
                                      start + length, frames.size()));
  }
  TubeSet set;
  for (std::size_t f = start; f < start + length; ++f) {
    const PanopticMap& m = frames[f];
    if (m.width() != frames[start].width() || m.height() != frames[start].height()) {
      throw ValidationError("all frames of a window must share their dims");
    }
    for (SegmentId id : m.ids()) {
      if (id == kVoid) {
        set.keys.push_back(0);
        continue;
      }
      const SegmentInfo& info = m.segment(id);
      const std::uint64_t key = tube_key(info.category_id, id);
      set.keys.push_back(key);
      auto [it, fresh] = set.tubes.try_emplace(key);
      if (fresh) it->second = {info.category_id, info.is_thing, id, 0};
      ++it->second.area;
    }
  }
  return set;
}

PqStats tube_stats(const TubeSet& pred, const TubeSet& gt, const CategoryTable& cats) {
  if (pred.keys.size() != gt.keys.size()) {
    throw ValidationError("predicted and ground-truth tubes cover different pixel counts");
  }
  std::map<std::uint64_t, SegmentMeta> pm;
  std::map<std::uint64_t, SegmentMeta> gm;
  for (const auto& [k, t] : pred.tubes) pm[k] = {t.category_id, t.area};
  for (const auto& [k, t] : gt.tubes) gm[k] = {t.category_id, t.area};
  return accumulate(pred.keys, gt.keys, pm, gm, cats).stats;
}

VpqConfig VpqConfig::for_stride(int stride, std::vector<int> k_labels) {
  if (stride < 1) throw ValidationError(fmt::format("sampling stride must be >= 1, got {}", stride));
  VpqConfig cfg;
  cfg.k_labels = std::move(k_labels);
  cfg.frames_per_label.clear();
  for (int k : cfg.k_labels) {
    if (k < 0 || k % stride != 0) {
      throw ValidationError(fmt::format("k label {} is not a multiple of stride {}", k, stride));
    }
    cfg.frames_per_label[k] = k / stride + 1;
  }
  return cfg;
}

void VpqConfig::validate() const {
  if (k_labels.empty()) throw ValidationError("VPQ needs at least one k label");
  for (int k : k_labels) {
    const auto it = frames_per_label.find(k);
    if (it == frames_per_label.end()) {
      throw ValidationError(fmt::format("no window length configured for k = {}", k));
    }
    if (it->second < 1) throw ValidationError(fmt::format("window for k = {} must be >= 1", k));
  }
  if (threads < 1) throw ValidationError("threads must be >= 1");
}

VpqResult compute_vpq(const std::vector<PanopticMap>& preds, const std::vector<PanopticMap>& gts,
                      const CategoryTable& cats, const VpqConfig& cfg) {
  cfg.validate();
  check_aligned(preds, gts);
  for (std::size_t f = 0; f < preds.size(); ++f) check_pair(preds[f], gts[f]);

  VpqResult result;
  std::vector<double> all;
  std::vector<double> things;
  std::vector<double> stuff;
  for (int k : cfg.k_labels) {
    VpqAtK at{k, cfg.frames_per_label.at(k), false, 0, {}};
    const auto window = static_cast<std::size_t>(at.window);
    if (preds.size() >= window) {
      at.present = true;
      at.windows = preds.size() - window + 1;
      // Each window writes its own slot; the reduction below runs in order,
      // so the result does not depend on the thread count.
      std::vector<std::map<int, double>> units(at.windows);
      std::atomic<std::size_t> next{0};
      std::exception_ptr failure;
      std::mutex failure_mutex;
      auto worker = [&] {
        for (std::size_t w = next++; w < at.windows; w = next++) {
          try {
            units[w] = per_class_pq(
                tube_stats(build_tubes(preds, w, window), build_tubes(gts, w, window), cats));
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      };
      const auto workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), at.windows);
      if (workers <= 1) {
        worker();
      } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
      }
      if (failure) std::rethrow_exception(failure);
      at.scores = average_units(units, cats, cfg.averaging);
      if (at.scores.all) all.push_back(*at.scores.all);
      if (at.scores.things) things.push_back(*at.scores.things);
      if (at.scores.stuff) stuff.push_back(*at.scores.stuff);
    }
    result.per_k.push_back(at);
  }
  result.mean = {mean(all), mean(things), mean(stuff)};
  return result;
}

GroupScores frame_averaged_pq(const std::vector<PanopticMap>& preds,
                              const std::vector<PanopticMap>& gts, const CategoryTable& cats,
                              VpqAveraging averaging) {
  check_aligned(preds, gts);
  std::vector<std::map<int, double>> units;
  for (std::size_t f = 0; f < preds.size(); ++f) {
    units.push_back(per_class_pq(frame_stats(preds[f], gts[f], cats)));
  }
  return average_units(units, cats, averaging);
}

}  // namespace pvkit::metrics
