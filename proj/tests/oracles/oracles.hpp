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

// Independent reference implementations used by the unit and acceptance
// tests. They favour obviously-correct loops over speed and share no code
// with the library beyond its plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pvkit/decoder.hpp"
#include "pvkit/depth.hpp"
#include "pvkit/feature_map.hpp"
#include "pvkit/fusion.hpp"
#include "pvkit/metrics.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Panoptic quality by pixel enumeration
// ---------------------------------------------------------------------------

struct ClassStat {
  double iou_sum = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

struct Groups {
  std::optional<double> all;
  std::optional<double> things;
  std::optional<double> stuff;
};

// A labelled pixel list: label 0 is void, every other label maps to a
// category.
struct Labeling {
  std::vector<std::uint64_t> labels;
  std::map<std::uint64_t, int> category;
};

inline Labeling frame_labeling(const pvkit::metrics::PanopticMap& m) {
  Labeling l;
  for (int r = 0; r < m.height(); ++r) {
    for (int c = 0; c < m.width(); ++c) {
      const auto id = m.id(r, c);
      l.labels.push_back(id);
      if (id != 0) l.category[id] = m.segment(id).category_id;
    }
  }
  return l;
}

// Tubes over frames [start, start + length): (frame, pixel) pairs of the same
// category and id form one segment.
inline Labeling tube_labeling(const std::vector<pvkit::metrics::PanopticMap>& frames,
                              std::size_t start, std::size_t length) {
  Labeling l;
  for (std::size_t f = start; f < start + length; ++f) {
    const Labeling one = frame_labeling(frames[f]);
    for (std::uint64_t id : one.labels) {
      if (id == 0) {
        l.labels.push_back(0);
        continue;
      }
      const int cat = one.category.at(id);
      const std::uint64_t key = static_cast<std::uint64_t>(cat) * 4294967296ULL + id;
      l.labels.push_back(key);
      l.category[key] = cat;
    }
  }
  return l;
}

inline std::map<int, ClassStat> brute_stats(const Labeling& pred, const Labeling& gt) {
  const std::size_t n = gt.labels.size();
  auto area = [n](const Labeling& l, std::uint64_t s) {
    long a = 0;
    for (std::size_t p = 0; p < n; ++p) a += l.labels[p] == s;
    return a;
  };
  std::map<int, ClassStat> stats;
  for (const auto& [s, cat] : gt.category) stats[cat];
  for (const auto& [s, cat] : pred.category) stats[cat];

  std::set<std::uint64_t> gt_hit;
  std::set<std::uint64_t> pred_hit;
  for (const auto& [g, gcat] : gt.category) {
    for (const auto& [q, qcat] : pred.category) {
      if (gcat != qcat) continue;
      long inter = 0;
      long q_void = 0;
      for (std::size_t p = 0; p < n; ++p) {
        if (pred.labels[p] != q) continue;
        if (gt.labels[p] == g) ++inter;
        if (gt.labels[p] == 0) ++q_void;
      }
      const long uni = area(gt, g) + area(pred, q) - inter - q_void;
      const double iou = static_cast<double>(inter) / static_cast<double>(uni);
      if (iou > 0.5) {
        stats[gcat].tp += 1;
        stats[gcat].iou_sum += iou;
        gt_hit.insert(g);
        pred_hit.insert(q);
      }
    }
  }
  for (const auto& [g, gcat] : gt.category) {
    if (!gt_hit.count(g)) stats[gcat].fn += 1;
  }
  for (const auto& [q, qcat] : pred.category) {
    if (pred_hit.count(q)) continue;
    long q_void = 0;
    for (std::size_t p = 0; p < n; ++p) q_void += pred.labels[p] == q && gt.labels[p] == 0;
    if (static_cast<double>(q_void) / static_cast<double>(area(pred, q)) > 0.5) continue;
    stats[qcat].fp += 1;
  }
  return stats;
}

inline double pq_of(const ClassStat& s) {
  const double d = s.tp + 0.5 * s.fp + 0.5 * s.fn;
  return d > 0 ? s.iou_sum / d : 0.0;
}

inline bool participates(const ClassStat& s) { return s.tp + s.fp + s.fn > 0; }

inline Groups group_means(const std::map<int, double>& per_class,
                          const pvkit::metrics::CategoryTable& cats) {
  double sa = 0, st = 0, ss = 0;
  int na = 0, nt = 0, ns = 0;
  for (const auto& [cat, v] : per_class) {
    sa += v;
    ++na;
    if (cats.at(cat).is_thing) {
      st += v;
      ++nt;
    } else {
      ss += v;
      ++ns;
    }
  }
  Groups g;
  if (na) g.all = sa / na;
  if (nt) g.things = st / nt;
  if (ns) g.stuff = ss / ns;
  return g;
}

// Statistics pooled over frames, then averaged over participating classes.
inline Groups brute_pq(const std::vector<pvkit::metrics::PanopticMap>& preds,
                       const std::vector<pvkit::metrics::PanopticMap>& gts,
                       const pvkit::metrics::CategoryTable& cats) {
  std::map<int, ClassStat> pooled;
  for (std::size_t f = 0; f < preds.size(); ++f) {
    for (const auto& [cat, s] : brute_stats(frame_labeling(preds[f]), frame_labeling(gts[f]))) {
      ClassStat& t = pooled[cat];
      t.iou_sum += s.iou_sum;
      t.tp += s.tp;
      t.fp += s.fp;
      t.fn += s.fn;
    }
  }
  std::map<int, double> per_class;
  for (const auto& [cat, s] : pooled) {
    if (participates(s)) per_class[cat] = pq_of(s);
  }
  return group_means(per_class, cats);
}

// VPQ over the windows {k: frames}; `window_then_class` selects the
// averaging order. Absent k (sequence too short) are left out of the mean.
inline Groups brute_vpq(const std::vector<pvkit::metrics::PanopticMap>& preds,
                        const std::vector<pvkit::metrics::PanopticMap>& gts,
                        const pvkit::metrics::CategoryTable& cats,
                        const std::map<int, int>& windows, bool window_then_class,
                        std::map<int, Groups>* per_k = nullptr) {
  std::vector<double> all, things, stuff;
  for (const auto& [k, len] : windows) {
    const auto w = static_cast<std::size_t>(len);
    if (preds.size() < w) continue;
    std::vector<std::map<int, double>> units;
    for (std::size_t s = 0; s + w <= preds.size(); ++s) {
      std::map<int, double> unit;
      for (const auto& [cat, st] :
           brute_stats(tube_labeling(preds, s, w), tube_labeling(gts, s, w))) {
        if (participates(st)) unit[cat] = pq_of(st);
      }
      units.push_back(unit);
    }
    Groups g;
    if (window_then_class) {
      std::map<int, std::pair<double, int>> acc;
      for (const auto& u : units) {
        for (const auto& [cat, v] : u) {
          acc[cat].first += v;
          acc[cat].second += 1;
        }
      }
      std::map<int, double> per_class;
      for (const auto& [cat, a] : acc) per_class[cat] = a.first / a.second;
      g = group_means(per_class, cats);
    } else {
      double sa = 0, st = 0, ss = 0;
      int na = 0, nt = 0, ns = 0;
      for (const auto& u : units) {
        const Groups ug = group_means(u, cats);
        if (ug.all) sa += *ug.all, ++na;
        if (ug.things) st += *ug.things, ++nt;
        if (ug.stuff) ss += *ug.stuff, ++ns;
      }
      if (na) g.all = sa / na;
      if (nt) g.things = st / nt;
      if (ns) g.stuff = ss / ns;
    }
    if (per_k) (*per_k)[k] = g;
    if (g.all) all.push_back(*g.all);
    if (g.things) things.push_back(*g.things);
    if (g.stuff) stuff.push_back(*g.stuff);
  }
  auto mean = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  return {mean(all), mean(things), mean(stuff)};
}

// ---------------------------------------------------------------------------
// Assignment by exhaustive permutation
// ---------------------------------------------------------------------------

// Minimum total cost over all injective maps from the smaller side to the
// larger one; also returns one minimising row -> column map.
inline double permutation_minimum(const Eigen::MatrixXd& cost,
                                  std::vector<int>* best_map = nullptr) {
  const bool flip = cost.rows() > cost.cols();
  const Eigen::MatrixXd c = flip ? Eigen::MatrixXd(cost.transpose()) : cost;
  const int rows = static_cast<int>(c.rows());
  const int cols = static_cast<int>(c.cols());
  std::vector<int> perm(static_cast<std::size_t>(cols));
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  std::vector<int> arg;
  do {
    double total = 0.0;
    for (int r = 0; r < rows; ++r) total += c(r, perm[static_cast<std::size_t>(r)]);
    if (total < best) {
      best = total;
      arg.assign(perm.begin(), perm.begin() + rows);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (best_map && !flip) *best_map = arg;
  return best;
}

// Cosine distance with plain loops.
inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Fusion, attention and the location head by scalar loops
// ---------------------------------------------------------------------------

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline pvkit::FeatureMap fuse(const pvkit::FeatureMap& fi, const pvkit::FeatureMap& fd,
                              const pvkit::fusion::FusionParams& p) {
  pvkit::FeatureMap out = fi;
  for (int c = 0; c < fi.channels(); ++c) {
    if (c >= fd.channels()) continue;
    for (int y = 0; y < fi.height(); ++y) {
      for (int x = 0; x < fi.width(); ++x) {
        double g = p.bias[static_cast<std::size_t>(c)];
        for (int k = 0; k < fi.channels(); ++k) {
          g += p.weights[static_cast<std::size_t>(c * fi.channels() + k)] * fi.at(k, y, x);
        }
        out.at(c, y, x) += sigmoid(g) * p.gamma[static_cast<std::size_t>(c)] * fd.at(c, y, x);
      }
    }
  }
  return out;
}

// Central difference of f around x[i].
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double plus = f();
  x = saved - h;
  const double minus = f();
  x = saved;
  return (plus - minus) / (2.0 * h);
}

inline double relative_error(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / scale;
}

// softmax(Q K^T / sqrt(C)) V W_o + X with an optional per-row mask; rows
// whose mask is empty attend everywhere.
inline Eigen::MatrixXd attention(const Eigen::MatrixXd& x, const pvkit::FeatureMap& f,
                                 const pvkit::decoder::BoolMatrix& mask,
                                 const pvkit::decoder::AttentionWeights& w) {
  const int n = static_cast<int>(x.rows());
  const int c = static_cast<int>(x.cols());
  const int cs = f.channels();
  const auto pixels = static_cast<int>(f.pixels());
  Eigen::MatrixXd out = x;
  for (int i = 0; i < n; ++i) {
    std::vector<double> q(static_cast<std::size_t>(c), 0.0);
    for (int j = 0; j < c; ++j) {
      for (int k = 0; k < c; ++k) q[j] += x(i, k) * w.query(k, j);
    }
    bool any = false;
    for (int p = 0; p < pixels; ++p) any = any || mask(i, p);
    std::vector<double> score(static_cast<std::size_t>(pixels), -INFINITY);
    double peak = -INFINITY;
    for (int p = 0; p < pixels; ++p) {
      if (any && !mask(i, p)) continue;
      double s = 0.0;
      for (int j = 0; j < c; ++j) {
        double kj = 0.0;
        for (int m = 0; m < cs; ++m) kj += f.at(m, static_cast<std::size_t>(p)) * w.key(m, j);
        s += q[j] * kj;
      }
      score[p] = s / std::sqrt(static_cast<double>(c));
      peak = std::max(peak, score[p]);
    }
    double z = 0.0;
    for (int p = 0; p < pixels; ++p) z += std::isinf(score[p]) ? 0.0 : std::exp(score[p] - peak);
    std::vector<double> ctx(static_cast<std::size_t>(c), 0.0);
    for (int p = 0; p < pixels; ++p) {
      if (std::isinf(score[p])) continue;
      const double a = std::exp(score[p] - peak) / z;
      for (int j = 0; j < c; ++j) {
        double vj = 0.0;
        for (int m = 0; m < cs; ++m) vj += f.at(m, static_cast<std::size_t>(p)) * w.value(m, j);
        ctx[j] += a * vj;
      }
    }
    for (int j = 0; j < c; ++j) {
      for (int k = 0; k < c; ++k) out(i, j) += ctx[k] * w.out(k, j);
    }
  }
  return out;
}

inline std::vector<double> affine(const std::vector<double>& in, const pvkit::decoder::Linear& l,
                                  bool relu) {
  std::vector<double> out(static_cast<std::size_t>(l.weight.cols()));
  for (int j = 0; j < l.weight.cols(); ++j) {
    double s = l.bias(j);
    for (int i = 0; i < l.weight.rows(); ++i) s += in[i] * l.weight(i, j);
    out[j] = relu ? std::max(0.0, s) : s;
  }
  return out;
}

inline Eigen::MatrixXd laq_head(const Eigen::MatrixXd& x, const pvkit::decoder::LaqHead& h) {
  Eigen::MatrixXd out(x.rows(), 2);
  for (int i = 0; i < x.rows(); ++i) {
    std::vector<double> v;
    for (int j = 0; j < x.cols(); ++j) v.push_back(x(i, j));
    const auto z = affine(affine(affine(v, h.first, true), h.second, true), h.third, false);
    out(i, 0) = sigmoid(z[0]);
    out(i, 1) = sigmoid(z[1]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Depth completion on literally inverted depth
// ---------------------------------------------------------------------------

namespace completion {

using Grid = std::vector<std::vector<double>>;  // [row][col], 0 = empty

inline Grid window_op(const Grid& g, int k, bool diamond, bool take_max, bool empty_is_hole) {
  const int h = k / 2;
  const int rows = static_cast<int>(g.size());
  const int cols = static_cast<int>(g[0].size());
  Grid out(g.size(), std::vector<double>(g[0].size(), 0.0));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double best = take_max ? 0.0 : INFINITY;
      for (int dr = -h; dr <= h; ++dr) {
        for (int dc = -h; dc <= h; ++dc) {
          if (diamond && std::abs(dr) + std::abs(dc) > h) continue;
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
          const double v = g[rr][cc];
          if (take_max) {
            best = std::max(best, v);
          } else if (v == 0.0 && empty_is_hole) {
            best = 0.0;
          } else {
            best = std::min(best, v);
          }
        }
      }
      out[r][c] = best;
    }
  }
  return out;
}

inline int top_row(const Grid& g) {
  for (std::size_t r = 0; r < g.size(); ++r) {
    for (double v : g[r]) {
      if (v > 0.0) return static_cast<int>(r);
    }
  }
  return -1;
}

inline void fill_from(Grid& g, const Grid& src, int first_row) {
  for (std::size_t r = static_cast<std::size_t>(std::max(first_row, 0)); r < g.size(); ++r) {
    for (std::size_t c = 0; c < g[r].size(); ++c) {
      if (g[r][c] == 0.0) g[r][c] = src[r][c];
    }
  }
}

// One function per stage, in pipeline order, on inverted depth.
inline Grid dilate(const Grid& g) { return window_op(g, 5, true, true, false); }
inline Grid close(const Grid& g) {
  return window_op(window_op(g, 5, false, true, false), 5, false, false, true);
}
inline Grid small_fill(const Grid& g) {
  Grid out = g;
  fill_from(out, window_op(g, 7, false, true, false), 0);
  return out;
}
inline Grid extend_up(const Grid& g) {
  Grid out = g;
  const int top = top_row(g);
  if (top < 0) return out;
  for (std::size_t c = 0; c < g[0].size(); ++c) {
    for (std::size_t r = static_cast<std::size_t>(top); r < g.size(); ++r) {
      if (g[r][c] > 0.0) {
        for (std::size_t u = static_cast<std::size_t>(top); u < r; ++u) out[u][c] = g[r][c];
        break;
      }
    }
  }
  return out;
}
inline Grid large_fill(const Grid& g) {
  Grid out = g;
  const int top = top_row(g);
  if (top < 0) return out;
  for (;;) {
    fill_from(out, window_op(out, 31, false, true, false), top);
    bool dense = true;
    for (std::size_t r = static_cast<std::size_t>(top); r < out.size(); ++r) {
      for (double v : out[r]) dense = dense && v > 0.0;
    }
    if (dense) return out;
  }
}
inline Grid median(const Grid& g) {
  Grid out = g;
  const int rows = static_cast<int>(g.size());
  const int cols = static_cast<int>(g[0].size());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (g[r][c] == 0.0) continue;
      std::vector<double> w;
      for (int rr = r - 2; rr <= r + 2; ++rr) {
        for (int cc = c - 2; cc <= c + 2; ++cc) {
          if (rr >= 0 && rr < rows && cc >= 0 && cc < cols && g[rr][cc] > 0.0) w.push_back(g[rr][cc]);
        }
      }
      std::sort(w.begin(), w.end());
      out[r][c] = w[(w.size() - 1) / 2];
    }
  }
  return out;
}
inline Grid blur(const Grid& g) {
  const double taps[5] = {1, 4, 6, 4, 1};
  Grid out = g;
  const int rows = static_cast<int>(g.size());
  const int cols = static_cast<int>(g[0].size());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (g[r][c] == 0.0) continue;
      double num = 0, den = 0;
      for (int dr = -2; dr <= 2; ++dr) {
        for (int dc = -2; dc <= 2; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= rows || cc < 0 || cc >= cols || g[rr][cc] == 0.0) continue;
          num += taps[dr + 2] * taps[dc + 2] * g[rr][cc];
          den += taps[dr + 2] * taps[dc + 2];
        }
      }
      out[r][c] = num / den;
    }
  }
  return out;
}

inline Grid invert(const pvkit::depth::DepthMap& d, double cap) {
  Grid g(static_cast<std::size_t>(d.height()), std::vector<double>(static_cast<std::size_t>(d.width())));
  for (int r = 0; r < d.height(); ++r) {
    for (int c = 0; c < d.width(); ++c) {
      const double v = d.at(r, c);
      g[r][c] = (v > 0.0 && v < cap) ? cap - v : 0.0;
    }
  }
  return g;
}

inline pvkit::depth::DepthMap revert(const Grid& g, double cap) {
  pvkit::depth::DepthMap d(static_cast<int>(g[0].size()), static_cast<int>(g.size()));
  for (int r = 0; r < d.height(); ++r) {
    for (int c = 0; c < d.width(); ++c) d.at(r, c) = g[r][c] > 0.0 ? cap - g[r][c] : 0.0;
  }
  return d;
}

// Default-configuration pipeline; `stages` receives the depth after every
// stage when non-null.
inline pvkit::depth::DepthMap complete(const pvkit::depth::DepthMap& sparse,
                                       std::vector<pvkit::depth::DepthMap>* stages = nullptr) {
  constexpr double kCap = 100.0;
  Grid g = invert(sparse, kCap);
  const std::vector<Grid (*)(const Grid&)> pipeline = {dilate,   close,      small_fill, extend_up,
                                                        large_fill, median, blur};
  for (auto stage : pipeline) {
    g = stage(g);
    if (stages) stages->push_back(revert(g, kCap));
  }
  return revert(g, kCap);
}

}  // namespace completion

// Rows hit by uniformly spaced beams, by direct angle comparison.
inline std::set<int> lidar_rows(int height, double fy, double cy, int beams, double lo_deg,
                                double hi_deg) {
  const double deg = M_PI / 180.0;
  auto angle = [&](double r) { return std::atan((cy - r) / fy); };
  std::set<int> rows;
  for (int b = 0; b < beams; ++b) {
    const double beam = (lo_deg + (hi_deg - lo_deg) * b / (beams - 1)) * deg;
    if (beam > angle(-0.5) || beam < angle(height - 0.5)) continue;
    int best = -1;
    double gap = INFINITY;
    for (int r = 0; r < height; ++r) {
      const double a = angle(r);
      if (a < lo_deg * deg || a > hi_deg * deg) continue;
      if (std::abs(a - beam) < gap) {
        gap = std::abs(a - beam);
        best = r;
      }
    }
    rows.insert(best);
  }
  return rows;
}

}  // namespace oracle
