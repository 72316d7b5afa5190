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

#include "pvkit/demo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "pvkit/decoder.hpp"
#include "pvkit/formats.hpp"
#include "pvkit/fusion.hpp"
#include "pvkit/rng.hpp"

namespace pvkit::demo {

namespace {

constexpr int kWidth = 128;
constexpr int kHeight = 64;
constexpr int kImageChannels = 8;
constexpr int kDepthChannels = 8;
constexpr int kScales = 4;

constexpr int kRoad = 1;
constexpr int kSky = 2;
constexpr int kCar = 3;
constexpr int kPerson = 4;

struct Box {
  metrics::SegmentId id;
  int category;
  int top, bottom, left, right;  // inclusive rows, exclusive right
  int dx;                        // columns per frame
  double depth;
};

double mean_abs_error(const depth::DepthMap& a, const depth::DepthMap& b, int first_row) {
  double sum = 0.0;
  std::size_t n = 0;
  for (int r = first_row; r < a.height(); ++r) {
    for (int c = 0; c < a.width(); ++c) {
      if (a.valid(r, c) && b.valid(r, c)) {
        sum += std::abs(a.at(r, c) - b.at(r, c));
        ++n;
      }
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

// Per-pixel image features: a class embedding plus an instance offset and
// noise.
FeatureMap image_features(const metrics::PanopticMap& gt, SplitMix64& rng,
                          const std::map<int, std::vector<double>>& class_codes) {
  FeatureMap f(kImageChannels, gt.height(), gt.width());
  for (std::size_t p = 0; p < gt.pixels(); ++p) {
    const metrics::SegmentId id = gt.id(p);
    const int cat = id == metrics::kVoid ? 0 : gt.segment(id).category_id;
    const std::vector<double>& code = class_codes.at(cat);
    for (int c = 0; c < kImageChannels; ++c) {
      const double instance = 0.1 * std::sin(0.7 * static_cast<double>(id) * (c + 1));
      f.at(c, p) = code[static_cast<std::size_t>(c)] + instance + 0.05 * rng.normal();
    }
  }
  return f;
}

FeatureMap depth_features(const depth::DepthMap& d, const std::vector<double>& gains,
                          const std::vector<double>& offsets) {
  FeatureMap f(kDepthChannels, d.height(), d.width());
  for (int r = 0; r < d.height(); ++r) {
    for (int c = 0; c < d.width(); ++c) {
      const double z = d.valid(r, c) ? d.at(r, c) / 20.0 : 0.0;
      for (int k = 0; k < kDepthChannels; ++k) {
        f.at(k, r, c) = std::tanh(gains[static_cast<std::size_t>(k)] * z +
                                  offsets[static_cast<std::size_t>(k)]);
      }
    }
  }
  return f;
}

std::vector<FeatureMap> pyramid(FeatureMap finest) {
  std::vector<FeatureMap> levels{std::move(finest)};
  while (static_cast<int>(levels.size()) < kScales) levels.push_back(downsample2x(levels.back()));
  return levels;
}

}  // namespace

SyntheticSequence make_sequence(int frames) {
  SyntheticSequence seq;
  seq.intrinsics = {114.5, 114.5, 64.0, 6.0, 0.22};
  seq.categories = {{kRoad, {"road", false}},
                    {kSky, {"sky", false}},
                    {kCar, {"car", true}},
                    {kPerson, {"person", true}}};
  const std::vector<Box> boxes = {
      {10, kCar, 30, 45, 10, 34, 4, 12.0},
      {11, kCar, 36, 52, 80, 104, -3, 18.0},
      {12, kPerson, 24, 44, 56, 62, 2, 9.0},
  };
  for (int t = 0; t < frames; ++t) {
    std::vector<metrics::SegmentId> ids(static_cast<std::size_t>(kWidth) * kHeight);
    depth::DepthMap dense(kWidth, kHeight);
    for (int r = 0; r < kHeight; ++r) {
      for (int c = 0; c < kWidth; ++c) {
        const bool sky = r < 20;
        ids[static_cast<std::size_t>(r) * kWidth + c] = sky ? 1 : 2;
        dense.at(r, c) = sky ? 80.0 : 5.0 + (kHeight - 1 - r) * 0.6;
      }
    }
    for (const Box& b : boxes) {
      for (int r = b.top; r <= b.bottom; ++r) {
        for (int c = b.left + b.dx * t; c < b.right + b.dx * t; ++c) {
          if (c < 0 || c >= kWidth) continue;
          ids[static_cast<std::size_t>(r) * kWidth + c] = b.id;
          dense.at(r, c) = b.depth;
        }
      }
    }
    std::vector<metrics::SegmentInfo> segments = {{1, kSky, false}, {2, kRoad, false}};
    for (const Box& b : boxes) segments.push_back({b.id, b.category, true});
    seq.panoptic.emplace_back(kWidth, kHeight, std::move(ids), std::move(segments));
    seq.depth.push_back(std::move(dense));
  }
  return seq;
}

report::Json run_demo(const DemoOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const SyntheticSequence seq = make_sequence();
  const auto frames = seq.depth.size();
  SplitMix64 rng(options.seed);

  if (options.output_dir) std::filesystem::create_directories(*options.output_dir);
  auto out_path = [&](const std::string& name) { return *options.output_dir / name; };

  // Fixed per-run feature generators.
  std::map<int, std::vector<double>> class_codes;
  for (int cat = 0; cat <= kPerson; ++cat) {
    std::vector<double>& code = class_codes[cat];
    for (int c = 0; c < kImageChannels; ++c) code.push_back(rng.normal());
  }
  std::vector<double> gains;
  std::vector<double> offsets;
  for (int k = 0; k < kDepthChannels; ++k) {
    gains.push_back(rng.uniform(-2.0, 2.0));
    offsets.push_back(rng.uniform(-1.0, 1.0));
  }
  std::vector<fusion::FusionParams> fusion_params;
  for (int l = 0; l < kScales; ++l) {
    fusion_params.push_back(
        fusion::FusionParams::random(kImageChannels, kDepthChannels, rng.next(), 1.0));
  }

  decoder::DecoderConfig dcfg;
  dcfg.layers = 3;
  dcfg.num_queries = 8;
  dcfg.embed_dim = 16;
  dcfg.num_classes = static_cast<int>(seq.categories.size());
  dcfg.seed = rng.next();
  std::vector<decoder::ScaleShape> shapes;
  for (int l = 0, h = kHeight, w = kWidth; l < kScales; ++l, h = (h + 1) / 2, w = (w + 1) / 2) {
    shapes.push_back({kImageChannels, h, w});
  }
  const decoder::DecoderWeights weights = decoder::DecoderWeights::init(dcfg, shapes);
  const decoder::QuerySet learned = decoder::initial_queries(dcfg, weights);

  depth::LidarSimConfig lidar;
  lidar.seed = rng.next();
  const depth::CompletionConfig completion;

  std::vector<int> category_of_class;
  for (const auto& [id, cat] : seq.categories) category_of_class.push_back(id);

  tracking::QueryTracker tracker({options.alpha_position, options.scope});
  std::vector<std::vector<tracking::QueryTracker::Entry>> track_frames;
  std::vector<metrics::PanopticMap> predictions;
  report::Json depth_report = report::Json::array();
  report::Json decode_report = report::Json::array();
  decoder::QuerySet previous;

  for (std::size_t t = 0; t < frames; ++t) {
    // Depth: stereo disparity -> depth -> simulated LiDAR -> completion.
    const depth::RawImage16 disparity = depth::depth_to_disparity(seq.depth[t], seq.intrinsics);
    const depth::DepthMap stereo = depth::disparity_to_depth(disparity, seq.intrinsics);
    const depth::DepthMap scan = depth::simulate_lidar(stereo, seq.intrinsics, lidar);
    const depth::DepthMap sparse = depth::ray_drop(scan, lidar.keep_ratio, lidar.seed + t);
    const depth::DepthMap completed = depth::complete_depth(sparse, completion);
    const int top = completed.top_valid_row().value_or(0);
    depth_report.push_back({{"frame", t},
                            {"stereo_mae_m", mean_abs_error(stereo, seq.depth[t], 0)},
                            {"lidar_rows", depth::lidar_rows(kHeight, seq.intrinsics, lidar).size()},
                            {"sparse_valid", sparse.valid_count()},
                            {"completed_valid", completed.valid_count()},
                            {"completion_mae_m", mean_abs_error(completed, stereo, top)}});

    // Features and fusion.
    const std::vector<FeatureMap> image = pyramid(image_features(seq.panoptic[t], rng, class_codes));
    const std::vector<FeatureMap> depthf = pyramid(depth_features(completed, gains, offsets));
    const std::vector<FeatureMap> fused = fusion::multi_scale_fuse(image, depthf, fusion_params);

    // Decoding with time-aware query reuse.
    const decoder::QuerySet init =
        (options.taq && t > 0) ? decoder::taq_select(previous, learned) : learned;
    const decoder::QuerySet out = decoder::run_decoder(init, fused, dcfg, weights);
    const std::vector<bool> non_empty = out.non_empty();
    const std::vector<bool> reused =
        (options.taq && t > 0) ? previous.non_empty() : std::vector<bool>{};
    decode_report.push_back({{"frame", t},
                             {"non_empty", std::count(non_empty.begin(), non_empty.end(), true)},
                             {"reused_slots", std::count(reused.begin(), reused.end(), true)}});
    previous = out;

    // Tracking and panoptic inference.
    const auto entries = tracker.step(out);
    track_frames.push_back(entries);
    std::map<int, tracking::TrackId> track_of_slot;
    for (const auto& e : entries) track_of_slot[e.slot] = e.track_id;
    const std::vector<int> owner = decoder::assign_pixels(out);
    const std::vector<int> classes = out.predicted_classes();
    std::vector<metrics::SegmentId> ids(owner.size(), metrics::kVoid);
    std::map<metrics::SegmentId, metrics::SegmentInfo> segments;
    for (std::size_t p = 0; p < owner.size(); ++p) {
      if (owner[p] < 0) continue;
      const auto id = static_cast<metrics::SegmentId>(track_of_slot.at(owner[p]));
      const int cat = category_of_class[static_cast<std::size_t>(classes[static_cast<std::size_t>(owner[p])])];
      ids[p] = id;
      segments[id] = {id, cat, seq.categories.at(cat).is_thing};
    }
    std::vector<metrics::SegmentInfo> infos;
    for (const auto& [id, info] : segments) infos.push_back(info);
    predictions.emplace_back(out.mask_width, out.mask_height, std::move(ids), std::move(infos));

    if (options.output_dir) {
      formats::write_depth_png(seq.depth[t], out_path(fmt::format("frame_{:02}_depth.png", t)));
      formats::write_png16(disparity, out_path(fmt::format("frame_{:02}_disparity.png", t)));
      formats::write_depth_png(sparse, out_path(fmt::format("frame_{:02}_lidar.png", t)));
      formats::write_depth_png(completed, out_path(fmt::format("frame_{:02}_completed.png", t)));
      formats::write_panoptic(seq.panoptic[t], out_path(fmt::format("frame_{:02}_gt.png", t)),
                              out_path(fmt::format("frame_{:02}_gt.json", t)));
      formats::write_panoptic(predictions.back(), out_path(fmt::format("frame_{:02}_pred.png", t)),
                              out_path(fmt::format("frame_{:02}_pred.json", t)));
      formats::write_query_set(out, out_path(fmt::format("frame_{:02}_queries.json", t)));
    }
  }

  metrics::VpqConfig vcfg;
  vcfg.threads = options.threads;
  const metrics::PqResult self_pq = metrics::compute_pq(seq.panoptic, seq.panoptic, seq.categories);
  const metrics::VpqResult self_vpq =
      metrics::compute_vpq(seq.panoptic, seq.panoptic, seq.categories, vcfg);
  const metrics::PqResult model_pq = metrics::compute_pq(predictions, seq.panoptic, seq.categories);
  const metrics::VpqResult model_vpq =
      metrics::compute_vpq(predictions, seq.panoptic, seq.categories, vcfg);

  report::Json rep;
  rep["toolkit"] = report::toolkit_info();
  rep["config"] = {{"seed", options.seed},
                   {"threads", options.threads},
                   {"taq", options.taq},
                   {"alpha", options.alpha_position},
                   {"scope", options.scope == tracking::MatchScope::kAllSlots ? "all" : "non-empty"},
                   {"frames", frames},
                   {"width", kWidth},
                   {"height", kHeight},
                   {"lidar", {{"beams", lidar.beams},
                              {"fov_deg", {lidar.fov_min_deg, lidar.fov_max_deg}},
                              {"keep_ratio", lidar.keep_ratio}}},
                   {"decoder", {{"layers", dcfg.layers},
                                {"queries", dcfg.num_queries},
                                {"embed_dim", dcfg.embed_dim},
                                {"classes", dcfg.num_classes}}}};
  rep["depth"] = std::move(depth_report);
  rep["decode"] = std::move(decode_report);
  rep["tracks"] = report::tracks_json(track_frames);
  rep["self_check"] = {{"pq", report::pq_json(self_pq, seq.categories)},
                       {"vpq", report::vpq_json(self_vpq)}};
  rep["model"] = {{"pq", report::pq_json(model_pq, seq.categories)},
                  {"vpq", report::vpq_json(model_vpq)}};
  rep["elapsed_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (options.output_dir) {
    formats::write_categories(seq.categories, out_path("categories.json"));
    formats::write_text(report::Json(rep["tracks"]).dump(2) + "\n", out_path("tracks.json"));
    formats::write_text(rep.dump(2) + "\n", out_path("report.json"));
  }
  return rep;
}

}  // namespace pvkit::demo
