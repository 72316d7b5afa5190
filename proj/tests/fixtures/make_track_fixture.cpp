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

// Writes the query-set fixture used by the CLI track test:
//   <out>/frame_NN.json (+ tensors), <out>/manifest.json, <out>/expected_tracks.json
// Expected ids come from exhaustive assignment over all slots with the
// appearance-only cost, not from the library tracker.
//
// usage: make_track_fixture <out_dir>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include <json.hpp>

#include "oracles/oracles.hpp"
#include "pvkit/formats.hpp"
#include "pvkit/rng.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kFrames = 4;
constexpr int kSlots = 5;
constexpr int kDim = 6;
constexpr int kClasses = 3;

struct Object {
  std::vector<double> embedding;
  double x = 0.0;
  double y = 0.0;
  int first = 0;  // frames [first, last] show it
  int last = kFrames - 1;
};

std::vector<double> row_of(const Eigen::MatrixXd& m, int r) {
  std::vector<double> out;
  for (int j = 0; j < m.cols(); ++j) out.push_back(m(r, j));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <out_dir>\n", argv[0]);
    return 1;
  }
  const fs::path out = argv[1];
  fs::create_directories(out);
  pvkit::SplitMix64 rng(2026);

  std::vector<Object> objects(4);
  for (auto& o : objects) {
    for (int j = 0; j < kDim; ++j) o.embedding.push_back(rng.normal());
    o.x = rng.uniform(0.1, 0.9);
    o.y = rng.uniform(0.1, 0.9);
  }
  objects[2].last = 1;   // leaves after frame 1
  objects[3].first = 2;  // enters at frame 2

  std::vector<pvkit::decoder::QuerySet> frames;
  for (int t = 0; t < kFrames; ++t) {
    // Random slot order each frame; unused slots hold no-object noise.
    std::vector<int> order(kSlots);
    for (int i = 0; i < kSlots; ++i) order[i] = i;
    for (int i = kSlots - 1; i > 0; --i) {
      std::swap(order[i], order[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
    }
    pvkit::decoder::QuerySet q;
    q.num_classes = kClasses;
    q.mask_height = 2;
    q.mask_width = 2;
    q.embeddings = Eigen::MatrixXd(kSlots, kDim);
    q.class_logits = Eigen::MatrixXd::Zero(kSlots, kClasses + 1);
    q.centers = Eigen::MatrixXd(kSlots, 2);
    q.mask_logits = Eigen::MatrixXd::Zero(kSlots, 4);
    int next_slot = 0;
    for (std::size_t k = 0; k < objects.size(); ++k) {
      const Object& o = objects[k];
      if (t < o.first || t > o.last) continue;
      const int s = order[static_cast<std::size_t>(next_slot++)];
      for (int j = 0; j < kDim; ++j) q.embeddings(s, j) = o.embedding[j] + 0.05 * rng.normal();
      q.class_logits(s, static_cast<int>(k % kClasses)) = 4.0;
      q.centers(s, 0) = o.x + 0.01 * t;
      q.centers(s, 1) = o.y;
    }
    for (; next_slot < kSlots; ++next_slot) {
      const int s = order[static_cast<std::size_t>(next_slot)];
      for (int j = 0; j < kDim; ++j) q.embeddings(s, j) = rng.normal();
      q.class_logits(s, kClasses) = 4.0;
      q.centers(s, 0) = rng.uniform();
      q.centers(s, 1) = rng.uniform();
    }
    frames.push_back(q);
  }

  nlohmann::ordered_json manifest = {{"version", 1}, {"sampling_stride", 1}, {"frames", nlohmann::json::array()}};
  for (int t = 0; t < kFrames; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%02d.json", t);
    pvkit::formats::write_query_set(frames[static_cast<std::size_t>(t)], out / name);
    manifest["frames"].push_back({{"frame_index", t}, {"queries", name}});
  }
  pvkit::formats::write_text(manifest.dump(2) + "\n", out / "manifest.json");

  // Expected tracks: all-slot matching, alpha = 0.
  nlohmann::ordered_json expected = nlohmann::json::array();
  std::vector<std::optional<std::int64_t>> prev_ids(kSlots);
  std::int64_t next_id = 1;
  for (int t = 0; t < kFrames; ++t) {
    const auto& cur = frames[static_cast<std::size_t>(t)];
    const std::vector<bool> non_empty = cur.non_empty();
    std::vector<int> source(kSlots, -1);
    std::vector<double> cost_of(kSlots, 0.0);
    if (t > 0) {
      const auto& prev = frames[static_cast<std::size_t>(t - 1)];
      Eigen::MatrixXd cost(kSlots, kSlots);
      for (int i = 0; i < kSlots; ++i) {
        for (int j = 0; j < kSlots; ++j) {
          cost(i, j) = oracle::cosine_distance(row_of(prev.embeddings, i), row_of(cur.embeddings, j));
        }
      }
      std::vector<int> best;
      oracle::permutation_minimum(cost, &best);
      for (int i = 0; i < kSlots; ++i) {
        source[static_cast<std::size_t>(best[i])] = i;
        cost_of[static_cast<std::size_t>(best[i])] = cost(i, best[i]);
      }
    }
    std::vector<std::optional<std::int64_t>> ids(kSlots);
    nlohmann::ordered_json tracks = nlohmann::json::array();
    for (int j = 0; j < kSlots; ++j) {
      if (!non_empty[static_cast<std::size_t>(j)]) continue;
      const int from = source[static_cast<std::size_t>(j)];
      nlohmann::ordered_json cost = nullptr;
      if (from >= 0 && prev_ids[static_cast<std::size_t>(from)]) {
        ids[j] = prev_ids[static_cast<std::size_t>(from)];
        cost = cost_of[static_cast<std::size_t>(j)];
      } else {
        ids[j] = next_id++;
      }
      tracks.push_back({{"slot", j},
                        {"track_id", *ids[j]},
                        {"cost", cost},
                        {"center", {cur.centers(j, 0), cur.centers(j, 1)}}});
    }
    expected.push_back({{"frame", t}, {"tracks", tracks}});
    prev_ids = ids;
  }
  pvkit::formats::write_text(expected.dump(2) + "\n", out / "expected_tracks.json");
  return 0;
}
