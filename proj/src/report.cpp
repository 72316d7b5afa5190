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

#include "pvkit/report.hpp"

namespace pvkit::report {

namespace {

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json toolkit_info() { return {{"name", "pvkit"}, {"version", toolkit_version()}}; }

Json scores(const metrics::GroupScores& s) {
  return {{"all", optional_number(s.all)},
          {"things", optional_number(s.things)},
          {"stuff", optional_number(s.stuff)}};
}

Json pq_json(const metrics::PqResult& result, const metrics::CategoryTable& cats) {
  Json out = scores(result.pq);
  out["sq"] = scores(result.sq);
  out["rq"] = scores(result.rq);
  out["per_class"] = Json::array();
  for (const auto& [cat, s] : result.per_class) {
    const auto it = cats.find(cat);
    Json row;
    row["category_id"] = cat;
    row["name"] = it == cats.end() ? std::to_string(cat) : it->second.name;
    row["is_thing"] = it != cats.end() && it->second.is_thing;
    row["pq"] = s.participates() ? Json(s.pq()) : Json(nullptr);
    row["sq"] = s.participates() ? Json(s.sq()) : Json(nullptr);
    row["rq"] = s.participates() ? Json(s.rq()) : Json(nullptr);
    row["tp"] = s.tp;
    row["fp"] = s.fp;
    row["fn"] = s.fn;
    row["iou_sum"] = s.iou_sum;
    out["per_class"].push_back(std::move(row));
  }
  return out;
}

Json vpq_json(const metrics::VpqResult& result) {
  Json out;
  out["mean"] = scores(result.mean);
  out["per_k"] = Json::array();
  for (const metrics::VpqAtK& at : result.per_k) {
    Json row;
    row["k"] = at.k;
    row["window"] = at.window;
    row["windows"] = at.windows;
    row["present"] = at.present;
    const Json s = scores(at.scores);
    row["all"] = s["all"];
    row["things"] = s["things"];
    row["stuff"] = s["stuff"];
    out["per_k"].push_back(std::move(row));
  }
  return out;
}

Json tracks_json(const std::vector<std::vector<tracking::QueryTracker::Entry>>& frames) {
  Json out = Json::array();
  for (std::size_t t = 0; t < frames.size(); ++t) {
    Json tracks = Json::array();
    for (const auto& e : frames[t]) {
      tracks.push_back({{"slot", e.slot},
                        {"track_id", e.track_id},
                        {"cost", optional_number(e.cost)},
                        {"center", {e.center_x, e.center_y}}});
    }
    out.push_back({{"frame", t}, {"tracks", std::move(tracks)}});
  }
  return out;
}

}  // namespace pvkit::report
