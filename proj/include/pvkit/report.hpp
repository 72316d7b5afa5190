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

#include <string>
#include <vector>

#include <json.hpp>

#include "pvkit/metrics.hpp"
#include "pvkit/tracking.hpp"

namespace pvkit::report {

using Json = nlohmann::ordered_json;

inline std::string toolkit_version() { return PVKIT_VERSION; }

// {"name": "pvkit", "version": ...}
Json toolkit_info();

// Optional scores become null.
Json scores(const metrics::GroupScores& s);

// {"all", "things", "stuff", "per_class": [...]}
Json pq_json(const metrics::PqResult& result, const metrics::CategoryTable& cats);

// {"mean": {"all", "things", "stuff"}, "per_k": [{"k", "window", "windows",
//  "present", "all", "things", "stuff"}, ...]}
Json vpq_json(const metrics::VpqResult& result);

// [{"frame": t, "tracks": [{"slot", "track_id", "cost", "center"}, ...]}, ...]
Json tracks_json(const std::vector<std::vector<tracking::QueryTracker::Entry>>& frames);

}  // namespace pvkit::report
