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

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "pvkit/decoder.hpp"
#include "pvkit/demo.hpp"
#include "pvkit/depth.hpp"
#include "pvkit/error.hpp"
#include "pvkit/formats.hpp"
#include "pvkit/fusion.hpp"
#include "pvkit/metrics.hpp"
#include "pvkit/report.hpp"
#include "pvkit/tracking.hpp"

namespace fs = std::filesystem;
using pvkit::report::Json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string log_level;
};

Json base_report(const std::string& command, const Globals& g) {
  Json r;
  r["toolkit"] = pvkit::report::toolkit_info();
  r["command"] = command;
  r["config"] = {{"seed", g.seed}, {"threads", g.threads}};
  return r;
}

void emit(const Json& report, const std::optional<std::string>& path) {
  const std::string text = report.dump(2) + "\n";
  if (path) {
    pvkit::formats::write_text(text, *path);
    spdlog::info("wrote {}", *path);
  } else {
    std::cout << text;
  }
}

pvkit::formats::DepthPngMode parse_png_mode(const std::string& s) {
  if (s == "depth256") return pvkit::formats::DepthPngMode::kDepth256;
  if (s == "disparity") return pvkit::formats::DepthPngMode::kCityscapesDisparity;
  throw pvkit::ValidationError("--mode must be depth256 or disparity, got '" + s + "'");
}

pvkit::tracking::MatchScope parse_scope(const std::string& s) {
  if (s == "all") return pvkit::tracking::MatchScope::kAllSlots;
  if (s == "non-empty") return pvkit::tracking::MatchScope::kNonEmptyOnly;
  throw pvkit::ValidationError("--scope must be all or non-empty, got '" + s + "'");
}

std::string scope_name(pvkit::tracking::MatchScope s) {
  return s == pvkit::tracking::MatchScope::kAllSlots ? "all" : "non-empty";
}

std::vector<int> parse_ks(const std::string& s) {
  std::vector<int> ks;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = std::min(s.find(',', start), s.size());
    const std::string item = s.substr(start, comma - start);
    try {
      std::size_t used = 0;
      const int k = std::stoi(item, &used);
      if (used != item.size() || k < 0) throw std::invalid_argument(item);
      ks.push_back(k);
    } catch (const std::exception&) {
      throw pvkit::ValidationError("--ks: '" + item + "' is not a non-negative integer");
    }
    start = comma + 1;
  }
  return ks;
}

Json depth_summary(const pvkit::depth::DepthMap& d) {
  Json j = {{"width", d.width()}, {"height", d.height()}, {"valid", d.valid_count()}};
  if (const auto range = d.valid_range()) {
    j["min_m"] = range->first;
    j["max_m"] = range->second;
  }
  return j;
}

// A panoptic sequence is either a manifest (.json) listing panoptic +
// segments_info pairs, or a directory of <stem>.png files with <stem>.json
// sidecars, ordered by file name.
struct PanopticSequence {
  std::vector<pvkit::metrics::PanopticMap> frames;
  std::optional<int> stride;
};

PanopticSequence load_panoptic_sequence(const fs::path& path, const std::string& flag) {
  PanopticSequence seq;
  if (fs::is_directory(path)) {
    std::vector<fs::path> pngs;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.path().extension() == ".png") pngs.push_back(entry.path());
    }
    std::sort(pngs.begin(), pngs.end());
    if (pngs.empty()) throw pvkit::IoError(flag + ": no .png files in " + path.string());
    for (const fs::path& png : pngs) {
      fs::path sidecar = png;
      sidecar.replace_extension(".json");
      seq.frames.push_back(pvkit::formats::read_panoptic(png, sidecar));
    }
    return seq;
  }
  if (!fs::exists(path)) throw pvkit::IoError(flag + ": " + path.string() + " does not exist");
  const pvkit::formats::SequenceManifest m = pvkit::formats::read_manifest(path);
  seq.stride = m.sampling_stride;
  for (const auto& f : m.frames) {
    if (!f.panoptic_path || !f.segments_info_path) {
      throw pvkit::ValidationError(fmt::format("{}: frame {} lacks panoptic/segments_info", flag,
                                               f.frame_index));
    }
    seq.frames.push_back(pvkit::formats::read_panoptic(m.resolve(*f.panoptic_path),
                                                       m.resolve(*f.segments_info_path)));
  }
  return seq;
}

pvkit::metrics::CategoryTable load_categories(const std::optional<std::string>& path,
                                              const std::vector<pvkit::metrics::PanopticMap>& gt,
                                              const std::vector<pvkit::metrics::PanopticMap>& pred) {
  if (path) return pvkit::formats::read_categories(*path);
  std::vector<pvkit::metrics::PanopticMap> all = gt;
  all.insert(all.end(), pred.begin(), pred.end());
  return pvkit::metrics::infer_categories(all);
}

std::vector<pvkit::FeatureMap> build_pyramid(pvkit::FeatureMap finest, int scales) {
  std::vector<pvkit::FeatureMap> levels{std::move(finest)};
  while (static_cast<int>(levels.size()) < scales) {
    levels.push_back(pvkit::downsample2x(levels.back()));
  }
  return levels;
}

spdlog::level::level_enum parse_log_level(const std::string& s) {
  const auto level = spdlog::level::from_str(s);
  if (level == spdlog::level::off && s != "off") {
    throw pvkit::ValidationError("--log-level: unknown level '" + s + "'");
  }
  return level;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pvkit: depth-aware video panoptic segmentation toolkit"};
  app.set_version_flag("--version", pvkit::report::toolkit_version());
  app.require_subcommand(1);

  Globals g;
  const char* env_level = std::getenv("PVKIT_LOG");
  g.log_level = env_level ? env_level : "warn";
  app.add_option("--seed", g.seed, "Seed for every stochastic step")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads for window evaluation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off (env PVKIT_LOG)")
      ->capture_default_str();

  std::function<Json()> run;

  // depth ------------------------------------------------------------------
  auto* depth_cmd = app.add_subcommand("depth", "Depth conversion, LiDAR simulation, completion");
  depth_cmd->require_subcommand(1);

  struct {
    std::string input, output, intrinsics, mode = "depth256";
    std::optional<std::string> report;
    pvkit::depth::LidarSimConfig lidar;
  } sim;
  auto* sim_cmd = depth_cmd->add_subcommand("simulate", "Sample LiDAR rows and apply ray drop");
  sim_cmd->add_option("--input", sim.input, "Dense depth PNG")->required();
  sim_cmd->add_option("--mode", sim.mode, "Input PNG encoding: depth256|disparity")
      ->capture_default_str();
  sim_cmd->add_option("--intrinsics", sim.intrinsics, "Camera intrinsics JSON")->required();
  sim_cmd->add_option("--output", sim.output, "Sparse depth PNG (depth256)")->required();
  sim_cmd->add_option("--beams", sim.lidar.beams)->capture_default_str();
  sim_cmd->add_option("--fov-min", sim.lidar.fov_min_deg, "Degrees")->capture_default_str();
  sim_cmd->add_option("--fov-max", sim.lidar.fov_max_deg, "Degrees")->capture_default_str();
  sim_cmd->add_option("--keep", sim.lidar.keep_ratio, "Ray-drop keep probability")
      ->capture_default_str();
  sim_cmd->add_option("--report", sim.report, "Report JSON (stdout when omitted)");
  sim_cmd->callback([&] {
    run = [&] {
      sim.lidar.seed = g.seed;
      const auto intr = pvkit::formats::read_intrinsics(sim.intrinsics);
      const auto dense =
          parse_png_mode(sim.mode) == pvkit::formats::DepthPngMode::kDepth256
              ? pvkit::formats::read_depth_png(sim.input)
              : pvkit::depth::disparity_to_depth(pvkit::formats::read_png16(sim.input), intr);
      sim.lidar.validate(dense.height());
      const auto rows = pvkit::depth::lidar_rows(dense.height(), intr, sim.lidar);
      const auto scan = pvkit::depth::simulate_lidar(dense, intr, sim.lidar);
      const auto sparse = pvkit::depth::ray_drop(scan, sim.lidar.keep_ratio, sim.lidar.seed);
      pvkit::formats::write_depth_png(sparse, sim.output);
      Json r = base_report("depth simulate", g);
      r["config"].update({{"input", sim.input},
                          {"mode", sim.mode},
                          {"intrinsics", sim.intrinsics},
                          {"output", sim.output},
                          {"beams", sim.lidar.beams},
                          {"fov_deg", {sim.lidar.fov_min_deg, sim.lidar.fov_max_deg}},
                          {"keep_ratio", sim.lidar.keep_ratio}});
      r["rows"] = rows;
      r["scan"] = depth_summary(scan);
      r["output"] = depth_summary(sparse);
      return r;
    };
  });

  struct {
    std::string input, output;
    std::optional<std::string> report;
    pvkit::depth::CompletionConfig cfg;
    bool no_blur = false;
  } comp;
  auto* comp_cmd = depth_cmd->add_subcommand("complete", "Morphological completion of sparse depth");
  comp_cmd->add_option("--input", comp.input, "Sparse depth PNG (depth256)")->required();
  comp_cmd->add_option("--output", comp.output, "Dense depth PNG (depth256)")->required();
  comp_cmd->add_option("--max-depth", comp.cfg.max_depth, "Meters")->capture_default_str();
  comp_cmd->add_option("--large-kernel", comp.cfg.large_fill_kernel)->capture_default_str();
  comp_cmd->add_flag("--no-blur", comp.no_blur, "Skip the final blur");
  comp_cmd->add_option("--report", comp.report, "Report JSON (stdout when omitted)");
  comp_cmd->callback([&] {
    run = [&] {
      comp.cfg.enable_blur = !comp.no_blur;
      const auto sparse = pvkit::formats::read_depth_png(comp.input);
      const auto dense = pvkit::depth::complete_depth(sparse, comp.cfg);
      pvkit::formats::write_depth_png(dense, comp.output);
      Json r = base_report("depth complete", g);
      r["config"].update({{"input", comp.input},
                          {"output", comp.output},
                          {"kernels",
                           {{"dilation", comp.cfg.dilation_kernel},
                            {"close", comp.cfg.close_kernel},
                            {"small_fill", comp.cfg.small_fill_kernel},
                            {"large_fill", comp.cfg.large_fill_kernel},
                            {"median", comp.cfg.median_kernel},
                            {"blur", comp.cfg.blur_kernel}}},
                          {"blur", comp.cfg.enable_blur},
                          {"max_depth", comp.cfg.max_depth}});
      r["input"] = depth_summary(sparse);
      r["output"] = depth_summary(dense);
      return r;
    };
  });

  struct {
    std::string input, output, intrinsics;
    std::optional<std::string> report;
  } disp;
  auto* disp_cmd = depth_cmd->add_subcommand("from-disparity", "Convert a disparity PNG to depth");
  disp_cmd->add_option("--input", disp.input, "16-bit disparity PNG, (v - 1) / 256")->required();
  disp_cmd->add_option("--intrinsics", disp.intrinsics, "Camera intrinsics JSON")->required();
  disp_cmd->add_option("--output", disp.output, "Depth PNG (depth256)")->required();
  disp_cmd->add_option("--report", disp.report, "Report JSON (stdout when omitted)");
  disp_cmd->callback([&] {
    run = [&] {
      const auto intr = pvkit::formats::read_intrinsics(disp.intrinsics);
      const auto d = pvkit::depth::disparity_to_depth(pvkit::formats::read_png16(disp.input), intr);
      pvkit::formats::write_depth_png(d, disp.output);
      Json r = base_report("depth from-disparity", g);
      r["config"].update(
          {{"input", disp.input}, {"intrinsics", disp.intrinsics}, {"output", disp.output}});
      r["output"] = depth_summary(d);
      return r;
    };
  });

  // fuse -------------------------------------------------------------------
  struct {
    std::string image, depth, output, mode = "dynamic";
    std::optional<std::string> params, report;
    double gamma = 1.0;
  } fuse;
  auto* fuse_cmd = app.add_subcommand("fuse", "Depth-gated fusion of one feature scale");
  fuse_cmd->add_option("--image", fuse.image, "Image features, C_I x H x W tensor")->required();
  fuse_cmd->add_option("--depth", fuse.depth, "Depth features, C_D x H x W tensor")->required();
  fuse_cmd->add_option("--params", fuse.params, "Fusion parameter JSON (random from --seed if omitted)");
  fuse_cmd->add_option("--gamma", fuse.gamma, "Initial gamma for random parameters")
      ->capture_default_str();
  fuse_cmd->add_option("--mode", fuse.mode, "dynamic|sum")->capture_default_str();
  fuse_cmd->add_option("--output", fuse.output, "Fused tensor")->required();
  fuse_cmd->add_option("--report", fuse.report, "Report JSON (stdout when omitted)");
  fuse_cmd->callback([&] {
    run = [&] {
      if (fuse.mode != "dynamic" && fuse.mode != "sum") {
        throw pvkit::ValidationError("--mode must be dynamic or sum, got '" + fuse.mode + "'");
      }
      const auto image = pvkit::formats::to_feature_map(pvkit::formats::read_tensor(fuse.image));
      const auto depth = pvkit::formats::to_feature_map(pvkit::formats::read_tensor(fuse.depth));
      pvkit::FeatureMap out;
      if (fuse.mode == "sum") {
        out = pvkit::fusion::fuse_sum(image, depth);
      } else {
        const auto params =
            fuse.params ? pvkit::formats::read_fusion_params(*fuse.params)
                        : pvkit::fusion::FusionParams::random(image.channels(), depth.channels(),
                                                              g.seed, fuse.gamma);
        out = pvkit::fusion::fuse_features(image, depth, params);
      }
      pvkit::formats::write_tensor(pvkit::formats::to_tensor(out), fuse.output);
      Json r = base_report("fuse", g);
      r["config"].update({{"image", fuse.image},
                          {"depth", fuse.depth},
                          {"params", fuse.params ? Json(*fuse.params) : Json(nullptr)},
                          {"gamma", fuse.gamma},
                          {"mode", fuse.mode},
                          {"output", fuse.output}});
      r["shape"] = {out.channels(), out.height(), out.width()};
      return r;
    };
  });

  // decode -----------------------------------------------------------------
  struct {
    std::vector<std::string> inputs;
    std::string output_dir;
    std::optional<std::string> report;
    pvkit::decoder::DecoderConfig cfg;
    int scales = 3;
    bool taq = false;
  } dec;
  auto* dec_cmd = app.add_subcommand("decode", "Toy masked-attention decoder over frame features");
  dec_cmd->add_option("--input", dec.inputs, "Per-frame C x H x W feature tensor, in frame order")
      ->required();
  dec_cmd->add_option("--output-dir", dec.output_dir, "Directory for frame_NN query sets")->required();
  dec_cmd->add_option("--scales", dec.scales, "Pyramid levels built by 2x pooling")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  dec_cmd->add_option("--layers", dec.cfg.layers)->capture_default_str();
  dec_cmd->add_option("--queries", dec.cfg.num_queries)->capture_default_str();
  dec_cmd->add_option("--embed-dim", dec.cfg.embed_dim)->capture_default_str();
  dec_cmd->add_option("--classes", dec.cfg.num_classes)->capture_default_str();
  dec_cmd->add_flag("--taq", dec.taq, "Reuse non-empty output queries as the next frame's init");
  dec_cmd->add_option("--report", dec.report, "Report JSON (stdout when omitted)");
  dec_cmd->callback([&] {
    run = [&] {
      dec.cfg.seed = g.seed;
      dec.cfg.validate();
      std::vector<std::vector<pvkit::FeatureMap>> frames;
      for (const std::string& in : dec.inputs) {
        frames.push_back(build_pyramid(
            pvkit::formats::to_feature_map(pvkit::formats::read_tensor(in)), dec.scales));
      }
      const auto shapes = pvkit::decoder::shapes_of(frames.front());
      const auto weights = pvkit::decoder::DecoderWeights::init(dec.cfg, shapes);
      const auto learned = pvkit::decoder::initial_queries(dec.cfg, weights);
      fs::create_directories(dec.output_dir);
      Json rows = Json::array();
      pvkit::decoder::QuerySet prev;
      for (std::size_t t = 0; t < frames.size(); ++t) {
        const bool reuse = dec.taq && t > 0;
        const auto init = reuse ? pvkit::decoder::taq_select(prev, learned) : learned;
        const auto out = pvkit::decoder::run_decoder(init, frames[t], dec.cfg, weights);
        const fs::path sidecar = fs::path(dec.output_dir) / fmt::format("frame_{:02}.json", t);
        pvkit::formats::write_query_set(out, sidecar);
        const auto ne = out.non_empty();
        rows.push_back({{"frame", t},
                        {"queries", sidecar.string()},
                        {"non_empty", std::count(ne.begin(), ne.end(), true)}});
        prev = out;
      }
      Json r = base_report("decode", g);
      r["config"].update({{"inputs", dec.inputs},
                          {"output_dir", dec.output_dir},
                          {"scales", dec.scales},
                          {"layers", dec.cfg.layers},
                          {"queries", dec.cfg.num_queries},
                          {"embed_dim", dec.cfg.embed_dim},
                          {"classes", dec.cfg.num_classes},
                          {"taq", dec.taq}});
      r["frames"] = std::move(rows);
      return r;
    };
  });

  // track ------------------------------------------------------------------
  struct {
    std::vector<std::string> queries;
    std::optional<std::string> manifest, output;
    double alpha = 0.0;
    std::string scope = "all";
  } trk;
  auto* trk_cmd = app.add_subcommand("track", "Link query slots across frames");
  trk_cmd->add_option("--queries", trk.queries, "Query-set sidecars, in frame order");
  trk_cmd->add_option("--manifest", trk.manifest, "Sequence manifest with per-frame queries");
  trk_cmd->add_option("--alpha", trk.alpha, "Weight of the centre-distance cost")
      ->capture_default_str();
  trk_cmd->add_option("--scope", trk.scope, "all|non-empty")->capture_default_str();
  trk_cmd->add_option("--output", trk.output, "tracks.json (stdout when omitted)");
  trk_cmd->callback([&] {
    run = [&] {
      std::vector<fs::path> paths(trk.queries.begin(), trk.queries.end());
      if (trk.manifest) {
        if (!paths.empty()) throw pvkit::ValidationError("--queries and --manifest are exclusive");
        const auto m = pvkit::formats::read_manifest(*trk.manifest);
        for (const auto& f : m.frames) {
          if (!f.queries_path) {
            throw pvkit::ValidationError(
                fmt::format("--manifest: frame {} has no queries", f.frame_index));
          }
          paths.push_back(m.resolve(*f.queries_path));
        }
      }
      if (paths.empty()) throw pvkit::ValidationError("one of --queries or --manifest is required");
      pvkit::tracking::QueryTracker tracker({trk.alpha, parse_scope(trk.scope)});
      tracker.config().validate();
      std::vector<std::vector<pvkit::tracking::QueryTracker::Entry>> frames;
      for (const fs::path& p : paths) frames.push_back(tracker.step(pvkit::formats::read_query_set(p)));
      Json r = base_report("track", g);
      r["config"].update({{"alpha", trk.alpha}, {"scope", scope_name(tracker.config().scope)}});
      r["frames"] = pvkit::report::tracks_json(frames);
      return r;
    };
  });

  // eval -------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Panoptic and video panoptic quality");
  eval_cmd->require_subcommand(1);

  struct {
    std::string pred, gt;
    std::optional<std::string> categories, output;
    std::string ks = "0,5,10,15", averaging = "window-then-class";
    std::optional<int> stride;
  } ev;
  auto add_eval_inputs = [&](CLI::App* cmd) {
    cmd->add_option("--pred", ev.pred, "Prediction directory or manifest")->required();
    cmd->add_option("--gt", ev.gt, "Ground-truth directory or manifest")->required();
    cmd->add_option("--categories", ev.categories, "Category JSON (inferred when omitted)");
    cmd->add_option("--output", ev.output, "Report JSON (stdout when omitted)");
  };
  auto load_pair = [&] {
    auto pred = load_panoptic_sequence(ev.pred, "--pred");
    auto gt = load_panoptic_sequence(ev.gt, "--gt");
    if (pred.frames.size() != gt.frames.size()) {
      throw pvkit::ValidationError(fmt::format("--pred has {} frames but --gt has {}",
                                               pred.frames.size(), gt.frames.size()));
    }
    return std::make_pair(std::move(pred), std::move(gt));
  };

  auto* pq_cmd = eval_cmd->add_subcommand("pq", "Image-level panoptic quality");
  add_eval_inputs(pq_cmd);
  pq_cmd->callback([&] {
    run = [&] {
      const auto [pred, gt] = load_pair();
      const auto cats = load_categories(ev.categories, gt.frames, pred.frames);
      const auto result = pvkit::metrics::compute_pq(pred.frames, gt.frames, cats);
      Json r = base_report("eval pq", g);
      r["config"].update({{"pred", ev.pred}, {"gt", ev.gt}, {"frames", gt.frames.size()}});
      r["pq"] = pvkit::report::pq_json(result, cats);
      return r;
    };
  });

  auto* vpq_cmd = eval_cmd->add_subcommand("vpq", "Video panoptic quality over temporal windows");
  add_eval_inputs(vpq_cmd);
  vpq_cmd->add_option("--ks", ev.ks, "Comma-separated k labels")->capture_default_str();
  vpq_cmd->add_option("--stride", ev.stride, "Frame sampling stride (manifest value, else 5)");
  vpq_cmd->add_option("--averaging", ev.averaging, "window-then-class|class-then-window")
      ->capture_default_str();
  vpq_cmd->callback([&] {
    run = [&] {
      const auto [pred, gt] = load_pair();
      const auto cats = load_categories(ev.categories, gt.frames, pred.frames);
      const int stride = ev.stride.value_or(gt.stride.value_or(5));
      auto cfg = pvkit::metrics::VpqConfig::for_stride(stride, parse_ks(ev.ks));
      if (ev.averaging == "class-then-window") {
        cfg.averaging = pvkit::metrics::VpqAveraging::kClassThenWindow;
      } else if (ev.averaging != "window-then-class") {
        throw pvkit::ValidationError("--averaging: unknown mode '" + ev.averaging + "'");
      }
      cfg.threads = g.threads;
      cfg.validate();
      const auto result = pvkit::metrics::compute_vpq(pred.frames, gt.frames, cats, cfg);
      Json r = base_report("eval vpq", g);
      Json windows = Json::object();
      for (const auto& [k, w] : cfg.frames_per_label) windows[std::to_string(k)] = w;
      r["config"].update({{"pred", ev.pred},
                          {"gt", ev.gt},
                          {"frames", gt.frames.size()},
                          {"stride", stride},
                          {"ks", cfg.k_labels},
                          {"windows", std::move(windows)},
                          {"averaging", ev.averaging}});
      r["vpq"] = pvkit::report::vpq_json(result);
      return r;
    };
  });

  // demo -------------------------------------------------------------------
  struct {
    std::optional<std::string> output_dir, report;
    double alpha = 0.0;
    std::string scope = "all";
    bool no_taq = false;
  } dm;
  auto* demo_cmd = app.add_subcommand("demo", "End-to-end run on the bundled synthetic sequence");
  demo_cmd->add_option("--output-dir", dm.output_dir, "Write PNGs, query sets and report here");
  demo_cmd->add_option("--report", dm.report, "Report JSON (stdout when omitted)");
  demo_cmd->add_option("--alpha", dm.alpha, "Tracker centre-distance weight")->capture_default_str();
  demo_cmd->add_option("--scope", dm.scope, "all|non-empty")->capture_default_str();
  demo_cmd->add_flag("--no-taq", dm.no_taq, "Start every frame from the learned queries");
  demo_cmd->callback([&] {
    run = [&] {
      pvkit::demo::DemoOptions opt;
      opt.seed = g.seed;
      opt.threads = g.threads;
      opt.alpha_position = dm.alpha;
      opt.scope = parse_scope(dm.scope);
      opt.taq = !dm.no_taq;
      if (dm.output_dir) opt.output_dir = *dm.output_dir;
      Json r = pvkit::demo::run_demo(opt);
      r["command"] = "demo";
      return r;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  auto logger = spdlog::stderr_color_mt("pvkit");
  spdlog::set_default_logger(logger);
  try {
    spdlog::set_level(parse_log_level(g.log_level));
    Json report = run();
    std::optional<std::string> out;
    if (sim_cmd->parsed()) out = sim.report;
    if (comp_cmd->parsed()) out = comp.report;
    if (disp_cmd->parsed()) out = disp.report;
    if (fuse_cmd->parsed()) out = fuse.report;
    if (dec_cmd->parsed()) out = dec.report;
    if (trk_cmd->parsed()) out = trk.output;
    if (pq_cmd->parsed() || vpq_cmd->parsed()) out = ev.output;
    if (demo_cmd->parsed()) out = dm.report;
    emit(report, out);
  } catch (const pvkit::ValidationError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const pvkit::IoError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
