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

#include "pvkit/formats.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace pvkit::formats {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'P', 'V', 'T', '1'};
constexpr int kJsonVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[off + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

std::size_t scalar_size(DType d) { return d == DType::kFloat32 ? 4 : 8; }

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(FormatError::Kind::kBadJson, fmt::format("{}: {}", what, e.what()));
  }
}

template <typename T>
T field(const json& j, const char* key, const std::string& what) {
  if (!j.contains(key)) throw ValidationError(fmt::format("{}: missing field \"{}\"", what, key));
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("{}: field \"{}\": {}", what, key, e.what()));
  }
}

void check_version(const json& j, const std::string& what) {
  if (j.contains("version") && j.at("version") != kJsonVersion) {
    throw ValidationError(fmt::format("{}: unsupported version {}", what, j.at("version").dump()));
  }
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& text, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw IoError(fmt::format("short write to {}", path.string()));
}

// ---------------------------------------------------------------------------
// Tensors

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.values.size() != t.element_count()) {
    throw ValidationError(fmt::format("tensor holds {} values but its dims need {}",
                                      t.values.size(), t.element_count()));
  }
  if (t.dtype != DType::kFloat32 && t.dtype != DType::kFloat64) {
    throw ValidationError("tensor dtype must be float32 or float64");
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(t.dtype));
  put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (std::uint32_t d : t.dims) put_u32(out, d);
  out.reserve(out.size() + t.values.size() * scalar_size(t.dtype));
  for (double v : t.values) {
    if (t.dtype == DType::kFloat32) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  using K = FormatError::Kind;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(K::kBadMagic, "tensor: bad magic (expected \"PVT1\")");
  }
  if (bytes.size() < 12) throw FormatError(K::kTruncated, "tensor: truncated header");
  Tensor t;
  const std::uint32_t code = get_u32(bytes, 4);
  if (code != 1 && code != 2) {
    throw FormatError(K::kUnknownDtype, fmt::format("tensor: unknown dtype code {}", code));
  }
  t.dtype = static_cast<DType>(code);
  const std::uint32_t rank = get_u32(bytes, 8);
  const std::size_t header = 12 + 4 * static_cast<std::size_t>(rank);
  if (bytes.size() < header) throw FormatError(K::kTruncated, "tensor: truncated dims");
  for (std::uint32_t i = 0; i < rank; ++i) t.dims.push_back(get_u32(bytes, 12 + 4 * std::size_t{i}));
  const std::size_t count = t.element_count();
  const std::size_t need = header + count * scalar_size(t.dtype);
  if (bytes.size() < need) {
    throw FormatError(K::kTruncated, fmt::format("tensor: payload needs {} bytes, file has {}",
                                                 need - header, bytes.size() - header));
  }
  if (bytes.size() > need) {
    throw FormatError(K::kTrailingData,
                      fmt::format("tensor: {} trailing bytes after payload", bytes.size() - need));
  }
  t.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (t.dtype == DType::kFloat32) {
      t.values[i] = std::bit_cast<float>(get_u32(bytes, header + 4 * i));
    } else {
      t.values[i] = std::bit_cast<double>(get_u64(bytes, header + 8 * i));
    }
  }
  return t;
}

void write_tensor(const Tensor& t, const fs::path& path) {
  const std::vector<std::uint8_t> bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(fmt::format("short write to {}", path.string()));
}

Tensor read_tensor(const fs::path& path) {
  const std::string text = read_text(path);
  return decode_tensor(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Tensor to_tensor(const FeatureMap& f, DType dtype) {
  return {dtype,
          {static_cast<std::uint32_t>(f.channels()), static_cast<std::uint32_t>(f.height()),
           static_cast<std::uint32_t>(f.width())},
          f.values()};
}

FeatureMap to_feature_map(const Tensor& t, int scale_index) {
  if (t.dims.size() != 3) {
    throw ValidationError(fmt::format("feature map tensors must be rank 3 (C, H, W), got rank {}",
                                      t.dims.size()));
  }
  return FeatureMap(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                    static_cast<int>(t.dims[2]), t.values, scale_index);
}

Tensor to_tensor(const Eigen::MatrixXd& m, DType dtype) {
  Tensor t{dtype, {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, {}};
  t.values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.values.push_back(m(i, j));
  }
  return t;
}

Eigen::MatrixXd to_matrix(const Tensor& t) {
  if (t.dims.size() != 2) throw ValidationError("matrix tensors must be rank 2");
  Eigen::MatrixXd m(t.dims[0], t.dims[1]);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = t.values[k++];
  }
  return m;
}

// ---------------------------------------------------------------------------
// Depth PNGs

depth::DepthMap decode_depth_png(const depth::RawImage16& raw, DepthPngMode mode) {
  std::vector<double> values(raw.values.size(), 0.0);
  for (std::size_t i = 0; i < raw.values.size(); ++i) {
    const std::uint16_t v = raw.values[i];
    if (v == 0) continue;
    values[i] = mode == DepthPngMode::kDepth256 ? v / 256.0 : (v - 1.0) / 256.0;
  }
  return depth::DepthMap(raw.width, raw.height, std::move(values));
}

depth::RawImage16 encode_depth_png(const depth::DepthMap& map, DepthPngMode mode) {
  depth::RawImage16 raw{map.width(), map.height(), std::vector<std::uint16_t>(map.size(), 0)};
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double v = map.values()[i];
    if (v <= 0.0) continue;
    // A valid value never encodes to the invalid code 0 (or to a zero
    // disparity).
    const double code = mode == DepthPngMode::kDepth256 ? std::round(v * 256.0)
                                                        : std::round(v * 256.0) + 1.0;
    const double lowest = mode == DepthPngMode::kDepth256 ? 1.0 : 2.0;
    raw.values[i] = static_cast<std::uint16_t>(std::clamp(code, lowest, 65535.0));
  }
  return raw;
}

depth::DepthMap read_depth_png(const fs::path& path, DepthPngMode mode) {
  return decode_depth_png(read_png16(path), mode);
}

void write_depth_png(const depth::DepthMap& map, const fs::path& path, DepthPngMode mode) {
  write_png16(encode_depth_png(map, mode), path);
}

// ---------------------------------------------------------------------------
// Panoptic maps

std::array<std::uint8_t, 3> id_to_rgb(metrics::SegmentId id) {
  if (id >= (1u << 24)) throw ValidationError(fmt::format("segment id {} exceeds 24 bits", id));
  return {static_cast<std::uint8_t>(id & 0xFF), static_cast<std::uint8_t>((id >> 8) & 0xFF),
          static_cast<std::uint8_t>((id >> 16) & 0xFF)};
}

metrics::SegmentId rgb_to_id(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return static_cast<metrics::SegmentId>(r) + 256u * g + 65536u * b;
}

metrics::PanopticMap read_panoptic(const fs::path& png_path, const fs::path& segments_info_path) {
  const Rgb8Image img = read_png_rgb8(png_path);
  const std::string what = segments_info_path.string();
  const json doc = parse_json(read_text(segments_info_path), what);
  check_version(doc, what);
  std::vector<metrics::SegmentInfo> segments;
  std::set<metrics::SegmentId> seen;
  for (const json& s : field<json>(doc, "segments_info", what)) {
    metrics::SegmentInfo info{field<metrics::SegmentId>(s, "id", what),
                              field<int>(s, "category_id", what),
                              s.contains("is_thing") ? field<bool>(s, "is_thing", what) : false};
    if (!seen.insert(info.id).second) {
      throw ValidationError(fmt::format("{}: duplicate segment id {}", what, info.id));
    }
    segments.push_back(info);
  }
  std::vector<metrics::SegmentId> ids(static_cast<std::size_t>(img.width) * img.height);
  for (std::size_t p = 0; p < ids.size(); ++p) {
    ids[p] = rgb_to_id(img.rgb[3 * p], img.rgb[3 * p + 1], img.rgb[3 * p + 2]);
  }
  try {
    return metrics::PanopticMap(img.width, img.height, std::move(ids), std::move(segments));
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{}: {}", png_path.string(), e.what()));
  }
}

void write_panoptic(const metrics::PanopticMap& map, const fs::path& png_path,
                    const fs::path& segments_info_path) {
  Rgb8Image img{map.width(), map.height(), std::vector<std::uint8_t>(map.pixels() * 3)};
  for (std::size_t p = 0; p < map.pixels(); ++p) {
    const auto rgb = id_to_rgb(map.id(p));
    std::copy(rgb.begin(), rgb.end(), img.rgb.begin() + static_cast<std::ptrdiff_t>(3 * p));
  }
  write_png_rgb8(img, png_path);
  ordered_json doc;
  doc["version"] = kJsonVersion;
  doc["segments_info"] = ordered_json::array();
  for (const auto& [id, info] : map.segments()) {
    doc["segments_info"].push_back(
        {{"id", info.id}, {"category_id", info.category_id}, {"is_thing", info.is_thing}});
  }
  write_text(doc.dump(2) + "\n", segments_info_path);
}

metrics::CategoryTable read_categories(const fs::path& path) {
  const std::string what = path.string();
  const json doc = parse_json(read_text(path), what);
  check_version(doc, what);
  metrics::CategoryTable cats;
  for (const json& c : field<json>(doc, "categories", what)) {
    const int id = field<int>(c, "id", what);
    metrics::Category cat{c.contains("name") ? field<std::string>(c, "name", what)
                                             : std::to_string(id),
                          field<bool>(c, "is_thing", what)};
    if (!cats.emplace(id, cat).second) {
      throw ValidationError(fmt::format("{}: duplicate category id {}", what, id));
    }
  }
  return cats;
}

void write_categories(const metrics::CategoryTable& cats, const fs::path& path) {
  ordered_json doc;
  doc["version"] = kJsonVersion;
  doc["categories"] = ordered_json::array();
  for (const auto& [id, c] : cats) {
    doc["categories"].push_back({{"id", id}, {"name", c.name}, {"is_thing", c.is_thing}});
  }
  write_text(doc.dump(2) + "\n", path);
}

// ---------------------------------------------------------------------------
// Manifest

fs::path SequenceManifest::resolve(const std::string& p) const {
  const fs::path path(p);
  return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

void SequenceManifest::validate() const {
  if (sampling_stride < 1) {
    throw ValidationError(fmt::format("manifest: sampling_stride must be >= 1, got {}",
                                      sampling_stride));
  }
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].frame_index <= frames[i - 1].frame_index) {
      throw ValidationError(fmt::format(
          "manifest: frame_index {} at position {} does not increase past {}",
          frames[i].frame_index, i, frames[i - 1].frame_index));
    }
  }
}

SequenceManifest parse_manifest(const std::string& json_text, const fs::path& base_dir) {
  const std::string what = "manifest";
  const json doc = parse_json(json_text, what);
  check_version(doc, what);
  SequenceManifest m;
  m.base_dir = base_dir;
  if (doc.contains("sampling_stride")) m.sampling_stride = field<int>(doc, "sampling_stride", what);
  auto optional_path = [&](const json& f, const char* key) -> std::optional<std::string> {
    if (!f.contains(key) || f.at(key).is_null()) return std::nullopt;
    return field<std::string>(f, key, what);
  };
  for (const json& f : field<json>(doc, "frames", what)) {
    FrameEntry e;
    e.frame_index = field<std::int64_t>(f, "frame_index", what);
    e.image_path = optional_path(f, "image");
    e.depth_path = optional_path(f, "depth");
    e.panoptic_path = optional_path(f, "panoptic");
    e.segments_info_path = optional_path(f, "segments_info");
    e.queries_path = optional_path(f, "queries");
    m.frames.push_back(std::move(e));
  }
  m.validate();
  return m;
}

SequenceManifest read_manifest(const fs::path& path) {
  return parse_manifest(read_text(path), path.parent_path());
}

void write_manifest(const SequenceManifest& manifest, const fs::path& path) {
  manifest.validate();
  ordered_json doc;
  doc["version"] = kJsonVersion;
  doc["sampling_stride"] = manifest.sampling_stride;
  doc["frames"] = ordered_json::array();
  for (const FrameEntry& e : manifest.frames) {
    ordered_json f;
    f["frame_index"] = e.frame_index;
    if (e.image_path) f["image"] = *e.image_path;
    if (e.depth_path) f["depth"] = *e.depth_path;
    if (e.panoptic_path) f["panoptic"] = *e.panoptic_path;
    if (e.segments_info_path) f["segments_info"] = *e.segments_info_path;
    if (e.queries_path) f["queries"] = *e.queries_path;
    doc["frames"].push_back(std::move(f));
  }
  write_text(doc.dump(2) + "\n", path);
}

// ---------------------------------------------------------------------------
// Small documents

depth::CameraIntrinsics parse_intrinsics(const std::string& json_text) {
  const std::string what = "intrinsics";
  const json doc = parse_json(json_text, what);
  depth::CameraIntrinsics intr;
  intr.focal_y = field<double>(doc, "focal_y", what);
  intr.principal_y = field<double>(doc, "principal_y", what);
  if (doc.contains("focal_x")) intr.focal_x = field<double>(doc, "focal_x", what);
  if (doc.contains("principal_x")) intr.principal_x = field<double>(doc, "principal_x", what);
  if (doc.contains("baseline")) intr.baseline = field<double>(doc, "baseline", what);
  intr.validate(false);
  return intr;
}

depth::CameraIntrinsics read_intrinsics(const fs::path& path) {
  return parse_intrinsics(read_text(path));
}

fusion::FusionParams parse_fusion_params(const std::string& json_text) {
  const std::string what = "fusion params";
  const json doc = parse_json(json_text, what);
  fusion::FusionParams p;
  const auto rows = field<std::vector<std::vector<double>>>(doc, "weights", what);
  p.bias = field<std::vector<double>>(doc, "bias", what);
  p.gamma = field<std::vector<double>>(doc, "gamma", what);
  p.depth_channels = static_cast<int>(rows.size());
  p.image_channels = rows.empty() ? 0 : static_cast<int>(rows.front().size());
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != p.image_channels) {
      throw ValidationError("fusion params: gate weight rows differ in length");
    }
    p.weights.insert(p.weights.end(), r.begin(), r.end());
  }
  p.validate();
  return p;
}

fusion::FusionParams read_fusion_params(const fs::path& path) {
  return parse_fusion_params(read_text(path));
}

void write_fusion_params(const fusion::FusionParams& p, const fs::path& path) {
  p.validate();
  ordered_json doc;
  doc["weights"] = ordered_json::array();
  for (int c = 0; c < p.depth_channels; ++c) {
    ordered_json row = ordered_json::array();
    for (int k = 0; k < p.image_channels; ++k) row.push_back(p.w(c, k));
    doc["weights"].push_back(std::move(row));
  }
  doc["bias"] = p.bias;
  doc["gamma"] = p.gamma;
  write_text(doc.dump(2) + "\n", path);
}

// ---------------------------------------------------------------------------
// Query sets

namespace {

fs::path companion(const fs::path& sidecar, const std::string& suffix) {
  fs::path p = sidecar;
  p.replace_extension();
  return p.string() + suffix;
}

}  // namespace

void write_query_set(const decoder::QuerySet& qs, const fs::path& sidecar_path) {
  const fs::path emb = companion(sidecar_path, ".embeddings.pvt");
  const fs::path cls = companion(sidecar_path, ".class_logits.pvt");
  const fs::path masks = companion(sidecar_path, ".masks.pvt");
  write_tensor(to_tensor(qs.embeddings), emb);
  write_tensor(to_tensor(qs.class_logits), cls);
  Tensor mt{DType::kFloat64,
            {static_cast<std::uint32_t>(qs.size()), static_cast<std::uint32_t>(qs.mask_height),
             static_cast<std::uint32_t>(qs.mask_width)},
            to_tensor(qs.mask_logits).values};
  write_tensor(mt, masks);

  ordered_json doc;
  doc["version"] = kJsonVersion;
  doc["N"] = qs.size();
  doc["C_x"] = qs.dim();
  doc["K"] = qs.num_classes;
  doc["mask_height"] = qs.mask_height;
  doc["mask_width"] = qs.mask_width;
  doc["centers"] = ordered_json::array();
  for (Eigen::Index i = 0; i < qs.centers.rows(); ++i) {
    doc["centers"].push_back({qs.centers(i, 0), qs.centers(i, 1)});
  }
  doc["non_empty_flags"] = qs.class_logits.rows() == qs.size() ? qs.non_empty()
                                                               : std::vector<bool>{};
  doc["tensors"] = {{"embeddings", emb.filename().string()},
                    {"class_logits", cls.filename().string()},
                    {"masks", masks.filename().string()}};
  write_text(doc.dump(2) + "\n", sidecar_path);
}

decoder::QuerySet read_query_set(const fs::path& sidecar_path) {
  const std::string what = sidecar_path.string();
  const json doc = parse_json(read_text(sidecar_path), what);
  check_version(doc, what);
  const fs::path dir = sidecar_path.parent_path();
  const json tensors = field<json>(doc, "tensors", what);

  decoder::QuerySet qs;
  qs.num_classes = field<int>(doc, "K", what);
  qs.mask_height = field<int>(doc, "mask_height", what);
  qs.mask_width = field<int>(doc, "mask_width", what);
  const int n = field<int>(doc, "N", what);
  const int c = field<int>(doc, "C_x", what);
  qs.embeddings = to_matrix(read_tensor(dir / field<std::string>(tensors, "embeddings", what)));
  qs.class_logits = to_matrix(read_tensor(dir / field<std::string>(tensors, "class_logits", what)));
  Tensor masks = read_tensor(dir / field<std::string>(tensors, "masks", what));
  if (masks.dims.size() != 3) throw ValidationError(fmt::format("{}: masks must be rank 3", what));
  masks.dims = {masks.dims[0], masks.dims[1] * masks.dims[2]};
  qs.mask_logits = to_matrix(masks);

  const auto centers = field<std::vector<std::vector<double>>>(doc, "centers", what);
  qs.centers.resize(static_cast<Eigen::Index>(centers.size()), 2);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (centers[i].size() != 2) throw ValidationError(fmt::format("{}: centres must be pairs", what));
    qs.centers(static_cast<Eigen::Index>(i), 0) = centers[i][0];
    qs.centers(static_cast<Eigen::Index>(i), 1) = centers[i][1];
  }
  if (qs.size() != n || qs.dim() != c || qs.class_logits.rows() != n ||
      qs.class_logits.cols() != qs.num_classes + 1 || qs.centers.rows() != n ||
      qs.mask_logits.rows() != n ||
      qs.mask_logits.cols() != static_cast<Eigen::Index>(qs.mask_height) * qs.mask_width) {
    throw ValidationError(fmt::format("{}: tensor shapes disagree with N={}, C_x={}, K={}", what,
                                      n, c, qs.num_classes));
  }
  return qs;
}

}  // namespace pvkit::formats
