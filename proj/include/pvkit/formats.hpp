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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pvkit/decoder.hpp"
#include "pvkit/depth.hpp"
#include "pvkit/error.hpp"
#include "pvkit/feature_map.hpp"
#include "pvkit/fusion.hpp"
#include "pvkit/metrics.hpp"

namespace pvkit::formats {

namespace fs = std::filesystem;

/// Malformed file content. Each failure mode has its own kind.
class FormatError : public IoError {
 public:
  enum class Kind { kBadMagic, kTruncated, kUnknownDtype, kTrailingData, kBadImage, kBadJson };

  FormatError(Kind kind, const std::string& what) : IoError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// ---------------------------------------------------------------------------
// Tensor files ("PVT1")
//
//   offset 0   char[4]  magic "PVT1"
//   offset 4   u32      dtype (1 = float32, 2 = float64)
//   offset 8   u32      rank
//   offset 12  u32[rank] dims
//   then       payload, row-major, product(dims) scalars
//
// All integers and scalars little-endian, no padding. Rank 0 is a scalar.
// ---------------------------------------------------------------------------

enum class DType : std::uint32_t { kFloat32 = 1, kFloat64 = 2 };

struct Tensor {
  DType dtype = DType::kFloat64;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;  // float32 tensors hold exactly representable values

  std::size_t element_count() const;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);
void write_tensor(const Tensor& t, const fs::path& path);
Tensor read_tensor(const fs::path& path);

Tensor to_tensor(const FeatureMap& f, DType dtype = DType::kFloat64);
FeatureMap to_feature_map(const Tensor& t, int scale_index = 1);
Tensor to_tensor(const Eigen::MatrixXd& m, DType dtype = DType::kFloat64);
Eigen::MatrixXd to_matrix(const Tensor& t);

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

// 16-bit grayscale; 8-bit or colour inputs are rejected.
depth::RawImage16 read_png16(const fs::path& path);
void write_png16(const depth::RawImage16& image, const fs::path& path);

struct Rgb8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved
};
Rgb8Image read_png_rgb8(const fs::path& path);
void write_png_rgb8(const Rgb8Image& image, const fs::path& path);

enum class DepthPngMode {
  kDepth256,             // meters = value / 256
  kCityscapesDisparity,  // disparity = (value - 1) / 256
};

// Values of 0 are invalid in both modes. In disparity mode the returned grid
// holds disparities; a decoded disparity of 0 is invalid as well.
depth::DepthMap decode_depth_png(const depth::RawImage16& raw, DepthPngMode mode);
depth::RawImage16 encode_depth_png(const depth::DepthMap& map, DepthPngMode mode);
depth::DepthMap read_depth_png(const fs::path& path, DepthPngMode mode = DepthPngMode::kDepth256);
void write_depth_png(const depth::DepthMap& map, const fs::path& path,
                     DepthPngMode mode = DepthPngMode::kDepth256);

// ---------------------------------------------------------------------------
// Panoptic maps: RGB PNG with id = R + 256 G + 65536 B, plus a JSON document
//   {"version": 1, "segments_info": [{"id", "category_id", "is_thing"}, ...]}
// ---------------------------------------------------------------------------

std::array<std::uint8_t, 3> id_to_rgb(metrics::SegmentId id);
metrics::SegmentId rgb_to_id(std::uint8_t r, std::uint8_t g, std::uint8_t b);

metrics::PanopticMap read_panoptic(const fs::path& png_path, const fs::path& segments_info_path);
void write_panoptic(const metrics::PanopticMap& map, const fs::path& png_path,
                    const fs::path& segments_info_path);

// {"version": 1, "categories": [{"id", "name", "is_thing"}, ...]}
metrics::CategoryTable read_categories(const fs::path& path);
void write_categories(const metrics::CategoryTable& cats, const fs::path& path);

// ---------------------------------------------------------------------------
// Sequence manifest
//   {"version": 1, "sampling_stride": 5, "frames": [{"frame_index": 0,
//    "image": ..., "depth": ..., "panoptic": ..., "segments_info": ...,
//    "queries": ...}, ...]}
// Paths are stored as written and resolved against the manifest directory.
// ---------------------------------------------------------------------------

struct FrameEntry {
  std::int64_t frame_index = 0;
  std::optional<std::string> image_path;
  std::optional<std::string> depth_path;
  std::optional<std::string> panoptic_path;
  std::optional<std::string> segments_info_path;
  std::optional<std::string> queries_path;
};

struct SequenceManifest {
  int sampling_stride = 5;
  std::vector<FrameEntry> frames;
  fs::path base_dir;

  fs::path resolve(const std::string& p) const;
  void validate() const;
};

SequenceManifest parse_manifest(const std::string& json_text, const fs::path& base_dir = {});
SequenceManifest read_manifest(const fs::path& path);
void write_manifest(const SequenceManifest& manifest, const fs::path& path);

// ---------------------------------------------------------------------------
// Small JSON documents
// ---------------------------------------------------------------------------

// {"focal_x", "focal_y", "principal_x", "principal_y", "baseline"}
depth::CameraIntrinsics parse_intrinsics(const std::string& json_text);
depth::CameraIntrinsics read_intrinsics(const fs::path& path);

// {"weights": [[...] x C_I] x C_D, "bias": [...], "gamma": [...]}
fusion::FusionParams parse_fusion_params(const std::string& json_text);
fusion::FusionParams read_fusion_params(const fs::path& path);
void write_fusion_params(const fusion::FusionParams& p, const fs::path& path);

// ---------------------------------------------------------------------------
// Query sets: <stem>.json sidecar plus <stem>.embeddings.pvt,
// <stem>.class_logits.pvt and <stem>.masks.pvt (N x H x W) next to it.
//   {"version": 1, "N", "C_x", "K", "mask_height", "mask_width",
//    "centers": [[x, y], ...], "non_empty_flags": [...], "tensors": {...}}
// ---------------------------------------------------------------------------

void write_query_set(const decoder::QuerySet& qs, const fs::path& sidecar_path);
decoder::QuerySet read_query_set(const fs::path& sidecar_path);

std::string read_text(const fs::path& path);
void write_text(const std::string& text, const fs::path& path);

}  // namespace pvkit::formats
