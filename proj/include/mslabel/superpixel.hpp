#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mslabel/spectral_io.hpp"

namespace mslabel {

struct SlicParams {
  std::optional<int> target_count;  // k
  std::optional<double> region_size;  // S, pixels
  double compactness = 10.0;
  int iterations = 10;
  /// 0 places seeds at cell centers; other values draw a seeded grid phase.
  std::uint64_t seed = 0;

  void validate() const;
};

struct SegmentationMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> ids;
  std::uint32_t count = 0;

  std::uint32_t at(int x, int y) const { return ids[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const SegmentationMap&) const = default;
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;  // 0 or 1

  bool at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t count() const;
  bool operator==(const BinaryMask&) const = default;
};

struct ClassInfo {
  std::string name;
  std::string color;  // "#RRGGBB"
  bool operator==(const ClassInfo&) const = default;
};

/// The eight scene classes in report order.
const std::vector<ClassInfo>& default_palette();

struct LabelMap {
  static constexpr std::uint8_t kUnlabeled = 255;

  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> classes;
  std::vector<ClassInfo> palette;

  static LabelMap unlabeled(int width, int height, std::vector<ClassInfo> palette);

  std::uint8_t at(int x, int y) const { return classes[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return classes[static_cast<std::size_t>(y) * width + x]; }
  std::size_t labeled_count() const;
  bool operator==(const LabelMap&) const = default;
};

SegmentationMap slic_segment(const SpectralCube& image, const SlicParams& params);

BinaryMask boundary_mask(const SegmentationMap& seg);

LabelMap assign_label(const LabelMap& labels, const SegmentationMap& seg,
                      std::uint32_t superpixel_id, std::uint8_t class_id);

/// Per-superpixel majority vote of `prev`; ties go to the lowest class index.
LabelMap propagate_labels(const LabelMap& prev, const SegmentationMap& seg);

// "LBL1" label raster plus a JSON palette sidecar (<path>.json).
std::vector<std::uint8_t> encode_labels(const LabelMap& labels);
LabelMap decode_labels(const std::vector<std::uint8_t>& bytes);
void write_labels(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_labels(const std::filesystem::path& path);
std::string palette_json(const std::vector<ClassInfo>& palette);
std::vector<ClassInfo> parse_palette_json(const std::string& text);

// "SEG1" segmentation raster: magic, u32 width, height, count, then u32 ids.
std::vector<std::uint8_t> encode_segmentation(const SegmentationMap& seg);
SegmentationMap decode_segmentation(const std::vector<std::uint8_t>& bytes);

}  // namespace mslabel
