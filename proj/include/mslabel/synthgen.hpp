#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mslabel/spectral_io.hpp"
#include "mslabel/superpixel.hpp"
#include "mslabel/training.hpp"

namespace mslabel {

struct ClassSignature {
  int class_index = 0;
  std::vector<double> mean;         // one entry per channel, in [0, 1]
  std::vector<double> noise_sigma;  // one entry per channel, >= 0

  bool operator==(const ClassSignature&) const = default;
};

enum class RegionShape { rect, ellipse };

/// Per-frame perturbation bounds: centres move by up to (dx, dy) and sizes
/// scale by up to 1 +- (dw, dh).
struct Jitter {
  double dx = 0, dy = 0, dw = 0, dh = 0;
  bool operator==(const Jitter&) const = default;
};

/// Region in normalized image coordinates; higher z paints on top.
struct Region {
  RegionShape shape = RegionShape::rect;
  int class_index = 0;
  double cx = 0.5, cy = 0.5, w = 1, h = 1;
  int z = 0;
  Jitter jitter;

  bool contains(double u, double v) const;
  bool operator==(const Region&) const = default;
};

struct SceneSpec {
  int width = 128;
  int height = 128;
  int channels = 28;
  std::optional<int> background_class;  // fills pixels no region covers
  std::vector<ClassInfo> classes;
  std::vector<ClassSignature> signatures;
  std::vector<Region> regions;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SceneSpec&) const = default;
};

struct Scene {
  SpectralCube image;
  LabelMap labels;
};

/// Eight-class street template. "car/truck" and "road/gravel" share channels
/// 0..2 and differ only in the spectral bands.
SceneSpec default_scene_template(int width = 128, int height = 128);

/// Rasterization at pixel centres; throws invalid_spec when a pixel is uncovered.
LabelMap rasterize_layout(const SceneSpec& spec);

/// Per-class covered area, measured on an `supersample`^2 subpixel grid.
std::vector<double> layout_area_fractions(const SceneSpec& spec, int supersample = 8);

/// Mean + seeded Gaussian noise per pixel and channel, clamped to [0, 1].
Scene generate_scene(const SceneSpec& spec);

/// Copy of `spec` with every region perturbed within its jitter bounds.
SceneSpec jitter_layout(const SceneSpec& spec, std::uint64_t seed);

/// Seed of frame `index` in a dataset generated from `seed`.
std::uint64_t frame_seed(std::uint64_t seed, std::uint64_t index);

/// Writes frame_NNN.msc / frame_NNN.lbl and manifest.json under `out_dir`.
DatasetManifest generate_dataset(std::size_t n_train, std::size_t n_test, const SceneSpec& tpl,
                                 std::uint64_t seed, const std::filesystem::path& out_dir);

std::string scene_spec_to_json(const SceneSpec& spec);
SceneSpec parse_scene_spec(const std::string& text);

}  // namespace mslabel
