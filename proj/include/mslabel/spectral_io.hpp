#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

namespace mslabel {

/// Tile layout of a snapshot mosaic sensor: `band_index[row * size + col]` is
/// the spectral band seen by that tile position.
struct MosaicPattern {
  int size = 5;
  std::vector<std::uint8_t> band_index;

  /// Row-major layout: tile (row, col) carries band row * size + col.
  static MosaicPattern row_major(int size = 5);

  int bands() const { return size * size; }
  int band_at(int row, int col) const { return band_index[row * size + col]; }

  /// Throws invalid_input unless band_index is a bijection onto [0, size^2).
  void validate() const;
};

struct MosaicFrame {
  int width = 2048;
  int height = 1088;
  std::vector<std::uint16_t> values;  // row-major
  MosaicPattern pattern = MosaicPattern::row_major();

  std::uint16_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Planar float image cube: channel-major, then row-major.
class SpectralCube {
 public:
  using Plane = Eigen::Map<Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstPlane =
      Eigen::Map<const Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  SpectralCube() = default;
  SpectralCube(int width, int height, int channels, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const { return data_.size() == 0; }

  float& at(int x, int y, int c) { return data_[index(x, y, c)]; }
  float at(int x, int y, int c) const { return data_[index(x, y, c)]; }

  Plane plane(int c) { return Plane(data_.data() + c * plane_size(), height_, width_); }
  ConstPlane plane(int c) const {
    return ConstPlane(data_.data() + c * plane_size(), height_, width_);
  }

  Eigen::ArrayXf& data() { return data_; }
  const Eigen::ArrayXf& data() const { return data_; }

  /// Copies channels [first, first + count) into a new cube.
  SpectralCube select_channels(int first, int count) const;

  bool operator==(const SpectralCube& other) const;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  Eigen::ArrayXf data_;
};

struct BandTable {
  std::vector<double> centers;  // nm

  double spacing() const { return centers.size() < 2 ? 0.0 : centers[1] - centers[0]; }
};

/// Rearranges the mosaic into a planar cube, one channel per band. Trailing
/// partial tiles are dropped; values are copied unscaled.
SpectralCube demosaic_cube(const MosaicFrame& frame);

/// Inverse of demosaic_cube over the covered tile area.
MosaicFrame remosaic(const SpectralCube& cube, const MosaicPattern& pattern);

/// `n` equally spaced band centers from `lo` to `hi` inclusive.
BandTable band_wavelengths(int n, double lo, double hi);

// "MSC1" spectral cube container.
std::vector<std::uint8_t> encode_cube(const SpectralCube& cube);
SpectralCube decode_cube(const std::vector<std::uint8_t>& bytes);
void write_cube(const std::filesystem::path& path, const SpectralCube& cube);
SpectralCube read_cube(const std::filesystem::path& path);

// "MSQ1" mosaic frame container.
std::vector<std::uint8_t> encode_mosaic(const MosaicFrame& frame);
MosaicFrame decode_mosaic(const std::vector<std::uint8_t>& bytes);
void write_mosaic(const std::filesystem::path& path, const MosaicFrame& frame);
MosaicFrame read_mosaic(const std::filesystem::path& path);

}  // namespace mslabel
