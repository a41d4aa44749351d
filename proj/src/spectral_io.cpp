#include "mslabel/spectral_io.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "binary_io.hpp"
#include "mslabel/error.hpp"

namespace mslabel {

MosaicPattern MosaicPattern::row_major(int size) {
  MosaicPattern p;
  p.size = size;
  p.band_index.resize(static_cast<std::size_t>(size) * size);
  for (int i = 0; i < size * size; ++i) p.band_index[i] = static_cast<std::uint8_t>(i);
  return p;
}

void MosaicPattern::validate() const {
  require(size >= 1 && size <= 15, ErrorCategory::invalid_input,
          "mosaic pattern size must be in [1, 15]");
  require(band_index.size() == static_cast<std::size_t>(size) * size,
          ErrorCategory::invalid_input, "mosaic pattern needs size^2 band indices");
  std::vector<bool> seen(band_index.size(), false);
  for (auto b : band_index) {
    require(b < band_index.size() && !seen[b], ErrorCategory::invalid_input,
            "mosaic band indices must be a permutation of [0, size^2)");
    seen[b] = true;
  }
}

SpectralCube::SpectralCube(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
  require(width >= 0 && height >= 0 && channels >= 0, ErrorCategory::invalid_input,
          "cube dimensions must be non-negative");
  data_ = Eigen::ArrayXf::Constant(static_cast<Eigen::Index>(plane_size()) * channels, fill);
}

SpectralCube SpectralCube::select_channels(int first, int count) const {
  require(first >= 0 && count >= 0 && first + count <= channels_, ErrorCategory::invalid_input,
          "channel range out of bounds");
  SpectralCube out(width_, height_, count);
  const auto n = static_cast<Eigen::Index>(plane_size());
  out.data_ = data_.segment(first * n, count * n);
  return out;
}

bool SpectralCube::operator==(const SpectralCube& other) const {
  return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_ &&
         (data_ == other.data_).all();
}

SpectralCube demosaic_cube(const MosaicFrame& frame) {
  frame.pattern.validate();
  const int s = frame.pattern.size;
  require(frame.width >= s && frame.height >= s, ErrorCategory::invalid_input,
          "mosaic frame is smaller than one tile");
  require(frame.values.size() == static_cast<std::size_t>(frame.width) * frame.height,
          ErrorCategory::invalid_input, "mosaic value count does not match dimensions");

  SpectralCube cube(frame.width / s, frame.height / s, s * s);
  for (int ty = 0; ty < cube.height(); ++ty) {
    for (int tx = 0; tx < cube.width(); ++tx) {
      for (int r = 0; r < s; ++r) {
        for (int c = 0; c < s; ++c) {
          cube.at(tx, ty, frame.pattern.band_at(r, c)) =
              static_cast<float>(frame.at(tx * s + c, ty * s + r));
        }
      }
    }
  }
  return cube;
}

MosaicFrame remosaic(const SpectralCube& cube, const MosaicPattern& pattern) {
  pattern.validate();
  const int s = pattern.size;
  require(cube.channels() == s * s, ErrorCategory::invalid_input,
          "cube channel count must equal pattern size^2");
  for (float v : cube.data()) {
    require(std::isfinite(v) && v >= 0.0f && v <= 65535.0f && v == std::floor(v),
            ErrorCategory::invalid_input, "cube values must be integral and within u16 range");
  }
  MosaicFrame frame;
  frame.width = cube.width() * s;
  frame.height = cube.height() * s;
  frame.pattern = pattern;
  frame.values.assign(static_cast<std::size_t>(frame.width) * frame.height, 0);
  for (int ty = 0; ty < cube.height(); ++ty) {
    for (int tx = 0; tx < cube.width(); ++tx) {
      for (int r = 0; r < s; ++r) {
        for (int c = 0; c < s; ++c) {
          const auto x = tx * s + c;
          const auto y = ty * s + r;
          frame.values[static_cast<std::size_t>(y) * frame.width + x] =
              static_cast<std::uint16_t>(cube.at(tx, ty, pattern.band_at(r, c)));
        }
      }
    }
  }
  return frame;
}

BandTable band_wavelengths(int n, double lo, double hi) {
  require(n >= 2, ErrorCategory::invalid_input, "band table needs at least two bands");
  require(lo < hi, ErrorCategory::invalid_input, "band table needs lo < hi");
  BandTable table;
  table.centers.resize(n);
  const double step = (hi - lo) / (n - 1);
  for (int k = 0; k < n; ++k) table.centers[k] = lo + k * step;
  table.centers.back() = hi;
  return table;
}

std::vector<std::uint8_t> encode_cube(const SpectralCube& cube) {
  detail::ByteWriter w;
  w.magic("MSC1");
  w.u32(static_cast<std::uint32_t>(cube.width()));
  w.u32(static_cast<std::uint32_t>(cube.height()));
  w.u32(static_cast<std::uint32_t>(cube.channels()));
  w.u32(0);
  w.raw(cube.data().data(), sizeof(float) * static_cast<std::size_t>(cube.data().size()));
  return w.bytes();
}

SpectralCube decode_cube(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "MSC1");
  r.expect_magic("MSC1");
  const auto width = r.u32();
  const auto height = r.u32();
  const auto channels = r.u32();
  r.u32();  // reserved
  const auto count = static_cast<std::uint64_t>(width) * height * channels;
  require(count * sizeof(float) == r.remaining(), ErrorCategory::io,
          "MSC1: payload size does not match header");
  SpectralCube cube(static_cast<int>(width), static_cast<int>(height), static_cast<int>(channels));
  r.raw(cube.data().data(), count * sizeof(float));
  return cube;
}

void write_cube(const std::filesystem::path& path, const SpectralCube& cube) {
  detail::write_file_atomic(path, encode_cube(cube));
}

SpectralCube read_cube(const std::filesystem::path& path) {
  return decode_cube(detail::read_file(path));
}

std::vector<std::uint8_t> encode_mosaic(const MosaicFrame& frame) {
  frame.pattern.validate();
  detail::ByteWriter w;
  w.magic("MSQ1");
  w.u32(static_cast<std::uint32_t>(frame.width));
  w.u32(static_cast<std::uint32_t>(frame.height));
  w.u32(static_cast<std::uint32_t>(frame.pattern.size));
  for (auto b : frame.pattern.band_index) w.u8(b);
  w.raw(frame.values.data(), sizeof(std::uint16_t) * frame.values.size());
  return w.bytes();
}

MosaicFrame decode_mosaic(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "MSQ1");
  r.expect_magic("MSQ1");
  MosaicFrame frame;
  frame.width = static_cast<int>(r.u32());
  frame.height = static_cast<int>(r.u32());
  frame.pattern.size = static_cast<int>(r.u32());
  require(frame.pattern.size >= 1 && frame.pattern.size <= 15, ErrorCategory::io,
          "MSQ1: implausible pattern size");
  frame.pattern.band_index.resize(static_cast<std::size_t>(frame.pattern.size) *
                                  frame.pattern.size);
  for (auto& b : frame.pattern.band_index) b = r.u8();
  const auto count = static_cast<std::uint64_t>(frame.width) * frame.height;
  require(count * sizeof(std::uint16_t) == r.remaining(), ErrorCategory::io,
          "MSQ1: payload size does not match header");
  frame.values.resize(count);
  r.raw(frame.values.data(), count * sizeof(std::uint16_t));
  frame.pattern.validate();
  return frame;
}

void write_mosaic(const std::filesystem::path& path, const MosaicFrame& frame) {
  detail::write_file_atomic(path, encode_mosaic(frame));
}

MosaicFrame read_mosaic(const std::filesystem::path& path) {
  return decode_mosaic(detail::read_file(path));
}

}  // namespace mslabel
