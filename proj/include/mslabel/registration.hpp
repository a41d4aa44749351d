#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "mslabel/spectral_io.hpp"

namespace mslabel {

struct ControlPair {
  Eigen::Vector2d src;  // cube frame
  Eigen::Vector2d dst;  // RGB / output frame
};

struct ControlPointSet {
  std::vector<ControlPair> pairs;
};

/// Degree-2 bivariate polynomial in coordinates local to an anchor:
/// u = (q - anchor) / radius, basis [1, ux, uy, ux^2, ux*uy, uy^2].
struct LocalPolynomial {
  Eigen::Vector2d anchor;
  double radius = 0.0;
  Eigen::Matrix<double, 6, 1> coeff_x;
  Eigen::Matrix<double, 6, 1> coeff_y;

  Eigen::Vector2d operator()(const Eigen::Vector2d& q) const;
};

/// Local weighted mean transform mapping output (dst) coordinates back to
/// source (cube) coordinates.
struct LwmtModel {
  int neighbors = 12;
  std::vector<LocalPolynomial> locals;
};

/// Smoothstep-style LWM weight 1 - 3R^2 + 2R^3 on [0, 1], zero beyond.
inline double lwmt_weight(double r) {
  if (r >= 1.0) return 0.0;
  return 1.0 - 3.0 * r * r + 2.0 * r * r * r;
}

LwmtModel fit_lwmt(const ControlPointSet& points, int neighbors = 12);
Eigen::Vector2d apply_lwmt(const LwmtModel& model, const Eigen::Vector2d& q);

/// Keys cubic convolution (a = -0.5) with edge-clamped sampling.
double bicubic_sample(const SpectralCube& cube, double x, double y, int c);

SpectralCube warp_cube(const SpectralCube& cube, const LwmtModel& model, int out_w, int out_h);

struct CropRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
};

/// Channels 0-2 from `rgb`, 3-27 from `warped`, both cut to `crop`.
SpectralCube crop_and_stack(const SpectralCube& rgb, const SpectralCube& warped,
                            const CropRect& crop);

ControlPointSet read_control_points(const std::filesystem::path& path);
void write_control_points(const std::filesystem::path& path, const ControlPointSet& points);
CropRect read_crop_rect(const std::filesystem::path& path);

}  // namespace mslabel
