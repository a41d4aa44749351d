#include "mslabel/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/QR>
#include "json.hpp"

#include "binary_io.hpp"
#include "mslabel/error.hpp"

namespace mslabel {

namespace {

Eigen::Matrix<double, 6, 1> quadratic_basis(const Eigen::Vector2d& u) {
  Eigen::Matrix<double, 6, 1> b;
  b << 1.0, u.x(), u.y(), u.x() * u.x(), u.x() * u.y(), u.y() * u.y();
  return b;
}

double keys_kernel(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t < 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

}  // namespace

Eigen::Vector2d LocalPolynomial::operator()(const Eigen::Vector2d& q) const {
  const auto b = quadratic_basis((q - anchor) / radius);
  return {coeff_x.dot(b), coeff_y.dot(b)};
}

LwmtModel fit_lwmt(const ControlPointSet& points, int neighbors) {
  const auto n = static_cast<int>(points.pairs.size());
  require(neighbors >= 6, ErrorCategory::invalid_input, "LWMT needs at least 6 neighbors");
  require(n >= neighbors, ErrorCategory::invalid_input,
          "LWMT needs at least as many control points as neighbors (" + std::to_string(n) +
              " < " + std::to_string(neighbors) + ")");
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      require(points.pairs[i].src != points.pairs[j].src, ErrorCategory::invalid_input,
              "duplicate source control points " + std::to_string(i) + " and " +
                  std::to_string(j));
    }
  }

  LwmtModel model;
  model.neighbors = neighbors;
  model.locals.reserve(n);
  std::vector<int> order(n);
  std::vector<double> dist(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d anchor = points.pairs[i].dst;
    for (int j = 0; j < n; ++j) dist[j] = (points.pairs[j].dst - anchor).norm();
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return dist[a] < dist[b]; });

    LocalPolynomial local;
    local.anchor = anchor;
    local.radius = dist[order[neighbors - 1]];
    if (!(local.radius > 0.0)) {
      fail(ErrorCategory::degenerate_geometry,
           "control point " + std::to_string(i) + ": coincident destination points");
    }

    Eigen::Matrix<double, Eigen::Dynamic, 6> design(neighbors, 6);
    Eigen::MatrixX2d rhs(neighbors, 2);
    for (int k = 0; k < neighbors; ++k) {
      const auto& p = points.pairs[order[k]];
      design.row(k) = quadratic_basis((p.dst - anchor) / local.radius).transpose();
      rhs.row(k) = p.src.transpose();
    }
    Eigen::ColPivHouseholderQR<Eigen::Matrix<double, Eigen::Dynamic, 6>> qr(design);
    qr.setThreshold(1e-9);
    if (qr.rank() < 6) {
      fail(ErrorCategory::degenerate_geometry,
           "control point " + std::to_string(i) +
               ": neighbors do not determine a quadratic (collinear or conic-degenerate)");
    }
    const Eigen::Matrix<double, 6, 2> coeff = qr.solve(rhs);
    local.coeff_x = coeff.col(0);
    local.coeff_y = coeff.col(1);
    model.locals.push_back(local);
  }
  return model;
}

Eigen::Vector2d apply_lwmt(const LwmtModel& model, const Eigen::Vector2d& q) {
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  double weight_sum = 0.0;
  std::size_t nearest = 0;
  double nearest_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < model.locals.size(); ++i) {
    const auto& local = model.locals[i];
    const double d = (q - local.anchor).norm();
    if (d < nearest_dist) {
      nearest_dist = d;
      nearest = i;
    }
    const double w = lwmt_weight(d / local.radius);
    if (w > 0.0) {
      sum += w * local(q);
      weight_sum += w;
    }
  }
  if (weight_sum > 0.0) return sum / weight_sum;
  return model.locals.at(nearest)(q);
}

double bicubic_sample(const SpectralCube& cube, double x, double y, int c) {
  require(!cube.empty(), ErrorCategory::invalid_input, "bicubic_sample on empty cube");
  require(std::isfinite(x) && std::isfinite(y), ErrorCategory::invalid_input,
          "bicubic_sample coordinates must be finite");
  require(c >= 0 && c < cube.channels(), ErrorCategory::invalid_input, "channel out of range");
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const double tx = x - fx;
  const double ty = y - fy;
  const auto ix = static_cast<long long>(fx);
  const auto iy = static_cast<long long>(fy);
  const auto clamp_x = [&](long long v) {
    return static_cast<int>(std::clamp<long long>(v, 0, cube.width() - 1));
  };
  const auto clamp_y = [&](long long v) {
    return static_cast<int>(std::clamp<long long>(v, 0, cube.height() - 1));
  };
  double wx[4], wy[4];
  for (int k = 0; k < 4; ++k) {
    wx[k] = keys_kernel(tx - (k - 1));
    wy[k] = keys_kernel(ty - (k - 1));
  }
  double acc = 0.0;
  for (int j = 0; j < 4; ++j) {
    const int sy = clamp_y(iy + j - 1);
    double row = 0.0;
    for (int i = 0; i < 4; ++i) row += wx[i] * cube.at(clamp_x(ix + i - 1), sy, c);
    acc += wy[j] * row;
  }
  return acc;
}

SpectralCube warp_cube(const SpectralCube& cube, const LwmtModel& model, int out_w, int out_h) {
  require(out_w > 0 && out_h > 0, ErrorCategory::invalid_input, "warp output size must be > 0");
  require(!model.locals.empty(), ErrorCategory::invalid_input, "warp needs a fitted model");
  SpectralCube out(out_w, out_h, cube.channels());
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const auto src = apply_lwmt(model, Eigen::Vector2d(x, y));
      for (int c = 0; c < cube.channels(); ++c) {
        out.at(x, y, c) = static_cast<float>(bicubic_sample(cube, src.x(), src.y(), c));
      }
    }
  }
  return out;
}

SpectralCube crop_and_stack(const SpectralCube& rgb, const SpectralCube& warped,
                            const CropRect& crop) {
  require(rgb.channels() == 3, ErrorCategory::invalid_input, "RGB input must have 3 channels");
  require(warped.channels() == 25, ErrorCategory::invalid_input,
          "warped spectral input must have 25 channels");
  require(crop.w > 0 && crop.h > 0 && crop.x >= 0 && crop.y >= 0, ErrorCategory::invalid_input,
          "crop rectangle must be non-empty with non-negative origin");
  for (const auto* in : {&rgb, &warped}) {
    require(crop.x + crop.w <= in->width() && crop.y + crop.h <= in->height(),
            ErrorCategory::invalid_input, "crop rectangle exceeds input bounds");
  }
  SpectralCube out(crop.w, crop.h, 28);
  for (int c = 0; c < 28; ++c) {
    const auto& src = c < 3 ? rgb : warped;
    const int sc = c < 3 ? c : c - 3;
    out.plane(c) = src.plane(sc).block(crop.y, crop.x, crop.h, crop.w);
  }
  return out;
}

ControlPointSet read_control_points(const std::filesystem::path& path) {
  ControlPointSet set;
  try {
    const auto doc = nlohmann::json::parse(detail::read_text(path));
    for (const auto& p : doc.at("pairs")) {
      const auto& s = p.at("src");
      const auto& d = p.at("dst");
      set.pairs.push_back({{s.at(0).get<double>(), s.at(1).get<double>()},
                           {d.at(0).get<double>(), d.at(1).get<double>()}});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::invalid_input, path.string() + ": " + e.what());
  }
  return set;
}

void write_control_points(const std::filesystem::path& path, const ControlPointSet& points) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : points.pairs) {
    pairs.push_back({{"src", {p.src.x(), p.src.y()}}, {"dst", {p.dst.x(), p.dst.y()}}});
  }
  detail::write_text_atomic(path, nlohmann::json{{"pairs", pairs}}.dump(2) + "\n");
}

CropRect read_crop_rect(const std::filesystem::path& path) {
  try {
    const auto doc = nlohmann::json::parse(detail::read_text(path));
    return {doc.at("x").get<int>(), doc.at("y").get<int>(), doc.at("w").get<int>(),
            doc.at("h").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::invalid_input, path.string() + ": " + e.what());
  }
}

}  // namespace mslabel
