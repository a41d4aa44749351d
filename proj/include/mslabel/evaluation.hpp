#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mslabel/error.hpp"
#include "mslabel/superpixel.hpp"

namespace mslabel {

/// Mismatches over labeled ground-truth pixels.
double pixel_error_rate(const LabelMap& pred, const LabelMap& gt);

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

struct ConfusionMatrix {
  CountMatrix counts;         // row: ground truth, column: prediction
  Eigen::MatrixXd normalized; // row-stochastic; empty rows stay zero
  std::vector<int> empty_rows;

  int classes() const { return static_cast<int>(counts.rows()); }
  std::int64_t total() const { return counts.sum(); }
  /// Per-class recall (normalized diagonal).
  std::vector<double> recall() const;
  /// 1 - sum_g share_g * normalized[g][g].
  double error_rate() const;
};

ConfusionMatrix confusion_matrix(const LabelMap& pred, const LabelMap& gt, int num_classes);
/// Pools the counts of several (pred, gt) pairs before normalizing.
ConfusionMatrix confusion_matrix(const std::vector<LabelMap>& preds,
                                 const std::vector<LabelMap>& gts, int num_classes);

std::vector<double> class_distribution(const std::vector<LabelMap>& maps, int num_classes);

struct ParetoPoint {
  std::string label;
  double error_rate = 0;
  double gop = 0;

  bool operator==(const ParetoPoint&) const = default;
};

/// True when `a` is at least as good in both coordinates and better in one.
bool dominates(const ParetoPoint& a, const ParetoPoint& b);

/// Non-dominated subset sorted by (gop, error_rate, label). Equal points survive together.
std::vector<ParetoPoint> pareto_front(std::vector<ParetoPoint> points);

std::string pareto_csv(const std::vector<ParetoPoint>& points);
std::vector<ParetoPoint> parse_pareto_csv(const std::string& text);

/// `mode` tags the resolution the numbers were computed at.
std::string evaluation_report_json(const ConfusionMatrix& cm, const std::vector<ClassInfo>& classes,
                                   const std::string& mode = "output_resolution");

/// Nearest-neighbour upsampling of a prediction map to (width, height).
LabelMap upsample_nearest(const LabelMap& labels, int width, int height);

}  // namespace mslabel
