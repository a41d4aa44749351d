#include "mslabel/evaluation.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace mslabel {

namespace {

void require_same_dims(const LabelMap& pred, const LabelMap& gt) {
  require(pred.width == gt.width && pred.height == gt.height, ErrorCategory::invalid_input,
          "prediction is " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
              ", ground truth is " + std::to_string(gt.width) + "x" + std::to_string(gt.height));
}

void accumulate(CountMatrix& counts, const LabelMap& pred, const LabelMap& gt) {
  require_same_dims(pred, gt);
  const auto n = static_cast<int>(counts.rows());
  for (std::size_t i = 0; i < gt.classes.size(); ++i) {
    const int g = gt.classes[i];
    if (g == LabelMap::kUnlabeled) continue;
    const int p = pred.classes[i];
    require(g < n && p < n, ErrorCategory::invalid_input,
            "class index " + std::to_string(std::max(g, p)) + " exceeds " + std::to_string(n) +
                " classes");
    ++counts(g, p);
  }
}

ConfusionMatrix finish(CountMatrix counts) {
  ConfusionMatrix cm;
  const auto n = counts.rows();
  cm.normalized = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index g = 0; g < n; ++g) {
    const auto row = counts.row(g).sum();
    if (row == 0) {
      cm.empty_rows.push_back(static_cast<int>(g));
      continue;
    }
    cm.normalized.row(g) = counts.row(g).cast<double>() / static_cast<double>(row);
  }
  cm.counts = std::move(counts);
  return cm;
}

}  // namespace

double pixel_error_rate(const LabelMap& pred, const LabelMap& gt) {
  require_same_dims(pred, gt);
  std::size_t labeled = 0, wrong = 0;
  for (std::size_t i = 0; i < gt.classes.size(); ++i) {
    if (gt.classes[i] == LabelMap::kUnlabeled) continue;
    ++labeled;
    wrong += pred.classes[i] != gt.classes[i];
  }
  require(labeled > 0, ErrorCategory::invalid_input, "ground truth has no labeled pixels");
  return static_cast<double>(wrong) / static_cast<double>(labeled);
}

std::vector<double> ConfusionMatrix::recall() const {
  std::vector<double> r(static_cast<std::size_t>(classes()));
  for (int g = 0; g < classes(); ++g) r[g] = normalized(g, g);
  return r;
}

double ConfusionMatrix::error_rate() const {
  const auto n = total();
  require(n > 0, ErrorCategory::invalid_input, "confusion matrix is empty");
  double correct = 0;
  for (int g = 0; g < classes(); ++g)
    correct += static_cast<double>(counts.row(g).sum()) / static_cast<double>(n) * normalized(g, g);
  return 1.0 - correct;
}

ConfusionMatrix confusion_matrix(const LabelMap& pred, const LabelMap& gt, int num_classes) {
  require(num_classes >= 1 && num_classes <= 255, ErrorCategory::invalid_input,
          "num_classes must lie in 1..255");
  CountMatrix counts = CountMatrix::Zero(num_classes, num_classes);
  accumulate(counts, pred, gt);
  return finish(std::move(counts));
}

ConfusionMatrix confusion_matrix(const std::vector<LabelMap>& preds,
                                 const std::vector<LabelMap>& gts, int num_classes) {
  require(preds.size() == gts.size(), ErrorCategory::invalid_input,
          "prediction and ground-truth lists differ in length");
  require(num_classes >= 1 && num_classes <= 255, ErrorCategory::invalid_input,
          "num_classes must lie in 1..255");
  CountMatrix counts = CountMatrix::Zero(num_classes, num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) accumulate(counts, preds[i], gts[i]);
  return finish(std::move(counts));
}

std::vector<double> class_distribution(const std::vector<LabelMap>& maps, int num_classes) {
  require(!maps.empty(), ErrorCategory::invalid_input, "class_distribution needs label maps");
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  double labeled = 0;
  for (const auto& m : maps) {
    for (auto c : m.classes) {
      if (c == LabelMap::kUnlabeled) continue;
      require(c < num_classes, ErrorCategory::invalid_input,
              "class index " + std::to_string(c) + " exceeds " + std::to_string(num_classes));
      counts[c] += 1;
      labeled += 1;
    }
  }
  if (labeled > 0)
    for (auto& c : counts) c /= labeled;
  return counts;
}

bool dominates(const ParetoPoint& a, const ParetoPoint& b) {
  return a.error_rate <= b.error_rate && a.gop <= b.gop &&
         (a.error_rate < b.error_rate || a.gop < b.gop);
}

std::vector<ParetoPoint> pareto_front(std::vector<ParetoPoint> points) {
  std::sort(points.begin(), points.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.gop != b.gop) return a.gop < b.gop;
    if (a.error_rate != b.error_rate) return a.error_rate < b.error_rate;
    return a.label < b.label;
  });
  // Sweep gop groups in ascending order; a point survives when it has the
  // group's lowest error and beats every cheaper point strictly.
  std::vector<ParetoPoint> front;
  double best_cheaper = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size();) {
    std::size_t j = i;
    while (j < points.size() && points[j].gop == points[i].gop) ++j;
    const double group_min = points[i].error_rate;
    if (group_min < best_cheaper) {
      for (auto k = i; k < j && points[k].error_rate == group_min; ++k) front.push_back(points[k]);
      best_cheaper = group_min;
    }
    i = j;
  }
  return front;
}

std::string pareto_csv(const std::vector<ParetoPoint>& points) {
  std::ostringstream os;
  os.precision(17);
  os << "label,error_rate,gop\n";
  for (const auto& p : points) os << p.label << ',' << p.error_rate << ',' << p.gop << '\n';
  return os.str();
}

std::vector<ParetoPoint> parse_pareto_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<ParetoPoint> out;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line.rfind("label,", 0) == 0)) continue;
    const auto c2 = line.rfind(',');
    const auto c1 = c2 == std::string::npos ? c2 : line.rfind(',', c2 - 1);
    require(c1 != std::string::npos, ErrorCategory::invalid_input,
            "pareto CSV line " + std::to_string(lineno) + " needs label,error_rate,gop");
    ParetoPoint p;
    p.label = line.substr(0, c1);
    try {
      std::size_t used = 0;
      const auto err_text = line.substr(c1 + 1, c2 - c1 - 1);
      const auto gop_text = line.substr(c2 + 1);
      p.error_rate = std::stod(err_text, &used);
      require(used == err_text.size(), ErrorCategory::invalid_input, "trailing characters");
      p.gop = std::stod(gop_text, &used);
      require(used == gop_text.size(), ErrorCategory::invalid_input, "trailing characters");
    } catch (const std::logic_error&) {
      fail(ErrorCategory::invalid_input,
           "pareto CSV line " + std::to_string(lineno) + " has a malformed number");
    }
    require(p.error_rate >= 0 && p.error_rate <= 1, ErrorCategory::invalid_input,
            "pareto CSV line " + std::to_string(lineno) + ": error_rate outside [0, 1]");
    require(p.gop > 0, ErrorCategory::invalid_input,
            "pareto CSV line " + std::to_string(lineno) + ": gop must be positive");
    out.push_back(std::move(p));
  }
  return out;
}

std::string evaluation_report_json(const ConfusionMatrix& cm, const std::vector<ClassInfo>& classes,
                                   const std::string& mode) {
  nlohmann::ordered_json j;
  j["mode"] = mode;
  j["error_rate"] = cm.error_rate();
  j["pixels"] = cm.total();
  auto counts = nlohmann::ordered_json::array();
  auto normalized = nlohmann::ordered_json::array();
  for (int g = 0; g < cm.classes(); ++g) {
    std::vector<std::int64_t> c(cm.counts.cols());
    std::vector<double> n(cm.normalized.cols());
    for (Eigen::Index p = 0; p < cm.counts.cols(); ++p) {
      c[p] = cm.counts(g, p);
      n[p] = cm.normalized(g, p);
    }
    counts.push_back(c);
    normalized.push_back(n);
  }
  j["confusion"] = {{"counts", counts}, {"normalized", normalized}};
  auto names = nlohmann::ordered_json::array();
  for (int g = 0; g < cm.classes(); ++g)
    names.push_back(g < static_cast<int>(classes.size()) ? classes[g].name
                                                          : "class_" + std::to_string(g));
  j["classes"] = names;
  j["per_class_recall"] = cm.recall();
  j["empty_rows"] = cm.empty_rows;
  return j.dump(2) + "\n";
}

LabelMap upsample_nearest(const LabelMap& labels, int width, int height) {
  require(labels.width > 0 && labels.height > 0, ErrorCategory::invalid_input,
          "cannot upsample an empty label map");
  LabelMap out = LabelMap::unlabeled(width, height, labels.palette);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(labels.height - 1, static_cast<int>(static_cast<long long>(y) * labels.height / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(labels.width - 1, static_cast<int>(static_cast<long long>(x) * labels.width / width));
      out.at(x, y) = labels.at(sx, sy);
    }
  }
  return out;
}

}  // namespace mslabel
