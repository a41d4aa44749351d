#pragma once

#include <algorithm>
#include <map>
#include <queue>
#include <tuple>
#include <vector>

#include "mslabel/evaluation.hpp"
#include "mslabel/superpixel.hpp"

namespace mslabel::testing {

/// O(n^2) scan: keep every point no other point strictly dominates.
inline std::vector<ParetoPoint> pareto_brute_force(const std::vector<ParetoPoint>& pts) {
  std::vector<ParetoPoint> keep;
  for (const auto& p : pts) {
    bool dominated = false;
    for (const auto& q : pts) {
      if (q.error_rate <= p.error_rate && q.gop <= p.gop &&
          (q.error_rate < p.error_rate || q.gop < p.gop)) {
        dominated = true;
        break;
      }
    }
    if (!dominated) keep.push_back(p);
  }
  std::sort(keep.begin(), keep.end(), [](const auto& a, const auto& b) {
    return std::tie(a.gop, a.error_rate, a.label) < std::tie(b.gop, b.error_rate, b.label);
  });
  return keep;
}

/// Mismatch count over labeled ground truth, straight from the rasters.
inline double error_rate_by_scan(const LabelMap& pred, const LabelMap& gt) {
  long long wrong = 0, labeled = 0;
  for (std::size_t i = 0; i < gt.classes.size(); ++i) {
    if (gt.classes[i] == LabelMap::kUnlabeled) continue;
    ++labeled;
    wrong += pred.classes[i] != gt.classes[i];
  }
  return static_cast<double>(wrong) / static_cast<double>(labeled);
}

/// Flood-fill count of 4-connected components per id.
inline std::map<std::uint32_t, int> component_counts(const SegmentationMap& seg) {
  std::vector<char> seen(seg.ids.size(), 0);
  std::map<std::uint32_t, int> comps;
  for (int y = 0; y < seg.height; ++y)
    for (int x = 0; x < seg.width; ++x) {
      const auto start = static_cast<std::size_t>(y) * seg.width + x;
      if (seen[start]) continue;
      const auto id = seg.ids[start];
      ++comps[id];
      std::queue<std::pair<int, int>> q;
      q.push({x, y});
      seen[start] = 1;
      while (!q.empty()) {
        auto [cx, cy] = q.front();
        q.pop();
        const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int nx = cx + dx[k], ny = cy + dy[k];
          if (nx < 0 || ny < 0 || nx >= seg.width || ny >= seg.height) continue;
          const auto n = static_cast<std::size_t>(ny) * seg.width + nx;
          if (seen[n] || seg.ids[n] != id) continue;
          seen[n] = 1;
          q.push({nx, ny});
        }
      }
    }
  return comps;
}

}  // namespace mslabel::testing
