#include "mslabel/superpixel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "binary_io.hpp"
#include "json.hpp"
#include "mslabel/error.hpp"

namespace mslabel {

void SlicParams::validate() const {
  require(target_count.has_value() != region_size.has_value(), ErrorCategory::invalid_input,
          "SLIC needs exactly one of target_count and region_size");
  if (target_count) require(*target_count >= 1, ErrorCategory::invalid_input, "k must be >= 1");
  if (region_size)
    require(*region_size >= 1.0, ErrorCategory::invalid_input, "region size must be >= 1");
  require(compactness > 0.0, ErrorCategory::invalid_input, "compactness must be > 0");
  require(iterations >= 1, ErrorCategory::invalid_input, "iterations must be >= 1");
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), 1));
}

const std::vector<ClassInfo>& default_palette() {
  static const std::vector<ClassInfo> palette = {
      {"car/truck", "#E6194B"}, {"sky", "#4363D8"},  {"building", "#911EB4"},
      {"road/gravel", "#808080"}, {"tree", "#3CB44B"}, {"tram", "#FFE119"},
      {"water", "#42D4F4"},     {"distant-bg", "#F58231"},
  };
  return palette;
}

LabelMap LabelMap::unlabeled(int width, int height, std::vector<ClassInfo> palette) {
  LabelMap m;
  m.width = width;
  m.height = height;
  m.classes.assign(static_cast<std::size_t>(width) * height, kUnlabeled);
  m.palette = std::move(palette);
  return m;
}

std::size_t LabelMap::labeled_count() const {
  return static_cast<std::size_t>(
      std::count_if(classes.begin(), classes.end(), [](auto c) { return c != kUnlabeled; }));
}

namespace {

struct Center {
  std::vector<double> color;
  double x = 0.0;
  double y = 0.0;
};

// Per-channel min-max normalization into pixel-interleaved features.
std::vector<float> normalized_features(const SpectralCube& image) {
  const auto n = image.plane_size();
  const int c = image.channels();
  std::vector<float> feat(n * c);
  for (int ch = 0; ch < c; ++ch) {
    const auto plane = image.plane(ch);
    const float lo = plane.minCoeff();
    const float hi = plane.maxCoeff();
    const float scale = hi > lo ? 1.0f / (hi - lo) : 0.0f;
    const float* src = image.data().data() + ch * n;
    for (std::size_t p = 0; p < n; ++p) feat[p * c + ch] = (src[p] - lo) * scale;
  }
  return feat;
}

double squared_gradient(const std::vector<float>& feat, int w, int h, int c, int x, int y) {
  const auto px = [&](int xx, int yy) {
    xx = std::clamp(xx, 0, w - 1);
    yy = std::clamp(yy, 0, h - 1);
    return feat.data() + (static_cast<std::size_t>(yy) * w + xx) * c;
  };
  const float* l = px(x - 1, y);
  const float* r = px(x + 1, y);
  const float* u = px(x, y - 1);
  const float* d = px(x, y + 1);
  double g = 0.0;
  for (int k = 0; k < c; ++k) {
    const double dx = r[k] - l[k];
    const double dy = d[k] - u[k];
    g += dx * dx + dy * dy;
  }
  return g;
}

struct DisjointSet {
  std::vector<int> parent;
  std::vector<std::size_t> size;

  explicit DisjointSet(const std::vector<std::size_t>& sizes)
      : parent(sizes.size()), size(sizes) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
  void merge_into(int from, int to) {
    from = find(from);
    to = find(to);
    if (from == to) return;
    parent[from] = to;
    size[to] += size[from];
  }
};

// Splits every label into 4-connected components, folds components smaller
// than `min_area` into their largest neighbor, and renumbers in scan order.
SegmentationMap enforce_connectivity(const std::vector<int>& labels, int w, int h,
                                     double min_area) {
  const std::size_t n = labels.size();
  std::vector<int> comp(n, -1);
  std::vector<std::size_t> comp_size;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    const int id = static_cast<int>(comp_size.size());
    comp_size.push_back(0);
    comp[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const auto p = stack.back();
      stack.pop_back();
      ++comp_size[id];
      const int x = static_cast<int>(p % w);
      const int y = static_cast<int>(p / w);
      const std::array<std::pair<int, int>, 4> nbrs = {
          {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}}};
      for (auto [nx, ny] : nbrs) {
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const auto q = static_cast<std::size_t>(ny) * w + nx;
        if (comp[q] < 0 && labels[q] == labels[p]) {
          comp[q] = id;
          stack.push_back(q);
        }
      }
    }
  }

  const auto ncomp = comp_size.size();
  std::vector<std::vector<int>> adjacent(ncomp);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto p = static_cast<std::size_t>(y) * w + x;
      if (x + 1 < w && comp[p + 1] != comp[p]) {
        adjacent[comp[p]].push_back(comp[p + 1]);
        adjacent[comp[p + 1]].push_back(comp[p]);
      }
      if (y + 1 < h && comp[p + w] != comp[p]) {
        adjacent[comp[p]].push_back(comp[p + w]);
        adjacent[comp[p + w]].push_back(comp[p]);
      }
    }
  }
  for (auto& a : adjacent) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }

  DisjointSet sets(comp_size);
  for (std::size_t c = 0; c < ncomp; ++c) {
    if (static_cast<double>(comp_size[c]) >= min_area) continue;
    const int root = sets.find(static_cast<int>(c));
    if (static_cast<double>(sets.size[root]) >= min_area) continue;
    int best = -1;
    for (int nb : adjacent[c]) {
      const int r = sets.find(nb);
      if (r == root) continue;
      if (best < 0 || sets.size[r] > sets.size[best] ||
          (sets.size[r] == sets.size[best] && r < best)) {
        best = r;
      }
    }
    if (best >= 0) sets.merge_into(root, best);
  }

  SegmentationMap seg;
  seg.width = w;
  seg.height = h;
  seg.ids.resize(n);
  std::vector<std::int64_t> final_id(ncomp, -1);
  for (std::size_t p = 0; p < n; ++p) {
    const int root = sets.find(comp[p]);
    if (final_id[root] < 0) final_id[root] = seg.count++;
    seg.ids[p] = static_cast<std::uint32_t>(final_id[root]);
  }
  return seg;
}

}  // namespace

SegmentationMap slic_segment(const SpectralCube& image, const SlicParams& params) {
  params.validate();
  require(!image.empty() && image.channels() > 0, ErrorCategory::invalid_input,
          "SLIC input image is empty");
  const int w = image.width();
  const int h = image.height();
  const int nc = image.channels();
  const double npix = static_cast<double>(w) * h;

  double step = 0.0;
  int nx = 0;
  int ny = 0;
  if (params.target_count) {
    const int k = *params.target_count;
    require(k <= w * h, ErrorCategory::invalid_input, "k exceeds pixel count");
    step = std::sqrt(npix / k);
    nx = std::clamp(static_cast<int>(std::lround(w / step)), 1, w);
    ny = std::clamp(static_cast<int>(std::lround(static_cast<double>(k) / nx)), 1, h);
  } else {
    step = *params.region_size;
    nx = std::clamp(static_cast<int>(std::lround(w / step)), 1, w);
    ny = std::clamp(static_cast<int>(std::lround(h / step)), 1, h);
  }

  double phase_x = 0.5;
  double phase_y = 0.5;
  if (params.seed != 0) {
    std::mt19937_64 rng(params.seed);
    std::uniform_real_distribution<double> phase(0.25, 0.75);
    phase_x = phase(rng);
    phase_y = phase(rng);
  }

  const auto feat = normalized_features(image);
  const auto pixel = [&](int x, int y) {
    return feat.data() + (static_cast<std::size_t>(y) * w + x) * nc;
  };

  std::vector<Center> centers;
  centers.reserve(static_cast<std::size_t>(nx) * ny);
  const double cell_w = static_cast<double>(w) / nx;
  const double cell_h = static_cast<double>(h) / ny;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      int cx = std::min(w - 1, static_cast<int>((i + phase_x) * cell_w));
      int cy = std::min(h - 1, static_cast<int>((j + phase_y) * cell_h));
      double best = std::numeric_limits<double>::infinity();
      int bx = cx;
      int by = cy;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int x = cx + dx;
          const int y = cy + dy;
          if (x < 0 || y < 0 || x >= w || y >= h) continue;
          const double g = squared_gradient(feat, w, h, nc, x, y);
          if (g < best) {
            best = g;
            bx = x;
            by = y;
          }
        }
      }
      Center c;
      c.x = bx;
      c.y = by;
      c.color.assign(pixel(bx, by), pixel(bx, by) + nc);
      centers.push_back(std::move(c));
    }
  }

  const double spatial_scale = (params.compactness * params.compactness) / (step * step);
  const auto n = static_cast<std::size_t>(w) * h;
  std::vector<int> labels(n, -1);
  std::vector<double> dist(n);
  const auto distance2 = [&](const Center& c, int x, int y) {
    const float* f = pixel(x, y);
    double dc = 0.0;
    for (int k = 0; k < nc; ++k) {
      const double d = f[k] - c.color[k];
      dc += d * d;
    }
    const double dx = x - c.x;
    const double dy = y - c.y;
    return dc + (dx * dx + dy * dy) * spatial_scale;
  };

  for (int iter = 0; iter < params.iterations; ++iter) {
    std::fill(labels.begin(), labels.end(), -1);
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      const auto& c = centers[ci];
      const int x0 = std::max(0, static_cast<int>(std::ceil(c.x - step)));
      const int x1 = std::min(w - 1, static_cast<int>(std::floor(c.x + step)));
      const int y0 = std::max(0, static_cast<int>(std::ceil(c.y - step)));
      const int y1 = std::min(h - 1, static_cast<int>(std::floor(c.y + step)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const auto p = static_cast<std::size_t>(y) * w + x;
          const double d = distance2(c, x, y);
          if (d < dist[p]) {
            dist[p] = d;
            labels[p] = static_cast<int>(ci);
          }
        }
      }
    }
    // Pixels outside every window fall back to a global nearest-center search.
    for (std::size_t p = 0; p < n; ++p) {
      if (labels[p] >= 0) continue;
      const int x = static_cast<int>(p % w);
      const int y = static_cast<int>(p / w);
      for (std::size_t ci = 0; ci < centers.size(); ++ci) {
        const double d = distance2(centers[ci], x, y);
        if (d < dist[p]) {
          dist[p] = d;
          labels[p] = static_cast<int>(ci);
        }
      }
    }

    std::vector<Center> sums(centers.size());
    std::vector<std::size_t> counts(centers.size(), 0);
    for (auto& s : sums) s.color.assign(nc, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
      auto& s = sums[labels[p]];
      const float* f = feat.data() + p * nc;
      for (int k = 0; k < nc; ++k) s.color[k] += f[k];
      s.x += static_cast<double>(p % w);
      s.y += static_cast<double>(p / w);
      ++counts[labels[p]];
    }
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      if (counts[ci] == 0) continue;
      const double inv = 1.0 / static_cast<double>(counts[ci]);
      for (int k = 0; k < nc; ++k) centers[ci].color[k] = sums[ci].color[k] * inv;
      centers[ci].x = sums[ci].x * inv;
      centers[ci].y = sums[ci].y * inv;
    }
  }

  return enforce_connectivity(labels, w, h, step * step / 4.0);
}

BinaryMask boundary_mask(const SegmentationMap& seg) {
  BinaryMask mask;
  mask.width = seg.width;
  mask.height = seg.height;
  mask.values.assign(seg.ids.size(), 0);
  for (int y = 0; y < seg.height; ++y) {
    for (int x = 0; x < seg.width; ++x) {
      const auto id = seg.at(x, y);
      const bool edge = (x > 0 && seg.at(x - 1, y) != id) ||
                        (x + 1 < seg.width && seg.at(x + 1, y) != id) ||
                        (y > 0 && seg.at(x, y - 1) != id) ||
                        (y + 1 < seg.height && seg.at(x, y + 1) != id);
      mask.values[static_cast<std::size_t>(y) * seg.width + x] = edge ? 1 : 0;
    }
  }
  return mask;
}

LabelMap assign_label(const LabelMap& labels, const SegmentationMap& seg,
                      std::uint32_t superpixel_id, std::uint8_t class_id) {
  require(labels.width == seg.width && labels.height == seg.height, ErrorCategory::invalid_input,
          "label map and segmentation differ in size");
  require(superpixel_id < seg.count, ErrorCategory::invalid_input,
          "superpixel id " + std::to_string(superpixel_id) + " out of range");
  require(class_id < labels.palette.size(), ErrorCategory::invalid_input,
          "class id " + std::to_string(class_id) + " out of range");
  LabelMap out = labels;
  for (std::size_t p = 0; p < seg.ids.size(); ++p) {
    if (seg.ids[p] == superpixel_id) out.classes[p] = class_id;
  }
  return out;
}

LabelMap propagate_labels(const LabelMap& prev, const SegmentationMap& seg) {
  require(prev.width == seg.width && prev.height == seg.height, ErrorCategory::invalid_input,
          "label map and segmentation differ in size");
  // Bin 255 holds the unlabeled votes, so it loses every tie.
  std::vector<std::array<std::uint32_t, 256>> votes(seg.count);
  for (auto& v : votes) v.fill(0);
  for (std::size_t p = 0; p < seg.ids.size(); ++p) ++votes[seg.ids[p]][prev.classes[p]];
  std::vector<std::uint8_t> winner(seg.count, LabelMap::kUnlabeled);
  for (std::uint32_t s = 0; s < seg.count; ++s) {
    const auto& v = votes[s];
    winner[s] = static_cast<std::uint8_t>(std::max_element(v.begin(), v.end()) - v.begin());
  }
  LabelMap out = prev;
  for (std::size_t p = 0; p < seg.ids.size(); ++p) out.classes[p] = winner[seg.ids[p]];
  return out;
}

std::vector<std::uint8_t> encode_labels(const LabelMap& labels) {
  detail::ByteWriter w;
  w.magic("LBL1");
  w.u32(static_cast<std::uint32_t>(labels.width));
  w.u32(static_cast<std::uint32_t>(labels.height));
  w.u32(static_cast<std::uint32_t>(labels.palette.size()));
  w.raw(labels.classes.data(), labels.classes.size());
  return w.bytes();
}

LabelMap decode_labels(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "LBL1");
  r.expect_magic("LBL1");
  LabelMap m;
  m.width = static_cast<int>(r.u32());
  m.height = static_cast<int>(r.u32());
  const auto num_classes = r.u32();
  require(num_classes <= 255, ErrorCategory::io, "LBL1: too many classes");
  const auto count = static_cast<std::uint64_t>(m.width) * m.height;
  require(count == r.remaining(), ErrorCategory::io, "LBL1: payload size does not match header");
  m.classes.resize(count);
  r.raw(m.classes.data(), count);
  for (auto c : m.classes) {
    require(c < num_classes || c == LabelMap::kUnlabeled, ErrorCategory::io,
            "LBL1: class index out of range");
  }
  if (num_classes == default_palette().size()) {
    m.palette = default_palette();
  } else {
    for (std::uint32_t i = 0; i < num_classes; ++i)
      m.palette.push_back({"class" + std::to_string(i), "#000000"});
  }
  return m;
}

std::string palette_json(const std::vector<ClassInfo>& palette) {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < palette.size(); ++i) {
    entries.push_back({{"index", i}, {"name", palette[i].name}, {"color", palette[i].color}});
  }
  return nlohmann::json{{"palette", entries}}.dump(2) + "\n";
}

std::vector<ClassInfo> parse_palette_json(const std::string& text) {
  std::vector<ClassInfo> palette;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& e : doc.at("palette")) {
      const auto index = e.at("index").get<std::size_t>();
      if (palette.size() <= index) palette.resize(index + 1);
      palette[index] = {e.at("name").get<std::string>(), e.at("color").get<std::string>()};
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::invalid_input, std::string("palette: ") + e.what());
  }
  return palette;
}

void write_labels(const std::filesystem::path& path, const LabelMap& labels) {
  detail::write_file_atomic(path, encode_labels(labels));
  auto sidecar = path;
  sidecar += ".json";
  detail::write_text_atomic(sidecar, palette_json(labels.palette));
}

LabelMap read_labels(const std::filesystem::path& path) {
  auto labels = decode_labels(detail::read_file(path));
  auto sidecar = path;
  sidecar += ".json";
  if (std::filesystem::exists(sidecar)) {
    auto palette = parse_palette_json(detail::read_text(sidecar));
    require(palette.size() == labels.palette.size(), ErrorCategory::io,
            "palette sidecar disagrees with LBL1 class count");
    labels.palette = std::move(palette);
  }
  return labels;
}

std::vector<std::uint8_t> encode_segmentation(const SegmentationMap& seg) {
  detail::ByteWriter w;
  w.magic("SEG1");
  w.u32(static_cast<std::uint32_t>(seg.width));
  w.u32(static_cast<std::uint32_t>(seg.height));
  w.u32(seg.count);
  w.raw(seg.ids.data(), seg.ids.size() * sizeof(std::uint32_t));
  return w.bytes();
}

SegmentationMap decode_segmentation(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "SEG1");
  r.expect_magic("SEG1");
  SegmentationMap seg;
  seg.width = static_cast<int>(r.u32());
  seg.height = static_cast<int>(r.u32());
  seg.count = r.u32();
  const auto count = static_cast<std::uint64_t>(seg.width) * seg.height;
  require(count * 4 == r.remaining(), ErrorCategory::io, "SEG1: payload size mismatch");
  seg.ids.resize(count);
  r.raw(seg.ids.data(), count * 4);
  for (auto id : seg.ids) require(id < seg.count, ErrorCategory::io, "SEG1: id out of range");
  return seg;
}

}  // namespace mslabel
