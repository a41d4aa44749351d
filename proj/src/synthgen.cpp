#include "mslabel/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "json.hpp"

namespace mslabel {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<const Region*> paint_order(const SceneSpec& spec) {
  std::vector<const Region*> order;
  for (const auto& r : spec.regions) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(),
                   [](const Region* a, const Region* b) { return a->z < b->z; });
  return order;
}

int class_at(const std::vector<const Region*>& order, const SceneSpec& spec, double u, double v) {
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->contains(u, v)) return (*it)->class_index;
  return spec.background_class.value_or(-1);
}

}  // namespace

bool Region::contains(double u, double v) const {
  if (shape == RegionShape::rect)
    return u >= cx - w / 2 && u < cx + w / 2 && v >= cy - h / 2 && v < cy + h / 2;
  const double a = (u - cx) / (w / 2);
  const double b = (v - cy) / (h / 2);
  return a * a + b * b <= 1.0;
}

void SceneSpec::validate() const {
  require(width >= 1 && height >= 1, ErrorCategory::invalid_spec, "scene size must be positive");
  require(channels >= 1, ErrorCategory::invalid_spec, "scene needs at least one channel");
  const int n = static_cast<int>(classes.size());
  require(n >= 1 && n <= 255, ErrorCategory::invalid_spec, "scene needs 1..255 classes");
  require(static_cast<int>(signatures.size()) == n, ErrorCategory::invalid_spec,
          "scene needs one signature per class");
  for (int i = 0; i < n; ++i) {
    const auto& s = signatures[i];
    const auto where = "signature " + std::to_string(i);
    require(s.class_index == i, ErrorCategory::invalid_spec, where + " is out of class order");
    require(static_cast<int>(s.mean.size()) == channels &&
                static_cast<int>(s.noise_sigma.size()) == channels,
            ErrorCategory::invalid_spec, where + " needs " + std::to_string(channels) + " entries");
    for (double m : s.mean)
      require(m >= 0 && m <= 1, ErrorCategory::invalid_spec, where + " has a mean outside [0, 1]");
    for (double sg : s.noise_sigma)
      require(sg >= 0, ErrorCategory::invalid_spec, where + " has a negative sigma");
  }
  if (background_class)
    require(*background_class >= 0 && *background_class < n, ErrorCategory::invalid_spec,
            "background class out of range");
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto& r = regions[i];
    const auto where = "region " + std::to_string(i);
    require(r.class_index >= 0 && r.class_index < n, ErrorCategory::invalid_spec,
            where + " has an unknown class");
    require(r.w > 0 && r.h > 0, ErrorCategory::invalid_spec, where + " has no area");
    require(r.jitter.dx >= 0 && r.jitter.dy >= 0 && r.jitter.dw >= 0 && r.jitter.dw < 1 &&
                r.jitter.dh >= 0 && r.jitter.dh < 1,
            ErrorCategory::invalid_spec, where + " has invalid jitter bounds");
  }
}

SceneSpec default_scene_template(int width, int height) {
  SceneSpec spec;
  spec.width = width;
  spec.height = height;
  spec.channels = 28;
  spec.classes = default_palette();
  spec.background_class = 7;

  struct Look {
    double r, g, b, lo, hi;  // RGB, then spectral bands ramping lo -> hi
  };
  const Look looks[8] = {
      {0.45, 0.45, 0.45, 0.30, 0.85},  // car/truck
      {0.55, 0.70, 0.90, 0.80, 0.50},  // sky
      {0.60, 0.42, 0.38, 0.55, 0.60},  // building
      {0.45, 0.45, 0.45, 0.40, 0.40},  // road/gravel
      {0.20, 0.50, 0.22, 0.15, 0.80},  // tree
      {0.90, 0.85, 0.20, 0.70, 0.65},  // tram
      {0.10, 0.30, 0.50, 0.25, 0.05},  // water
      {0.62, 0.62, 0.70, 0.60, 0.55},  // distant-bg
  };
  for (int c = 0; c < 8; ++c) {
    ClassSignature s;
    s.class_index = c;
    s.mean = {looks[c].r, looks[c].g, looks[c].b};
    for (int j = 0; j < 25; ++j) s.mean.push_back(looks[c].lo + (looks[c].hi - looks[c].lo) * j / 24.0);
    s.noise_sigma.assign(28, 0.05);
    spec.signatures.push_back(std::move(s));
  }

  const auto rect = [](int cls, double cx, double cy, double w, double h, int z, Jitter j) {
    return Region{RegionShape::rect, cls, cx, cy, w, h, z, j};
  };
  spec.regions = {
      rect(1, 0.50, 0.15, 1.00, 0.30, 0, {0, 0.04, 0, 0.15}),
      rect(2, 0.22, 0.42, 0.34, 0.30, 1, {0.06, 0.03, 0.15, 0.15}),
      rect(2, 0.76, 0.40, 0.30, 0.34, 1, {0.06, 0.03, 0.15, 0.15}),
      Region{RegionShape::ellipse, 4, 0.50, 0.45, 0.20, 0.28, 2, {0.12, 0.03, 0.2, 0.2}},
      rect(6, 0.86, 0.60, 0.28, 0.08, 1, {0.05, 0.01, 0.1, 0.1}),
      rect(3, 0.50, 0.82, 1.00, 0.36, 1, {0, 0.03, 0, 0.1}),
      rect(5, 0.30, 0.66, 0.36, 0.10, 3, {0.15, 0.02, 0.1, 0.1}),
      // Cars roam along the road so their position alone predicts little.
      rect(0, 0.25, 0.77, 0.18, 0.13, 4, {0.30, 0.04, 0.2, 0.2}),
      rect(0, 0.70, 0.77, 0.18, 0.13, 4, {0.30, 0.04, 0.2, 0.2}),
      rect(0, 0.35, 0.91, 0.18, 0.13, 4, {0.30, 0.04, 0.2, 0.2}),
      rect(0, 0.80, 0.91, 0.18, 0.13, 4, {0.30, 0.04, 0.2, 0.2}),
  };
  return spec;
}

LabelMap rasterize_layout(const SceneSpec& spec) {
  spec.validate();
  const auto order = paint_order(spec);
  LabelMap labels = LabelMap::unlabeled(spec.width, spec.height, spec.classes);
  for (int y = 0; y < spec.height; ++y) {
    const double v = (y + 0.5) / spec.height;
    for (int x = 0; x < spec.width; ++x) {
      const int c = class_at(order, spec, (x + 0.5) / spec.width, v);
      require(c >= 0, ErrorCategory::invalid_spec,
              "pixel (" + std::to_string(x) + ", " + std::to_string(y) +
                  ") is not covered and the scene has no background class");
      labels.at(x, y) = static_cast<std::uint8_t>(c);
    }
  }
  return labels;
}

std::vector<double> layout_area_fractions(const SceneSpec& spec, int supersample) {
  spec.validate();
  require(supersample >= 1, ErrorCategory::invalid_input, "supersample must be >= 1");
  const auto order = paint_order(spec);
  std::vector<double> area(spec.classes.size(), 0.0);
  const long long gw = static_cast<long long>(spec.width) * supersample;
  const long long gh = static_cast<long long>(spec.height) * supersample;
  for (long long y = 0; y < gh; ++y) {
    const double v = (y + 0.5) / static_cast<double>(gh);
    for (long long x = 0; x < gw; ++x) {
      const int c = class_at(order, spec, (x + 0.5) / static_cast<double>(gw), v);
      if (c < 0) continue;
      area[c] += 1;
    }
  }
  for (auto& a : area) a /= static_cast<double>(gw * gh);
  return area;
}

Scene generate_scene(const SceneSpec& spec) {
  Scene scene{SpectralCube(spec.width, spec.height, spec.channels), rasterize_layout(spec)};
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto& cls = scene.labels.classes;
  auto& data = scene.image.data();
  const std::size_t plane = scene.image.plane_size();
  for (int c = 0; c < spec.channels; ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      const auto& sig = spec.signatures[cls[p]];
      const double sigma = sig.noise_sigma[c];
      double v = sig.mean[c];
      if (sigma > 0) v += sigma * normal(rng);
      data[c * plane + p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return scene;
}

SceneSpec jitter_layout(const SceneSpec& spec, std::uint64_t seed) {
  SceneSpec out = spec;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (auto& r : out.regions) {
    const double ux = unit(rng), uy = unit(rng), uw = unit(rng), uh = unit(rng);
    r.cx += r.jitter.dx * ux;
    r.cy += r.jitter.dy * uy;
    r.w *= 1.0 + r.jitter.dw * uw;
    r.h *= 1.0 + r.jitter.dh * uh;
    r.jitter = {};
  }
  return out;
}

std::uint64_t frame_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index));
}

DatasetManifest generate_dataset(std::size_t n_train, std::size_t n_test, const SceneSpec& tpl,
                                 std::uint64_t seed, const std::filesystem::path& out_dir) {
  require(n_train >= 1 && n_test >= 1, ErrorCategory::invalid_input,
          "dataset needs at least one train and one test frame");
  tpl.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorCategory::io, "cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<FrameEntry> frames;
  for (std::size_t i = 0; i < n_train + n_test; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "frame_%03zu", i);
    const auto fs = frame_seed(seed, i);
    auto spec = jitter_layout(tpl, fs);
    spec.seed = splitmix64(fs);
    const auto scene = generate_scene(spec);
    FrameEntry e{id, out_dir / (std::string(id) + ".msc"), out_dir / (std::string(id) + ".lbl"),
                 Split::train};
    write_cube(e.cube, scene.image);
    write_labels(e.labels, scene.labels);
    frames.push_back(std::move(e));
  }
  auto manifest = split_dataset(std::move(frames), n_train, n_test, seed);
  write_manifest(out_dir / "manifest.json", manifest);
  return manifest;
}

std::string scene_spec_to_json(const SceneSpec& spec) {
  nlohmann::ordered_json j;
  j["width"] = spec.width;
  j["height"] = spec.height;
  j["channels"] = spec.channels;
  j["background"] = spec.background_class ? nlohmann::ordered_json(*spec.background_class) : nullptr;
  j["seed"] = spec.seed;
  auto classes = nlohmann::ordered_json::array();
  for (const auto& c : spec.classes) classes.push_back({{"name", c.name}, {"color", c.color}});
  j["classes"] = classes;
  auto sigs = nlohmann::ordered_json::array();
  for (const auto& s : spec.signatures)
    sigs.push_back({{"class", s.class_index}, {"mean", s.mean}, {"sigma", s.noise_sigma}});
  j["signatures"] = sigs;
  auto regions = nlohmann::ordered_json::array();
  for (const auto& r : spec.regions)
    regions.push_back({{"shape", r.shape == RegionShape::rect ? "rect" : "ellipse"},
                       {"class", r.class_index},
                       {"cx", r.cx},
                       {"cy", r.cy},
                       {"w", r.w},
                       {"h", r.h},
                       {"z", r.z},
                       {"jitter",
                        {{"dx", r.jitter.dx}, {"dy", r.jitter.dy}, {"dw", r.jitter.dw},
                         {"dh", r.jitter.dh}}}});
  j["regions"] = regions;
  return j.dump(2) + "\n";
}

SceneSpec parse_scene_spec(const std::string& text) {
  SceneSpec spec;
  try {
    const auto j = nlohmann::json::parse(text);
    spec.width = j.at("width").get<int>();
    spec.height = j.at("height").get<int>();
    spec.channels = j.at("channels").get<int>();
    if (j.contains("background") && !j.at("background").is_null())
      spec.background_class = j.at("background").get<int>();
    spec.seed = j.value("seed", std::uint64_t{0});
    for (const auto& c : j.at("classes"))
      spec.classes.push_back({c.at("name").get<std::string>(), c.value("color", "#000000")});
    for (const auto& s : j.at("signatures"))
      spec.signatures.push_back({s.at("class").get<int>(), s.at("mean").get<std::vector<double>>(),
                                 s.at("sigma").get<std::vector<double>>()});
    for (const auto& r : j.at("regions")) {
      Region reg;
      const auto shape = r.value("shape", std::string("rect"));
      require(shape == "rect" || shape == "ellipse", ErrorCategory::invalid_spec,
              "region shape must be 'rect' or 'ellipse'");
      reg.shape = shape == "rect" ? RegionShape::rect : RegionShape::ellipse;
      reg.class_index = r.at("class").get<int>();
      reg.cx = r.at("cx").get<double>();
      reg.cy = r.at("cy").get<double>();
      reg.w = r.at("w").get<double>();
      reg.h = r.at("h").get<double>();
      reg.z = r.value("z", 0);
      if (r.contains("jitter")) {
        const auto& jt = r.at("jitter");
        reg.jitter = {jt.value("dx", 0.0), jt.value("dy", 0.0), jt.value("dw", 0.0),
                      jt.value("dh", 0.0)};
      }
      spec.regions.push_back(reg);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::invalid_spec, std::string("scene spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

}  // namespace mslabel
