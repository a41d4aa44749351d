#include "mslabel/label_service.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "binary_io.hpp"
#include "httplib.h"
#include "json.hpp"

namespace mslabel {

namespace fs = std::filesystem;

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string slic_params_key(const SlicParams& p) {
  char buf[160];
  if (p.region_size) {
    std::snprintf(buf, sizeof buf, "S=%.17g;m=%.17g;it=%d;seed=%llu", *p.region_size,
                  p.compactness, p.iterations, static_cast<unsigned long long>(p.seed));
  } else {
    std::snprintf(buf, sizeof buf, "k=%d;m=%.17g;it=%d;seed=%llu", p.target_count.value_or(0),
                  p.compactness, p.iterations, static_cast<unsigned long long>(p.seed));
  }
  return buf;
}

namespace {

std::vector<std::uint8_t> render(const SpectralCube& cube, std::array<int, 3> bands,
                                 const BinaryMask* boundary) {
  for (int b : bands)
    require(b >= 0 && b < cube.channels(), ErrorCategory::invalid_input,
            "band " + std::to_string(b) + " out of range for " + std::to_string(cube.channels()) +
                " channels");
  const std::string header =
      "P6\n" + std::to_string(cube.width()) + " " + std::to_string(cube.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const std::size_t n = cube.plane_size();
  out.resize(header.size() + 3 * n);
  std::uint8_t* px = out.data() + header.size();
  for (int k = 0; k < 3; ++k) {
    const auto plane = cube.data().segment(static_cast<Eigen::Index>(bands[k] * n),
                                           static_cast<Eigen::Index>(n));
    const float lo = n ? plane.minCoeff() : 0.0f;
    const float hi = n ? plane.maxCoeff() : 0.0f;
    const float scale = hi > lo ? 255.0f / (hi - lo) : 0.0f;
    for (std::size_t p = 0; p < n; ++p) {
      const float v = (plane[static_cast<Eigen::Index>(p)] - lo) * scale;
      px[3 * p + k] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  if (boundary) {
    for (std::size_t p = 0; p < n; ++p)
      if (boundary->values[p]) px[3 * p] = px[3 * p + 1] = px[3 * p + 2] = 0;
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> render_display(const SpectralCube& cube, std::array<int, 3> bands) {
  return render(cube, bands, nullptr);
}

std::vector<std::uint8_t> render_overlay(const SpectralCube& cube, std::array<int, 3> bands,
                                         const BinaryMask& boundary) {
  require(boundary.width == cube.width() && boundary.height == cube.height(),
          ErrorCategory::invalid_input, "boundary mask does not match the frame");
  return render(cube, bands, &boundary);
}

struct LabelStore::Record {
  std::string id;
  fs::path cube_path;
  std::mutex mutex;
  std::optional<SpectralCube> cube;
  std::optional<LabelMap> labels;  // loaded together with the cube
  std::map<std::string, std::shared_ptr<const SegmentationMap>> segmentations;
};

LabelStore::LabelStore(fs::path frames_dir, fs::path state_dir, std::vector<ClassInfo> palette)
    : frames_dir_(std::move(frames_dir)), state_dir_(std::move(state_dir)),
      palette_(std::move(palette)) {
  require(!palette_.empty() && palette_.size() < LabelMap::kUnlabeled, ErrorCategory::invalid_input,
          "palette needs 1..254 classes");
  std::error_code ec;
  if (!fs::is_directory(frames_dir_, ec))
    fail(ErrorCategory::io, "frame directory " + frames_dir_.string() + " does not exist");
  fs::create_directories(state_dir_ / "labels", ec);
  if (ec) fail(ErrorCategory::io, "cannot create " + (state_dir_ / "labels").string());
  for (const auto& entry : fs::directory_iterator(frames_dir_)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".msc") continue;
    auto rec = std::make_unique<Record>();
    rec->id = entry.path().stem().string();
    rec->cube_path = entry.path();
    records_.emplace(rec->id, std::move(rec));
  }
  // Continue the journal sequence after a restart.
  std::ifstream journal(state_dir_ / "journal.jsonl");
  std::string line;
  while (std::getline(journal, line)) ++journal_seq_;
}

LabelStore::~LabelStore() = default;

LabelStore::Record& LabelStore::record(const std::string& id) {
  auto it = records_.find(id);
  if (it == records_.end()) fail(ErrorCategory::not_found, "unknown frame '" + id + "'");
  return *it->second;
}

const SpectralCube& LabelStore::cube_locked(Record& r) {
  if (!r.cube) {
    r.cube = read_cube(r.cube_path);
    const auto path = state_dir_ / "labels" / (r.id + ".lbl");
    if (fs::exists(path)) {
      auto labels = decode_labels(detail::read_file(path));
      require(labels.width == r.cube->width() && labels.height == r.cube->height(),
              ErrorCategory::io, "stored labels for '" + r.id + "' do not match the frame");
      labels.palette = palette_;
      r.labels = std::move(labels);
    } else {
      r.labels = LabelMap::unlabeled(r.cube->width(), r.cube->height(), palette_);
    }
  }
  return *r.cube;
}

FrameSummary LabelStore::summary_locked(Record& r) {
  const auto& cube = cube_locked(r);
  const auto bytes = encode_labels(*r.labels);
  return {r.id,
          cube.width(),
          cube.height(),
          cube.channels(),
          r.labels->labeled_count(),
          hex64(fnv1a64(bytes.data(), bytes.size()))};
}

void LabelStore::commit_locked(Record& r, LabelMap labels, const std::string& op) {
  const auto bytes = encode_labels(labels);
  detail::write_file_atomic(state_dir_ / "labels" / (r.id + ".lbl"), bytes);
  {
    std::lock_guard lock(journal_mutex_);
    nlohmann::ordered_json j;
    j["seq"] = ++journal_seq_;
    j["frame"] = r.id;
    j["op"] = op;
    j["labels_hash"] = hex64(fnv1a64(bytes.data(), bytes.size()));
    std::ofstream journal(state_dir_ / "journal.jsonl", std::ios::app);
    journal << j.dump() << "\n";
    journal.flush();
    if (!journal) fail(ErrorCategory::io, "cannot append to the label journal");
  }
  r.labels = std::move(labels);
}

std::vector<FrameSummary> LabelStore::list_frames() {
  std::vector<FrameSummary> out;
  for (auto& [id, rec] : records_) {
    std::lock_guard lock(rec->mutex);
    out.push_back(summary_locked(*rec));
  }
  return out;
}

std::vector<std::uint8_t> LabelStore::display(const std::string& id, std::array<int, 3> bands) {
  auto& r = record(id);
  std::lock_guard lock(r.mutex);
  return render_display(cube_locked(r), bands);
}

SuperpixelView LabelStore::superpixels(const std::string& id, const SlicParams& params) {
  params.validate();
  auto& r = record(id);
  std::lock_guard lock(r.mutex);
  const auto key = slic_params_key(params);
  auto it = r.segmentations.find(key);
  if (it == r.segmentations.end()) {
    auto seg = std::make_shared<const SegmentationMap>(slic_segment(cube_locked(r), params));
    it = r.segmentations.emplace(key, std::move(seg)).first;
  }
  return {key, it->second, boundary_mask(*it->second)};
}

std::vector<std::uint8_t> LabelStore::overlay(const std::string& id, const SuperpixelView& view,
                                              std::array<int, 3> bands) {
  auto& r = record(id);
  std::lock_guard lock(r.mutex);
  return render_overlay(cube_locked(r), bands, view.boundary);
}

FrameSummary LabelStore::put_labels(const std::string& id, const std::string& params_key,
                                    const std::vector<Assignment>& assignments) {
  auto& r = record(id);
  std::lock_guard lock(r.mutex);
  cube_locked(r);
  auto it = r.segmentations.find(params_key);
  if (it == r.segmentations.end())
    fail(ErrorCategory::conflict,
         "superpixels '" + params_key + "' are not current for frame '" + id + "'; refetch them");
  const auto& seg = *it->second;
  for (const auto& a : assignments) {
    require(a.superpixel_id < seg.count, ErrorCategory::invalid_input,
            "superpixel id " + std::to_string(a.superpixel_id) + " out of range");
    require(a.class_id >= 0 && a.class_id < static_cast<int>(palette_.size()),
            ErrorCategory::invalid_input, "class id " + std::to_string(a.class_id) + " out of range");
  }
  // Apply as a per-superpixel table so the request is one pass over the frame.
  std::vector<int> table(seg.count, -1);
  for (const auto& a : assignments) table[a.superpixel_id] = a.class_id;
  LabelMap next = *r.labels;
  for (std::size_t p = 0; p < seg.ids.size(); ++p)
    if (table[seg.ids[p]] >= 0) next.classes[p] = static_cast<std::uint8_t>(table[seg.ids[p]]);
  commit_locked(r, std::move(next), "put");
  return summary_locked(r);
}

FrameSummary LabelStore::propagate(const std::string& id, const std::string& source_id,
                                   const SlicParams& params) {
  LabelMap source;
  {
    auto& s = record(source_id);
    std::lock_guard lock(s.mutex);
    cube_locked(s);
    source = *s.labels;
  }
  require(source.labeled_count() > 0, ErrorCategory::precondition,
          "source frame '" + source_id + "' has no labels");
  const auto view = superpixels(id, params);
  auto& r = record(id);
  std::lock_guard lock(r.mutex);
  cube_locked(r);
  require(source.width == r.labels->width && source.height == r.labels->height,
          ErrorCategory::invalid_input, "source and target frames differ in size");
  auto next = propagate_labels(source, *view.segmentation);
  next.palette = palette_;
  commit_locked(r, std::move(next), "propagate:" + source_id);
  return summary_locked(r);
}

LabelMap LabelStore::labels(const std::string& id) {
  auto& r = record(id);
  std::lock_guard lock(r.mutex);
  cube_locked(r);
  return *r.labels;
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

std::string b64(const std::uint8_t* data, std::size_t size) {
  return httplib::detail::base64_encode(std::string(reinterpret_cast<const char*>(data), size));
}

std::string b64(const std::vector<std::uint8_t>& bytes) { return b64(bytes.data(), bytes.size()); }

json summary_json(const FrameSummary& s) {
  return {{"id", s.id},
          {"width", s.width},
          {"height", s.height},
          {"channels", s.channels},
          {"labeled_pixels", s.labeled_pixels},
          {"labels_hash", s.labels_hash}};
}

void send_error(httplib::Response& res, const Error& e) {
  int status = 500;
  std::string code = "internal";
  switch (e.category()) {
    case ErrorCategory::not_found: status = 404; code = "unknown_frame"; break;
    case ErrorCategory::conflict: status = 409; code = "stale_params_key"; break;
    case ErrorCategory::precondition: status = 412; code = "source_unlabeled"; break;
    case ErrorCategory::invalid_input:
    case ErrorCategory::invalid_spec:
    case ErrorCategory::shape: status = 400; code = "invalid_request"; break;
    default: break;
  }
  res.status = status;
  res.set_content(json{{"error", code}, {"message", e.what()}}.dump(), "application/json");
}

int parse_int(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    const long v = std::stol(text, &used);
    if (used == text.size() && v >= INT32_MIN && v <= INT32_MAX) return static_cast<int>(v);
  } catch (const std::logic_error&) {
  }
  fail(ErrorCategory::invalid_input, std::string(what) + " must be an integer");
}

double parse_double(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::logic_error&) {
  }
  fail(ErrorCategory::invalid_input, std::string(what) + " must be a number");
}

std::array<int, 3> parse_bands(const httplib::Request& req) {
  if (!req.has_param("bands")) return {0, 1, 2};
  const auto text = req.get_param_value("bands");
  std::array<int, 3> bands{};
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const auto end = i < 2 ? text.find(',', pos) : text.size();
    require(end != std::string::npos, ErrorCategory::invalid_input, "bands must be 'r,g,b'");
    bands[i] = parse_int(text.substr(pos, end - pos), "band");
    pos = end + 1;
  }
  return bands;
}

constexpr double kDefaultRegion = 20.0;

SlicParams params_from_query(const httplib::Request& req) {
  SlicParams p;
  p.region_size = req.has_param("region") ? parse_double(req.get_param_value("region"), "region")
                                          : kDefaultRegion;
  if (req.has_param("compactness"))
    p.compactness = parse_double(req.get_param_value("compactness"), "compactness");
  if (req.has_param("seed"))
    p.seed = static_cast<std::uint64_t>(parse_int(req.get_param_value("seed"), "seed"));
  return p;
}

SlicParams params_from_body(const json& body) {
  SlicParams p;
  p.region_size = body.value("region", kDefaultRegion);
  p.compactness = body.value("compactness", p.compactness);
  p.seed = body.value("seed", std::uint64_t{0});
  return p;
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    fail(ErrorCategory::invalid_input, std::string("malformed JSON body: ") + e.what());
  }
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const json::exception& e) {
      send_error(res, Error(ErrorCategory::invalid_input, e.what()));
    }
  };
}

}  // namespace

struct LabelServer::Impl {
  httplib::Server server;
};

LabelServer::LabelServer(LabelStore& store) : impl_(std::make_unique<Impl>()) {
  auto& s = impl_->server;
  LabelStore* st = &store;

  s.Get("/api/frames", guarded([st](const httplib::Request&, httplib::Response& res) {
          json frames = json::array();
          for (const auto& f : st->list_frames()) frames.push_back(summary_json(f));
          res.set_content(json{{"frames", frames}}.dump(), "application/json");
        }));

  s.Get("/api/classes", guarded([st](const httplib::Request&, httplib::Response& res) {
          json classes = json::array();
          int i = 0;
          for (const auto& c : st->classes())
            classes.push_back({{"id", i++}, {"name", c.name}, {"color", c.color}});
          res.set_content(json{{"classes", classes}}.dump(), "application/json");
        }));

  s.Get(R"(/api/frames/([^/]+)/display)",
        guarded([st](const httplib::Request& req, httplib::Response& res) {
          const auto ppm = st->display(req.matches[1], parse_bands(req));
          res.set_content(std::string(ppm.begin(), ppm.end()), "image/x-portable-pixmap");
        }));

  s.Get(R"(/api/frames/([^/]+)/superpixels)",
        guarded([st](const httplib::Request& req, httplib::Response& res) {
          const std::string id = req.matches[1];
          const auto view = st->superpixels(id, params_from_query(req));
          const auto& seg = *view.segmentation;
          const auto* raw = reinterpret_cast<const std::uint8_t*>(seg.ids.data());
          const std::size_t raw_size = seg.ids.size() * sizeof(std::uint32_t);
          json body = {{"frame", id},
                       {"params_key", view.params_key},
                       {"width", seg.width},
                       {"height", seg.height},
                       {"count", seg.count},
                       {"ids_b64", b64(raw, raw_size)},
                       {"ids_hash", hex64(fnv1a64(raw, raw_size))},
                       {"boundary_b64", b64(view.boundary.values)},
                       {"overlay_ppm_b64", b64(st->overlay(id, view, parse_bands(req)))}};
          res.set_content(body.dump(), "application/json");
        }));

  s.Get(R"(/api/frames/([^/]+)/labels)",
        guarded([st](const httplib::Request& req, httplib::Response& res) {
          const auto bytes = encode_labels(st->labels(req.matches[1]));
          res.set_content(std::string(bytes.begin(), bytes.end()), "application/octet-stream");
        }));

  s.Put(R"(/api/frames/([^/]+)/labels)",
        guarded([st](const httplib::Request& req, httplib::Response& res) {
          const auto body = parse_body(req);
          std::vector<Assignment> assignments;
          for (const auto& a : body.at("assignments")) {
            const auto sp = a.at("superpixel_id").get<long long>();
            require(sp >= 0 && sp <= UINT32_MAX, ErrorCategory::invalid_input,
                    "superpixel id out of range");
            assignments.push_back({static_cast<std::uint32_t>(sp), a.at("class_id").get<int>()});
          }
          const auto summary =
              st->put_labels(req.matches[1], body.at("params_key").get<std::string>(), assignments);
          res.set_content(summary_json(summary).dump(), "application/json");
        }));

  s.Post(R"(/api/frames/([^/]+)/propagate)",
         guarded([st](const httplib::Request& req, httplib::Response& res) {
           const auto body = parse_body(req);
           const auto summary = st->propagate(req.matches[1], body.at("source").get<std::string>(),
                                              params_from_body(body));
           res.set_content(summary_json(summary).dump(), "application/json");
         }));
}

LabelServer::~LabelServer() { stop(); }

int LabelServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    require(p > 0, ErrorCategory::io, "cannot bind to " + host);
    return p;
  }
  require(impl_->server.bind_to_port(host, port), ErrorCategory::io,
          "cannot bind to " + host + ":" + std::to_string(port));
  return port;
}

bool LabelServer::run() { return impl_->server.listen_after_bind(); }

void LabelServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

bool LabelServer::is_running() const { return impl_->server.is_running(); }

}  // namespace mslabel
