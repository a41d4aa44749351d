#include "mslabel/training.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <set>

#include "binary_io.hpp"
#include "json.hpp"

namespace mslabel {

namespace fs = std::filesystem;

std::size_t DatasetManifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      frames.begin(), frames.end(), [&](const FrameEntry& f) { return f.split == split; }));
}

std::vector<FrameEntry> DatasetManifest::subset(Split split) const {
  std::vector<FrameEntry> out;
  for (const auto& f : frames)
    if (f.split == split) out.push_back(f);
  return out;
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& f : frames) {
    require(!f.id.empty(), ErrorCategory::invalid_input, "manifest frame with empty id");
    require(ids.insert(f.id).second, ErrorCategory::invalid_input,
            "duplicate frame id '" + f.id + "' in manifest");
  }
}

DatasetManifest split_dataset(std::vector<FrameEntry> frames, std::size_t n_train,
                              std::size_t n_test, std::uint64_t seed) {
  require(n_train + n_test <= frames.size(), ErrorCategory::invalid_input,
          "split needs " + std::to_string(n_train + n_test) + " frames, have " +
              std::to_string(frames.size()));
  std::mt19937_64 rng(seed);
  std::shuffle(frames.begin(), frames.end(), rng);
  frames.resize(n_train + n_test);
  for (std::size_t i = 0; i < frames.size(); ++i)
    frames[i].split = i < n_train ? Split::train : Split::test;
  // Keep a stable listing order inside each split.
  std::stable_sort(frames.begin(), frames.end(), [](const FrameEntry& a, const FrameEntry& b) {
    if (a.split != b.split) return a.split == Split::train;
    return a.id < b.id;
  });
  DatasetManifest m{seed, std::move(frames)};
  m.validate();
  return m;
}

namespace {

std::string relative_to(const fs::path& p, const fs::path& base) {
  if (base.empty()) return p.generic_string();
  const auto rel = fs::absolute(p).lexically_normal().lexically_relative(
      fs::absolute(base).lexically_normal());
  return rel.empty() ? p.generic_string() : rel.generic_string();
}

fs::path resolve(const std::string& p, const fs::path& base) {
  fs::path path(p);
  return (path.is_relative() && !base.empty()) ? base / path : path;
}

}  // namespace

std::string manifest_to_json(const DatasetManifest& manifest, const fs::path& base) {
  nlohmann::ordered_json j;
  j["seed"] = manifest.seed;
  j["frames"] = nlohmann::ordered_json::array();
  for (const auto& f : manifest.frames) {
    j["frames"].push_back({{"id", f.id},
                           {"cube", relative_to(f.cube, base)},
                           {"labels", relative_to(f.labels, base)},
                           {"split", f.split == Split::train ? "train" : "test"}});
  }
  return j.dump(2) + "\n";
}

DatasetManifest parse_manifest(const std::string& text, const fs::path& base) {
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.seed = j.value("seed", std::uint64_t{0});
    for (const auto& f : j.at("frames")) {
      FrameEntry e;
      e.id = f.at("id").get<std::string>();
      e.cube = resolve(f.at("cube").get<std::string>(), base);
      e.labels = resolve(f.at("labels").get<std::string>(), base);
      const auto split = f.at("split").get<std::string>();
      require(split == "train" || split == "test", ErrorCategory::invalid_input,
              "frame '" + e.id + "' has split '" + split + "'");
      e.split = split == "train" ? Split::train : Split::test;
      m.frames.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::invalid_input, std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  detail::write_text_atomic(path, manifest_to_json(manifest, path.parent_path()));
}

DatasetManifest read_manifest(const fs::path& path) {
  return parse_manifest(detail::read_text(path), path.parent_path());
}

LabelMap downsample_labels(const LabelMap& labels, int factor) {
  require(factor >= 1, ErrorCategory::invalid_input, "downsample factor must be >= 1");
  LabelMap out = LabelMap::unlabeled(labels.width / factor, labels.height / factor,
                                     labels.palette);
  std::array<int, 256> votes{};
  for (int by = 0; by < out.height; ++by) {
    for (int bx = 0; bx < out.width; ++bx) {
      votes.fill(0);
      for (int y = by * factor; y < (by + 1) * factor; ++y)
        for (int x = bx * factor; x < (bx + 1) * factor; ++x) ++votes[labels.at(x, y)];
      int best = LabelMap::kUnlabeled;
      int best_votes = 0;
      for (int c = 0; c < LabelMap::kUnlabeled; ++c) {
        if (votes[c] > best_votes) {
          best = c;
          best_votes = votes[c];
        }
      }
      out.at(bx, by) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

int output_stride(const NetworkSpec& spec) {
  int stride = 1;
  for (const auto* list : {&spec.extractor, &spec.classifier})
    for (const auto& l : *list)
      if (l.kind == LayerKind::maxpool2 || l.kind == LayerKind::avgpool2 ||
          (l.kind == LayerKind::resblock && l.pool))
        stride *= 2;
  return stride;
}

void TrainConfig::validate() const {
  require(epochs >= 1, ErrorCategory::invalid_input, "epochs must be >= 1");
  require(adam.lr >= 0, ErrorCategory::invalid_input, "learning rate must be >= 0");
  require(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1,
          ErrorCategory::invalid_input, "Adam betas must lie in [0, 1)");
  require(adam.eps > 0, ErrorCategory::invalid_input, "Adam eps must be > 0");
  require(batch_size >= 1, ErrorCategory::invalid_input, "batch size must be >= 1");
}

std::string History::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["train_err"] = e.train_err;
    j["test_err"] = e.test_err ? nlohmann::ordered_json(*e.test_err) : nullptr;
    out += j.dump() + "\n";
  }
  return out;
}

Frame DiskFrameSource::load(const FrameEntry& entry, FramePurpose) {
  return Frame{entry.id, read_cube(entry.cube), read_labels(entry.labels)};
}

template <typename Scalar>
Tensor<Scalar> cube_to_tensor(const SpectralCube& cube, bool rgb_only) {
  const int channels = rgb_only ? 3 : cube.channels();
  require(channels <= cube.channels(), ErrorCategory::invalid_input,
          "RGB-only mode needs at least 3 channels");
  auto t = Tensor<Scalar>::chw(channels, cube.height(), cube.width());
  t.array() = cube.data().head(t.size()).template cast<Scalar>();
  return t;
}

namespace {

template <typename Scalar>
struct Prepared {
  Tensor<Scalar> image;
  LabelMap target;
};

template <typename Scalar>
Prepared<Scalar> prepare(const Frame& frame, const NetworkSpec& spec, const TrainConfig& config,
                         int stride) {
  const int channels = config.rgb_only ? 3 : frame.cube.channels();
  require(channels == spec.input_channels && frame.cube.channels() >= channels,
          ErrorCategory::invalid_input,
          "frame '" + frame.id + "' has " + std::to_string(frame.cube.channels()) +
              " channels; network expects " + std::to_string(spec.input_channels) +
              (config.rgb_only ? " (RGB-only)" : ""));
  require(frame.labels.width == frame.cube.width() && frame.labels.height == frame.cube.height(),
          ErrorCategory::invalid_input, "frame '" + frame.id + "' labels do not match its cube");
  return {cube_to_tensor<Scalar>(frame.cube, config.rgb_only),
          downsample_labels(frame.labels, stride)};
}

struct ErrorCount {
  std::size_t wrong = 0;
  std::size_t labeled = 0;

  double rate() const { return labeled ? static_cast<double>(wrong) / labeled : 0.0; }
};

template <typename Scalar>
void count_errors(const Tensor<Scalar>& scores, const LabelMap& target, ErrorCount& acc) {
  require(scores.height() == target.height && scores.width() == target.width,
          ErrorCategory::shape,
          "score map " + shape_string(scores.shape()) + " does not match downsampled labels");
  const auto pred = argmax_channels(scores);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (target.classes[i] == LabelMap::kUnlabeled) continue;
    ++acc.labeled;
    acc.wrong += pred[i] != target.classes[i];
  }
}

}  // namespace

template <typename Scalar>
TrainResult<Scalar> train(const DatasetManifest& manifest, const NetworkSpec& spec,
                          const TrainConfig& config, FrameSource* source,
                          const EpochCallback& on_epoch) {
  config.validate();
  spec.validate();
  manifest.validate();
  DiskFrameSource disk;
  if (!source) source = &disk;
  const int stride = output_stride(spec);

  std::vector<Prepared<Scalar>> train_set, test_set;
  for (const auto& e : manifest.frames) {
    if (e.split == Split::train)
      train_set.push_back(prepare<Scalar>(source->load(e, FramePurpose::optimize), spec, config,
                                          stride));
  }
  require(!train_set.empty(), ErrorCategory::invalid_input, "training split is empty");
  for (const auto& e : manifest.frames) {
    if (e.split == Split::test)
      test_set.push_back(prepare<Scalar>(source->load(e, FramePurpose::evaluate), spec, config,
                                         stride));
  }

  TrainResult<Scalar> result{build_network<Scalar>(spec, config.seed), {}};
  auto& net = result.network;
  std::vector<Parameter<Scalar>*> params;
  for (auto& p : net.parameters()) params.push_back(p.param);
  Adam<Scalar> opt(params, config.adam);

  std::mt19937_64 order_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    net.set_mode(BatchNormMode::train);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), order_rng);

    double loss_sum = 0;
    ErrorCount train_err;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const auto stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      opt.zero_grad();
      for (auto i = start; i < stop; ++i) {
        const auto& item = train_set[order[i]];
        auto scores = net.forward(Var<Scalar>(item.image));
        count_errors(scores.value(), item.target, train_err);
        auto loss = margin_loss(scores, std::span<const std::uint8_t>(item.target.classes));
        loss_sum += static_cast<double>(loss.value().data()[0]);
        if (loss.requires_grad()) backward(loss);
      }
      if (stop - start > 1) {
        const auto inv = Scalar(1) / static_cast<Scalar>(stop - start);
        for (auto* p : params) p->grad().array() *= inv;
      }
      opt.step();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_err = train_err.rate();
    if (!test_set.empty()) {
      net.set_mode(BatchNormMode::eval);
      ErrorCount test_err;
      for (const auto& item : test_set) count_errors(net.forward(item.image), item.target, test_err);
      rec.test_err = test_err.rate();
    }
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  net.set_mode(BatchNormMode::eval);
  return result;
}

template Tensor<float> cube_to_tensor(const SpectralCube&, bool);
template Tensor<double> cube_to_tensor(const SpectralCube&, bool);
template TrainResult<float> train(const DatasetManifest&, const NetworkSpec&, const TrainConfig&,
                                  FrameSource*, const EpochCallback&);
template TrainResult<double> train(const DatasetManifest&, const NetworkSpec&, const TrainConfig&,
                                   FrameSource*, const EpochCallback&);

}  // namespace mslabel
