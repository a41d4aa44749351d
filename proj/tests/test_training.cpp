#include <fstream>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "mslabel/checkpoint.hpp"
#include "mslabel/synthgen.hpp"
#include "mslabel/training.hpp"
#include "test_support.hpp"

using namespace mslabel;
using mslabel::testing::random_labels;
using mslabel::testing::TempDir;

namespace {

std::vector<FrameEntry> numbered_frames(int n) {
  std::vector<FrameEntry> v;
  for (int i = 0; i < n; ++i) {
    const auto id = "f" + std::to_string(i);
    v.push_back({id, id + ".msc", id + ".lbl", Split::train});
  }
  return v;
}

/// Synthetic frames served from memory; records every load with its purpose.
class MemorySource final : public FrameSource {
 public:
  MemorySource(int n_train, int n_test, int size, std::uint64_t seed) {
    const auto tpl = default_scene_template(size, size);
    for (int i = 0; i < n_train + n_test; ++i) {
      auto spec = jitter_layout(tpl, frame_seed(seed, i));
      spec.seed = frame_seed(seed, i) + 1;
      auto scene = generate_scene(spec);
      const auto id = "m" + std::to_string(i);
      frames_[id] = Frame{id, std::move(scene.image), std::move(scene.labels)};
      manifest.frames.push_back({id, id + ".msc", id + ".lbl", i < n_train ? Split::train : Split::test});
    }
  }
  Frame load(const FrameEntry& entry, FramePurpose purpose) override {
    loads.emplace_back(entry.id, purpose);
    return frames_.at(entry.id);
  }

  DatasetManifest manifest;
  std::vector<std::pair<std::string, FramePurpose>> loads;

 private:
  std::map<std::string, Frame> frames_;
};

LabelMap map_from(int w, int h, std::initializer_list<int> v) {
  LabelMap m = LabelMap::unlabeled(w, h, default_palette());
  std::size_t i = 0;
  for (int c : v) m.classes[i++] = static_cast<std::uint8_t>(c);
  return m;
}

TrainConfig config(int epochs, double lr, std::uint64_t seed = 1) {
  TrainConfig c;
  c.epochs = epochs;
  c.adam.lr = lr;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("split_dataset") {
  const auto a = split_dataset(numbered_frames(40), 30, 10, 5);
  CHECK(a.count(Split::train) == 30);
  CHECK(a.count(Split::test) == 10);
  std::set<std::string> ids;
  for (const auto& f : a.frames) ids.insert(f.id);
  CHECK(ids.size() == 40);
  CHECK(a == split_dataset(numbered_frames(40), 30, 10, 5));
  CHECK(!(a == split_dataset(numbered_frames(40), 30, 10, 6)));
  CHECK(a.seed == 5);

  const auto all_test = split_dataset(numbered_frames(7), 0, 7, 1);
  CHECK(all_test.count(Split::test) == 7);
  CHECK(split_dataset(numbered_frames(10), 3, 2, 1).frames.size() == 5);
  try {
    split_dataset(numbered_frames(5), 4, 2, 1);
    FAIL("expected invalid_input");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::invalid_input);
  }
  // every frame is equally likely to land in the test split
  std::vector<int> hits(10, 0);
  for (std::uint64_t s = 0; s < 2000; ++s)
    for (const auto& f : split_dataset(numbered_frames(10), 7, 3, s).subset(Split::test))
      ++hits[std::stoi(f.id.substr(1))];
  for (int h : hits) CHECK(std::abs(h - 600) < 90);
}

TEST_CASE("downsample_labels fixtures") {
  SUBCASE("constant") {
    LabelMap m = LabelMap::unlabeled(10, 9, default_palette());
    std::fill(m.classes.begin(), m.classes.end(), 4);
    const auto d = downsample_labels(m, 4);
    CHECK(d.width == 2);
    CHECK(d.height == 2);
    CHECK(std::all_of(d.classes.begin(), d.classes.end(), [](auto c) { return c == 4; }));
  }
  SUBCASE("counted majority") {
    const auto d = downsample_labels(map_from(4, 4, {3, 3, 3, 1, 3, 3, 1, 1, 3, 3, 1, 1, 3, 1, 1, 3}), 4);
    REQUIRE(d.classes.size() == 1);
    CHECK(d.classes[0] == 3);
  }
  SUBCASE("tie goes to the lower class, unlabeled pixels do not vote") {
    CHECK(downsample_labels(map_from(2, 2, {5, 2, 2, 5}), 2).classes[0] == 2);
    CHECK(downsample_labels(map_from(2, 2, {255, 255, 255, 6}), 2).classes[0] == 6);
    CHECK(downsample_labels(map_from(2, 2, {255, 255, 255, 255}), 2).classes[0] == 255);
  }
  SUBCASE("factor 1 is the identity") {
    std::mt19937_64 rng(1);
    const auto m = random_labels(7, 5, 8, rng, 0.2);
    CHECK(downsample_labels(m, 1).classes == m.classes);
  }
  SUBCASE("never invents a class") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 50; ++t) {
      const auto m = random_labels(13, 11, 8, rng, 0.3);
      const auto d = downsample_labels(m, 4);
      CHECK(d.width == 3);
      CHECK(d.height == 2);
      for (int by = 0; by < d.height; ++by)
        for (int bx = 0; bx < d.width; ++bx) {
          std::set<int> present;
          for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) present.insert(m.at(bx * 4 + x, by * 4 + y));
          CHECK(present.count(d.at(bx, by)) == 1);
        }
    }
  }
  CHECK_THROWS_AS(downsample_labels(map_from(2, 2, {0, 0, 0, 0}), 0), Error);
}

TEST_CASE("output stride is 4 for the presets") {
  for (const char* n : {"A", "B", "C1", "C2"}) CHECK(output_stride(preset(n, 28)) == 4);
}

TEST_CASE("manifest json round trip with relative paths") {
  TempDir dir("manifest");
  auto m = split_dataset(numbered_frames(6), 4, 2, 3);
  for (auto& f : m.frames) {
    f.cube = dir.path() / "data" / f.cube;
    f.labels = dir.path() / "data" / f.labels;
  }
  write_manifest(dir / "manifest.json", m);
  const auto doc = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
  CHECK(doc.at("seed") == 3);
  CHECK(doc.at("frames")[0].at("cube").get<std::string>().rfind("data/", 0) == 0);
  const auto back = read_manifest(dir / "manifest.json");
  REQUIRE(back.frames.size() == m.frames.size());
  for (std::size_t i = 0; i < m.frames.size(); ++i) {
    CHECK(back.frames[i].id == m.frames[i].id);
    CHECK(back.frames[i].split == m.frames[i].split);
    CHECK(std::filesystem::weakly_canonical(back.frames[i].cube) ==
          std::filesystem::weakly_canonical(m.frames[i].cube));
  }
  CHECK_THROWS_AS(parse_manifest(R"({"seed":1,"frames":[{"id":"a","cube":"x","labels":"y","split":"train"},
      {"id":"a","cube":"x","labels":"y","split":"test"}]})"), Error);
  CHECK_THROWS_AS(parse_manifest(R"({"seed":1,"frames":[{"id":"a","cube":"x","labels":"y","split":"val"}]})"), Error);
  CHECK_THROWS_AS(read_manifest(dir / "missing.json"), Error);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(config(0, 1e-3).validate(), Error);
  CHECK_THROWS_AS(config(1, -1).validate(), Error);
  auto c = config(1, 1e-3);
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_NOTHROW(config(1, 0).validate());
}

TEST_CASE("lr 0 leaves parameters unchanged") {
  MemorySource src(2, 1, 32, 7);
  auto spec = preset("C2", 28);
  auto reference = build_network<float>(spec, 1);
  const auto result = train<float>(src.manifest, spec, config(1, 0.0, 1), &src);
  auto net = result.network;
  auto a = reference.parameters(), b = net.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK((a[i].param->value().array() == b[i].param->value().array()).all());
  REQUIRE(result.history.epochs.size() == 1);
  CHECK(result.history.epochs[0].train_loss > 0);
  CHECK(std::isfinite(result.history.epochs[0].train_loss));
  CHECK(result.history.epochs[0].test_err.has_value());
  CHECK(net.mode() == BatchNormMode::eval);
}

TEST_CASE("preset A overfits two synthetic frames") {
  MemorySource src(2, 0, 64, 11);
  const auto result = train<float>(src.manifest, preset("A", 28), config(200, 1e-3, 3), &src);
  REQUIRE(result.history.epochs.size() == 200);
  CHECK(result.history.epochs.back().train_err < 0.02);
  CHECK(!result.history.epochs.back().test_err.has_value());
}

TEST_CASE("training is deterministic and only optimizes on train frames") {
  auto spec = preset("C2", 28);
  MemorySource a(3, 2, 32, 5), b(3, 2, 32, 5);
  auto cfg = config(3, 1e-3, 9);
  cfg.batch_size = 2;
  std::vector<int> seen;
  const auto ra = train<float>(a.manifest, spec, cfg, &a, [&](const EpochRecord& r) { seen.push_back(r.epoch); });
  const auto rb = train<float>(b.manifest, spec, cfg, &b);
  CHECK(ra.history == rb.history);
  CHECK(ra.history.to_jsonl() == rb.history.to_jsonl());
  CHECK(seen == std::vector<int>{1, 2, 3});

  std::set<std::string> test_ids, optimized;
  for (const auto& f : a.manifest.subset(Split::test)) test_ids.insert(f.id);
  for (const auto& [id, purpose] : a.loads)
    if (purpose == FramePurpose::optimize) optimized.insert(id);
  CHECK(optimized.size() == 3);
  for (const auto& id : test_ids) CHECK(optimized.count(id) == 0);
}

TEST_CASE("final train loss is below the initial loss") {
  MemorySource src(4, 0, 32, 21);
  const auto r = train<float>(src.manifest, preset("B", 28), config(6, 1e-3, 2), &src);
  CHECK(r.history.epochs.back().train_loss < r.history.epochs.front().train_loss);
}

TEST_CASE("rgb-only training and input errors") {
  MemorySource src(2, 1, 32, 4);
  auto cfg = config(1, 1e-3);
  try {
    train<float>(src.manifest, preset("C2", 3), cfg, &src);
    FAIL("expected invalid_input");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::invalid_input);
  }
  cfg.rgb_only = true;
  CHECK_NOTHROW(train<float>(src.manifest, preset("C2", 3), cfg, &src));

  DatasetManifest only_test = src.manifest;
  for (auto& f : only_test.frames) f.split = Split::test;
  try {
    train<float>(only_test, preset("C2", 28), config(1, 1e-3), &src);
    FAIL("expected invalid_input");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::invalid_input);
  }
}

TEST_CASE("history jsonl layout") {
  History h;
  h.epochs.push_back({1, 0.5, 0.25, 0.125});
  h.epochs.push_back({2, 0.25, 0.125, std::nullopt});
  const auto text = h.to_jsonl();
  const auto first = text.substr(0, text.find('\n'));
  CHECK(first.find("\"epoch\"") < first.find("\"train_loss\""));
  CHECK(first.find("\"train_loss\"") < first.find("\"train_err\""));
  CHECK(first.find("\"train_err\"") < first.find("\"test_err\""));
  const auto second = nlohmann::json::parse(text.substr(text.find('\n') + 1));
  CHECK(second.at("test_err").is_null());
  CHECK(second.at("epoch") == 2);
}

TEST_CASE("checkpoint round trip") {
  TempDir dir("ckpt");
  std::mt19937_64 rng(3);
  for (const char* n : {"A", "B", "C1"}) {
    auto net = build_network<float>(preset(n, 28), 5);
    // move running statistics off their defaults
    const auto x = mslabel::testing::random_tensor<float>({28, 32, 32}, rng, 0, 1);
    net.forward(x);
    net.set_mode(BatchNormMode::eval);
    const auto path = dir.path() / n;
    save_network(path, net);
    auto back = load_network<float>(path);
    CHECK(back.mode() == BatchNormMode::eval);
    CHECK(network_spec_to_json(back.spec()) == network_spec_to_json(net.spec()));
    const auto a = net.forward(x), b = back.forward(x);
    CHECK((a.array() == b.array()).all());
  }
  CHECK_THROWS_AS(load_network<float>(dir.path() / "nothing"), Error);
}
