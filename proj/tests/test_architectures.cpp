#include <random>
#include <map>
#include <set>

#include "doctest.h"
#include "mslabel/architectures.hpp"
#include "test_support.hpp"

using namespace mslabel;
using mslabel::testing::random_tensor;

namespace {

std::vector<int> conv_widths(const std::vector<LayerSpec>& layers) {
  std::vector<int> w;
  for (const auto& l : layers)
    if (l.kind == LayerKind::conv) w.push_back(l.out);
  return w;
}

template <typename S>
std::map<std::string, Shape> inventory(Network<S>& net) {
  std::map<std::string, Shape> m;
  for (auto& p : net.parameters()) m[p.name] = p.param->value().shape();
  return m;
}

}  // namespace

TEST_CASE("preset widths and scales") {
  const auto a = preset("A", 28);
  CHECK(conv_widths(a.classifier) == std::vector<int>{32, 128, 512, 64, 8});
  CHECK(conv_widths(preset("A", 28, 10).classifier).back() == 10);
  CHECK(preset("B", 28).scales == std::vector<int>{1, 2, 4});
  CHECK(conv_widths(preset("B", 28).extractor) == std::vector<int>{16, 64, 256});
  CHECK(conv_widths(preset("B", 28).classifier) == std::vector<int>{64, 8});
  for (const char* n : {"A", "B", "C1", "C2"}) {
    CHECK(preset(n, 3).input_channels == 3);
    CHECK(preset(n, 28).output_classes == 8);
  }
  try {
    preset("D", 28);
    FAIL("expected invalid_input");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::invalid_input);
  }
}

TEST_CASE("C1 is larger than C2") {
  auto c1 = build_network<float>(preset("C1", 28), 1);
  auto c2 = build_network<float>(preset("C2", 28), 1);
  CHECK(c1.parameter_count() > c2.parameter_count());
}

TEST_CASE("same seed gives bit-identical parameters") {
  auto a = build_network<float>(preset("C2", 28), 42);
  auto b = build_network<float>(preset("C2", 28), 42);
  auto c = build_network<float>(preset("C2", 28), 43);
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK((pa[i].param->value().array() == pb[i].param->value().array()).all());
    if (!(pa[i].param->value().array() == pc[i].param->value().array()).all()) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("inconsistent channel chain fails at build time naming the layer") {
  NetworkSpec spec;
  spec.name = "broken";
  spec.input_channels = 3;
  auto block = LayerSpec::resblock(8, false);
  block.in = 7;
  spec.extractor = {LayerSpec::conv(3, 5), block};
  spec.classifier = {LayerSpec::conv(1, 8)};
  try {
    build_network<float>(spec, 0);
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::shape);
    CHECK(std::string(e.what()).find("extractor[1]") != std::string::npos);
  }
  spec.extractor[1].in = 5;
  CHECK_NOTHROW(build_network<float>(spec, 0));

  NetworkSpec wrong_end = preset("C2", 28);
  wrong_end.classifier.back().out = 5;
  CHECK_THROWS_AS(wrong_end.validate(), Error);
  NetworkSpec bad_scale = preset("B", 28);
  bad_scale.scales = {1, 3};
  CHECK_THROWS_AS(bad_scale.validate(), Error);
}

TEST_CASE("scale branches share one parameter set") {
  auto full = build_network<float>(preset("B", 28), 3);
  for (std::vector<int> scales : {std::vector<int>{1}, std::vector<int>{1, 2}}) {
    auto spec = preset("B", 28);
    spec.scales = scales;
    // classifier width follows the stacked feature count; compare extractor tensors
    auto net = build_network<float>(spec, 3);
    auto fi = inventory(full), ni = inventory(net);
    std::size_t extractor_full = 0, extractor_net = 0;
    for (auto& [name, shape] : fi) {
      if (name.rfind("extractor", 0) != 0) continue;
      ++extractor_full;
      REQUIRE(ni.count(name));
      CHECK(ni[name] == shape);
    }
    for (auto& [name, shape] : ni) extractor_net += name.rfind("extractor", 0) == 0;
    CHECK(extractor_full == extractor_net);
    CHECK(fi.size() == ni.size());
  }
}

TEST_CASE("output is floor(H/4) x floor(W/4) for every preset") {
  std::mt19937_64 rng(4);
  for (const char* n : {"A", "B", "C1", "C2"}) {
    auto net = build_network<float>(preset(n, 28), 1);
    net.set_mode(BatchNormMode::eval);
    for (auto [h, w] : {std::pair<Index, Index>{32, 32}, {37, 45}, {41, 19}}) {
      const auto y = net.forward(random_tensor<float>({28, h, w}, rng, 0, 1));
      CHECK(y.shape() == Shape{8, h / 4, w / 4});
    }
  }
}

TEST_CASE("shortcut convolution exists iff channel counts differ") {
  for (const char* n : {"C1", "C2"}) {
    const auto spec = preset(n, 28);
    auto net = build_network<float>(spec, 1);
    const auto inv = inventory(net);
    int channels = spec.input_channels;
    for (std::size_t i = 0; i < spec.extractor.size(); ++i) {
      const auto& l = spec.extractor[i];
      if (l.kind == LayerKind::resblock) {
        const auto key = "extractor." + std::to_string(i) + ".shortcut.weight";
        CHECK(inv.count(key) == (channels != l.out ? 1u : 0u));
        if (channels != l.out) CHECK(inv.at(key) == Shape{l.out, channels, 1, 1});
      }
      if (l.kind == LayerKind::conv || l.kind == LayerKind::resblock) channels = l.out;
    }
  }
}

TEST_CASE("eval-mode forward is deterministic") {
  std::mt19937_64 rng(5);
  auto net = build_network<float>(preset("C2", 28), 9);
  net.set_mode(BatchNormMode::eval);
  const auto x = random_tensor<float>({28, 24, 28}, rng, 0, 1);
  const auto a = net.forward(x), b = net.forward(x);
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("zero input through zero-bias linear classifier gives zero scores") {
  NetworkSpec spec;
  spec.name = "linear";
  spec.input_channels = 5;
  spec.classifier = {LayerSpec::conv(1, 8)};
  auto net = build_network<double>(spec, 2);
  const auto y = net.forward(Tensor<double>({5, 6, 6}));
  CHECK((y.array() == 0).all());
}

TEST_CASE("zero extra bands reproduce the RGB network") {
  std::mt19937_64 rng(6);
  for (const char* n : {"B", "C2"}) {
    auto rgb = build_network<double>(preset(n, 3), 7);
    auto full = build_network<double>(preset(n, 28), 8);
    rgb.set_mode(BatchNormMode::eval);
    full.set_mode(BatchNormMode::eval);
    auto pr = rgb.parameters(), pf = full.parameters();
    REQUIRE(pr.size() == pf.size());
    for (std::size_t i = 0; i < pr.size(); ++i) {
      auto& dst = pf[i].param->value();
      const auto& src = pr[i].param->value();
      if (dst.same_shape(src)) {
        dst = src;
        continue;
      }
      // first conv: copy the RGB slices into channels 0..2, zero the rest
      REQUIRE(dst.rank() == 4);
      REQUIRE(dst.dim(1) == 28);
      const Index kk = dst.dim(2) * dst.dim(3);
      dst.array().setZero();
      for (Index o = 0; o < dst.dim(0); ++o)
        for (Index c = 0; c < 3; ++c)
          for (Index j = 0; j < kk; ++j)
            dst.data()[(o * 28 + c) * kk + j] = src.data()[(o * 3 + c) * kk + j];
    }
    const auto rgb_in = random_tensor<double>({3, 20, 24}, rng, 0, 1);
    Tensor<double> padded({28, 20, 24});
    padded.array().head(rgb_in.size()) = rgb_in.array();
    const auto a = rgb.forward(rgb_in), b = full.forward(padded);
    CHECK((a.array() - b.array()).abs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("predict_labels") {
  std::mt19937_64 rng(7);
  Tensor<float> equal({8, 3, 4}, 0.5f);
  const auto zero = predict_labels(equal);
  CHECK(std::all_of(zero.classes.begin(), zero.classes.end(), [](auto c) { return c == 0; }));
  Tensor<float> onehot({8, 3, 4});
  for (Index p = 0; p < 12; ++p) onehot.data()[5 * 12 + p] = 10;
  const auto five = predict_labels(onehot);
  CHECK(std::all_of(five.classes.begin(), five.classes.end(), [](auto c) { return c == 5; }));
  CHECK(five.width == 4);
  CHECK(five.height == 3);

  const auto scores = random_tensor<float>({8, 9, 11}, rng);
  const auto labels = predict_labels(scores);
  for (Index p = 0; p < 99; ++p) {
    int best = 0;
    for (int c = 1; c < 8; ++c)
      if (scores.data()[c * 99 + p] > scores.data()[best * 99 + p]) best = c;
    CHECK(labels.classes[p] == best);
  }
}

TEST_CASE("network spec json round trip") {
  for (const char* n : {"A", "B", "C1", "C2"}) {
    const auto spec = preset(n, 28);
    const auto back = parse_network_spec(network_spec_to_json(spec));
    CHECK(network_spec_to_json(back) == network_spec_to_json(spec));
    CHECK(back.scales == spec.scales);
  }
  CHECK_THROWS_AS(parse_network_spec("{\"name\":\"x\",\"extractor\":[{\"type\":\"pool9\"}]}"), Error);
  CHECK_THROWS_AS(parse_network_spec("not json"), Error);
}
