#include <algorithm>
#include <map>
#include <numeric>
#include <queue>
#include <set>

#include "doctest.h"
#include "mslabel/superpixel.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace mslabel;
using mslabel::testing::component_counts;
using mslabel::testing::TempDir;

namespace {

SegmentationMap make_seg(int w, int h, std::vector<std::uint32_t> ids) {
  SegmentationMap s;
  s.width = w;
  s.height = h;
  s.ids = std::move(ids);
  s.count = s.ids.empty() ? 0 : *std::max_element(s.ids.begin(), s.ids.end()) + 1;
  return s;
}

LabelMap blank(int w, int h) { return LabelMap::unlabeled(w, h, default_palette()); }

}  // namespace

TEST_CASE("slic on a random image: coverage, connectivity, count") {
  std::mt19937_64 rng(17);
  const auto img = mslabel::testing::random_cube(100, 100, 3, rng);
  SlicParams p;
  p.target_count = 100;
  const auto seg = slic_segment(img, p);
  CHECK(seg.count >= 80);
  CHECK(seg.count <= 120);
  REQUIRE(seg.ids.size() == 10000u);
  std::set<std::uint32_t> used(seg.ids.begin(), seg.ids.end());
  CHECK(used.size() == seg.count);
  CHECK(*used.rbegin() == seg.count - 1);
  for (const auto& [id, n] : component_counts(seg)) CHECK(n == 1);
}

TEST_CASE("constant image splits into near-equal blocks") {
  const SpectralCube img(40, 40, 3, 0.5f);
  SlicParams p;
  p.target_count = 4;
  const auto seg = slic_segment(img, p);
  REQUIRE(seg.count == 4);
  std::vector<int> area(4, 0);
  for (auto id : seg.ids) ++area[id];
  for (int a : area) CHECK(std::abs(a - 400) <= 40);
}

TEST_CASE("slic determinism and seed use") {
  std::mt19937_64 rng(2);
  const auto img = mslabel::testing::random_cube(60, 50, 28, rng);
  SlicParams p;
  p.region_size = 8;
  p.seed = 5;
  CHECK(slic_segment(img, p) == slic_segment(img, p));
  SlicParams q = p;
  q.seed = 6;
  CHECK_FALSE(slic_segment(img, p) == slic_segment(img, q));
}

TEST_CASE("slic parameter validation") {
  const SpectralCube img(10, 10, 3);
  SlicParams p;
  CHECK_THROWS_AS(slic_segment(img, p), Error);  // neither k nor S
  p.target_count = 101;
  CHECK_THROWS_AS(slic_segment(img, p), Error);
  p.target_count = 4;
  p.region_size = 3;
  CHECK_THROWS_AS(slic_segment(img, p), Error);  // both
  p.region_size.reset();
  p.compactness = 0;
  CHECK_THROWS_AS(slic_segment(img, p), Error);
  p.compactness = 10;
  p.iterations = 0;
  CHECK_THROWS_AS(slic_segment(img, p), Error);
  CHECK_THROWS_AS(slic_segment(SpectralCube(), SlicParams{4, {}, 10, 10, 0}), Error);
}

TEST_CASE("colour edges are respected") {
  SpectralCube img(40, 20, 3, 0.0f);
  for (int y = 0; y < 20; ++y)
    for (int x = 20; x < 40; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = 1.0f;
  SlicParams p;
  p.region_size = 10;
  const auto seg = slic_segment(img, p);
  for (int y = 0; y < 20; ++y) CHECK(seg.at(19, y) != seg.at(20, y));
}

TEST_CASE("boundary mask") {
  CHECK(boundary_mask(make_seg(3, 3, std::vector<std::uint32_t>(9, 0))).count() == 0);
  const auto halves = make_seg(4, 4, {0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1});
  const auto m = boundary_mask(halves);
  CHECK(m.count() == 8);
  for (int y = 0; y < 4; ++y) {
    CHECK(m.at(1, y));
    CHECK(m.at(2, y));
    CHECK_FALSE(m.at(0, y));
  }
  std::vector<std::uint32_t> checker(16);
  for (int i = 0; i < 16; ++i) checker[i] = ((i % 4) + (i / 4)) % 2;
  CHECK(boundary_mask(make_seg(4, 4, checker)).count() == 16);

  std::mt19937_64 rng(1);
  SlicParams p;
  p.region_size = 6;
  const auto seg = slic_segment(mslabel::testing::random_cube(30, 30, 3, rng), p);
  std::vector<std::uint32_t> perm(seg.count);
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto relabeled = seg;
  for (auto& id : relabeled.ids) id = perm[id];
  CHECK(boundary_mask(relabeled) == boundary_mask(seg));
}

TEST_CASE("assign_label") {
  const auto seg = make_seg(4, 2, {0, 0, 1, 1, 2, 2, 3, 3});
  auto l = assign_label(blank(4, 2), seg, 0, 3);
  CHECK(l.classes == std::vector<std::uint8_t>{3, 3, 255, 255, 255, 255, 255, 255});
  l = assign_label(l, seg, 0, 5);
  CHECK(l.at(0, 0) == 5);
  for (std::uint32_t s = 0; s < seg.count; ++s) l = assign_label(l, seg, s, 1);
  CHECK(l.labeled_count() == 8);
  CHECK_THROWS_AS(assign_label(l, seg, 4, 1), Error);
  CHECK_THROWS_AS(assign_label(l, seg, 0, 8), Error);
}

TEST_CASE("propagate_labels") {
  std::mt19937_64 rng(4);
  SlicParams p;
  p.region_size = 5;
  const auto seg = slic_segment(mslabel::testing::random_cube(20, 20, 3, rng), p);
  auto full = blank(20, 20);
  std::fill(full.classes.begin(), full.classes.end(), 6);
  CHECK(propagate_labels(full, seg) == full);

  SUBCASE("60/40 majority") {
    const auto one = make_seg(10, 1, std::vector<std::uint32_t>(10, 0));
    auto l = blank(10, 1);
    for (int x = 0; x < 10; ++x) l.at(x, 0) = x < 6 ? 4 : 2;
    const auto out = propagate_labels(l, one);
    CHECK(std::all_of(out.classes.begin(), out.classes.end(), [](auto c) { return c == 4; }));
  }
  SUBCASE("tie goes to the lower class") {
    const auto one = make_seg(4, 1, {0, 0, 0, 0});
    auto l = blank(4, 1);
    l.classes = {5, 2, 5, 2};
    CHECK(propagate_labels(l, one).classes == std::vector<std::uint8_t>{2, 2, 2, 2});
  }
  SUBCASE("unlabeled majority stays unlabeled") {
    const auto one = make_seg(4, 1, {0, 0, 0, 0});
    auto l = blank(4, 1);
    l.classes = {1, 255, 255, 255};
    CHECK(propagate_labels(l, one).labeled_count() == 0);
  }
  SUBCASE("idempotent for a fixed segmentation") {
    const auto l = mslabel::testing::random_labels(20, 20, 8, rng, 0.3);
    auto lp = l;
    lp.palette = default_palette();
    const auto once = propagate_labels(lp, seg);
    CHECK(propagate_labels(once, seg) == once);
  }
  CHECK_THROWS_AS(propagate_labels(blank(3, 3), seg), Error);
}

TEST_CASE("LBL1 and palette sidecar") {
  TempDir dir("lbl");
  std::mt19937_64 rng(9);
  auto l = mslabel::testing::random_labels(7, 5, 8, rng, 0.2);
  l.palette = default_palette();
  const auto bytes = encode_labels(l);
  REQUIRE(bytes.size() == 16 + 35);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "LBL1");
  CHECK(bytes[12] == 8);
  CHECK(decode_labels(bytes).classes == l.classes);
  write_labels(dir / "a.lbl", l);
  CHECK(read_labels(dir / "a.lbl") == l);
  CHECK(std::filesystem::exists(dir / "a.lbl.json"));
  const auto pal = parse_palette_json(palette_json(default_palette()));
  CHECK(pal == default_palette());
  CHECK(pal[0].name == "car/truck");
  CHECK(pal[7].name == "distant-bg");
  auto bad = l;
  bad.classes[0] = 9;
  CHECK_THROWS_AS(decode_labels(encode_labels(bad)), Error);
}

TEST_CASE("SEG1 round trip") {
  const auto seg = make_seg(3, 2, {0, 1, 1, 2, 2, 0});
  CHECK(decode_segmentation(encode_segmentation(seg)) == seg);
  auto bytes = encode_segmentation(seg);
  bytes.back() = 9;  // id beyond count
  CHECK_THROWS_AS(decode_segmentation(bytes), Error);
}
