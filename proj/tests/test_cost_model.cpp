#include "doctest.h"
#include "json.hpp"
#include "mslabel/cost_model.hpp"

using namespace mslabel;

namespace {

NetworkSpec single_conv(int cin, int k, int cout, Padding pad = Padding::same) {
  NetworkSpec s;
  s.name = "single";
  s.input_channels = cin;
  s.classifier = {LayerSpec::conv(k, cout, pad)};
  s.output_classes = cout;
  return s;
}

long long sum_entries(const OpCostReport& r) {
  long long s = 0;
  for (const auto& e : r.entries) s += e.ops;
  return s;
}

}  // namespace

TEST_CASE("dims parsing") {
  CHECK(parse_dims("28x541x971") == Dims3{28, 541, 971});
  CHECK(format_dims({3, 4, 5}) == "3x4x5");
  for (const char* bad : {"28x541", "0x4x4", "ax4x4", "3x4x5x6", ""}) CHECK_THROWS_AS(parse_dims(bad), Error);
}

TEST_CASE("single-layer counts match hand arithmetic") {
  const auto r = count_ops(single_conv(16, 3, 32), {16, 100, 100});
  CHECK(r.conv_ops == 2LL * 9 * 16 * 32 * 100 * 100);
  // 2 * 9 * 16 * 32 * 100 * 100 = 92,160,000 ops
  CHECK(r.total_ops == 92160000LL);
  CHECK(r.total_gop() == doctest::Approx(0.09216).epsilon(1e-12));
  CHECK(count_ops(single_conv(1, 1, 1), {1, 1, 1}).total_ops == 2);
  const auto v = count_ops(single_conv(2, 5, 3, Padding::valid), {2, 10, 12});
  CHECK(v.total_ops == 2LL * 25 * 2 * 3 * 6 * 8);
  CHECK(v.entries.at(0).output == Dims3{3, 6, 8});
}

TEST_CASE("secondary terms are documented constants") {
  NetworkSpec s;
  s.name = "mix";
  s.input_channels = 4;
  s.extractor = {LayerSpec::bn(), LayerSpec::relu(), LayerSpec::maxpool2(), LayerSpec::avgpool2()};
  s.classifier = {LayerSpec::conv(1, 4)};
  s.output_classes = 4;
  const auto r = count_ops(s, {4, 8, 10});
  const long long full = 4 * 8 * 10, half = 4 * 4 * 5, quarter = 4 * 2 * 2;
  const long long conv = 2LL * 4 * 4 * 2 * 2;
  CHECK(r.secondary_ops == 2 * full + full + 3 * half + 4 * quarter);
  CHECK(r.conv_ops == conv);
  CHECK(r.total_ops == r.conv_ops + r.secondary_ops);

  const auto c = count_ops(s, {4, 8, 10}, true);
  CHECK(c.total_ops == conv);
  CHECK(c.entries.size() == 1);
  CHECK(c.secondary_ops == r.secondary_ops);
}

TEST_CASE("total equals the sum of entries") {
  for (const char* n : {"A", "B", "C1", "C2"}) {
    for (bool conv_only : {false, true}) {
      const auto r = count_ops(preset(n, 28), {28, 541, 971}, conv_only);
      CHECK(r.total_ops == sum_entries(r));
      CHECK(r.network == n);
    }
  }
}

TEST_CASE("C1 is at most a third of B") {
  const auto b = count_ops(preset("B", 28), {28, 541, 971});
  const auto c1 = count_ops(preset("C1", 28), {28, 541, 971});
  CHECK(c1.total_ops * 3 <= b.total_ops);
  const auto bc = count_ops(preset("B", 28), {28, 541, 971}, true);
  const auto c1c = count_ops(preset("C1", 28), {28, 541, 971}, true);
  CHECK(c1c.total_ops * 3 <= bc.total_ops);
}

TEST_CASE("additivity over a partitioned layer list") {
  // conv stack split in two: the second half starts from the first half's output
  NetworkSpec whole = single_conv(3, 3, 8);
  whole.classifier = {LayerSpec::conv(3, 8), LayerSpec::bn(), LayerSpec::relu(), LayerSpec::maxpool2(),
                      LayerSpec::conv(3, 16), LayerSpec::bn(), LayerSpec::relu(), LayerSpec::conv(1, 8)};
  whole.output_classes = 8;
  NetworkSpec first = whole, second = whole;
  first.classifier.resize(4);
  first.output_classes = 8;
  second.classifier.erase(second.classifier.begin(), second.classifier.begin() + 4);
  second.input_channels = 8;
  const auto a = count_ops(first, {3, 40, 30});
  const auto b = count_ops(second, {8, 20, 15});
  CHECK(count_ops(whole, {3, 40, 30}).total_ops == a.total_ops + b.total_ops);
}

TEST_CASE("doubling H and W multiplies conv terms by 4") {
  for (const char* n : {"A", "B", "C1", "C2"}) {
    const auto small = count_ops(preset(n, 28), {28, 128, 256});
    const auto big = count_ops(preset(n, 28), {28, 256, 512});
    REQUIRE(small.entries.size() == big.entries.size());
    for (std::size_t i = 0; i < small.entries.size(); ++i) {
      if (small.entries[i].kind != "conv") continue;
      CHECK(big.entries[i].ops == 4 * small.entries[i].ops);
    }
  }
}

TEST_CASE("shortcut convs only where channels change") {
  const auto r = count_ops(preset("C2", 28), {28, 64, 64});
  int shortcuts = 0;
  for (const auto& e : r.entries) shortcuts += e.name.find("shortcut") != std::string::npos;
  CHECK(shortcuts == 3);  // 16->16 has none; 16->32, 32->48, 48->64 do
  const auto c1 = count_ops(preset("C1", 28), {28, 64, 64});
  shortcuts = 0;
  for (const auto& e : c1.entries) shortcuts += e.name.find("shortcut") != std::string::npos;
  CHECK(shortcuts == 2);  // 16->32 and 32->64
}

TEST_CASE("multiscale branches are counted at their reduced sizes") {
  auto spec = preset("B", 28);
  spec.scales = {1};
  const auto one = count_ops(spec, {28, 128, 128}, true);
  spec.scales = {2};
  const auto two = count_ops(spec, {28, 128, 128}, true);
  long long ext1 = 0, ext2 = 0;
  for (const auto& e : one.entries) ext1 += e.name.find("classifier") == std::string::npos ? e.ops : 0;
  for (const auto& e : two.entries) ext2 += e.name.find("classifier") == std::string::npos ? e.ops : 0;
  CHECK(ext1 == 4 * ext2);
}

TEST_CASE("frame rates") {
  const PlatformSpec tegra{96, 10};
  CHECK(frame_rate(fixed_cost_report(96), tegra) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(frame_rate(fixed_cost_report(32), tegra) == doctest::Approx(3.0).epsilon(1e-12));
  const auto r = count_ops(preset("C2", 28), {28, 541, 971});
  CHECK(frame_rate(r, {192, 10}) == doctest::Approx(2 * frame_rate(r, tegra)).epsilon(1e-12));
  try {
    frame_rate(fixed_cost_report(0), tegra);
    FAIL("expected invalid_input");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::invalid_input);
  }
  CHECK_THROWS_AS(frame_rate(r, {0, 10}), Error);
}

TEST_CASE("report json and table") {
  const auto r = count_ops(preset("A", 28), {28, 64, 64});
  const PlatformSpec p;
  const auto doc = nlohmann::json::parse(cost_report_json(r, &p));
  CHECK(doc.at("network") == "A");
  CHECK(doc.at("input") == nlohmann::json::array({28, 64, 64}));
  CHECK(doc.at("entries").size() == r.entries.size());
  CHECK(doc.at("total_gop").get<double>() == doctest::Approx(r.total_gop()));
  CHECK(doc.contains("frame_rate"));
  const auto table = cost_report_table(r, &p);
  CHECK(table.find("total") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') >= static_cast<long>(r.entries.size()));
}

TEST_CASE("invalid spec is a shape error") {
  auto spec = preset("C2", 28);
  spec.classifier.back().out = 3;
  try {
    count_ops(spec, {28, 64, 64});
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::shape);
  }
  CHECK_THROWS_AS(count_ops(preset("C2", 28), {3, 64, 64}), Error);
}
