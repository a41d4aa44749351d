#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "mslabel/cli.hpp"
#include "mslabel/spectral_io.hpp"
#include "test_support.hpp"

using namespace mslabel;
using mslabel::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "mslabel");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

/// Every file under `dir`, keyed by relative path.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) m[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return m;
}

const std::map<std::string, std::vector<std::string>> kFlags = {
    {"demosaic", {"input", "--out"}},
    {"register", {"--cube", "--points", "--width", "--height", "--neighbors", "--out"}},
    {"stack", {"--rgb", "--warped", "--crop", "--out"}},
    {"slic", {"input", "--region", "--count", "--compactness", "--iterations", "--seed", "--out", "--boundary"}},
    {"synth", {"--train", "--test", "--seed", "--width", "--height", "--template", "--out"}},
    {"train", {"--manifest", "--preset", "--spec", "--epochs", "--lr", "--beta1", "--beta2", "--eps",
               "--batch-size", "--seed", "--precision", "--rgb-only", "--out", "--history"}},
    {"eval", {"--manifest", "--checkpoint", "--split", "--full-resolution", "--precision", "--out"}},
    {"cost", {"--preset", "--spec", "--input", "--classes", "--conv-only", "--throughput", "--power", "--json"}},
    {"pareto", {"input", "--out"}},
    {"serve", {"--frames", "--state", "--classes", "--host", "--port"}},
};

}  // namespace

TEST_CASE("help output matches the golden files and lists every flag") {
  const fs::path golden = MSLABEL_GOLDEN_DIR;
  const bool update = std::getenv("MSLABEL_UPDATE_GOLDEN") != nullptr;
  for (const auto& [sub, flags] : kFlags) {
    INFO(sub);
    const auto r = invoke({sub, "--help"});
    CHECK(r.code == 0);
    for (const auto& f : flags) CHECK(r.out.find(f) != std::string::npos);
    const auto file = golden / ("help_" + sub + ".txt");
    if (update) std::ofstream(file, std::ios::binary) << r.out;
    REQUIRE(fs::exists(file));
    CHECK(r.out == slurp(file));
  }
  const auto top = invoke({"--help"});
  CHECK(top.code == 0);
  for (const auto& [sub, flags] : kFlags) CHECK(top.out.find(sub) != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
  for (std::vector<std::string> args : {std::vector<std::string>{"frobnicate"}, std::vector<std::string>{},
                                        std::vector<std::string>{"cost", "--bogus"},
                                        std::vector<std::string>{"slic", "x.msc", "--out", "y", "--region", "4", "--count", "9"}}) {
    const auto r = invoke(args);
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error: usage:", 0) == 0);
  }
}

TEST_CASE("io and validation errors exit 1 with a category") {
  TempDir dir("cli_err");
  const auto r = invoke({"demosaic", (dir / "missing.msq").string()});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: io:", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  const auto bad = invoke({"cost", "--preset", "Z"});
  CHECK(bad.code == 1);
  CHECK(bad.err.rfind("error: invalid_input:", 0) == 0);
  const auto dims = invoke({"cost", "--input", "28x0x5"});
  CHECK(dims.code == 1);
}

TEST_CASE("synth, train and eval end to end") {
  TempDir dir("cli_e2e");
  const auto d = (dir / "d").string();
  const auto s = invoke({"synth", "--train", "4", "--test", "2", "--seed", "7", "--width", "64", "--height", "64", "--out", d});
  REQUIRE(s.code == 0);
  CHECK(fs::exists(dir / "d" / "manifest.json"));
  const auto t = invoke({"train", "--manifest", d + "/manifest.json", "--preset", "A", "--seed", "7", "--epochs", "3"});
  INFO(t.err);
  REQUIRE(t.code == 0);
  const auto history = slurp(dir / "d" / "checkpoint" / "history.jsonl");
  CHECK(std::count(history.begin(), history.end(), '\n') == 3);
  CHECK(nlohmann::json::parse(history.substr(0, history.find('\n'))).at("epoch") == 1);
  CHECK(fs::exists(dir / "d" / "checkpoint" / "index.json"));

  const auto e = invoke({"eval", "--manifest", d + "/manifest.json", "--checkpoint", d + "/checkpoint", "--split", "test"});
  REQUIRE(e.code == 0);
  const auto report = nlohmann::json::parse(e.out);
  CHECK(report.at("error_rate").get<double>() >= 0);
  CHECK(report.at("error_rate").get<double>() <= 1);
  CHECK(report.at("mode") == "output_resolution");
  const auto full = invoke({"eval", "--manifest", d + "/manifest.json", "--checkpoint", d + "/checkpoint",
                            "--full-resolution", "--out", (dir / "full.json").string()});
  REQUIRE(full.code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "full.json")).at("mode") == "full_resolution_nearest");
}

TEST_CASE("reruns are byte-identical") {
  TempDir dir("cli_rerun");
  for (const char* run : {"a", "b"}) {
    const auto d = (dir / run).string();
    REQUIRE(invoke({"synth", "--train", "2", "--test", "1", "--seed", "3", "--width", "32", "--height", "32", "--out", d}).code == 0);
    REQUIRE(invoke({"train", "--manifest", d + "/manifest.json", "--preset", "C2", "--seed", "3", "--epochs", "2"}).code == 0);
    REQUIRE(invoke({"eval", "--manifest", d + "/manifest.json", "--checkpoint", d + "/checkpoint", "--out", d + "/eval.json"}).code == 0);
    REQUIRE(invoke({"slic", d + "/frame_000.msc", "--region", "6", "--seed", "5", "--out", d + "/seg.seg", "--boundary", d + "/b.pgm"}).code == 0);
    REQUIRE(invoke({"cost", "--preset", "C1", "--json", d + "/cost.json"}).code == 0);
  }
  const auto a = tree(dir / "a"), b = tree(dir / "b");
  CHECK(a.size() >= 12);
  REQUIRE(a.size() == b.size());
  for (const auto& [name, bytes] : a) {
    INFO(name);
    CHECK(b.at(name) == bytes);
  }
}

TEST_CASE("cost subcommand") {
  TempDir dir("cli_cost");
  const auto r = invoke({"cost", "--preset", "B", "--input", "28x541x971", "--json", (dir / "b.json").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("frame/s") != std::string::npos);
  const auto doc = nlohmann::json::parse(slurp(dir / "b.json"));
  CHECK(doc.at("total_gop").get<double>() > 0);
  const auto conv = invoke({"cost", "--preset", "B", "--conv-only"});
  CHECK(conv.out.find("conv only") != std::string::npos);
}

TEST_CASE("pareto subcommand") {
  TempDir dir("cli_pareto");
  std::ofstream(dir / "pts.csv") << "label,error_rate,gop\nA,0.01,10\nB,0.02,5\nC,0.02,20\n";
  const auto r = invoke({"pareto", (dir / "pts.csv").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out == "label,error_rate,gop\nB,0.02,5\nA,0.01,10\n");
  std::ofstream(dir / "bad.csv") << "A,2,3\n";
  CHECK(invoke({"pareto", (dir / "bad.csv").string()}).code == 1);
}

TEST_CASE("demosaic and slic on files") {
  TempDir dir("cli_files");
  MosaicFrame frame;
  frame.width = 2048;
  frame.height = 1088;
  frame.values.assign(static_cast<std::size_t>(frame.width) * frame.height, 0);
  for (std::size_t i = 0; i < frame.values.size(); ++i) frame.values[i] = static_cast<std::uint16_t>(i % 1021);
  write_mosaic(dir / "f.msq", frame);
  const auto r = invoke({"demosaic", (dir / "f.msq").string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto cube = read_cube(dir / "f.msc");
  CHECK(cube.channels() == 25);
  CHECK(cube.width() == 409);
  CHECK(cube.height() == 217);
}
