#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cli.hpp"
#include "tda/serialize.hpp"

using namespace tda;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("tda_cli_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct Outcome {
  int status;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "tdabench");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int status = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {status, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Json generate_json(const std::string& kind) {
  return {{"kind", kind},
          {"seed", 5},
          {"data", {{"n", 60}, {"dim", 4}, {"num_classes", 3}}},
          {"train", {{"epochs", 10}, {"lr", 0.1}, {"batch_size", 16}, {"l2_weight", 1e-3}}}};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> v;
  std::istringstream s(text);
  for (std::string l; std::getline(s, l);) v.push_back(l);
  return v;
}

}  // namespace

TEST_CASE("generate command") {
  TempDir dir("generate");
  write_json(dir.path / "gen.json", generate_json("class_detection"));
  const auto ok = run({"generate", "--config", (dir.path / "gen.json").string(), "--out", (dir.path / "b1").string()});
  CHECK(ok.status == 0);
  CHECK(fs::exists(dir.path / "b1" / "manifest.json"));
  CHECK(run({"generate", "--config", (dir.path / "gen.json").string(), "--out", (dir.path / "b2").string()}).status == 0);
  CHECK(read_json(dir.path / "b1" / "manifest.json").at("files") == read_json(dir.path / "b2" / "manifest.json").at("files"));

  Json bad = generate_json("class_detecton");
  write_json(dir.path / "bad.json", bad);
  const auto r = run({"generate", "--config", (dir.path / "bad.json").string(), "--out", (dir.path / "b3").string()});
  CHECK(r.status == 2);
  CHECK(r.err.find("kind") != std::string::npos);

  CHECK(run({"generate", "--config", (dir.path / "missing.json").string(), "--out", (dir.path / "b4").string()}).status == 5);
  CHECK(run({"generate", "--out", (dir.path / "b5").string()}).status == 2);
  CHECK(run({"frobnicate"}).status == 2);
}

TEST_CASE("evaluate command") {
  TempDir dir("evaluate");
  write_json(dir.path / "gen.json", generate_json("class_detection"));
  REQUIRE(run({"generate", "--config", (dir.path / "gen.json").string(), "--out", (dir.path / "bundle").string()}).status == 0);
  const std::string bundle = (dir.path / "bundle").string();

  SUBCASE("two explainers give two csv rows") {
    write_json(dir.path / "run.json", {{"bundles", {bundle}},
                                       {"explainers", {{{"method", "similarity"}}, {{"method", "random"}}}}});
    const auto r = run({"evaluate", "--config", (dir.path / "run.json").string(), "--out", (dir.path / "out").string()});
    REQUIRE(r.status == 0);
    const auto csv = lines(slurp(dir.path / "out" / "scores.csv"));
    REQUIRE(csv.size() == 3);
    CHECK(csv[0] == "explainer,class_detection");
    CHECK(csv[1].rfind("similarity,", 0) == 0);
    CHECK(csv[2].rfind("random,", 0) == 0);
    const Json report = read_json(dir.path / "out" / "report.json");
    CHECK(report.at("results").size() == 2);
    CHECK(report.at("bundles")[0].at("files").contains("model.json"));
    CHECK(fs::exists(dir.path / "out" / "curves.json"));
  }
  SUBCASE("repeat derives distinct seeds") {
    write_json(dir.path / "random.json", {{"method", "random"}});
    const auto r = run({"evaluate", "--bundle", bundle, "--explainer", (dir.path / "random.json").string(),
                        "--repeat", "3", "--seed", "100", "--out", (dir.path / "out").string()});
    REQUIRE(r.status == 0);
    const Json results = read_json(dir.path / "out" / "report.json").at("results");
    REQUIRE(results.size() == 3);
    std::set<std::uint64_t> seeds;
    for (const auto& e : results) seeds.insert(e.at("seed").get<std::uint64_t>());
    CHECK(seeds == std::set<std::uint64_t>{100, 101, 102});
  }
  SUBCASE("identical invocations give identical reports") {
    write_json(dir.path / "sim.json", {{"method", "similarity"}, {"params", {{"measure", "cosine"}}}});
    for (const char* out : {"a", "b"}) {
      REQUIRE(run({"evaluate", "--bundle", bundle, "--explainer", (dir.path / "sim.json").string(), "--out",
                   (dir.path / out).string()})
                  .status == 0);
    }
    Json a = read_json(dir.path / "a" / "report.json");
    Json b = read_json(dir.path / "b" / "report.json");
    a.erase("created_at");
    b.erase("created_at");
    CHECK(a == b);
    CHECK(slurp(dir.path / "a" / "scores.csv") == slurp(dir.path / "b" / "scores.csv"));
  }
  SUBCASE("duplicate explainer labels are made unique") {
    write_json(dir.path / "run.json", {{"bundles", {bundle, bundle}},
                                       {"explainers", {{{"method", "similarity"}}, {{"method", "similarity"}}}}});
    REQUIRE(run({"evaluate", "--config", (dir.path / "run.json").string(), "--out", (dir.path / "out").string()}).status == 0);
    const auto csv = lines(slurp(dir.path / "out" / "scores.csv"));
    CHECK(csv[0] == "explainer,class_detection,class_detection#2");
    CHECK(csv[2].rfind("similarity#2,", 0) == 0);
  }
  SUBCASE("a failing explainer leaves a partial report and a mapped status") {
    write_json(dir.path / "run.json", {{"bundles", {bundle}},
                                       {"explainers", {{{"method", "similarity"}}, {{"method", "tracin"}, {"params", {{"checkpoint_epochs", {99}}}}}}}});
    const auto r = run({"evaluate", "--config", (dir.path / "run.json").string(), "--out", (dir.path / "out").string()});
    CHECK(r.status == 3);
    const Json report = read_json(dir.path / "out" / "report.json");
    CHECK(report.at("results").size() == 1);
    CHECK(report.at("errors").size() == 1);
  }
  SUBCASE("empty explainer list is a config error") {
    write_json(dir.path / "run.json", {{"bundles", {bundle}}, {"explainers", Json::array()}});
    CHECK(run({"evaluate", "--config", (dir.path / "run.json").string(), "--out", (dir.path / "out").string()}).status == 2);
  }
  SUBCASE("corrupted bundle is an integrity failure") {
    std::string text = slurp(dir.path / "bundle" / "dataset.json");
    text.back() = ' ';
    std::ofstream(dir.path / "bundle" / "dataset.json", std::ios::binary) << text;
    write_json(dir.path / "sim.json", {{"method", "similarity"}});
    CHECK(run({"evaluate", "--bundle", bundle, "--explainer", (dir.path / "sim.json").string(), "--out",
               (dir.path / "out").string()})
              .status == 5);
  }
}

TEST_CASE("attribute command and the precomputed path") {
  TempDir dir("attribute");
  write_json(dir.path / "gen.json", generate_json("topk_cardinality"));
  REQUIRE(run({"generate", "--config", (dir.path / "gen.json").string(), "--out", (dir.path / "bundle").string()}).status == 0);
  const std::string bundle = (dir.path / "bundle").string();
  write_json(dir.path / "sim.json", {{"method", "similarity"}});

  REQUIRE(run({"attribute", "--bundle", bundle, "--explainer", (dir.path / "sim.json").string(), "--out",
               (dir.path / "attr.json").string()})
              .status == 0);
  const Json a = read_json(dir.path / "attr.json");
  CHECK(a.at("values").size() == load(bundle).test.size());

  REQUIRE(run({"evaluate", "--bundle", bundle, "--attributions", (dir.path / "attr.json").string(), "--out",
               (dir.path / "pre").string()})
              .status == 0);
  REQUIRE(run({"evaluate", "--bundle", bundle, "--explainer", (dir.path / "sim.json").string(), "--out",
               (dir.path / "live").string()})
              .status == 0);
  const auto pre = read_json(dir.path / "pre" / "report.json").at("results")[0].at("result").at("score");
  const auto live = read_json(dir.path / "live" / "report.json").at("results")[0].at("result").at("score");
  CHECK(pre == live);

  fs::remove_all(dir.path / "bundle" / "checkpoints");
  Json m = read_json(dir.path / "bundle" / "manifest.json");
  for (auto it = m["files"].begin(); it != m["files"].end();) {
    it = it.key().rfind("checkpoints/", 0) == 0 ? m["files"].erase(it) : std::next(it);
  }
  write_json(dir.path / "bundle" / "manifest.json", m);
  write_json(dir.path / "tracin.json", {{"method", "tracin"}});
  const auto r = run({"attribute", "--bundle", bundle, "--explainer", (dir.path / "tracin.json").string(), "--out",
                      (dir.path / "t.json").string()});
  CHECK(r.status == 3);
  CHECK(r.err.find("tracin") != std::string::npos);
}
