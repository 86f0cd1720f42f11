#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gcarom/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "gcarom");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = gcarom::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

fs::path scratch() {
  const fs::path p = fs::temp_directory_path() / "gcarom_cli_test";
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 1") {
  CHECK(run({}).code == gcarom::kExitUsage);
  CHECK(run({"generate", "--out", "x"}).code == gcarom::kExitUsage);
  CHECK(run({"generate", "--family", "wave", "--out", "x"}).code == gcarom::kExitUsage);
  CHECK(run({"--help"}).code == gcarom::kExitOk);
}

TEST_CASE("end to end on a tiny dataset") {
  const fs::path dir = scratch();
  const std::string ds = (dir / "ds").string();
  REQUIRE(run({"generate", "--family", "front", "--out", ds, "--resolution", "5"}).code == 0);

  SUBCASE("pod errors shrink with more modes") {
    const Result r = run({"pod", "--data", ds, "--modes", "5", "--modes", "10", "--out",
                          (dir / "pod").string()});
    REQUIRE(r.code == 0);
    const auto rows = lines(dir / "pod" / "pod_summary.csv");
    REQUIRE(rows.size() == 3);
    const double m5 = std::stod(rows[1].substr(rows[1].find(',') + 1));
    const double m10 = std::stod(rows[2].substr(rows[2].find(',') + 1));
    CHECK(m10 <= m5);
    // Per sample as well.
    const auto a = lines(dir / "pod" / "pod_5.csv");
    const auto b = lines(dir / "pod" / "pod_10.csv");
    REQUIRE(a.size() == b.size());
    REQUIRE(a.size() == 71);
    const auto epsilon = [](const std::string& row) {
      std::stringstream ss(row);
      std::string cell;
      for (int i = 0; i < 4; ++i) std::getline(ss, cell, ',');
      return std::stod(cell);
    };
    for (std::size_t i = 1; i < a.size(); ++i) CHECK(epsilon(b[i]) <= epsilon(a[i]) + 1e-15);
  }

  SUBCASE("train, evaluate and cluster with manifests") {
    const std::string run_dir = (dir / "run").string();
    const Result t = run({"train", "--data", ds, "--out", run_dir, "--set", "epochs=4", "--set",
                          "ffn=8", "--set", "seed=3", "--log-every", "0"});
    REQUIRE(t.code == 0);
    CHECK(fs::exists(dir / "run" / "checkpoint.gcar"));
    CHECK(lines(dir / "run" / "history.csv").size() == 5);
    std::ifstream mf(dir / "run" / "run_manifest.json");
    const auto j = nlohmann::json::parse(mf);
    CHECK(j["seed"] == 3);
    CHECK(j["command"] == "train");
    CHECK(j["version"] == gcarom::version_string());
    CHECK(j["config"].get<std::string>().find("epochs = 4") != std::string::npos);

    const std::string ck = (dir / "run" / "checkpoint.gcar").string();
    const Result e = run({"evaluate", "--checkpoint", ck, "--data", ds, "--out", (dir / "ev").string()});
    REQUIRE(e.code == 0);
    CHECK(e.out.find("test samples 70") != std::string::npos);
    CHECK(lines(dir / "ev" / "errors.csv").size() == 101);
    CHECK(fs::exists(dir / "ev" / "run_manifest.json"));

    const Result c = run({"cluster", "--checkpoint", ck, "--data", ds, "--out", (dir / "cl").string()});
    REQUIRE(c.code == 0);
    CHECK(lines(dir / "cl" / "clusters.csv").size() == 101);
    CHECK(lines(dir / "cl" / "label_sweep.csv").size() == 9);
    const Result sub = run({"cluster", "--checkpoint", ck, "--data", ds, "--out", (dir / "cl2").string(),
                            "--latent-dims", "0,2"});
    CHECK(sub.code == 0);
    std::ifstream cm(dir / "cl2" / "run_manifest.json");
    CHECK(nlohmann::json::parse(cm)["args"]["latent_dims"] == nlohmann::json::array({0, 2}));
    CHECK(run({"cluster", "--checkpoint", ck, "--data", ds, "--out", (dir / "cl3").string(),
               "--latent-dims", "15"})
              .code == gcarom::kExitData);

    // A mesh that differs from the training one is a data error.
    const std::string other = (dir / "other").string();
    REQUIRE(run({"generate", "--family", "front", "--out", other, "--resolution", "5", "--seed", "9"}).code == 0);
    CHECK(run({"evaluate", "--checkpoint", ck, "--data", other, "--out", (dir / "ev2").string()}).code ==
          gcarom::kExitData);
  }

  SUBCASE("data and numerical failures") {
    CHECK(run({"train", "--data", (dir / "missing").string(), "--out", (dir / "x").string()}).code ==
          gcarom::kExitData);
    const Result bad = run({"train", "--data", ds, "--out", (dir / "x").string(), "--set", "bogus=1"});
    CHECK(bad.code == gcarom::kExitData);
    CHECK(bad.err.find("bogus") != std::string::npos);
    CHECK(run({"train", "--data", ds, "--out", (dir / "x").string(), "--set", "n_h=7"}).code ==
          gcarom::kExitData);
    CHECK(run({"train", "--data", ds, "--out", (dir / "x").string(), "--set", "lr=1e200", "--set",
               "epochs=5", "--log-every", "0"})
              .code == gcarom::kExitNumerical);
  }
  fs::remove_all(dir);
}

TEST_CASE("sweep enumerates the configuration grid") {
  const fs::path dir = scratch();
  const Result r = run({"sweep", "--dry-run", "--out", dir.string()});
  REQUIRE(r.code == 0);
  const auto rows = lines(dir / "summary.csv");
  REQUIRE(rows.size() == 1 + 3 * 3 * 2);
  CHECK(rows[1] == "10,0.1,15,,,");
  CHECK(rows.back() == "50,10,25,,,");
  CHECK(r.out.find("18 configurations") != std::string::npos);
  fs::remove_all(dir);
}

}  // TEST_SUITE
