#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "tailicp/cli.hpp"

namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "tailicp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int rc = tailicp::cli::parse_and_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {rc, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("tailicp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }
  fs::path dir_;
};

TEST_F(Cli, MissingConfigIsInvalidInput) {
  const auto r = run({"experiment", "--study", "s41", "--config", path("nope.cfg"), "--out-dir", path("o")});
  EXPECT_EQ(r.code, tailicp::cli::kExitInvalid);
  EXPECT_NE(r.err.find("nope.cfg"), std::string::npos) << r.err;
}

TEST_F(Cli, UnknownConfigKeyNamesLine) {
  std::ofstream(path("bad.cfg")) << "study = s41\nreps = 2\nrepz = 3\n";
  const auto r = run({"experiment", "--study", "s41", "--config", path("bad.cfg"), "--out-dir", path("o")});
  EXPECT_EQ(r.code, tailicp::cli::kExitInvalid);
  EXPECT_NE(r.err.find("repz"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find(":3"), std::string::npos) << r.err;
}

TEST_F(Cli, BadArgumentsAreInvalidInput) {
  EXPECT_EQ(run({"simulate", "--n", "ten"}).code, tailicp::cli::kExitInvalid);
  EXPECT_EQ(run({"frobnicate"}).code, tailicp::cli::kExitInvalid);
  EXPECT_EQ(run({"simulate", "--family", "gaussian", "--out-dir", path("o")}).code, tailicp::cli::kExitInvalid);
  EXPECT_EQ(run({"simulate", "--family", "logistic", "--alpha", "1.5", "--out-dir", path("o")}).code,
            tailicp::cli::kExitInvalid);
  EXPECT_EQ(run({"--version"}).code, tailicp::cli::kExitOk);
}

TEST_F(Cli, SimulateIsReproducibleAndManifested) {
  ASSERT_EQ(run({"simulate", "--n", "500", "--seed", "9", "--out-dir", path("a")}).code, 0);
  ASSERT_EQ(run({"--seed", "9", "simulate", "--n", "500", "--out-dir", path("b")}).code, 0);
  const auto a = slurp(path("a/pairs.csv"));
  EXPECT_EQ(a, slurp(path("b/pairs.csv")));
  EXPECT_EQ(a.substr(0, 6), "z1,z2\n");
  ASSERT_EQ(run({"simulate", "--n", "500", "--seed", "10", "--out-dir", path("c")}).code, 0);
  EXPECT_NE(a, slurp(path("c/pairs.csv")));
  const auto m = nlohmann::json::parse(slurp(path("a/manifest.json")));
  for (const char* k : {"command", "config", "config_hash", "master_seed", "version", "start", "end", "wall_seconds",
                        "outputs", "warnings"})
    EXPECT_TRUE(m.contains(k)) << k;
  EXPECT_EQ(m["master_seed"], 9u);
  for (const auto& o : m["outputs"]) {
    const fs::path p = fs::path(path("a")) / o.get<std::string>();
    EXPECT_TRUE(fs::exists(p));
    EXPECT_GT(fs::file_size(p), 0u);
  }
}

TEST_F(Cli, ConfigHashTracksResolvedConfig) {
  ASSERT_EQ(run({"simulate", "--n", "100", "--seed", "1", "--out-dir", path("a")}).code, 0);
  ASSERT_EQ(run({"simulate", "--n", "100", "--seed", "1", "--out-dir", path("b")}).code, 0);
  ASSERT_EQ(run({"simulate", "--n", "101", "--seed", "1", "--out-dir", path("c")}).code, 0);
  auto hash = [&](const std::string& d) { return nlohmann::json::parse(slurp(path(d + "/manifest.json")))["config_hash"]; };
  EXPECT_EQ(hash("a"), hash("b"));
  EXPECT_NE(hash("a"), hash("c"));
  EXPECT_EQ(hash("a").get<std::string>().size(), 64u);
}

TEST_F(Cli, Sha256KnownVectors) {
  EXPECT_EQ(tailicp::cli::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(tailicp::cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_F(Cli, OutDirRejectsPaths) {
  tailicp::cli::OutDir d(dir_);
  EXPECT_THROW(d.write("../x.csv", "a"), tailicp::Error);
  EXPECT_THROW(d.write("sub/x.csv", "a"), tailicp::Error);
  EXPECT_THROW(d.write("", "a"), tailicp::Error);
  d.write("x.csv", "a\n");
  EXPECT_EQ(slurp(path("x.csv")), "a\n");
  EXPECT_FALSE(fs::exists(path("x.csv.tmp")));
}

TEST_F(Cli, UnwritableOutputIsRuntimeFailure) {
  std::ofstream(path("blocker")) << "file";
  const auto r = run({"simulate", "--n", "10", "--out-dir", path("blocker/sub")});
  EXPECT_EQ(r.code, tailicp::cli::kExitRuntime);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(Cli, ExperimentWritesStudyCsv) {
  std::ofstream(path("s42.cfg")) << "# small\nstudy = s42\nreps = 2\nn = 200\nmaster_seed = 4\n";
  const auto r = run({"experiment", "--study", "s42", "--config", path("s42.cfg"), "--out-dir", path("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(path("o/s42.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')).find("n,reps,fraction_correct"), 0u) << csv;
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  const auto m = nlohmann::json::parse(slurp(path("o/manifest.json")));
  EXPECT_EQ(m["master_seed"], 4u);
}

TEST_F(Cli, MarginsFitWritesModelAndTransform) {
  ASSERT_EQ(run({"simulate", "--n", "300", "--out-dir", path("s")}).code, 0);
  {
    std::ofstream f(path("maxima.csv"));
    f << "value,t\n";
    tailicp::Rng rng = tailicp::make_rng(3);
    for (int i = 0; i < 300; ++i) {
      const double u = tailicp::uniform_open(rng);
      f << tailicp::gev_quantile(u, {10.0 + 0.01 * i, 2.0, 0.1}) << ',' << i << '\n';
    }
  }
  const auto r = run({"margins", "fit", "--input", path("maxima.csv"), "--out-dir", path("m")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = nlohmann::json::parse(slurp(path("m/margin_model.json")));
  EXPECT_TRUE(model.contains("shape"));
  const auto fr = slurp(path("m/frechet.csv"));
  EXPECT_EQ(std::count(fr.begin(), fr.end(), '\n'), 301);
  std::ofstream(path("neg.csv")) << "value\n1\nfoo\n";
  const auto bad = run({"margins", "fit", "--input", path("neg.csv"), "--out-dir", path("m2")});
  EXPECT_EQ(bad.code, tailicp::cli::kExitInvalid);
  EXPECT_NE(bad.err.find(":3"), std::string::npos) << bad.err;
}

TEST_F(Cli, FixturePipelineAndIcpAgree) {
  ASSERT_EQ(run({"pipeline", "fixture", "--weeks", "300", "--seed", "5", "--out-dir", path("fx")}).code, 0);
  std::ofstream(path("pipe.cfg")) << "observations = " << path("fx/observations.csv") << "\nmetadata = "
                                  << path("fx/metadata.csv") << "\ndraws = 4\nseed = 2\n";
  const auto r1 = run({"pipeline", "run", "--config", path("pipe.cfg"), "--out-dir", path("r1")});
  ASSERT_EQ(r1.code, 0) << r1.err;
  const auto r2 = run({"pipeline", "run", "--config", path("pipe.cfg"), "--out-dir", path("r2")});
  ASSERT_EQ(r2.code, 0) << r2.err;
  const auto m1 = nlohmann::json::parse(slurp(path("r1/manifest.json")));
  const auto m2 = nlohmann::json::parse(slurp(path("r2/manifest.json")));
  EXPECT_EQ(m1["outputs"], m2["outputs"]);
  EXPECT_EQ(m1["config_hash"], m2["config_hash"]);
  for (const auto& o : m1["outputs"]) {
    const auto name = o.get<std::string>();
    if (name == "manifest.json") continue;
    EXPECT_EQ(slurp(path("r1/" + name)), slurp(path("r2/" + name))) << name;
    EXPECT_GT(fs::file_size(path("r1/" + name)), 0u) << name;
  }
  for (const char* f : {"stations.csv", "pvalues_boxplot.csv", "pairs_draws.csv", "shat_tally.csv",
                        "environments.csv", "distance_effect.csv"})
    EXPECT_TRUE(fs::exists(path(std::string("r1/") + f))) << f;

  const auto icp = run({"icp", "run", "--input", path("r1/environments.csv"), "--out-dir", path("icp")});
  ASSERT_EQ(icp.code, 0) << icp.err;
  const auto res = nlohmann::json::parse(slurp(path("icp/icp_result.json")));
  EXPECT_EQ(res["s_hat"], nlohmann::json::array({"1"})) << res.dump();
}

TEST_F(Cli, PipelineRejectsBadObservations) {
  std::ofstream(path("meta.csv")) << "station_id,site_type,lat,lon\nA,traffic,51,0\n";
  std::ofstream(path("obs.csv")) << "timestamp,station_id,value\n2012-01-02T00:00:00Z,A,-5\n";
  const auto r = run({"pipeline", "run", "--observations", path("obs.csv"), "--metadata", path("meta.csv"),
                      "--out-dir", path("o")});
  EXPECT_EQ(r.code, tailicp::cli::kExitInvalid);
  EXPECT_NE(r.err.find(":2"), std::string::npos) << r.err;
}

}  // namespace
