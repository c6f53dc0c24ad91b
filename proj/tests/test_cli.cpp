#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mbias/cli.hpp"

namespace fs = std::filesystem;
using mbias::cli::json;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("mbias_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mbias");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = mbias::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// A data set with one unknown specimen and no other unknowns.
void write_plugin_case(const TempDir& dir, const std::string& counts) {
  write_file(dir / "counts.csv", counts);
  write_file(dir / "design.csv", "sample,x\ns1,1\n");
  write_file(dir / "config.json", R"({"counts": "counts.csv", "specimen_design": "design.csv",
                                      "fix_all_beta": 0, "estimator": "unweighted"})");
}

json simulate_and_load(const TempDir& dir, const std::string& seed = "3") {
  const auto sim = run_cli({"simulate", "--out", dir / "data", "--seed", seed});
  EXPECT_EQ(sim.code, 0) << sim.err;
  return json::parse(read_file(dir / "data/config.json"));
}

}  // namespace

TEST(Csv, RoundTripIsIdempotent) {
  mbias::io::Table t;
  t.row_names = {"a", "b,c", "d\"e"};
  t.col_names = {"x", "y"};
  t.values.resize(3, 2);
  t.values << 0.1, 1e-300, 3, 123456789.125, -2.5, 1.0 / 3.0;
  std::ostringstream first;
  mbias::io::write_csv(first, t);
  std::istringstream in(first.str());
  const auto back = mbias::io::parse_csv(in, "mem");
  EXPECT_EQ(back.values, t.values);
  EXPECT_EQ(back.row_names, t.row_names);
  std::ostringstream second;
  mbias::io::write_csv(second, back);
  EXPECT_EQ(first.str(), second.str());
}

TEST(Csv, ToleratesBomBlankLinesAndCrLf) {
  std::istringstream in("\xEF\xBB\xBFid,a,b\r\n\r\ns1, 1 ,2\r\n");
  const auto t = mbias::io::parse_csv(in, "mem");
  ASSERT_EQ(t.rows(), 1);
  EXPECT_EQ(t.col_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(t.values(0, 1), 2.0);
}

TEST(Csv, ReportsLineOfMalformedRow) {
  std::istringstream in("id,a,b\ns1,1,2\ns2,1\n");
  try {
    mbias::io::parse_csv(in, "t.csv");
    FAIL() << "malformed row accepted";
  } catch (const mbias::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("t.csv:3"), std::string::npos) << e.what();
  }
  std::istringstream bad_number("id,a\ns1,abc\n");
  EXPECT_THROW(mbias::io::parse_csv(bad_number, "t.csv"), mbias::ValidationError);
}

TEST(Cli, PluginFitReturnsProportions) {
  TempDir dir;
  write_plugin_case(dir, "sample,t1,t2,t3\ns1,30,10,60\n");
  const auto r = run_cli({"fit", "--config", dir / "config.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j.at("schema_version"), 1);
  const auto p = j.at("estimates").at("p").at(0);
  EXPECT_NEAR(p.at(0).get<double>(), 0.3, 1e-8);
  EXPECT_NEAR(p.at(1).get<double>(), 0.1, 1e-8);
  EXPECT_NEAR(p.at(2).get<double>(), 0.6, 1e-8);
}

TEST(Cli, MalformedCountsExitTwoWithLineNumber) {
  TempDir dir;
  write_plugin_case(dir, "sample,t1,t2\ns1,30\n");
  const auto r = run_cli({"fit", "--config", dir / "config.json"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("counts.csv:2"), std::string::npos) << r.err;
}

TEST(Cli, ZeroReadSampleIsValidationError) {
  TempDir dir;
  write_plugin_case(dir, "sample,t1,t2\ns1,0,0\n");
  const auto r = run_cli({"fit", "--config", dir / "config.json"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("zero total reads"), std::string::npos) << r.err;
}

TEST(Cli, MissingReferenceTaxonIsValidationError) {
  TempDir dir;
  write_plugin_case(dir, "sample,t1,t2\ns1,3,1\n");
  write_file(dir / "config.json", R"({"counts": "counts.csv", "specimen_design": "design.csv"})");
  const auto r = run_cli({"fit", "--config", dir / "config.json"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("reference_taxon"), std::string::npos) << r.err;
}

TEST(Cli, UnknownOptionAndMissingConfig) {
  EXPECT_EQ(run_cli({"fit", "--bogus"}).code, 2);
  EXPECT_EQ(run_cli({"fit", "--config", "/nonexistent/config.json"}).code, 2);
  EXPECT_EQ(run_cli({}).code, 2);
}

TEST(Cli, UnconvergedFitBlocksBootstrap) {
  TempDir dir;
  auto cfg = simulate_and_load(dir);
  cfg["solver"] = {{"max_sweeps", 1}, {"tol", 1e-300}};
  write_file(dir / "data/config.json", cfg.dump());
  const auto r = run_cli({"ci", "--config", dir / "data/config.json", "--bootstrap-B", "5"});
  EXPECT_EQ(r.code, 4) << r.err;
}

TEST(Cli, SimulateThenFitRecoversKnownRows) {
  TempDir dir;
  const auto cfg = simulate_and_load(dir);
  EXPECT_EQ(cfg.at("reference_taxon"), "taxon05");
  const auto r = run_cli({"fit", "--config", dir / "data/config.json", "--out", dir / "fit.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(read_file(dir / "fit.json"));
  EXPECT_TRUE(j.at("diagnostics").at("converged").get<bool>());
  const auto truth = json::parse(read_file(dir / "data/truth.json")).at("truth");
  for (int k = 0; k < 2; ++k)
    for (int c = 0; c < 5; ++c)
      EXPECT_DOUBLE_EQ(j.at("estimates").at("p").at(k).at(c).get<double>(), truth.at("p").at(k).at(c).get<double>());
  // Unknown specimens land close to the truth at these depths.
  for (int k = 2; k < 4; ++k)
    for (int c = 0; c < 5; ++c)
      EXPECT_NEAR(j.at("estimates").at("p").at(k).at(c).get<double>(), truth.at("p").at(k).at(c).get<double>(), 0.02);
}

TEST(Cli, RerunsAreByteIdentical) {
  TempDir dir;
  simulate_and_load(dir);
  const auto cfg = dir / "data/config.json";
  ASSERT_EQ(run_cli({"ci", "--config", cfg, "--bootstrap-B", "8", "--out", dir / "a.json"}).code, 0);
  ASSERT_EQ(run_cli({"ci", "--config", cfg, "--bootstrap-B", "8", "--out", dir / "b.json"}).code, 0);
  const auto a = read_file(dir / "a.json");
  EXPECT_FALSE(a.empty());
  // The output path is echoed in the config section; compare with it removed.
  auto strip = [](std::string s) {
    auto j = json::parse(s);
    j.at("config").erase("out");
    return j.dump();
  };
  EXPECT_EQ(strip(a), strip(read_file(dir / "b.json")));
  const auto f1 = run_cli({"fit", "--config", cfg});
  const auto f2 = run_cli({"fit", "--config", cfg});
  EXPECT_EQ(f1.out, f2.out);
}

TEST(Cli, SimulationIsSeeded) {
  TempDir a, b, c;
  simulate_and_load(a, "11");
  simulate_and_load(b, "11");
  simulate_and_load(c, "12");
  EXPECT_EQ(read_file(a / "data/counts.csv"), read_file(b / "data/counts.csv"));
  EXPECT_NE(read_file(a / "data/counts.csv"), read_file(c / "data/counts.csv"));
}

TEST(Cli, TestCommandReportsStatistic) {
  TempDir dir;
  simulate_and_load(dir);
  const auto r = run_cli({"test", "--config", dir / "data/config.json", "--bootstrap-B", "20"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = json::parse(r.out).at("test");
  EXPECT_EQ(t.at("constraints").size(), 4u);
  EXPECT_GE(t.at("statistic").get<double>(), 0.0);
  EXPECT_GE(t.at("p_value").get<double>(), 0.0);
  EXPECT_LE(t.at("p_value").get<double>(), 1.0);
  EXPECT_EQ(t.at("m").get<int>(), 4);
}

TEST(Cli, SingleFoldCvMatchesFit) {
  TempDir dir;
  auto cfg = simulate_and_load(dir);
  cfg["cv"] = {{"folds", 1}};
  write_file(dir / "data/config.json", cfg.dump());
  const auto fit = run_cli({"fit", "--config", dir / "data/config.json"});
  const auto cv = run_cli({"cv", "--config", dir / "data/config.json"});
  ASSERT_EQ(fit.code, 0);
  ASSERT_EQ(cv.code, 0) << cv.err;
  EXPECT_EQ(json::parse(fit.out).at("estimates"), json::parse(cv.out).at("estimates"));
}

TEST(Cli, SingleSpecimenCvBeatsPlugin) {
  TempDir dir;
  write_file(dir / "sim.json", R"({"scenario": {"kind": "single_specimen"}, "seed": 5})");
  const auto sim2 = run_cli({"simulate", "--config", dir / "sim.json", "--out", dir / "single"});
  ASSERT_EQ(sim2.code, 0) << sim2.err;
  const auto r = run_cli({"cv", "--config", dir / "single/config.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j.at("summary").at("scored_folds"), 3);
  EXPECT_EQ(j.at("summary").at("model_better_folds"), 3);
}
