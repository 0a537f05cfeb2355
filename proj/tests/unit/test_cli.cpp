#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

#ifndef BEABLE_CLI_PATH
#define BEABLE_CLI_PATH ""
#endif

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    if (std::string(BEABLE_CLI_PATH).empty()) GTEST_SKIP() << "CLI not built";
    dir_ = fs::temp_directory_path() /
           ("beable_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override {
    if (!dir_.empty()) fs::remove_all(dir_);
  }

  int run(const std::string& args, const std::string& env = "") const {
    const std::string cmd =
        env + " " + std::string(BEABLE_CLI_PATH) + " " + args + " > " + (dir_ / "log.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string slurp(const fs::path& p) const {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  std::string out(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, MissingInputIsConfigError) {
  EXPECT_EQ(run("simulate --field " + out("nope.csv") + " --out " + out("o")), 1);
  EXPECT_EQ(run("simulate --out " + out("o")), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("simulate --zero-field --n-traj -5 --out " + out("o")), 1);
}

TEST_F(Cli, UnknownConfigKeyIsConfigError) {
  std::ofstream(dir_ / "cfg.json") << R"({"n_traj": 5, "bogus_key": 1})";
  EXPECT_EQ(run("simulate --zero-field --config " + out("cfg.json") + " --out " + out("o")), 1);
}

TEST_F(Cli, ConfigValuesAndFlagsPrecedence) {
  std::ofstream(dir_ / "cfg.json") << R"({"n_traj": 7, "zero_field": true, "horizon": 2})";
  ASSERT_EQ(run("simulate --config " + out("cfg.json") + " --n-traj 3 --out " + out("o")), 0);
  const std::string summary = slurp(dir_ / "o" / "ensemble.json");
  EXPECT_NE(summary.find("\"n_traj\": 3"), std::string::npos) << summary;
}

TEST_F(Cli, ZeroFieldGivesSinglePathway) {
  ASSERT_EQ(run("simulate --zero-field --n-traj 1 --horizon 5 --self-check --out " + out("o")), 0);
  std::ifstream in(dir_ / "o" / "pathways.csv");
  std::string line;
  int lines = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  EXPECT_EQ(lines, 2);
}

TEST_F(Cli, UnreachedTargetIsNumericalFailure) {
  EXPECT_EQ(run("optimize --iterations 1 --horizon 10 --out " + out("o")), 2);
  EXPECT_TRUE(fs::exists(dir_ / "o" / "field.csv"));
}

TEST_F(Cli, AllWindowsExcludedIsEmptyResult) {
  std::ofstream ds(dir_ / "ds.csv");
  ds << "M,population,sigma\n";
  for (int i = 1; i <= 160; ++i) {
    const double m = 0.01 * i;
    ds << m << "," << 0.3 * m * m * m * m * m * m * m * m << ",0\n";
  }
  ds.close();
  EXPECT_EQ(run("mechanism --dataset " + out("ds.csv") + " --min-hi 0.29 --max-hi 0.9 --out " + out("o")), 3);
}

TEST_F(Cli, OutputsIndependentOfWorkers) {
  const std::string sim = "simulate --zero-field --horizon 5 --n-traj 50 --seed 4 ";
  ASSERT_EQ(run(sim + "--out " + out("a"), "BEABLE_MECH_WORKERS=1"), 0);
  ASSERT_EQ(run(sim + "--out " + out("b"), "BEABLE_MECH_WORKERS=3"), 0);
  EXPECT_EQ(slurp(dir_ / "a" / "ensemble.csv"), slurp(dir_ / "b" / "ensemble.csv"));

  std::ofstream ds(dir_ / "ds.csv");
  ds.precision(17);
  ds << "M,population,sigma\n";
  for (int i = 1; i <= 160; ++i) {
    const double m = 0.01 * i;
    // Truncated series with <j^k> = 4.6, 22, 110, 560 and a = 5.5.
    const double l = std::log(m);
    const double amp = 0.8 * std::exp(-5.5 * (m - 1.0)) *
                       (1.0 + 4.6 * l + 22.0 * l * l / 2.0 + 110.0 * l * l * l / 6.0 + 560.0 * l * l * l * l / 24.0);
    ds << m << "," << amp * amp << ",0\n";
  }
  ds.close();
  const std::string mech = "mechanism --dataset " + out("ds.csv") +
                           " --min-lo 0.25 --min-hi 0.35 --max-lo 0.9 --max-hi 1.0 --self-check ";
  ASSERT_EQ(run(mech + "--out " + out("c"), "BEABLE_MECH_WORKERS=1"), 0);
  ASSERT_EQ(run(mech + "--out " + out("d") + " --workers 3"), 0);
  EXPECT_EQ(slurp(dir_ / "c" / "report.json"), slurp(dir_ / "d" / "report.json"));
  EXPECT_EQ(slurp(dir_ / "c" / "fits.csv"), slurp(dir_ / "d" / "fits.csv"));
}
