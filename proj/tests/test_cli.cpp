#include "alrnet/io.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

using namespace alrnet;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "alrnet_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(ALRNET_CLI) + " " + args + " >" + (kWork / "stdout.txt").string() + " 2>" +
                          (kWork / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_all(const fs::path& p) { return detail::slurp(p); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
  static std::string at(const std::string& name) { return (kWork / name).string(); }
};

}  // namespace

TEST_F(Cli, SimulateWritesTruthAndCounts) {
  ASSERT_EQ(run("simulate --network hub --depth low --variation high --n 30 --k 9 --seed 4 --out " + at("sim")), 0);
  const OtuTable t = read_table(at("sim/counts.tsv"));
  EXPECT_EQ(t.counts.rows(), 30);
  EXPECT_EQ(t.counts.cols(), 11);
  for (Index i = 0; i < t.counts.rows(); ++i) {
    const auto depth = t.counts.row(i).sum();
    EXPECT_GE(depth, 20000);
    EXPECT_LE(depth, 40000);
  }
  EXPECT_EQ(read_matrix(at("sim/truth_omega.tsv")).rows(), 10);
  EXPECT_EQ(read_manifest(at("sim/manifest.json"))["command"], "simulate");
}

TEST_F(Cli, SimulateIsByteReproducible) {
  ASSERT_EQ(run("simulate --network random --n 20 --k 5 --seed 9 --out " + at("rep_a")), 0);
  ASSERT_EQ(run("simulate --network random --n 20 --k 5 --seed 9 --out " + at("rep_b")), 0);
  for (const char* f : {"counts.tsv", "truth_omega.tsv", "truth_z.tsv", "truth_p.tsv", "manifest.json"})
    EXPECT_EQ(read_all(kWork / "rep_a" / f), read_all(kWork / "rep_b" / f)) << f;
}

TEST_F(Cli, SmallestInvariantDimension) {
  ASSERT_EQ(run("simulate --n 10 --k 1 --out " + at("k1")), 0);
  EXPECT_EQ(read_table(at("k1/counts.tsv")).counts.cols(), 3);
}

TEST_F(Cli, DefaultGridHasSeventyPoints) {
  ASSERT_EQ(run("simulate --n 40 --k 6 --seed 2 --out " + at("g")), 0);
  ASSERT_EQ(run("fit --method inv-glasso --input " + at("g/counts.tsv") + " --out " + at("g_fit")), 0);
  const RegularizationPath p = read_path(at("g_fit/path.tsv"));
  EXPECT_EQ(p.lambdas.size(), 70u);
  const auto m = read_manifest(at("g_fit/manifest.json"));
  EXPECT_EQ(m["lambdas"].size(), 70u);
  EXPECT_EQ(m["config_hash"].get<std::string>().size(), 16u);
}

TEST_F(Cli, ReferencesAgreeAndReplayIsExact) {
  ASSERT_EQ(run("simulate --n 40 --k 6 --seed 3 --out " + at("r")), 0);
  const std::string common = "fit --method inv-comp-glasso --input " + at("r/counts.tsv") + " --candidates 7,8 --lambdas 4";
  ASSERT_EQ(run(common + " --reference 8 --out " + at("r_true")), 0);
  ASSERT_EQ(run(common + " --reference 7 --out " + at("r_false")), 0);
  ASSERT_EQ(run("metrics --a " + at("r_true/path.tsv") + " --b " + at("r_false/path.tsv") + " --truth " +
                at("r/truth_omega.tsv") + " --invariant-dim 6 --out " + at("r_metrics.csv")),
            0);
  std::istringstream in(read_all(at("r_metrics.csv")));
  const auto rows = parse_metrics(in);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) EXPECT_GT(*r.nms, 0.99);

  ASSERT_EQ(run("fit --replay " + at("r_true/manifest.json") + " --out " + at("r_replay")), 0);
  EXPECT_EQ(read_all(at("r_true/path.tsv")), read_all(at("r_replay/path.tsv")));
}

TEST_F(Cli, ExactAlrInput) {
  ASSERT_EQ(run("simulate --n 40 --k 4 --seed 5 --out " + at("z")), 0);
  ASSERT_EQ(run("fit --method inv-glasso --z-input " + at("z/truth_z.tsv") + " --lambdas 5 --out " + at("z_fit")), 0);
  const RegularizationPath p = read_path(at("z_fit/path.tsv"));
  ASSERT_EQ(p.estimates.size(), 5u);
  EXPECT_EQ(p.estimates.front().omega.rows(), 5);
  EXPECT_NE(run("fit --method inv-comp-glasso --z-input " + at("z/truth_z.tsv") + " --out " + at("z_bad")), 0);
}

TEST_F(Cli, PathAgainstItselfScoresOne) {
  ASSERT_EQ(run("simulate --n 40 --k 5 --seed 6 --out " + at("s")), 0);
  ASSERT_EQ(run("fit --method inv-glasso --input " + at("s/counts.tsv") + " --lambdas 6 --out " + at("s_fit")), 0);
  ASSERT_EQ(run("metrics --a " + at("s_fit/path.tsv") + " --b " + at("s_fit/path.tsv") + " --out " + at("self.csv")), 0);
  std::istringstream in(read_all(at("self.csv")));
  for (const auto& r : parse_metrics(in)) {
    EXPECT_EQ(*r.nms, 1.0);
    EXPECT_EQ(*r.hamming, 1.0);
  }
}

TEST_F(Cli, StarsWritesSelection) {
  ASSERT_EQ(run("simulate --n 60 --k 5 --seed 7 --out " + at("st")), 0);
  ASSERT_EQ(run("stars --method inv-glasso --input " + at("st/counts.tsv") +
                " --candidates 6,7 --lambdas 8 --stars-subsamples 5 --stars-all-references --out " + at("st_out")),
            0);
  EXPECT_TRUE(fs::exists(at("st_out/instability.csv")));
  EXPECT_TRUE(read_manifest(at("st_out/manifest.json")).contains("lambda_star"));
}

TEST_F(Cli, BadUsageFails) {
  EXPECT_NE(run("fit --no-such-flag"), 0);
  EXPECT_NE(run("simulate --network ring --out " + at("bad")), 0);
  EXPECT_EQ(run("fit --method inv-glasso --input " + at("missing.tsv") + " --out " + at("bad")), 1);
  EXPECT_EQ(run("fit --method inv-glasso --out " + at("bad")), 2);
}
