#include "alrnet/experiment.hpp"

#include <gtest/gtest.h>

using namespace alrnet;

namespace {

ExperimentSettings small_settings() {
  ExperimentSettings s;
  s.n = 30;
  s.K = 6;
  s.replicates = 3;
  s.lambda_count = 6;
  return s;
}

}  // namespace

TEST(Grid, TwelveCellsWithDistinctLabels) {
  const auto grid = full_grid();
  ASSERT_EQ(grid.size(), 12u);
  std::set<std::string> labels;
  for (const auto& c : grid) labels.insert(c.label());
  EXPECT_EQ(labels.size(), 12u);
  EXPECT_EQ(grid.front().label(), "chain_depth-high_var-high");
  EXPECT_EQ(parse_method(to_string(Method::inv_comp_glasso)), Method::inv_comp_glasso);
  EXPECT_THROW(parse_method("lasso"), DomainError);
}

TEST(Seeds, NetworkSharedAcrossCellsReplicatesDistinct) {
  const ExperimentSettings s = small_settings();
  const ScenarioCell a{NetworkKind::hub, DepthRegime::high, Variation::low};
  const ScenarioCell b{NetworkKind::hub, DepthRegime::low, Variation::high};
  EXPECT_EQ(scenario_spec(s, a, 0).network.seed, scenario_spec(s, b, 3).network.seed);
  std::set<std::uint64_t> seeds;
  for (const auto& c : full_grid())
    for (int r = 0; r < 10; ++r) seeds.insert(replicate_seed(s, c, r));
  EXPECT_EQ(seeds.size(), 120u);
}

TEST(Scenario, DeterministicAcrossWorkerCounts) {
  ExperimentSettings s = small_settings();
  const ScenarioCell cell{NetworkKind::chain, DepthRegime::high, Variation::low};
  const ScenarioOutcome one = run_scenario(cell, s);
  s.workers = 2;
  const ScenarioOutcome two = run_scenario(cell, s);
  ASSERT_EQ(one.replicates.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(one.replicates[r].replicate, static_cast<int>(r));
    EXPECT_EQ(one.replicates[r].lambdas, two.replicates[r].lambdas);
    for (std::size_t m = 0; m < 2; ++m) {
      ASSERT_EQ(one.replicates[r].comparison[m].size(), two.replicates[r].comparison[m].size());
      for (std::size_t l = 0; l < one.replicates[r].comparison[m].size(); ++l)
        EXPECT_EQ(one.replicates[r].comparison[m][l].nms, two.replicates[r].comparison[m][l].nms);
    }
  }
}

TEST(Scenario, GlassoAgreesAcrossReferences) {
  const ScenarioOutcome o = run_scenario({NetworkKind::chain, DepthRegime::high, Variation::low}, small_settings());
  EXPECT_GT(min_nms(o, Method::inv_glasso), 1.0 - 1e-9);
  EXPECT_EQ(min_hamming(o, Method::inv_glasso), 1.0);
  EXPECT_LE(roc_gap(o, Method::inv_glasso), 1e-12);
  EXPECT_GT(median_nms(o, Method::inv_comp_glasso), 0.9);
  EXPECT_EQ(o.descent_violations(), 0);
  EXPECT_EQ(o.aggregate_for(Method::inv_glasso).size(), 6u);
}

TEST(Median, OddEvenEmpty) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_TRUE(std::isnan(median({})));
}
