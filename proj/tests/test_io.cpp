#include "alrnet/io.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <chrono>

using namespace alrnet;
using namespace alrnet::testing;
namespace fs = std::filesystem;

namespace {

OtuTable parse(const std::string& text, TableFormat f = TableFormat::tsv) {
  std::istringstream in(text);
  return parse_table(in, f);
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("alrnet_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Table, SmallRoundTrip) {
  const OtuTable t = parse("sample\ta\tb\tc\ns1\t1\t0\t7\ns2\t3\t4\t5\n");
  EXPECT_EQ(t.taxon_ids, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(t.sample_ids, (std::vector<std::string>{"s1", "s2"}));
  EXPECT_EQ(t.counts(0, 2), 7);
  EXPECT_EQ(t.counts(1, 0), 3);
  const OtuTable back = parse(format_table(t));
  EXPECT_EQ(back.counts, t.counts);
  EXPECT_EQ(back.taxon_ids, t.taxon_ids);
  const OtuTable csv = parse(format_table(t, TableFormat::csv), TableFormat::csv);
  EXPECT_EQ(csv.counts, t.counts);
  // CRLF line endings are accepted
  EXPECT_EQ(parse("sample\ta\tb\r\ns1\t1\t2\r\n").counts(0, 1), 2);
}

TEST(Table, ErrorsNameTheCell) {
  EXPECT_NE(error_of("sample\ta\tb\ns1\t1\t-2\n").find("line 2, column 'b'"), std::string::npos);
  EXPECT_NE(error_of("sample\ta\tb\ns1\t1\t-2\n").find("negative"), std::string::npos);
  EXPECT_NE(error_of("sample\ta\tb\ns1\t1\t2.5\n").find("not an integer"), std::string::npos);
  EXPECT_NE(error_of("sample\ta\tb\ns1\t1\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("sample\ta\ta\ns1\t1\t2\n").find("duplicate taxon"), std::string::npos);
  EXPECT_NE(error_of("sample\ta\tb\ns1\t1\t2\ns1\t3\t4\n").find("line 3"), std::string::npos);
  EXPECT_NE(error_of("").find("empty"), std::string::npos);
}

TEST(Table, TaraShapedFileParsesQuickly) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> cnt(0, 5000);
  OtuTable t;
  for (int k = 0; k < 81; ++k) t.taxon_ids.push_back("genus_" + std::to_string(k));
  t.counts.resize(324, 81);
  for (int i = 0; i < 324; ++i) {
    t.sample_ids.push_back("station_" + std::to_string(i));
    for (int k = 0; k < 81; ++k) t.counts(i, k) = cnt(rng);
  }
  const fs::path dir = scratch_dir("tara");
  write_table(dir / "otu.tsv", t);
  const auto start = std::chrono::steady_clock::now();
  const OtuTable back = read_table(dir / "otu.tsv");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 1.0);
  EXPECT_EQ(back.counts, t.counts);
}

TEST(Filter, LowDepthSamples) {
  const OtuTable t = parse("s\ta\tb\nx\t50\t49\ny\t50\t50\nz\t0\t0\n");
  const OtuTable f = filter_low_depth(t);
  EXPECT_EQ(f.sample_ids, (std::vector<std::string>{"y"}));
  EXPECT_EQ(filter_low_depth(t, 0).counts, t.counts);
  EXPECT_THROW(filter_low_depth(t, 1000), EmptyDataError);
  EXPECT_THROW(filter_low_depth(t, -1), DomainError);
}

TEST(Filter, SurvivorsMatchRecount) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> cnt(0, 60);
  OtuTable t;
  t.taxon_ids = {"a", "b", "c"};
  t.counts.resize(200, 3);
  for (int i = 0; i < 200; ++i) {
    t.sample_ids.push_back(std::to_string(i));
    for (int k = 0; k < 3; ++k) t.counts(i, k) = cnt(rng);
  }
  int expect = 0;
  for (int i = 0; i < 200; ++i) expect += t.counts.row(i).sum() >= 100 ? 1 : 0;
  EXPECT_EQ(filter_low_depth(t).counts.rows(), expect);
}

TEST(Filter, PermutingRowsPermutesOutput) {
  const OtuTable t = parse("s\ta\tb\nx\t50\t60\ny\t5\t5\nz\t70\t80\n");
  const OtuTable p = parse("s\ta\tb\nz\t70\t80\nx\t50\t60\ny\t5\t5\n");
  EXPECT_EQ(filter_low_depth(t).sample_ids, (std::vector<std::string>{"x", "z"}));
  EXPECT_EQ(filter_low_depth(p).sample_ids, (std::vector<std::string>{"z", "x"}));
}

TEST(Restrict, KeepsNamedTaxa) {
  const OtuTable t = parse("s\ta\tb\tc\nx\t1\t2\t3\n");
  const OtuTable r = restrict_taxa(t, {"c", "a"});
  EXPECT_EQ(r.taxon_ids, (std::vector<std::string>{"c", "a"}));
  EXPECT_EQ(r.counts(0, 0), 3);
  EXPECT_THROW(restrict_taxa(t, {"q"}), DomainError);
}

TEST(Ranking, ByMeanRelativeAbundance) {
  const OtuTable one = parse("s\ta\tb\tc\nx\t1\t5\t3\n");
  EXPECT_EQ(rank_candidate_references(one, {}, 3).taxa, (std::vector<std::string>{"b", "c", "a"}));
  const OtuTable tie = parse("s\tzeta\talpha\tm\nx\t2\t2\t1\n");
  EXPECT_EQ(rank_candidate_references(tie, {}, 2).taxa, (std::vector<std::string>{"alpha", "zeta"}));
  const auto ex = rank_candidate_references(one, {"b"}, 3);
  EXPECT_EQ(ex.taxa, (std::vector<std::string>{"c", "a"}));
  EXPECT_TRUE(ex.short_list);
  EXPECT_THROW(rank_candidate_references(one, {}, 0), DomainError);
}

TEST(Ranking, MatchesBruteForce) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> cnt(0, 100);
  OtuTable t;
  for (int k = 0; k < 12; ++k) t.taxon_ids.push_back("t" + std::to_string(k));
  t.counts.resize(30, 12);
  for (int i = 0; i < 30; ++i) {
    t.sample_ids.push_back(std::to_string(i));
    for (int k = 0; k < 12; ++k) t.counts(i, k) = cnt(rng) + 1;
  }
  std::vector<std::pair<double, std::string>> avg;
  for (int k = 0; k < 12; ++k) {
    double s = 0;
    for (int i = 0; i < 30; ++i) s += static_cast<double>(t.counts(i, k)) / static_cast<double>(t.counts.row(i).sum());
    avg.emplace_back(-s / 30.0, t.taxon_ids[static_cast<std::size_t>(k)]);
  }
  std::sort(avg.begin(), avg.end());
  const auto r = rank_candidate_references(t, {}, 4);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(r.taxa[static_cast<std::size_t>(k)], avg[static_cast<std::size_t>(k)].second);
}

TEST(Matrix, BitExactRoundTrip) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> expo(-300, 300);
  for (int rep = 0; rep < 1000; ++rep) {
    Matrix m = random_normal(1 + rep % 4, 1 + rep % 3, rng);
    m(0, 0) *= std::pow(10.0, expo(rng));
    std::istringstream in(format_matrix(m));
    EXPECT_EQ(parse_matrix(in), m);
  }
}

TEST(Edges, RoundTrip) {
  EdgeSet e{5, {}};
  e.add(3, 1);
  e.add(0, 4);
  const std::string text = format_edges(e);
  EXPECT_EQ(text, "#nodes\t5\n1\t5\n2\t4\n");
  std::istringstream in(text);
  EXPECT_EQ(parse_edges(in), e);
  std::istringstream bad("1\t2\n");
  EXPECT_THROW(parse_edges(bad), ParseError);
}

TEST(PathFile, RoundTripAndVersion) {
  std::mt19937_64 rng(5);
  RegularizationPath p;
  for (double lam : {0.5, 0.25}) {
    PrecisionEstimate e;
    e.omega = spd_inverse(random_spd(3, rng));
    e.lambda = lam;
    e.converged = lam < 0.3;
    e.iterations = 7;
    e.objective = -1.25;
    p.lambdas.push_back(lam);
    p.estimates.push_back(e);
  }
  std::istringstream in(format_path(p));
  const RegularizationPath back = parse_path(in);
  ASSERT_EQ(back.estimates.size(), 2u);
  EXPECT_EQ(back.lambdas, p.lambdas);
  EXPECT_EQ(back.estimates[1].omega, p.estimates[1].omega);
  EXPECT_TRUE(back.estimates[1].converged);
  EXPECT_FALSE(back.estimates[0].converged);
  std::string text = format_path(p);
  text.replace(text.find("version=1"), 9, "version=2");
  std::istringstream v2(text);
  EXPECT_THROW(parse_path(v2), SchemaError);
}

TEST(Metrics, ExactColumns) {
  const std::string text = format_metrics({{3, 0.5, 1.0, std::nullopt, 0.98, 0.5, 0.01}});
  EXPECT_EQ(text.substr(0, text.find('\n')), "replicate,lambda,nms,jaccard,hamming,tpr,fpr");
  std::istringstream in(text);
  const auto rows = parse_metrics(in);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].replicate, 3);
  EXPECT_FALSE(rows[0].jaccard.has_value());
  EXPECT_EQ(*rows[0].hamming, 0.98);
}

TEST(Manifest, VersionChecked) {
  const fs::path dir = scratch_dir("manifest");
  nlohmann::json m = new_manifest("fit");
  m["lambdas"] = {0.5, 0.25};
  write_manifest(dir / "m.json", m);
  EXPECT_EQ(read_manifest(dir / "m.json")["command"], "fit");
  m["version"] = kManifestVersion + 1;
  write_manifest(dir / "m2.json", m);
  EXPECT_THROW(read_manifest(dir / "m2.json"), SchemaError);
  detail::write_atomic(dir / "m3.json", "{\"schema\": \"other\"}");
  EXPECT_THROW(read_manifest(dir / "m3.json"), SchemaError);
  detail::write_atomic(dir / "m4.json", "{not json");
  EXPECT_THROW(read_manifest(dir / "m4.json"), ParseError);
}

TEST(Manifest, ConfigRoundTripAndHash) {
  FitConfig c;
  c.max_outer_iters = 17;
  c.glasso.ridge_fallback = 0.125;
  const FitConfig back = fit_config_from_json(to_json(c));
  EXPECT_EQ(back.max_outer_iters, 17);
  EXPECT_EQ(*back.glasso.ridge_fallback, 0.125);
  EXPECT_EQ(config_hash(to_json(c)), config_hash(to_json(back)));
  EXPECT_NE(config_hash(to_json(c)), config_hash(to_json(FitConfig{})));
  EXPECT_EQ(config_hash(to_json(c)).size(), 16u);
}

TEST(Files, MissingFileIsAnError) {
  EXPECT_THROW(read_table("/nonexistent/alrnet/table.tsv"), std::runtime_error);
  EXPECT_THROW(read_matrix("/nonexistent/alrnet/m.tsv"), std::runtime_error);
}
