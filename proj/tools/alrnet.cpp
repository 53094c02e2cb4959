// alrnet command-line driver: simulate, fit, metrics, stars, reproduce.

#include "alrnet/experiment.hpp"
#include "alrnet/io.hpp"
#include "alrnet/selection.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace alrnet;

namespace {

/// Raised for flag combinations CLI11 cannot check on its own.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_number_list(const std::string& s) {
  std::vector<double> out;
  for (auto part : detail::split(s, ',')) {
    std::string tok(part);
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (!tok.empty()) out.push_back(detail::parse_double(tok, "--lambda-list"));
  }
  return out;
}

/// Taxon given by id, or by 1-based position when no id matches.
TaxonId resolve_taxon(const std::vector<std::string>& ids, const std::string& key) {
  for (std::size_t k = 0; k < ids.size(); ++k)
    if (ids[k] == key) return k;
  std::size_t pos = 0;
  const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), pos);
  if (ec == std::errc() && ptr == key.data() + key.size() && pos >= 1 && pos <= ids.size()) return pos - 1;
  throw UsageError("unknown taxon: " + key);
}

std::vector<std::string> split_names(const std::string& s) {
  std::vector<std::string> out;
  for (auto part : detail::split(s, ',')) {
    std::string tok(part);
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::string fixed(double v, int digits = 6) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

json lambdas_json(const std::vector<double>& lambdas) {
  json a = json::array();
  for (double l : lambdas) a.push_back(l);
  return a;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  std::string network = "chain", depth = "low", variation = "high";
  Index n = 100;
  Index k = 49;
  std::uint64_t seed = 1;
  std::string out = "sim";
};

ScenarioSpec simulate_spec(const SimulateOptions& o) {
  if (o.n < 2) throw UsageError("--n must be at least 2");
  if (o.k < 1) throw UsageError("--k must be at least 1");
  ScenarioSpec s;
  s.network = {parse_network_kind(o.network), o.k + 1, mix_seed(o.seed, 0)};
  s.depth = parse_depth(o.depth);
  s.variation = parse_variation(o.variation);
  s.n = o.n;
  s.replicate_seed = mix_seed(o.seed, 1);
  return s;
}


int cmd_simulate(const SimulateOptions& o) {
  const ScenarioSpec spec = simulate_spec(o);
  const SimulatedData d = simulate_dataset(spec);
  const fs::path out(o.out);
  write_table(out / "counts.tsv", table_from_counts(d.counts));
  write_matrix(out / "truth_omega.tsv", d.omega);
  write_edges(out / "truth_edges.tsv", d.edges);
  write_matrix(out / "truth_z.tsv", d.z);
  write_matrix(out / "truth_p.tsv", d.p);
  json m = new_manifest("simulate");
  m["scenario"] = {{"network", o.network}, {"depth", o.depth}, {"variation", o.variation},
                   {"n", o.n},             {"k", o.k},         {"seed", o.seed}};
  m["seeds"] = {{"network", spec.network.seed}, {"replicate", spec.replicate_seed}};
  m["reference"] = d.counts.taxon_ids.back();
  m["candidates"] = {d.counts.taxon_ids[d.counts.taxon_ids.size() - 2], d.counts.taxon_ids.back()};
  write_manifest(out / "manifest.json", m);
  return 0;
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
  std::string method = "inv-comp-glasso";
  std::string input;
  std::string z_input;
  std::string reference;
  std::string candidates;
  std::string restrict_file;
  std::size_t lambda_count = 70;
  double lambda_ratio = 0.01;
  std::string lambda_list;
  std::int64_t min_reads = 100;
  Index invariant_dim = -1;
  int workers = 1;
  std::string replay;
  std::string out = "fit";
};

/// Count data after restriction and depth filtering, with the chosen
/// reference and candidate set resolved to column indices.
struct PreparedCounts {
  CountMatrix x;
  TaxonId reference = 0;
  TaxonList candidates;
  std::size_t dropped_samples = 0;
};

PreparedCounts prepare_counts(const std::string& input, const std::string& restrict_file, std::int64_t min_reads,
                              const std::string& reference, const std::string& candidates) {
  OtuTable t = read_table(input);
  if (!restrict_file.empty()) {
    std::vector<std::string> keep;
    for (auto line : detail::split(detail::slurp(restrict_file), '\n')) {
      std::string id(detail::trim_cr(line));
      if (!id.empty()) keep.push_back(id);
    }
    t = restrict_taxa(t, keep);
  }
  const std::size_t before = t.sample_ids.size();
  t = filter_low_depth(t, min_reads);
  PreparedCounts p;
  p.dropped_samples = before - t.sample_ids.size();
  p.x = counts_from_table(t);
  if (p.x.num_taxa() < 2) throw UsageError("need at least two taxa");
  p.reference = reference.empty() ? p.x.num_taxa() - 1 : resolve_taxon(p.x.taxon_ids, reference);
  if (candidates.empty()) {
    p.candidates = {p.reference};
  } else {
    for (const auto& c : split_names(candidates)) p.candidates.push_back(resolve_taxon(p.x.taxon_ids, c));
    std::sort(p.candidates.begin(), p.candidates.end());
    p.candidates.erase(std::unique(p.candidates.begin(), p.candidates.end()), p.candidates.end());
    if (std::find(p.candidates.begin(), p.candidates.end(), p.reference) == p.candidates.end())
      throw UsageError("--reference must belong to --candidates");
  }
  return p;
}

std::vector<double> resolve_lambdas(const std::string& list, std::size_t count, double ratio, double top) {
  if (!list.empty()) {
    auto l = parse_number_list(list);
    validate_lambdas(l);
    return l;
  }
  if (count < 1) throw UsageError("--lambdas must be at least 1");
  return log_spaced_lambdas(top, count, ratio);
}

json glasso_diagnostics(const RegularizationPath& path) {
  json a = json::array();
  for (const auto& e : path.estimates)
    a.push_back({{"lambda", e.lambda},
                 {"converged", e.converged},
                 {"iterations", e.iterations},
                 {"objective", e.objective},
                 {"kkt_residual", e.kkt_residual},
                 {"ridge_applied", e.ridge_applied}});
  return a;
}

json comp_diagnostics(const CompPath& cp) {
  json a = json::array();
  for (std::size_t l = 0; l < cp.diagnostics.size(); ++l) {
    const auto& d = cp.diagnostics[l];
    a.push_back({{"lambda", cp.path.lambdas[l]},
                 {"converged", d.converged},
                 {"outer_iterations", d.outer_iterations},
                 {"objective_trace", d.objective_trace},
                 {"newton_iters_mean", d.newton_iters_mean},
                 {"newton_iters_max", d.newton_iters_max},
                 {"newton_fallbacks", d.newton_fallbacks},
                 {"newton_unconverged", d.newton_unconverged},
                 {"descent_violations", d.descent_violations}});
  }
  return a;
}

int cmd_fit(FitOptions o) {
  FitConfig cfg;
  if (!o.replay.empty()) {
    const json m = read_manifest(o.replay);
    if (m.at("command") != "fit") throw SchemaError("manifest does not describe a fit");
    o.method = m.at("method");
    o.input = m.value("input", "");
    o.z_input = m.value("z_input", "");
    o.reference = m.value("reference", "");
    o.candidates = m.value("candidates_arg", "");
    o.restrict_file = m.value("restrict", "");
    o.min_reads = m.value("min_reads", std::int64_t{100});
    o.invariant_dim = m.value("invariant_dim", Index{-1});
    std::string list;
    for (double l : m.at("lambdas")) list += (list.empty() ? "" : ",") + detail::format_double(l);
    o.lambda_list = list;
    cfg = fit_config_from_json(m.at("config"));
  }
  const Method method = parse_method(o.method);
  cfg.workers = o.workers;
  if (o.input.empty() == o.z_input.empty()) throw UsageError("give exactly one of --input and --z-input");
  if (!o.z_input.empty() && method != Method::inv_glasso)
    throw UsageError("--z-input supplies exact ALR values and only works with --method inv-glasso");

  const fs::path out(o.out);
  json m = new_manifest("fit");
  m["method"] = o.method;
  RegularizationPath path;
  json diag;

  if (!o.z_input.empty()) {
    // exact z: no latent step, columns taken as already laid out
    const Matrix z = read_matrix(o.z_input);
    const Index dim = z.cols();
    const Index k = o.invariant_dim < 0 ? dim - 1 : o.invariant_dim;
    if (k < 1 || k > dim) throw UsageError("--invariant-dim out of range");
    const auto block = leading_indices(k);
    const auto lambdas = resolve_lambdas(o.lambda_list, o.lambda_count, o.lambda_ratio,
                                         lambda_max(scatter_about(z, column_mean(z)), block, cfg.glasso));
    path = inv_glasso_path(z, block, lambdas, cfg.glasso);
    diag = {{"method", o.method}, {"path", glasso_diagnostics(path)}};
    m["z_input"] = o.z_input;
    m["invariant_dim"] = k;
    m["input_hash"] = config_hash(json(detail::slurp(o.z_input)));
  } else {
    const PreparedCounts p = prepare_counts(o.input, o.restrict_file, o.min_reads, o.reference, o.candidates);
    const auto lambdas = resolve_lambdas(o.lambda_list, o.lambda_count, o.lambda_ratio,
                                         empirical_lambda_max(p.x, p.candidates, cfg));
    if (method == Method::inv_glasso) {
      path = empirical_glasso_path(p.x, p.reference, p.candidates, lambdas, cfg);
      diag = {{"method", o.method}, {"path", glasso_diagnostics(path)}};
    } else {
      CompPath cp = fit_path(p.x, p.reference, p.candidates, lambdas, cfg);
      diag = {{"method", o.method}, {"path", comp_diagnostics(cp)}};
      path = std::move(cp.path);
    }
    const TaxonList layout = canonical_layout(p.x.num_taxa(), p.candidates, p.reference);
    std::vector<std::string> layout_ids;
    for (TaxonId t : layout) layout_ids.push_back(p.x.taxon_ids[t]);
    std::vector<std::string> cand_ids;
    for (TaxonId t : p.candidates) cand_ids.push_back(p.x.taxon_ids[t]);
    m["input"] = o.input;
    m["input_hash"] = config_hash(json(detail::slurp(o.input)));
    m["restrict"] = o.restrict_file;
    m["min_reads"] = o.min_reads;
    m["dropped_samples"] = p.dropped_samples;
    m["reference"] = p.x.taxon_ids[p.reference];
    m["candidates"] = cand_ids;
    m["candidates_arg"] = o.candidates.empty() ? p.x.taxon_ids[p.reference] : o.candidates;
    m["layout"] = layout_ids;
    m["invariant_dim"] = static_cast<Index>(layout.size() - (p.candidates.size() - 1));
  }
  int unconverged = 0;
  for (const auto& e : path.estimates) unconverged += e.converged ? 0 : 1;
  diag["unconverged"] = unconverged;
  m["lambdas"] = lambdas_json(path.lambdas);
  m["config"] = to_json(cfg);
  m["config_hash"] = config_hash(m["config"]);

  write_path(out / "path.tsv", path);
  detail::write_atomic(out / "diagnostics.json", diag.dump(2) + "\n");
  write_manifest(out / "manifest.json", m);
  if (unconverged) std::cerr << "note: " << unconverged << " lambda values did not converge (see diagnostics.json)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsOptions {
  std::string a, b, truth;
  Index invariant_dim = -1;
  std::string out = "metrics.csv";
};

int cmd_metrics(const MetricsOptions& o) {
  if (o.b.empty() && o.truth.empty()) throw UsageError("give --b, --truth, or both");
  const RegularizationPath pa = read_path(o.a);
  if (pa.estimates.empty()) throw UsageError("path " + o.a + " is empty");
  const Index dim = pa.estimates.front().omega.rows();
  const Index k = o.invariant_dim < 0 ? dim - 1 : o.invariant_dim;
  if (k < 1 || k > dim) throw UsageError("--invariant-dim out of range");
  const auto block = leading_indices(k);
  std::optional<EdgeSet> truth;
  if (!o.truth.empty()) {
    const Matrix t = read_matrix(o.truth);
    if (t.rows() < k) throw UsageError("truth matrix is smaller than the invariant block");
    truth = edges_from_precision(t, block);
  }
  std::vector<MetricsRecord> rows;
  if (!o.b.empty()) {
    const RegularizationPath pb = read_path(o.b);
    if (pb.lambdas != pa.lambdas) throw UsageError("the two paths use different lambda grids");
    rows = compare_paths(pa, pb, block, truth ? &*truth : nullptr);
  } else {
    rows = compare_to_truth(pa, read_matrix(o.truth), block, 0);
  }
  detail::write_atomic(o.out, format_metrics(rows));
  return 0;
}

// ---------------------------------------------------------------------------
// stars

struct StarsOptions {
  std::string method = "inv-comp-glasso";
  std::string input;
  std::string reference;
  std::string candidates;
  std::string restrict_file;
  std::int64_t min_reads = 100;
  std::size_t lambda_count = 70;
  double lambda_ratio = 0.01;
  std::string lambda_list;
  StarsConfig stars;
  Index stars_size = 0;
  bool all_references = false;
  std::string out = "stars";
};

PathFitter make_fitter(Method method, TaxonId reference, const TaxonList& candidates, const FitConfig& cfg) {
  if (method == Method::inv_glasso)
    return [=](const CountMatrix& x, const std::vector<double>& l) {
      return empirical_glasso_path(x, reference, candidates, l, cfg);
    };
  return [=](const CountMatrix& x, const std::vector<double>& l) {
    return fit_path(x, reference, candidates, l, cfg).path;
  };
}

std::string format_instability(const std::vector<std::pair<std::string, StarsResult>>& runs) {
  std::string s = "reference,lambda_index,lambda,instability,monotone_instability,selected\n";
  for (const auto& [ref, r] : runs)
    for (std::size_t l = 0; l < r.lambdas.size(); ++l)
      s += ref + "," + std::to_string(l + 1) + "," + detail::format_double(r.lambdas[l]) + "," +
           detail::format_double(r.instability[l]) + "," + detail::format_double(r.monotone_instability[l]) + "," +
           (l == r.index ? "1" : "0") + "\n";
  return s;
}

int cmd_stars(StarsOptions o) {
  const Method method = parse_method(o.method);
  if (o.stars_size > 0) o.stars.subsample_size = o.stars_size;
  const PreparedCounts p = prepare_counts(o.input, o.restrict_file, o.min_reads, o.reference, o.candidates);
  FitConfig cfg;
  const auto lambdas = resolve_lambdas(o.lambda_list, o.lambda_count, o.lambda_ratio,
                                       empirical_lambda_max(p.x, p.candidates, cfg));
  // one set of subsamples for every reference in this run
  const auto subsamples = draw_subsamples(p.x.samples(), o.stars);
  const TaxonList refs = o.all_references ? p.candidates : TaxonList{p.reference};
  const TaxonList layout = canonical_layout(p.x.num_taxa(), p.candidates, p.reference);
  const auto block = leading_indices(static_cast<Index>(layout.size() - (p.candidates.size() - 1)));

  std::vector<std::pair<std::string, StarsResult>> runs;
  json picks = json::object();
  bool any_warning = false;
  for (TaxonId ref : refs) {
    StarsResult r = stars_select(make_fitter(method, ref, p.candidates, cfg), p.x, lambdas, block, o.stars, &subsamples);
    picks[p.x.taxon_ids[ref]] = {{"lambda_star", r.lambda_star}, {"index", r.index + 1}, {"warning", r.warning}};
    any_warning = any_warning || r.warning;
    runs.emplace_back(p.x.taxon_ids[ref], std::move(r));
  }
  bool same = true;
  for (const auto& r : runs) same = same && r.second.index == runs.front().second.index;

  const fs::path out(o.out);
  detail::write_atomic(out / "instability.csv", format_instability(runs));
  json m = new_manifest("stars");
  m["method"] = o.method;
  m["input"] = o.input;
  m["input_hash"] = config_hash(json(detail::slurp(o.input)));
  m["min_reads"] = o.min_reads;
  m["reference"] = p.x.taxon_ids[p.reference];
  std::vector<std::string> cand_ids;
  for (TaxonId t : p.candidates) cand_ids.push_back(p.x.taxon_ids[t]);
  m["candidates"] = cand_ids;
  m["lambdas"] = lambdas_json(lambdas);
  m["stars"] = {{"subsample_count", o.stars.subsample_count},
                {"subsample_size", stars_subsample_size(o.stars, p.x.samples())},
                {"beta", o.stars.beta},
                {"seed", o.stars.seed},
                {"shared_subsamples", true}};
  m["lambda_star"] = picks;
  m["same_selection"] = same;
  m["config"] = to_json(cfg);
  m["config_hash"] = config_hash(m["config"]);
  write_manifest(out / "manifest.json", m);
  for (const auto& [ref, r] : runs)
    std::cout << "reference " << ref << ": lambda_star = " << detail::format_double(r.lambda_star) << " (index "
              << r.index + 1 << " of " << r.lambdas.size() << ")" << (r.warning ? " [warning: nothing stable]" : "")
              << "\n";
  if (any_warning) std::cerr << "warning: instability exceeds beta along the whole path\n";
  return 0;
}

// ---------------------------------------------------------------------------
// reproduce

struct ReproduceOptions {
  std::string preset;
  std::uint64_t seed = 1;
  int workers = 1;
  bool strict = false;
  int replicates = 10;
  std::size_t lambda_count = 30;
  std::string out = "report";
};

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::string format_checks(const std::vector<Check>& checks) {
  std::string s;
  for (const auto& c : checks) s += std::string(c.pass ? "PASS" : "FAIL") + "  " + c.name + "  (" + c.detail + ")\n";
  return s;
}

std::string roc_csv(const ScenarioOutcome& o) {
  std::string s = "method,reference,lambda_index,fpr,tpr\n";
  for (Method m : {Method::inv_glasso, Method::inv_comp_glasso})
    for (int r = 0; r < 2; ++r) {
      const auto pts = o.mean_roc(m, r);
      for (std::size_t l = 0; l < pts.size(); ++l)
        s += to_string(m) + "," + (r == 0 ? "true" : "false") + "," + std::to_string(l + 1) + "," +
             detail::format_double(pts[l].fpr) + "," + detail::format_optional(pts[l].tpr) + "\n";
    }
  return s;
}

std::vector<MetricsRecord> all_records(const ScenarioOutcome& o, Method m) {
  std::vector<MetricsRecord> rows;
  for (const auto& r : o.replicates)
    rows.insert(rows.end(), r.comparison[static_cast<std::size_t>(m)].begin(),
                r.comparison[static_cast<std::size_t>(m)].end());
  return rows;
}

int reproduce_grid(const ReproduceOptions& o) {
  ExperimentSettings s;
  s.master_seed = o.seed;
  s.replicates = o.replicates;
  s.lambda_count = o.lambda_count;
  s.workers = o.workers;
  const fs::path out(o.out);

  std::string table =
      "scenario                              method           ref-NMS(median)  min-NMS   min-Hamming  AUC(true)  "
      "AUC(false)  descent-violations  unconverged\n";
  std::vector<ScenarioOutcome> outcomes;
  for (const auto& cell : full_grid()) {
    std::cerr << "scenario " << cell.label() << "\n";
    ScenarioOutcome oc = run_scenario(cell, s);
    const fs::path dir = out / cell.label();
    for (Method m : {Method::inv_glasso, Method::inv_comp_glasso}) {
      detail::write_atomic(dir / ("metrics_" + to_string(m) + ".csv"), format_metrics(all_records(oc, m)));
      detail::write_atomic(dir / ("aggregate_" + to_string(m) + ".csv"), format_aggregate(oc.aggregate_for(m)));
      int unconverged = 0;
      for (const auto& r : oc.replicates) unconverged += m == Method::inv_glasso ? r.glasso_unconverged : r.comp_unconverged;
      char line[512];
      std::snprintf(line, sizeof line, "%-37s %-16s %-16s %-9s %-12s %-10s %-11s %-19d %d\n", cell.label().c_str(),
                    to_string(m).c_str(), fixed(median_nms(oc, m)).c_str(), fixed(min_nms(oc, m)).c_str(),
                    fixed(min_hamming(oc, m)).c_str(), fixed(roc_auc(oc.mean_roc(m, 0))).c_str(),
                    fixed(roc_auc(oc.mean_roc(m, 1))).c_str(),
                    m == Method::inv_comp_glasso ? oc.descent_violations() : 0, unconverged);
      table += line;
    }
    detail::write_atomic(dir / "roc.csv", roc_csv(oc));
    outcomes.push_back(std::move(oc));
  }

  std::vector<Check> checks;
  {
    double lo_nms = 1.0, lo_ham = 1.0;
    for (const auto& oc : outcomes) {
      lo_nms = std::min(lo_nms, min_nms(oc, Method::inv_glasso));
      lo_ham = std::min(lo_ham, min_hamming(oc, Method::inv_glasso));
    }
    checks.push_back({"inv-glasso reference invariance: NMS >= 0.999 and Hamming = 1 at every lambda",
                      lo_nms >= 0.999 && lo_ham == 1.0, "min NMS " + fixed(lo_nms, 9) + ", min Hamming " + fixed(lo_ham, 9)});
  }
  {
    bool ok = true, ok_hl = true;
    std::string worst, hl;
    double worst_v = 2.0;
    for (const auto& oc : outcomes) {
      const double med = median_nms(oc, Method::inv_comp_glasso);
      if (med < worst_v) worst_v = med, worst = oc.cell.label();
      ok = ok && med >= 0.9;
      if (oc.cell.depth == DepthRegime::high && oc.cell.variation == Variation::low) {
        ok_hl = ok_hl && med >= 0.98;
        hl += (hl.empty() ? "" : ", ") + fixed(med);
      }
    }
    checks.push_back({"inv-comp-glasso invariance: median per-lambda NMS >= 0.9 in every scenario", ok,
                      "lowest " + fixed(worst_v) + " in " + worst});
    checks.push_back({"inv-comp-glasso invariance, high depth / low variation: median NMS >= 0.98", ok_hl, hl});
  }
  {
    const auto it = std::find_if(outcomes.begin(), outcomes.end(), [](const ScenarioOutcome& oc) {
      return oc.cell.kind == NetworkKind::chain && oc.cell.depth == DepthRegime::low && oc.cell.variation == Variation::high;
    });
    const double g = std::max(roc_auc(it->mean_roc(Method::inv_glasso, 0)), roc_auc(it->mean_roc(Method::inv_glasso, 1)));
    const double c = std::min(roc_auc(it->mean_roc(Method::inv_comp_glasso, 0)), roc_auc(it->mean_roc(Method::inv_comp_glasso, 1)));
    const double gap = roc_gap(*it, Method::inv_glasso);
    checks.push_back({"ROC dominance on chain, low depth / high variation: AUC(comp) >= AUC(glasso)", c >= g,
                      "comp " + fixed(c) + " vs glasso " + fixed(g)});
    checks.push_back({"inv-glasso ROC curves coincide across references within 1e-6", gap <= 1e-6,
                      "largest gap " + detail::format_double(gap)});
  }
  {
    int v = 0;
    for (const auto& oc : outcomes) v += oc.descent_violations();
    checks.push_back({"block coordinate descent never increases the objective", v == 0, std::to_string(v) + " violations"});
  }

  std::string summary = "preset sim-grid-desk, seed " + std::to_string(o.seed) + ", n = " + std::to_string(s.n) +
                        ", K = " + std::to_string(s.K) + ", " + std::to_string(s.replicates) + " replicates, " +
                        std::to_string(s.lambda_count) + " lambda values\n\n" + table + "\n" + format_checks(checks);
  detail::write_atomic(out / "summary.txt", summary);
  json m = new_manifest("reproduce");
  m["preset"] = "sim-grid-desk";
  m["seed"] = o.seed;
  m["settings"] = {{"n", s.n}, {"k", s.K}, {"replicates", s.replicates}, {"lambdas", s.lambda_count},
                   {"lambda_ratio", s.lambda_ratio}};
  m["config"] = to_json(s.fit);
  m["config_hash"] = config_hash(m["config"]);
  write_manifest(out / "manifest.json", m);
  std::cout << summary;
  const bool all = std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  return o.strict && !all ? 3 : 0;
}

/// Simulated stand-in for the ocean plankton data: a hub network, a few
/// dominant taxa, and some shallow samples for the depth filter to remove.
int reproduce_tara(const ReproduceOptions& o) {
  const Index dim = 30;
  ScenarioSpec spec;
  spec.network = {NetworkKind::hub, dim, mix_seed(o.seed, 2000)};
  spec.depth = DepthRegime::low;
  spec.variation = Variation::low;
  spec.n = 150;
  spec.replicate_seed = mix_seed(o.seed, 2001);
  Vector mu = Vector::Zero(dim);
  mu(4) = 2.5;
  mu(11) = 2.0;
  mu(19) = 1.5;
  spec.mu = mu;
  SimulatedData d = simulate_dataset(spec);

  ScenarioSpec shallow = spec;
  shallow.n = 8;
  shallow.depth_range = std::pair{40.0, 90.0};
  shallow.replicate_seed = mix_seed(o.seed, 2002);
  const SimulatedData low = simulate_dataset(shallow);

  OtuTable t = table_from_counts(d.counts);
  const OtuTable tl = table_from_counts(low.counts);
  const Index n0 = t.counts.rows();
  t.counts.conservativeResize(n0 + tl.counts.rows(), Eigen::NoChange);
  t.counts.bottomRows(tl.counts.rows()) = tl.counts;
  for (Index i = 0; i < tl.counts.rows(); ++i) t.sample_ids.push_back("shallow_" + std::to_string(i + 1));

  const fs::path out(o.out);
  write_table(out / "data" / "counts.tsv", t);
  const OtuTable kept = filter_low_depth(t, 100);
  const ReferenceRanking rank = rank_candidate_references(kept, {}, 2);
  const CountMatrix x = counts_from_table(kept);
  TaxonList cands;
  for (const auto& id : rank.taxa) cands.push_back(resolve_taxon(x.taxon_ids, id));
  std::sort(cands.begin(), cands.end());
  const TaxonId ref_a = resolve_taxon(x.taxon_ids, rank.taxa[0]);
  const TaxonId ref_b = resolve_taxon(x.taxon_ids, rank.taxa[1]);
  const FitConfig cfg;
  const auto lambdas = log_spaced_lambdas(empirical_lambda_max(x, cands, cfg), o.lambda_count, 0.01);
  const auto block = leading_indices(static_cast<Index>(x.num_taxa() - 2));

  StarsConfig sc;
  sc.seed = mix_seed(o.seed, 2003);
  sc.workers = o.workers;
  const auto subsamples = draw_subsamples(x.samples(), sc);

  std::vector<Check> checks;
  std::string table = "method           reference  median-NMS  lambda_star\n";
  json picks = json::object();
  for (Method m : {Method::inv_glasso, Method::inv_comp_glasso}) {
    std::array<RegularizationPath, 2> paths;
    std::array<StarsResult, 2> sel;
    const std::array<TaxonId, 2> refs{ref_a, ref_b};
    for (std::size_t r = 0; r < 2; ++r) {
      const PathFitter fitter = make_fitter(m, refs[r], cands, cfg);
      paths[r] = fitter(x, lambdas);
      sel[r] = stars_select(fitter, x, lambdas, block, sc, &subsamples);
      write_path(out / to_string(m) / ("path_" + x.taxon_ids[refs[r]] + ".tsv"), paths[r]);
    }
    const auto rows = compare_paths(paths[0], paths[1], block);
    detail::write_atomic(out / to_string(m) / "metrics.csv", format_metrics(rows));
    detail::write_atomic(out / to_string(m) / "instability.csv",
                         format_instability({{x.taxon_ids[ref_a], sel[0]}, {x.taxon_ids[ref_b], sel[1]}}));
    std::vector<double> nms_curve;
    for (const auto& r : rows)
      if (r.nms) nms_curve.push_back(*r.nms);
    const double med = median(nms_curve);
    for (std::size_t r = 0; r < 2; ++r) {
      char line[256];
      std::snprintf(line, sizeof line, "%-16s %-10s %-11s %s\n", to_string(m).c_str(), x.taxon_ids[refs[r]].c_str(),
                    fixed(med).c_str(), detail::format_double(sel[r].lambda_star).c_str());
      table += line;
      picks[to_string(m)][x.taxon_ids[refs[r]]] = sel[r].lambda_star;
    }
    checks.push_back({to_string(m) + ": StARS selects the same lambda under both references",
                      sel[0].index == sel[1].index,
                      "indices " + std::to_string(sel[0].index + 1) + " and " + std::to_string(sel[1].index + 1)});
    if (m == Method::inv_glasso)
      checks.push_back({"inv-glasso: NMS >= 0.999 between references at every lambda",
                        std::all_of(rows.begin(), rows.end(), [](const MetricsRecord& r) { return !r.nms || *r.nms >= 0.999; }),
                        "median " + fixed(med)});
    else
      checks.push_back({"inv-comp-glasso: median NMS between references >= 0.9", med >= 0.9, "median " + fixed(med)});
  }

  std::string summary = "preset tara-like, seed " + std::to_string(o.seed) + ": " + std::to_string(x.samples()) +
                        " samples kept of " + std::to_string(t.sample_ids.size()) + ", " +
                        std::to_string(x.num_taxa()) + " taxa, references " + rank.taxa[0] + " and " + rank.taxa[1] +
                        " (largest mean relative abundance)\n\n" + table + "\n" + format_checks(checks);
  detail::write_atomic(out / "summary.txt", summary);
  json m = new_manifest("reproduce");
  m["preset"] = "tara-like";
  m["seed"] = o.seed;
  m["references"] = rank.taxa;
  m["lambdas"] = lambdas_json(lambdas);
  m["stars"] = {{"subsample_count", sc.subsample_count},
                {"subsample_size", stars_subsample_size(sc, x.samples())},
                {"beta", sc.beta},
                {"seed", sc.seed},
                {"shared_subsamples", true}};
  m["lambda_star"] = picks;
  m["config"] = to_json(cfg);
  m["config_hash"] = config_hash(m["config"]);
  write_manifest(out / "manifest.json", m);
  std::cout << summary;
  const bool all = std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  return o.strict && !all ? 3 : 0;
}

int cmd_reproduce(const ReproduceOptions& o) {
  if (o.replicates < 1) throw UsageError("--replicates must be at least 1");
  if (o.lambda_count < 2) throw UsageError("--lambdas must be at least 2");
  if (o.preset == "sim-grid-desk") return reproduce_grid(o);
  if (o.preset == "tara-like") return reproduce_tara(o);
  throw UsageError("unknown preset " + o.preset);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reference-invariant graphical lasso for compositional counts"};
  app.require_subcommand(1);

  SimulateOptions so;
  auto* sim = app.add_subcommand("simulate", "simulate a count table and its true network");
  sim->add_option("--network", so.network, "chain, random or hub")->check(CLI::IsMember({"chain", "random", "hub"}));
  sim->add_option("--depth", so.depth, "sequencing depth regime")->check(CLI::IsMember({"low", "high"}));
  sim->add_option("--variation", so.variation, "compositional variation")->check(CLI::IsMember({"low", "high"}));
  sim->add_option("--n", so.n, "samples");
  sim->add_option("--k", so.k, "invariant dimension K (K + 2 taxa)");
  sim->add_option("--seed", so.seed);
  sim->add_option("--out", so.out, "output directory");

  FitOptions fo;
  auto* fit = app.add_subcommand("fit", "fit a regularization path");
  fit->add_option("--method", fo.method)->check(CLI::IsMember({"inv-glasso", "inv-comp-glasso"}));
  fit->add_option("--input", fo.input, "count table (.tsv or .csv)");
  fit->add_option("--z-input", fo.z_input, "exact ALR matrix (inv-glasso only)");
  fit->add_option("--reference", fo.reference, "reference taxon id or 1-based column (default: last)");
  fit->add_option("--candidates", fo.candidates, "comma-separated candidate references");
  fit->add_option("--restrict", fo.restrict_file, "file listing taxa to keep, one per line");
  fit->add_option("--lambdas", fo.lambda_count, "number of log-spaced lambda values");
  fit->add_option("--lambda-ratio", fo.lambda_ratio, "smallest lambda as a fraction of lambda_max");
  fit->add_option("--lambda-list", fo.lambda_list, "explicit comma-separated decreasing lambdas");
  fit->add_option("--min-reads", fo.min_reads, "drop samples with fewer reads")->check(CLI::NonNegativeNumber);
  fit->add_option("--invariant-dim", fo.invariant_dim, "with --z-input: size of the leading invariant block");
  fit->add_option("--workers", fo.workers, "threads for the latent update")->check(CLI::PositiveNumber);
  fit->add_option("--replay", fo.replay, "rerun the fit recorded in a manifest");
  fit->add_option("--out", fo.out, "output directory");

  MetricsOptions mo;
  auto* met = app.add_subcommand("metrics", "compare two paths, or a path with the truth");
  met->add_option("--a", mo.a, "path file")->required();
  met->add_option("--b", mo.b, "second path file");
  met->add_option("--truth", mo.truth, "true precision matrix");
  met->add_option("--invariant-dim", mo.invariant_dim, "size of the leading invariant block (default: dim - 1)");
  met->add_option("--out", mo.out, "output CSV");

  StarsOptions st;
  auto* sel = app.add_subcommand("stars", "choose lambda by stability selection");
  sel->add_option("--method", st.method)->check(CLI::IsMember({"inv-glasso", "inv-comp-glasso"}));
  sel->add_option("--input", st.input, "count table")->required();
  sel->add_option("--reference", st.reference);
  sel->add_option("--candidates", st.candidates);
  sel->add_option("--restrict", st.restrict_file);
  sel->add_option("--min-reads", st.min_reads)->check(CLI::NonNegativeNumber);
  sel->add_option("--lambdas", st.lambda_count);
  sel->add_option("--lambda-ratio", st.lambda_ratio);
  sel->add_option("--lambda-list", st.lambda_list);
  sel->add_option("--stars-subsamples", st.stars.subsample_count, "number of subsamples");
  sel->add_option("--stars-size", st.stars_size, "subsample size (default floor(10 sqrt(n)))");
  sel->add_option("--stars-beta", st.stars.beta, "instability threshold");
  sel->add_option("--stars-seed", st.stars.seed);
  sel->add_option("--stars-workers", st.stars.workers)->check(CLI::PositiveNumber);
  sel->add_flag("--stars-all-references", st.all_references,
                "repeat the selection with every candidate as reference, on the same subsamples");
  sel->add_option("--out", st.out, "output directory");

  ReproduceOptions ro;
  auto* rep = app.add_subcommand("reproduce", "run a desk-scale experiment preset");
  rep->add_option("preset", ro.preset)->required()->check(CLI::IsMember({"sim-grid-desk", "tara-like"}));
  rep->add_option("--seed", ro.seed);
  rep->add_option("--workers", ro.workers)->check(CLI::PositiveNumber);
  rep->add_flag("--strict", ro.strict, "exit nonzero if any acceptance check fails");
  rep->add_option("--replicates", ro.replicates);
  rep->add_option("--lambdas", ro.lambda_count);
  rep->add_option("--out", ro.out, "report directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(so);
    if (*fit) return cmd_fit(fo);
    if (*met) return cmd_metrics(mo);
    if (*sel) return cmd_stars(st);
    if (*rep) return cmd_reproduce(ro);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
