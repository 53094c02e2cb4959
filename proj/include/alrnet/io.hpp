#pragma once

// Count tables, preprocessing and on-disk formats.
//
//   OTU table   header "sample_id<sep>taxon..." then one row per sample,
//               nonnegative integer counts, tab or comma separated.
//   matrix      dense TSV, 17 significant digits, no header.
//   edges       "a<TAB>b" per line, 1-based, a < b, sorted.
//   path        "#alrnet-path<TAB>version=1<TAB>dim=D<TAB>count=L", then per
//               lambda a line "@<TAB>lambda<TAB>converged<TAB>iterations<TAB>objective"
//               followed by D matrix rows.
//   metrics     CSV: replicate,lambda,nms,jaccard,hamming,tpr,fpr (NA = absent)
//   manifest    JSON object with "schema": "alrnet-manifest", "version": 1.

#include "alrnet/compglasso.hpp"
#include "alrnet/evaluate.hpp"
#include "alrnet/glasso.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string_view>
#include <system_error>

namespace alrnet {

struct OtuTable {
  std::vector<std::string> taxon_ids;
  std::vector<std::string> sample_ids;
  CountArray counts;  ///< samples x taxa
};

enum class TableFormat { tsv, csv };

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError(where + ": not a number: '" + std::string(s) + "'");
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

/// Writes through a temporary file and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string slurp(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

inline OtuTable parse_table(std::istream& in, TableFormat format) {
  const char sep = format == TableFormat::tsv ? '\t' : ',';
  OtuTable t;
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen_samples;
  std::vector<std::vector<std::int64_t>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view lv = detail::trim_cr(line);
    if (lv.empty()) continue;
    const auto cells = detail::split(lv, sep);
    if (t.taxon_ids.empty()) {
      if (cells.size() < 2) throw ParseError("line 1: header needs a sample column and at least one taxon");
      std::set<std::string> seen;
      for (std::size_t c = 1; c < cells.size(); ++c) {
        std::string id(cells[c]);
        if (!seen.insert(id).second) throw ParseError("line " + std::to_string(line_no) + ": duplicate taxon id '" + id + "'");
        t.taxon_ids.push_back(std::move(id));
      }
      continue;
    }
    const std::string where = "line " + std::to_string(line_no);
    if (cells.size() != t.taxon_ids.size() + 1)
      throw ParseError(where + ": expected " + std::to_string(t.taxon_ids.size() + 1) + " fields, found " +
                       std::to_string(cells.size()));
    std::string sample(cells[0]);
    if (!seen_samples.insert(sample).second) throw ParseError(where + ": duplicate sample id '" + sample + "'");
    std::vector<std::int64_t> row;
    row.reserve(t.taxon_ids.size());
    for (std::size_t c = 1; c < cells.size(); ++c) {
      std::int64_t v = 0;
      const auto sv = cells[c];
      const auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), v);
      const std::string cell = where + ", column '" + t.taxon_ids[c - 1] + "'";
      if (ec != std::errc() || ptr != sv.data() + sv.size() || sv.empty())
        throw ParseError(cell + ": not an integer count: '" + std::string(sv) + "'");
      if (v < 0) throw ParseError(cell + ": negative count " + std::to_string(v));
      row.push_back(v);
    }
    t.sample_ids.push_back(std::move(sample));
    rows.push_back(std::move(row));
  }
  if (t.taxon_ids.empty()) throw ParseError("empty table");
  t.counts.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.taxon_ids.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) t.counts(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return t;
}

inline TableFormat format_for(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? TableFormat::csv : TableFormat::tsv;
}

inline OtuTable read_table(const std::filesystem::path& path, std::optional<TableFormat> format = {}) {
  auto in = detail::open_in(path);
  return parse_table(in, format.value_or(format_for(path)));
}

inline std::string format_table(const OtuTable& t, TableFormat format = TableFormat::tsv) {
  const char sep = format == TableFormat::tsv ? '\t' : ',';
  std::ostringstream out;
  out << "sample_id";
  for (const auto& id : t.taxon_ids) out << sep << id;
  out << '\n';
  for (Index r = 0; r < t.counts.rows(); ++r) {
    out << t.sample_ids[static_cast<std::size_t>(r)];
    for (Index c = 0; c < t.counts.cols(); ++c) out << sep << t.counts(r, c);
    out << '\n';
  }
  return out.str();
}

inline void write_table(const std::filesystem::path& path, const OtuTable& t,
                        std::optional<TableFormat> format = {}) {
  detail::write_atomic(path, format_table(t, format.value_or(format_for(path))));
}

inline OtuTable table_from_counts(const CountMatrix& x) {
  OtuTable t;
  t.taxon_ids = x.taxon_ids;
  if (t.taxon_ids.empty())
    for (std::size_t k = 0; k < x.num_taxa(); ++k) t.taxon_ids.push_back("taxon_" + std::to_string(k + 1));
  for (Index i = 0; i < x.samples(); ++i) t.sample_ids.push_back("sample_" + std::to_string(i + 1));
  t.counts = x.counts;
  return t;
}

inline CountMatrix counts_from_table(const OtuTable& t) { return CountMatrix{t.counts, t.taxon_ids}; }

/// Keeps samples whose total count is at least `min_reads`.
inline OtuTable filter_low_depth(const OtuTable& t, std::int64_t min_reads = 100) {
  if (min_reads < 0) throw DomainError("min_reads must be nonnegative");
  std::vector<Index> keep;
  for (Index r = 0; r < t.counts.rows(); ++r)
    if (t.counts.row(r).sum() >= min_reads) keep.push_back(r);
  if (keep.empty()) throw EmptyDataError("every sample is below the read threshold");
  OtuTable out;
  out.taxon_ids = t.taxon_ids;
  out.counts.resize(static_cast<Index>(keep.size()), t.counts.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.sample_ids.push_back(t.sample_ids[static_cast<std::size_t>(keep[i])]);
    out.counts.row(static_cast<Index>(i)) = t.counts.row(keep[i]);
  }
  return out;
}

/// Keeps the named taxa, in the given order.
inline OtuTable restrict_taxa(const OtuTable& t, const std::vector<std::string>& ids) {
  OtuTable out;
  out.sample_ids = t.sample_ids;
  out.taxon_ids = ids;
  out.counts.resize(t.counts.rows(), static_cast<Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto it = std::find(t.taxon_ids.begin(), t.taxon_ids.end(), ids[k]);
    if (it == t.taxon_ids.end()) throw DomainError("unknown taxon '" + ids[k] + "'");
    out.counts.col(static_cast<Index>(k)) = t.counts.col(static_cast<Index>(it - t.taxon_ids.begin()));
  }
  return out;
}

struct ReferenceRanking {
  std::vector<std::string> taxa;
  std::vector<double> mean_relative_abundance;
  /// Fewer than top_m eligible taxa were available.
  bool short_list = false;
};

/// Taxa by decreasing mean relative abundance x_ik / M_i, excluding `exclude`;
/// ties go to the lexicographically smaller id. Zero-depth samples are skipped.
inline ReferenceRanking rank_candidate_references(const OtuTable& t, const std::set<std::string>& exclude,
                                                  std::size_t top_m) {
  if (top_m < 1) throw DomainError("top_m must be at least 1");
  std::vector<double> avg(t.taxon_ids.size(), 0.0);
  std::size_t used = 0;
  for (Index r = 0; r < t.counts.rows(); ++r) {
    const auto depth = t.counts.row(r).sum();
    if (depth <= 0) continue;
    ++used;
    for (Index c = 0; c < t.counts.cols(); ++c)
      avg[static_cast<std::size_t>(c)] += static_cast<double>(t.counts(r, c)) / static_cast<double>(depth);
  }
  if (used) for (double& a : avg) a /= static_cast<double>(used);
  std::vector<std::size_t> eligible;
  for (std::size_t k = 0; k < t.taxon_ids.size(); ++k)
    if (!exclude.count(t.taxon_ids[k])) eligible.push_back(k);
  std::sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
    if (avg[a] != avg[b]) return avg[a] > avg[b];
    return t.taxon_ids[a] < t.taxon_ids[b];
  });
  ReferenceRanking out;
  out.short_list = eligible.size() < top_m;
  for (std::size_t i = 0; i < std::min(top_m, eligible.size()); ++i) {
    out.taxa.push_back(t.taxon_ids[eligible[i]]);
    out.mean_relative_abundance.push_back(avg[eligible[i]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// matrices, edges, paths

inline std::string format_matrix(const Matrix& m) {
  std::string out;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) out += '\t';
      out += detail::format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

inline Matrix parse_matrix(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto lv = detail::trim_cr(line);
    if (lv.empty()) continue;
    std::vector<double> row;
    for (auto cell : detail::split(lv, '\t')) row.push_back(detail::parse_double(cell, "line " + std::to_string(line_no)));
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError("line " + std::to_string(line_no) + ": ragged matrix row");
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return m;
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  detail::write_atomic(path, format_matrix(m));
}

inline Matrix read_matrix(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return parse_matrix(in);
}

inline std::string format_edges(const EdgeSet& e) {
  std::ostringstream out;
  out << "#nodes\t" << e.node_count << '\n';
  for (const auto& [a, b] : e.edges) out << a + 1 << '\t' << b + 1 << '\n';
  return out.str();
}

inline EdgeSet parse_edges(std::istream& in) {
  EdgeSet e;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    const auto lv = detail::trim_cr(line);
    if (lv.empty()) continue;
    const auto cells = detail::split(lv, '\t');
    if (cells.size() != 2) throw ParseError("edge line needs two fields");
    if (cells[0] == "#nodes") {
      e.node_count = static_cast<Index>(detail::parse_double(cells[1], "edge header"));
      header = true;
      continue;
    }
    if (!header) throw ParseError("edge file lacks its #nodes header");
    e.add(static_cast<Index>(detail::parse_double(cells[0], "edge")) - 1,
          static_cast<Index>(detail::parse_double(cells[1], "edge")) - 1);
  }
  return e;
}

inline void write_edges(const std::filesystem::path& path, const EdgeSet& e) {
  detail::write_atomic(path, format_edges(e));
}

inline EdgeSet read_edges(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return parse_edges(in);
}

inline std::string format_path(const RegularizationPath& path) {
  const Index dim = path.estimates.empty() ? 0 : path.estimates.front().omega.rows();
  std::string out = "#alrnet-path\tversion=1\tdim=" + std::to_string(dim) +
                    "\tcount=" + std::to_string(path.estimates.size()) + "\n";
  for (std::size_t l = 0; l < path.estimates.size(); ++l) {
    const auto& e = path.estimates[l];
    out += "@\t" + detail::format_double(path.lambdas[l]) + '\t' + (e.converged ? "1" : "0") + '\t' +
           std::to_string(e.iterations) + '\t' + detail::format_double(e.objective) + '\n';
    out += format_matrix(e.omega);
  }
  return out;
}

inline RegularizationPath parse_path(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty path file");
  const auto head = detail::split(detail::trim_cr(line), '\t');
  if (head.size() != 4 || head[0] != "#alrnet-path") throw SchemaError("not an alrnet path file");
  if (head[1] != "version=1") throw SchemaError("unsupported path file " + std::string(head[1]));
  auto field = [&](std::string_view cell, std::string_view key) {
    if (cell.substr(0, key.size()) != key) throw SchemaError("malformed path header");
    return static_cast<std::size_t>(detail::parse_double(cell.substr(key.size()), "path header"));
  };
  const std::size_t dim = field(head[2], "dim=");
  const std::size_t count = field(head[3], "count=");
  RegularizationPath path;
  for (std::size_t l = 0; l < count; ++l) {
    if (!std::getline(in, line)) throw ParseError("path file truncated");
    const auto cells = detail::split(detail::trim_cr(line), '\t');
    if (cells.size() != 5 || cells[0] != "@") throw ParseError("expected a lambda record");
    PrecisionEstimate e;
    e.lambda = detail::parse_double(cells[1], "lambda");
    e.converged = cells[2] == "1";
    e.iterations = static_cast<int>(detail::parse_double(cells[3], "iterations"));
    e.objective = detail::parse_double(cells[4], "objective");
    e.omega.resize(static_cast<Index>(dim), static_cast<Index>(dim));
    for (std::size_t r = 0; r < dim; ++r) {
      if (!std::getline(in, line)) throw ParseError("path file truncated");
      const auto row = detail::split(detail::trim_cr(line), '\t');
      if (row.size() != dim) throw ParseError("path matrix row has the wrong width");
      for (std::size_t c = 0; c < dim; ++c)
        e.omega(static_cast<Index>(r), static_cast<Index>(c)) = detail::parse_double(row[c], "path entry");
    }
    path.lambdas.push_back(e.lambda);
    path.estimates.push_back(std::move(e));
  }
  return path;
}

inline void write_path(const std::filesystem::path& file, const RegularizationPath& path) {
  detail::write_atomic(file, format_path(path));
}

inline RegularizationPath read_path(const std::filesystem::path& file) {
  auto in = detail::open_in(file);
  return parse_path(in);
}

// ---------------------------------------------------------------------------
// metrics

inline constexpr std::string_view kMetricsHeader = "replicate,lambda,nms,jaccard,hamming,tpr,fpr";

inline std::string format_metrics(const std::vector<MetricsRecord>& rows) {
  std::string out(kMetricsHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.replicate) + ',' + detail::format_double(r.lambda) + ',' + detail::format_optional(r.nms) +
           ',' + detail::format_optional(r.jaccard) + ',' + detail::format_optional(r.hamming) + ',' +
           detail::format_optional(r.tpr) + ',' + detail::format_optional(r.fpr) + '\n';
  }
  return out;
}

inline std::vector<MetricsRecord> parse_metrics(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim_cr(line) != kMetricsHeader) throw SchemaError("unexpected metrics header");
  auto opt = [](std::string_view s) -> std::optional<double> {
    if (s == "NA") return std::nullopt;
    return detail::parse_double(s, "metrics");
  };
  std::vector<MetricsRecord> rows;
  while (std::getline(in, line)) {
    const auto lv = detail::trim_cr(line);
    if (lv.empty()) continue;
    const auto c = detail::split(lv, ',');
    if (c.size() != 7) throw ParseError("metrics row needs 7 fields");
    rows.push_back({static_cast<int>(detail::parse_double(c[0], "replicate")), detail::parse_double(c[1], "lambda"),
                    opt(c[2]), opt(c[3]), opt(c[4]), opt(c[5]), opt(c[6])});
  }
  return rows;
}

inline std::string format_aggregate(const std::vector<AggregateRecord>& rows) {
  std::string out =
      "lambda_index,lambda_mean,nms_mean,nms_se,jaccard_mean,jaccard_se,jaccard_n,hamming_mean,hamming_se,"
      "tpr_mean,tpr_se,fpr_mean,fpr_se\n";
  auto cell = [](const Summary& s) {
    return s.count ? detail::format_double(s.mean) + ',' + detail::format_double(s.se) : std::string("NA,NA");
  };
  for (const auto& r : rows) {
    out += std::to_string(r.lambda_index + 1) + ',' + detail::format_double(r.lambda_mean) + ',' + cell(r.nms) + ',' +
           cell(r.jaccard) + ',' + std::to_string(r.jaccard.count) + ',' + cell(r.hamming) + ',' + cell(r.tpr) +
           ',' + cell(r.fpr) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// manifests

inline constexpr int kManifestVersion = 1;

inline nlohmann::json new_manifest(const std::string& command) {
  return {{"schema", "alrnet-manifest"}, {"version", kManifestVersion}, {"command", command}};
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const nlohmann::json& j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

inline void write_manifest(const std::filesystem::path& path, const nlohmann::json& manifest) {
  detail::write_atomic(path, manifest.dump(2) + "\n");
}

inline nlohmann::json read_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::slurp(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  if (!j.is_object() || j.value("schema", "") != "alrnet-manifest") throw SchemaError("not an alrnet manifest");
  if (j.value("version", -1) != kManifestVersion)
    throw SchemaError("manifest version " + std::to_string(j.value("version", -1)) + " is not supported (expected " +
                      std::to_string(kManifestVersion) + ")");
  return j;
}

inline nlohmann::json to_json(const FitConfig& c) {
  return {{"glasso",
           {{"max_outer_iters", c.glasso.max_outer_iters},
            {"convergence_tol", c.glasso.convergence_tol},
            {"inner_lasso_tol", c.glasso.inner_lasso_tol},
            {"kkt_tol", c.glasso.kkt_tol},
            {"ridge_fallback", c.glasso.ridge_fallback ? nlohmann::json(*c.glasso.ridge_fallback) : nlohmann::json()}}},
          {"newton", {{"grad_tol", c.newton.grad_tol}, {"max_iters", c.newton.max_iters}, {"max_halvings", c.newton.max_halvings}}},
          {"max_outer_iters", c.max_outer_iters},
          {"objective_rel_tol", c.objective_rel_tol},
          {"omega_rel_tol", c.omega_rel_tol},
          {"pseudocount", c.pseudocount}};
}

inline FitConfig fit_config_from_json(const nlohmann::json& j) {
  FitConfig c;
  const auto& g = j.at("glasso");
  c.glasso.max_outer_iters = g.at("max_outer_iters");
  c.glasso.convergence_tol = g.at("convergence_tol");
  c.glasso.inner_lasso_tol = g.at("inner_lasso_tol");
  c.glasso.kkt_tol = g.at("kkt_tol");
  if (!g.at("ridge_fallback").is_null()) c.glasso.ridge_fallback = g.at("ridge_fallback").get<double>();
  const auto& n = j.at("newton");
  c.newton.grad_tol = n.at("grad_tol");
  c.newton.max_iters = n.at("max_iters");
  c.newton.max_halvings = n.at("max_halvings");
  c.max_outer_iters = j.at("max_outer_iters");
  c.objective_rel_tol = j.at("objective_rel_tol");
  c.omega_rel_tol = j.at("omega_rel_tol");
  c.pseudocount = j.at("pseudocount");
  return c;
}

}  // namespace alrnet
