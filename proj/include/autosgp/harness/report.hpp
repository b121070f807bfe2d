#ifndef AUTOSGP_HARNESS_REPORT_HPP
#define AUTOSGP_HARNESS_REPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "autosgp/baseline.hpp"
#include "autosgp/harness/dataset.hpp"
#include "autosgp/harness/smoothing.hpp"

namespace autosgp::harness {

inline constexpr int kSchemaVersion = 1;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One long-form report row.
struct MetricRow {
  std::string dataset;
  std::string method;
  std::string kernel;
  std::uint64_t seed = 0;
  long long m = 0;  // inducing points, or 0 when the method has no budget
  double elapsed_s = 0.0;
  std::string bound_kind;  // elbo, lml or train_loglik
  double bound_value = std::numeric_limits<double>::quiet_NaN();
  double upper_bound = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double nlpd = std::numeric_limits<double>::quiet_NaN();
  std::string note;
};

struct RunManifest {
  std::string dataset_id;
  std::string method;  // SGPR-baseline, GPR, SVGP, Linear, ConstantMean
  std::string kernel;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  std::string output_path;
};

enum class ReportFormat { Csv, Json };

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_report_double(const std::string& s) {
  if (s == "nan" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

inline std::vector<MetricRow> rows_from_checkpoints(const std::vector<CheckpointRecord>& records,
                                                    const RunManifest& manifest) {
  std::vector<MetricRow> rows;
  for (const auto& r : records) {
    MetricRow row;
    row.dataset = manifest.dataset_id;
    row.method = manifest.method;
    row.kernel = manifest.kernel;
    row.seed = manifest.seed;
    row.m = r.m;
    row.elapsed_s = r.elapsed_train_seconds;
    row.bound_kind = "elbo";
    row.bound_value = r.elbo;
    row.upper_bound = r.upper_bound;
    row.rmse = r.rmse;
    row.nlpd = r.nlpd;
    row.note = r.note;
    rows.push_back(row);
  }
  return rows;
}

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace detail

inline const std::vector<std::string>& long_form_columns() {
  static const std::vector<std::string> cols{"dataset", "method",      "kernel",      "seed", "m",    "elapsed_s",
                                             "bound_kind", "bound_value", "upper_bound", "rmse", "nlpd", "note"};
  return cols;
}

inline std::string long_form_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  const auto& cols = long_form_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  for (const auto& r : rows) {
    out << detail::csv_escape(r.dataset) << ',' << detail::csv_escape(r.method) << ',' << r.kernel << ',' << r.seed << ','
        << r.m << ',' << format_double(r.elapsed_s) << ',' << r.bound_kind << ',' << format_double(r.bound_value) << ','
        << format_double(r.upper_bound) << ',' << format_double(r.rmse) << ',' << format_double(r.nlpd) << ','
        << detail::csv_escape(r.note) << "\n";
  }
  return out.str();
}

/// Parses a long-form CSV written by long_form_csv.
inline std::vector<MetricRow> read_long_form_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  std::getline(in, line);
  std::vector<MetricRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          cur += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        f.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    f.push_back(cur);
    if (f.size() != long_form_columns().size()) throw ParseError("malformed report row", line_no);
    MetricRow r;
    r.dataset = f[0];
    r.method = f[1];
    r.kernel = f[2];
    r.seed = std::stoull(f[3]);
    r.m = std::stoll(f[4]);
    r.elapsed_s = parse_report_double(f[5]);
    r.bound_kind = f[6];
    r.bound_value = parse_report_double(f[7]);
    r.upper_bound = parse_report_double(f[8]);
    r.rmse = parse_report_double(f[9]);
    r.nlpd = parse_report_double(f[10]);
    r.note = f[11];
    rows.push_back(r);
  }
  return rows;
}

/// One pivot line: a metric for a (dataset, method, kernel) group, with the
/// seed-averaged value per scheduled M and for each run's final row.
struct PivotRow {
  std::string dataset, method, kernel, metric;
  std::map<long long, double> by_m;
  double final_value = std::numeric_limits<double>::quiet_NaN();
};

struct PivotTable {
  std::vector<long long> m_columns;
  std::vector<PivotRow> rows;
};

namespace detail {

inline double metric_of(const MetricRow& r, const std::string& metric) {
  if (metric == "elapsed_s") return r.elapsed_s;
  if (metric == "bound_value") return r.bound_value;
  if (metric == "upper_bound") return r.upper_bound;
  if (metric == "rmse") return r.rmse;
  return r.nlpd;
}

// Mean over the finite entries; NaN when there are none.
inline double finite_mean(const std::vector<double>& v) {
  double s = 0.0;
  int k = 0;
  for (const double x : v) {
    if (std::isfinite(x)) {
      s += x;
      ++k;
    }
  }
  return k ? s / k : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

inline PivotTable pivot(const std::vector<MetricRow>& rows) {
  static const std::vector<std::string> metrics{"elapsed_s", "bound_value", "upper_bound", "rmse", "nlpd"};
  using Group = std::tuple<std::string, std::string, std::string>;
  std::map<Group, std::map<std::uint64_t, std::vector<const MetricRow*>>> groups;
  std::set<long long> ms;
  for (const auto& r : rows) {
    groups[{r.dataset, r.method, r.kernel}][r.seed].push_back(&r);
    if (r.m > 0) ms.insert(r.m);
  }
  PivotTable table;
  table.m_columns.assign(ms.begin(), ms.end());
  for (const auto& [key, seeds] : groups) {
    for (const auto& metric : metrics) {
      PivotRow pr{std::get<0>(key), std::get<1>(key), std::get<2>(key), metric, {}, 0.0};
      std::map<long long, std::vector<double>> cells;
      std::vector<double> finals;
      for (const auto& [seed, run] : seeds) {
        for (const MetricRow* r : run) {
          if (r->m > 0) cells[r->m].push_back(detail::metric_of(*r, metric));
        }
        finals.push_back(detail::metric_of(*run.back(), metric));
      }
      for (const auto& [m, vals] : cells) pr.by_m[m] = detail::finite_mean(vals);
      pr.final_value = detail::finite_mean(finals);
      table.rows.push_back(std::move(pr));
    }
  }
  return table;
}

inline std::string pivot_csv(const PivotTable& t) {
  std::ostringstream out;
  out << "dataset,method,kernel,metric";
  for (const long long m : t.m_columns) out << ",M=" << m;
  out << ",final\n";
  for (const auto& r : t.rows) {
    out << detail::csv_escape(r.dataset) << ',' << detail::csv_escape(r.method) << ',' << r.kernel << ',' << r.metric;
    for (const long long m : t.m_columns) {
      out << ',';
      const auto it = r.by_m.find(m);
      if (it != r.by_m.end()) out << format_double(it->second);
    }
    out << ',' << format_double(r.final_value) << "\n";
  }
  return out.str();
}

inline nlohmann::json manifest_json(const RunManifest& m) {
  return {{"dataset", m.dataset_id}, {"method", m.method}, {"kernel", m.kernel},
          {"seed", m.seed},          {"config", m.config}, {"output_path", m.output_path}};
}

inline nlohmann::json report_json(const std::vector<MetricRow>& rows, const std::vector<RunManifest>& manifests) {
  nlohmann::json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["manifests"] = nlohmann::json::array();
  for (const auto& m : manifests) doc["manifests"].push_back(manifest_json(m));
  doc["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    doc["rows"].push_back({{"dataset", r.dataset},
                           {"method", r.method},
                           {"kernel", r.kernel},
                           {"seed", r.seed},
                           {"m", r.m},
                           {"elapsed_s", detail::number_or_null(r.elapsed_s)},
                           {"bound_kind", r.bound_kind},
                           {"bound_value", detail::number_or_null(r.bound_value)},
                           {"upper_bound", detail::number_or_null(r.upper_bound)},
                           {"rmse", detail::number_or_null(r.rmse)},
                           {"nlpd", detail::number_or_null(r.nlpd)},
                           {"note", r.note}});
  }
  const PivotTable t = pivot(rows);
  doc["pivot"] = {{"m_columns", t.m_columns}, {"rows", nlohmann::json::array()}};
  for (const auto& r : t.rows) {
    nlohmann::json cells = nlohmann::json::object();
    for (const auto& [m, v] : r.by_m) cells[std::to_string(m)] = detail::number_or_null(v);
    doc["pivot"]["rows"].push_back({{"dataset", r.dataset},
                                    {"method", r.method},
                                    {"kernel", r.kernel},
                                    {"metric", r.metric},
                                    {"by_m", cells},
                                    {"final", detail::number_or_null(r.final_value)}});
  }
  return doc;
}

/// Writes the long-form rows and the pivot table. CSV produces
/// `<stem>_long.csv` and `<stem>_pivot.csv`; JSON produces `<stem>.json` with
/// the manifests embedded. Returns the written paths.
inline std::vector<std::filesystem::path> emit_report(const std::vector<MetricRow>& rows,
                                                      const std::vector<RunManifest>& manifests, ReportFormat format,
                                                      const std::filesystem::path& out_dir,
                                                      const std::string& stem = "report") {
  if (rows.empty()) throw std::invalid_argument("emit_report: no rows to write");
  std::vector<std::filesystem::path> written;
  if (format == ReportFormat::Csv) {
    written.push_back(out_dir / (stem + "_long.csv"));
    detail::write_atomic(written.back(), long_form_csv(rows));
    written.push_back(out_dir / (stem + "_pivot.csv"));
    detail::write_atomic(written.back(), pivot_csv(pivot(rows)));
  } else {
    written.push_back(out_dir / (stem + ".json"));
    detail::write_atomic(written.back(), report_json(rows, manifests).dump(2) + "\n");
  }
  return written;
}

/// Applies smooth_metric_curve to every run (same dataset, method, kernel and
/// seed), ordered by elapsed time. The bound is smoothed as a loss (its
/// negative), with upper bound, RMSE and NLPD sharing its hold window.
inline std::vector<MetricRow> smooth_rows(const std::vector<MetricRow>& rows) {
  using Key = std::tuple<std::string, std::string, std::string, std::uint64_t>;
  std::map<Key, std::vector<std::size_t>> runs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    runs[{rows[i].dataset, rows[i].method, rows[i].kernel, rows[i].seed}].push_back(i);
  }
  std::vector<MetricRow> out = rows;
  for (auto& [key, idx] : runs) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return rows[a].elapsed_s < rows[b].elapsed_s; });
    std::vector<SeriesPoint> series;
    for (const std::size_t i : idx) {
      series.push_back({rows[i].elapsed_s, -rows[i].bound_value, rows[i].m,
                        {rows[i].upper_bound, rows[i].rmse, rows[i].nlpd}});
    }
    const auto smoothed = smooth_metric_curve(series);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      MetricRow& r = out[idx[k]];
      r.bound_value = -smoothed[k].value;
      r.upper_bound = smoothed[k].companions[0];
      r.rmse = smoothed[k].companions[1];
      r.nlpd = smoothed[k].companions[2];
    }
  }
  return out;
}

}  // namespace autosgp::harness

#endif  // AUTOSGP_HARNESS_REPORT_HPP
