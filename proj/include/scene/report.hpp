#pragma once

// Report rendering. Columns: Human Agreement,
// Infidelity, Validity_soft, C_soft, Average Time. The best value per column
// is flagged; values are compared after rounding to the printed 6 decimals.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "scene/error.hpp"
#include "scene/pipeline.hpp"
#include "scene/types.hpp"

namespace scene {

enum class ReportFormat { table_text, csv, json };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "table-text") return ReportFormat::table_text;
  if (s == "csv") return ReportFormat::csv;
  if (s == "json" || s == "structured") return ReportFormat::json;
  throw ConfigError("unknown report format '" + std::string(s) + "'");
}

struct ReportColumn {
  const char* key;
  const char* title;
  bool higher_is_better;
  std::optional<double> ReportRow::*value;
};

inline const std::array<ReportColumn, 5>& report_columns() {
  static const std::array<ReportColumn, 5> cols{{
      {"human_agreement", "Human Agreement (up)", true, &ReportRow::map},
      {"infidelity", "Infidelity (down)", false, &ReportRow::infidelity},
      {"validity_soft", "Validity_soft (up)", true, &ReportRow::validity_soft},
      {"c_soft", "C_soft (up)", true, &ReportRow::c_soft},
      {"average_time", "Average Time (down)", false, &ReportRow::average_time},
  }};
  return cols;
}

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

inline double round6(double v) { return std::round(v * 1e6) / 1e6; }

// best[row][column]
inline std::vector<std::array<bool, 5>> best_flags(const std::vector<ReportRow>& rows) {
  std::vector<std::array<bool, 5>> flags(rows.size(), std::array<bool, 5>{});
  const auto& cols = report_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    std::optional<double> best;
    for (const auto& r : rows) {
      const auto& v = r.*(cols[c].value);
      if (!v) continue;
      const double x = round6(*v);
      if (!best || (cols[c].higher_is_better ? x > *best : x < *best)) best = x;
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& v = rows[i].*(cols[c].value);
      flags[i][c] = best && v && round6(*v) == *best;
    }
  }
  return flags;
}

inline std::string render_table_text(const EvaluationReport& report) {
  const auto& cols = report_columns();
  const auto flags = best_flags(report.rows);
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"Method"};
  for (const auto& c : cols) header.push_back(c.title);
  cells.push_back(header);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    std::vector<std::string> line{report.rows[i].label()};
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto& v = report.rows[i].*(cols[c].value);
      line.push_back(v ? fixed6(*v) + (flags[i][c] ? " *" : "  ") : "-  ");
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());

  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c == 0) {
        out << line[c] << std::string(width[c] - line[c].size(), ' ');
      } else {
        out << "  " << std::string(width[c] - line[c].size(), ' ') << line[c];
      }
    }
    out << '\n';
  };
  emit(cells[0]);
  std::size_t total = 0;
  for (auto w : width) total += w + 2;
  out << std::string(total - 2, '-') << '\n';
  for (std::size_t i = 1; i < cells.size(); ++i) emit(cells[i]);
  out << "* best in column\n\n";

  out << "Spearman correlation with Human Agreement\n";
  for (const auto& c : report.correlations) {
    out << "  " << c.metric << std::string(c.metric.size() < 14 ? 14 - c.metric.size() : 1, ' ');
    if (c.rho) {
      out << fixed6(*c.rho) << "  (" << c.rows << " rows)";
    } else {
      out << "-  (" << c.note << ")";
    }
    out << '\n';
  }

  std::size_t failures = 0, notes = 0;
  for (const auto& d : report.diagnostics) (d.failure ? failures : notes)++;
  out << "\nDiagnostics: " << failures << " failures, " << notes << " notes\n";
  return out.str();
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
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
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace detail

// Two sections separated by a blank line: metric rows, then correlations.
inline std::string render_csv(const EvaluationReport& report) {
  const auto& cols = report_columns();
  const auto flags = best_flags(report.rows);
  std::ostringstream out;
  out << "method,aggregation";
  for (const auto& c : cols) out << ',' << c.key;
  out << ",best\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    out << detail::csv_field(r.method) << ',' << to_string(r.aggregation);
    std::string best;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto& v = r.*(cols[c].value);
      out << ',' << (v ? fixed6(*v) : "");
      if (flags[i][c]) best += (best.empty() ? "" : ";") + std::string(cols[c].key);
    }
    out << ',' << best << '\n';
  }
  out << "\nmetric,spearman_rho,rows,note\n";
  for (const auto& c : report.correlations)
    out << c.metric << ',' << (c.rho ? fixed6(*c.rho) : "") << ',' << c.rows << ',' << detail::csv_field(c.note)
        << '\n';
  return out.str();
}

struct CsvReport {
  std::vector<ReportRow> rows;
  std::vector<Correlation> correlations;
};

inline CsvReport parse_report_csv(const std::string& text) {
  CsvReport out;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("method,aggregation", 0) != 0) throw ParseError(1, "missing csv header");
  std::size_t lineno = 1;
  auto number = [&](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    try {
      return std::stod(s);
    } catch (const std::exception&) {
      throw ParseError(lineno, "bad number '" + s + "'");
    }
  };
  bool correlations = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      correlations = true;
      if (!std::getline(in, line)) break;
      ++lineno;
      continue;
    }
    const auto f = detail::split_csv_line(line);
    if (!correlations) {
      if (f.size() != 8) throw ParseError(lineno, "expected 8 fields");
      ReportRow r;
      r.method = f[0];
      r.aggregation = parse_aggregation(f[1]);
      for (std::size_t c = 0; c < report_columns().size(); ++c) r.*(report_columns()[c].value) = number(f[2 + c]);
      out.rows.push_back(std::move(r));
    } else {
      if (f.size() != 4) throw ParseError(lineno, "expected 4 fields");
      out.correlations.push_back({f[0], number(f[1]), static_cast<std::size_t>(std::stoul(f[2])), f[3]});
    }
  }
  return out;
}

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson opt(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

inline std::optional<double> opt_back(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline ojson count_json(const MetricCount& c) { return {{"in", c.in}, {"used", c.used}, {"skipped", c.skipped}}; }

inline MetricCount count_back(const nlohmann::json& j) {
  return {j.at("in").get<std::size_t>(), j.at("used").get<std::size_t>(), j.at("skipped").get<std::size_t>()};
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const EvaluationReport& report) {
  using detail::ojson;
  ojson j;
  const auto& r = report.run;
  j["run"] = {{"top_v", r.top_v},
              {"k", r.k},
              {"candidate_pool", r.candidate_pool},
              {"seed", r.seed},
              {"noise_sigma", r.noise_sigma},
              {"noise_samples", r.noise_samples},
              {"rank_by_abs", r.rank_by_abs},
              {"infidelity_on_logit", r.infidelity_on_logit},
              {"backend", r.backend}};
  const auto flags = best_flags(report.rows);
  auto& rows = j["rows"] = ojson::array();
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& row = report.rows[i];
    ojson best = ojson::array();
    for (std::size_t c = 0; c < report_columns().size(); ++c)
      if (flags[i][c]) best.push_back(report_columns()[c].key);
    rows.push_back({{"method", row.method},
                    {"aggregation", to_string(row.aggregation)},
                    {"label", row.label()},
                    {"human_agreement", detail::opt(row.map)},
                    {"infidelity", detail::opt(row.infidelity)},
                    {"validity_soft", detail::opt(row.validity_soft)},
                    {"c_soft", detail::opt(row.c_soft)},
                    {"average_time", detail::opt(row.average_time)},
                    {"best", best},
                    {"counts",
                     {{"human_agreement", detail::count_json(row.map_count)},
                      {"infidelity", detail::count_json(row.infidelity_count)},
                      {"validity_soft", detail::count_json(row.validity_count)},
                      {"c_soft", detail::count_json(row.c_soft_count)}}}});
  }
  auto& corr = j["correlations"] = ojson::array();
  for (const auto& c : report.correlations)
    corr.push_back({{"metric", c.metric}, {"spearman_rho", detail::opt(c.rho)}, {"rows", c.rows}, {"note", c.note}});
  auto& diags = j["diagnostics"] = ojson::array();
  for (const auto& d : report.diagnostics)
    diags.push_back({{"instance_id", d.instance_id},
                     {"method", d.method},
                     {"aggregation", d.aggregation},
                     {"stage", d.stage},
                     {"message", d.message},
                     {"failure", d.failure}});
  return j;
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
  EvaluationReport report;
  try {
    const auto& r = j.at("run");
    report.run = {r.at("top_v").get<std::size_t>(),        r.at("k").get<std::size_t>(),
                  r.at("candidate_pool").get<std::size_t>(), r.at("seed").get<std::uint64_t>(),
                  r.at("noise_sigma").get<double>(),         r.at("noise_samples").get<std::size_t>(),
                  r.at("rank_by_abs").get<bool>(),           r.at("infidelity_on_logit").get<bool>(),
                  r.at("backend").get<std::string>()};
    for (const auto& row : j.at("rows")) {
      ReportRow out;
      out.method = row.at("method").get<std::string>();
      out.aggregation = parse_aggregation(row.at("aggregation").get<std::string>());
      out.map = detail::opt_back(row.at("human_agreement"));
      out.infidelity = detail::opt_back(row.at("infidelity"));
      out.validity_soft = detail::opt_back(row.at("validity_soft"));
      out.c_soft = detail::opt_back(row.at("c_soft"));
      out.average_time = detail::opt_back(row.at("average_time"));
      const auto& counts = row.at("counts");
      out.map_count = detail::count_back(counts.at("human_agreement"));
      out.infidelity_count = detail::count_back(counts.at("infidelity"));
      out.validity_count = detail::count_back(counts.at("validity_soft"));
      out.c_soft_count = detail::count_back(counts.at("c_soft"));
      report.rows.push_back(std::move(out));
    }
    for (const auto& c : j.at("correlations"))
      report.correlations.push_back({c.at("metric").get<std::string>(), detail::opt_back(c.at("spearman_rho")),
                                     c.at("rows").get<std::size_t>(), c.at("note").get<std::string>()});
    for (const auto& d : j.at("diagnostics"))
      report.diagnostics.push_back({d.at("instance_id").get<std::string>(), d.at("method").get<std::string>(),
                                    d.at("aggregation").get<std::string>(), d.at("stage").get<std::string>(),
                                    d.at("message").get<std::string>(), d.at("failure").get<bool>()});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("malformed report: ") + e.what());
  } catch (const ValidationError& e) {
    throw ParseError(0, std::string("malformed report: ") + e.what());
  }
  return report;
}

inline std::string render_report(const EvaluationReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::table_text: return render_table_text(report);
    case ReportFormat::csv: return render_csv(report);
    case ReportFormat::json: return report_to_json(report).dump(2) + "\n";
  }
  return {};
}

inline constexpr const char* kReportJson = "report.json";
inline constexpr const char* kReportCsv = "report.csv";
inline constexpr const char* kReportText = "report.txt";
inline constexpr const char* kCounterfactualsFile = "counterfactuals.jsonl";

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("write failed for " + path.string());
}

// Writes every artifact of a run; identical runs give identical bytes.
inline void write_run_dir(const std::filesystem::path& dir, const RunResult& run) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
  write_text_file(dir / kReportJson, render_report(run.report, ReportFormat::json));
  write_text_file(dir / kReportCsv, render_report(run.report, ReportFormat::csv));
  write_text_file(dir / kReportText, render_report(run.report, ReportFormat::table_text));
  export_counterfactuals(run.counterfactuals, dir / kCounterfactualsFile);
}

inline EvaluationReport read_run_dir(const std::filesystem::path& dir) {
  std::ifstream in(dir / kReportJson);
  if (!in) throw ConfigError("no " + std::string(kReportJson) + " in " + dir.string());
  try {
    return report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, std::string("malformed report: ") + e.what());
  }
}

}  // namespace scene
