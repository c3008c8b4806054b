#pragma once
/// Run records and field exports. One report row per identity evaluation;
/// JSON carries the full record, CSV a spreadsheet summary. The timestamp is
/// confined to the header block so that reruns with the same seed produce
/// byte-identical output below it.

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <string>
#include <vector>

#include <json.hpp>

#include "covphase/fieldspace.hpp"

namespace covphase {

using Json = nlohmann::ordered_json;

struct ReportRow {
  std::string suite;
  std::string identity;  // stable per-identity label, also the tolerance override key
  int draw = 0;
  double residual = 0;
  double tolerance = 0;
  bool pass = false;
};

struct RunReport {
  static constexpr int schema_version = 1;

  std::string scenario;  // config file name
  std::string model;     // density source text
  std::string grid;      // "64" or "32x32"
  std::uint64_t seed = 0;
  std::vector<ReportRow> rows;

  int failures() const {
    int n = 0;
    for (const auto& r : rows) n += !r.pass;
    return n;
  }
};

inline std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Json to_json(const RunReport& rep) {
  Json j;
  j["schema_version"] = RunReport::schema_version;
  Json& h = j["header"];
  h["generated"] = utc_timestamp();
  h["tool"] = "covphase";
  h["scenario"] = rep.scenario;
  h["model"] = rep.model;
  h["grid"] = rep.grid;
  h["seed"] = rep.seed;
  j["rows"] = Json::array();
  for (const auto& r : rep.rows) {
    Json row;
    row["suite"] = r.suite;
    row["identity"] = r.identity;
    row["draw"] = r.draw;
    row["residual"] = r.residual;
    row["tolerance"] = r.tolerance;
    row["pass"] = r.pass;
    j["rows"].push_back(std::move(row));
  }
  Json& s = j["summary"];
  s["rows"] = rep.rows.size();
  s["failures"] = rep.failures();
  return j;
}

inline RunReport report_from_json(const Json& j) {
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != RunReport::schema_version)
    throw invalid_data_error("unsupported report schema version");
  RunReport rep;
  const Json& h = j.at("header");
  rep.scenario = h.value("scenario", "");
  rep.model = h.value("model", "");
  rep.grid = h.value("grid", "");
  rep.seed = h.value("seed", std::uint64_t(0));
  for (const Json& row : j.at("rows")) {
    ReportRow r;
    r.suite = row.at("suite").get<std::string>();
    r.identity = row.at("identity").get<std::string>();
    r.draw = row.at("draw").get<int>();
    r.residual = row.at("residual").get<double>();
    r.tolerance = row.at("tolerance").get<double>();
    r.pass = row.at("pass").get<bool>();
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

inline std::string format_residual(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12e", v);
  return buf;
}

inline std::string to_csv(const RunReport& rep) {
  std::string out = "suite,identity,draw,residual,tolerance,pass\n";
  char buf[64];
  for (const auto& r : rep.rows) {
    out += r.suite + ',' + r.identity + ',';
    std::snprintf(buf, sizeof(buf), "%d,%.12e,%.3e,", r.draw, r.residual, r.tolerance);
    out += buf;
    out += r.pass ? "yes\n" : "no\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Field configuration exports
// ---------------------------------------------------------------------------

inline std::string kind_label(const FieldKind& k) {
  if (k.is_clock()) return std::string("clock:") + (k.axis == 0 ? "x" : "y");
  if (k.deg == 0) return "scalar";
  return "one-form";
}

inline FieldKind kind_from_label(const std::string& s) {
  if (s == "scalar") return FieldKind::form_kind(0);
  if (s == "one-form") return FieldKind::form_kind(1);
  if (s == "clock:x") return FieldKind::clock_kind(0);
  if (s == "clock:y") return FieldKind::clock_kind(1);
  throw config_error("unknown field kind '" + s + "'");
}

/// Serialized configuration: grid, per-field kind and raw component values,
/// plus an origin tag recording how the data were produced ("bare" for
/// untouched input, the dressing's construction tag otherwise).
inline Json fields_to_json(const Fields& phi, const std::string& origin) {
  const Schema& sc = *phi.schema;
  Json j;
  j["schema_version"] = RunReport::schema_version;
  j["origin"] = origin;
  Json& g = j["grid"];
  g["dim"] = sc.grid.dim();
  Json n = Json::array();
  for (int d = 0; d < sc.grid.dim(); ++d) n.push_back(sc.grid.size(d));
  g["n"] = std::move(n);
  j["fields"] = Json::array();
  for (int f = 0; f < sc.count(); ++f) {
    Json e;
    e["name"] = sc.fields[f].name;
    e["kind"] = kind_label(sc.fields[f].kind);
    Json comps = Json::array();
    for (const auto& c : phi.comp[f].comp) comps.push_back(c.v);
    e["components"] = std::move(comps);
    j["fields"].push_back(std::move(e));
  }
  return j;
}

inline Fields fields_from_json(const Json& j) {
  const Json& g = j.at("grid");
  int dim = g.at("dim").get<int>();
  PeriodicGrid grid = dim == 1 ? PeriodicGrid::line(g.at("n")[0].get<int>())
                               : PeriodicGrid::torus(g.at("n")[0].get<int>(), g.at("n")[1].get<int>());
  std::vector<Schema::Entry> entries;
  for (const Json& e : j.at("fields"))
    entries.push_back({e.at("name").get<std::string>(), kind_from_label(e.at("kind").get<std::string>())});
  auto schema = std::make_shared<Schema>(grid, entries);
  Fields phi(schema);
  int f = 0;
  for (const Json& e : j.at("fields")) {
    const Json& comps = e.at("components");
    if (comps.size() != phi.comp[f].comp.size())
      throw invalid_data_error("component count does not match field kind");
    for (size_t c = 0; c < comps.size(); ++c) {
      auto vals = comps[c].get<std::vector<double>>();
      if (vals.size() != phi.comp[f].comp[c].v.size())
        throw invalid_data_error("component length does not match the grid");
      phi.comp[f].comp[c].v = std::move(vals);
    }
    ++f;
  }
  return phi;
}

}  // namespace covphase
