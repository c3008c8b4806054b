#pragma once
/// Scenario files: a flat TOML-style subset (sections, scalar and array
/// values, '#' comments) resolved into a live model. Everything a run needs
/// is pinned here: grid, schema, density, base configuration family, probe
/// generators, window and slice, dressing, gamma choice, seed and tolerance
/// overrides. Construction validates every cross reference up front.
///
/// Subset grammar, one entry per line:
///   [section]
///   key = "string" | number | true | false | [v, v, ...]

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "covphase/dfm.hpp"

namespace covphase {

// ---------------------------------------------------------------------------
// Config document
// ---------------------------------------------------------------------------

struct ConfigValue {
  enum Kind { str, number, boolean, list };
  Kind kind = number;
  std::string s;
  double num = 0;
  bool flag = false;
  std::vector<ConfigValue> items;
  int line = 0;
};

/// Parsed key/value document with section and insertion order preserved;
/// schema entries and generators are order-sensitive.
class ConfigDoc {
 public:
  using Entries = std::vector<std::pair<std::string, ConfigValue>>;

  static ConfigDoc parse(const std::string& text, std::string origin = "config") {
    ConfigDoc doc;
    doc.origin_ = std::move(origin);
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    Entries* current = nullptr;
    while (std::getline(in, raw)) {
      ++lineno;
      std::string line = strip_comment(raw, lineno);
      size_t a = line.find_first_not_of(" \t\r");
      if (a == std::string::npos) continue;
      size_t b = line.find_last_not_of(" \t\r");
      line = line.substr(a, b - a + 1);
      if (line.front() == '[') {
        if (line.back() != ']') throw parse_error("unterminated section header", lineno, 1);
        std::string name = line.substr(1, line.size() - 2);
        if (name.empty() || !is_key(name)) throw parse_error("bad section name", lineno, 2);
        doc.sections_.emplace_back(name, Entries{});
        current = &doc.sections_.back().second;
        continue;
      }
      size_t eq = line.find('=');
      if (eq == std::string::npos) throw parse_error("expected 'key = value'", lineno, int(a) + 1);
      std::string key = trim(line.substr(0, eq));
      if (key.empty() || !is_key(key)) throw parse_error("bad key '" + key + "'", lineno, 1);
      if (!current) throw parse_error("entry before any [section]", lineno, 1);
      for (const auto& kv : *current)
        if (kv.first == key) throw parse_error("duplicate key '" + key + "'", lineno, 1);
      current->emplace_back(key, parse_value(trim(line.substr(eq + 1)), lineno));
    }
    return doc;
  }

  bool has(const std::string& section) const { return find_section(section) != nullptr; }

  bool has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
  }

  const ConfigValue* find(const std::string& section, const std::string& key) const {
    const Entries* e = find_section(section);
    if (!e) return nullptr;
    for (const auto& kv : *e)
      if (kv.first == key) return &kv.second;
    return nullptr;
  }

  const Entries& section(const std::string& name) const {
    const Entries* e = find_section(name);
    if (!e) throw config_error(origin_ + ": missing [" + name + "] section");
    return *e;
  }

  std::string get_str(const std::string& sec, const std::string& key,
                      const char* fallback = nullptr) const {
    const ConfigValue* v = find(sec, key);
    if (!v) {
      if (fallback) return fallback;
      throw config_error(where(sec, key) + " is required");
    }
    if (v->kind != ConfigValue::str) throw config_error(where(sec, key) + " must be a string");
    return v->s;
  }

  double get_num(const std::string& sec, const std::string& key, const double* fallback = nullptr) const {
    const ConfigValue* v = find(sec, key);
    if (!v) {
      if (fallback) return *fallback;
      throw config_error(where(sec, key) + " is required");
    }
    if (v->kind != ConfigValue::number) throw config_error(where(sec, key) + " must be a number");
    return v->num;
  }

  int get_int(const std::string& sec, const std::string& key, const int* fallback = nullptr) const {
    double d = fallback ? double(*fallback) : 0;
    double v = get_num(sec, key, fallback ? &d : nullptr);
    if (v != int(v)) throw config_error(where(sec, key) + " must be an integer");
    return int(v);
  }

  std::vector<double> get_nums(const std::string& sec, const std::string& key) const {
    const ConfigValue* v = find(sec, key);
    if (!v) throw config_error(where(sec, key) + " is required");
    std::vector<double> out;
    if (v->kind == ConfigValue::number) {
      out.push_back(v->num);
      return out;
    }
    if (v->kind != ConfigValue::list) throw config_error(where(sec, key) + " must be numbers");
    for (const auto& it : v->items) {
      if (it.kind != ConfigValue::number) throw config_error(where(sec, key) + " must be numbers");
      out.push_back(it.num);
    }
    return out;
  }

  std::vector<std::string> get_strs(const std::string& sec, const std::string& key) const {
    const ConfigValue* v = find(sec, key);
    if (!v) throw config_error(where(sec, key) + " is required");
    std::vector<std::string> out;
    if (v->kind == ConfigValue::str) {
      out.push_back(v->s);
      return out;
    }
    if (v->kind != ConfigValue::list) throw config_error(where(sec, key) + " must be strings");
    for (const auto& it : v->items) {
      if (it.kind != ConfigValue::str) throw config_error(where(sec, key) + " must be strings");
      out.push_back(it.s);
    }
    return out;
  }

  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
  std::vector<std::pair<std::string, Entries>> sections_;

  const Entries* find_section(const std::string& name) const {
    for (const auto& s : sections_)
      if (s.first == name) return &s.second;
    return nullptr;
  }

  std::string where(const std::string& sec, const std::string& key) const {
    return origin_ + ": [" + sec + "] " + key;
  }

  static bool is_key(const std::string& s) {
    for (char c : s)
      if (!std::isalnum(unsigned(c)) && c != '_' && c != '-' && c != '.') return false;
    return true;
  }

  static std::string trim(std::string s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  // '#' starts a comment except inside a quoted string
  static std::string strip_comment(const std::string& line, int lineno) {
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    if (quoted) throw parse_error("unterminated string", lineno, int(line.size()));
    return line;
  }

  static ConfigValue parse_scalar(const std::string& tok, int lineno) {
    ConfigValue v;
    v.line = lineno;
    if (tok.empty()) throw parse_error("empty value", lineno, 1);
    if (tok.front() == '"') {
      if (tok.size() < 2 || tok.back() != '"')
        throw parse_error("unterminated string", lineno, 1);
      v.kind = ConfigValue::str;
      v.s = tok.substr(1, tok.size() - 2);
      return v;
    }
    if (tok == "true" || tok == "false") {
      v.kind = ConfigValue::boolean;
      v.flag = tok == "true";
      return v;
    }
    try {
      size_t used = 0;
      v.num = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw parse_error("malformed value '" + tok + "'", lineno, 1);
    }
    v.kind = ConfigValue::number;
    return v;
  }

  static ConfigValue parse_value(const std::string& tok, int lineno) {
    if (tok.empty()) throw parse_error("missing value", lineno, 1);
    if (tok.front() != '[') return parse_scalar(tok, lineno);
    if (tok.back() != ']') throw parse_error("unterminated array", lineno, 1);
    ConfigValue v;
    v.kind = ConfigValue::list;
    v.line = lineno;
    std::string body = tok.substr(1, tok.size() - 2);
    size_t pos = 0;
    bool quoted = false;
    size_t start = 0;
    auto flush = [&](size_t end) {
      std::string piece = trim(body.substr(start, end - start));
      if (!piece.empty()) v.items.push_back(parse_scalar(piece, lineno));
    };
    for (; pos < body.size(); ++pos) {
      if (body[pos] == '"') quoted = !quoted;
      if (body[pos] == ',' && !quoted) {
        flush(pos);
        start = pos + 1;
      }
    }
    flush(body.size());
    return v;
  }
};

// ---------------------------------------------------------------------------
// Coordinate expressions
// ---------------------------------------------------------------------------

namespace coord {

/// Parse an expression in the coordinates x (and y on a torus) with the same
/// grammar as the density language, minus field symbols and derivatives.
inline dsl::ExprPtr parse(const std::string& src, int dim) {
  struct Lex {
    std::string_view s;
    size_t i = 0;
    int col() const { return int(i) + 1; }
    void skip() {
      while (i < s.size() && std::isspace(unsigned(s[i]))) ++i;
    }
    char peek() {
      skip();
      return i < s.size() ? s[i] : '\0';
    }
  } lex{src};

  struct P {
    Lex& lx;
    int dim;

    dsl::ExprPtr expr() {
      auto e = term();
      for (char c = lx.peek(); c == '+' || c == '-'; c = lx.peek()) {
        ++lx.i;
        auto r = term();
        e = c == '+' ? dsl::make_add(e, r) : dsl::make_sub(e, r);
      }
      return e;
    }

    dsl::ExprPtr term() {
      auto e = factor();
      for (char c = lx.peek(); c == '*' || c == '/'; c = lx.peek()) {
        ++lx.i;
        auto r = factor();
        e = c == '*' ? dsl::make_mul(e, r) : dsl::make_div(e, r);
      }
      return e;
    }

    dsl::ExprPtr factor() {
      auto e = base();
      if (lx.peek() == '^') {
        ++lx.i;
        lx.skip();
        size_t j = lx.i;
        bool neg = j < lx.s.size() && lx.s[j] == '-';
        if (neg) ++j;
        size_t k = j;
        while (k < lx.s.size() && std::isdigit(unsigned(lx.s[k]))) ++k;
        if (k == j || neg) throw parse_error("exponent must be a positive integer", 1, lx.col());
        int n = std::stoi(std::string(lx.s.substr(j, k - j)));
        lx.i = k;
        e = dsl::make_pow(e, n);
      }
      return e;
    }

    dsl::ExprPtr base() {
      char c = lx.peek();
      if (c == '(') {
        ++lx.i;
        auto e = expr();
        if (lx.peek() != ')') throw parse_error("expected ')'", 1, lx.col());
        ++lx.i;
        return e;
      }
      if (std::isdigit(unsigned(c)) || c == '.') {
        size_t j = lx.i;
        while (j < lx.s.size() && (std::isdigit(unsigned(lx.s[j])) || lx.s[j] == '.' ||
                                   lx.s[j] == 'e' || lx.s[j] == 'E' ||
                                   ((lx.s[j] == '+' || lx.s[j] == '-') && j > lx.i &&
                                    (lx.s[j - 1] == 'e' || lx.s[j - 1] == 'E'))))
          ++j;
        double v;
        try {
          size_t used = 0;
          v = std::stod(std::string(lx.s.substr(lx.i, j - lx.i)), &used);
          if (used != j - lx.i) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
          throw parse_error("malformed number", 1, lx.col());
        }
        lx.i = j;
        return dsl::make_num(v);
      }
      if (std::isalpha(unsigned(c))) {
        size_t j = lx.i;
        while (j < lx.s.size() && std::isalnum(unsigned(lx.s[j]))) ++j;
        std::string name(lx.s.substr(lx.i, j - lx.i));
        lx.i = j;
        if (name == "x") return dsl::make_slot(0);
        if (name == "y") {
          if (dim < 2) throw parse_error("coordinate 'y' needs a torus", 1, lx.col());
          return dsl::make_slot(1);
        }
        int f = name == "sin"   ? dsl::fun_sin
                : name == "cos" ? dsl::fun_cos
                : name == "exp" ? dsl::fun_exp
                : name == "log" ? dsl::fun_log
                                : -1;
        if (f < 0) throw parse_error("unknown symbol '" + name + "'", 1, lx.col());
        if (lx.peek() != '(') throw parse_error("expected '(' after " + name, 1, lx.col());
        ++lx.i;
        auto e = expr();
        if (lx.peek() != ')') throw parse_error("expected ')'", 1, lx.col());
        ++lx.i;
        return dsl::make_fun(f, e);
      }
      throw parse_error("expected a value", 1, lx.col());
    }
  } p{lex, dim};

  auto e = p.expr();
  if (lex.peek() != '\0') throw parse_error("trailing input", 1, lex.col());
  return e;
}

inline GridFunction sample_expr(const PeriodicGrid& g, const std::string& src) {
  auto e = parse(src, g.dim());
  GridFunction out(g);
  for (int i = 0; i < g.size(0); ++i)
    for (int j = 0; j < g.size(1); ++j) {
      double pt[2] = {g.node(0, i), g.dim() == 2 ? g.node(1, j) : 0.0};
      out.v[g.index(i, j)] = dsl::eval_point(*e, pt);
    }
  return out;
}

}  // namespace coord

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

struct GeneratorSpec {
  std::string name;
  std::vector<std::string> comps;  // one coordinate expression per axis
};

struct Scenario {
  std::string name = "inline";

  int dim = 1, nx = 64, ny = 1;
  std::vector<Schema::Entry> entries;

  std::string density;
  std::vector<std::string> ell;

  std::string init = "random";  // random | constant | zero
  double amplitude = 0.4;
  int kmax = 2;
  std::vector<std::pair<std::string, std::vector<double>>> values;  // constants / offsets
  std::string onshell_family = "none";  // none | bf-flux | pscalar-const

  std::vector<GeneratorSpec> generators;

  std::string region_kind = "whole";
  double region_a = 0, region_b = 0;
  std::string slice_kind;  // defaults to point / circle at pi/2
  double slice_c = 0, slice_a = 0, slice_b = 0;

  std::string dressing_kind = "none";  // none | clock
  std::vector<std::string> clocks;     // empty: every clock slot

  GammaChoice gamma = GammaChoice::zero;
  std::uint64_t seed = 1;
  int draws = 3;
  std::map<std::string, double> tolerances;

  static Scenario from_text(const std::string& text, const std::string& name = "inline");
  static Scenario load(const std::string& path);
};

inline FieldKind parse_field_kind(const std::string& label, const std::string& where) {
  if (label == "scalar") return FieldKind::form_kind(0);
  if (label == "one-form") return FieldKind::form_kind(1);
  if (label == "clock:x") return FieldKind::clock_kind(0);
  if (label == "clock:y") return FieldKind::clock_kind(1);
  throw config_error(where + ": unknown field kind '" + label +
                     "' (use scalar, one-form, clock:x, clock:y)");
}

inline Scenario Scenario::from_text(const std::string& text, const std::string& name) {
  ConfigDoc doc = ConfigDoc::parse(text, name);
  Scenario sc;
  sc.name = name;

  sc.dim = doc.get_int("grid", "dim");
  if (sc.dim != 1 && sc.dim != 2) throw config_error(name + ": [grid] dim must be 1 or 2");
  sc.nx = doc.get_int("grid", "nx");
  if (sc.dim == 2) sc.ny = doc.get_int("grid", "ny");
  if (sc.nx < 4 || (sc.dim == 2 && sc.ny < 4))
    throw config_error(name + ": grid needs at least 4 nodes per axis");

  for (const auto& kv : doc.section("schema")) {
    if (kv.second.kind != ConfigValue::str)
      throw config_error(name + ": [schema] " + kv.first + " must name a field kind");
    sc.entries.push_back({kv.first, parse_field_kind(kv.second.s, name + ": [schema] " + kv.first)});
  }

  sc.density = doc.get_str("lagrangian", "density");
  if (doc.has("lagrangian", "ell")) sc.ell = doc.get_strs("lagrangian", "ell");

  if (doc.has("fields")) {
    sc.init = doc.get_str("fields", "init", "random");
    if (sc.init != "random" && sc.init != "constant" && sc.init != "zero")
      throw config_error(name + ": [fields] init must be random, constant or zero");
    double amp_default = sc.amplitude;
    sc.amplitude = doc.get_num("fields", "amplitude", &amp_default);
    int kmax_default = sc.kmax;
    sc.kmax = doc.get_int("fields", "kmax", &kmax_default);
    sc.onshell_family = doc.get_str("fields", "onshell", "none");
    for (const auto& kv : doc.section("fields")) {
      if (kv.first == "init" || kv.first == "amplitude" || kv.first == "kmax" ||
          kv.first == "onshell")
        continue;
      sc.values.emplace_back(kv.first, doc.get_nums("fields", kv.first));
    }
  }

  if (doc.has("generators"))
    for (const auto& kv : doc.section("generators"))
      sc.generators.push_back({kv.first, doc.get_strs("generators", kv.first)});

  if (doc.has("region")) {
    sc.region_kind = doc.get_str("region", "kind");
    if (sc.region_kind != "whole") {
      sc.region_a = doc.get_num("region", "a");
      sc.region_b = doc.get_num("region", "b");
    }
  }
  if (doc.has("slice")) {
    sc.slice_kind = doc.get_str("slice", "kind");
    sc.slice_c = doc.get_num("slice", "c");
    if (sc.slice_kind == "segment") {
      sc.slice_a = doc.get_num("slice", "a");
      sc.slice_b = doc.get_num("slice", "b");
    }
  }

  if (doc.has("dressing")) {
    sc.dressing_kind = doc.get_str("dressing", "kind", "none");
    if (doc.has("dressing", "clocks")) sc.clocks = doc.get_strs("dressing", "clocks");
  }

  if (doc.has("run")) {
    if (doc.has("run", "seed")) {
      double s = doc.get_num("run", "seed");
      if (s < 0 || s != std::uint64_t(s)) throw config_error(name + ": [run] seed must be a whole number");
      sc.seed = std::uint64_t(s);
    }
    int draws_default = sc.draws;
    sc.draws = doc.get_int("run", "draws", &draws_default);
    if (sc.draws < 1) throw config_error(name + ": [run] draws must be positive");
    std::string g = doc.get_str("run", "gamma", "zero");
    if (g == "zero")
      sc.gamma = GammaChoice::zero;
    else if (g == "boundary")
      sc.gamma = GammaChoice::boundary;
    else
      throw config_error(name + ": [run] gamma must be zero or boundary");
  }

  if (doc.has("tolerances"))
    for (const auto& kv : doc.section("tolerances"))
      sc.tolerances[kv.first] = doc.get_num("tolerances", kv.first);

  return sc;
}

inline Scenario Scenario::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  size_t slash = path.find_last_of('/');
  return from_text(buf.str(), slash == std::string::npos ? path : path.substr(slash + 1));
}

// ---------------------------------------------------------------------------
// Workbench
// ---------------------------------------------------------------------------

/// Scenario resolved into live objects. The constructor builds and validates
/// everything: the schema, the density, the geometry, every generator
/// expression and the dressing and on-shell references, so later runs only
/// see numerical work.
struct Workbench {
  Scenario sc;
  SchemaPtr schema;
  std::shared_ptr<Lagrangian> lag;
  Region window = Region::whole();
  Slice sigma = Slice::at_point(0);
  std::vector<std::pair<std::string, VectorFieldM>> gens;

  explicit Workbench(Scenario s) : sc(std::move(s)) {
    PeriodicGrid g = sc.dim == 1 ? PeriodicGrid::line(sc.nx) : PeriodicGrid::torus(sc.nx, sc.ny);
    schema = std::make_shared<Schema>(g, sc.entries);
    lag = std::make_shared<Lagrangian>(schema, sc.density, sc.ell);

    if (sc.gamma == GammaChoice::boundary && sc.ell.empty())
      throw config_error(sc.name + ": gamma = boundary needs an ell boundary density");

    if (sc.region_kind == "whole")
      window = Region::whole();
    else if (sc.region_kind == "interval" && sc.dim == 1)
      window = Region::make_interval(sc.region_a, sc.region_b);
    else if (sc.region_kind == "band" && sc.dim == 2)
      window = Region::make_band(sc.region_a, sc.region_b);
    else
      throw config_error(sc.name + ": region kind '" + sc.region_kind +
                         "' does not fit a " + (sc.dim == 1 ? "circle" : "torus"));

    if (sc.slice_kind.empty()) {
      sc.slice_kind = sc.dim == 1 ? "point" : "circle";
      sc.slice_c = 1.5707963267948966;
    }
    if (sc.slice_kind == "point" && sc.dim == 1)
      sigma = Slice::at_point(sc.slice_c);
    else if (sc.slice_kind == "circle" && sc.dim == 2)
      sigma = Slice::at_circle(sc.slice_c);
    else if (sc.slice_kind == "segment" && sc.dim == 2)
      sigma = Slice::at_segment(sc.slice_c, sc.slice_a, sc.slice_b);
    else
      throw config_error(sc.name + ": slice kind '" + sc.slice_kind + "' does not fit a " +
                         (sc.dim == 1 ? "circle" : "torus"));

    for (const auto& gspec : sc.generators) {
      if (int(gspec.comps.size()) != sc.dim)
        throw config_error(sc.name + ": generator '" + gspec.name + "' needs " +
                           std::to_string(sc.dim) + " component expression(s)");
      VectorFieldM X(g);
      for (int d = 0; d < sc.dim; ++d) X.comp[d] = coord::sample_expr(g, gspec.comps[d]);
      gens.emplace_back(gspec.name, std::move(X));
    }

    for (const auto& kv : sc.values) {
      int f = schema->index(kv.first);  // throws config_error on unknown names
      const FieldKind& k = schema->fields[f].kind;
      size_t ncomp = size_t(form_component_count(g.dim(), k.is_clock() ? 0 : k.deg));
      if (kv.second.size() != ncomp)
        throw config_error(sc.name + ": [fields] " + kv.first + " needs " +
                           std::to_string(ncomp) + " value(s)");
    }

    if (sc.onshell_family == "bf-flux") {
      if (sc.dim != 2) throw config_error(sc.name + ": bf-flux solutions live on the torus");
      for (const char* n : {"B", "A", "chi1", "chi2"}) schema->index(n);
    } else if (sc.onshell_family == "pscalar-const") {
      if (sc.dim != 1) throw config_error(sc.name + ": pscalar-const solutions live on the circle");
      for (const char* n : {"phi", "eps"}) schema->index(n);
    } else if (sc.onshell_family != "none") {
      throw config_error(sc.name + ": unknown on-shell family '" + sc.onshell_family + "'");
    }

    if (sc.dressing_kind == "clock") {
      bool any = false;
      for (const auto& e : schema->fields) any = any || e.kind.is_clock();
      if (!any) throw config_error(sc.name + ": clock dressing needs clock fields in the schema");
      for (const auto& n : sc.clocks)
        if (!schema->fields[schema->index(n)].kind.is_clock())
          throw config_error(sc.name + ": dressing clock '" + n + "' is not a clock field");
    } else if (sc.dressing_kind != "none") {
      throw config_error(sc.name + ": unknown dressing kind '" + sc.dressing_kind + "'");
    }
  }

  const PeriodicGrid& grid() const { return schema->grid; }

  std::string grid_label() const {
    return sc.dim == 1 ? std::to_string(sc.nx) : std::to_string(sc.nx) + "x" + std::to_string(sc.ny);
  }

  /// Configured constants added onto a configuration (the whole content for
  /// constant and zero families, offsets for random ones).
  void apply_values(Fields& phi) const {
    for (const auto& kv : sc.values) {
      int f = schema->index(kv.first);
      for (size_t c = 0; c < kv.second.size(); ++c)
        for (auto& v : phi.comp[f].comp[c].v) v += kv.second[c];
    }
  }

  /// The scenario's base configuration; used by the charge and dressing
  /// commands and anywhere a single distinguished point is wanted.
  Fields base_config(Rng rng) const {
    Fields phi = sc.init == "random" ? random_fields(schema, rng, sc.amplitude, sc.kmax)
                                     : Fields(schema);
    apply_values(phi);
    return phi;
  }

  /// A fresh randomized configuration for identity draws, recentered on the
  /// configured constants.
  Fields random_config(Rng rng) const {
    Fields phi = random_fields(schema, rng, sc.amplitude, sc.kmax);
    apply_values(phi);
    return phi;
  }

  bool has_onshell() const { return sc.onshell_family != "none"; }

  Fields onshell_config(Rng rng) const {
    if (sc.onshell_family == "bf-flux") return models::bf_onshell(schema, rng);
    if (sc.onshell_family == "pscalar-const") return models::pscalar_onshell(schema, rng);
    throw config_error(sc.name + ": no on-shell family configured");
  }

  bool has_dressing() const { return sc.dressing_kind != "none"; }

  Dressing dressing(const Fields& phi) const {
    if (!has_dressing()) throw config_error(sc.name + ": no dressing configured");
    return clock_dressing(phi, sc.clocks);
  }

  double tol(const std::string& identity, double fallback) const {
    auto it = sc.tolerances.find(identity);
    return it == sc.tolerances.end() ? fallback : it->second;
  }
};

}  // namespace covphase
