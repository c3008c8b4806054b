#pragma once

// First-order Lagrangian densities from a small expression language.
//
// Grammar:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := base ('^' int)?
//   base   := number | symbol | func '(' expr ')' | deriv '(' symbol ')' | '(' expr ')'
//   deriv  := 'dx' | 'dy'        func := 'sin' | 'cos' | 'exp' | 'log'
//
// Symbols resolve against a schema. Scalar fields appear by name, one-form
// fields through their component suffixes (A_x, A_y), clocks only under a
// derivative operator, where the unit winding is included automatically:
// dx(chi) evaluates to 1 + dx(p) when chi winds along x.
//
// The variational structure is produced symbolically: per-slot partials of
// the density give the presymplectic potential coefficients and, after one
// spectral divergence, the field equations. Everything downstream is checked
// against forward-channel derivatives of the compiled density itself.

#include <cctype>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "covphase/fieldspace.hpp"

namespace covphase {

namespace dsl {

// ---------------------------------------------------------------------------
// expressions

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum Kind { num, slot, add, sub, mul, divide, power, fun };
  Kind kind;
  double value = 0;  // num
  int id = 0;        // slot index, function index, or integer exponent
  ExprPtr a, b;
};

inline ExprPtr make_num(double v) {
  return std::make_shared<Expr>(Expr{Expr::num, v, 0, nullptr, nullptr});
}

inline ExprPtr make_slot(int s) {
  return std::make_shared<Expr>(Expr{Expr::slot, 0, s, nullptr, nullptr});
}

inline bool is_num(const ExprPtr& e, double v) { return e->kind == Expr::num && e->value == v; }

inline ExprPtr make_add(ExprPtr a, ExprPtr b) {
  if (is_num(a, 0)) return b;
  if (is_num(b, 0)) return a;
  if (a->kind == Expr::num && b->kind == Expr::num) return make_num(a->value + b->value);
  return std::make_shared<Expr>(Expr{Expr::add, 0, 0, std::move(a), std::move(b)});
}

inline ExprPtr make_sub(ExprPtr a, ExprPtr b) {
  if (is_num(b, 0)) return a;
  // fold only when the result stays printable by the grammar (no unary minus)
  if (a->kind == Expr::num && b->kind == Expr::num && a->value >= b->value)
    return make_num(a->value - b->value);
  return std::make_shared<Expr>(Expr{Expr::sub, 0, 0, std::move(a), std::move(b)});
}

inline ExprPtr make_mul(ExprPtr a, ExprPtr b) {
  if (is_num(a, 0) || is_num(b, 0)) return make_num(0);
  if (is_num(a, 1)) return b;
  if (is_num(b, 1)) return a;
  if (a->kind == Expr::num && b->kind == Expr::num) return make_num(a->value * b->value);
  return std::make_shared<Expr>(Expr{Expr::mul, 0, 0, std::move(a), std::move(b)});
}

inline ExprPtr make_div(ExprPtr a, ExprPtr b) {
  if (is_num(a, 0)) return make_num(0);
  if (is_num(b, 1)) return a;
  if (a->kind == Expr::num && b->kind == Expr::num && b->value != 0)
    return make_num(a->value / b->value);
  return std::make_shared<Expr>(Expr{Expr::divide, 0, 0, std::move(a), std::move(b)});
}

inline ExprPtr make_pow(ExprPtr a, int n) {
  if (n == 0) return make_num(1);
  if (n == 1) return a;
  if (a->kind == Expr::num) return make_num(powi(a->value, n));
  return std::make_shared<Expr>(Expr{Expr::power, 0, n, std::move(a), nullptr});
}

enum { fun_sin, fun_cos, fun_exp, fun_log };

inline ExprPtr make_fun(int f, ExprPtr a) {
  return std::make_shared<Expr>(Expr{Expr::fun, 0, f, std::move(a), nullptr});
}

/// Partial derivative with respect to one slot, slots being independent
/// variables of the pointwise density.
inline ExprPtr derivative(const ExprPtr& e, int s) {
  switch (e->kind) {
    case Expr::num: return make_num(0);
    case Expr::slot: return make_num(e->id == s ? 1 : 0);
    case Expr::add: return make_add(derivative(e->a, s), derivative(e->b, s));
    case Expr::sub: return make_sub(derivative(e->a, s), derivative(e->b, s));
    case Expr::mul:
      return make_add(make_mul(derivative(e->a, s), e->b), make_mul(e->a, derivative(e->b, s)));
    case Expr::divide:
      return make_sub(make_div(derivative(e->a, s), e->b),
                      make_div(make_mul(e->a, derivative(e->b, s)), make_pow(e->b, 2)));
    case Expr::power:
      return make_mul(make_mul(make_num(e->id), make_pow(e->a, e->id - 1)), derivative(e->a, s));
    case Expr::fun: {
      ExprPtr inner = derivative(e->a, s);
      switch (e->id) {
        case fun_sin: return make_mul(make_fun(fun_cos, e->a), inner);
        case fun_cos: return make_mul(make_sub(make_num(0), make_fun(fun_sin, e->a)), inner);
        case fun_exp: return make_mul(make_fun(fun_exp, e->a), inner);
        default: return make_div(inner, e->a);
      }
    }
  }
  return make_num(0);
}

template <class T>
T eval_point(const Expr& e, const T* slots) {
  switch (e.kind) {
    case Expr::num: return T(e.value);
    case Expr::slot: return slots[e.id];
    case Expr::add: return eval_point(*e.a, slots) + eval_point(*e.b, slots);
    case Expr::sub: return eval_point(*e.a, slots) - eval_point(*e.b, slots);
    case Expr::mul: return eval_point(*e.a, slots) * eval_point(*e.b, slots);
    case Expr::divide: return eval_point(*e.a, slots) / eval_point(*e.b, slots);
    case Expr::power: return powi(eval_point(*e.a, slots), e.id);
    case Expr::fun: {
      using std::cos, std::exp, std::log, std::sin;
      T v = eval_point(*e.a, slots);
      switch (e.id) {
        case fun_sin: return sin(v);
        case fun_cos: return cos(v);
        case fun_exp: return exp(v);
        default: return log(v);
      }
    }
  }
  return T(0);
}

// ---------------------------------------------------------------------------
// printing

inline const char* fun_name(int f) {
  switch (f) {
    case fun_sin: return "sin";
    case fun_cos: return "cos";
    case fun_exp: return "exp";
    default: return "log";
  }
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Canonical text form; parsing the result reproduces the same tree.
inline std::string to_string(const ExprPtr& e, const std::vector<std::string>& slot_names) {
  auto prec = [](const Expr& x) {
    switch (x.kind) {
      case Expr::add:
      case Expr::sub: return 1;
      case Expr::mul:
      case Expr::divide: return 2;
      case Expr::power: return 3;
      default: return 4;
    }
  };
  std::function<std::string(const ExprPtr&, int, bool)> go =
      [&](const ExprPtr& x, int parent_prec, bool right) -> std::string {
    std::string out;
    switch (x->kind) {
      case Expr::num: out = format_number(x->value); break;
      case Expr::slot: out = slot_names[x->id]; break;
      case Expr::add: out = go(x->a, 1, false) + " + " + go(x->b, 1, true); break;
      case Expr::sub: out = go(x->a, 1, false) + " - " + go(x->b, 2, true); break;
      case Expr::mul: out = go(x->a, 2, false) + "*" + go(x->b, 2, true); break;
      case Expr::divide: out = go(x->a, 2, false) + "/" + go(x->b, 3, true); break;
      case Expr::power: out = go(x->a, 4, false) + "^" + std::to_string(x->id); break;
      case Expr::fun: out = std::string(fun_name(x->id)) + "(" + go(x->a, 0, false) + ")"; break;
    }
    int p = prec(*x);
    bool need = p < parent_prec || (p == parent_prec && right && p != 4);
    return need ? "(" + out + ")" : out;
  };
  return go(e, 0, false);
}

}  // namespace dsl

// ---------------------------------------------------------------------------
// slots
// ---------------------------------------------------------------------------

/// One pointwise argument of the density: a field component value or one of
/// its first derivatives (axis >= 0).
struct SlotInfo {
  int field = 0;
  int comp = 0;
  int axis = -1;  // -1: value slot
};

class Lagrangian {
 public:
  /// Parse a density (and optionally a boundary density: one expression on a
  /// line, (dx, dy) component pair on a plane) against a schema.
  Lagrangian(SchemaPtr schema, const std::string& density_src,
             std::vector<std::string> boundary_src = {})
      : schema_(std::move(schema)) {
    build_slots();
    density_ = parse(density_src);
    source_ = dsl::to_string(density_, slot_names_);
    int dim = schema_->grid.dim();
    if (!boundary_src.empty()) {
      if (int(boundary_src.size()) != dim)
        throw config_error("boundary density needs one expression per axis component");
      for (const auto& s : boundary_src) boundary_.push_back(parse(s));
    }
    for (int s = 0; s < int(slots_.size()); ++s) partials_.push_back(dsl::derivative(density_, s));
  }

  const SchemaPtr& schema() const { return schema_; }
  const std::string& source() const { return source_; }
  bool has_boundary_term() const { return !boundary_.empty(); }
  const std::vector<SlotInfo>& slots() const { return slots_; }
  const std::vector<std::string>& slot_names() const { return slot_names_; }

  /// Canonical text of the partial of the density with respect to a slot.
  std::string partial_text(int slot) const { return dsl::to_string(partials_[slot], slot_names_); }

  /// The same partial evaluated over the grid.
  template <class T>
  GridFunctionT<T> partial(int slot, const FieldsT<T>& phi) const {
    return eval_expr(partials_[slot], slot_table(phi));
  }

  int slot_index(int field, int comp, int axis) const {
    for (int s = 0; s < int(slots_.size()); ++s)
      if (slots_[s].field == field && slots_[s].comp == comp && slots_[s].axis == axis) return s;
    throw config_error("no such slot");
  }

  // -- evaluation ----------------------------------------------------------

  template <class T>
  GridFunctionT<T> density(const FieldsT<T>& phi) const {
    auto table = slot_table(phi);
    return eval_expr(density_, table);
  }

  /// The density as a top form.
  template <class T>
  FormFieldT<T> lagrangian_form(const FieldsT<T>& phi) const {
    FormFieldT<T> out(schema_->grid, schema_->grid.dim());
    out.comp[0] = density(phi);
    return out;
  }

  /// The boundary density as a codimension-1 form.
  template <class T>
  FormFieldT<T> boundary_form(const FieldsT<T>& phi) const {
    if (boundary_.empty()) throw config_error("no boundary density configured");
    auto table = slot_table(phi);
    FormFieldT<T> out(schema_->grid, schema_->grid.dim() - 1);
    for (size_t c = 0; c < boundary_.size(); ++c) out.comp[c] = eval_expr(boundary_[c], table);
    return out;
  }

  // -- variational structure -----------------------------------------------

  /// Presymplectic potential against a tangent: the momentum coefficients
  /// contracted into the volume form, a (dim-1)-form. On a plane the dx/dy
  /// interior products contribute (dy, -dx) respectively.
  template <class T>
  FormFieldT<T> theta(const FieldsT<T>& phi, const FieldsT<T>& xi) const {
    auto table = slot_table(phi);
    int dim = schema_->grid.dim();
    FormFieldT<T> out(schema_->grid, dim - 1);
    for (int s = 0; s < int(slots_.size()); ++s) {
      const SlotInfo& sl = slots_[s];
      if (sl.axis < 0) continue;
      GridFunctionT<T> term = eval_expr(partials_[s], table) * xi.comp[sl.field].comp[sl.comp];
      if (dim == 1) {
        out.comp[0] = out.comp[0] + term;
      } else if (sl.axis == 0) {
        out.comp[1] = out.comp[1] + term;  // dx-slot momentum carries dy
      } else {
        out.comp[0] = out.comp[0] - term;  // dy-slot momentum carries -dx
      }
    }
    return out;
  }

  /// One Euler-Lagrange coefficient: value partial minus the spectral
  /// divergence of the momentum partials.
  template <class T>
  GridFunctionT<T> eq_coefficient(const FieldsT<T>& phi, int field, int comp) const {
    auto table = slot_table(phi);
    return eq_coefficient_with(table, field, comp);
  }

  /// Field equations paired against a tangent, as a top form.
  template <class T>
  FormFieldT<T> field_eq(const FieldsT<T>& phi, const FieldsT<T>& xi) const {
    auto table = slot_table(phi);
    int dim = schema_->grid.dim();
    FormFieldT<T> out(schema_->grid, dim);
    for (int f = 0; f < schema_->count(); ++f)
      for (int c = 0; c < int(phi.comp[f].comp.size()); ++c)
        out.comp[0] =
            out.comp[0] + eq_coefficient_with(table, f, c) * xi.comp[f].comp[c];
    return out;
  }

  /// Sup norm of all Euler-Lagrange coefficients; zero on solutions.
  double eq_norm(const Fields& phi) const {
    auto table = slot_table(phi);
    double m = 0;
    for (int f = 0; f < schema_->count(); ++f)
      for (int c = 0; c < int(phi.comp[f].comp.size()); ++c)
        m = std::max(m, eq_coefficient_with(table, f, c).max_abs());
    return m;
  }

  // -- contractions against a spacetime generator ---------------------------

  /// theta with the tangent slots filled by the interior product of the
  /// configuration itself: only one-form fields contribute, and the result
  /// drops two degrees. Defined on a plane; on a line it is identically zero
  /// by degree and the caller skips it.
  template <class T>
  FormFieldT<T> theta_contraction(const FieldsT<T>& phi, const VectorFieldMT<T>& X) const {
    int dim = schema_->grid.dim();
    if (dim != 2) throw degree_error("contraction into theta needs two dimensions");
    auto table = slot_table(phi);
    FormFieldT<T> out(schema_->grid, 0);
    for (int f = 0; f < schema_->count(); ++f) {
      const FieldKind& k = schema_->fields[f].kind;
      if (k.is_clock() || k.deg != 1) continue;
      for (int nu = 0; nu < 2; ++nu) {
        GridFunctionT<T> tx = eval_expr(partials_[slot_index(f, nu, 0)], table);
        GridFunctionT<T> ty = eval_expr(partials_[slot_index(f, nu, 1)], table);
        out.comp[0] = out.comp[0] +
                      phi.comp[f].comp[nu] * (tx * X.comp[1] - ty * X.comp[0]);
      }
    }
    return out;
  }

  /// Field equations with the tangent slots filled the same way: the scalar
  /// interior product of each one-form field times its coefficient row,
  /// contracted into the volume form. A (dim-1)-form.
  template <class T>
  FormFieldT<T> eq_contraction(const FieldsT<T>& phi, const VectorFieldMT<T>& X) const {
    auto table = slot_table(phi);
    int dim = schema_->grid.dim();
    FormFieldT<T> out(schema_->grid, dim - 1);
    for (int f = 0; f < schema_->count(); ++f) {
      const FieldKind& k = schema_->fields[f].kind;
      if (k.is_clock() || k.deg != 1) continue;
      GridFunctionT<T> s = interior(X, phi.comp[f]).comp[0];
      if (dim == 1) {
        out.comp[0] = out.comp[0] + eq_coefficient_with(table, f, 0) * s;
      } else {
        out.comp[1] = out.comp[1] + eq_coefficient_with(table, f, 0) * s;  // dx row -> dy
        out.comp[0] = out.comp[0] - eq_coefficient_with(table, f, 1) * s;  // dy row -> -dx
      }
    }
    return out;
  }

  // -- audits ----------------------------------------------------------------

  /// Pointwise defect of the variational decomposition: the forward-channel
  /// derivative of the density along xi minus field equations plus boundary
  /// divergence.
  double decomposition_residual(const Fields& phi, const Fields& xi) const {
    GridFunction dL = b_channel(density(dual_lift(phi, xi)));
    GridFunction rhs = field_eq(phi, xi).comp[0] + exterior_d(theta(phi, xi)).comp[0];
    return (dL - rhs).max_abs();
  }

  /// Covariance defect: the vertical derivative of the density along the
  /// drag of phi must equal the divergence of the contracted density.
  double covariance_residual(const Fields& phi, const VectorFieldM& X) const {
    GridFunction dL = b_channel(density(dual_lift(phi, lie_drag(X, phi))));
    GridFunction rhs = exterior_d(interior(X, lagrangian_form(phi))).comp[0];
    return (dL - rhs).max_abs();
  }

 private:
  SchemaPtr schema_;
  dsl::ExprPtr density_;
  std::vector<dsl::ExprPtr> boundary_;
  std::vector<dsl::ExprPtr> partials_;
  std::vector<SlotInfo> slots_;
  std::vector<std::string> slot_names_;
  std::vector<bool> slot_allowed_;  // bare clock values are not expressible
  std::string source_;

  void build_slots() {
    int dim = schema_->grid.dim();
    static const char* axis_suffix[2] = {"_x", "_y"};
    for (int f = 0; f < schema_->count(); ++f) {
      const auto& entry = schema_->fields[f];
      for (const char* res : {"dx", "dy", "sin", "cos", "exp", "log"})
        if (entry.name == res) throw config_error("field name '" + entry.name + "' is reserved");
      const FieldKind& k = entry.kind;
      int ncomp = k.is_clock() ? 1 : form_component_count(dim, k.deg);
      bool suffixed = !k.is_clock() && k.deg == 1;
      for (int c = 0; c < ncomp; ++c) {
        std::string base = entry.name + (suffixed ? axis_suffix[c] : "");
        slots_.push_back({f, c, -1});
        slot_names_.push_back(base);
        slot_allowed_.push_back(!k.is_clock());
        for (int a = 0; a < dim; ++a) {
          slots_.push_back({f, c, a});
          slot_names_.push_back(std::string(a == 0 ? "dx" : "dy") + "(" + base + ")");
          slot_allowed_.push_back(true);
        }
      }
    }
  }

  int lookup_symbol(const std::string& name, int line, int col) const {
    for (int s = 0; s < int(slots_.size()); ++s)
      if (slots_[s].axis < 0 && slot_names_[s] == name) {
        if (!slot_allowed_[s])
          throw parse_error("clock field '" + name + "' appears only under a derivative", line,
                            col);
        return s;
      }
    // a bare one-form name gets a pointed diagnostic
    for (const auto& e : schema_->fields)
      if (e.name == name && !e.kind.is_clock() && e.kind.deg == 1)
        throw parse_error("one-form field '" + name + "' needs a component suffix", line, col);
    throw parse_error("unknown symbol '" + name + "'", line, col);
  }

  int lookup_deriv_slot(const std::string& name, int axis, int line, int col) const {
    for (int s = 0; s < int(slots_.size()); ++s)
      if (slots_[s].axis < 0 && slot_names_[s] == name) return slot_index_nothrow(s, axis);
    throw parse_error("unknown symbol '" + name + "'", line, col);
  }

  int slot_index_nothrow(int value_slot, int axis) const {
    // derivative slots immediately follow their value slot
    return value_slot + 1 + axis;
  }

  // -- parser ----------------------------------------------------------------

  struct Token {
    enum Kind { num, ident, op, end } kind;
    double value = 0;
    std::string text;
    char ch = 0;
    int line = 1, col = 1;
  };

  struct Lexer {
    std::string_view src;
    size_t pos = 0;
    int line = 1, col = 1;

    Token next() {
      while (pos < src.size() && (src[pos] == ' ' || src[pos] == '\t' || src[pos] == '\n' ||
                                  src[pos] == '\r')) {
        if (src[pos] == '\n') {
          ++line;
          col = 1;
        } else {
          ++col;
        }
        ++pos;
      }
      Token t;
      t.line = line;
      t.col = col;
      if (pos >= src.size()) {
        t.kind = Token::end;
        return t;
      }
      char c = src[pos];
      if (std::isdigit(unsigned(c)) || c == '.') {
        size_t start = pos;
        while (pos < src.size() && (std::isdigit(unsigned(src[pos])) || src[pos] == '.')) advance();
        if (pos < src.size() && (src[pos] == 'e' || src[pos] == 'E')) {
          advance();
          if (pos < src.size() && (src[pos] == '+' || src[pos] == '-')) advance();
          while (pos < src.size() && std::isdigit(unsigned(src[pos]))) advance();
        }
        t.kind = Token::num;
        t.text = std::string(src.substr(start, pos - start));
        try {
          size_t used = 0;
          t.value = std::stod(t.text, &used);
          if (used != t.text.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
          throw parse_error("malformed number '" + t.text + "'", t.line, t.col);
        }
        return t;
      }
      if (std::isalpha(unsigned(c)) || c == '_') {
        size_t start = pos;
        while (pos < src.size() &&
               (std::isalnum(unsigned(src[pos])) || src[pos] == '_'))
          advance();
        t.kind = Token::ident;
        t.text = std::string(src.substr(start, pos - start));
        return t;
      }
      if (c == '+' || c == '-' || c == '*' || c == '/' || c == '^' || c == '(' || c == ')') {
        t.kind = Token::op;
        t.ch = c;
        advance();
        return t;
      }
      throw parse_error(std::string("unexpected character '") + c + "'", t.line, t.col);
    }

    void advance() {
      ++pos;
      ++col;
    }
  };

  struct Parser {
    const Lagrangian* owner;
    Lexer lex;
    Token tok;

    void bump() { tok = lex.next(); }

    bool is_op(char c) const { return tok.kind == Token::op && tok.ch == c; }

    void expect(char c) {
      if (!is_op(c))
        throw parse_error(std::string("expected '") + c + "'", tok.line, tok.col);
      bump();
    }

    dsl::ExprPtr expr() {
      dsl::ExprPtr e = term();
      while (is_op('+') || is_op('-')) {
        char op = tok.ch;
        bump();
        dsl::ExprPtr r = term();
        e = op == '+' ? dsl::make_add(e, r) : dsl::make_sub(e, r);
      }
      return e;
    }

    dsl::ExprPtr term() {
      dsl::ExprPtr e = factor();
      while (is_op('*') || is_op('/')) {
        char op = tok.ch;
        bump();
        dsl::ExprPtr r = factor();
        e = op == '*' ? dsl::make_mul(e, r) : dsl::make_div(e, r);
      }
      return e;
    }

    dsl::ExprPtr factor() {
      dsl::ExprPtr e = base();
      if (is_op('^')) {
        bump();
        if (tok.kind != Token::num || tok.value != int(tok.value))
          throw parse_error("exponent must be an integer literal", tok.line, tok.col);
        int n = int(tok.value);
        bump();
        e = dsl::make_pow(e, n);
      }
      return e;
    }

    dsl::ExprPtr base() {
      if (tok.kind == Token::num) {
        double v = tok.value;
        bump();
        return dsl::make_num(v);
      }
      if (is_op('(')) {
        bump();
        dsl::ExprPtr e = expr();
        expect(')');
        return e;
      }
      if (tok.kind == Token::ident) {
        std::string name = tok.text;
        int line = tok.line, col = tok.col;
        bump();
        if (name == "dx" || name == "dy") {
          int axis = name == "dy" ? 1 : 0;
          if (axis >= owner->schema_->grid.dim())
            throw parse_error("dy needs a second axis", line, col);
          expect('(');
          if (tok.kind != Token::ident)
            throw parse_error("derivative operators apply to field components", tok.line, tok.col);
          if (tok.text == "dx" || tok.text == "dy")
            throw parse_error("nested derivative", tok.line, tok.col);
          std::string inner = tok.text;
          int il = tok.line, ic = tok.col;
          bump();
          expect(')');
          return dsl::make_slot(owner->lookup_deriv_slot(inner, axis, il, ic));
        }
        if (name == "sin" || name == "cos" || name == "exp" || name == "log") {
          int f = name == "sin"   ? dsl::fun_sin
                  : name == "cos" ? dsl::fun_cos
                  : name == "exp" ? dsl::fun_exp
                                  : dsl::fun_log;
          expect('(');
          dsl::ExprPtr e = expr();
          expect(')');
          return dsl::make_fun(f, e);
        }
        return dsl::make_slot(owner->lookup_symbol(name, line, col));
      }
      throw parse_error("expected a value", tok.line, tok.col);
    }
  };

  dsl::ExprPtr parse(const std::string& src) const {
    Parser p{this, Lexer{src}, {}};
    p.bump();
    dsl::ExprPtr e = p.expr();
    if (p.tok.kind != Token::end)
      throw parse_error("trailing input", p.tok.line, p.tok.col);
    return e;
  }

  // -- slot tables -------------------------------------------------------------

  template <class T>
  std::vector<GridFunctionT<T>> slot_table(const FieldsT<T>& phi) const {
    std::vector<GridFunctionT<T>> table;
    table.reserve(slots_.size());
    int dim = schema_->grid.dim();
    for (int f = 0; f < schema_->count(); ++f) {
      const FieldKind& k = schema_->fields[f].kind;
      for (int c = 0; c < int(phi.comp[f].comp.size()); ++c) {
        table.push_back(phi.comp[f].comp[c]);
        for (int a = 0; a < dim; ++a) {
          GridFunctionT<T> d = spectral_derivative(phi.comp[f].comp[c], a);
          if (k.is_clock() && a == k.axis)
            for (auto& v : d.v) v = v + 1.0;
          table.push_back(std::move(d));
        }
      }
    }
    return table;
  }

  template <class T>
  GridFunctionT<T> eval_expr(const dsl::ExprPtr& e, const std::vector<GridFunctionT<T>>& table) const {
    GridFunctionT<T> out(schema_->grid);
    std::vector<T> buf(table.size());
    for (int k = 0; k < schema_->grid.total(); ++k) {
      for (size_t s = 0; s < table.size(); ++s) buf[s] = table[s].v[k];
      out.v[k] = dsl::eval_point(*e, buf.data());
    }
    return out;
  }

  template <class T>
  GridFunctionT<T> eq_coefficient_with(const std::vector<GridFunctionT<T>>& table, int field,
                                       int comp) const {
    const FieldKind& k = schema_->fields[field].kind;
    GridFunctionT<T> out(schema_->grid);
    if (!k.is_clock()) out = eval_expr(partials_[slot_index(field, comp, -1)], table);
    for (int a = 0; a < schema_->grid.dim(); ++a) {
      GridFunctionT<T> mom = eval_expr(partials_[slot_index(field, comp, a)], table);
      out = out - spectral_derivative(mom, a);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// shipped models
// ---------------------------------------------------------------------------

namespace models {

/// Scalar dragged along a line by an einbein; the minimal covariant theory.
inline SchemaPtr pscalar_schema(int n = 64) {
  return std::make_shared<Schema>(
      PeriodicGrid::line(n), std::vector<Schema::Entry>{{"phi", FieldKind::form_kind(0)},
                                                        {"eps", FieldKind::form_kind(1)}});
}

inline Lagrangian parametrized_scalar(int n = 64, double lambda = 0.25) {
  std::string src = "0.5*dx(phi)^2/eps_x";
  if (lambda != 0) src += " + " + dsl::format_number(lambda) + "*eps_x";
  return Lagrangian(pscalar_schema(n), src);
}

/// Same kinetic term with the einbein removed: deliberately not covariant.
inline Lagrangian kinetic_control(int n = 64) {
  auto schema = std::make_shared<Schema>(
      PeriodicGrid::line(n), std::vector<Schema::Entry>{{"phi", FieldKind::form_kind(0)}});
  return Lagrangian(schema, "0.5*dx(phi)^2");
}

/// Topological BF term plus a clock area term on the torus. The clocks enter
/// only through their derivatives, so their field equations vanish and they
/// serve purely as relational reference structure.
inline SchemaPtr bf_schema(int nx = 32, int ny = 32) {
  return std::make_shared<Schema>(
      PeriodicGrid::torus(nx, ny),
      std::vector<Schema::Entry>{{"B", FieldKind::form_kind(0)},
                                 {"A", FieldKind::form_kind(1)},
                                 {"chi1", FieldKind::clock_kind(0)},
                                 {"chi2", FieldKind::clock_kind(1)}});
}

inline Lagrangian bf_with_clocks(int nx = 32, int ny = 32) {
  return Lagrangian(bf_schema(nx, ny),
                    "B*(dx(A_y) - dy(A_x)) + dx(chi1)*dy(chi2) - dy(chi1)*dx(chi2)");
}

/// Exact solutions: constant B, closed A written as constants plus an exact
/// piece, clocks monotone near the identity. Every Euler-Lagrange
/// coefficient vanishes identically on these.
inline Fields bf_onshell(const SchemaPtr& schema, Rng rng) {
  Fields phi(schema);
  const PeriodicGrid& g = schema->grid;
  double b0 = rng.uniform(0.5, 1.5);
  double c1 = rng.uniform(-1, 1), c2 = rng.uniform(-1, 1);
  GridFunction lam = random_scalar(g, rng.split("exact"), 0.3);
  for (auto& v : phi["B"].comp[0].v) v = b0;
  phi["A"].comp[0] = spectral_derivative(lam, 0);
  for (auto& v : phi["A"].comp[0].v) v += c1;
  phi["A"].comp[1] = spectral_derivative(lam, 1);
  for (auto& v : phi["A"].comp[1].v) v += c2;
  phi["chi1"].comp[0] = random_scalar(g, rng.split("clock1"), 0.2, 2);
  phi["chi2"].comp[0] = random_scalar(g, rng.split("clock2"), 0.2, 2);
  return phi;
}

/// Exact solutions of the lambda-free scalar model: constant scalar, any
/// positive einbein.
inline Fields pscalar_onshell(const SchemaPtr& schema, Rng rng) {
  Fields phi(schema);
  const PeriodicGrid& g = schema->grid;
  double c = rng.uniform(-1, 1);
  for (auto& v : phi["phi"].comp[0].v) v = c;
  GridFunction e = random_scalar(g, rng.split("einbein"), 0.4, 2);
  for (auto& v : e.v) v += 1.0;
  phi["eps"].comp[0] = e;
  return phi;
}

}  // namespace models

}  // namespace covphase
