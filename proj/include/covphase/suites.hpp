#pragma once
/// Identity suites over a workbench. Each suite is a fixed catalog of jobs;
/// a job draws its own configurations and probes from a seed stream split by
/// suite, identity and draw index, evaluates one residual (or one fused
/// report), and emits rows. Jobs are independent, so they run on a work pool;
/// the row order and every number are reproducible for a given seed no matter
/// how many workers execute them.

#include <atomic>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>

#include "covphase/report.hpp"
#include "covphase/scenario.hpp"

namespace covphase {

struct RunOptions {
  int draws = 0;    // 0: take the scenario's draw count
  int threads = 0;  // 0: COVPHASE_THREADS, then hardware
};

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {
      "morphism",          "brackets", "pushforward", "variational", "cps",
      "cocycle-condition", "cocycle-concrete", "vertical", "dfm", "residual"};
  return names;
}

inline bool suite_needs_dressing(const std::string& name) {
  return name == "dfm" || name == "residual";
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("COVPHASE_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? int(hw) : 1;
}

namespace detail {

using SuiteJob = std::function<std::vector<ReportRow>()>;

inline void run_jobs(const std::vector<SuiteJob>& jobs, int threads,
                     std::vector<std::vector<ReportRow>>& out) {
  out.assign(jobs.size(), {});
  std::atomic<size_t> next{0};
  std::mutex mu;
  std::exception_ptr first;
  auto worker = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        out[i] = jobs[i]();
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first) first = std::current_exception();
      }
    }
  };
  if (threads <= 1 || jobs.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> ts;
    int n = std::min<int>(threads, int(jobs.size()));
    ts.reserve(n);
    for (int t = 0; t < n; ++t) ts.emplace_back(worker);
    for (auto& t : ts) t.join();
  }
  if (first) std::rethrow_exception(first);
}

inline ReportRow make_row(std::string suite, std::string identity, int draw, double residual,
                          double tol) {
  bool ok = std::isfinite(residual) && residual <= tol;
  return {std::move(suite), std::move(identity), draw, residual, tol, ok};
}

/// One-residual job; the callable runs on the pool.
inline void add_job(std::vector<SuiteJob>& out, const Workbench& wb, const std::string& suite,
                    const std::string& identity, int draw, double fallback_tol,
                    std::function<double()> fn) {
  double tol = wb.tol(identity, fallback_tol);
  out.push_back([suite, identity, draw, tol, fn = std::move(fn)]() {
    return std::vector<ReportRow>{make_row(suite, identity, draw, fn(), tol)};
  });
}

// Tangent direction with genuine configuration dependence through a smooth
// scalar functional; safe for two derivative levels.
inline FieldVectorField dep_tangent(const SchemaPtr& schema, Rng rng) {
  Fields dir = random_fields(schema, rng.split("dir"), 0.4, 2);
  return FieldVectorField::make([dir](const auto& phi) {
    using std::sin;
    auto s = quadrature(phi.comp[0].comp[0]);
    return (0.7 + 0.3 * sin(s)) * lift_to<decltype(s)>(dir);
  });
}

inline FieldDepVectorM dep_generator(const SchemaPtr& schema, Rng rng) {
  VectorFieldM shape = random_vf(schema->grid, rng.split("shape"), 0.4, 2);
  double c = rng.uniform(0.5, 1.5);
  return FieldDepVectorM::make([shape, c](const auto& phi) {
    using std::sin;
    auto q = quadrature(phi.comp[0].comp[0] * phi.comp[0].comp[0]);
    return (c + sin(q)) * lift_to<decltype(q)>(shape);
  });
}

/// Periodic window vanishing at x = a and x = b, for generators that must
/// stay silent at slice corners.
inline GridFunction corner_window(const PeriodicGrid& g, double a, double b) {
  auto w = [a, b](double x) {
    double sa = std::sin(0.5 * (x - a)), sb = std::sin(0.5 * (x - b));
    return sa * sa * sb * sb;
  };
  return g.dim() == 2 ? sample(g, [w](double x, double) { return w(x); })
                      : sample(g, [w](double x) { return w(x); });
}

/// Generator windowed to fix the slice boundary: silent at segment ends and
/// at a point slice; closed slices have no corners, so the plain draw serves.
inline VectorFieldM boundary_fixing_vf(const Workbench& wb, Rng rng) {
  VectorFieldM raw = random_vf(wb.grid(), rng, 0.5, 2);
  const Scenario& sc = wb.sc;
  if (sc.slice_kind == "circle") return raw;
  GridFunction w = sc.slice_kind == "segment"
                       ? corner_window(wb.grid(), sc.slice_a, sc.slice_b)
                       : corner_window(wb.grid(), sc.slice_c, sc.slice_c);
  for (auto& c : raw.comp) c = w * c;
  return raw;
}

inline Diffeo small_flow(const PeriodicGrid& g, Rng rng, double amp = 0.12) {
  return flow(random_vf(g, rng, amp, 2), 1.0);
}

/// Draws for the dressed-frame suites: clocks must stay monotone, so the
/// amplitude is capped below the scenario's generic level.
inline Fields frame_safe_config(const Workbench& wb, Rng rng, double cap = 0.2) {
  Fields phi = random_fields(wb.schema, rng, std::min(wb.sc.amplitude, cap), wb.sc.kmax);
  wb.apply_values(phi);
  return phi;
}

/// Reference-side reparametrization driven by the dressed data through one
/// node sample; smooth in the AD scalar and safe for two levels.
inline FieldDepDiffeo data_driven_reparam(const PeriodicGrid& g) {
  return FieldDepDiffeo::make([dim = g.dim()](const auto& conf) {
    using T = typename std::decay_t<decltype(conf)>::Scalar;
    auto amp = conf.comp[0].comp[0].v[0];
    GridFunction sx =
        dim == 2 ? sample(conf.grid(),
                          [](double x, double y) { return std::sin(x) * (2.0 + std::cos(y)); })
                 : sample(conf.grid(), [](double x) { return std::sin(x + 0.4); });
    std::vector<GridFunctionT<T>> disp;
    disp.push_back(T(0.01) * amp * lift_to<T>(sx));
    if (dim == 2) disp.emplace_back(conf.grid());
    return DiffeoT<T>(conf.grid(), std::move(disp));
  });
}

/// Torus map moving only one axis, by a function of that axis alone. Such
/// maps commute with a frame built transverse to them.
inline Diffeo axis_shift_map(const PeriodicGrid& g, int axis, double a, double c) {
  std::vector<GridFunction> disp(g.dim(), GridFunction(g));
  auto f = [a, c](double t) { return a * std::sin(t + c) + 0.05 * std::sin(2 * t); };
  disp[axis] = axis == 0 ? sample(g, [f](double x, double) { return f(x); })
                         : sample(g, [f](double, double y) { return f(y); });
  return Diffeo(g, std::move(disp));
}

// ---------------------------------------------------------------------------
// suite builders
// ---------------------------------------------------------------------------

inline void build_morphism(const Workbench& wb, Rng root, int draws, std::vector<SuiteJob>& out) {
  for (int d = 0; d < draws; ++d) {
    Rng rng = root.split("vertical-lift-antimorphism#" + std::to_string(d));
    add_job(out, wb, "morphism", "vertical-lift-antimorphism", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto X = random_vf(wb.grid(), r.split("x"), 0.5, 2);
      auto Y = random_vf(wb.grid(), r.split("y"), 0.5, 2);
      Fields lhs = vf_bracket(vertical_vf(X), vertical_vf(Y))(phi);
      Fields rhs = vertical_vf(lie_bracket_diff(X, Y))(phi);
      return fields_gap(lhs, rhs);
    });
  }
  for (int d = 0; d < std::min(draws, 2); ++d) {
    Rng rng = root.split("twisted-composition#" + std::to_string(d));
    add_job(out, wb, "morphism", "twisted-composition", d, 1e-8, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto P1 = random_field_diffeo(wb.schema, r.split("p1"));
      auto P2 = random_field_diffeo(wb.schema, r.split("p2"));
      Fields mid = pullback(P1(phi), phi);
      Fields step = pullback(P2(mid), mid);
      Fields once = pullback(twisted_compose(P1, P2)(phi), phi);
      return fields_gap(step, once);
    });
  }
}

inline void build_brackets(const Workbench& wb, Rng root, int draws, std::vector<SuiteJob>& out) {
  for (int d = 0; d < draws; ++d) {
    Rng rng = root.split("extended-bracket-closure#" + std::to_string(d));
    add_job(out, wb, "brackets", "extended-bracket-closure", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto X = dep_generator(wb.schema, r.split("x"));
      auto Y = dep_generator(wb.schema, r.split("y"));
      Fields lhs = vf_bracket(vertical_vf(X), vertical_vf(Y))(phi);
      Fields rhs = vertical_vf(extended_bracket(X, Y))(phi);
      return fields_gap(lhs, rhs);
    });
  }
  for (int d = 0; d < std::min(draws, 2); ++d) {
    Rng rng = root.split("vertical-bracket-jacobi#" + std::to_string(d));
    add_job(out, wb, "brackets", "vertical-bracket-jacobi", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto A = vertical_vf(random_vf(wb.grid(), r.split("a"), 0.5, 2));
      auto B = vertical_vf(random_vf(wb.grid(), r.split("b"), 0.5, 2));
      auto C = vertical_vf(random_vf(wb.grid(), r.split("c"), 0.5, 2));
      Fields cyc = vf_bracket(vf_bracket(A, B), C)(phi) + vf_bracket(vf_bracket(B, C), A)(phi) +
                   vf_bracket(vf_bracket(C, A), B)(phi);
      return cyc.max_abs();
    });
  }
  {
    Rng rng = root.split("extended-bracket-constant-reduction");
    add_job(out, wb, "brackets", "extended-bracket-constant-reduction", 0, 1e-9, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto Xc = random_vf(wb.grid(), r.split("x"), 0.5, 2);
      auto Yc = random_vf(wb.grid(), r.split("y"), 0.5, 2);
      VectorFieldM ext =
          extended_bracket(FieldDepVectorM::constant(Xc), FieldDepVectorM::constant(Yc))(phi);
      VectorFieldM plain = lie_bracket_diff(Xc, Yc);
      double m = 0;
      for (int a = 0; a < wb.grid().dim(); ++a)
        m = std::max(m, (ext.comp[a] - plain.comp[a]).max_abs());
      return m;
    });
  }
}

inline void build_pushforward(const Workbench& wb, Rng root, int draws,
                              std::vector<SuiteJob>& out) {
  for (int d = 0; d < draws; ++d) {
    Rng rng = root.split("pushforward-flow-oracle#" + std::to_string(d));
    add_job(out, wb, "pushforward", "pushforward-flow-oracle", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto X = random_vf(wb.grid(), r.split("x"), 0.5, 2);
      auto Psi = random_field_diffeo(wb.schema, r.split("psi"));
      Fields lhs = vertical_pushforward_at(Psi, phi, lie_drag(X, phi));
      auto probe = [&](double s) {
        Fields fwd = vertical_transform(Psi, pullback(flow(X, s), phi));
        Fields bwd = vertical_transform(Psi, pullback(flow(X, -s), phi));
        return (1.0 / (2 * s)) * (fwd - bwd);
      };
      Fields rich = (4.0 / 3.0) * probe(0.01) - (1.0 / 3.0) * probe(0.02);
      return fields_gap(lhs, rich) / std::max(1.0, rich.max_abs());
    });
  }
  {
    Rng rng = root.split("pushforward-fixed-conjugation");
    add_job(out, wb, "pushforward", "pushforward-fixed-conjugation", 0, 1e-7, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto X = random_vf(wb.grid(), r.split("x"), 0.5, 2);
      Diffeo psi = small_flow(wb.grid(), r.split("psi"), 0.15);
      Fields lhs = vertical_pushforward_at(FieldDepDiffeo::constant(psi), phi, lie_drag(X, phi));
      Fields rhs = lie_drag(conjugate_vf(psi, X), pullback(psi, phi));
      return fields_gap(lhs, rhs);
    });
  }
}

inline void build_variational(const Workbench& wb, Rng root, int draws,
                              std::vector<SuiteJob>& out) {
  for (int d = 0; d < draws; ++d) {
    Rng rng = root.split("action-decomposition#" + std::to_string(d));
    add_job(out, wb, "variational", "action-decomposition", d, 1e-8, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      Fields xi = random_fields(wb.schema, r.split("xi"), wb.sc.amplitude, wb.sc.kmax);
      return wb.lag->decomposition_residual(phi, xi);
    });
  }
  for (int d = 0; d < draws; ++d) {
    Rng rng = root.split("density-covariance#" + std::to_string(d));
    add_job(out, wb, "variational", "density-covariance", d, 1e-8, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto X = random_vf(wb.grid(), r.split("x"), 0.5, 2);
      return wb.lag->covariance_residual(phi, X);
    });
  }
  for (int d = 0; d < draws; ++d) {
    Rng rng = root.split("current-route-split#" + std::to_string(d));
    add_job(out, wb, "variational", "current-route-split", d, 1e-8, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto X = random_vf(wb.grid(), r.split("x"), 0.5, 2);
      return current_split_residual(*wb.lag, phi, X);
    });
  }
  for (int d = 0; d < draws; ++d) {
    Rng rng = root.split("current-conservation#" + std::to_string(d));
    add_job(out, wb, "variational", "current-conservation", d, 1e-8, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto X = random_vf(wb.grid(), r.split("x"), 0.5, 2);
      return current_conservation_residual(*wb.lag, phi, X);
    });
  }
  if (wb.has_onshell()) {
    for (int d = 0; d < std::min(draws, 3); ++d) {
      Rng rng = root.split("onshell-current-closed#" + std::to_string(d));
      add_job(out, wb, "variational", "onshell-current-closed", d, 1e-8, [&wb, rng]() {
        Rng r = rng;
        Fields sol = wb.onshell_config(r.split("sol"));
        auto X = random_vf(wb.grid(), r.split("x"), 0.5, 2);
        auto dj = exterior_d(noether_current(*wb.lag, sol, X, wb.sc.gamma));
        return dj.comp[0].max_abs();
      });
    }
  }
}

inline void build_cps(const Workbench& wb, Rng root, int draws, std::vector<SuiteJob>& out) {
  for (int d = 0; d < draws; ++d) {
    Rng rng = root.split("moment-map-identity#" + std::to_string(d));
    add_job(out, wb, "cps", "moment-map-identity", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto X = random_vf(wb.grid(), r.split("x"), 0.5, 2);
      auto probe = dep_tangent(wb.schema, r.split("p"));
      return moment_map_residual(*wb.lag, phi, X, probe, wb.sigma, wb.sc.gamma);
    });
  }
  if (wb.has_onshell()) {
    for (int d = 0; d < std::min(draws, 3); ++d) {
      Rng rng = root.split("hamiltonian-boundary-fixed#" + std::to_string(d));
      add_job(out, wb, "cps", "hamiltonian-boundary-fixed", d, 1e-6, [&wb, rng]() {
        Rng r = rng;
        Fields sol = wb.onshell_config(r.split("sol"));
        VectorFieldM X = boundary_fixing_vf(wb, r.split("x"));
        auto probe = dep_tangent(wb.schema, r.split("p"));
        return std::abs(hamiltonian_defect(*wb.lag, sol, X, probe, wb.sigma, wb.sc.gamma));
      });
    }
  }
  {
    Rng rng = root.split("presymplectic-antisymmetry");
    add_job(out, wb, "cps", "presymplectic-antisymmetry", 0, 1e-12, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto big = presymplectic_form(*wb.lag, wb.sigma);
      auto A = dep_tangent(wb.schema, r.split("a"));
      auto B = dep_tangent(wb.schema, r.split("b"));
      return std::abs(big(phi, {&A, &B}) + big(phi, {&B, &A}));
    });
  }
  if (wb.lag->has_boundary_term()) {
    for (int d = 0; d < std::min(draws, 2); ++d) {
      Rng rng = root.split("corner-shift-invariance#" + std::to_string(d));
      add_job(out, wb, "cps", "corner-shift-invariance", d, 1e-8, [&wb, rng]() {
        Rng r = rng;
        Fields phi = wb.random_config(r.split("phi"));
        auto big = field_d(presymplectic_potential(*wb.lag, wb.sigma));
        auto big_shifted = field_d(shifted_presymplectic_potential(*wb.lag, wb.sigma));
        auto A = dep_tangent(wb.schema, r.split("a"));
        auto B = dep_tangent(wb.schema, r.split("b"));
        return std::abs(big_shifted(phi, {&A, &B}) - big(phi, {&A, &B}));
      });
    }
  }
}

inline void build_cocycle_condition(const Workbench& wb, Rng root, int draws,
                                    std::vector<SuiteJob>& out) {
  bool segment = wb.sc.slice_kind == "segment";
  if (segment && wb.has_onshell()) {
    for (int d = 0; d < std::min(draws, 3); ++d) {
      Rng rng = root.split("cocycle-cyclic-corner-silent#" + std::to_string(d));
      add_job(out, wb, "cocycle-condition", "cocycle-cyclic-corner-silent", d, 1e-5,
              [&wb, rng]() {
                Rng r = rng;
                Fields sol = wb.onshell_config(r.split("sol"));
                VectorFieldM X = boundary_fixing_vf(wb, r.split("x"));
                VectorFieldM Y = boundary_fixing_vf(wb, r.split("y"));
                VectorFieldM Z = boundary_fixing_vf(wb, r.split("z"));
                return std::abs(cocycle_cyclic_sum(*wb.lag, sol, X, Y, Z, wb.sigma, wb.sc.gamma));
              });
    }
  }
  {
    Rng rng = root.split("cocycle-degenerate-cancellation");
    add_job(out, wb, "cocycle-condition", "cocycle-degenerate-cancellation", 0, 1e-6,
            [&wb, rng]() {
              Rng r = rng;
              Fields phi = wb.random_config(r.split("phi"));
              auto X = random_vf(wb.grid(), r.split("x"), 0.5, 2);
              auto Y = random_vf(wb.grid(), r.split("y"), 0.5, 2);
              return std::abs(cocycle_cyclic_sum(*wb.lag, phi, X, Y, X, wb.sigma, wb.sc.gamma));
            });
  }
  if (!segment) {
    // slices without corners carry no cocycle at all
    Rng rng = root.split("cocycle-corner-free");
    add_job(out, wb, "cocycle-condition", "cocycle-corner-free", 0, 1e-12, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto X = random_vf(wb.grid(), r.split("x"), 0.5, 2);
      auto Y = random_vf(wb.grid(), r.split("y"), 0.5, 2);
      return std::abs(corner_cocycle(*wb.lag, phi, X, Y, wb.sigma, wb.sc.gamma));
    });
  }
}

inline void build_cocycle_concrete(const Workbench& wb, Rng root, int draws,
                                   std::vector<SuiteJob>& out) {
  for (int d = 0; d < draws; ++d) {
    Rng rng = root.split("charge-bracket-cocycle-split#" + std::to_string(d));
    add_job(out, wb, "cocycle-concrete", "charge-bracket-cocycle-split", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto X = random_vf(wb.grid(), r.split("x"), 0.5, 2);
      auto Y = random_vf(wb.grid(), r.split("y"), 0.5, 2);
      return bracket_relation_residual(*wb.lag, phi, X, Y, wb.sigma, wb.sc.gamma);
    });
  }
  for (int d = 0; d < std::min(draws, 2); ++d) {
    Rng rng = root.split("extended-bracket-relation#" + std::to_string(d));
    add_job(out, wb, "cocycle-concrete", "extended-bracket-relation", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto X = dep_generator(wb.schema, r.split("x"));
      auto Y = dep_generator(wb.schema, r.split("y"));
      return extended_bracket_relation_residual(*wb.lag, phi, X, Y, wb.sigma, wb.sc.gamma);
    });
  }
  if (wb.has_onshell()) {
    for (int d = 0; d < std::min(draws, 3); ++d) {
      Rng rng = root.split("onshell-bracket-closure#" + std::to_string(d));
      add_job(out, wb, "cocycle-concrete", "onshell-bracket-closure", d, 1e-6, [&wb, rng]() {
        Rng r = rng;
        Fields sol = wb.onshell_config(r.split("sol"));
        auto X = random_vf(wb.grid(), r.split("x"), 0.5, 2);
        auto Y = random_vf(wb.grid(), r.split("y"), 0.5, 2);
        double lhs = charge_bracket(*wb.lag, sol, X, Y, wb.sigma, wb.sc.gamma);
        double rhs = noether_charge(*wb.lag, sol, lie_bracket_diff(X, Y), wb.sigma, wb.sc.gamma) +
                     corner_cocycle(*wb.lag, sol, X, Y, wb.sigma, wb.sc.gamma);
        return std::abs(lhs - rhs);
      });
    }
    if (wb.sc.slice_kind == "segment") {
      for (int d = 0; d < std::min(draws, 2); ++d) {
        Rng rng = root.split("cyclic-vs-flux-obstruction#" + std::to_string(d));
        add_job(out, wb, "cocycle-concrete", "cyclic-vs-flux-obstruction", d, 1e-5, [&wb, rng]() {
          Rng r = rng;
          Fields sol = wb.onshell_config(r.split("sol"));
          auto X = random_vf(wb.grid(), r.split("x"), 0.5, 2);
          auto Y = random_vf(wb.grid(), r.split("y"), 0.5, 2);
          auto Z = random_vf(wb.grid(), r.split("z"), 0.5, 2);
          double cyc = cocycle_cyclic_sum(*wb.lag, sol, X, Y, Z, wb.sigma, wb.sc.gamma);
          double flux = cocycle_flux_obstruction(*wb.lag, sol, X, Y, Z, wb.sigma, wb.sc.gamma);
          return std::abs(cyc - flux);
        });
      }
    }
  }
  {
    Rng rng = root.split("extended-constant-reduction");
    add_job(out, wb, "cocycle-concrete", "extended-constant-reduction", 0, 1e-12, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto Xc = random_vf(wb.grid(), r.split("x"), 0.5, 2);
      auto Yc = random_vf(wb.grid(), r.split("y"), 0.5, 2);
      auto X = FieldDepVectorM::constant(Xc);
      auto Y = FieldDepVectorM::constant(Yc);
      double a = std::abs(extended_cocycle(*wb.lag, phi, X, Y, wb.sigma, wb.sc.gamma) -
                          corner_cocycle(*wb.lag, phi, Xc, Yc, wb.sigma, wb.sc.gamma));
      double b = std::abs(charge_bracket(*wb.lag, phi, X, Y, wb.sigma, wb.sc.gamma) -
                          charge_bracket(*wb.lag, phi, Xc, Yc, wb.sigma, wb.sc.gamma));
      return std::max(a, b);
    });
  }
}

inline void build_vertical(const Workbench& wb, Rng root, int draws, std::vector<SuiteJob>& out) {
  for (int d = 0; d < draws; ++d) {
    Rng rng = root.split("vertical-density-pullback#" + std::to_string(d));
    add_job(out, wb, "vertical", "vertical-density-pullback", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      auto Psi = random_field_diffeo(wb.schema, r.split("psi"));
      return vt_density_residual(*wb.lag, Psi, phi);
    });
  }
  for (int d = 0; d < draws; ++d) {
    Rng rng = root.split("vertical-field-eq#" + std::to_string(d));
    add_job(out, wb, "vertical", "vertical-field-eq", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      Fields xi = random_fields(wb.schema, r.split("xi"), wb.sc.amplitude, wb.sc.kmax);
      auto Psi = random_field_diffeo(wb.schema, r.split("psi"));
      return vt_field_eq_residual(*wb.lag, Psi, phi, xi);
    });
  }
  for (int d = 0; d < draws; ++d) {
    Rng rng = root.split("vertical-kinetic-pairing#" + std::to_string(d));
    add_job(out, wb, "vertical", "vertical-kinetic-pairing", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      Fields xi = random_fields(wb.schema, r.split("xi"), wb.sc.amplitude, wb.sc.kmax);
      auto Psi = random_field_diffeo(wb.schema, r.split("psi"));
      return vt_theta_residual(*wb.lag, Psi, phi, xi);
    });
  }
  for (int d = 0; d < std::min(draws, 3); ++d) {
    Rng rng = root.split("vertical-kinetic-slice#" + std::to_string(d));
    add_job(out, wb, "vertical", "vertical-kinetic-slice", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      Fields xi = random_fields(wb.schema, r.split("xi"), wb.sc.amplitude, wb.sc.kmax);
      auto Psi = random_field_diffeo(wb.schema, r.split("psi"));
      return vt_theta_slice_residual(*wb.lag, Psi, phi, xi, wb.sigma);
    });
  }
  if (wb.grid().dim() == 2) {
    for (int d = 0; d < std::min(draws, 2); ++d) {
      Rng rng = root.split("vertical-two-form-decomposition#" + std::to_string(d));
      add_job(out, wb, "vertical", "vertical-two-form-decomposition", d, 1e-6, [&wb, rng]() {
        Rng r = rng;
        Fields phi = wb.random_config(r.split("phi"));
        Fields xi1 = random_fields(wb.schema, r.split("x1"), wb.sc.amplitude, wb.sc.kmax);
        Fields xi2 = random_fields(wb.schema, r.split("x2"), wb.sc.amplitude, wb.sc.kmax);
        auto Psi = random_field_diffeo(wb.schema, r.split("psi"));
        auto t = vt_presymplectic_slice_terms(*wb.lag, Psi, phi, xi1, xi2, wb.sigma);
        return std::abs(t.transformed - t.base - t.boundary + t.bulk);
      });
    }
    if (wb.has_onshell()) {
      for (int d = 0; d < std::min(draws, 2); ++d) {
        Rng rng = root.split("vertical-onshell-pure-corner#" + std::to_string(d));
        add_job(out, wb, "vertical", "vertical-onshell-pure-corner", d, 1e-6, [&wb, rng]() {
          Rng r = rng;
          Fields sol = wb.onshell_config(r.split("sol"));
          Fields xi1 = random_fields(wb.schema, r.split("x1"), wb.sc.amplitude, wb.sc.kmax);
          Fields xi2 = random_fields(wb.schema, r.split("x2"), wb.sc.amplitude, wb.sc.kmax);
          auto Psi = random_field_diffeo(wb.schema, r.split("psi"));
          auto t = vt_presymplectic_slice_terms(*wb.lag, Psi, sol, xi1, xi2, wb.sigma);
          return std::max(std::abs(t.bulk), std::abs(t.transformed - t.base - t.boundary));
        });
      }
    }
  }
  for (int d = 0; d < std::min(draws, 3); ++d) {
    Rng rng = root.split("vertical-windowed-action#" + std::to_string(d));
    add_job(out, wb, "vertical", "vertical-windowed-action", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = wb.random_config(r.split("phi"));
      Fields xi = random_fields(wb.schema, r.split("xi"), wb.sc.amplitude, wb.sc.kmax);
      auto Psi = random_field_diffeo(wb.schema, r.split("psi"));
      return vt_action_residual(*wb.lag, Psi, phi, xi, wb.window);
    });
  }
  if (wb.has_onshell()) {
    for (int d = 0; d < std::min(draws, 2); ++d) {
      Rng rng = root.split("vertical-solution-transport#" + std::to_string(d));
      add_job(out, wb, "vertical", "vertical-solution-transport", d, 1e-6, [&wb, rng]() {
        Rng r = rng;
        Fields sol = wb.onshell_config(r.split("sol"));
        auto Psi = random_field_diffeo(wb.schema, r.split("psi"));
        return wb.lag->eq_norm(vertical_transform(Psi, sol));
      });
    }
  }
}

inline void build_dfm(const Workbench& wb, Rng root, int draws, std::vector<SuiteJob>& out) {
  for (int d = 0; d < draws; ++d) {
    Rng rng = root.split("frame-equivariance#" + std::to_string(d));
    add_job(out, wb, "dfm", "frame-equivariance", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = frame_safe_config(wb, r.split("phi"));
      Dressing u = wb.dressing(phi);
      Diffeo psi = small_flow(wb.grid(), r.split("psi"));
      return equivariance_residual(u.map, phi, psi);
    });
  }
  for (int d = 0; d < draws; ++d) {
    Rng rng = root.split("dressed-field-invariance#" + std::to_string(d));
    add_job(out, wb, "dfm", "dressed-field-invariance", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = frame_safe_config(wb, r.split("phi"));
      Dressing u = wb.dressing(phi);
      Diffeo psi = small_flow(wb.grid(), r.split("psi"));
      return dress_invariance_residual(u, phi, psi);
    });
  }
  for (int d = 0; d < std::min(draws, 2); ++d) {
    Rng rng = root.split("dressed-tangent-substitution#" + std::to_string(d));
    add_job(out, wb, "dfm", "dressed-tangent-substitution", d, 1e-9, [&wb, rng]() {
      Rng r = rng;
      Fields phi = frame_safe_config(wb, r.split("phi"));
      Fields xi = random_fields(wb.schema, r.split("xi"), 0.2, wb.sc.kmax);
      Dressing u = wb.dressing(phi);
      return rule_of_thumb_gap(u, phi, xi);
    });
  }
  for (int d = 0; d < std::min(draws, 2); ++d) {
    Rng rng = root.split("dressed-tangent-transport#" + std::to_string(d));
    add_job(out, wb, "dfm", "dressed-tangent-transport", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = frame_safe_config(wb, r.split("phi"));
      Fields xi = random_fields(wb.schema, r.split("xi"), 0.2, wb.sc.kmax);
      Dressing u = wb.dressing(phi);
      return reframed_tangent_residual(u.map, phi, xi);
    });
  }
  for (int d = 0; d < std::min(draws, 2); ++d) {
    Rng rng = root.split("dressed-basicity#" + std::to_string(d));
    add_job(out, wb, "dfm", "dressed-basicity", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = frame_safe_config(wb, r.split("phi"));
      Fields xi = random_fields(wb.schema, r.split("xi"), 0.2, wb.sc.kmax);
      Dressing u = wb.dressing(phi);
      auto X = random_vf(wb.grid(), r.split("x"), 0.3, 2);
      Diffeo psi = small_flow(wb.grid(), r.split("psi"));
      BasicityReport b = basicity_check(u, phi, xi, X, FieldDepDiffeo::constant(psi));
      return std::max(b.horizontality, b.invariance);
    });
  }
  for (int d = 0; d < std::min(draws, 2); ++d) {
    Rng rng = root.split("connection-verticality#" + std::to_string(d));
    add_job(out, wb, "dfm", "connection-verticality", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = frame_safe_config(wb, r.split("phi"));
      Dressing u = wb.dressing(phi);
      auto om = flat_connection(u);
      auto X = random_vf(wb.grid(), r.split("x"), 0.3, 2);
      return connection_vertical_residual(om, phi, X);
    });
  }
  for (int d = 0; d < std::min(draws, 2); ++d) {
    Rng rng = root.split("connection-equivariance#" + std::to_string(d));
    add_job(out, wb, "dfm", "connection-equivariance", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = frame_safe_config(wb, r.split("phi"));
      Fields xi = random_fields(wb.schema, r.split("xi"), 0.2, wb.sc.kmax);
      Dressing u = wb.dressing(phi);
      auto om = flat_connection(u);
      Diffeo psi = small_flow(wb.grid(), r.split("psi"));
      return connection_equivariance_residual(om, phi, xi, psi);
    });
  }
  for (int d = 0; d < std::min(draws, 2); ++d) {
    Rng rng = root.split("connection-flatness#" + std::to_string(d));
    add_job(out, wb, "dfm", "connection-flatness", d, 1e-5, [&wb, rng]() {
      Rng r = rng;
      Fields phi = frame_safe_config(wb, r.split("phi"));
      Fields xi1 = random_fields(wb.schema, r.split("x1"), 0.2, wb.sc.kmax);
      Fields xi2 = random_fields(wb.schema, r.split("x2"), 0.2, wb.sc.kmax);
      Dressing u = wb.dressing(phi);
      auto om = flat_connection(u);
      return curvature_residual(om, value_tangent(xi1), value_tangent(xi2), phi);
    });
  }
  {
    Rng rng = root.split("dressed-structure");
    double tols[6] = {wb.tol("dressed-density", 1e-6),      wb.tol("dressed-field-eq", 1e-6),
                      wb.tol("dressed-kinetic-slice", 1e-6), wb.tol("dressed-two-form", 1e-6),
                      wb.tol("dressed-variational", 1e-6),   wb.tol("dressed-boundary-flux", 1e-6)};
    out.push_back([&wb, rng, tols]() {
      Rng r = rng;
      Fields phi = frame_safe_config(wb, r.split("phi"), 0.15);
      Fields xi1 = random_fields(wb.schema, r.split("x1"), 0.2, wb.sc.kmax);
      Fields xi2 = random_fields(wb.schema, r.split("x2"), 0.2, wb.sc.kmax);
      Dressing u = wb.dressing(phi);
      DressedReport rep = dressed_presymplectic(*wb.lag, u, phi, xi1, xi2, wb.sigma, wb.window);
      return std::vector<ReportRow>{
          make_row("dfm", "dressed-density", 0, rep.density, tols[0]),
          make_row("dfm", "dressed-field-eq", 0, rep.field_eq, tols[1]),
          make_row("dfm", "dressed-kinetic-slice", 0, rep.theta_slice, tols[2]),
          make_row("dfm", "dressed-two-form", 0, rep.two_form, tols[3]),
          make_row("dfm", "dressed-variational", 0, rep.variational, tols[4]),
          make_row("dfm", "dressed-boundary-flux", 0, rep.boundary_flux, tols[5])};
    });
  }
  for (int d = 0; d < std::min(draws, 2); ++d) {
    Rng rng = root.split("dressed-potential-invariance#" + std::to_string(d));
    add_job(out, wb, "dfm", "dressed-potential-invariance", d, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = frame_safe_config(wb, r.split("phi"), 0.15);
      Fields xi = random_fields(wb.schema, r.split("xi"), 0.2, wb.sc.kmax);
      Dressing u = wb.dressing(phi);
      auto Psi = random_field_diffeo(wb.schema, r.split("vert"));
      return dressed_potential_invariance(*wb.lag, u, Psi, phi, xi, wb.sigma);
    });
  }
  {
    Rng rng = root.split("frame-shift");
    double tols[4] = {wb.tol("frame-shift-closure", 1e-6), wb.tol("frame-shift-horizontality", 1e-6),
                      wb.tol("frame-shift-equivariance", 1e-6),
                      wb.tol("frame-shift-potential", 1e-6)};
    out.push_back([&wb, rng, tols]() {
      Rng r = rng;
      Fields phi = frame_safe_config(wb, r.split("phi"));
      Fields xi = random_fields(wb.schema, r.split("xi"), 0.2, wb.sc.kmax);
      Dressing u = wb.dressing(phi);
      auto X = random_vf(wb.grid(), r.split("x"), 0.3, 2);
      Diffeo psi = small_flow(wb.grid(), r.split("psi"));
      FrameShiftReport rep = connection_shift_suite(*wb.lag, u, data_driven_reparam(wb.grid()),
                                                    phi, xi, X, psi, wb.sigma);
      return std::vector<ReportRow>{
          make_row("dfm", "frame-shift-closure", 0, rep.closure, tols[0]),
          make_row("dfm", "frame-shift-horizontality", 0, rep.horizontality, tols[1]),
          make_row("dfm", "frame-shift-equivariance", 0, rep.equivariance, tols[2]),
          make_row("dfm", "frame-shift-potential", 0, rep.potential_shift, tols[3])};
    });
  }
  {
    Rng rng = root.split("dressed-window-boundary");
    add_job(out, wb, "dfm", "dressed-window-boundary", 0, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = frame_safe_config(wb, r.split("phi"));
      Dressing u = wb.dressing(phi);
      Diffeo psi = small_flow(wb.grid(), r.split("psi"));
      return dressed_boundary_gap(u, phi, psi, wb.window);
    });
  }
  if (wb.has_onshell()) {
    Rng rng = root.split("dressed-onshell-persistence");
    add_job(out, wb, "dfm", "dressed-onshell-persistence", 0, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields sol = wb.onshell_config(r.split("sol"));
      Dressing u = wb.dressing(sol);
      return wb.lag->eq_norm(dress_field(sol, u));
    });
  }
}

inline void build_residual(const Workbench& wb, Rng root, int draws, std::vector<SuiteJob>& out) {
  (void)draws;  // the classification rows probe one configuration each
  {
    Rng rng = root.split("residual-complete-elimination");
    add_job(out, wb, "residual", "residual-complete-elimination", 0, 1e-6, [&wb, rng]() {
      Rng r = rng;
      Fields phi = frame_safe_config(wb, r.split("phi"));
      Dressing u = wb.dressing(phi);
      std::vector<Diffeo> maps;
      for (int t = 0; t < 3; ++t)
        maps.push_back(small_flow(wb.grid(), r.split("gen" + std::to_string(t)), 0.1));
      ResidualProbe probe = classify_residual(u, phi, maps);
      if (probe.law != ResidualLaw::eliminated) return 1.0;
      return probe.eliminated_gap;
    });
  }
  // partial frames need a second clock axis to leave something to classify
  std::vector<std::string> clocks;
  for (const auto& e : wb.schema->fields)
    if (e.kind.is_clock()) clocks.push_back(e.name);
  if (clocks.size() >= 2 && wb.grid().dim() == 2 && wb.sc.clocks.empty()) {
    int dressed_axis = wb.schema->fields[wb.schema->index(clocks[0])].kind.axis;
    int free_axis = 1 - dressed_axis;
    std::string first = clocks[0];
    {
      Rng rng = root.split("residual-conjugation-law");
      add_job(out, wb, "residual", "residual-conjugation-law", 0, 1e-6,
              [&wb, rng, first, free_axis]() {
                Rng r = rng;
                Fields phi = frame_safe_config(wb, r.split("phi"));
                Dressing ux = clock_dressing(phi, {first});
                std::vector<Diffeo> maps;
                for (int t = 0; t < 3; ++t)
                  maps.push_back(axis_shift_map(wb.grid(), free_axis, 0.12, 0.7 * t));
                ResidualProbe probe = classify_residual(ux, phi, maps);
                if (probe.law != ResidualLaw::conjugation) return 1.0;
                return probe.conjugation_gap;
              });
    }
    {
      Rng rng = root.split("residual-cocycle-law");
      add_job(out, wb, "residual", "residual-cocycle-law", 0, 1e-6, [&wb, rng, first]() {
        Rng r = rng;
        Fields phi = frame_safe_config(wb, r.split("phi"));
        Dressing ux = clock_dressing(phi, {first});
        std::vector<Diffeo> maps;
        for (int t = 0; t < 3; ++t)
          maps.push_back(small_flow(wb.grid(), r.split("gen" + std::to_string(t)), 0.1));
        ResidualProbe probe = classify_residual(ux, phi, maps);
        if (probe.law != ResidualLaw::cocycle) return 1.0;
        return probe.cocycle_gap;
      });
    }
  }
  {
    Rng rng = root.split("residual-charges");
    double tols[3] = {wb.tol("residual-reparametrization-tangent", 1e-6),
                      wb.tol("residual-bracket-relation", 1e-6),
                      wb.tol("residual-zero-charge", 1e-12)};
    out.push_back([&wb, rng, tols]() {
      Rng r = rng;
      Fields phi = wb.has_onshell() ? wb.onshell_config(r.split("sol"))
                                    : frame_safe_config(wb, r.split("phi"));
      Fields xi = random_fields(wb.schema, r.split("xi"), 0.2, wb.sc.kmax);
      Dressing u = wb.dressing(phi);
      std::vector<Diffeo> subgroup;
      for (int t = 0; t < 2; ++t)
        subgroup.push_back(small_flow(wb.grid(), r.split("sub" + std::to_string(t)), 0.1));
      auto X = random_vf(wb.grid(), r.split("X"), 0.3, 2);
      auto Y = random_vf(wb.grid(), r.split("Y"), 0.25, 2);
      ResidualReport rep = residual_suite(*wb.lag, u, phi, subgroup,
                                          data_driven_reparam(wb.grid()), xi, X, Y, wb.sigma,
                                          wb.sc.gamma);
      return std::vector<ReportRow>{
          make_row("residual", "residual-reparametrization-tangent", 0, rep.reparam_tangent,
                   tols[0]),
          make_row("residual", "residual-bracket-relation", 0, rep.bracket_relation, tols[1]),
          make_row("residual", "residual-zero-charge", 0, rep.zero_charge, tols[2])};
    });
  }
}

}  // namespace detail

/// Worst density-covariance residual over a few fresh draws. This is the
/// admission gate: a density that fails it is outside the framework and no
/// identity suite below is meaningful.
inline double covariance_gate_residual(const Workbench& wb, Rng rng) {
  double worst = 0;
  for (int t = 0; t < 3; ++t) {
    Rng sub = rng.split("gate" + std::to_string(t));
    Fields phi = wb.random_config(sub.split("phi"));
    auto X = random_vf(wb.grid(), sub.split("x"), 0.5, 2);
    worst = std::max(worst, wb.lag->covariance_residual(phi, X));
  }
  return worst;
}

/// Run one suite, appending its rows. Seeds are split per suite, identity and
/// draw, so results do not depend on the worker count.
inline void run_suite(const std::string& name, const Workbench& wb, Rng root,
                      const RunOptions& opt, std::vector<ReportRow>& rows) {
  if (suite_needs_dressing(name) && !wb.has_dressing())
    throw config_error("suite '" + name + "' needs a dressing; scenario '" + wb.sc.name +
                       "' configures none");
  int draws = opt.draws > 0 ? opt.draws : wb.sc.draws;
  Rng suite_rng = root.split(name);
  std::vector<detail::SuiteJob> jobs;
  if (name == "morphism")
    detail::build_morphism(wb, suite_rng, draws, jobs);
  else if (name == "brackets")
    detail::build_brackets(wb, suite_rng, draws, jobs);
  else if (name == "pushforward")
    detail::build_pushforward(wb, suite_rng, draws, jobs);
  else if (name == "variational")
    detail::build_variational(wb, suite_rng, draws, jobs);
  else if (name == "cps")
    detail::build_cps(wb, suite_rng, draws, jobs);
  else if (name == "cocycle-condition")
    detail::build_cocycle_condition(wb, suite_rng, draws, jobs);
  else if (name == "cocycle-concrete")
    detail::build_cocycle_concrete(wb, suite_rng, draws, jobs);
  else if (name == "vertical")
    detail::build_vertical(wb, suite_rng, draws, jobs);
  else if (name == "dfm")
    detail::build_dfm(wb, suite_rng, draws, jobs);
  else if (name == "residual")
    detail::build_residual(wb, suite_rng, draws, jobs);
  else
    throw config_error("unknown suite '" + name + "'");

  std::vector<std::vector<ReportRow>> results;
  detail::run_jobs(jobs, resolve_threads(opt.threads), results);
  for (auto& batch : results)
    for (auto& row : batch) rows.push_back(std::move(row));
}

}  // namespace covphase
