#pragma once

// Figure experiments: configuration, sweep plans, dataset assembly, manifests and
// the convergence check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "comet/analytic.hpp"
#include "comet/dynamics.hpp"
#include "comet/errors.hpp"
#include "comet/homodyne.hpp"
#include "comet/models.hpp"
#include "comet/record.hpp"
#include "comet/spectral.hpp"
#include "comet/thermal.hpp"

#ifndef COMET_VERSION
#define COMET_VERSION "1.0.0"
#endif

namespace comet {

using Json = nlohmann::ordered_json;

inline constexpr const char* kLibraryVersion = COMET_VERSION;
inline constexpr double kConvergenceScale = 1.5;
inline constexpr double kConvergenceShift = 5e-3;

using PointSet = std::set<std::size_t>;

struct TaskOutput {
  std::vector<ExperimentRecord> records;
  std::vector<Table> tables;  // written verbatim, outside the curve schema
  Json notes = Json::object();
  std::map<std::string, int> truncations;
};

// A unit of work producing some points of one sweep. `only`, when given, restricts the
// output to those points; trajectory tasks then stop at the last one requested.
struct Task {
  std::string label;
  std::vector<std::size_t> points;
  std::size_t sweep_length = 0;
  bool truncated = true;
  std::function<TaskOutput(double n_max_scale, const PointSet* only)> run;
};

struct Plan {
  std::string experiment;
  Json config;
  Json parameters;
  std::vector<CurveSpec> curves;
  std::vector<Task> tasks;
  std::function<void(std::vector<ExperimentRecord>&, Json&)> finalize;
};

struct ConvergenceFlag {
  std::string curve;
  std::string column;
  std::size_t point = 0;
  double coordinate = 0.0;
  double value = 0.0;
  double rerun = 0.0;
  double shift = 0.0;
  std::string message;  // set when the rerun itself failed
};

struct ConvergenceReport {
  bool skipped = false;
  std::string note;
  std::size_t points_checked = 0;
  std::size_t values_checked = 0;
  std::vector<ConvergenceFlag> flags;

  bool ok() const { return flags.empty(); }

  Json to_json() const {
    Json j;
    j["status"] = skipped ? "skipped" : "checked";
    if (!note.empty()) j["note"] = note;
    if (skipped) return j;
    j["rerun_scale"] = kConvergenceScale;
    j["threshold"] = kConvergenceShift;
    j["points_checked"] = points_checked;
    j["values_checked"] = values_checked;
    j["flags"] = Json::array();
    for (const auto& f : flags) {
      Json e{{"curve", f.curve}, {"column", f.column}, {"point", f.point}, {"coordinate", f.coordinate}};
      if (f.message.empty()) {
        e["value"] = f.value;
        e["rerun"] = f.rerun;
        e["shift"] = f.shift;
      } else {
        e["error"] = f.message;
      }
      j["flags"].push_back(e);
    }
    return j;
  }
};

struct Dataset {
  std::string experiment;
  Json manifest;
  std::vector<Table> tables;
  std::vector<ExperimentRecord> records;
  ConvergenceReport convergence;

  const Table& table(const std::string& name) const {
    for (const auto& t : tables)
      if (t.name == name) return t;
    throw ConfigError("dataset " + experiment + " has no table " + name);
  }
};

namespace detail {

template <class Fn>
decltype(auto) with_context(const std::string& label, Fn&& fn) {
  try {
    return fn();
  } catch (const TruncationError& e) {
    throw TruncationError(label + ": " + e.what(), e.n_max(), e.tail());
  } catch (const BasisMismatch& e) {
    throw BasisMismatch(label + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(label + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(label + ": " + e.what());
  }
}

inline int scaled(int n_max, double scale) { return static_cast<int>(std::ceil(n_max * scale)); }

inline bool wanted(const PointSet* only, std::size_t point) { return only == nullptr || only->count(point) > 0; }

// Number of leading grid entries needed to cover `only`.
inline std::size_t prefix_length(const PointSet* only, std::size_t total) {
  return only == nullptr || only->empty() ? total : std::min(total, *only->rbegin() + 1);
}

inline std::string label_number(double x) { return format_double(x); }

// 10^{-j/ppd} for j = 0..J with 10^{-J/ppd} = lo.
inline std::vector<double> decade_grid(double lo, int per_decade) {
  if (!(lo > 0.0 && lo < 1.0)) throw ConfigError("one_minus_u_min must lie in (0, 1)");
  if (per_decade < 1) throw ConfigError("points_per_decade must be >= 1");
  const int count = static_cast<int>(std::lround(-std::log10(lo) * per_decade));
  std::vector<double> g;
  for (int j = 0; j <= count; ++j) g.push_back(std::pow(10.0, -static_cast<double>(j) / per_decade));
  return g;
}

inline std::vector<double> time_grid(double t_max, double dt) {
  if (!(dt > 0.0) || !(t_max >= dt)) throw ConfigError("time grid needs 0 < dt <= t_max");
  const auto count = static_cast<std::size_t>(std::lround(t_max / dt));
  std::vector<double> g;
  for (std::size_t i = 0; i <= count; ++i) g.push_back(static_cast<double>(i) * dt);
  return g;
}

template <class T>
std::vector<T> list(const Json& cfg, const char* key) {
  std::vector<T> out = cfg.at(key).get<std::vector<T>>();
  if (out.empty()) throw ConfigError(std::string(key) + " must not be empty");
  return out;
}

inline double positive(const Json& cfg, const char* key) {
  const double v = cfg.at(key).get<double>();
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(key) + " must be positive");
  return v;
}

inline int count(const Json& cfg, const char* key, int min = 0) {
  const int v = cfg.at(key).get<int>();
  if (v < min) throw ConfigError(std::string(key) + " must be >= " + std::to_string(min));
  return v;
}

inline ExperimentRecord record(const std::string& exp, const std::string& curve, std::size_t point, double coordinate,
                               const char* tag, std::map<std::string, double> obs, int n_max = 0, double tail = 0.0) {
  return {exp, curve, point, coordinate, tag, std::move(obs), n_max, tail};
}

}  // namespace detail

// Smallest n_max whose top-5% Fock tail of S(r)|0> stays below tol.
inline int squeezed_vacuum_n_max(double r, double tol, int floor = 20) {
  if (!(r >= 0.0) || !(tol > 0.0)) throw ConfigError("squeezed_vacuum_n_max: need r >= 0 and tol > 0");
  const double t2 = std::tanh(r) * std::tanh(r);
  auto tail_from = [&](Index start) {
    // p_{2m} = tanh^{2m} r (2m)! / (4^m (m!)^2 cosh r); the ratio of successive terms stays below t2
    double p = 1.0 / std::cosh(r), sum = 0.0;
    for (Index m = 0;; ++m) {
      if (2 * m >= start) {
        sum += p;
        if (p < 1e-20 * sum) return sum + p * t2 / (1.0 - t2);
      }
      p *= t2 * (2.0 * m + 1.0) / (2.0 * m + 2.0);
      if (p == 0.0) return sum;
    }
  };
  int n = floor;
  while (tail_from(TruncationSpec::tail_start(n + 1)) > tol) n = static_cast<int>(std::ceil(n * 1.1));
  return n;
}

namespace experiments {

// ---- SOC ground-state sweeps (fig1, fig3) ----

struct SocGroundPoint {
  BosonMoments moments;
  double gap = 0.0;
  double qfi = 0.0;
};

inline SocGroundPoint soc_ground_point(const SocParams& p, ModelKind kind, const TruncationSpec& trunc, bool with_qfi,
                                       double qfi_step) {
  const auto H = kind == ModelKind::Full ? soc_rabi_hamiltonian(p, trunc) : soc_effective_hamiltonian(p, trunc);
  const auto es = lowest_eigenpairs(H, 2);
  SocGroundPoint out;
  out.gap = es.values[1] - es.values[0];
  out.moments = boson_moments(StateVector::normalized(es.vectors.col(0), H.basis()), trunc);
  if (with_qfi) {
    const auto family = kind == ModelKind::Full ? soc_rabi_family(p, trunc) : soc_effective_family(p, trunc);
    out.qfi = qfi_fidelity(family, p.Omega, qfi_step).value;
  }
  return out;
}

// Effective: squeezed-vacuum tail. Full: the same estimate at the onset of the plateau,
// where the full model stops squeezing further.
inline int soc_auto_n_max(double Omega_ratio, double one_minus_u, ModelKind kind, double tail_tol) {
  double w = one_minus_u;
  if (kind == ModelKind::Full) w = std::max(w, 0.25 * std::pow(Omega_ratio, -2.0 / 3.0));
  const int n = squeezed_vacuum_n_max(-0.25 * std::log(w), 1e-2 * tail_tol);
  return kind == ModelKind::Full ? std::max(60, static_cast<int>(std::ceil(1.2 * n))) : n;
}

inline double soc_qfi_step(const SocParams& p) { return std::min(1e-4, 1e-3 * (1.0 - p.u())) * p.Omega; }

struct SocSweep {
  double Omega_ratio;
  std::vector<double> grid;
  int n_max_full;
  int n_max_effective;
  double tail_tol;
};

inline std::vector<Task> soc_ground_tasks(const std::string& exp, const SocSweep& sweep, bool fig1,
                                          const std::string& moments_curve) {
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < sweep.grid.size(); ++i) {
    for (ModelKind kind : {ModelKind::Full, ModelKind::Effective}) {
      const double w = sweep.grid[i];
      const int fixed = kind == ModelKind::Full ? sweep.n_max_full : sweep.n_max_effective;
      const std::string label = exp + " Omega/omega=" + detail::label_number(sweep.Omega_ratio) + " " +
                                model_tag(kind) + " 1-u=" + detail::label_number(w);
      Task t;
      t.label = label;
      t.points = {i};
      t.sweep_length = sweep.grid.size();
      t.run = [=](double scale, const PointSet*) {
        const int base = fixed > 0 ? fixed : soc_auto_n_max(sweep.Omega_ratio, w, kind, sweep.tail_tol);
        const int n = detail::scaled(base, scale);
        const auto p = SocParams::from_ratios(sweep.Omega_ratio, 1.0 - w);
        const auto r = soc_ground_point(p, kind, TruncationSpec{n, sweep.tail_tol}, fig1, soc_qfi_step(p));
        const char* tag = model_tag(kind);
        TaskOutput out;
        const double tail = r.moments.tail;
        if (fig1) {
          out.records.push_back(detail::record(exp, "n_mean", i, w, tag, {{"n_mean", r.moments.n_mean}}, n, tail));
          out.records.push_back(detail::record(exp, "qfi", i, w, tag, {{"qfi", r.qfi}}, n, tail));
          out.records.push_back(detail::record(exp, "gap", i, w, tag, {{"gap", r.gap}}, n, tail));
        } else {
          out.records.push_back(detail::record(exp, moments_curve, i, w, tag,
                                               {{"xx", 2.0 * r.moments.x2}, {"pp", 2.0 * r.moments.p2}}, n, tail));
        }
        out.truncations[label] = n;
        return out;
      };
      tasks.push_back(std::move(t));
    }
  }
  return tasks;
}

inline Json fig1_defaults(bool full_scale) {
  return {{"Omega_over_omega", full_scale ? 1e6 : 1e4},
          {"one_minus_u_min", full_scale ? 1e-6 : 1e-5},
          {"points_per_decade", 8},
          {"n_max_full", 0},
          {"n_max_effective", 0}};
}

inline Plan fig1_plan(const Json& cfg) {
  Plan plan{"fig1", cfg, {}, {}, {}, {}};
  SocSweep s{detail::positive(cfg, "Omega_over_omega"),
             detail::decade_grid(cfg.at("one_minus_u_min").get<double>(), detail::count(cfg, "points_per_decade", 1)),
             detail::count(cfg, "n_max_full"), detail::count(cfg, "n_max_effective"), cfg.at("tail_tol").get<double>()};
  plan.parameters = {{"Omega_over_omega", s.Omega_ratio},
                     {"one_minus_u", s.grid},
                     {"validity_margin", "(1 - u) (Omega/omega)^(2/3)"},
                     {"qfi_parameter", "Omega at fixed k"},
                     {"qfi_step", "min(1e-4, 1e-3 (1 - u)) Omega"}};
  for (const char* obs : {"n_mean", "qfi", "gap"})
    plan.curves.push_back({obs, "one_minus_u", {column_name(obs, "full"), column_name(obs, "effective")}});
  plan.tasks = soc_ground_tasks("fig1", s, true, "");
  return plan;
}

inline Json fig3_defaults(bool full_scale) {
  return {{"Omega_over_omega", Json::array({1e3, 1e4})},
          {"one_minus_u_min", full_scale ? 1e-6 : 1e-5},
          {"points_per_decade", 8},
          {"n_max_full", 0},
          {"n_max_effective", 0}};
}

inline Plan fig3_plan(const Json& cfg) {
  Plan plan{"fig3", cfg, {}, {}, {}, {}};
  const auto grid = detail::decade_grid(cfg.at("one_minus_u_min").get<double>(), detail::count(cfg, "points_per_decade", 1));
  plan.parameters = {{"one_minus_u", grid}, {"observables", "xx = 2 <X^2>, pp = 2 <P^2> (vacuum = 1)"}};
  for (double ratio : detail::list<double>(cfg, "Omega_over_omega")) {
    if (!(ratio > 0.0)) throw ConfigError("Omega_over_omega entries must be positive");
    const std::string curve = "moments_Omega" + detail::label_number(ratio);
    SocSweep s{ratio, grid, detail::count(cfg, "n_max_full"), detail::count(cfg, "n_max_effective"),
               cfg.at("tail_tol").get<double>()};
    plan.curves.push_back({curve, "one_minus_u", {"xx_full", "xx_effective", "pp_full", "pp_effective"}});
    for (auto& t : soc_ground_tasks("fig3", s, false, curve)) plan.tasks.push_back(std::move(t));
  }
  plan.parameters["Omega_over_omega"] = cfg.at("Omega_over_omega");
  return plan;
}

// ---- crystal quench (fig2, fig4) ----

struct QuenchRun {
  QuenchTrajectory trajectory;
  std::vector<QfiEstimate> qfi;
};

inline QuenchRun run_full_quench(const CrystalParams& p, const std::vector<double>& times, const TruncationSpec& trunc,
                                 bool with_qfi) {
  QuenchRun out;
  out.trajectory = quench_trajectory(p, times, trunc, ModelKind::Full);
  if (with_qfi) out.qfi = evolved_qfi_series(dicke_family(p, trunc), crystal_initial_state(p, trunc), p.delta, times);
  return out;
}

inline CrystalParams crystal_at_half_critical(double B_over_delta, int n_ions) {
  // B = B_c / 2 means g^2 = 2 B delta
  return CrystalParams::from_ratios(std::sqrt(2.0 * B_over_delta), B_over_delta, n_ions);
}

inline Json crystal_parameters(const CrystalParams& p) {
  return {{"g_over_delta", p.g / p.delta},
          {"B_over_delta", p.B / p.delta},
          {"B_over_B_c", p.B / p.B_c()},
          {"n_ions", p.n_ions},
          {"NB_over_delta", p.n_ions * p.B / p.delta},
          {"gs_excitation_cap", p.B <= p.B_c() ? gs_excitation_cap(p) : 0.0}};
}

inline Json fig2_defaults(bool full_scale) {
  return {{"g_over_delta", full_scale ? 80.0 : 20.0},
          {"B_over_delta", full_scale ? 3200.0 : 200.0},
          {"n_ions", 1},
          {"t_max", full_scale ? 2.5 : 6.5},
          {"dt", 0.05},
          {"n_max_full", full_scale ? 1200 : 500}};
}

inline Plan fig2_plan(const Json& cfg) {
  Plan plan{"fig2", cfg, {}, {}, {}, {}};
  const auto p = CrystalParams::from_ratios(detail::positive(cfg, "g_over_delta"), detail::positive(cfg, "B_over_delta"),
                                            detail::count(cfg, "n_ions", 1));
  const auto times = detail::time_grid(detail::positive(cfg, "t_max"), detail::positive(cfg, "dt"));
  const int n_max = detail::count(cfg, "n_max_full", 1);
  const double tail_tol = cfg.at("tail_tol").get<double>();
  const double s_final = std::sinh(p.delta * times.back());
  const double norm = 2.0 * std::pow(s_final, 4) / (p.delta * p.delta);
  plan.parameters = crystal_parameters(p);
  plan.parameters["times"] = times;
  plan.parameters["qfi"] = "delta^2 QFI for delta";
  plan.parameters["qfi_normalization"] = norm;
  plan.parameters["qfi_normalization_rule"] = "2 sinh^4(delta t_final) / delta^2 at the last grid time";
  plan.curves = {{"x2", "delta_t", {"x2_full", "x2_effective"}},
                 {"n_mean", "delta_t", {"n_mean_full", "n_mean_effective"}},
                 {"qfi", "delta_t", {"qfi_full", "qfi_effective", "qfi_normalized_full", "qfi_normalized_effective"}}};
  const double d2 = p.delta * p.delta;

  Task full;
  full.label = "fig2 full";
  full.sweep_length = times.size();
  for (std::size_t i = 0; i < times.size(); ++i) full.points.push_back(i);
  full.run = [=](double scale, const PointSet* only) {
    const int n = detail::scaled(n_max, scale);
    const std::vector<double> used(times.begin(), times.begin() + detail::prefix_length(only, times.size()));
    const auto r = run_full_quench(p, used, TruncationSpec{n, tail_tol}, true);
    TaskOutput out;
    for (std::size_t i = 0; i < used.size(); ++i) {
      if (!detail::wanted(only, i)) continue;
      const auto& pt = r.trajectory.points[i];
      const double q = d2 * r.qfi[i].value;
      out.records.push_back(detail::record("fig2", "x2", i, used[i], "full", {{"x2", pt.x2}}, n, pt.tail));
      out.records.push_back(detail::record("fig2", "n_mean", i, used[i], "full", {{"n_mean", pt.n_mean}}, n, pt.tail));
      out.records.push_back(detail::record("fig2", "qfi", i, used[i], "full", {{"qfi", q}, {"qfi_normalized", q / (d2 * norm)}},
                                           n, pt.tail));
    }
    out.truncations["full"] = n;
    if (r.trajectory.breakdown_time) out.notes["breakdown_time_full"] = *r.trajectory.breakdown_time;
    return out;
  };

  Task eff;
  eff.label = "fig2 effective";
  eff.sweep_length = times.size();
  eff.points = full.points;
  eff.truncated = false;
  eff.run = [=](double, const PointSet* only) {
    const TruncationSpec small{8, 0.5};
    const auto vac = DensityState::pure(vacuum(small));
    TaskOutput out;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (!detail::wanted(only, i)) continue;
      const auto c = effective_covariance_evolution(p, times[i]);
      // the local generator is quadratic, so on the vacuum it only reaches |2>
      const double q = d2 * thermal_qfi_generator(vac, local_generator_closed_form(p, times[i], small));
      out.records.push_back(detail::record("fig2", "x2", i, times[i], "effective", {{"x2", c.xx}}));
      out.records.push_back(detail::record("fig2", "n_mean", i, times[i], "effective", {{"n_mean", c.n_mean()}}));
      out.records.push_back(
          detail::record("fig2", "qfi", i, times[i], "effective", {{"qfi", q}, {"qfi_normalized", q / (d2 * norm)}}));
    }
    return out;
  };
  plan.tasks = {full, eff};
  return plan;
}

struct Departure {
  double time = 0.0;
  bool censored = false;  // still inside the band at the end of the window
};

// Smallest grid time t >= t_min after which |n / sinh^2(t) - 1| > tol at every later grid time.
inline Departure persistent_departure(const std::vector<double>& t, const std::vector<double>& n, double t_min, double tol) {
  if (t.size() != n.size()) throw ConfigError("persistent_departure: length mismatch");
  std::size_t first = t.size();
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] >= t_min && t[i] > 0.0) {
      first = i;
      break;
    }
  if (first == t.size()) throw ConfigError("persistent_departure: no grid time at or after t_min");
  std::optional<std::size_t> last_inside;
  for (std::size_t i = first; i < t.size(); ++i) {
    const double s = std::sinh(t[i]);
    if (std::abs(n[i] / (s * s) - 1.0) <= tol) last_inside = i;
  }
  if (!last_inside) return {t[first], false};
  if (*last_inside + 1 == t.size()) return {t.back(), true};
  return {t[*last_inside + 1], false};
}

inline Json fig4_defaults(bool) {
  return {{"B_over_delta", 18.75},
          {"n_ions", Json::array({1, 10, 100})},
          {"n_max_b", Json::array({120, 250, 800})},
          {"panel_a_NB_over_delta", Json::array({0.1875, 18.75, 1875.0})},
          {"n_max_a", Json::array({40, 120, 800})},
          {"t_max", 2.5},
          {"dt", 0.05},
          {"departure_t_min", 0.5},
          {"departure_tolerance", 0.1}};
}

inline Plan fig4_plan(const Json& cfg) {
  Plan plan{"fig4", cfg, {}, {}, {}, {}};
  const double B = detail::positive(cfg, "B_over_delta");
  const auto ions = detail::list<int>(cfg, "n_ions");
  const auto nb = detail::list<int>(cfg, "n_max_b");
  const auto NB_a = detail::list<double>(cfg, "panel_a_NB_over_delta");
  const auto na = detail::list<int>(cfg, "n_max_a");
  if (nb.size() != ions.size()) throw ConfigError("n_max_b needs one entry per n_ions entry");
  if (na.size() != NB_a.size()) throw ConfigError("n_max_a needs one entry per panel_a_NB_over_delta entry");
  const auto times = detail::time_grid(detail::positive(cfg, "t_max"), detail::positive(cfg, "dt"));
  const double t_min = cfg.at("departure_t_min").get<double>();
  const double tol = detail::positive(cfg, "departure_tolerance");
  const double tail_tol = cfg.at("tail_tol").get<double>();

  struct Series {
    std::string panel;
    std::string observable;
    CrystalParams p;
    int n_max;
    double NB;
  };
  std::vector<Series> series;
  for (std::size_t k = 0; k < ions.size(); ++k) {
    const auto p = crystal_at_half_critical(B, ions[k]);
    const double NB = ions[k] * B;
    series.push_back({"panel_b", "n_mean_NB" + detail::label_number(NB), p, nb[k], NB});
  }
  for (std::size_t k = 0; k < NB_a.size(); ++k) {
    if (!(NB_a[k] > 0.0)) throw ConfigError("panel_a_NB_over_delta entries must be positive");
    series.push_back({"panel_a", "n_mean_NB" + detail::label_number(NB_a[k]), crystal_at_half_critical(NB_a[k], 1), na[k],
                      NB_a[k]});
  }
  plan.parameters = {{"B_over_B_c", 0.5}, {"times", times}, {"series", Json::array()}};
  plan.parameters["departure_rule"] =
      "smallest grid time >= departure_t_min after which |n_full / sinh^2(delta t) - 1| > departure_tolerance at all "
      "later grid times; censored = 1 when the last grid time is still inside the band";
  for (const auto& s : series) {
    auto j = crystal_parameters(s.p);
    j["panel"] = s.panel;
    plan.parameters["series"].push_back(j);
  }
  for (const char* panel : {"panel_a", "panel_b"}) {
    CurveSpec c{panel, "delta_t", {}};
    for (const auto& s : series)
      if (s.panel == panel) c.columns.push_back(column_name(s.observable, "full"));
    c.columns.push_back("n_mean_effective");
    plan.curves.push_back(c);
  }
  plan.curves.push_back({"departure_a", "NB_over_delta", {"departure_full", "censored_full"}});
  plan.curves.push_back({"departure_b", "NB_over_delta", {"departure_full", "censored_full"}});

  for (const auto& s : series) {
    Task t;
    t.label = "fig4 " + s.panel + " N=" + std::to_string(s.p.n_ions) + " NB/delta=" + detail::label_number(s.NB);
    t.sweep_length = times.size();
    for (std::size_t i = 0; i < times.size(); ++i) t.points.push_back(i);
    t.run = [=, label = t.label](double scale, const PointSet* only) {
      const int n = detail::scaled(s.n_max, scale);
      const std::vector<double> used(times.begin(), times.begin() + detail::prefix_length(only, times.size()));
      const auto r = run_full_quench(s.p, used, TruncationSpec{n, tail_tol}, false);
      TaskOutput out;
      for (std::size_t i = 0; i < used.size(); ++i)
        if (detail::wanted(only, i))
          out.records.push_back(detail::record("fig4", s.panel, i, used[i], "full",
                                               {{s.observable, r.trajectory.points[i].n_mean}}, n,
                                               r.trajectory.points[i].tail));
      out.truncations[label] = n;
      return out;
    };
    plan.tasks.push_back(std::move(t));
  }
  Task eff;
  eff.label = "fig4 effective";
  eff.sweep_length = times.size();
  eff.points = plan.tasks.front().points;
  eff.truncated = false;
  eff.run = [=](double, const PointSet* only) {
    const auto p = crystal_at_half_critical(B, 1);
    TaskOutput out;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (!detail::wanted(only, i)) continue;
      const double n = effective_covariance_evolution(p, times[i]).n_mean();
      for (const char* panel : {"panel_a", "panel_b"})
        out.records.push_back(detail::record("fig4", panel, i, times[i], "effective", {{"n_mean", n}}));
    }
    return out;
  };
  plan.tasks.push_back(std::move(eff));

  plan.finalize = [=](std::vector<ExperimentRecord>& records, Json& notes) {
    std::map<std::string, std::size_t> point_in_panel;
    Json dep = Json::array();
    for (const auto& s : series) {
      std::vector<double> t, n;
      int n_max = 0;
      double tail = 0.0;
      for (const auto& r : records) {
        if (r.curve != s.panel || r.model_tag != "full" || !r.observables.count(s.observable)) continue;
        t.push_back(r.sweep_coordinate);
        n.push_back(r.observables.at(s.observable));
        n_max = std::max(n_max, r.n_max_used);
        tail = std::max(tail, r.tail);
      }
      const auto d = persistent_departure(t, n, t_min, tol);
      const std::string curve = s.panel == "panel_a" ? "departure_a" : "departure_b";
      const std::size_t point = point_in_panel[curve]++;
      records.push_back(detail::record("fig4", curve, point, s.NB, "full",
                                       {{"departure", d.time}, {"censored", d.censored ? 1.0 : 0.0}}, n_max, tail));
      dep.push_back({{"panel", s.panel}, {"NB_over_delta", s.NB}, {"departure", d.time}, {"censored", d.censored}});
    }
    notes["departures"] = dep;
  };
  return plan;
}

// ---- thermal (fig5, fig6) ----

// Fock cutoff for a Bose state at freq * beta = x: q^{0.95 n} well below the tail tolerance.
inline int bose_frame_n_max(double freq_beta) { return std::max(40, static_cast<int>(std::ceil(30.0 / freq_beta))); }

inline std::string beta_label(const char* prefix, double x) { return std::string(prefix) + detail::label_number(x); }

// Frozen Bose populations (from k = 0) on the Rabi eigenstates at one point, for several temperatures.
struct SocThermalFull {
  std::vector<ParametricQfi> qfi;
};

inline SocThermalFull soc_full_thermal(const SocParams& p, const TruncationSpec& trunc, const std::vector<double>& omega_beta,
                                       double floor) {
  const auto family = soc_rabi_family(p, trunc);
  const auto es = dense_eigensystem(family(p.Omega));
  const auto dH = central_derivative(family, p.Omega, default_step(p.Omega));
  SocThermalFull out;
  for (double wb : omega_beta) {
    RealVector pops = bose_populations(p.omega * wb, floor);
    if (pops.size() > es.values.size()) pops = pops.head(es.values.size()) / pops.head(es.values.size()).sum();
    out.qfi.push_back(frozen_population_qfi(es, dH, pops));
  }
  return out;
}

inline Json fig5_defaults(bool full_scale) {
  return {{"Omega_over_omega", full_scale ? 1e4 : 1e3},
          {"one_minus_u_min", 1e-5},
          {"points_per_decade", 4},
          {"omega_beta", Json::array({2.0, 0.3, 0.1})},
          {"full_omega_beta", Json::array({2.0, 1.0, 0.5})},
          {"n_max_full", full_scale ? 1500 : 500},
          {"population_floor", 1e-8},
          {"reversal_one_minus_u", 1e-5},
          {"reversal_omega_beta", Json::array({4.0, 2.0, 1.0, 0.5})},
          {"plateau_log10_omega_beta", Json::array({-1.5, 1.0})},
          {"plateau_points_per_decade", 4}};
}

inline Plan fig5_plan(const Json& cfg) {
  Plan plan{"fig5", cfg, {}, {}, {}, {}};
  const double ratio = detail::positive(cfg, "Omega_over_omega");
  const auto grid = detail::decade_grid(cfg.at("one_minus_u_min").get<double>(), detail::count(cfg, "points_per_decade", 1));
  const auto wb_eff = detail::list<double>(cfg, "omega_beta");
  const auto wb_full = detail::list<double>(cfg, "full_omega_beta");
  const auto wb_rev = detail::list<double>(cfg, "reversal_omega_beta");
  for (const auto* l : {&wb_eff, &wb_full, &wb_rev})
    for (double x : *l)
      if (!(x > 0.0)) throw ConfigError("omega_beta entries must be positive");
  const int n_max = detail::count(cfg, "n_max_full", 1);
  const double floor = detail::positive(cfg, "population_floor");
  const double w_rev = detail::positive(cfg, "reversal_one_minus_u");
  if (!(w_rev < 1.0)) throw ConfigError("reversal_one_minus_u must lie in (0, 1)");
  const auto plateau_range = detail::list<double>(cfg, "plateau_log10_omega_beta");
  if (plateau_range.size() != 2 || !(plateau_range[1] > plateau_range[0]))
    throw ConfigError("plateau_log10_omega_beta must be [lo, hi] with lo < hi");
  const int ppd = detail::count(cfg, "plateau_points_per_decade", 1);
  std::vector<double> plateau_grid;
  const int steps = static_cast<int>(std::lround((plateau_range[1] - plateau_range[0]) * ppd));
  for (int j = 0; j <= steps; ++j) plateau_grid.push_back(std::pow(10.0, plateau_range[0] + static_cast<double>(j) / ppd));
  const double tail_tol = cfg.at("tail_tol").get<double>();

  plan.parameters = {{"Omega_over_omega", ratio},
                     {"one_minus_u", grid},
                     {"omega_beta_effective", wb_eff},
                     {"omega_beta_full", wb_full},
                     {"reversal_one_minus_u", w_rev},
                     {"reversal_omega_beta", wb_rev},
                     {"plateau_omega_beta", plateau_grid},
                     {"population_floor", floor},
                     {"scenario", "Bose populations of the k = 0 Hamiltonian frozen onto the eigenstates at k, energy order"}};

  CurveSpec panel{"panel_a", "one_minus_u", {}};
  for (double x : wb_full) panel.columns.push_back(column_name(beta_label("qfi_wb", x), "full"));
  for (double x : wb_eff) panel.columns.push_back(column_name(beta_label("qfi_wb", x), "effective"));
  plan.curves = {panel,
                 {"reversal", "omega_beta", {"qfi_full", "qfi_effective"}},
                 {"plateau", "omega_beta", {"qfi_effective", "qfi_analytic"}}};

  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double w = grid[i];
    Task full;
    full.label = "fig5 full 1-u=" + detail::label_number(w);
    full.points = {i};
    full.sweep_length = grid.size();
    full.run = [=, label = full.label](double scale, const PointSet*) {
      const int n = detail::scaled(n_max, scale);
      const auto p = SocParams::from_ratios(ratio, 1.0 - w);
      const auto r = soc_full_thermal(p, TruncationSpec{n, tail_tol}, wb_full, floor);
      std::map<std::string, double> obs;
      double tail = 0.0;
      for (std::size_t k = 0; k < wb_full.size(); ++k) {
        obs[beta_label("qfi_wb", wb_full[k])] = r.qfi[k].value;
        tail = std::max(tail, r.qfi[k].tail);
      }
      TaskOutput out;
      out.records.push_back(detail::record("fig5", "panel_a", i, w, "full", obs, n, tail));
      out.truncations[label] = n;
      return out;
    };
    plan.tasks.push_back(std::move(full));

    Task eff;
    eff.label = "fig5 effective 1-u=" + detail::label_number(w);
    eff.points = {i};
    eff.sweep_length = grid.size();
    eff.run = [=](double scale, const PointSet*) {
      const auto p = SocParams::from_ratios(ratio, 1.0 - w);
      std::map<std::string, double> obs;
      int n_used = 0;
      for (double x : wb_eff) {
        const int n = detail::scaled(bose_frame_n_max(x), scale);
        n_used = std::max(n_used, n);
        obs[beta_label("qfi_wb", x)] = soc_effective_thermal_qfi(p, x, TruncationSpec{n, tail_tol});
      }
      TaskOutput out;
      out.records.push_back(detail::record("fig5", "panel_a", i, w, "effective", obs, n_used));
      return out;
    };
    plan.tasks.push_back(std::move(eff));
  }

  std::vector<std::size_t> rev_points;
  for (std::size_t k = 0; k < wb_rev.size(); ++k) rev_points.push_back(k);
  Task rev_full;
  rev_full.label = "fig5 reversal full";
  rev_full.points = rev_points;
  rev_full.sweep_length = wb_rev.size();
  rev_full.run = [=](double scale, const PointSet* only) {
    const int n = detail::scaled(n_max, scale);
    const auto p = SocParams::from_ratios(ratio, 1.0 - w_rev);
    const auto r = soc_full_thermal(p, TruncationSpec{n, tail_tol}, wb_rev, floor);
    TaskOutput out;
    for (std::size_t k = 0; k < wb_rev.size(); ++k)
      if (detail::wanted(only, k))
        out.records.push_back(
            detail::record("fig5", "reversal", k, wb_rev[k], "full", {{"qfi", r.qfi[k].value}}, n, r.qfi[k].tail));
    out.truncations["reversal full"] = n;
    return out;
  };
  Task rev_eff;
  rev_eff.label = "fig5 reversal effective";
  rev_eff.points = rev_points;
  rev_eff.sweep_length = wb_rev.size();
  rev_eff.run = [=](double scale, const PointSet* only) {
    const auto p = SocParams::from_ratios(ratio, 1.0 - w_rev);
    TaskOutput out;
    for (std::size_t k = 0; k < wb_rev.size(); ++k) {
      if (!detail::wanted(only, k)) continue;
      const int n = detail::scaled(bose_frame_n_max(wb_rev[k]), scale);
      out.records.push_back(detail::record("fig5", "reversal", k, wb_rev[k], "effective",
                                           {{"qfi", soc_effective_thermal_qfi(p, wb_rev[k], TruncationSpec{n, tail_tol})}}, n));
    }
    return out;
  };
  Task plateau;
  plateau.label = "fig5 plateau";
  plateau.sweep_length = plateau_grid.size();
  for (std::size_t k = 0; k < plateau_grid.size(); ++k) plateau.points.push_back(k);
  plateau.run = [=](double scale, const PointSet* only) {
    const auto p = SocParams::from_ratios(ratio, 1.0 - w_rev);
    TaskOutput out;
    for (std::size_t k = 0; k < plateau_grid.size(); ++k) {
      if (!detail::wanted(only, k)) continue;
      const double x = plateau_grid[k];
      const int n = detail::scaled(bose_frame_n_max(x), scale);
      out.records.push_back(detail::record("fig5", "plateau", k, x, "effective",
                                           {{"qfi", soc_effective_thermal_qfi(p, x, TruncationSpec{n, tail_tol})}}, n));
      out.records.push_back(
          detail::record("fig5", "plateau", k, x, "analytic", {{"qfi", soc_effective_thermal_qfi_closed_form(p, x)}}));
    }
    return out;
  };
  plan.tasks.push_back(std::move(rev_full));
  plan.tasks.push_back(std::move(rev_eff));
  plan.tasks.push_back(std::move(plateau));
  return plan;
}

inline Json fig6_defaults(bool) {
  return {{"g_over_delta", 20.0},
          {"B_over_delta", 200.0},
          {"n_ions", 1},
          {"delta_beta", Json::array({2.0, 1.0, 0.5})},
          {"t_max", 4.0},
          {"dt", 0.25},
          {"n_max_full", 500},
          {"population_floor", 1e-8}};
}

inline Plan fig6_plan(const Json& cfg) {
  Plan plan{"fig6", cfg, {}, {}, {}, {}};
  const auto p = CrystalParams::from_ratios(detail::positive(cfg, "g_over_delta"), detail::positive(cfg, "B_over_delta"),
                                            detail::count(cfg, "n_ions", 1));
  const auto betas = detail::list<double>(cfg, "delta_beta");
  for (double x : betas)
    if (!(x > 0.0)) throw ConfigError("delta_beta entries must be positive");
  const auto times = detail::time_grid(detail::positive(cfg, "t_max"), detail::positive(cfg, "dt"));
  const int n_max = detail::count(cfg, "n_max_full", 1);
  const double floor = detail::positive(cfg, "population_floor");
  const double tail_tol = cfg.at("tail_tol").get<double>();
  const bool half_critical = std::abs(p.B - 0.5 * p.B_c()) <= 1e-12 * p.B_c();
  plan.parameters = crystal_parameters(p);
  plan.parameters["delta_beta"] = betas;
  plan.parameters["times"] = times;
  plan.parameters["population_floor"] = floor;
  plan.parameters["initial_state"] = "Bose(delta beta) boson state x lowest-Sx spin state";
  CurveSpec curve{"qfi", "delta_t", {}};
  for (double x : betas) curve.columns.push_back(column_name(beta_label("qfi_db", x), "full"));
  for (double x : betas) curve.columns.push_back(column_name(beta_label("qfi_db", x), "effective"));
  if (half_critical)
    for (double x : betas) curve.columns.push_back(column_name(beta_label("qfi_db", x), "analytic"));
  plan.curves = {curve};

  std::vector<std::size_t> points;
  for (std::size_t i = 0; i < times.size(); ++i) points.push_back(i);
  for (double db : betas) {
    const std::string obs = beta_label("qfi_db", db);
    Task full;
    full.label = "fig6 full delta_beta=" + detail::label_number(db);
    full.points = points;
    full.sweep_length = times.size();
    full.run = [=, label = full.label](double scale, const PointSet* only) {
      const int n = detail::scaled(n_max, scale);
      const TruncationSpec trunc{n, tail_tol};
      const std::vector<double> used(times.begin(), times.begin() + detail::prefix_length(only, times.size()));
      const auto rho0 = tensor(bose_state(trunc, db, ThermalOptions{floor}), lowest_sx_state(p.n_ions));
      const auto family = dicke_family(p, trunc);
      const auto qfi = thermal_evolved_qfi_spectral(dense_eigensystem(family(p.delta)),
                                                    central_derivative(family, p.delta, default_step(p.delta)), rho0, used);
      TaskOutput out;
      for (std::size_t i = 0; i < used.size(); ++i)
        if (detail::wanted(only, i))
          out.records.push_back(detail::record("fig6", "qfi", i, used[i], "full", {{obs, qfi[i].value}}, n, qfi[i].tail));
      out.truncations[label] = n;
      return out;
    };
    plan.tasks.push_back(std::move(full));

    Task eff;
    eff.label = "fig6 effective delta_beta=" + detail::label_number(db);
    eff.points = points;
    eff.sweep_length = times.size();
    eff.run = [=](double scale, const PointSet* only) {
      const int n = detail::scaled(bose_frame_n_max(db), scale);
      const TruncationSpec trunc{n, tail_tol};
      TaskOutput out;
      for (std::size_t i = 0; i < times.size(); ++i) {
        if (!detail::wanted(only, i)) continue;
        out.records.push_back(detail::record("fig6", "qfi", i, times[i], "effective",
                                             {{obs, crystal_effective_thermal_qfi(p, times[i], db, trunc)}}, n));
        if (half_critical)
          out.records.push_back(detail::record("fig6", "qfi", i, times[i], "analytic",
                                               {{obs, crystal_effective_thermal_qfi_closed_form(p, times[i], db)}}));
      }
      return out;
    };
    plan.tasks.push_back(std::move(eff));
  }
  return plan;
}

// ---- homodyne ----

inline Json homodyne_defaults(bool) {
  return {{"g_over_delta", 20.0},
          {"B_over_delta", 200.0},
          {"n_ions", 1},
          {"t_quench", 1.5},
          {"n_max", 300},
          {"angles", 32},
          {"husimi_radius", 6.0},
          {"husimi_points", 61},
          {"quadrature_half_width", 16.0},
          {"quadrature_points", 321}};
}

inline Table husimi_table(const std::string& stage, const std::vector<cplx>& alphas, const std::vector<double>& q) {
  Table t{"husimi_" + stage, {"re_alpha", "im_alpha", "Q"}, {}};
  for (std::size_t i = 0; i < alphas.size(); ++i) t.rows.push_back({alphas[i].real(), alphas[i].imag(), q[i]});
  return t;
}

inline Plan homodyne_plan(const Json& cfg) {
  Plan plan{"homodyne", cfg, {}, {}, {}, {}};
  const auto p = CrystalParams::from_ratios(detail::positive(cfg, "g_over_delta"), detail::positive(cfg, "B_over_delta"),
                                            detail::count(cfg, "n_ions", 1));
  const double t_q = detail::positive(cfg, "t_quench");
  const int n_max = detail::count(cfg, "n_max", 1);
  const int angles = detail::count(cfg, "angles", 2);
  const double radius = detail::positive(cfg, "husimi_radius");
  const int h_points = detail::count(cfg, "husimi_points", 2);
  const double half_width = detail::positive(cfg, "quadrature_half_width");
  const int q_points = detail::count(cfg, "quadrature_points", 2);
  const double tail_tol = cfg.at("tail_tol").get<double>();
  plan.parameters = crystal_parameters(p);
  plan.parameters["t_quench"] = t_q;
  plan.parameters["state"] = "boson reduced density after the full-model quench from vacuum x lowest-Sx";
  plan.parameters["rotation"] = "free evolution under delta a^dag a for t = theta / delta; X readout then gives Q(theta)";
  plan.parameters["stages"] = {{"initial", "vacuum"},
                               {"final", "quenched state, no rotation"},
                               {"x_narrow", "rotated by theta_star: narrow quadrature along Re alpha"},
                               {"p_narrow", "rotated by theta_star + pi/2: narrow quadrature along Im alpha"}};
  plan.curves = {{"quadrature_variance", "theta", {"variance_full", "readout_variance_full"}},
                 {"distributions", "q", {"density_initial_full", "density_final_full", "density_xnarrow_full", "density_pnarrow_full"}}};

  Task task;
  task.label = "homodyne";
  task.sweep_length = static_cast<std::size_t>(std::max(angles, q_points));
  for (std::size_t i = 0; i < task.sweep_length; ++i) task.points.push_back(i);
  task.run = [=](double scale, const PointSet* only) {
    const int n = detail::scaled(n_max, scale);
    const TruncationSpec trunc{n, tail_tol};
    const auto psi = evolve(dicke_hamiltonian(p, trunc), crystal_initial_state(p, trunc), t_q);
    const double tail = boson_moments(psi, trunc).tail;
    const DenseMatrix rho = boson_reduced_density(psi);
    const auto choice = optimal_rotation_angle(rho);
    const double theta_x = choice.theta;
    const double theta_p = std::fmod(choice.theta + kPi / 2, kPi);
    const auto vac = vacuum(trunc).amplitudes();
    const DenseMatrix rho0 = vac * vac.adjoint();
    const std::map<std::string, DenseMatrix> stages{{"initial", rho0},
                                                    {"final", rho},
                                                    {"x_narrow", rotate_density(rho, theta_x)},
                                                    {"p_narrow", rotate_density(rho, theta_p)}};
    TaskOutput out;
    double var_max = 0.0;
    for (int k = 0; k < angles; ++k) {
      const double th = kPi * k / angles;
      const double v = generalized_quadrature_moments(rho, th).variance();
      var_max = std::max(var_max, v);
      if (!detail::wanted(only, k)) continue;
      const double readout = generalized_quadrature_moments(rotate_density(rho, th), 0.0).variance();
      out.records.push_back(detail::record("homodyne", "quadrature_variance", k, th, "full",
                                           {{"variance", v}, {"readout_variance", readout}}, n, tail));
    }
    const auto grid = uniform_grid(-half_width, half_width, q_points);
    std::map<std::string, QuadratureDistribution> dist;
    for (const auto& [stage, r] : stages) dist.emplace(stage, quadrature_distribution(r, 0.0, grid));
    for (int i = 0; i < q_points; ++i) {
      if (!detail::wanted(only, i)) continue;
      out.records.push_back(detail::record("homodyne", "distributions", i, grid[i], "full",
                                           {{"density_initial", dist.at("initial").density[i]},
                                            {"density_final", dist.at("final").density[i]},
                                            {"density_xnarrow", dist.at("x_narrow").density[i]},
                                            {"density_pnarrow", dist.at("p_narrow").density[i]}},
                                           n, tail));
    }
    if (only == nullptr) {
      const auto alphas = square_alpha_grid(radius, h_points);
      for (const char* stage : {"initial", "final", "x_narrow", "p_narrow"})
        out.tables.push_back(husimi_table(stage, alphas, husimi_grid(stages.at(stage), alphas)));
      out.notes["theta_star"] = choice.theta;
      out.notes["theta_x_narrow"] = theta_x;
      out.notes["theta_p_narrow"] = theta_p;
      out.notes["wait_time_x_narrow"] = wait_time(theta_x, p.delta);
      out.notes["wait_time_p_narrow"] = wait_time(theta_p, p.delta);
      out.notes["variance_min"] = choice.variance;
      out.notes["variance_max"] = var_max;
      out.notes["flat"] = choice.flat;
      Json masses;
      for (const auto& [stage, d] : dist) masses[stage] = d.mass;
      out.notes["distribution_mass"] = masses;
    }
    out.truncations["full"] = n;
    return out;
  };
  plan.tasks = {task};
  return plan;
}

// ---- closed forms ----

inline Json analytic_defaults(bool) {
  return {{"Omega_over_omega", 1e4}, {"gamma", 0.01}, {"x_min", 0.25}, {"x_max", 6.0}, {"x_step", 0.25}};
}

inline Plan analytic_plan(const Json& cfg) {
  Plan plan{"analytic-table", cfg, {}, {}, {}, {}};
  const double ratio = detail::positive(cfg, "Omega_over_omega");
  const double gamma = detail::positive(cfg, "gamma");
  const double x0 = detail::positive(cfg, "x_min"), x1 = detail::positive(cfg, "x_max"), dx = detail::positive(cfg, "x_step");
  if (!(x1 >= x0)) throw ConfigError("x_max must be >= x_min");
  std::vector<double> xs;
  const auto steps = static_cast<int>(std::lround((x1 - x0) / dx));
  for (int j = 0; j <= steps; ++j) xs.push_back(x0 + j * dx);
  if (!(gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  plan.parameters = {{"Omega_over_omega", ratio},
                     {"gamma", gamma},
                     {"x", xs},
                     {"coordinate", "x: one_minus_u = 10^-x for the SOC columns, delta t = x for the quench columns"},
                     {"quench", "B = B_c / 2, delta = 1"}};
  const std::vector<std::string> names{"xi", "n_mean", "n_mean_approx", "qfi_omega", "qfi_time_form",
                                       "adiabatic_time", "gap", "quench_n_mean", "quench_qfi"};
  CurveSpec c{"analytic", "x", {}};
  for (const auto& nm : names) c.columns.push_back(column_name(nm, "analytic"));
  plan.curves = {c};
  Task t;
  t.label = "analytic-table";
  t.truncated = false;
  t.sweep_length = xs.size();
  for (std::size_t i = 0; i < xs.size(); ++i) t.points.push_back(i);
  t.run = [=](double, const PointSet* only) {
    TaskOutput out;
    const auto crystal = crystal_at_half_critical(1.0, 1);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!detail::wanted(only, i)) continue;
      const double w = std::pow(10.0, -xs[i]);
      const auto p = SocParams::from_ratios(ratio, 1.0 - w);
      const auto ex = mean_excitations_adiabatic(p);
      const AdiabaticSchedule sched{gamma, p.k};
      const auto q = quench_qfi_special(crystal, xs[i]);
      out.records.push_back(detail::record("analytic-table", "analytic", i, xs[i], "analytic",
                                           {{"xi", squeeze_parameter(p)},
                                            {"n_mean", ex.exact},
                                            {"n_mean_approx", ex.approx},
                                            {"qfi_omega", qfi_omega_adiabatic(p)},
                                            {"qfi_time_form", qfi_omega_time_form(sched, p)},
                                            {"adiabatic_time", adiabatic_time(sched, p)},
                                            {"gap", p.omega * std::sqrt(w)},
                                            {"quench_n_mean", q.n_mean},
                                            {"quench_qfi", q.qfi}}));
    }
    return out;
  };
  plan.tasks = {t};
  return plan;
}

}  // namespace experiments

// ---- registry, runner and convergence ----

struct ExperimentDefinition {
  const char* name;
  Json (*defaults)(bool full_scale);
  Plan (*build)(const Json& config);
};

inline const std::vector<ExperimentDefinition>& experiment_registry() {
  static const std::vector<ExperimentDefinition> defs{
      {"fig1", experiments::fig1_defaults, experiments::fig1_plan},
      {"fig2", experiments::fig2_defaults, experiments::fig2_plan},
      {"fig3", experiments::fig3_defaults, experiments::fig3_plan},
      {"fig4", experiments::fig4_defaults, experiments::fig4_plan},
      {"fig5", experiments::fig5_defaults, experiments::fig5_plan},
      {"fig6", experiments::fig6_defaults, experiments::fig6_plan},
      {"homodyne", experiments::homodyne_defaults, experiments::homodyne_plan},
      {"analytic-table", experiments::analytic_defaults, experiments::analytic_plan}};
  return defs;
}

inline const ExperimentDefinition& find_experiment(const std::string& name) {
  std::string known;
  for (const auto& d : experiment_registry()) {
    if (name == d.name) return d;
    known += (known.empty() ? "" : ", ") + std::string(d.name);
  }
  throw ConfigError("unknown experiment '" + name + "' (expected one of " + known + ")");
}

namespace detail {

inline bool same_kind(const Json& def, const Json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  if (def.is_array()) {
    if (!v.is_array()) return false;
    if (def.empty()) return true;
    for (const auto& e : v)
      if (!same_kind(def.front(), e)) return false;
    return true;
  }
  return def.type() == v.type();
}

}  // namespace detail

// Defaults for the experiment (and scale) overlaid with the user's keys; unknown keys are errors.
inline Json resolve_config(const std::string& experiment, const Json& user) {
  const auto& def = find_experiment(experiment);
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  bool full_scale = false;
  if (user.contains("full_scale")) {
    if (!user["full_scale"].is_boolean()) throw ConfigError("config key 'full_scale' must be a boolean");
    full_scale = user["full_scale"].get<bool>();
  }
  Json cfg = {{"full_scale", full_scale}, {"threads", 1}, {"tail_tol", 1e-10}, {"check_convergence", true}};
  const Json defaults = def.defaults(full_scale);
  for (const auto& [k, v] : defaults.items()) cfg[k] = v;
  for (const auto& [k, v] : user.items()) {
    if (!cfg.contains(k)) throw ConfigError("unknown config key '" + k + "' for experiment " + experiment);
    if (!detail::same_kind(cfg[k], v)) throw ConfigError("config key '" + k + "' has the wrong type");
    cfg[k] = v;
  }
  if (cfg["threads"].get<int>() < 1) throw ConfigError("threads must be >= 1");
  const double tol = cfg["tail_tol"].get<double>();
  if (!(tol > 0.0 && tol < 1.0)) throw ConfigError("tail_tol must lie in (0, 1)");
  return cfg;
}

inline Plan build_plan(const std::string& experiment, const Json& resolved) {
  try {
    return find_experiment(experiment).build(resolved);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

// (curve, column, point) -> (coordinate, value)
using Baseline = std::map<std::tuple<std::string, std::string, std::size_t>, std::pair<double, double>>;

inline Baseline baseline_from_records(const std::vector<ExperimentRecord>& records) {
  Baseline b;
  for (const auto& r : records)
    for (const auto& [obs, v] : r.observables)
      b[{r.curve, column_name(obs, r.model_tag), r.point}] = {r.sweep_coordinate, v};
  return b;
}

inline Baseline baseline_from_tables(const Plan& plan, const std::vector<Table>& tables) {
  Baseline b;
  for (const auto& spec : plan.curves) {
    const auto it = std::find_if(tables.begin(), tables.end(), [&](const Table& t) { return t.name == spec.name; });
    if (it == tables.end()) throw ConfigError("dataset is missing " + spec.name + ".csv");
    for (std::size_t row = 0; row < it->rows.size(); ++row)
      for (const auto& col : spec.columns) b[{spec.name, col, row}] = {it->rows[row][0], it->rows[row][it->column(col)]};
  }
  return b;
}

// Reruns every tenth sweep point (and the last) of each truncated task at 1.5x n_max.
inline ConvergenceReport check_convergence(const Plan& plan, const Baseline& baseline, int threads) {
  ConvergenceReport report;
  std::vector<std::pair<const Task*, PointSet>> jobs;
  for (const auto& t : plan.tasks) {
    if (!t.truncated) continue;
    PointSet sel;
    for (auto p : t.points)
      if (p % 10 == 9 || p + 1 == t.sweep_length) sel.insert(p);
    if (!sel.empty()) jobs.emplace_back(&t, std::move(sel));
  }
  if (jobs.empty()) {
    report.skipped = true;
    report.note = "no truncation";
    return report;
  }
  std::map<std::pair<std::string, std::string>, double> scale;
  for (const auto& [key, cv] : baseline) {
    auto& s = scale[{std::get<0>(key), std::get<1>(key)}];
    s = std::max(s, std::abs(cv.second));
  }
  std::vector<TaskOutput> outputs(jobs.size());
  std::vector<std::string> failures(jobs.size());
  parallel_for(jobs.size(), threads, [&](std::size_t i) {
    try {
      outputs[i] = jobs[i].first->run(kConvergenceScale, &jobs[i].second);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });
  std::set<std::pair<std::string, std::size_t>> points;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!failures[i].empty()) {
      for (auto p : jobs[i].second) report.flags.push_back({"", jobs[i].first->label, p, 0.0, 0.0, 0.0, 0.0, failures[i]});
      continue;
    }
    for (const auto& r : outputs[i].records) {
      points.insert({r.curve, r.point});
      for (const auto& [obs, v] : r.observables) {
        const std::string col = column_name(obs, r.model_tag);
        const auto it = baseline.find({r.curve, col, r.point});
        if (it == baseline.end()) continue;
        ++report.values_checked;
        const double base = it->second.second;
        if (it->second.first != r.sweep_coordinate) {
          report.flags.push_back({r.curve, col, r.point, it->second.first, base, v, 0.0,
                                  "dataset coordinate differs from the configured sweep"});
          continue;
        }
        const double denom = std::max({std::abs(base), std::abs(v), 1e-12 * scale[{r.curve, col}]});
        const double shift = denom > 0.0 ? std::abs(v - base) / denom : 0.0;
        if (!(shift <= kConvergenceShift)) report.flags.push_back({r.curve, col, r.point, r.sweep_coordinate, base, v, shift, ""});
      }
    }
  }
  report.points_checked = points.size();
  return report;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

// Runs the experiment; when out_dir is non-empty, writes <out_dir>/<experiment>/{*.csv, manifest.json}.
inline Dataset run_experiment(const std::string& experiment, const Json& user_config,
                              const std::filesystem::path& out_dir = {}, std::ostream* log = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  const Json cfg = resolve_config(experiment, user_config);
  if (cfg["full_scale"].get<bool>() && log)
    *log << "warning: full_scale selects the full-size parameter set; " << experiment
         << " can run for hours and needs several GB of memory\n";
  const Plan plan = build_plan(experiment, cfg);
  const int threads = cfg["threads"].get<int>();
  const double tail_tol = cfg["tail_tol"].get<double>();

  std::vector<TaskOutput> outputs(plan.tasks.size());
  parallel_for(plan.tasks.size(), threads, [&](std::size_t i) {
    outputs[i] = detail::with_context(plan.tasks[i].label, [&] { return plan.tasks[i].run(1.0, nullptr); });
  });
  Dataset ds;
  ds.experiment = experiment;
  Json notes = Json::object();
  Json truncations = Json::object();
  std::vector<Table> raw;
  for (auto& o : outputs) {
    for (auto& r : o.records) ds.records.push_back(std::move(r));
    for (auto& t : o.tables) raw.push_back(std::move(t));
    for (const auto& [k, v] : o.notes.items()) notes[k] = v;
    for (const auto& [k, v] : o.truncations) truncations[k] = v;
  }
  for (const auto& r : ds.records) r.validate(tail_tol);
  if (plan.finalize) plan.finalize(ds.records, notes);
  for (const auto& spec : plan.curves) ds.tables.push_back(assemble_curve(spec, ds.records));
  for (auto& t : raw) ds.tables.push_back(std::move(t));

  if (cfg["check_convergence"].get<bool>()) {
    ds.convergence = check_convergence(plan, baseline_from_records(ds.records), threads);
  } else {
    ds.convergence.skipped = true;
    ds.convergence.note = "disabled by config";
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  Json files = Json::array();
  for (const auto& t : ds.tables) files.push_back(t.name + ".csv");
  ds.manifest = {{"experiment", experiment},
                 {"library_version", kLibraryVersion},
                 {"config", cfg},
                 {"parameters", plan.parameters},
                 {"units", "delta = 1 for crystal experiments, omega = m = 1 for SOC experiments"},
                 {"truncations", truncations},
                 {"tail_tol", tail_tol},
                 {"results", notes},
                 {"convergence", ds.convergence.to_json()},
                 {"wall_time_s", wall},
                 {"files", files}};
  if (!out_dir.empty()) {
    const auto dir = out_dir / experiment;
    std::filesystem::create_directories(dir);
    for (const auto& t : ds.tables) write_text(dir / (t.name + ".csv"), t.csv());
    write_text(dir / "manifest.json", ds.manifest.dump(2) + "\n");
  }
  return ds;
}

// Convergence check of a written dataset directory, rebuilt from its manifest.
inline ConvergenceReport check_dataset(const std::filesystem::path& dir, int threads = 1) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("missing manifest: " + manifest_path.string());
  Json manifest;
  try {
    manifest = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("unreadable manifest: " + std::string(e.what()));
  }
  if (!manifest.contains("experiment") || !manifest.contains("config"))
    throw ConfigError("manifest lacks experiment or config");
  const std::string experiment = manifest["experiment"].get<std::string>();
  const Plan plan = build_plan(experiment, resolve_config(experiment, manifest["config"]));
  std::vector<Table> tables;
  for (const auto& spec : plan.curves) tables.push_back(read_csv((dir / (spec.name + ".csv")).string(), spec.name));
  return check_convergence(plan, baseline_from_tables(plan, tables), threads);
}

}  // namespace comet
