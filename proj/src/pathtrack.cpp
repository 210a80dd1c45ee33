#include "tensegrity/pathtrack.hpp"

#include "tensegrity/linalg.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace tensegrity {

void ControlPath::validate(std::size_t n_control) const {
  if (waypoints.size() < 2) throw LiftError("a control path needs at least two waypoints");
  for (std::size_t k = 0; k < waypoints.size(); ++k) {
    if (static_cast<std::size_t>(waypoints[k].size()) != n_control)
      throw LiftError("waypoint " + std::to_string(k) + " has length " + std::to_string(waypoints[k].size()) +
                      ", expected " + std::to_string(n_control));
    if (!waypoints[k].allFinite()) throw LiftError("waypoint " + std::to_string(k) + " is not finite");
    if (k > 0 && (waypoints[k] - waypoints[k - 1]).norm() == 0.0)
      throw LiftError("waypoints " + std::to_string(k - 1) + " and " + std::to_string(k) + " coincide");
  }
}

RVector ControlPath::at(double t) const {
  const std::size_t n = segments();
  const double u = std::clamp(t, 0.0, 1.0) * static_cast<double>(n);
  const std::size_t k = std::min(static_cast<std::size_t>(u), n - 1);
  const double s = u - static_cast<double>(k);
  return waypoints[k] + s * (waypoints[k + 1] - waypoints[k]);
}

bool ControlPath::closed(double tol) const {
  return waypoints.size() >= 2 && (waypoints.front() - waypoints.back()).norm() <= tol;
}

ControlPath control_path_from_json(const Json& j) {
  ControlPath p;
  const Json& w = j.is_object() ? j.at("waypoints") : j;
  if (!w.is_array()) throw InputError("waypoints must be an array of control vectors");
  for (const auto& v : w) p.waypoints.push_back(rvector_from_json(v));
  return p;
}

Json to_json(const ControlPath& p) {
  Json w = Json::array();
  for (const auto& v : p.waypoints) w.push_back(to_json(v));
  return Json{{"waypoints", w}};
}

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::catastrophe_crossing: return "catastrophe_crossing";
    case EventKind::stability_lost: return "stability_lost";
    case EventKind::tracking_failure: return "tracking_failure";
    case EventKind::slack_transition: return "slack_transition";
  }
  return "?";
}

std::size_t LiftResult::count(EventKind k) const {
  return static_cast<std::size_t>(std::count_if(events.begin(), events.end(), [k](const auto& e) { return e.kind == k; }));
}

std::size_t LiftResult::jumps() const {
  return static_cast<std::size_t>(std::count_if(events.begin(), events.end(), [](const auto& e) { return e.jumped; }));
}

std::optional<StablePoint> nearest_stable(const FrameworkModel& model, const RVector& y, const RVector& x,
                                          const TrackerConfig& cfg, const EquilibriumSeed* seed) {
  const StabilityReport r = stability_set(model, y, cfg, seed);
  std::optional<StablePoint> best;
  double best_d = 0.0;
  for (const auto& s : r.stable) {
    const double d = (s.point.x - x).norm();
    if (!best || d < best_d) {
      best = s;
      best_d = d;
    }
  }
  return best;
}

RVector descend_true_energy(const FrameworkModel& model, const RVector& y, const RVector& x0,
                            const DescentOptions& opts) {
  const auto& bars = model.bar_system();
  const JacobianEvaluator jac(bars, model.internal_names());
  const CVector yc = y.cast<Complex>();
  auto project = [&](RVector x) {
    for (int it = 0; it < 30; ++it) {
      const RVector b = bars.evaluate(x.cast<Complex>(), yc).real();
      if (b.size() == 0 || b.cwiseAbs().maxCoeff() < 1e-14) break;
      const RMatrix j = jac.evaluate(x.cast<Complex>(), yc).real();
      x -= j.completeOrthogonalDecomposition().solve(b);
    }
    return x;
  };
  auto energy = [&](const RVector& x) { return model.true_energy({x, y}); };
  auto projected_gradient = [&](const RVector& x) {
    const RVector g = model.true_energy_gradient({x, y});
    if (bars.n_outputs() == 0) return g;
    const RMatrix j = jac.evaluate(x.cast<Complex>(), yc).real();
    return RVector(g - j.completeOrthogonalDecomposition().solve(RVector(j * g)));
  };

  RVector x = project(x0);
  double e = energy(x);
  double h = opts.step;
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    const RVector pg = projected_gradient(x);
    const double gn = pg.squaredNorm();
    if (std::sqrt(gn) < opts.gradient_tol) break;
    bool moved = false;
    while (h > 1e-14) {
      const RVector trial = project(x - h * pg);
      const double et = energy(trial);
      if (et <= e - 1e-4 * h * gn) {
        x = trial;
        e = et;
        h = std::min(2.0 * h, 1.0);
        moved = true;
        break;
      }
      h *= 0.5;
    }
    if (!moved) break;
  }
  return x;
}

std::optional<StablePoint> post_jump(const FrameworkModel& model, const RVector& y, const CriticalPoint& old_point,
                                     const TrackerConfig& cfg, const EquilibriumSeed* seed,
                                     const DescentOptions& opts) {
  const RVector x = descend_true_energy(model, y, old_point.x, opts);
  return nearest_stable(model, y, x, cfg, seed);
}

namespace {

double scaled_gap(const RVector& a, const RVector& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, a.cwiseAbs().maxCoeff());
}

struct Crossing {
  double s = 0.0;
  RVector core;  // (x, delta, lambda) of the degenerate point
};

class Lifter {
 public:
  Lifter(const FrameworkModel& model, const ControlPath& path, const TrackerConfig& cfg, const LiftContext& ctx,
         const LiftOptions& opts)
      : model_(model), path_(path), cfg_(cfg), ctx_(ctx), opts_(opts), lin_(model.critical_system()) {
    cfg_.threads = 1;
  }

  LiftResult run(const CriticalPoint& start) {
    const RVector y0 = path_.waypoints.front();
    const auto refined = refine(start.packed(), y0);
    if (!refined) throw LiftError("the starting point is not a critical point at the first waypoint");
    const CriticalPoint p = make_critical_point(model_, y0, *refined);
    const StabilityCertificate c = certify_stability(model_, p, y0);
    if (c.verdict != Verdict::stable || !p.taut())
      throw LiftError(std::string("the starting point is not a taut stable equilibrium (verdict ") + to_string(c.verdict) +
                      ")");
    z_ = *refined;
    tension_ = p.tension;
    res_.trajectory.push_back({0.0, y0, p, c});

    for (seg_ = 0; seg_ < path_.segments(); ++seg_) {
      if (!segment()) {
        res_.ended_stable = false;
        return std::move(res_);
      }
    }
    res_.ended_stable = res_.trajectory.back().certificate.verdict == Verdict::stable;
    return std::move(res_);
  }

 private:
  RVector y_at(double s) const {
    const RVector& a = path_.waypoints[seg_];
    const RVector& b = path_.waypoints[seg_ + 1];
    return a + s * (b - a);
  }
  double global_t(double s) const {
    return (static_cast<double>(seg_) + s) / static_cast<double>(path_.segments());
  }

  std::optional<RVector> refine(const RVector& z, const RVector& y) {
    const TrackedSolution t = classify_endpoint(lin_, y.cast<Complex>(), z.cast<Complex>(), cfg_, ws_);
    if (!t.is_regular()) return std::nullopt;
    if (t.point.imag().cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, t.point.cwiseAbs().maxCoeff())) return std::nullopt;
    return RVector(t.point.real());
  }

  std::optional<RVector> step(const RVector& z, double sa, double sb) {
    const CVector pa = y_at(sa).cast<Complex>();
    const CVector pb = y_at(sb).cast<Complex>();
    CMatrix jz, jp;
    lin_.evaluate(z.cast<Complex>(), pa, ws_.lin, nullptr, &jz, &jp);
    CVector rhs = -(jp * (pb - pa));
    CMatrix a = jz;
    const bool tangent_ok = lu_solve_inplace(a, rhs);
    const ParameterHomotopy h(lin_, pa, pb);
    const SegmentOutcome out = track_segment(h, z.cast<Complex>(), 1.0, 0.0, cfg_, ws_);
    if (!out.reached) return std::nullopt;
    const auto r = refine(out.z.real(), y_at(sb));
    if (!r || !tangent_ok) return r;
    const RVector predicted = rhs.real();
    const double err = (*r - z - predicted).norm();
    if (err > 0.5 * predicted.norm() + 1e-6) return std::nullopt;  // likely a jump to another branch
    return r;
  }

  std::optional<RVector> advance(const RVector& z, double sa, double sb, std::size_t depth) {
    if (auto r = step(z, sa, sb)) return r;
    if (depth == 0) return std::nullopt;
    const double mid = 0.5 * (sa + sb);
    const auto half = advance(z, sa, mid, depth - 1);
    if (!half) return std::nullopt;
    return advance(*half, mid, sb, depth - 1);
  }

  std::vector<Crossing> crossings() {
    std::vector<Crossing> out;
    if (!ctx_.witness) return out;
    ControlSlice line;
    line.base = path_.waypoints[seg_];
    line.directions = {RVector(path_.waypoints[seg_ + 1] - path_.waypoints[seg_])};
    const SliceIntersection in = intersect_slice(*ctx_.witness, line, cfg_, true);
    if (!in.complete)
      res_.warnings.push_back("segment " + std::to_string(seg_) + ": witness intersection incomplete (" +
                              std::to_string(in.failures) + " failed paths)");
    const auto n = static_cast<Eigen::Index>(model_.layout().n());
    for (const auto& p : in.points)
      if (p.delta_nonneg && p.taut) out.push_back({p.t, p.z.head(n).real()});
    return out;
  }

  void record(double s) {
    const RVector y = y_at(s);
    const CriticalPoint p = make_critical_point(model_, y, z_);
    StabilityCertificate c;
    try {
      c = certify_stability(model_, p, y);
    } catch (const ConstraintSingularityError& e) {
      c.verdict = Verdict::borderline;
      res_.warnings.push_back(e.what());
    }
    if (p.tension != tension_) {
      LiftEvent e{global_t(s), EventKind::slack_transition, y, false, "a cable changed between taut and slack"};
      res_.events.push_back(e);
      tension_ = p.tension;
    }
    res_.trajectory.push_back({global_t(s), y, p, c});
  }

  bool jump_at(double s_event, double s_land, EventKind kind, const std::string& why) {
    const RVector y = y_at(s_land);
    const CriticalPoint old = make_critical_point(model_, y_at(s_event), z_);
    const auto next = post_jump(model_, y, old, cfg_, ctx_.seed);
    LiftEvent e{global_t(s_event), kind, y_at(s_event), true, why};
    if (!next) {
      e.details += "; no stable equilibrium remains";
      if (kind != EventKind::stability_lost) res_.events.push_back(e);
      res_.events.push_back({global_t(s_event), EventKind::stability_lost, y_at(s_event), true, "no successor"});
      return false;
    }
    res_.events.push_back(e);
    z_ = next->point.packed();
    record(s_land);
    return true;
  }

  /// Tracks z_ over [a, b], sampling the uniform grid inside; a local loss of
  /// stability or of the branch triggers a jump. Returns the reached s.
  std::optional<double> sweep(double a, double b, bool global_crossings) {
    const double n = static_cast<double>(opts_.samples_per_segment);
    std::vector<double> nodes;
    for (double k = std::floor(a * n) + 1; k / n < b; ++k)
      if (k / n > a + 1e-12) nodes.push_back(k / n);
    nodes.push_back(b);
    double s = a;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double s_next = nodes[i];
      auto z = advance(z_, s, s_next, opts_.max_refinements + 18);
      bool lost = !z;
      if (z) {
        const CriticalPoint p = make_critical_point(model_, y_at(s_next), *z);
        try {
          lost = certify_stability(model_, p, y_at(s_next)).verdict != Verdict::stable;
        } catch (const ConstraintSingularityError&) {
          lost = true;
        }
      }
      if (!lost) {
        z_ = *z;
        s = s_next;
        record(s);
        continue;
      }
      // bisect for the last good parameter
      double lo = s, hi = s_next;
      RVector z_lo = z_;
      while (hi - lo > 1e-9) {
        const double mid = 0.5 * (lo + hi);
        auto zm = advance(z_lo, lo, mid, opts_.max_refinements + 18);
        bool ok = zm.has_value();
        if (ok) {
          try {
            ok = certify_stability(model_, make_critical_point(model_, y_at(mid), *zm), y_at(mid)).verdict ==
                 Verdict::stable;
          } catch (const ConstraintSingularityError&) {
            ok = false;
          }
        }
        if (ok) {
          lo = mid;
          z_lo = *zm;
        } else {
          hi = mid;
        }
      }
      z_ = z_lo;
      record(lo);
      const double land = std::min(b, std::max(hi, lo + 1.0 / n));
      std::string why = z ? "projected Hessian lost definiteness" : "the equilibrium branch ended";
      EventKind kind = EventKind::stability_lost;
      const StabilityCertificate& last = res_.trajectory.back().certificate;
      if (!z && last.min_eigenvalue > 1e-4 * std::max(1.0, last.projected_hessian.norm())) {
        kind = EventKind::tracking_failure;
        why = "continuation failed away from any fold";
      }
      if (global_crossings) {
        why += "; no catastrophe crossing was predicted here";
        res_.warnings.push_back("local monitor found a loss at t=" + format_double(global_t(lo)) +
                                " that the witness intersection did not report");
      }
      if (!jump_at(lo, land, kind, why)) return std::nullopt;
      s = land;
      if (s >= b) return s;
      return sweep(s, b, global_crossings);
    }
    return s;
  }

  bool segment() {
    const auto cross = crossings();
    const double eps = opts_.crossing_eps;
    const double n = static_cast<double>(opts_.samples_per_segment);
    double s = 0.0;
    for (std::size_t k = 0; k < cross.size(); ++k) {
      const double c = cross[k].s;
      const double before = std::max(s, c - eps);
      if (before > s) {
        const auto reached = sweep(s, before, ctx_.witness != nullptr);
        if (!reached) return false;
        s = *reached;
      }
      if (s > c) continue;  // already passed by a jump
      const bool ours = scaled_gap(z_, cross[k].core) < opts_.jump_match_tol;
      const double next_c = k + 1 < cross.size() ? cross[k + 1].s : 1.0 + eps;
      if (ours) {
        const double land = std::min({c + 1.0 / n, 0.5 * (c + next_c), 1.0});
        if (!jump_at(c, land, EventKind::catastrophe_crossing, "the occupied minimum merged with a saddle"))
          return false;
        s = land;
      } else {
        res_.events.push_back({global_t(c), EventKind::catastrophe_crossing, y_at(c), false,
                               "another equilibrium branch folds here; the occupied minimum persists"});
        const double after = std::min(c + eps, 1.0);
        const auto reached = sweep(s, after, false);
        if (!reached) return false;
        s = *reached;
      }
    }
    if (s < 1.0) {
      const auto reached = sweep(s, 1.0, ctx_.witness != nullptr);
      if (!reached) return false;
    }
    return true;
  }

  const FrameworkModel& model_;
  const ControlPath& path_;
  TrackerConfig cfg_;
  LiftContext ctx_;
  LiftOptions opts_;
  Linearization lin_;
  HomotopyWorkspace ws_;
  std::size_t seg_ = 0;
  RVector z_;
  std::vector<bool> tension_;
  LiftResult res_;
};

}  // namespace

LiftResult lift_path(const FrameworkModel& model, const ControlPath& path, const CriticalPoint& start,
                     const TrackerConfig& cfg, const LiftContext& ctx, const LiftOptions& opts) {
  path.validate(model.n_control());
  if (opts.samples_per_segment == 0) throw LiftError("samples_per_segment must be positive");
  Lifter lifter(model, path, cfg, ctx, opts);
  LiftResult r = lifter.run(start);
  std::stable_sort(r.events.begin(), r.events.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  return r;
}

bool hysteresis_probe(const FrameworkModel& model, const ControlPath& loop, const CriticalPoint& start,
                      const TrackerConfig& cfg, const LiftContext& ctx, const LiftOptions& opts) {
  if (!loop.closed(1e-9)) throw LiftError("a hysteresis probe needs a closed loop");
  const bool degenerate = std::all_of(loop.waypoints.begin(), loop.waypoints.end(),
                                      [&](const RVector& w) { return (w - loop.waypoints.front()).norm() == 0.0; });
  if (degenerate) return false;
  const LiftResult r = lift_path(model, loop, start, cfg, ctx, opts);
  return (r.final_point().x - r.trajectory.front().point.x).norm() > 1e-3;
}

Json to_json(const LiftEvent& e) {
  return Json{{"t", e.t}, {"kind", to_string(e.kind)}, {"y", to_json(e.y)}, {"jumped", e.jumped}, {"details", e.details}};
}

Json to_json(const LiftResult& r) {
  Json t = Json::array(), y = Json::array(), x = Json::array(), eig = Json::array(), stable = Json::array();
  for (const auto& s : r.trajectory) {
    t.push_back(s.t);
    y.push_back(to_json(s.y));
    x.push_back(to_json(s.point.x));
    eig.push_back(std::isfinite(s.certificate.min_eigenvalue) ? Json(s.certificate.min_eigenvalue) : Json(nullptr));
    stable.push_back(s.certificate.verdict == Verdict::stable);
  }
  Json events = Json::array();
  for (const auto& e : r.events) events.push_back(to_json(e));
  return Json{{"trajectory", {{"t", t}, {"y", y}, {"x", x}, {"min_eig", eig}, {"stable", stable}}},
              {"events", events},
              {"ended_stable", r.ended_stable},
              {"warnings", r.warnings}};
}

std::string trajectory_csv(const FrameworkModel& model, const LiftResult& r) {
  std::ostringstream out;
  out << "t";
  for (const auto& n : model.control_names()) out << ',' << n;
  for (const auto& n : model.internal_names()) out << ',' << n;
  out << ",min_eig,stable\n";
  for (const auto& s : r.trajectory) {
    out << format_double(s.t);
    for (double v : s.y) out << ',' << format_double(v);
    for (double v : s.point.x) out << ',' << format_double(v);
    out << ',' << (std::isfinite(s.certificate.min_eigenvalue) ? format_double(s.certificate.min_eigenvalue) : "inf");
    out << ',' << (s.certificate.verdict == Verdict::stable ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace tensegrity
