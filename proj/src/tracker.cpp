#include "tensegrity/tracker.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tensegrity/linalg.hpp"
#include "tensegrity/parallel.hpp"

namespace tensegrity {

namespace {

double max_norm(const CVector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

bool all_finite(const CVector& v) {
  for (Eigen::Index k = 0; k < v.size(); ++k)
    if (!std::isfinite(v[k].real()) || !std::isfinite(v[k].imag())) return false;
  return true;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// dz/dt = -Hz^{-1} Ht
bool velocity(const Homotopy& h, const CVector& z, double t, HomotopyWorkspace& ws, CMatrix& hz, CVector& ht,
              CVector& out) {
  h.evaluate(z, t, ws, nullptr, &hz, &ht);
  out = -ht;
  return lu_solve_inplace(hz, out) && all_finite(out);
}

}  // namespace

void TrackerConfig::validate() const {
  if (!(min_step > 0.0) || !(min_step < max_step) || !(max_step <= 1.0))
    throw std::invalid_argument("tracker steps need 0 < min_step < max_step <= 1");
  if (!(newton_tol > 0.0) || !(track_tol > 0.0)) throw std::invalid_argument("tracker tolerances must be positive");
  if (max_steps == 0) throw std::invalid_argument("max_steps must be positive");
}

Complex TrackerConfig::resolved_gamma() const {
  if (gamma) return *gamma;
  std::mt19937_64 rng(rng_seed ^ 0x9e3779b97f4a7c15ull);
  return random_unit(rng);
}

const char* to_string(PathStatus s) {
  switch (s) {
    case PathStatus::regular: return "regular";
    case PathStatus::singular: return "singular";
    case PathStatus::diverged: return "diverged";
    case PathStatus::failed: return "failed";
  }
  return "failed";
}

Complex random_unit(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  return std::polar(1.0, u(rng));
}

CVector random_complex_vector(std::mt19937_64& rng, std::size_t n, double scale) {
  std::normal_distribution<double> g(0.0, scale / std::numbers::sqrt2);
  CVector v(static_cast<Eigen::Index>(n));
  for (auto& c : v) c = {g(rng), g(rng)};
  return v;
}

StraightLineHomotopy::StraightLineHomotopy(const Linearization& target, CVector params, Complex gamma)
    : target_(target), params_(std::move(params)), gamma_(gamma), degrees_(target.degrees()) {
  if (target.n_outputs() != target.n_variables())
    throw DimensionError("straight-line homotopy needs a square system, got " + std::to_string(target.n_outputs()) +
                         " equations in " + std::to_string(target.n_variables()) + " variables");
}

void StraightLineHomotopy::evaluate(const CVector& z, double t, HomotopyWorkspace& ws, CVector* h, CMatrix* hz,
                                    CVector* ht) const {
  const bool need_j = hz != nullptr;
  target_.evaluate(z, params_, ws.lin, &ws.f, need_j ? &ws.jz : nullptr, nullptr);
  const Eigen::Index n = z.size();
  CVector g(n);
  CVector dg(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int d = degrees_[static_cast<std::size_t>(i)];
    const Complex p = std::pow(z[i], d - 1);
    g[i] = p * z[i] - 1.0;
    dg[i] = static_cast<double>(d) * p;
  }
  if (h) *h = (1.0 - t) * ws.f + t * gamma_ * g;
  if (hz) {
    *hz = (1.0 - t) * ws.jz;
    for (Eigen::Index i = 0; i < n; ++i) (*hz)(i, i) += t * gamma_ * dg[i];
  }
  if (ht) *ht = gamma_ * g - ws.f;
}

ParameterHomotopy::ParameterHomotopy(const Linearization& system, CVector p_start, CVector p_end)
    : system_(system), p_start_(std::move(p_start)), p_end_(std::move(p_end)) {
  if (static_cast<std::size_t>(p_start_.size()) != system.n_parameters() ||
      static_cast<std::size_t>(p_end_.size()) != system.n_parameters())
    throw DimensionError("parameter homotopy endpoints must have length " + std::to_string(system.n_parameters()));
}

void ParameterHomotopy::evaluate(const CVector& z, double t, HomotopyWorkspace& ws, CVector* h, CMatrix* hz,
                                 CVector* ht) const {
  const CVector p = parameters_at(t);
  system_.evaluate(z, p, ws.lin, h ? h : &ws.f, hz, ht ? &ws.jp : nullptr);
  if (ht) *ht = ws.jp * (p_start_ - p_end_);
}

SegmentOutcome track_segment(const Homotopy& h, const CVector& z0, double t_from, double t_to,
                             const TrackerConfig& cfg, HomotopyWorkspace& ws) {
  SegmentOutcome out;
  out.z = z0;
  out.t = t_from;
  const double dir = t_to < t_from ? -1.0 : 1.0;
  double step = std::min(cfg.max_step, std::abs(t_to - t_from)) * 0.5;
  int successes = 0;

  const std::size_t n = h.dimension();
  CMatrix hz(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  CVector ht, k1, k2, k3, k4, hv;

  while (out.t != t_to) {
    if (out.steps >= cfg.max_steps) return out;
    const double remaining = std::abs(t_to - out.t);
    const bool last = step >= remaining;
    const double dt = dir * (last ? remaining : step);
    const double t1 = last ? t_to : out.t + dt;

    bool ok = velocity(h, out.z, out.t, ws, hz, ht, k1) &&
              velocity(h, out.z + 0.5 * dt * k1, out.t + 0.5 * dt, ws, hz, ht, k2) &&
              velocity(h, out.z + 0.5 * dt * k2, out.t + 0.5 * dt, ws, hz, ht, k3) &&
              velocity(h, out.z + dt * k3, t1, ws, hz, ht, k4);
    CVector z = out.z;
    if (ok) z += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    bool converged = false;
    if (ok) {
      double prev = 0.0;
      for (int it = 0; it < 3; ++it) {
        h.evaluate(z, t1, ws, &hv, &hz, nullptr);
        CVector& dz = hv;
        if (!lu_solve_inplace(hz, dz) || !all_finite(dz)) break;
        z -= dz;
        const double nd = max_norm(dz);
        if (nd <= cfg.track_tol * std::max(1.0, max_norm(z))) {
          converged = true;
          break;
        }
        if (it > 0 && nd > 0.25 * prev) break;
        prev = nd;
      }
    }
    ++out.steps;
    if (converged) {
      out.z = z;
      out.t = t1;
      if (max_norm(z) > cfg.divergence_cutoff) {
        out.diverged = true;
        return out;
      }
      if (++successes >= 4) {
        step = std::min(2.0 * step, cfg.max_step);
        successes = 0;
      }
    } else {
      step *= 0.5;
      successes = 0;
      if (step < cfg.min_step) return out;
    }
  }
  out.reached = true;
  return out;
}

TrackedSolution classify_endpoint(const Linearization& target, const CVector& params, const CVector& z0,
                                  const TrackerConfig& cfg, HomotopyWorkspace& ws, bool diverging) {
  TrackedSolution s;
  s.point = z0;
  if (!all_finite(z0)) {
    s.status = PathStatus::diverged;
    s.residual = std::numeric_limits<double>::infinity();
    s.condition_estimate = std::numeric_limits<double>::infinity();
    return s;
  }
  CVector z = z0;
  CVector best = z0;
  target.evaluate(z, params, ws.lin, &ws.f, &ws.jz, nullptr);
  double best_res = max_norm(ws.f);
  // Regular roots converge in a few steps; near a multiple root Newton is
  // only linear, and running it on drives the condition estimate up.
  int stalled = 0;
  for (int it = 0; it < 48 && stalled < 3; ++it) {
    const CVector dz = Eigen::PartialPivLU<CMatrix>(ws.jz).solve(ws.f);
    if (!all_finite(dz)) break;
    z -= dz;
    target.evaluate(z, params, ws.lin, &ws.f, &ws.jz, nullptr);
    const double res = max_norm(ws.f);
    if (res < best_res) {
      best_res = res;
      best = z;
      stalled = 0;
    } else {
      ++stalled;
    }
    if (max_norm(dz) <= 1e-3 * cfg.newton_tol * std::max(1.0, max_norm(z))) break;
  }
  // Newton walking far from the path's end has found some other root
  if (max_norm(best - z0) > 1e-2 * std::max(1.0, max_norm(z0))) {
    s.status = diverging || max_norm(z0) > 1e8 ? PathStatus::diverged : PathStatus::failed;
    s.condition_estimate = std::numeric_limits<double>::infinity();
    target.evaluate(z0, params, ws.lin, &ws.f, &ws.jz, nullptr);
    s.residual = max_norm(ws.f);
    return s;
  }
  s.point = best;
  target.evaluate(best, params, ws.lin, &ws.f, &ws.jz, nullptr);
  s.residual = max_norm(ws.f);
  const Eigen::JacobiSVD<CMatrix> svd(ws.jz);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() ? sv[0] : 0.0;
  const double smin = sv.size() ? sv[sv.size() - 1] : 0.0;
  s.condition_estimate = smin > 0.0 ? std::max(1.0, smax) / smin : std::numeric_limits<double>::infinity();

  const double scale = std::max(1.0, max_norm(best));
  if (s.residual < cfg.newton_tol * scale && s.condition_estimate < cfg.singular_cond_threshold)
    s.status = PathStatus::regular;
  else if (diverging || scale > 1e8)
    s.status = PathStatus::diverged;
  else
    s.status = PathStatus::singular;
  return s;
}

TrackedSolution track_path(const Homotopy& h, const CVector& z0, const TrackerConfig& cfg) {
  HomotopyWorkspace ws;
  return track_path(h, z0, cfg, ws);
}

TrackedSolution track_path(const Homotopy& h, const CVector& z0, const TrackerConfig& cfg, HomotopyWorkspace& ws) {
  if (static_cast<std::size_t>(z0.size()) != h.dimension())
    throw DimensionError("start point has length " + std::to_string(z0.size()) + ", expected " +
                         std::to_string(h.dimension()));
  constexpr double t_mark = 1e-4;
  constexpr double endgame = 1e-8;
  const auto fail = [&](const SegmentOutcome& seg, PathStatus st) {
    TrackedSolution s;
    s.point = seg.z;
    s.status = st;
    s.steps = seg.steps;
    s.residual = std::numeric_limits<double>::infinity();
    s.condition_estimate = std::numeric_limits<double>::infinity();
    return s;
  };

  // Affine tracking loses accuracy long before the cutoff; a path that
  // stalls at a huge norm is on its way to infinity.
  const double stall_norm = std::sqrt(cfg.divergence_cutoff);
  const SegmentOutcome a = track_segment(h, z0, 1.0, t_mark, cfg, ws);
  if (a.diverged || (!a.reached && max_norm(a.z) > stall_norm)) return fail(a, PathStatus::diverged);
  if (!a.reached) return fail(a, PathStatus::failed);
  const double norm_mark = std::max(1.0, max_norm(a.z));
  TrackerConfig rest = cfg;
  rest.max_steps = cfg.max_steps > a.steps ? cfg.max_steps - a.steps : 1;
  SegmentOutcome b = track_segment(h, a.z, t_mark, endgame, rest, ws);
  b.steps += a.steps;
  if (b.diverged || (!b.reached && max_norm(b.z) > stall_norm))
    return fail(b, PathStatus::diverged);
  if (!b.reached) return fail(b, PathStatus::failed);
  const double norm_end = max_norm(b.z);
  const bool diverging = norm_end > 1e4 && norm_end > 100.0 * norm_mark;
  if (!diverging) {
    // the last corrector runs on the target itself
    rest.max_steps = cfg.max_steps > b.steps ? cfg.max_steps - b.steps : 1;
    const SegmentOutcome c = track_segment(h, b.z, endgame, 0.0, rest, ws);
    b.steps += c.steps;
    if (c.reached) b.z = c.z;
  }
  TrackedSolution s = classify_endpoint(h.target(), h.target_parameters(), b.z, cfg, ws, diverging);
  s.steps = b.steps;
  return s;
}

std::size_t StartSystem::count() const {
  std::size_t c = 1;
  for (int d : degrees) c *= static_cast<std::size_t>(d);
  return c;
}

CVector StartSystem::point(std::size_t k) const {
  CVector z(static_cast<Eigen::Index>(degrees.size()));
  for (std::size_t i = 0; i < degrees.size(); ++i) {
    const auto d = static_cast<std::size_t>(degrees[i]);
    const std::size_t digit = k % d;
    k /= d;
    z[static_cast<Eigen::Index>(i)] = std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(digit) / static_cast<double>(d));
  }
  return z;
}

std::vector<CVector> StartSystem::points() const {
  std::vector<CVector> out;
  const std::size_t n = count();
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(point(k));
  return out;
}

StartSystem total_degree_start(const ExpressionSystem& target) {
  if (target.n_outputs() != target.n_variables())
    throw DimensionError("total-degree start needs a square system, got " + std::to_string(target.n_outputs()) +
                         " equations in " + std::to_string(target.n_variables()) + " variables");
  StartSystem s;
  s.degrees = target.degrees();
  auto b = std::make_shared<ExprBuilder>();
  std::vector<Expr> out;
  const auto names = target.store().variable_names();
  for (const auto& n : names) b->variable(n);
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (s.degrees[i] < 1)
      throw std::invalid_argument("output " + std::to_string(i) + " has degree 0; no total-degree start exists");
    out.push_back(b->sub(b->pow(b->variable(names[i]), s.degrees[i]), b->one()));
  }
  s.system = ExpressionSystem(std::move(b), std::move(out));
  return s;
}

double scaled_distance(const CVector& a, const CVector& b) {
  return max_norm(a - b) / std::max(1.0, max_norm(a));
}

std::vector<TrackedSolution> dedup_regular(const std::vector<TrackedSolution>& all, double tol) {
  std::vector<TrackedSolution> out;
  for (const auto& s : all) {
    if (!s.is_regular()) continue;
    bool found = false;
    for (auto& o : out) {
      if (scaled_distance(o.point, s.point) < tol) {
        o.multiplicity = o.multiplicity.value_or(1) + 1;
        found = true;
        break;
      }
    }
    if (!found) {
      out.push_back(s);
      out.back().multiplicity = 1;
    }
  }
  return out;
}

SolveReport solve_total_degree(const ExpressionSystem& target, const CVector& params, const TrackerConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const StartSystem start = total_degree_start(target);
  const Linearization lin(target);
  const StraightLineHomotopy h(lin, params, cfg.resolved_gamma());

  SolveReport r;
  r.paths = start.count();
  r.endpoints = parallel_map<TrackedSolution>(
      r.paths, cfg.threads, [] { return HomotopyWorkspace{}; },
      [&](HomotopyWorkspace& ws, std::size_t k) {
        TrackedSolution s = track_path(h, start.point(k), cfg, ws);
        s.start_index = k;
        return s;
      });

  // A regular root is the end of exactly one path; a repeat means a path
  // jumped. Retrack those paths with a tighter configuration.
  std::vector<std::size_t> suspects;
  for (std::size_t i = 0; i < r.endpoints.size(); ++i) {
    if (!r.endpoints[i].is_regular()) continue;
    for (std::size_t j = 0; j < i; ++j)
      if (r.endpoints[j].is_regular() &&
          scaled_distance(r.endpoints[j].point, r.endpoints[i].point) < cfg.dedup_tol) {
        suspects.push_back(i);
        suspects.push_back(j);
      }
  }
  std::sort(suspects.begin(), suspects.end());
  suspects.erase(std::unique(suspects.begin(), suspects.end()), suspects.end());
  if (!suspects.empty()) {
    TrackerConfig tight = cfg;
    tight.max_step = std::max(cfg.min_step * 2, cfg.max_step / 10.0);
    tight.track_tol = cfg.track_tol * 1e-2;
    tight.max_steps = cfg.max_steps * 4;
    const auto redo = parallel_map<TrackedSolution>(
        suspects.size(), cfg.threads, [] { return HomotopyWorkspace{}; },
        [&](HomotopyWorkspace& ws, std::size_t k) {
          TrackedSolution s = track_path(h, start.point(suspects[k]), tight, ws);
          s.start_index = suspects[k];
          return s;
        });
    for (std::size_t k = 0; k < suspects.size(); ++k) r.endpoints[suspects[k]] = redo[k];
    r.retracked = suspects.size();
  }

  for (const auto& s : r.endpoints) {
    switch (s.status) {
      case PathStatus::regular: ++r.n_regular; break;
      case PathStatus::singular: ++r.n_singular; break;
      case PathStatus::diverged: ++r.n_diverged; break;
      case PathStatus::failed: ++r.n_failed; break;
    }
  }
  r.solutions = dedup_regular(r.endpoints, cfg.dedup_tol);
  if (r.solutions.size() > r.paths) throw std::logic_error("more distinct solutions than the Bezout number");
  r.seconds = seconds_since(t0);
  return r;
}

namespace {

TrackedSolution move_one(const Linearization& lin, const CVector& p_start, const CVector& z, const CVector& p_end,
                         const TrackerConfig& cfg, HomotopyWorkspace& ws, std::uint64_t salt, bool& retried) {
  retried = false;
  const ParameterHomotopy direct(lin, p_start, p_end);
  TrackedSolution s = track_path(direct, z, cfg, ws);
  if (s.is_regular()) return s;

  retried = true;
  std::mt19937_64 rng(cfg.rng_seed * 1000003ull + salt);
  const double spread = std::max(1e-3, max_norm(p_end - p_start));
  const CVector mid = 0.5 * (p_start + p_end) + random_complex_vector(rng, static_cast<std::size_t>(p_start.size()), 0.5 * spread);
  const ParameterHomotopy leg1(lin, p_start, mid);
  const SegmentOutcome a = track_segment(leg1, z, 1.0, 0.0, cfg, ws);
  if (!a.reached) return s;
  const ParameterHomotopy leg2(lin, mid, p_end);
  TrackedSolution t = track_path(leg2, a.z, cfg, ws);
  t.steps += a.steps;
  if (t.is_regular() || s.status == PathStatus::failed) return t;
  return s;
}

}  // namespace

ParameterMoveReport parameter_homotopy(const ExpressionSystem& system, const CVector& p_start,
                                       const std::vector<CVector>& starts, const CVector& p_end,
                                       const TrackerConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Linearization lin(system);
  struct Out {
    TrackedSolution s;
    bool retried = false;
  };
  const auto res = parallel_map<Out>(
      starts.size(), cfg.threads, [] { return HomotopyWorkspace{}; },
      [&](HomotopyWorkspace& ws, std::size_t k) {
        Out o;
        o.s = move_one(lin, p_start, starts[k], p_end, cfg, ws, k, o.retried);
        o.s.start_index = k;
        return o;
      });
  ParameterMoveReport r;
  for (const auto& o : res) {
    r.endpoints.push_back(o.s);
    if (o.retried) ++r.retried;
    if (!o.s.is_regular()) ++r.failures;
  }
  r.seconds = seconds_since(t0);
  return r;
}

MonodromyReport monodromy_solve(const ExpressionSystem& system, const CVector& params,
                                const std::vector<CVector>& seeds, const TrackerConfig& cfg,
                                const MonodromyOptions& opts) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Linearization lin(system);
  MonodromyReport r;
  r.parameters = params;
  {
    HomotopyWorkspace ws;
    for (const auto& z : seeds) {
      const TrackedSolution s = classify_endpoint(lin, params, z, cfg, ws);
      if (!s.is_regular()) continue;
      bool known = false;
      for (const auto& o : r.solutions) known = known || scaled_distance(o, s.point) < cfg.dedup_tol;
      if (!known) r.solutions.push_back(s.point);
    }
  }
  if (r.solutions.empty()) {
    r.warning = "no regular seed solution";
    r.seconds = seconds_since(t0);
    return r;
  }

  std::mt19937_64 rng(cfg.rng_seed + 0x51ed2701ull);
  const double scale = opts.loop_scale * std::max(1.0, max_norm(params));
  std::size_t quiet = 0;
  while (r.loops < opts.max_loops && quiet < opts.stable_loops) {
    ++r.loops;
    const auto n = static_cast<std::size_t>(params.size());
    // every other loop is a jittered rotation of the base point through
    // thirds of a turn, which winds around the origin of parameter space
    CVector p1, p2;
    if (r.loops % 2 == 0) {
      const Complex w = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
      p1 = w * params + random_complex_vector(rng, n, 0.25 * scale);
      p2 = w * w * params + random_complex_vector(rng, n, 0.25 * scale);
    } else {
      p1 = params + random_complex_vector(rng, n, scale);
      p2 = params + random_complex_vector(rng, n, scale);
    }
    const std::vector<CVector> current = r.solutions;
    const auto ends = parallel_map<std::optional<CVector>>(
        current.size(), cfg.threads, [] { return HomotopyWorkspace{}; },
        [&](HomotopyWorkspace& ws, std::size_t k) -> std::optional<CVector> {
          const ParameterHomotopy l1(lin, params, p1), l2(lin, p1, p2), l3(lin, p2, params);
          const SegmentOutcome a = track_segment(l1, current[k], 1.0, 0.0, cfg, ws);
          if (!a.reached) return std::nullopt;
          const SegmentOutcome b = track_segment(l2, a.z, 1.0, 0.0, cfg, ws);
          if (!b.reached) return std::nullopt;
          const TrackedSolution c = track_path(l3, b.z, cfg, ws);
          if (!c.is_regular()) return std::nullopt;
          return c.point;
        });
    std::size_t added = 0;
    for (const auto& e : ends) {
      if (!e) continue;
      bool known = false;
      for (const auto& o : r.solutions)
        if (scaled_distance(o, *e) < cfg.dedup_tol) {
          known = true;
          break;
        }
      if (!known) {
        r.solutions.push_back(*e);
        ++added;
      }
    }
    quiet = added == 0 ? quiet + 1 : 0;
  }
  r.stabilized = quiet >= opts.stable_loops;
  if (!r.stabilized) r.warning = "loop budget exhausted before the solution count stabilized";
  if (r.solutions.size() == 1 && r.stabilized) r.warning = "no growth from the seed";
  r.seconds = seconds_since(t0);
  return r;
}

}  // namespace tensegrity
