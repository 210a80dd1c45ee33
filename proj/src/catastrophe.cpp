#include "tensegrity/catastrophe.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include "tensegrity/parallel.hpp"

namespace tensegrity {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_abs(const CVector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

/// F(w; p) - t c with c = F(w0; p): w0 solves it at t = 1.
class OffsetHomotopy final : public Homotopy {
 public:
  OffsetHomotopy(const Linearization& lin, CVector params, const CVector& w0) : lin_(lin), params_(std::move(params)) {
    Linearization::Workspace ws;
    lin_.evaluate(w0, params_, ws, &offset_, nullptr, nullptr);
  }
  std::size_t dimension() const override { return lin_.n_variables(); }
  void evaluate(const CVector& z, double t, HomotopyWorkspace& ws, CVector* h, CMatrix* hz,
                CVector* ht) const override {
    lin_.evaluate(z, params_, ws.lin, &ws.f, hz, nullptr);
    if (h) *h = ws.f - t * offset_;
    if (ht) *ht = -offset_;
  }
  const Linearization& target() const override { return lin_; }
  const CVector& target_parameters() const override { return params_; }

 private:
  const Linearization& lin_;
  CVector params_;
  CVector offset_;
};

void require_nondegenerate(const FrameworkModel& m) {
  const auto& q = m.energy_system();
  if (q.store().is_constant(q.outputs()[0]))
    throw DegenerateSystemError(
        "the energy is constant, so every feasible configuration is critical and no finite witness exists");
  if (m.n_control() == 0) throw DegenerateSystemError("the framework has no control parameters");
}

bool contains(const std::vector<CVector>& set, const CVector& z, double tol) {
  for (const auto& s : set)
    if (scaled_distance(s, z) < tol) return true;
  return false;
}

std::vector<CVector> newton_homotopy_seeds(const Linearization& lin, const CVector& params, std::size_t attempts,
                                           std::mt19937_64& rng, const TrackerConfig& cfg) {
  std::vector<CVector> seeds;
  HomotopyWorkspace ws;
  for (std::size_t k = 0; k < attempts; ++k) {
    const CVector w0 = random_complex_vector(rng, lin.n_variables());
    const OffsetHomotopy h(lin, params, w0);
    const TrackedSolution s = track_path(h, w0, cfg, ws);
    if (s.is_regular() && !contains(seeds, s.point, cfg.dedup_tol)) seeds.push_back(s.point);
  }
  return seeds;
}

CVector core_of(const CVector& z, std::size_t n) {
  CVector c(static_cast<Eigen::Index>(n) + 1);
  c << z.head(static_cast<Eigen::Index>(n)), z[z.size() - 1];
  return c;
}

constexpr double kClusterTol = 1e-3;
// paths into a k-fold point stop about (endgame)^(1/k) apart
constexpr double kSingularClusterTol = 1e-2;
// endpoints on excess components stall well above this
constexpr double kSingularResidual = 1e-6;

/// Finite solutions of a total-degree solve. Singular endpoints near one
/// another are a multiple point and merge into one entry; a lone singular
/// endpoint is left out and counted in `loose`.
std::vector<CVector> finite_points(const SolveReport& r, std::size_t n, std::vector<int>& sizes, std::size_t& loose) {
  std::vector<CVector> pts;
  std::vector<bool> regular;
  for (const auto& s : r.solutions) {
    pts.push_back(s.point);
    regular.push_back(true);
  }
  for (const auto& e : r.endpoints)
    if (e.status == PathStatus::singular && e.residual < kSingularResidual) {
      pts.push_back(e.point);
      regular.push_back(false);
    }
  std::vector<CVector> out;
  std::vector<bool> used(pts.size(), false);
  sizes.clear();
  loose = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (used[i]) continue;
    CVector sum = pts[i];
    int count = 1;
    bool any_regular = regular[i];
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      if (!used[j] && scaled_distance(core_of(pts[i], n), core_of(pts[j], n)) <
                          (regular[i] && regular[j] ? kClusterTol : kSingularClusterTol)) {
        used[j] = true;
        sum += pts[j];
        ++count;
        any_regular = any_regular || regular[j];
      }
    if (count == 1 && !any_regular) {
      ++loose;
      continue;
    }
    out.push_back(sum / static_cast<double>(count));
    sizes.push_back(count);
  }
  return out;
}

struct LineDraw {
  CVector chart, base, dir;
};

LineDraw draw_line(const FrameworkModel& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LineDraw d;
  d.chart = random_complex_vector(rng, m.layout().n());
  d.base = random_complex_vector(rng, m.n_control());
  d.dir = random_complex_vector(rng, m.n_control());
  return d;
}

// sums of t on parallel lines agree to this, relative to the sum of |t|;
// one missing point out of a few hundred leaves about 1e-9
constexpr double kTraceTol = 1e-11;

/// Moves the set to the lines base +- s u and compares the sums of the line
/// coordinate: it is linear in s exactly when the set is a union of whole
/// components of the curve. Returns the relative defect, infinite when a
/// path does not end regular.
double trace_defect(const PseudoWitnessSet& w, const std::vector<CVector>& pts, std::mt19937_64& rng,
                    const TrackerConfig& cfg) {
  const std::size_t ti = w.system.t_index();
  const CVector u = random_complex_vector(rng, static_cast<std::size_t>(w.base.size()));
  const CVector p0 = w.system.line_parameters(w.base, w.dir);
  Complex sum0 = 0.0;
  double scale = 0.0;
  for (const auto& z : pts) {
    sum0 += z[static_cast<Eigen::Index>(ti)];
    scale += std::abs(z[static_cast<Eigen::Index>(ti)]);
  }
  Complex sums[2];
  for (int side = 0; side < 2; ++side) {
    const CVector base = side == 0 ? CVector(w.base + u) : CVector(w.base - u);
    const auto r = parameter_homotopy(w.system.system, p0, pts, w.system.line_parameters(base, w.dir), cfg);
    sums[side] = 0.0;
    for (const auto& e : r.endpoints) {
      if (!e.is_regular()) return std::numeric_limits<double>::infinity();
      sums[side] += e.point[static_cast<Eigen::Index>(ti)];
      scale += std::abs(e.point[static_cast<Eigen::Index>(ti)]);
    }
  }
  return std::abs(sums[0] + sums[1] - 2.0 * sum0) / std::max(1.0, scale);
}

void fill_by_monodromy(PseudoWitnessSet& w, const TrackerConfig& cfg, const WitnessOptions& opts) {
  const Linearization lin(w.system.system);
  const CVector params = w.parameters();
  std::mt19937_64 rng(w.seed + 0x5eedull);
  std::vector<CVector> known = newton_homotopy_seeds(lin, params, opts.seed_attempts, rng, cfg);
  const std::size_t rounds = std::max<std::size_t>(6, opts.max_rounds);
  w.complete = false;
  for (std::size_t round = 0; round < rounds; ++round) {
    if (known.empty()) {
      known = newton_homotopy_seeds(lin, params, opts.seed_attempts, rng, cfg);
      if (known.empty()) continue;
    }
    TrackerConfig mcfg = cfg;
    mcfg.rng_seed = w.seed + 1000 * static_cast<std::uint64_t>(round);
    const MonodromyReport mr = monodromy_solve(w.system.system, params, known, mcfg, opts.monodromy);
    known = mr.solutions;
    if (!mr.warning.empty()) w.warning = mr.warning;
    // further independent seeds must all land on known points
    const auto extra = newton_homotopy_seeds(lin, params, opts.confirm_seeds, rng, cfg);
    std::size_t fresh = 0;
    for (const auto& e : extra)
      if (!contains(known, e, cfg.dedup_tol)) {
        known.push_back(e);
        ++fresh;
      }
    if (fresh > 0) continue;
    if (opts.expected > 0 ? known.size() >= opts.expected : trace_defect(w, known, rng, cfg) < kTraceTol) {
      w.complete = true;
      w.warning.clear();
      break;
    }
    w.complete = false;
    w.warning = "monodromy stopped before the trace test passed";
  }
  w.solutions = std::move(known);
  w.multiplicity.assign(w.solutions.size(), 1);
  if (w.solutions.empty()) {
    w.complete = false;
    w.warning = "no seed solution found";
  }
}

}  // namespace

PseudoWitnessSet witness_on_generic_line(std::shared_ptr<const FrameworkModel> model, const TrackerConfig& cfg,
                                         const WitnessOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  require_nondegenerate(*model);
  PseudoWitnessSet w;
  w.model = model;
  w.seed = cfg.rng_seed;
  const LineDraw d = draw_line(*model, cfg.rng_seed);
  w.system = model->catastrophe_system(d.chart);
  w.base = d.base;
  w.dir = d.dir;

  double bezout = 1.0;
  for (int deg : w.system.system.degrees()) bezout *= deg;
  if (bezout <= static_cast<double>(opts.total_degree_budget)) {
    const SolveReport r = solve_total_degree(w.system.system, w.parameters(), cfg);
    std::size_t loose = 0;
    w.solutions = finite_points(r, w.system.layout.n(), w.multiplicity, loose);
    w.complete = r.ok();
    w.method = "total_degree";
    if (w.solutions.empty() && loose > 0)
      throw DegenerateSystemError("all endpoints are singular; the critical set is not finite over a generic line");
  } else {
    w.method = "monodromy";
    fill_by_monodromy(w, cfg, opts);
  }
  w.seconds = seconds_since(t0);
  return w;
}

PseudoWitnessSet witness_by_monodromy(std::shared_ptr<const FrameworkModel> model, const TrackerConfig& cfg,
                                      const WitnessOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  require_nondegenerate(*model);
  PseudoWitnessSet w;
  w.model = model;
  w.seed = cfg.rng_seed;
  const LineDraw d = draw_line(*model, cfg.rng_seed);
  w.system = model->catastrophe_system(d.chart);
  w.base = d.base;
  w.dir = d.dir;
  w.method = "monodromy";
  fill_by_monodromy(w, cfg, opts);
  w.seconds = seconds_since(t0);
  return w;
}

PseudoWitnessSet move_witness(const PseudoWitnessSet& w, const CVector& base, const CVector& dir,
                              const TrackerConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  PseudoWitnessSet out = w;
  out.base = base;
  out.dir = dir;
  out.solutions.clear();
  out.multiplicity.clear();
  const auto r = parameter_homotopy(w.system.system, w.parameters(), w.solutions, out.parameters(), cfg);
  for (std::size_t k = 0; k < r.endpoints.size(); ++k) {
    const auto& e = r.endpoints[k];
    if (e.is_regular() && !contains(out.solutions, e.point, cfg.dedup_tol)) {
      out.solutions.push_back(e.point);
      out.multiplicity.push_back(w.multiplicity.empty() ? 1 : w.multiplicity[k]);
    }
  }
  out.complete = w.complete && r.failures == 0;
  out.method = "moved";
  out.seconds = seconds_since(t0);
  return out;
}

DegreeReport catastrophe_degree(std::shared_ptr<const FrameworkModel> model, const TrackerConfig& cfg,
                                const WitnessOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  DegreeReport r;
  const PseudoWitnessSet first = witness_on_generic_line(model, cfg, opts);
  TrackerConfig second_cfg = cfg;
  second_cfg.rng_seed = cfg.rng_seed + 7919;
  double bezout = 1.0;
  for (int deg : first.system.system.degrees()) bezout *= deg;
  // small systems are re-solved in full; multiple points defeat monodromy
  const bool cheap = first.method == "total_degree" && bezout <= 0.1 * static_cast<double>(opts.total_degree_budget);
  const PseudoWitnessSet second =
      cheap ? witness_on_generic_line(model, second_cfg, opts) : witness_by_monodromy(model, second_cfg, opts);
  r.degree = first.degree();
  r.cross_check = second.degree();
  r.first_method = first.method;
  r.second_method = second.method;
  r.seconds = seconds_since(t0);
  if (r.degree != r.cross_check)
    throw std::runtime_error("catastrophe degree differs between lines: " + std::to_string(r.degree) + " (" +
                             first.method + ") vs " + std::to_string(r.cross_check) + " (" + second.method + ")");
  return r;
}

std::vector<CatastrophePoint> SliceIntersection::catastrophe_points() const {
  std::vector<CatastrophePoint> out;
  for (const auto& p : points)
    if (p.delta_nonneg) out.push_back(p);
  return out;
}

namespace {

std::optional<CatastrophePoint> make_point(const PseudoWitnessSet& w, const CVector& z, const CVector& params,
                                           const RVector& base, const RVector& dir, Linearization::Workspace& ws,
                                           const Linearization& lin) {
  const auto& lay = w.system.layout;
  const auto n = static_cast<Eigen::Index>(lay.n());
  CVector core(n + 1);
  core << z.head(n), z[static_cast<Eigen::Index>(w.system.t_index())];
  const double scale = std::max(1.0, max_abs(core));
  double imag = 0.0;
  for (Eigen::Index k = 0; k < core.size(); ++k) imag = std::max(imag, std::abs(core[k].imag()));
  if (imag > 1e-8 * scale) return std::nullopt;

  CatastrophePoint p;
  p.z = z;
  p.t = core[n].real();
  p.y = base + p.t * dir;
  CVector f;
  lin.evaluate(z, params, ws, &f, nullptr, nullptr);
  p.dl_residual = max_abs(f.head(n));
  const CVector v = z.segment(n, n);
  p.hv_residual = f.segment(n, n).norm() / std::max(1e-300, v.norm());
  p.chart_residual = std::abs(f[2 * n]);
  if (lay.n_cables > 0) {
    const RVector delta = z.segment(static_cast<Eigen::Index>(lay.delta_offset()), static_cast<Eigen::Index>(lay.n_cables)).real();
    p.delta_min = delta.minCoeff();
    p.delta_nonneg = p.delta_min >= -1e-8;
    p.borderline = delta.cwiseAbs().minCoeff() < 1e-6;
    const RVector rest = w.model->rest_lengths(core.head(static_cast<Eigen::Index>(lay.n_internal)).real(), p.y);
    p.taut = (delta - rest).minCoeff() >= -1e-9;
  } else {
    p.delta_min = 0.0;
    p.delta_nonneg = true;
    p.taut = true;
  }
  return p;
}

SliceIntersection intersect_impl(const PseudoWitnessSet& w, const ControlSlice& line, const TrackerConfig& cfg,
                                 bool segment) {
  const auto& m = *w.model;
  line.validate(m.n_control());
  if (line.dimension() != 1)
    throw FrameworkError("intersections need a one-dimensional slice, got dimension " + std::to_string(line.dimension()));
  const RVector& base = line.base;
  const RVector& dir = line.directions.front();
  const CVector target = w.system.line_parameters(base.cast<Complex>(), dir.cast<Complex>());
  SliceIntersection out;
  std::vector<CVector> ends;
  const bool multiple = std::any_of(w.multiplicity.begin(), w.multiplicity.end(), [](int m) { return m > 1; });
  if (multiple) {
    // multiple points cannot be transported; solve on the target line directly
    const SolveReport r = solve_total_degree(w.system.system, target, cfg);
    std::vector<int> sizes;
    std::size_t loose = 0;
    ends = finite_points(r, w.system.layout.n(), sizes, loose);
    out.transported = ends.size();
    out.failures = r.n_failed;
  } else {
    const auto moved = parameter_homotopy(w.system.system, w.parameters(), w.solutions, target, cfg);
    for (const auto& e : moved.endpoints) {
      if (e.is_regular()) {
        ends.push_back(e.point);
        ++out.transported;
      } else {
        ++out.failures;
        ends.emplace_back();
      }
    }
  }

  const Linearization lin(w.system.system);
  Linearization::Workspace ws;
  for (std::size_t k = 0; k < ends.size(); ++k) {
    if (ends[k].size() == 0) continue;
    auto p = make_point(w, ends[k], target, base, dir, ws, lin);
    if (!p) continue;
    if (segment && (p->t < 0.0 || p->t > 1.0)) continue;
    p->witness_index = k;
    out.points.push_back(std::move(*p));
  }
  out.complete = out.failures == 0 && w.complete;
  std::sort(out.points.begin(), out.points.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  return out;
}

}  // namespace

SliceIntersection intersect_slice(const PseudoWitnessSet& w, const ControlSlice& line, const TrackerConfig& cfg,
                                  bool segment) {
  return intersect_impl(w, line, cfg, segment);
}

std::vector<CatastrophePoint> sample_catastrophe(const PseudoWitnessSet& w, const Rect& region, std::size_t n_lines,
                                                 const TrackerConfig& cfg) {
  if (w.model->n_control() != 2) throw FrameworkError("sampling needs a two-dimensional control chart");
  if (n_lines == 0) return {};
  std::mt19937_64 rng(cfg.rng_seed + 0xa11ce5ull);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double wdt = region.x1 - region.x0, hgt = region.y1 - region.y0;
  const double diag = std::hypot(wdt, hgt);
  const std::size_t per_pencil = (n_lines + 2) / 3;
  std::vector<ControlSlice> lines;
  for (std::size_t k = 0; k < n_lines; ++k) {
    const double jitter = u(rng);
    const double frac = (static_cast<double>(k / 3) + jitter) / static_cast<double>(per_pencil);
    ControlSlice s;
    s.base.resize(2);
    RVector d(2);
    switch (k % 3) {
      case 0:
        s.base << region.x0, region.y0 + frac * hgt;
        d << wdt, 0.0;
        break;
      case 1:
        s.base << region.x0 + frac * wdt, region.y0;
        d << 0.0, hgt;
        break;
      default: {
        const double cx = region.x0 + u(rng) * wdt, cy = region.y0 + u(rng) * hgt;
        const double ang = u(rng) * std::numbers::pi;
        d << std::cos(ang) * diag, std::sin(ang) * diag;
        s.base << cx - 0.5 * d[0], cy - 0.5 * d[1];
      }
    }
    s.directions.push_back(d);
    lines.push_back(s);
  }
  TrackerConfig inner = cfg;
  inner.threads = 1;
  const auto per_line = parallel_map<std::vector<CatastrophePoint>>(
      lines.size(), cfg.threads, [] { return 0; },
      [&](int&, std::size_t k) {
        std::vector<CatastrophePoint> pts;
        for (auto& p : intersect_impl(w, lines[k], inner, false).points) {
          if (!region.contains(p.y[0], p.y[1])) continue;
          p.line_id = k;
          pts.push_back(std::move(p));
        }
        return pts;
      });
  std::vector<CatastrophePoint> all;
  for (const auto& v : per_line) all.insert(all.end(), v.begin(), v.end());
  return all;
}

std::vector<ParityRow> crossing_parity_check(const std::vector<CatastrophePoint>& sample,
                                             const std::vector<ProbePair>& probes,
                                             const std::vector<std::pair<int, int>>& counts, double tube) {
  if (counts.size() != probes.size()) throw std::invalid_argument("one count pair per probe is required");
  std::vector<ParityRow> rows;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    const RVector& a = probes[k].a;
    const RVector& b = probes[k].b;
    const RVector ab = b - a;
    const double len2 = ab.squaredNorm();
    ParityRow row;
    std::vector<double> hits;
    for (const auto& p : sample) {
      if (!p.delta_nonneg || !p.taut) continue;
      double s = len2 > 0.0 ? (p.y - a).dot(ab) / len2 : 0.0;
      s = std::clamp(s, 0.0, 1.0);
      if ((a + s * ab - p.y).norm() < tube) hits.push_back(s);
    }
    // neighbouring lines hit the same crossing; count groups along the probe
    std::sort(hits.begin(), hits.end());
    const double gap = len2 > 0.0 ? 2.0 * tube / std::sqrt(len2) : 1.0;
    for (std::size_t i = 0; i < hits.size(); ++i)
      if (i == 0 || hits[i] - hits[i - 1] > gap) ++row.crossings;
    row.count_a = counts[k].first;
    row.count_b = counts[k].second;
    row.consistent = ((row.crossings % 2) == 1) == (row.count_a != row.count_b);
    rows.push_back(row);
  }
  return rows;
}

std::string system_hash(const FrameworkModel& model) {
  std::string text;
  const auto& dl = model.critical_system();
  for (const auto& n : model.critical_names()) text += n + ",";
  for (const auto& n : model.control_names()) text += n + ",";
  for (std::size_t k = 0; k < dl.n_outputs(); ++k) text += dl.to_string(k) + ";";
  return fnv1a_hex(text);
}

Json witness_to_json(const PseudoWitnessSet& w) {
  Json sols = Json::array();
  for (const auto& s : w.solutions) sols.push_back(to_json(s));
  return Json{{"hash", system_hash(*w.model)},
              {"chart", to_json(w.system.chart)},
              {"base", to_json(w.base)},
              {"dir", to_json(w.dir)},
              {"solutions", sols},
              {"seed", w.seed},
              {"method", w.method},
              {"complete", w.complete},
              {"multiplicity", w.multiplicity},
              {"degree", w.degree()}};
}

PseudoWitnessSet witness_from_json(const Json& j, std::shared_ptr<const FrameworkModel> model) {
  if (!j.is_object() || j.value("hash", std::string()) != system_hash(*model))
    throw InputError("witness cache does not belong to this framework");
  PseudoWitnessSet w;
  w.model = model;
  w.system = model->catastrophe_system(cvector_from_json(j.at("chart")));
  w.base = cvector_from_json(j.at("base"));
  w.dir = cvector_from_json(j.at("dir"));
  for (const auto& s : j.at("solutions")) w.solutions.push_back(cvector_from_json(s));
  w.seed = j.value("seed", std::uint64_t{0});
  w.method = j.value("method", std::string("cache"));
  w.complete = j.value("complete", false);
  if (j.contains("multiplicity")) w.multiplicity = j.at("multiplicity").get<std::vector<int>>();
  else w.multiplicity.assign(w.solutions.size(), 1);
  for (const auto& s : w.solutions)
    if (static_cast<std::size_t>(s.size()) != w.system.n_variables())
      throw InputError("witness cache solution has the wrong length");
  return w;
}

Json to_json(const CatastrophePoint& p) {
  return Json{{"y", to_json(p.y)},
              {"t", p.t},
              {"is_C", p.delta_nonneg},
              {"taut", p.taut},
              {"borderline", p.borderline},
              {"delta_min", p.delta_min},
              {"residual", std::max({p.dl_residual, p.hv_residual, p.chart_residual})},
              {"line_id", p.line_id}};
}

}  // namespace tensegrity
