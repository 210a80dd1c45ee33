#include "tensegrity/equilibria.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include "tensegrity/parallel.hpp"

namespace tensegrity {

bool CriticalPoint::taut() const {
  return std::all_of(tension.begin(), tension.end(), [](bool b) { return b; });
}

RVector CriticalPoint::packed() const {
  RVector z(x.size() + delta.size() + lambda.size());
  z << x, delta, lambda;
  return z;
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::stable: return "stable";
    case Verdict::unstable: return "unstable";
    case Verdict::borderline: return "borderline";
  }
  return "?";
}

CriticalPoint make_critical_point(const FrameworkModel& model, const RVector& y, const RVector& packed) {
  const auto& lay = model.layout();
  if (static_cast<std::size_t>(packed.size()) != lay.n())
    throw DimensionError("critical point has length " + std::to_string(packed.size()) + ", expected " +
                         std::to_string(lay.n()));
  const auto ni = static_cast<Eigen::Index>(lay.n_internal);
  const auto nc = static_cast<Eigen::Index>(lay.n_cables);
  CriticalPoint p;
  p.x = packed.head(ni);
  p.delta = packed.segment(ni, nc);
  p.lambda = packed.tail(static_cast<Eigen::Index>(lay.n_edges));
  const CVector yc = y.cast<Complex>();
  p.energy = model.energy_system().evaluate(packed.head(ni + nc).cast<Complex>(), yc)[0].real();
  const CVector f = model.critical_system().evaluate(packed.cast<Complex>(), yc);
  p.residual = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
  const RVector rest = model.rest_lengths(p.x, y);
  p.delta_nonneg = true;
  for (Eigen::Index k = 0; k < nc; ++k) {
    p.tension.push_back(p.delta[k] >= rest[k] - 1e-9 * std::max(1.0, std::abs(rest[k])));
    if (p.delta[k] < -1e-8) p.delta_nonneg = false;
  }
  return p;
}

std::vector<CriticalPoint> real_filter(const FrameworkModel& model, const RVector& y,
                                       const std::vector<TrackedSolution>& solutions, double tol) {
  std::vector<CriticalPoint> out;
  for (const auto& s : solutions) {
    if (s.point.size() == 0) continue;
    const double scale = std::max(1.0, s.point.cwiseAbs().maxCoeff());
    if (s.point.imag().cwiseAbs().maxCoeff() >= tol * scale) continue;
    out.push_back(make_critical_point(model, y, s.point.real()));
  }
  return out;
}

StabilityCertificate certify_stability(const FrameworkModel& model, const CriticalPoint& point, const RVector& y,
                                       const StabilityOptions& opts) {
  const auto& lay = model.layout();
  const auto np = static_cast<Eigen::Index>(lay.n_primal());
  const auto ne = static_cast<Eigen::Index>(lay.n_edges);
  const Linearization lin(model.critical_system());
  Linearization::Workspace ws;
  CMatrix j;
  lin.evaluate(point.packed().cast<Complex>(), y.cast<Complex>(), ws, nullptr, &j, nullptr);
  const RMatrix h = j.topLeftCorner(np, np).real();
  const RMatrix dg = j.bottomLeftCorner(ne, np).real();

  RMatrix v;
  if (ne == 0) {
    v = RMatrix::Identity(np, np);
  } else {
    Eigen::ColPivHouseholderQR<RMatrix> qr(dg.transpose());
    qr.setThreshold(1e-10);
    const auto rank = qr.rank();
    if (rank < ne) {
      std::string where;
      for (Eigen::Index k = 0; k < point.x.size(); ++k)
        where += (k ? ", " : "") + model.internal_names()[static_cast<std::size_t>(k)] + "=" + format_double(point.x[k]);
      throw ConstraintSingularityError("constraint Jacobian has rank " + std::to_string(rank) + " < " +
                                       std::to_string(ne) + " at (" + where + ")");
    }
    const RMatrix q = qr.householderQ() * RMatrix::Identity(np, np);
    v = q.rightCols(np - rank);
  }

  StabilityCertificate c;
  c.null_basis_dim = static_cast<std::size_t>(v.cols());
  RMatrix m = v.transpose() * h * v;
  m = 0.5 * (m + m.transpose()).eval();
  c.projected_hessian = m;
  if (m.size() == 0) {
    c.verdict = Verdict::stable;
    c.min_eigenvalue = std::numeric_limits<double>::infinity();
    return c;
  }
  const RVector eig = Eigen::SelfAdjointEigenSolver<RMatrix>(m, Eigen::EigenvaluesOnly).eigenvalues();
  c.min_eigenvalue = eig.minCoeff();
  c.pd_tol = opts.pd_rel * eig.cwiseAbs().maxCoeff();
  const RMatrix shifted = m - c.pd_tol * RMatrix::Identity(m.rows(), m.cols());
  const Eigen::LLT<RMatrix> llt(shifted);
  if (llt.info() == Eigen::Success && c.min_eigenvalue > c.pd_tol) c.verdict = Verdict::stable;
  else if (std::abs(c.min_eigenvalue) <= c.pd_tol) c.verdict = Verdict::borderline;
  else c.verdict = Verdict::unstable;
  return c;
}

StabilityReport classify_critical(const FrameworkModel& model, const RVector& y,
                                  const std::vector<TrackedSolution>& endpoints, const StabilityOptions& opts) {
  StabilityReport r;
  r.y = y;
  std::vector<TrackedSolution> regular;
  for (const auto& e : endpoints)
    if (e.is_regular()) regular.push_back(e);
  r.counts.n_complex = regular.size();
  r.all_critical = real_filter(model, y, regular);
  std::stable_sort(r.all_critical.begin(), r.all_critical.end(), [](const auto& a, const auto& b) {
    if (a.energy != b.energy) return a.energy < b.energy;
    return std::lexicographical_compare(a.x.begin(), a.x.end(), b.x.begin(), b.x.end());
  });
  r.counts.n_real = r.all_critical.size();
  for (const auto& p : r.all_critical) {
    if (!p.delta_nonneg) {
      r.certificates.emplace_back();
      continue;
    }
    ++r.counts.n_delta_nonneg;
    try {
      r.certificates.push_back(certify_stability(model, p, y, opts));
    } catch (const ConstraintSingularityError& e) {
      r.certificates.emplace_back();
      r.warnings.push_back(e.what());
      continue;
    }
    const auto& c = *r.certificates.back();
    if (c.verdict != Verdict::stable) continue;
    if (p.taut()) {
      r.stable.push_back({p, c});
    } else {
      ++r.counts.n_stable_slack;
      r.warnings.push_back("a stable point of the algebraic energy has a slack cable; excluded");
    }
  }
  r.counts.n_stable = r.stable.size();
  return r;
}

EquilibriumSeed generic_seed(const FrameworkModel& model, const TrackerConfig& cfg) {
  std::mt19937_64 rng(cfg.rng_seed ^ 0x9e3779b97f4a7c15ull);
  EquilibriumSeed s;
  s.params = random_complex_vector(rng, model.n_control());
  const SolveReport r = solve_total_degree(model.critical_system(), s.params, cfg);
  for (const auto& e : r.solutions) s.solutions.push_back(e.point);
  return s;
}

StabilityReport stability_set(const FrameworkModel& model, const RVector& y, const TrackerConfig& cfg,
                              const EquilibriumSeed* seed, const StabilityOptions& opts) {
  if (static_cast<std::size_t>(y.size()) != model.n_control())
    throw DimensionError("controls have length " + std::to_string(y.size()) + ", expected " +
                         std::to_string(model.n_control()));
  std::vector<TrackedSolution> ends;
  std::size_t failures = 0;
  std::vector<std::string> notes;
  if (seed) {
    const auto moved = parameter_homotopy(model.critical_system(), seed->params, seed->solutions, y.cast<Complex>(), cfg);
    failures = moved.failures;
    ends = dedup_regular(moved.endpoints, cfg.dedup_tol);
    std::size_t regular = 0;
    for (const auto& e : moved.endpoints) regular += e.is_regular();
    if (ends.size() < regular) notes.push_back("paths converged to the same endpoint");
  } else {
    const SolveReport r = solve_total_degree(model.critical_system(), y.cast<Complex>(), cfg);
    failures = r.n_failed;
    ends = r.solutions;
  }
  StabilityReport rep = classify_critical(model, y, ends, opts);
  rep.failures = failures;
  rep.complete = failures == 0 && notes.empty();
  rep.warnings.insert(rep.warnings.end(), notes.begin(), notes.end());
  return rep;
}

EquilibriumDegreeReport equilibrium_degree(const FrameworkModel& model, const TrackerConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  EquilibriumDegreeReport rep;
  std::size_t counts[2] = {0, 0};
  for (int k = 0; k < 2; ++k) {
    TrackerConfig c = cfg;
    c.rng_seed = cfg.rng_seed + 1000003ull * static_cast<std::uint64_t>(k);
    if (k == 1) c.gamma.reset();
    std::mt19937_64 rng(c.rng_seed);
    const CVector params = random_complex_vector(rng, model.n_control());
    const SolveReport r = solve_total_degree(model.critical_system(), params, c);
    if (r.solutions.empty() && r.n_singular > 0)
      throw std::runtime_error("every endpoint is singular; the critical set is not finite at a generic control");
    counts[k] = r.solutions.size();
    rep.paths = r.paths;
    for (const auto& s : r.solutions) rep.max_residual = std::max(rep.max_residual, s.residual);
  }
  rep.degree = counts[0];
  rep.second = counts[1];
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (counts[0] != counts[1])
    throw std::runtime_error("equilibrium counts differ between generic points: " + std::to_string(counts[0]) +
                             " vs " + std::to_string(counts[1]) + "; review the tracker tolerances");
  return rep;
}

RVector ChamberGrid::point(std::size_t i, std::size_t j) const {
  RVector y(2);
  y << x0 + (static_cast<double>(i) + 0.5) * (x1 - x0) / static_cast<double>(nx),
      y0 + (static_cast<double>(j) + 0.5) * (y1 - y0) / static_cast<double>(ny);
  return y;
}

ChamberGrid chamber_scan(const FrameworkModel& model, double x0, double x1, double y0, double y1, std::size_t nx,
                         std::size_t ny, const TrackerConfig& cfg, const EquilibriumSeed& seed) {
  if (model.n_control() != 2) throw FrameworkError("chamber scans need a two-dimensional control chart");
  if (nx == 0 || ny == 0) throw std::invalid_argument("grid resolution must be positive");
  ChamberGrid g{x0, x1, y0, y1, nx, ny, {}};
  TrackerConfig inner = cfg;
  inner.threads = 1;
  g.counts = parallel_map<int>(
      nx * ny, cfg.threads, [] { return 0; },
      [&](int&, std::size_t k) {
        const StabilityReport r = stability_set(model, g.point(k % nx, k / nx), inner, &seed);
        return r.complete ? static_cast<int>(r.n_stable()) : -1;
      });
  return g;
}

TrueEnergyMinima::TrueEnergyMinima(const FrameworkModel& model, const TrackerConfig& cfg) : model_(&model) {
  const auto& fw = model.framework();
  const std::size_t nc = fw.cables.size();
  if (nc > 8) throw FrameworkError("true-energy minima support at most 8 cables");
  for (std::size_t mask = (std::size_t{1} << nc); mask-- > 1;) {
    Regime r;
    ElasticFramework sub = fw;
    sub.cables.clear();
    for (std::size_t k = 0; k < nc; ++k) {
      r.taut.push_back((mask >> k) & 1);
      if (r.taut.back()) sub.cables.push_back(fw.cables[k]);
    }
    try {
      r.model = mask + 1 == (std::size_t{1} << nc) ? std::shared_ptr<const FrameworkModel>(&model, [](auto*) {})
                                                   : std::make_shared<const FrameworkModel>(sub, model.partition());
    } catch (const FrameworkError&) {
      continue;  // a scalar only used by the removed cables
    }
    r.seed = generic_seed(*r.model, cfg);
    regimes_.push_back(std::move(r));
  }
}

std::vector<RegimeMinimum> TrueEnergyMinima::minima(const RVector& y, const TrackerConfig& cfg) const {
  std::vector<RegimeMinimum> out;
  const auto& cables = model_->framework().cables;
  for (const auto& r : regimes_) {
    const StabilityReport rep = stability_set(*r.model, y, cfg, &r.seed);
    for (const auto& s : rep.stable) {
      const RVector len = model_->cable_lengths({s.point.x, y});
      const RVector rest = model_->rest_lengths(s.point.x, y);
      bool slack_ok = true;
      for (std::size_t k = 0; k < cables.size(); ++k)
        if (!r.taut[k] && len[static_cast<Eigen::Index>(k)] >= rest[static_cast<Eigen::Index>(k)]) slack_ok = false;
      if (slack_ok) out.push_back({r.taut, s.point, s.certificate});
    }
  }
  return out;
}

Json to_json(const CriticalPoint& p) {
  return Json{{"x", to_json(p.x)},         {"delta", to_json(p.delta)},
              {"lambda", to_json(p.lambda)}, {"energy", p.energy},
              {"tension", p.tension},        {"delta_nonneg", p.delta_nonneg},
              {"residual", p.residual}};
}

Json to_json(const StabilityCertificate& c) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < c.projected_hessian.rows(); ++i) rows.push_back(to_json(RVector(c.projected_hessian.row(i))));
  return Json{{"verdict", to_string(c.verdict)},
              {"min_eigenvalue", std::isfinite(c.min_eigenvalue) ? Json(c.min_eigenvalue) : Json(nullptr)},
              {"pd_tol", c.pd_tol},
              {"null_basis_dim", c.null_basis_dim},
              {"projected_hessian", rows}};
}

Json to_json(const StabilityReport& r) {
  Json crit = Json::array();
  for (std::size_t k = 0; k < r.all_critical.size(); ++k) {
    Json e = to_json(r.all_critical[k]);
    e["certificate"] = r.certificates[k] ? to_json(*r.certificates[k]) : Json(nullptr);
    crit.push_back(e);
  }
  Json stable = Json::array();
  for (const auto& s : r.stable) {
    Json e = to_json(s.point);
    e["certificate"] = to_json(s.certificate);
    stable.push_back(e);
  }
  return Json{{"y", to_json(r.y)},
              {"counts",
               {{"n_complex", r.counts.n_complex},
                {"n_real", r.counts.n_real},
                {"n_delta_nonneg", r.counts.n_delta_nonneg},
                {"n_stable", r.counts.n_stable},
                {"n_stable_slack", r.counts.n_stable_slack}}},
              {"critical", crit},
              {"stable", stable},
              {"failures", r.failures},
              {"complete", r.complete},
              {"warnings", r.warnings}};
}

Json seed_to_json(const EquilibriumSeed& s) {
  Json sols = Json::array();
  for (const auto& v : s.solutions) sols.push_back(to_json(v));
  return Json{{"params", to_json(s.params)}, {"solutions", sols}};
}

EquilibriumSeed seed_from_json(const Json& j) {
  EquilibriumSeed s;
  s.params = cvector_from_json(j.at("params"));
  for (const auto& v : j.at("solutions")) s.solutions.push_back(cvector_from_json(v));
  return s;
}

namespace {

struct Pin {
  int node;  // 0-based
  int a, b;  // placed nodes
  double ra, rb;
};

std::optional<Eigen::Vector2d> circle_meet(const Eigen::Vector2d& p, double ra, const Eigen::Vector2d& q, double rb,
                                           int sign) {
  const Eigen::Vector2d pq = q - p;
  const double d = pq.norm();
  if (d == 0.0 || d > ra + rb || d < std::abs(ra - rb)) return std::nullopt;
  const double along = (ra * ra - rb * rb + d * d) / (2.0 * d);
  const double h = std::sqrt(std::max(0.0, ra * ra - along * along));
  const Eigen::Vector2d perp(-pq.y() / d, pq.x() / d);
  return Eigen::Vector2d(p + along * pq / d + sign * h * perp);
}

}  // namespace

EnergyProfile energy_profile(const FrameworkModel& model, const RVector& y, std::size_t samples,
                             const std::optional<RVector>& current_x) {
  const auto& fw = model.framework();
  if (fw.dim != 2) throw FrameworkError("energy profiles need planar frameworks");
  if (samples < 3) throw std::invalid_argument("energy profiles need at least 3 samples");
  const auto& internal = model.internal_names();
  const int nn = fw.n_nodes;

  // internal coordinate slots per node
  std::vector<std::array<int, 2>> slot(static_cast<std::size_t>(nn), {-1, -1});
  std::size_t coords = 0;
  for (int i = 0; i < nn; ++i)
    for (int k = 0; k < 2; ++k) {
      const auto it = std::find(internal.begin(), internal.end(), ElasticFramework::coordinate_name(i + 1, k + 1));
      if (it != internal.end()) {
        slot[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = static_cast<int>(it - internal.begin());
        ++coords;
      }
    }
  if (coords != internal.size()) throw FrameworkError("energy profiles need every internal scalar to be a coordinate");
  std::vector<bool> placed(static_cast<std::size_t>(nn), false);
  for (int i = 0; i < nn; ++i) {
    const auto& s = slot[static_cast<std::size_t>(i)];
    if ((s[0] < 0) != (s[1] < 0)) throw FrameworkError("energy profiles need nodes that are wholly free or wholly placed");
    placed[static_cast<std::size_t>(i)] = s[0] < 0;
  }

  const RVector x0 = RVector::Zero(static_cast<Eigen::Index>(internal.size()));
  const RMatrix base = model.positions(x0, y);
  std::vector<bool> used(fw.bars.size(), false);
  auto bar_length = [&](const Bar& b) {
    if (b.length.is_fixed()) return std::get<double>(b.length.value);
    const auto& name = std::get<std::string>(b.length.value);
    if (std::find(internal.begin(), internal.end(), name) != internal.end())
      throw FrameworkError("energy profiles need bar lengths that do not vary");
    return model.scalar_value(name, x0, y);
  };
  for (std::size_t k = 0; k < fw.bars.size(); ++k)
    if (placed[static_cast<std::size_t>(fw.bars[k].i - 1)] && placed[static_cast<std::size_t>(fw.bars[k].j - 1)]) used[k] = true;

  EnergyProfile prof;
  double crank_r = 0.0;
  for (std::size_t k = 0; k < fw.bars.size() && !prof.crank_node; ++k) {
    const auto& b = fw.bars[k];
    const bool pi = placed[static_cast<std::size_t>(b.i - 1)], pj = placed[static_cast<std::size_t>(b.j - 1)];
    if (pi == pj) continue;
    prof.crank_node = pi ? b.j : b.i;
    prof.pivot_node = pi ? b.i : b.j;
    crank_r = bar_length(b);
    used[k] = true;
  }
  if (!prof.crank_node) throw FrameworkError("energy profiles need a free node on a bar about a placed node");
  placed[static_cast<std::size_t>(prof.crank_node - 1)] = true;

  std::vector<Pin> pins;
  for (bool grew = true; grew;) {
    grew = false;
    for (int u = 0; u < nn && !grew; ++u) {
      if (placed[static_cast<std::size_t>(u)]) continue;
      std::vector<std::size_t> links;
      for (std::size_t k = 0; k < fw.bars.size(); ++k) {
        const auto& b = fw.bars[k];
        const int other = b.i - 1 == u ? b.j - 1 : (b.j - 1 == u ? b.i - 1 : -1);
        if (other >= 0 && placed[static_cast<std::size_t>(other)] && !used[k]) links.push_back(k);
      }
      if (links.size() < 2) continue;
      if (links.size() > 2) throw FrameworkError("energy profiles need exactly two bars pinning each node");
      Pin p{u, 0, 0, 0.0, 0.0};
      const auto& b0 = fw.bars[links[0]];
      const auto& b1 = fw.bars[links[1]];
      p.a = b0.i - 1 == u ? b0.j - 1 : b0.i - 1;
      p.b = b1.i - 1 == u ? b1.j - 1 : b1.i - 1;
      p.ra = bar_length(b0);
      p.rb = bar_length(b1);
      used[links[0]] = used[links[1]] = true;
      placed[static_cast<std::size_t>(u)] = true;
      pins.push_back(p);
      grew = true;
    }
  }
  if (std::find(placed.begin(), placed.end(), false) != placed.end() ||
      std::find(used.begin(), used.end(), false) != used.end())
    throw FrameworkError("energy profiles need a linkage with one degree of freedom built from a crank");
  if (pins.size() > 10) throw FrameworkError("energy profiles support at most 10 pinned nodes");

  const Eigen::Vector2d pivot = base.row(prof.pivot_node - 1).transpose();
  auto configure = [&](double theta, std::size_t mask) -> std::optional<RVector> {
    RMatrix pos = base;
    pos.row(prof.crank_node - 1) = (pivot + crank_r * Eigen::Vector2d(std::cos(theta), std::sin(theta))).transpose();
    for (std::size_t k = 0; k < pins.size(); ++k) {
      const auto& p = pins[k];
      const int sign = (mask >> k) & 1 ? -1 : 1;
      const auto at = circle_meet(pos.row(p.a).transpose(), p.ra, pos.row(p.b).transpose(), p.rb, sign);
      if (!at) return std::nullopt;
      pos.row(p.node) = at->transpose();
    }
    RVector x(static_cast<Eigen::Index>(internal.size()));
    for (int i = 0; i < nn; ++i)
      for (int k = 0; k < 2; ++k)
        if (const int s = slot[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]; s >= 0) x[s] = pos(i, k);
    return x;
  };

  const std::size_t n_branches = std::size_t{1} << pins.size();
  for (std::size_t s = 0; s < samples; ++s)
    prof.theta.push_back(2.0 * std::numbers::pi * static_cast<double>(s) / static_cast<double>(samples));
  for (std::size_t mask = 0; mask < n_branches; ++mask) {
    ProfileBranch br;
    for (std::size_t k = 0; k < pins.size(); ++k) br.signs.push_back((mask >> k) & 1 ? -1 : 1);
    for (double th : prof.theta) {
      const auto x = configure(th, mask);
      br.energy.push_back(x ? model.true_energy({*x, y}) : std::numeric_limits<double>::quiet_NaN());
    }
    prof.branches.push_back(std::move(br));
  }

  if (current_x) {
    const RMatrix pos = model.positions(*current_x, y);
    const Eigen::Vector2d c = pos.row(prof.crank_node - 1).transpose() - pivot;
    double th = std::atan2(c.y(), c.x());
    if (th < 0) th += 2.0 * std::numbers::pi;
    prof.current_theta = th;
    std::size_t mask = 0;
    for (std::size_t k = 0; k < pins.size(); ++k) {
      const auto& p = pins[k];
      const Eigen::Vector2d ab = (pos.row(p.b) - pos.row(p.a)).transpose();
      const Eigen::Vector2d au = (pos.row(p.node) - pos.row(p.a)).transpose();
      if (ab.x() * au.y() - ab.y() * au.x() < 0) mask |= std::size_t{1} << k;
    }
    prof.current_branch = mask;
  }
  return prof;
}

Json to_json(const EnergyProfile& p) {
  Json branches = Json::array();
  for (const auto& b : p.branches) {
    Json e = Json::array();
    for (double v : b.energy) e.push_back(std::isfinite(v) ? Json(v) : Json(nullptr));
    branches.push_back({{"signs", b.signs}, {"energy", e}});
  }
  Json j{{"theta", p.theta}, {"branches", branches}, {"crank_node", p.crank_node}, {"pivot_node", p.pivot_node}};
  j["current_theta"] = p.current_theta ? Json(*p.current_theta) : Json(nullptr);
  j["current_branch"] = p.current_branch ? Json(*p.current_branch) : Json(nullptr);
  return j;
}

}  // namespace tensegrity
