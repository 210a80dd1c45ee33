// Critical points of the Lagrangian system: real filtering, projected-Hessian
// stability, stability sets, equilibrium degree and chamber scans.
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tensegrity/framework.hpp"
#include "tensegrity/io.hpp"
#include "tensegrity/tracker.hpp"

namespace tensegrity {

struct CriticalPoint {
  RVector x;
  RVector delta;   // one per cable
  RVector lambda;  // one per edge carrying a multiplier
  double energy = 0.0;            // algebraic energy
  std::vector<bool> tension;      // delta >= rest, per cable
  bool delta_nonneg = false;
  double residual = 0.0;          // max |dL| at the real point

  bool taut() const;
  /// (x, delta, lambda) in critical-system order.
  RVector packed() const;
};

enum class Verdict { stable, unstable, borderline };
const char* to_string(Verdict v);

struct StabilityCertificate {
  RMatrix projected_hessian;
  double min_eigenvalue = 0.0;
  double pd_tol = 0.0;
  std::size_t null_basis_dim = 0;
  Verdict verdict = Verdict::unstable;
};

/// Raised when dg loses rank at a critical point.
class ConstraintSingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StabilityCounts {
  std::size_t n_complex = 0;       // distinct regular finite solutions
  std::size_t n_real = 0;
  std::size_t n_delta_nonneg = 0;
  std::size_t n_stable = 0;        // stable and taut
  std::size_t n_stable_slack = 0;  // stable for the algebraic energy, some cable slack
};

struct StablePoint {
  CriticalPoint point;
  StabilityCertificate certificate;
};

struct StabilityReport {
  RVector y;
  std::vector<CriticalPoint> all_critical;  // real points
  /// Certificates for the delta >= 0 members of all_critical, same order.
  std::vector<std::optional<StabilityCertificate>> certificates;
  std::vector<StablePoint> stable;          // physical stability set
  StabilityCounts counts;
  std::size_t failures = 0;
  bool complete = true;
  std::vector<std::string> warnings;

  std::size_t n_stable() const { return stable.size(); }
};

/// Regular solutions of dL at generic complex controls; parameter homotopies
/// start here.
struct EquilibriumSeed {
  CVector params;
  std::vector<CVector> solutions;
};

EquilibriumSeed generic_seed(const FrameworkModel& model, const TrackerConfig& cfg);

/// Keeps points whose imaginary parts are below tol * max(1, |z|).
std::vector<CriticalPoint> real_filter(const FrameworkModel& model, const RVector& y,
                                       const std::vector<TrackedSolution>& solutions, double tol = 1e-8);
CriticalPoint make_critical_point(const FrameworkModel& model, const RVector& y, const RVector& packed);

struct StabilityOptions {
  double pd_rel = 1e-8;  // pd_tol = pd_rel * |V^T H V|
};

StabilityCertificate certify_stability(const FrameworkModel& model, const CriticalPoint& point, const RVector& y,
                                       const StabilityOptions& opts = {});

/// Solves dL at y (from the seed when given, else by total degree) and
/// certifies every real delta >= 0 point.
StabilityReport stability_set(const FrameworkModel& model, const RVector& y, const TrackerConfig& cfg,
                              const EquilibriumSeed* seed = nullptr, const StabilityOptions& opts = {});

/// Classifies already-solved endpoints at y.
StabilityReport classify_critical(const FrameworkModel& model, const RVector& y,
                                  const std::vector<TrackedSolution>& endpoints, const StabilityOptions& opts = {});

struct EquilibriumDegreeReport {
  std::size_t degree = 0;
  std::size_t second = 0;
  std::size_t paths = 0;
  double max_residual = 0.0;
  double seconds = 0.0;
};

/// Total-degree solves at two random complex control points; throws
/// std::runtime_error when the counts differ or no endpoint is regular
/// while some are singular.
EquilibriumDegreeReport equilibrium_degree(const FrameworkModel& model, const TrackerConfig& cfg);

struct ChamberGrid {
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  std::size_t nx = 0, ny = 0;
  std::vector<int> counts;  // row-major, row 0 at y0; -1 marks a failed point

  RVector point(std::size_t i, std::size_t j) const;  // cell centre, column i, row j
  int at(std::size_t i, std::size_t j) const { return counts[j * nx + i]; }
};

ChamberGrid chamber_scan(const FrameworkModel& model, double x0, double x1, double y0, double y1, std::size_t nx,
                         std::size_t ny, const TrackerConfig& cfg, const EquilibriumSeed& seed);

/// A strict local minimum of the true energy, found in the regime where
/// exactly the cables flagged in `taut` are stretched.
struct RegimeMinimum {
  std::vector<bool> taut;
  CriticalPoint point;  // delta and lambda refer to the taut cables only
  StabilityCertificate certificate;
};

/// Strict local minima of the true (max{0, .}) energy. Each set of taut
/// cables is a regime: the other cables are removed, the reduced model is
/// solved, and its stable taut points count when the removed cables are
/// slack there. The regime with every cable taut reproduces stability_set.
class TrueEnergyMinima {
 public:
  TrueEnergyMinima(const FrameworkModel& model, const TrackerConfig& cfg);

  std::vector<RegimeMinimum> minima(const RVector& y, const TrackerConfig& cfg) const;
  std::size_t n_regimes() const { return regimes_.size(); }

 private:
  struct Regime {
    std::vector<bool> taut;
    std::shared_ptr<const FrameworkModel> model;
    EquilibriumSeed seed;
  };
  const FrameworkModel* model_;
  std::vector<Regime> regimes_;
};

Json to_json(const CriticalPoint& p);
Json to_json(const StabilityCertificate& c);
Json to_json(const StabilityReport& r);
Json seed_to_json(const EquilibriumSeed& s);
EquilibriumSeed seed_from_json(const Json& j);

/// True energy along the one-parameter family of configurations of a linkage
/// that is built from a crank (a free node on a bar about a placed node)
/// followed by nodes pinned by two bars each. Every sign choice for the
/// two-circle intersections is a branch.
struct ProfileBranch {
  std::vector<int> signs;
  std::vector<double> energy;  // NaN where the branch does not close
};

struct EnergyProfile {
  std::vector<double> theta;
  std::vector<ProfileBranch> branches;
  int crank_node = 0;   // 1-based
  int pivot_node = 0;
  std::optional<double> current_theta;
  std::optional<std::size_t> current_branch;
};

/// Throws FrameworkError when the framework is not such a linkage.
EnergyProfile energy_profile(const FrameworkModel& model, const RVector& y, std::size_t samples,
                             const std::optional<RVector>& current_x = std::nullopt);
Json to_json(const EnergyProfile& p);

}  // namespace tensegrity
