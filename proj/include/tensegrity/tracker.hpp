// Homotopy continuation: total-degree start systems with the gamma trick,
// predictor-corrector path tracking, parameter homotopies and monodromy.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tensegrity/exprsys.hpp"

namespace tensegrity {

struct TrackerConfig {
  double newton_tol = 1e-10;
  double track_tol = 1e-7;
  double min_step = 1e-14;
  double max_step = 0.1;
  std::size_t max_steps = 10000;
  double singular_cond_threshold = 1e12;
  double divergence_cutoff = 1e10;
  double dedup_tol = 1e-6;
  std::uint64_t rng_seed = 42;
  std::optional<Complex> gamma;  // drawn from rng_seed when empty
  unsigned threads = 0;          // 0: hardware concurrency

  void validate() const;
  Complex resolved_gamma() const;
};

enum class PathStatus { regular, singular, diverged, failed };
const char* to_string(PathStatus s);

struct TrackedSolution {
  CVector point;
  double residual = 0.0;
  double condition_estimate = 0.0;
  PathStatus status = PathStatus::failed;
  std::size_t start_index = 0;
  std::size_t steps = 0;
  std::optional<int> multiplicity;

  bool is_regular() const { return status == PathStatus::regular; }
};

struct HomotopyWorkspace {
  Linearization::Workspace lin;
  CVector f;
  CMatrix jz;
  CMatrix jp;
};

/// H(z, t) with t real; tracking runs from t = 1 to t = 0 unless stated.
class Homotopy {
 public:
  virtual ~Homotopy() = default;
  virtual std::size_t dimension() const = 0;
  /// Any output pointer may be null.
  virtual void evaluate(const CVector& z, double t, HomotopyWorkspace& ws, CVector* h, CMatrix* hz,
                        CVector* ht) const = 0;
  /// Target system F(z) = H(z, 0) with its parameters bound.
  virtual const Linearization& target() const = 0;
  virtual const CVector& target_parameters() const = 0;
};

/// (1 - t) F(z; p) + t gamma G(z) with G_i = z_i^{d_i} - 1.
class StraightLineHomotopy final : public Homotopy {
 public:
  StraightLineHomotopy(const Linearization& target, CVector params, Complex gamma);
  std::size_t dimension() const override { return target_.n_variables(); }
  void evaluate(const CVector& z, double t, HomotopyWorkspace& ws, CVector* h, CMatrix* hz,
                CVector* ht) const override;
  const Linearization& target() const override { return target_; }
  const CVector& target_parameters() const override { return params_; }

 private:
  const Linearization& target_;
  CVector params_;
  Complex gamma_;
  std::vector<int> degrees_;
};

/// F(z; t p_start + (1 - t) p_end).
class ParameterHomotopy final : public Homotopy {
 public:
  ParameterHomotopy(const Linearization& system, CVector p_start, CVector p_end);
  std::size_t dimension() const override { return system_.n_variables(); }
  void evaluate(const CVector& z, double t, HomotopyWorkspace& ws, CVector* h, CMatrix* hz,
                CVector* ht) const override;
  const Linearization& target() const override { return system_; }
  const CVector& target_parameters() const override { return p_end_; }
  CVector parameters_at(double t) const { return t * p_start_ + (1.0 - t) * p_end_; }

 private:
  const Linearization& system_;
  CVector p_start_;
  CVector p_end_;
};

/// Outcome of following a path over [t_to, t_from] without classification.
struct SegmentOutcome {
  CVector z;
  double t = 1.0;
  bool reached = false;
  bool diverged = false;
  std::size_t steps = 0;
};

SegmentOutcome track_segment(const Homotopy& h, const CVector& z0, double t_from, double t_to,
                             const TrackerConfig& cfg, HomotopyWorkspace& ws);

/// Newton at t = 0 on the target, then residual, SVD condition estimate and
/// status.
TrackedSolution classify_endpoint(const Linearization& target, const CVector& params, const CVector& z,
                                  const TrackerConfig& cfg, HomotopyWorkspace& ws, bool diverging = false);

TrackedSolution track_path(const Homotopy& h, const CVector& z0, const TrackerConfig& cfg);
TrackedSolution track_path(const Homotopy& h, const CVector& z0, const TrackerConfig& cfg, HomotopyWorkspace& ws);

struct StartSystem {
  ExpressionSystem system;
  std::vector<int> degrees;
  std::size_t count() const;
  /// Start point number k in mixed-radix order over the roots of unity.
  CVector point(std::size_t k) const;
  std::vector<CVector> points() const;
};

/// Throws DimensionError when the target is not square, std::invalid_argument
/// when a degree is zero.
StartSystem total_degree_start(const ExpressionSystem& target);

struct SolveReport {
  std::vector<TrackedSolution> endpoints;  // one per path, in start order
  std::vector<TrackedSolution> solutions;  // distinct regular finite solutions
  std::size_t paths = 0;
  std::size_t n_regular = 0;
  std::size_t n_singular = 0;
  std::size_t n_diverged = 0;
  std::size_t n_failed = 0;
  std::size_t retracked = 0;
  double seconds = 0.0;

  /// At least 99% of the paths ended in a classified state.
  bool ok() const { return paths == 0 || static_cast<double>(n_failed) <= 0.01 * static_cast<double>(paths); }
};

SolveReport solve_total_degree(const ExpressionSystem& target, const CVector& params, const TrackerConfig& cfg);

/// Max-norm distance scaled by max(1, |a|).
double scaled_distance(const CVector& a, const CVector& b);
/// Keeps the first of every cluster of regular solutions closer than tol and
/// records cluster sizes as multiplicity hints.
std::vector<TrackedSolution> dedup_regular(const std::vector<TrackedSolution>& all, double tol);

/// Result of moving solutions from p_start to p_end; endpoints keep the
/// input order.
struct ParameterMoveReport {
  std::vector<TrackedSolution> endpoints;
  std::size_t retried = 0;
  std::size_t failures = 0;
  double seconds = 0.0;
};

/// Tracks each start solution along the segment p_start -> p_end. A path that
/// does not end regular is retried once through a random complex midpoint.
ParameterMoveReport parameter_homotopy(const ExpressionSystem& system, const CVector& p_start,
                                       const std::vector<CVector>& starts, const CVector& p_end,
                                       const TrackerConfig& cfg);

struct MonodromyReport {
  std::vector<CVector> solutions;
  CVector parameters;
  std::size_t loops = 0;
  bool stabilized = false;
  std::string warning;
  double seconds = 0.0;
};

struct MonodromyOptions {
  std::size_t stable_loops = 5;  // stop after this many loops without growth
  std::size_t max_loops = 200;
  double loop_scale = 1.0;       // radius of the random loop vertices
};

/// Populates the fiber over `params` by tracking known solutions around
/// random triangles in complex parameter space.
MonodromyReport monodromy_solve(const ExpressionSystem& system, const CVector& params,
                                const std::vector<CVector>& seeds, const TrackerConfig& cfg,
                                const MonodromyOptions& opts = {});

/// Unit-modulus complex number from the generator.
Complex random_unit(std::mt19937_64& rng);
CVector random_complex_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0);

}  // namespace tensegrity
