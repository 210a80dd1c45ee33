// Lifting piecewise-linear control paths to equilibrium paths, with
// catastrophe crossings found globally from the witness set and jumps
// resolved by descent on the true energy.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tensegrity/catastrophe.hpp"
#include "tensegrity/equilibria.hpp"

namespace tensegrity {

struct ControlPath {
  std::vector<RVector> waypoints;

  /// At least two waypoints of the control dimension, consecutive ones
  /// distinct.
  void validate(std::size_t n_control) const;
  std::size_t segments() const { return waypoints.empty() ? 0 : waypoints.size() - 1; }
  /// Point at global time t in [0, 1]; segments share time equally.
  RVector at(double t) const;
  bool closed(double tol = 1e-12) const;
};

ControlPath control_path_from_json(const Json& j);
Json to_json(const ControlPath& p);

enum class EventKind { catastrophe_crossing, stability_lost, tracking_failure, slack_transition };
const char* to_string(EventKind k);

struct LiftEvent {
  double t = 0.0;
  EventKind kind = EventKind::catastrophe_crossing;
  RVector y;
  bool jumped = false;  // the occupied minimum vanished here
  std::string details;
};

struct TrajectorySample {
  double t = 0.0;
  RVector y;
  CriticalPoint point;
  StabilityCertificate certificate;
};

struct LiftResult {
  std::vector<TrajectorySample> trajectory;
  std::vector<LiftEvent> events;
  bool ended_stable = false;
  std::vector<std::string> warnings;

  const CriticalPoint& final_point() const { return trajectory.back().point; }
  std::size_t count(EventKind k) const;
  std::size_t jumps() const;
};

struct LiftOptions {
  std::size_t samples_per_segment = 100;
  double crossing_eps = 1e-7;     // approach distance to a crossing, in segment time
  double jump_match_tol = 1e-2;   // crossing point vs occupied minimum
  std::size_t max_refinements = 12;
};

/// Optional precomputed data; without a witness only the local monitor
/// detects catastrophes.
struct LiftContext {
  const PseudoWitnessSet* witness = nullptr;
  const EquilibriumSeed* seed = nullptr;
};

class LiftError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws LiftError unless `start` is a taut stable critical point at the
/// first waypoint.
LiftResult lift_path(const FrameworkModel& model, const ControlPath& path, const CriticalPoint& start,
                     const TrackerConfig& cfg, const LiftContext& ctx = {}, const LiftOptions& opts = {});

/// The stable point at y nearest to x in the internal coordinates.
std::optional<StablePoint> nearest_stable(const FrameworkModel& model, const RVector& y, const RVector& x,
                                          const TrackerConfig& cfg, const EquilibriumSeed* seed = nullptr);

struct DescentOptions {
  double step = 1e-2;
  std::size_t max_iterations = 10000;
  double gradient_tol = 1e-9;
};

/// Projected gradient descent on the true energy over the bar constraints,
/// starting from x.
RVector descend_true_energy(const FrameworkModel& model, const RVector& y, const RVector& x,
                            const DescentOptions& opts = {});

/// Where the framework settles at y when starting from old_point: descent on
/// the true energy, then the nearest member of S_y. Empty when S_y is.
std::optional<StablePoint> post_jump(const FrameworkModel& model, const RVector& y, const CriticalPoint& old_point,
                                     const TrackerConfig& cfg, const EquilibriumSeed* seed = nullptr,
                                     const DescentOptions& opts = {});

/// True when lifting the closed loop ends more than 1e-3 away from the start
/// in x.
bool hysteresis_probe(const FrameworkModel& model, const ControlPath& loop, const CriticalPoint& start,
                      const TrackerConfig& cfg, const LiftContext& ctx = {}, const LiftOptions& opts = {});

Json to_json(const LiftEvent& e);
Json to_json(const LiftResult& r);
/// Rows `t,y...,x...,min_eig,stable`.
std::string trajectory_csv(const FrameworkModel& model, const LiftResult& r);

}  // namespace tensegrity
