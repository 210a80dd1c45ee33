// Catastrophe discriminant and catastrophe set: pseudo-witness sets of the
// null-vector system on a line, line intersections and region sampling.
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tensegrity/framework.hpp"
#include "tensegrity/io.hpp"
#include "tensegrity/tracker.hpp"

namespace tensegrity {

/// Raised when the critical set is positive dimensional, so no finite
/// witness exists (for instance when the energy is identically constant).
class DegenerateSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct WitnessOptions {
  std::size_t total_degree_budget = 100000;
  MonodromyOptions monodromy;
  std::size_t seed_attempts = 6;   // Newton-homotopy seeds before monodromy
  std::size_t confirm_seeds = 6;   // extra seeds that must all land on known points
  /// Monodromy rounds run, up to max_rounds, until fresh seeds add nothing
  /// and the trace test passes; a nonzero count here replaces the trace
  /// test by reaching that many points.
  std::size_t expected = 0;
  std::size_t max_rounds = 24;
};

struct PseudoWitnessSet {
  std::shared_ptr<const FrameworkModel> model;
  CatastropheSystem system;
  CVector base;  // complex line y = base + t dir
  CVector dir;
  std::vector<CVector> solutions;
  /// Cluster sizes from the solve; above 1 marks a numerically multiple
  /// point, stored as the cluster mean.
  std::vector<int> multiplicity;
  bool complete = true;
  std::string method;
  std::string warning;
  std::uint64_t seed = 0;
  double seconds = 0.0;

  std::size_t degree() const { return solutions.size(); }
  CVector parameters() const { return system.line_parameters(base, dir); }
};

PseudoWitnessSet witness_on_generic_line(std::shared_ptr<const FrameworkModel> model, const TrackerConfig& cfg,
                                         const WitnessOptions& opts = {});

/// Moves an existing witness to another generic complex line. The chart is
/// kept, so the result shares the system.
PseudoWitnessSet move_witness(const PseudoWitnessSet& w, const CVector& base, const CVector& dir,
                              const TrackerConfig& cfg);

/// Builds a fresh witness on a second random line with monodromy seeded from
/// scratch and returns it; its size cross-validates the first count.
PseudoWitnessSet witness_by_monodromy(std::shared_ptr<const FrameworkModel> model, const TrackerConfig& cfg,
                                      const WitnessOptions& opts = {});

struct DegreeReport {
  std::size_t degree = 0;
  std::size_t cross_check = 0;
  std::string first_method;
  std::string second_method;
  double seconds = 0.0;
};

/// Throws std::runtime_error naming both counts when the lines disagree.
DegreeReport catastrophe_degree(std::shared_ptr<const FrameworkModel> model, const TrackerConfig& cfg,
                                const WitnessOptions& opts = {});

struct CatastrophePoint {
  RVector y;
  double t = 0.0;
  CVector z;                 // (x, delta, lambda, v, t)
  double dl_residual = 0.0;
  double hv_residual = 0.0;  // |d2L v| / |v|
  double chart_residual = 0.0;
  double delta_min = 0.0;
  bool delta_nonneg = false;
  bool borderline = false;   // some |delta| < 1e-6
  bool taut = false;         // every cable at or beyond its rest length
  std::size_t witness_index = 0;
  std::size_t line_id = 0;
};

struct SliceIntersection {
  std::vector<CatastrophePoint> points;  // real points, t-sorted
  std::size_t transported = 0;           // witness points moved regularly
  std::size_t failures = 0;
  bool complete = true;

  std::vector<CatastrophePoint> catastrophe_points() const;  // delta >= 0
};

/// Real line y = base + t dir; with `segment` only t in [0, 1] is kept.
SliceIntersection intersect_slice(const PseudoWitnessSet& w, const ControlSlice& line, const TrackerConfig& cfg,
                                  bool segment = false);

struct Rect {
  double x0 = -4, x1 = 4, y0 = -4, y1 = 4;
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

/// Sweeps n_lines real lines: horizontal and vertical pencils with jittered
/// offsets, every third line in a random direction.
std::vector<CatastrophePoint> sample_catastrophe(const PseudoWitnessSet& w, const Rect& region, std::size_t n_lines,
                                                 const TrackerConfig& cfg);

struct ProbePair {
  RVector a;
  RVector b;
};

struct ParityRow {
  std::size_t crossings = 0;  // groups of sampled points within the tube
  int count_a = -1;
  int count_b = -1;
  bool consistent = false;    // counts differ iff crossings is odd
};

/// Counts sampled catastrophe points with taut cables within `tube` of each
/// probe segment and compares with the stable counts supplied for both ends.
std::vector<ParityRow> crossing_parity_check(const std::vector<CatastrophePoint>& sample,
                                             const std::vector<ProbePair>& probes,
                                             const std::vector<std::pair<int, int>>& counts, double tube);

Json witness_to_json(const PseudoWitnessSet& w);
/// Rebuilds a witness for `model` from its cache form; throws InputError when
/// the system hash does not match.
PseudoWitnessSet witness_from_json(const Json& j, std::shared_ptr<const FrameworkModel> model);
/// Hash of the line-system text; identifies cache entries.
std::string system_hash(const FrameworkModel& model);

Json to_json(const CatastrophePoint& p);

}  // namespace tensegrity
