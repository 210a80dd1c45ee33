// Elastic tensegrity frameworks: rigid bars plus Hookean cables, a partition
// of the scalar data into internal / control / fixed, and assembly of the
// polynomial systems built from them.
#pragma once

#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "tensegrity/exprsys.hpp"

namespace tensegrity {

class FrameworkError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A fixed numeric value or the name of a scalar listed in the partition.
struct ScalarSpec {
  std::variant<double, std::string> value;

  static ScalarSpec fixed(double v) { return {v}; }
  static ScalarSpec named(std::string n) { return {std::move(n)}; }
  bool is_fixed() const { return std::holds_alternative<double>(value); }
};

struct Bar {
  int i = 0;
  int j = 0;
  ScalarSpec length;
};

struct Cable {
  int i = 0;
  int j = 0;
  ScalarSpec rest;
  ScalarSpec elasticity;
};

struct ElasticFramework {
  int n_nodes = 0;
  int dim = 2;
  std::vector<Bar> bars;
  std::vector<Cable> cables;

  void validate() const;
  /// Node coordinates followed by every named bar/cable spec.
  std::vector<std::string> scalar_names() const;
  /// `p{i}{k}` with 1-based indices, `p{i}_{k}` once an index exceeds 9.
  static std::string coordinate_name(int node, int axis);
};

struct ParameterPartition {
  std::vector<std::string> internal;
  std::vector<std::string> control;
  std::map<std::string, double> fixed;
};

/// Affine-linear chart inside the control space: base + span(directions).
struct ControlSlice {
  RVector base;
  std::vector<RVector> directions;

  int dimension() const { return static_cast<int>(directions.size()); }
  void validate(std::size_t n_control) const;
  RVector at(const RVector& coords) const;
};

struct Configuration {
  RVector x;
  RVector y;
};

enum class EdgeKind { bar, cable };

struct Edge {
  EdgeKind kind = EdgeKind::bar;
  int i = 0;
  int j = 0;
  std::size_t source = 0;  // index into bars or cables
  std::string label;       // "14" for nodes 1 and 4
};

/// Offsets of the (x, delta, lambda) blocks in the critical-point variables.
struct CriticalLayout {
  std::size_t n_internal = 0;
  std::size_t n_cables = 0;
  std::size_t n_edges = 0;

  std::size_t n() const { return n_internal + n_cables + n_edges; }
  std::size_t delta_offset() const { return n_internal; }
  std::size_t lambda_offset() const { return n_internal + n_cables; }
  /// Variables the energy is minimized over: x followed by delta.
  std::size_t n_primal() const { return n_internal + n_cables; }
};

/// The H_Omega system on a parametrized line y = base + t * dir: variables
/// (x, delta, lambda, v, t), parameters (base, dir).
struct CatastropheSystem {
  ExpressionSystem system;
  CVector chart;  // v is normalized by <chart, v> = 1
  CriticalLayout layout;
  std::size_t n_control = 0;

  std::size_t n_variables() const { return 2 * layout.n() + 1; }
  std::size_t t_index() const { return 2 * layout.n(); }
  std::size_t v_offset() const { return layout.n(); }
  CVector line_parameters(const CVector& base, const CVector& dir) const;
  /// Throws unless the slice is one-dimensional.
  CVector line_parameters(const ControlSlice& slice) const;
};

/// A framework bound to a partition, with its assembled systems.
///
/// Bars whose constraint folds to the constant zero (both endpoints and the
/// length fixed and consistent) carry no information. They stay in b and g
/// as identically zero outputs but get no multiplier in dL and H_Omega;
/// they are listed in dropped_edges().
class FrameworkModel {
 public:
  FrameworkModel(ElasticFramework fw, ParameterPartition partition);

  const ElasticFramework& framework() const { return fw_; }
  const ParameterPartition& partition() const { return partition_; }
  /// Edges carrying a multiplier, bars before cables.
  const std::vector<Edge>& edges() const { return edges_; }
  /// Every edge, in the output order of constraint_system().
  const std::vector<Edge>& constraint_edges() const { return all_edges_; }
  const std::vector<Edge>& dropped_edges() const { return dropped_; }
  const CriticalLayout& layout() const { return layout_; }
  std::size_t n_internal() const { return partition_.internal.size(); }
  std::size_t n_control() const { return partition_.control.size(); }

  const std::vector<std::string>& internal_names() const { return partition_.internal; }
  const std::vector<std::string>& control_names() const { return partition_.control; }
  std::vector<std::string> delta_names() const;
  std::vector<std::string> lambda_names() const;
  /// x, delta and lambda names in critical-system order.
  std::vector<std::string> critical_names() const;

  /// b: sum_k (p_ik - p_jk)^2 - l_ij^2, one output per bar.
  const ExpressionSystem& bar_system() const { return *bars_; }
  /// g: l^2 - |p_i - p_j|^2 for bars, delta^2 - |p_i - p_j|^2 for cables.
  const ExpressionSystem& constraint_system() const { return *constraints_; }
  /// Q~ = sum 1/2 c (delta - r)^2, single output.
  const ExpressionSystem& energy_system() const { return *energy_; }
  /// dL_y: all partials of Q~ + sum lambda g in (x, delta, lambda).
  const ExpressionSystem& critical_system() const { return *critical_; }

  CatastropheSystem catastrophe_system(const CVector& chart) const;

  /// Value of any framework scalar at (x, y).
  double scalar_value(const std::string& name, const RVector& x, const RVector& y) const;
  /// n_nodes x dim matrix of node positions.
  RMatrix positions(const RVector& x, const RVector& y) const;

  /// Hooke energy with the max{0, .}: zero for slack cables.
  double true_energy(const Configuration& cfg) const;
  RVector true_energy_gradient(const Configuration& cfg) const;
  /// Euclidean lengths of the cables.
  RVector cable_lengths(const Configuration& cfg) const;
  RVector rest_lengths(const RVector& x, const RVector& y) const;

 private:
  void check_configuration(const Configuration& cfg) const;

  ElasticFramework fw_;
  ParameterPartition partition_;
  std::vector<Edge> edges_;
  std::vector<Edge> all_edges_;
  std::vector<Edge> dropped_;
  CriticalLayout layout_;
  std::map<std::string, std::pair<int, std::size_t>> scalar_slot_;  // role (0 x,1 y), index
  std::shared_ptr<const ExpressionSystem> bars_;
  std::shared_ptr<const ExpressionSystem> constraints_;
  std::shared_ptr<const ExpressionSystem> energy_;
  std::shared_ptr<const ExpressionSystem> critical_;
};

ExpressionSystem bar_constraints(const ElasticFramework& fw, const ParameterPartition& partition);
ExpressionSystem algebraic_constraints(const ElasticFramework& fw, const ParameterPartition& partition);
ExpressionSystem algebraic_energy(const ElasticFramework& fw, const ParameterPartition& partition);
ExpressionSystem build_critical_system(const ElasticFramework& fw, const ParameterPartition& partition);
double true_energy(const ElasticFramework& fw, const ParameterPartition& partition, const Configuration& cfg);
CatastropheSystem build_catastrophe_system(const ElasticFramework& fw, const ParameterPartition& partition,
                                           const ControlSlice& slice, const CVector& chart);

}  // namespace tensegrity
