#include "tensegrity/framework.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

namespace tensegrity {

namespace {

std::string edge_label(int i, int j) {
  if (i <= 9 && j <= 9) return std::to_string(i) + std::to_string(j);
  return std::to_string(i) + "_" + std::to_string(j);
}

void check_positive_spec(const ScalarSpec& s, const char* what) {
  if (s.is_fixed() && !(std::get<double>(s.value) > 0.0))
    throw FrameworkError(std::string(what) + " must be positive when fixed");
  if (!s.is_fixed() && std::get<std::string>(s.value).empty())
    throw FrameworkError(std::string(what) + " has an empty parameter name");
}

// Binds every framework scalar to an expression in a builder.
struct Assembly {
  const ElasticFramework& fw;
  ExprBuilder& b;
  std::function<Expr(const std::string&)> scalar;

  Expr spec(const ScalarSpec& s) const {
    if (s.is_fixed()) return b.constant(std::get<double>(s.value));
    return scalar(std::get<std::string>(s.value));
  }

  Expr squared_distance(int i, int j) const {
    std::vector<Expr> terms;
    for (int k = 1; k <= fw.dim; ++k) {
      Expr diff = b.sub(scalar(ElasticFramework::coordinate_name(i, k)),
                        scalar(ElasticFramework::coordinate_name(j, k)));
      terms.push_back(b.pow(diff, 2));
    }
    return b.sum(terms);
  }
};

}  // namespace

std::string ElasticFramework::coordinate_name(int node, int axis) {
  if (node <= 9 && axis <= 9) return "p" + std::to_string(node) + std::to_string(axis);
  return "p" + std::to_string(node) + "_" + std::to_string(axis);
}

void ElasticFramework::validate() const {
  if (n_nodes < 2) throw FrameworkError("a framework needs at least two nodes");
  if (dim != 2 && dim != 3) throw FrameworkError("dim must be 2 or 3, got " + std::to_string(dim));
  std::set<std::pair<int, int>> seen;
  auto check_edge = [&](int i, int j) {
    if (i < 1 || j < 1 || i > n_nodes || j > n_nodes)
      throw FrameworkError("edge " + edge_label(i, j) + " references a node outside 1.." +
                           std::to_string(n_nodes));
    if (i == j) throw FrameworkError("edge " + edge_label(i, j) + " joins a node to itself");
    auto key = std::minmax(i, j);
    if (!seen.insert(key).second)
      throw FrameworkError("edge " + edge_label(i, j) + " appears more than once");
  };
  for (const auto& bar : bars) {
    check_edge(bar.i, bar.j);
    check_positive_spec(bar.length, "bar length");
  }
  for (const auto& c : cables) {
    check_edge(c.i, c.j);
    check_positive_spec(c.rest, "cable rest length");
    check_positive_spec(c.elasticity, "cable elasticity");
  }
}

std::vector<std::string> ElasticFramework::scalar_names() const {
  std::vector<std::string> names;
  for (int i = 1; i <= n_nodes; ++i)
    for (int k = 1; k <= dim; ++k) names.push_back(coordinate_name(i, k));
  auto add = [&](const ScalarSpec& s) {
    if (s.is_fixed()) return;
    const auto& n = std::get<std::string>(s.value);
    if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
  };
  for (const auto& bar : bars) add(bar.length);
  for (const auto& c : cables) {
    add(c.rest);
    add(c.elasticity);
  }
  return names;
}

void ControlSlice::validate(std::size_t n_control) const {
  if (static_cast<std::size_t>(base.size()) != n_control)
    throw DimensionError("slice base has length " + std::to_string(base.size()) + ", expected " +
                         std::to_string(n_control));
  if (directions.size() > n_control) throw FrameworkError("slice has more directions than controls");
  RMatrix d(static_cast<Eigen::Index>(n_control), static_cast<Eigen::Index>(directions.size()));
  for (std::size_t k = 0; k < directions.size(); ++k) {
    if (static_cast<std::size_t>(directions[k].size()) != n_control)
      throw DimensionError("slice direction " + std::to_string(k) + " has length " +
                           std::to_string(directions[k].size()));
    d.col(static_cast<Eigen::Index>(k)) = directions[k];
  }
  if (!directions.empty()) {
    Eigen::ColPivHouseholderQR<RMatrix> qr(d);
    qr.setThreshold(1e-10);
    if (qr.rank() < static_cast<Eigen::Index>(directions.size()))
      throw FrameworkError("slice directions are linearly dependent");
  }
}

RVector ControlSlice::at(const RVector& coords) const {
  RVector y = base;
  for (std::size_t k = 0; k < directions.size(); ++k) y += coords[static_cast<Eigen::Index>(k)] * directions[k];
  return y;
}

CVector CatastropheSystem::line_parameters(const CVector& base, const CVector& dir) const {
  if (static_cast<std::size_t>(base.size()) != n_control || static_cast<std::size_t>(dir.size()) != n_control)
    throw DimensionError("line base/direction must have length " + std::to_string(n_control));
  CVector p(static_cast<Eigen::Index>(2 * n_control));
  p << base, dir;
  return p;
}

CVector CatastropheSystem::line_parameters(const ControlSlice& slice) const {
  slice.validate(n_control);
  if (slice.dimension() != 1)
    throw FrameworkError("catastrophe systems need a one-dimensional slice, got dimension " +
                         std::to_string(slice.dimension()));
  return line_parameters(slice.base.cast<Complex>(), slice.directions.front().cast<Complex>());
}

FrameworkModel::FrameworkModel(ElasticFramework fw, ParameterPartition partition)
    : fw_(std::move(fw)), partition_(std::move(partition)) {
  fw_.validate();

  // Partition must cover the scalars exactly, with no overlaps.
  const auto names = fw_.scalar_names();
  std::set<std::string> all(names.begin(), names.end());
  std::set<std::string> used;
  auto claim = [&](const std::string& n, const char* where) {
    if (!all.count(n)) throw FrameworkError(std::string(where) + " scalar '" + n + "' is not part of the framework");
    if (!used.insert(n).second) throw FrameworkError("scalar '" + n + "' appears in more than one partition set");
  };
  for (std::size_t k = 0; k < partition_.internal.size(); ++k) {
    claim(partition_.internal[k], "internal");
    scalar_slot_[partition_.internal[k]] = {0, k};
  }
  for (std::size_t k = 0; k < partition_.control.size(); ++k) {
    claim(partition_.control[k], "control");
    scalar_slot_[partition_.control[k]] = {1, k};
  }
  for (const auto& [n, v] : partition_.fixed) {
    claim(n, "fixed");
    if (!std::isfinite(v)) throw FrameworkError("fixed scalar '" + n + "' is not finite");
  }
  for (const auto& n : names)
    if (!used.count(n)) throw FrameworkError("scalar '" + n + "' is not assigned by the partition");
  if (partition_.internal.empty()) throw FrameworkError("partition has no internal scalars");

  // Decide which bars survive constant folding.
  {
    ExprBuilder probe;
    for (const auto& n : partition_.internal) probe.variable(n);
    for (const auto& n : partition_.control) probe.parameter(n);
    Assembly a{fw_, probe, [&](const std::string& n) -> Expr {
                 if (auto it = partition_.fixed.find(n); it != partition_.fixed.end()) return probe.constant(it->second);
                 const auto& slot = scalar_slot_.at(n);
                 return slot.first == 0 ? probe.variable(n) : probe.parameter(n);
               }};
    for (std::size_t k = 0; k < fw_.bars.size(); ++k) {
      const auto& bar = fw_.bars[k];
      Edge e{EdgeKind::bar, bar.i, bar.j, k, edge_label(bar.i, bar.j)};
      all_edges_.push_back(e);
      const Expr g = probe.sub(probe.pow(a.spec(bar.length), 2), a.squared_distance(bar.i, bar.j));
      if (probe.is_constant(g)) {
        if (std::abs(probe.node(g).value) > 1e-12)
          throw FrameworkError("bar " + e.label + " is fixed at an inconsistent length");
        dropped_.push_back(e);
        continue;
      }
      if (probe.degree(g) == 0)
        throw FrameworkError("bar " + e.label + " does not involve any internal scalar");
      edges_.push_back(e);
    }
    for (std::size_t k = 0; k < fw_.cables.size(); ++k) {
      const auto& c = fw_.cables[k];
      edges_.push_back({EdgeKind::cable, c.i, c.j, k, edge_label(c.i, c.j)});
      all_edges_.push_back(edges_.back());
    }
  }
  layout_ = {partition_.internal.size(), fw_.cables.size(), edges_.size()};

  const auto deltas = delta_names();
  const auto lambdas = lambda_names();

  auto make_assembly = [&](ExprBuilder& b) {
    return Assembly{fw_, b, [this, &b](const std::string& n) -> Expr {
                      if (auto it = partition_.fixed.find(n); it != partition_.fixed.end()) return b.constant(it->second);
                      const auto& slot = scalar_slot_.at(n);
                      return slot.first == 0 ? b.variable(n) : b.parameter(n);
                    }};
  };
  auto declare = [&](ExprBuilder& b, bool with_delta, bool with_lambda) {
    for (const auto& n : partition_.internal) b.variable(n);
    if (with_delta)
      for (const auto& n : deltas) b.variable(n);
    if (with_lambda)
      for (const auto& n : lambdas) b.variable(n);
    for (const auto& n : partition_.control) b.parameter(n);
  };

  // Bars in the sign convention of the printed bar constraint.
  {
    auto b = std::make_shared<ExprBuilder>();
    declare(*b, false, false);
    auto a = make_assembly(*b);
    std::vector<Expr> out;
    for (const auto& bar : fw_.bars) {
      out.push_back(b->sub(a.squared_distance(bar.i, bar.j), b->pow(a.spec(bar.length), 2)));
    }
    bars_ = std::make_shared<const ExpressionSystem>(std::move(b), std::move(out));
  }

  auto build_g = [&](ExprBuilder& b, Assembly& a, const std::vector<Edge>& which) {
    std::vector<Expr> out;
    for (const auto& e : which) {
      if (e.kind == EdgeKind::bar) {
        const auto& bar = fw_.bars[e.source];
        out.push_back(b.sub(b.pow(a.spec(bar.length), 2), a.squared_distance(bar.i, bar.j)));
      } else {
        const Expr delta = b.variable(deltas[e.source]);
        out.push_back(b.sub(b.pow(delta, 2), a.squared_distance(e.i, e.j)));
      }
    }
    return out;
  };
  auto build_energy = [&](ExprBuilder& b, Assembly& a) {
    std::vector<Expr> terms;
    for (std::size_t k = 0; k < fw_.cables.size(); ++k) {
      const auto& c = fw_.cables[k];
      const Expr stretch = b.sub(b.variable(deltas[k]), a.spec(c.rest));
      const Expr factors[] = {b.constant(0.5), a.spec(c.elasticity), b.pow(stretch, 2)};
      terms.push_back(b.product(factors));
    }
    return b.sum(terms);
  };

  {
    auto b = std::make_shared<ExprBuilder>();
    declare(*b, true, false);
    auto a = make_assembly(*b);
    auto out = build_g(*b, a, all_edges_);
    constraints_ = std::make_shared<const ExpressionSystem>(std::move(b), std::move(out));
  }
  {
    auto b = std::make_shared<ExprBuilder>();
    declare(*b, true, false);
    auto a = make_assembly(*b);
    std::vector<Expr> out{build_energy(*b, a)};
    energy_ = std::make_shared<const ExpressionSystem>(std::move(b), std::move(out));
  }
  {
    auto b = std::make_shared<ExprBuilder>();
    declare(*b, true, true);
    auto a = make_assembly(*b);
    const auto g = build_g(*b, a, edges_);
    std::vector<Expr> terms{build_energy(*b, a)};
    for (std::size_t k = 0; k < g.size(); ++k) terms.push_back(b->mul(b->variable(lambdas[k]), g[k]));
    const Expr lagrangian = b->sum(terms);
    std::vector<Expr> out;
    for (std::uint32_t k = 0; k < layout_.n(); ++k) out.push_back(b->diff(lagrangian, {SymbolRole::variable, k}));
    critical_ = std::make_shared<const ExpressionSystem>(std::move(b), std::move(out));
  }
}

std::vector<std::string> FrameworkModel::delta_names() const {
  std::vector<std::string> out;
  for (const auto& c : fw_.cables) out.push_back("delta" + edge_label(c.i, c.j));
  return out;
}

std::vector<std::string> FrameworkModel::lambda_names() const {
  std::vector<std::string> out;
  for (const auto& e : edges_) out.push_back("lambda" + e.label);
  return out;
}

std::vector<std::string> FrameworkModel::critical_names() const {
  std::vector<std::string> out(partition_.internal);
  for (auto& n : delta_names()) out.push_back(std::move(n));
  for (auto& n : lambda_names()) out.push_back(std::move(n));
  return out;
}

CatastropheSystem FrameworkModel::catastrophe_system(const CVector& chart) const {
  const std::size_t n = layout_.n();
  if (static_cast<std::size_t>(chart.size()) != n)
    throw DimensionError("chart vector has length " + std::to_string(chart.size()) + ", expected " +
                         std::to_string(n));
  const auto deltas = delta_names();
  const auto lambdas = lambda_names();
  const auto names = critical_names();

  auto b = std::make_shared<ExprBuilder>();
  for (const auto& nm : names) b->variable(nm);
  std::vector<Expr> v;
  for (std::size_t k = 0; k < n; ++k) v.push_back(b->variable("v" + std::to_string(k + 1)));
  const Expr t = b->variable("t");
  for (const auto& nm : partition_.control) b->parameter("base_" + nm);
  for (const auto& nm : partition_.control) b->parameter("dir_" + nm);

  Assembly a{fw_, *b, [&](const std::string& nm) -> Expr {
               if (auto it = partition_.fixed.find(nm); it != partition_.fixed.end()) return b->constant(it->second);
               const auto& slot = scalar_slot_.at(nm);
               if (slot.first == 0) return b->variable(nm);
               return b->add(b->parameter("base_" + nm), b->mul(t, b->parameter("dir_" + nm)));
             }};

  std::vector<Expr> terms;
  for (std::size_t k = 0; k < fw_.cables.size(); ++k) {
    const auto& c = fw_.cables[k];
    const Expr stretch = b->sub(b->variable(deltas[k]), a.spec(c.rest));
    const Expr factors[] = {b->constant(0.5), a.spec(c.elasticity), b->pow(stretch, 2)};
    terms.push_back(b->product(factors));
  }
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    const auto& e = edges_[k];
    Expr g;
    if (e.kind == EdgeKind::bar) {
      g = b->sub(b->pow(a.spec(fw_.bars[e.source].length), 2), a.squared_distance(e.i, e.j));
    } else {
      g = b->sub(b->pow(b->variable(deltas[e.source]), 2), a.squared_distance(e.i, e.j));
    }
    terms.push_back(b->mul(b->variable(lambdas[k]), g));
  }
  const Expr lagrangian = b->sum(terms);

  std::vector<Expr> gradient;
  for (std::uint32_t k = 0; k < n; ++k) gradient.push_back(b->diff(lagrangian, {SymbolRole::variable, k}));
  std::vector<Expr> out(gradient);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Expr> row;
    for (std::uint32_t j = 0; j < n; ++j) {
      const Expr h = b->diff(gradient[i], {SymbolRole::variable, j});
      if (h != b->zero()) row.push_back(b->mul(h, v[j]));
    }
    out.push_back(b->sum(row));
  }
  std::vector<Expr> chart_terms;
  for (std::size_t j = 0; j < n; ++j) chart_terms.push_back(b->scale(chart[static_cast<Eigen::Index>(j)], v[j]));
  chart_terms.push_back(b->constant(-1.0));
  out.push_back(b->sum(chart_terms));

  CatastropheSystem cs;
  cs.system = ExpressionSystem(std::move(b), std::move(out));
  cs.chart = chart;
  cs.layout = layout_;
  cs.n_control = partition_.control.size();
  return cs;
}

double FrameworkModel::scalar_value(const std::string& name, const RVector& x, const RVector& y) const {
  if (auto it = partition_.fixed.find(name); it != partition_.fixed.end()) return it->second;
  const auto it = scalar_slot_.find(name);
  if (it == scalar_slot_.end()) throw SymbolError("unknown framework scalar '" + name + "'");
  return it->second.first == 0 ? x[static_cast<Eigen::Index>(it->second.second)]
                               : y[static_cast<Eigen::Index>(it->second.second)];
}

RMatrix FrameworkModel::positions(const RVector& x, const RVector& y) const {
  RMatrix p(fw_.n_nodes, fw_.dim);
  for (int i = 1; i <= fw_.n_nodes; ++i)
    for (int k = 1; k <= fw_.dim; ++k) p(i - 1, k - 1) = scalar_value(ElasticFramework::coordinate_name(i, k), x, y);
  return p;
}

void FrameworkModel::check_configuration(const Configuration& cfg) const {
  if (static_cast<std::size_t>(cfg.x.size()) != n_internal())
    throw DimensionError("configuration x has length " + std::to_string(cfg.x.size()) + ", expected " +
                         std::to_string(n_internal()));
  if (static_cast<std::size_t>(cfg.y.size()) != n_control())
    throw DimensionError("configuration y has length " + std::to_string(cfg.y.size()) + ", expected " +
                         std::to_string(n_control()));
}

namespace {

double spec_value(const FrameworkModel& m, const ScalarSpec& s, const RVector& x, const RVector& y) {
  if (s.is_fixed()) return std::get<double>(s.value);
  return m.scalar_value(std::get<std::string>(s.value), x, y);
}

}  // namespace

RVector FrameworkModel::cable_lengths(const Configuration& cfg) const {
  check_configuration(cfg);
  const RMatrix p = positions(cfg.x, cfg.y);
  RVector d(static_cast<Eigen::Index>(fw_.cables.size()));
  for (std::size_t k = 0; k < fw_.cables.size(); ++k) {
    const auto& c = fw_.cables[k];
    d[static_cast<Eigen::Index>(k)] = (p.row(c.i - 1) - p.row(c.j - 1)).norm();
  }
  return d;
}

RVector FrameworkModel::rest_lengths(const RVector& x, const RVector& y) const {
  RVector r(static_cast<Eigen::Index>(fw_.cables.size()));
  for (std::size_t k = 0; k < fw_.cables.size(); ++k) r[static_cast<Eigen::Index>(k)] = spec_value(*this, fw_.cables[k].rest, x, y);
  return r;
}

double FrameworkModel::true_energy(const Configuration& cfg) const {
  check_configuration(cfg);
  const RMatrix p = positions(cfg.x, cfg.y);
  double q = 0.0;
  for (const auto& c : fw_.cables) {
    const double dist = (p.row(c.i - 1) - p.row(c.j - 1)).norm();
    const double stretch = std::max(0.0, dist - spec_value(*this, c.rest, cfg.x, cfg.y));
    q += 0.5 * spec_value(*this, c.elasticity, cfg.x, cfg.y) * stretch * stretch;
  }
  return q;
}

RVector FrameworkModel::true_energy_gradient(const Configuration& cfg) const {
  check_configuration(cfg);
  const RMatrix p = positions(cfg.x, cfg.y);
  RVector grad = RVector::Zero(static_cast<Eigen::Index>(n_internal()));
  auto accumulate = [&](const std::string& name, double value) {
    const auto it = scalar_slot_.find(name);
    if (it != scalar_slot_.end() && it->second.first == 0) grad[static_cast<Eigen::Index>(it->second.second)] += value;
  };
  for (const auto& c : fw_.cables) {
    const Eigen::RowVectorXd diff = p.row(c.i - 1) - p.row(c.j - 1);
    const double dist = diff.norm();
    const double rest = spec_value(*this, c.rest, cfg.x, cfg.y);
    const double elasticity = spec_value(*this, c.elasticity, cfg.x, cfg.y);
    const double stretch = std::max(0.0, dist - rest);
    if (stretch <= 0.0) continue;
    if (dist > 0.0) {
      for (int k = 1; k <= fw_.dim; ++k) {
        const double gk = elasticity * stretch * diff[k - 1] / dist;
        accumulate(ElasticFramework::coordinate_name(c.i, k), gk);
        accumulate(ElasticFramework::coordinate_name(c.j, k), -gk);
      }
    }
    if (!c.rest.is_fixed()) accumulate(std::get<std::string>(c.rest.value), -elasticity * stretch);
    if (!c.elasticity.is_fixed()) accumulate(std::get<std::string>(c.elasticity.value), 0.5 * stretch * stretch);
  }
  return grad;
}

ExpressionSystem bar_constraints(const ElasticFramework& fw, const ParameterPartition& partition) {
  return FrameworkModel(fw, partition).bar_system();
}

ExpressionSystem algebraic_constraints(const ElasticFramework& fw, const ParameterPartition& partition) {
  return FrameworkModel(fw, partition).constraint_system();
}

ExpressionSystem algebraic_energy(const ElasticFramework& fw, const ParameterPartition& partition) {
  return FrameworkModel(fw, partition).energy_system();
}

ExpressionSystem build_critical_system(const ElasticFramework& fw, const ParameterPartition& partition) {
  return FrameworkModel(fw, partition).critical_system();
}

double true_energy(const ElasticFramework& fw, const ParameterPartition& partition, const Configuration& cfg) {
  return FrameworkModel(fw, partition).true_energy(cfg);
}

CatastropheSystem build_catastrophe_system(const ElasticFramework& fw, const ParameterPartition& partition,
                                           const ControlSlice& slice, const CVector& chart) {
  FrameworkModel model(fw, partition);
  slice.validate(model.n_control());
  if (slice.dimension() != 1)
    throw FrameworkError("catastrophe systems need a one-dimensional slice, got dimension " +
                         std::to_string(slice.dimension()));
  return model.catastrophe_system(chart);
}

}  // namespace tensegrity
