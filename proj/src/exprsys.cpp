#include "tensegrity/exprsys.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <utility>

namespace tensegrity {

namespace {

std::size_t mix(std::size_t h, std::size_t v) {
  return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

Complex int_pow(Complex base, int k) {
  Complex acc{1.0, 0.0};
  while (k > 0) {
    if (k & 1) acc *= base;
    base *= base;
    k >>= 1;
  }
  return acc;
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string format_constant(Complex c) {
  if (c.imag() == 0.0) return format_real(c.real());
  if (c.real() == 0.0) return format_real(c.imag()) + "*I";
  return "(" + format_real(c.real()) + (c.imag() < 0 ? " - " : " + ") +
         format_real(std::abs(c.imag())) + "*I)";
}

}  // namespace

std::size_t ExprBuilder::KeyHash::operator()(const Key& k) const noexcept {
  std::size_t h = static_cast<std::size_t>(k.kind);
  h = mix(h, std::hash<double>{}(k.re));
  h = mix(h, std::hash<double>{}(k.im));
  h = mix(h, k.index);
  h = mix(h, static_cast<std::size_t>(k.exponent));
  for (auto c : k.children) h = mix(h, c);
  return h;
}

ExprBuilder::ExprBuilder() {
  zero_ = constant(0.0).id;
  one_ = constant(1.0).id;
}

Expr ExprBuilder::intern(Node n) {
  Key key{n.kind, n.value.real(), n.value.imag(), n.index, n.exponent, n.children};
  // -0.0 and 0.0 are the same constant.
  if (key.re == 0.0) key.re = 0.0;
  if (key.im == 0.0) key.im = 0.0;
  if (auto it = intern_.find(key); it != intern_.end()) return Expr{it->second};
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(std::move(n));
  intern_.emplace(std::move(key), id);
  return Expr{id};
}

Expr ExprBuilder::constant(Complex c) {
  Node n;
  n.kind = NodeKind::constant;
  n.value = c;
  return intern(std::move(n));
}

Expr ExprBuilder::variable(std::string_view name) {
  if (auto s = find_symbol(name)) {
    if (s->role != SymbolRole::variable)
      throw SymbolError("symbol '" + std::string(name) + "' is already a parameter");
    Node n;
    n.kind = NodeKind::variable;
    n.index = s->index;
    return intern(std::move(n));
  }
  Node n;
  n.kind = NodeKind::variable;
  n.index = static_cast<std::uint32_t>(variables_.size());
  variables_.emplace_back(name);
  return intern(std::move(n));
}

Expr ExprBuilder::parameter(std::string_view name) {
  if (auto s = find_symbol(name)) {
    if (s->role != SymbolRole::parameter)
      throw SymbolError("symbol '" + std::string(name) + "' is already a variable");
    Node n;
    n.kind = NodeKind::parameter;
    n.index = s->index;
    return intern(std::move(n));
  }
  Node n;
  n.kind = NodeKind::parameter;
  n.index = static_cast<std::uint32_t>(parameters_.size());
  parameters_.emplace_back(name);
  return intern(std::move(n));
}

std::optional<SymbolRef> ExprBuilder::find_symbol(std::string_view name) const {
  for (std::size_t i = 0; i < variables_.size(); ++i)
    if (variables_[i] == name) return SymbolRef{SymbolRole::variable, static_cast<std::uint32_t>(i)};
  for (std::size_t i = 0; i < parameters_.size(); ++i)
    if (parameters_[i] == name)
      return SymbolRef{SymbolRole::parameter, static_cast<std::uint32_t>(i)};
  return std::nullopt;
}

void ExprBuilder::split_coefficient(Expr e, Complex& coef, Expr& base) {
  const Node& n = nodes_[e.id];
  if (n.kind == NodeKind::product && nodes_[n.children.front()].kind == NodeKind::constant) {
    coef = nodes_[n.children.front()].value;
    if (n.children.size() == 2) {
      base = Expr{n.children[1]};
    } else {
      Node rest;
      rest.kind = NodeKind::product;
      rest.children.assign(n.children.begin() + 1, n.children.end());
      base = intern(std::move(rest));
    }
    return;
  }
  coef = 1.0;
  base = e;
}

void ExprBuilder::split_power(Expr e, Expr& base, int& exponent) const {
  const Node& n = nodes_[e.id];
  if (n.kind == NodeKind::power) {
    base = Expr{n.children.front()};
    exponent = n.exponent;
  } else {
    base = e;
    exponent = 1;
  }
}

Expr ExprBuilder::add(Expr a, Expr b) {
  const Expr terms[] = {a, b};
  return sum(terms);
}

Expr ExprBuilder::sub(Expr a, Expr b) { return add(a, neg(b)); }

Expr ExprBuilder::neg(Expr a) { return scale(-1.0, a); }

Expr ExprBuilder::mul(Expr a, Expr b) {
  const Expr factors[] = {a, b};
  return product(factors);
}

Expr ExprBuilder::scale(Complex c, Expr a) {
  const Expr factors[] = {constant(c), a};
  return product(factors);
}

Expr ExprBuilder::sum(std::span<const Expr> terms) {
  std::vector<Expr> flat;
  flat.reserve(terms.size());
  for (Expr t : terms) {
    const Node& n = nodes_[t.id];
    if (n.kind == NodeKind::sum) {
      for (auto c : n.children) flat.push_back(Expr{c});
    } else {
      flat.push_back(t);
    }
  }

  Complex total{0.0, 0.0};
  std::vector<std::pair<std::uint32_t, Complex>> collected;
  std::unordered_map<std::uint32_t, std::size_t> slot;
  for (Expr t : flat) {
    if (nodes_[t.id].kind == NodeKind::constant) {
      total += nodes_[t.id].value;
      continue;
    }
    Complex coef;
    Expr base;
    split_coefficient(t, coef, base);
    if (auto it = slot.find(base.id); it != slot.end()) {
      collected[it->second].second += coef;
    } else {
      slot.emplace(base.id, collected.size());
      collected.emplace_back(base.id, coef);
    }
  }

  std::vector<std::uint32_t> children;
  for (auto& [base, coef] : collected) {
    if (coef == Complex{0.0, 0.0}) continue;
    if (coef == Complex{1.0, 0.0}) {
      children.push_back(base);
      continue;
    }
    Node p;
    p.kind = NodeKind::product;
    p.children.push_back(constant(coef).id);
    const Node& bn = nodes_[base];
    if (bn.kind == NodeKind::product) {
      p.children.insert(p.children.end(), bn.children.begin(), bn.children.end());
    } else {
      p.children.push_back(base);
    }
    children.push_back(intern(std::move(p)).id);
  }
  std::sort(children.begin(), children.end());
  if (total != Complex{0.0, 0.0}) children.insert(children.begin(), constant(total).id);

  if (children.empty()) return zero();
  if (children.size() == 1) return Expr{children.front()};
  Node n;
  n.kind = NodeKind::sum;
  n.children = std::move(children);
  return intern(std::move(n));
}

Expr ExprBuilder::product(std::span<const Expr> factors) {
  std::vector<Expr> flat;
  flat.reserve(factors.size());
  for (Expr f : factors) {
    const Node& n = nodes_[f.id];
    if (n.kind == NodeKind::product) {
      for (auto c : n.children) flat.push_back(Expr{c});
    } else {
      flat.push_back(f);
    }
  }

  Complex coef{1.0, 0.0};
  std::vector<std::pair<std::uint32_t, int>> collected;
  std::unordered_map<std::uint32_t, std::size_t> slot;
  for (Expr f : flat) {
    if (nodes_[f.id].kind == NodeKind::constant) {
      coef *= nodes_[f.id].value;
      continue;
    }
    Expr base;
    int k;
    split_power(f, base, k);
    if (auto it = slot.find(base.id); it != slot.end()) {
      collected[it->second].second += k;
    } else {
      slot.emplace(base.id, collected.size());
      collected.emplace_back(base.id, k);
    }
  }
  if (coef == Complex{0.0, 0.0}) return zero();

  std::vector<std::uint32_t> children;
  for (auto& [base, k] : collected) {
    if (k == 1) {
      children.push_back(base);
    } else {
      Node p;
      p.kind = NodeKind::power;
      p.exponent = k;
      p.children = {base};
      children.push_back(intern(std::move(p)).id);
    }
  }
  std::sort(children.begin(), children.end());
  if (children.empty()) return constant(coef);
  if (coef != Complex{1.0, 0.0}) children.insert(children.begin(), constant(coef).id);
  if (children.size() == 1) return Expr{children.front()};
  Node n;
  n.kind = NodeKind::product;
  n.children = std::move(children);
  return intern(std::move(n));
}

Expr ExprBuilder::pow(Expr base, int exponent) {
  if (exponent < 0) throw std::invalid_argument("negative exponent in polynomial expression");
  if (exponent == 0) return one();
  if (exponent == 1) return base;
  const Node& n = nodes_[base.id];
  switch (n.kind) {
    case NodeKind::constant:
      return constant(int_pow(n.value, exponent));
    case NodeKind::power:
      return pow(Expr{n.children.front()}, n.exponent * exponent);
    case NodeKind::product: {
      std::vector<Expr> factors;
      for (auto c : std::vector<std::uint32_t>(n.children)) factors.push_back(pow(Expr{c}, exponent));
      return product(factors);
    }
    default: {
      Node p;
      p.kind = NodeKind::power;
      p.exponent = exponent;
      p.children = {base.id};
      return intern(std::move(p));
    }
  }
}

Expr ExprBuilder::diff(Expr e, SymbolRef wrt) {
  const std::uint64_t key = (static_cast<std::uint64_t>(e.id) << 32) |
                            (static_cast<std::uint64_t>(wrt.role) << 31) | wrt.index;
  if (auto it = diff_memo_.find(key); it != diff_memo_.end()) return Expr{it->second};

  // Copy: recursive calls may reallocate nodes_.
  const Node n = nodes_[e.id];
  Expr result = zero();
  switch (n.kind) {
    case NodeKind::constant:
      break;
    case NodeKind::variable:
      if (wrt.role == SymbolRole::variable && wrt.index == n.index) result = one();
      break;
    case NodeKind::parameter:
      if (wrt.role == SymbolRole::parameter && wrt.index == n.index) result = one();
      break;
    case NodeKind::sum: {
      std::vector<Expr> terms;
      for (auto c : n.children) {
        Expr d = diff(Expr{c}, wrt);
        if (d != zero()) terms.push_back(d);
      }
      result = sum(terms);
      break;
    }
    case NodeKind::product: {
      std::vector<Expr> terms;
      for (std::size_t k = 0; k < n.children.size(); ++k) {
        Expr d = diff(Expr{n.children[k]}, wrt);
        if (d == zero()) continue;
        std::vector<Expr> factors;
        factors.reserve(n.children.size());
        for (std::size_t j = 0; j < n.children.size(); ++j)
          factors.push_back(j == k ? d : Expr{n.children[j]});
        terms.push_back(product(factors));
      }
      result = sum(terms);
      break;
    }
    case NodeKind::power: {
      Expr base{n.children.front()};
      Expr d = diff(base, wrt);
      if (d != zero()) {
        const Expr factors[] = {constant(static_cast<double>(n.exponent)), pow(base, n.exponent - 1), d};
        result = product(factors);
      }
      break;
    }
  }
  diff_memo_.emplace(key, result.id);
  return result;
}

int ExprBuilder::degree(Expr e) const {
  std::unordered_map<std::uint32_t, int> memo;
  auto rec = [&](auto&& self, std::uint32_t id) -> int {
    if (auto it = memo.find(id); it != memo.end()) return it->second;
    const Node& n = nodes_[id];
    int d = 0;
    switch (n.kind) {
      case NodeKind::constant:
      case NodeKind::parameter:
        d = 0;
        break;
      case NodeKind::variable:
        d = 1;
        break;
      case NodeKind::sum:
        for (auto c : n.children) d = std::max(d, self(self, c));
        break;
      case NodeKind::product:
        for (auto c : n.children) d += self(self, c);
        break;
      case NodeKind::power:
        d = n.exponent * self(self, n.children.front());
        break;
    }
    memo.emplace(id, d);
    return d;
  };
  return rec(rec, e.id);
}

std::string ExprBuilder::to_string(Expr e) const { return to_string_impl(e.id, 0); }

// Precedence: sum 1, product 2, power 3, atom 4.
std::string ExprBuilder::to_string_impl(std::uint32_t id, int parent_prec) const {
  const Node& n = nodes_[id];
  std::string out;
  int prec = 4;
  switch (n.kind) {
    case NodeKind::constant: {
      out = format_constant(n.value);
      const bool compound = n.value.imag() != 0.0 && n.value.real() != 0.0;
      prec = (n.value.real() < 0 && n.value.imag() == 0.0) ? 1 : (compound ? 4 : 4);
      break;
    }
    case NodeKind::variable:
      out = variables_[n.index];
      break;
    case NodeKind::parameter:
      out = parameters_[n.index];
      break;
    case NodeKind::sum: {
      prec = 1;
      for (std::size_t k = 0; k < n.children.size(); ++k) {
        std::string term = to_string_impl(n.children[k], 1);
        if (k == 0) {
          out = term;
        } else if (!term.empty() && term.front() == '-') {
          out += " - " + term.substr(1);
        } else {
          out += " + " + term;
        }
      }
      break;
    }
    case NodeKind::product: {
      prec = 2;
      std::size_t start = 0;
      const Node& first = nodes_[n.children.front()];
      if (first.kind == NodeKind::constant && first.value.imag() == 0.0) {
        if (first.value.real() == -1.0) {
          out = "-";
        } else {
          out = format_real(first.value.real()) + "*";
        }
        start = 1;
      }
      for (std::size_t k = start; k < n.children.size(); ++k) {
        if (k > start) out += "*";
        out += to_string_impl(n.children[k], 3);
      }
      break;
    }
    case NodeKind::power:
      prec = 3;
      out = to_string_impl(n.children.front(), 4) + "^" + std::to_string(n.exponent);
      break;
  }
  if (prec < parent_prec || (parent_prec >= 2 && !out.empty() && out.front() == '-'))
    return "(" + out + ")";
  return out;
}

Tape::Tape(const ExprBuilder& store, std::span<const Expr> roots) {
  std::unordered_map<std::uint32_t, std::uint32_t> slot_of;
  std::vector<std::pair<std::uint32_t, bool>> stack;

  auto emit = [&](Instr ins) {
    code_.push_back(ins);
    return static_cast<std::uint32_t>(code_.size() - 1);
  };

  for (Expr root : roots) {
    stack.emplace_back(root.id, false);
    while (!stack.empty()) {
      auto [id, expanded] = stack.back();
      stack.pop_back();
      if (slot_of.count(id)) continue;
      const Node& n = store.node(Expr{id});
      if (!expanded && !n.children.empty()) {
        stack.emplace_back(id, true);
        for (auto c : n.children)
          if (!slot_of.count(c)) stack.emplace_back(c, false);
        continue;
      }
      std::uint32_t slot = 0;
      switch (n.kind) {
        case NodeKind::constant:
          slot = emit({Op::constant, 0, 0, 0, n.value});
          break;
        case NodeKind::variable:
          slot = emit({Op::variable, n.index, 0, 0, {}});
          break;
        case NodeKind::parameter:
          slot = emit({Op::parameter, n.index, 0, 0, {}});
          break;
        case NodeKind::sum:
        case NodeKind::product: {
          const Op op = n.kind == NodeKind::sum ? Op::add : Op::mul;
          slot = slot_of.at(n.children[0]);
          for (std::size_t k = 1; k < n.children.size(); ++k)
            slot = emit({op, slot, slot_of.at(n.children[k]), 0, {}});
          break;
        }
        case NodeKind::power: {
          const std::uint32_t base = slot_of.at(n.children[0]);
          slot = n.exponent == 2 ? emit({Op::square, base, 0, 0, {}})
                                 : emit({Op::pow, base, 0, n.exponent, {}});
          break;
        }
      }
      slot_of.emplace(id, slot);
    }
    outputs_.push_back(slot_of.at(root.id));
  }
}

void Tape::run(std::span<const Complex> vars, std::span<const Complex> params,
               std::vector<Complex>& scratch) const {
  scratch.resize(code_.size());
  Complex* v = scratch.data();
  const std::size_t n = code_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Instr& ins = code_[i];
    switch (ins.op) {
      case Op::constant:
        v[i] = ins.c;
        break;
      case Op::variable:
        v[i] = vars[ins.a];
        break;
      case Op::parameter:
        v[i] = params[ins.a];
        break;
      case Op::add:
        v[i] = v[ins.a] + v[ins.b];
        break;
      case Op::mul:
        v[i] = v[ins.a] * v[ins.b];
        break;
      case Op::square:
        v[i] = v[ins.a] * v[ins.a];
        break;
      case Op::pow:
        v[i] = int_pow(v[ins.a], ins.k);
        break;
    }
  }
}

ExpressionSystem::ExpressionSystem() : store_(std::make_shared<ExprBuilder>()) {}

ExpressionSystem::ExpressionSystem(std::shared_ptr<const ExprBuilder> store, std::vector<Expr> outputs)
    : store_(std::move(store)), outputs_(std::move(outputs)), tape_(*store_, outputs_) {}

std::vector<VariableId> ExpressionSystem::variables() const {
  std::vector<VariableId> out;
  const auto& names = store_->variable_names();
  for (std::size_t i = 0; i < names.size(); ++i) out.push_back({static_cast<std::uint32_t>(i), names[i]});
  return out;
}

std::vector<VariableId> ExpressionSystem::parameters() const {
  std::vector<VariableId> out;
  const auto& names = store_->parameter_names();
  for (std::size_t i = 0; i < names.size(); ++i) out.push_back({static_cast<std::uint32_t>(i), names[i]});
  return out;
}

SymbolRef ExpressionSystem::symbol(std::string_view name) const {
  if (auto s = store_->find_symbol(name)) return *s;
  throw SymbolError("unknown symbol '" + std::string(name) + "'");
}

std::vector<int> ExpressionSystem::degrees() const {
  std::vector<int> out;
  for (Expr e : outputs_) out.push_back(store_->degree(e));
  return out;
}

void ExpressionSystem::check_dimensions(const CVector& point, const CVector& params) const {
  if (static_cast<std::size_t>(point.size()) != n_variables())
    throw DimensionError("point has length " + std::to_string(point.size()) + ", expected " +
                         std::to_string(n_variables()));
  if (static_cast<std::size_t>(params.size()) != n_parameters())
    throw DimensionError("params has length " + std::to_string(params.size()) + ", expected " +
                         std::to_string(n_parameters()));
}

CVector ExpressionSystem::evaluate(const CVector& point, const CVector& params) const {
  check_dimensions(point, params);
  std::vector<Complex> scratch;
  tape_.run({point.data(), static_cast<std::size_t>(point.size())},
            {params.data(), static_cast<std::size_t>(params.size())}, scratch);
  CVector out(static_cast<Eigen::Index>(outputs_.size()));
  for (std::size_t k = 0; k < outputs_.size(); ++k) out[static_cast<Eigen::Index>(k)] = tape_.output(k, scratch);
  return out;
}

ExpressionSystem differentiate(const ExpressionSystem& sys, std::string_view name) {
  const SymbolRef s = sys.symbol(name);
  auto store = std::make_shared<ExprBuilder>(sys.store());
  std::vector<Expr> outputs;
  for (Expr e : sys.outputs()) outputs.push_back(store->diff(e, s));
  return ExpressionSystem(std::move(store), std::move(outputs));
}

namespace {

std::vector<SymbolRef> resolve_variables(const ExpressionSystem& sys, const std::vector<std::string>& wrt) {
  std::vector<SymbolRef> out;
  for (const auto& name : wrt) {
    const SymbolRef s = sys.symbol(name);
    if (s.role != SymbolRole::variable)
      throw SymbolError("'" + name + "' is a parameter, expected a variable");
    out.push_back(s);
  }
  return out;
}

}  // namespace

JacobianEvaluator::JacobianEvaluator(const ExpressionSystem& sys, const std::vector<std::string>& wrt)
    : sys_(sys), rows_(sys.n_outputs()), cols_(wrt.size()) {
  const auto symbols = resolve_variables(sys, wrt);
  auto store = std::make_shared<ExprBuilder>(sys.store());
  std::vector<Expr> entries;
  for (Expr e : sys.outputs())
    for (const auto& s : symbols) entries.push_back(store->diff(e, s));
  tape_ = Tape(*store, entries);
  store_ = std::move(store);
}

CMatrix JacobianEvaluator::evaluate(const CVector& point, const CVector& params) const {
  sys_.check_dimensions(point, params);
  std::vector<Complex> scratch;
  tape_.run({point.data(), static_cast<std::size_t>(point.size())},
            {params.data(), static_cast<std::size_t>(params.size())}, scratch);
  CMatrix out(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = tape_.output(i * cols_ + j, scratch);
  return out;
}

JacobianEvaluator jacobian(const ExpressionSystem& sys, const std::vector<std::string>& wrt) {
  return JacobianEvaluator(sys, wrt);
}

HessianEvaluator::HessianEvaluator(const ExpressionSystem& sys, const std::vector<std::string>& wrt)
    : sys_(sys), n_(wrt.size()) {
  if (sys.n_outputs() != 1)
    throw std::invalid_argument("hessian_of_scalar needs a single-output system, got " +
                                std::to_string(sys.n_outputs()) + " outputs");
  const auto symbols = resolve_variables(sys, wrt);
  auto store = std::make_shared<ExprBuilder>(sys.store());
  const Expr f = sys.outputs().front();
  std::vector<Expr> entries;
  for (std::size_t i = 0; i < n_; ++i) {
    const Expr gi = store->diff(f, symbols[i]);
    for (std::size_t j = i; j < n_; ++j) entries.push_back(store->diff(gi, symbols[j]));
  }
  tape_ = Tape(*store, entries);
  store_ = std::move(store);
}

CMatrix HessianEvaluator::evaluate(const CVector& point, const CVector& params) const {
  sys_.check_dimensions(point, params);
  std::vector<Complex> scratch;
  tape_.run({point.data(), static_cast<std::size_t>(point.size())},
            {params.data(), static_cast<std::size_t>(params.size())}, scratch);
  const auto n = static_cast<Eigen::Index>(n_);
  CMatrix out(n, n);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      out(i, j) = tape_.output(k++, scratch);
      out(j, i) = out(i, j);
    }
  return out;
}

HessianEvaluator hessian_of_scalar(const ExpressionSystem& sys, const std::vector<std::string>& wrt) {
  return HessianEvaluator(sys, wrt);
}

Linearization::Linearization(const ExpressionSystem& sys)
    : sys_(sys),
      n_out_(sys.n_outputs()),
      n_var_(sys.n_variables()),
      n_par_(sys.n_parameters()),
      degrees_(sys.degrees()) {
  auto store = std::make_shared<ExprBuilder>(sys.store());
  std::vector<Expr> entries(sys.outputs());
  for (Expr e : sys.outputs())
    for (std::uint32_t j = 0; j < n_var_; ++j) entries.push_back(store->diff(e, {SymbolRole::variable, j}));
  for (Expr e : sys.outputs())
    for (std::uint32_t j = 0; j < n_par_; ++j) entries.push_back(store->diff(e, {SymbolRole::parameter, j}));
  values_ = Tape(*store, sys.outputs());
  full_ = Tape(*store, entries);
  store_ = std::move(store);
}

void Linearization::evaluate(const CVector& z, const CVector& p, Workspace& ws, CVector* f, CMatrix* jz,
                             CMatrix* jp) const {
  const std::span<const Complex> zs{z.data(), static_cast<std::size_t>(z.size())};
  const std::span<const Complex> ps{p.data(), static_cast<std::size_t>(p.size())};
  if (!jz && !jp) {
    values_.run(zs, ps, ws.scratch);
    f->resize(static_cast<Eigen::Index>(n_out_));
    for (std::size_t i = 0; i < n_out_; ++i) (*f)[static_cast<Eigen::Index>(i)] = values_.output(i, ws.scratch);
    return;
  }
  full_.run(zs, ps, ws.scratch);
  std::size_t k = 0;
  if (f) f->resize(static_cast<Eigen::Index>(n_out_));
  for (std::size_t i = 0; i < n_out_; ++i, ++k)
    if (f) (*f)[static_cast<Eigen::Index>(i)] = full_.output(k, ws.scratch);
  if (jz) jz->resize(static_cast<Eigen::Index>(n_out_), static_cast<Eigen::Index>(n_var_));
  for (std::size_t i = 0; i < n_out_; ++i)
    for (std::size_t j = 0; j < n_var_; ++j, ++k)
      if (jz) (*jz)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = full_.output(k, ws.scratch);
  if (jp) jp->resize(static_cast<Eigen::Index>(n_out_), static_cast<Eigen::Index>(n_par_));
  for (std::size_t i = 0; i < n_out_; ++i)
    for (std::size_t j = 0; j < n_par_; ++j, ++k)
      if (jp) (*jp)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = full_.output(k, ws.scratch);
}

}  // namespace tensegrity
