// Polynomial expression DAGs over complex scalars: construction with
// hash-consing, exact symbolic differentiation, and compiled evaluation.
#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace tensegrity {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

/// Thrown when a vector handed to an evaluator has the wrong length.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a symbol name does not belong to a system.
class SymbolError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class NodeKind : std::uint8_t { constant, variable, parameter, sum, product, power };
enum class SymbolRole : std::uint8_t { variable, parameter };

/// Handle to a node owned by an ExprBuilder.
struct Expr {
  std::uint32_t id = 0;
  friend bool operator==(Expr, Expr) = default;
};

struct Node {
  NodeKind kind = NodeKind::constant;
  Complex value{};            // constant
  std::uint32_t index = 0;    // variable / parameter slot
  int exponent = 0;           // power
  std::vector<std::uint32_t> children;
};

struct VariableId {
  std::uint32_t index = 0;
  std::string name;
};

struct SymbolRef {
  SymbolRole role = SymbolRole::variable;
  std::uint32_t index = 0;
};

/// Node store with structural sharing. Sums and products are flattened,
/// constant-folded and canonically ordered, so equal subexpressions built
/// along different routes usually share one node.
class ExprBuilder {
 public:
  ExprBuilder();

  Expr constant(Complex c);
  Expr zero() const { return Expr{zero_}; }
  Expr one() const { return Expr{one_}; }

  /// Declares the symbol on first use; later calls return the same node.
  Expr variable(std::string_view name);
  Expr parameter(std::string_view name);

  Expr add(Expr a, Expr b);
  Expr sum(std::span<const Expr> terms);
  Expr sub(Expr a, Expr b);
  Expr neg(Expr a);
  Expr mul(Expr a, Expr b);
  Expr product(std::span<const Expr> factors);
  Expr scale(Complex c, Expr a);
  Expr pow(Expr base, int exponent);

  /// Exact partial derivative. Results are memoized per (node, symbol).
  Expr diff(Expr e, SymbolRef wrt);

  const Node& node(Expr e) const { return nodes_[e.id]; }
  bool is_constant(Expr e) const { return nodes_[e.id].kind == NodeKind::constant; }
  std::size_t size() const { return nodes_.size(); }

  const std::vector<std::string>& variable_names() const { return variables_; }
  const std::vector<std::string>& parameter_names() const { return parameters_; }
  std::optional<SymbolRef> find_symbol(std::string_view name) const;

  /// Structural total degree in the variables (parameters count as
  /// coefficients). An upper bound on the true degree.
  int degree(Expr e) const;

  std::string to_string(Expr e) const;

 private:
  struct Key {
    NodeKind kind;
    double re, im;
    std::uint32_t index;
    int exponent;
    std::vector<std::uint32_t> children;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept;
  };

  Expr intern(Node n);
  void split_coefficient(Expr e, Complex& coef, Expr& base);
  void split_power(Expr e, Expr& base, int& exponent) const;
  std::string to_string_impl(std::uint32_t id, int parent_prec) const;

  std::vector<Node> nodes_;
  std::unordered_map<Key, std::uint32_t, KeyHash> intern_;
  std::unordered_map<std::uint64_t, std::uint32_t> diff_memo_;
  std::vector<std::string> variables_;
  std::vector<std::string> parameters_;
  std::uint32_t zero_ = 0;
  std::uint32_t one_ = 0;
};

/// Straight-line program compiled from a set of roots. Evaluation is pure;
/// callers pass their own scratch buffer so a Tape can be shared by threads.
class Tape {
 public:
  Tape() = default;
  Tape(const ExprBuilder& store, std::span<const Expr> roots);

  std::size_t n_outputs() const { return outputs_.size(); }
  std::size_t scratch_size() const { return code_.size(); }

  void run(std::span<const Complex> vars, std::span<const Complex> params,
           std::vector<Complex>& scratch) const;
  Complex output(std::size_t k, const std::vector<Complex>& scratch) const {
    return scratch[outputs_[k]];
  }

 private:
  enum class Op : std::uint8_t { constant, variable, parameter, add, mul, square, pow };
  struct Instr {
    Op op;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    int k = 0;
    Complex c{};
  };
  std::vector<Instr> code_;
  std::vector<std::uint32_t> outputs_;
};

/// Immutable polynomial system: named variables and parameters, a list of
/// output expressions, and a compiled evaluator.
class ExpressionSystem {
 public:
  ExpressionSystem();
  ExpressionSystem(std::shared_ptr<const ExprBuilder> store, std::vector<Expr> outputs);

  std::size_t n_variables() const { return store_->variable_names().size(); }
  std::size_t n_parameters() const { return store_->parameter_names().size(); }
  std::size_t n_outputs() const { return outputs_.size(); }

  std::vector<VariableId> variables() const;
  std::vector<VariableId> parameters() const;
  SymbolRef symbol(std::string_view name) const;  // throws SymbolError

  const std::vector<Expr>& outputs() const { return outputs_; }
  const ExprBuilder& store() const { return *store_; }
  std::shared_ptr<const ExprBuilder> shared_store() const { return store_; }

  int degree(std::size_t output) const { return store_->degree(outputs_[output]); }
  std::vector<int> degrees() const;

  CVector evaluate(const CVector& point, const CVector& params) const;
  std::string to_string(std::size_t output) const { return store_->to_string(outputs_[output]); }

  void check_dimensions(const CVector& point, const CVector& params) const;

 private:
  std::shared_ptr<const ExprBuilder> store_;
  std::vector<Expr> outputs_;
  Tape tape_;
};

/// Output i of the result is d(output i)/d(name); name may be a variable or
/// a parameter.
ExpressionSystem differentiate(const ExpressionSystem& sys, std::string_view name);

/// Exact Jacobian of all outputs with respect to a subset of variables.
class JacobianEvaluator {
 public:
  JacobianEvaluator(const ExpressionSystem& sys, const std::vector<std::string>& wrt);
  CMatrix evaluate(const CVector& point, const CVector& params) const;
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

 private:
  ExpressionSystem sys_;
  std::shared_ptr<const ExprBuilder> store_;
  Tape tape_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
};

JacobianEvaluator jacobian(const ExpressionSystem& sys, const std::vector<std::string>& wrt);

/// Second derivatives of a single-output system. Only the upper triangle is
/// differentiated; the lower triangle is mirrored so the result is exactly
/// symmetric.
class HessianEvaluator {
 public:
  HessianEvaluator(const ExpressionSystem& sys, const std::vector<std::string>& wrt);
  CMatrix evaluate(const CVector& point, const CVector& params) const;
  std::size_t size() const { return n_; }

 private:
  ExpressionSystem sys_;
  std::shared_ptr<const ExprBuilder> store_;
  Tape tape_;
  std::size_t n_ = 0;
};

HessianEvaluator hessian_of_scalar(const ExpressionSystem& sys, const std::vector<std::string>& wrt);

/// Values, variable Jacobian and parameter Jacobian of a square system in one
/// pass. This is the workhorse behind path tracking.
class Linearization {
 public:
  struct Workspace {
    std::vector<Complex> scratch;
  };

  explicit Linearization(const ExpressionSystem& sys);

  std::size_t n_outputs() const { return n_out_; }
  std::size_t n_variables() const { return n_var_; }
  std::size_t n_parameters() const { return n_par_; }
  const ExpressionSystem& system() const { return sys_; }
  const std::vector<int>& degrees() const { return degrees_; }

  /// Any of the output pointers may be null.
  void evaluate(const CVector& z, const CVector& p, Workspace& ws, CVector* f, CMatrix* jz,
                CMatrix* jp) const;

 private:
  ExpressionSystem sys_;
  std::shared_ptr<const ExprBuilder> store_;
  Tape values_;
  Tape full_;
  std::size_t n_out_ = 0;
  std::size_t n_var_ = 0;
  std::size_t n_par_ = 0;
  std::vector<int> degrees_;
};

}  // namespace tensegrity
