#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "coopeig/errors.hpp"

namespace coopeig {

// Arithmetic expression language for coefficient definitions in config files.
//
// Grammar (loosest to tightest binding):
//   comparison   <  <=  >  >=  ==  !=      (value 0 or 1)
//   additive     +  -
//   multiplicative  *  /
//   unary minus  -e
//   power        ^                          (right associative)
//   atoms        numbers, x1..x9, k, f(args), (e)
// Functions: sin cos exp log tanh abs sign min max sqrt ind.
// `ind(e)` maps nonzero to 1 and zero to 0; comparisons are its intended
// argument. `sign(0)` is 0. Evaluation never returns a non-finite value:
// division by zero, log of a non-positive number, sqrt of a negative
// number and non-finite overflow all raise EvalError.

struct SyntaxError : ValidationError {
  SyntaxError(std::size_t offset, const std::string& expected)
      : ValidationError("exprlang.parse",
                        "syntax error at offset " + std::to_string(offset) +
                            ", expected " + expected),
        offset(offset) {}
  std::size_t offset;
};

struct EvalError : NumericError {
  EvalError(const std::string& kind, std::size_t offset)
      : NumericError("exprlang.eval",
                     kind + " at offset " + std::to_string(offset)),
        kind(kind), offset(offset) {}
  std::string kind;
  std::size_t offset;
};

class Expr {
public:
  static Expr parse(const std::string& text);

  // x points at `dim` coordinates; k is the 1-based regime index.
  double eval(const double* x, int dim, int k) const;

  // Round-trippable text form: parse(print()) yields an identical tree.
  std::string print() const;

  bool identical(const Expr& other) const;

  // Highest variable index referenced (0 when only constants/k appear).
  int max_var() const;

private:
  enum class Op : std::uint8_t {
    Lit, Var, Regime,
    Add, Sub, Mul, Div, Pow, Neg,
    Lt, Le, Gt, Ge, Eq, Ne,
    Sin, Cos, Exp, Log, Tanh, Abs, Sign, Sqrt, Ind,
    Min, Max,
  };
  struct Node {
    Op op;
    double lit = 0.0;
    int var = 0;       // 1-based for Var
    int a = -1, b = -1;
    std::uint32_t offset = 0;
  };
  std::vector<Node> nodes_;
  int root_ = -1;

  double eval_node(int idx, const double* x, int dim, int k) const;
  void print_node(int idx, int parent_prec, std::string& out) const;
  friend class Parser;
};

}  // namespace coopeig
