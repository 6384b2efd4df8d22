#pragma once

#include <string>
#include <vector>

namespace bidhom {

/// Arithmetic expression over named variables: +, -, *, /, unary minus,
/// sin, cos, exp, numeric literals and parentheses. Compiled to a small
/// postfix program; evaluation is allocation-free.
class Expr {
public:
  Expr() = default;
  static Expr parse(const std::string& text, const std::vector<std::string>& variables);

  double eval(const double* vars) const;
  bool empty() const { return prog_.empty(); }
  const std::string& text() const { return text_; }

  struct Op {
    enum Kind { push_const, push_var, add, sub, mul, div, neg, fsin, fcos, fexp };
    Kind kind;
    double value = 0.0;
    int var = 0;
  };

private:
  std::vector<Op> prog_;
  int max_stack_ = 0;
  std::string text_;
};

}  // namespace bidhom
