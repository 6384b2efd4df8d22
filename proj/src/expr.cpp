#include "bidhom/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace bidhom {

namespace {

struct Parser {
  const std::string& text;
  const std::vector<std::string>& vars;
  std::size_t pos = 0;
  std::vector<Expr::Op>* prog;

  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("expression error at column " + std::to_string(pos + 1) + ": " +
                                what + " in \"" + text + "\"");
  }

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }
  bool peek(char c) {
    skip_ws();
    return pos < text.size() && text[pos] == c;
  }
  bool accept(char c) {
    if (peek(c)) {
      ++pos;
      return true;
    }
    return false;
  }

  void expression() {
    term();
    for (;;) {
      if (accept('+')) {
        term();
        prog->push_back({Expr::Op::add});
      } else if (accept('-')) {
        term();
        prog->push_back({Expr::Op::sub});
      } else {
        break;
      }
    }
  }

  void term() {
    factor();
    for (;;) {
      if (accept('*')) {
        factor();
        prog->push_back({Expr::Op::mul});
      } else if (accept('/')) {
        factor();
        prog->push_back({Expr::Op::div});
      } else {
        break;
      }
    }
  }

  void factor() {
    skip_ws();
    if (accept('-')) {
      factor();
      prog->push_back({Expr::Op::neg});
      return;
    }
    if (accept('+')) {
      factor();
      return;
    }
    primary();
  }

  void primary() {
    skip_ws();
    if (pos >= text.size()) fail("unexpected end of expression");
    char c = text[pos];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      char* end = nullptr;
      double val = std::strtod(text.c_str() + pos, &end);
      if (end == text.c_str() + pos) fail("malformed number");
      pos = end - text.c_str();
      prog->push_back({Expr::Op::push_const, val});
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos;
      while (pos < text.size() &&
             (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
        ++pos;
      std::string name = text.substr(start, pos - start);
      if (name == "sin" || name == "cos" || name == "exp") {
        if (!accept('(')) fail("expected '(' after " + name);
        expression();
        if (!accept(')')) fail("expected ')'");
        Expr::Op op;
        op.kind = name == "sin" ? Expr::Op::fsin : name == "cos" ? Expr::Op::fcos : Expr::Op::fexp;
        prog->push_back(op);
        return;
      }
      if (name == "pi") {
        prog->push_back({Expr::Op::push_const, 3.14159265358979323846});
        return;
      }
      for (std::size_t i = 0; i < vars.size(); ++i)
        if (vars[i] == name) {
          Expr::Op op;
          op.kind = Expr::Op::push_var;
          op.var = static_cast<int>(i);
          prog->push_back(op);
          return;
        }
      std::string known = "pi";
      for (const auto& v : vars) known += ", " + v;
      fail("unknown identifier '" + name + "' (allowed: " + known + ", sin, cos, exp)");
    }
    if (accept('(')) {
      expression();
      if (!accept(')')) fail("expected ')'");
      return;
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

}  // namespace

Expr Expr::parse(const std::string& text, const std::vector<std::string>& variables) {
  Expr e;
  e.text_ = text;
  Parser p{text, variables, 0, &e.prog_};
  p.expression();
  p.skip_ws();
  if (p.pos != text.size()) p.fail("trailing input");
  int depth = 0, maxd = 0;
  for (const Op& op : e.prog_) {
    switch (op.kind) {
      case Op::push_const:
      case Op::push_var:
        ++depth;
        break;
      case Op::add:
      case Op::sub:
      case Op::mul:
      case Op::div:
        --depth;
        break;
      default:
        break;
    }
    maxd = std::max(maxd, depth);
  }
  e.max_stack_ = maxd;
  if (maxd > 64) throw std::invalid_argument("expression too deeply nested");
  return e;
}

double Expr::eval(const double* vars) const {
  double stack[64];
  int top = -1;
  for (const Op& op : prog_) {
    switch (op.kind) {
      case Op::push_const:
        stack[++top] = op.value;
        break;
      case Op::push_var:
        stack[++top] = vars[op.var];
        break;
      case Op::add:
        --top;
        stack[top] += stack[top + 1];
        break;
      case Op::sub:
        --top;
        stack[top] -= stack[top + 1];
        break;
      case Op::mul:
        --top;
        stack[top] *= stack[top + 1];
        break;
      case Op::div:
        --top;
        stack[top] /= stack[top + 1];
        break;
      case Op::neg:
        stack[top] = -stack[top];
        break;
      case Op::fsin:
        stack[top] = std::sin(stack[top]);
        break;
      case Op::fcos:
        stack[top] = std::cos(stack[top]);
        break;
      case Op::fexp:
        stack[top] = std::exp(stack[top]);
        break;
    }
  }
  return top == 0 ? stack[0] : 0.0;
}

}  // namespace bidhom
