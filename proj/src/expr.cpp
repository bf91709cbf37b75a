#include "coopeig/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>

namespace coopeig {

namespace {

bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

class Parser {
public:
  explicit Parser(const std::string& text) : text_(text) {}

  Expr run() {
    Expr e;
    e.root_ = comparison(e);
    skip_ws();
    if (pos_ != text_.size()) fail("end of input");
    if (e.root_ < 0) fail("expression");
    return e;
  }

private:
  const std::string& text_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& expected) { throw SyntaxError(pos_, expected); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) { ++pos_; return true; }
    return false;
  }

  bool peek(char c) {
    skip_ws();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  int make(Expr& e, Expr::Node n) {
    e.nodes_.push_back(n);
    return static_cast<int>(e.nodes_.size() - 1);
  }

  int comparison(Expr& e) {
    int lhs = additive(e);
    skip_ws();
    std::size_t at = pos_;
    Expr::Op op;
    if (match("<=")) op = Expr::Op::Le;
    else if (match(">=")) op = Expr::Op::Ge;
    else if (match("==")) op = Expr::Op::Eq;
    else if (match("!=")) op = Expr::Op::Ne;
    else if (match("<")) op = Expr::Op::Lt;
    else if (match(">")) op = Expr::Op::Gt;
    else return lhs;
    int rhs = additive(e);
    return make(e, {op, 0.0, 0, lhs, rhs, static_cast<std::uint32_t>(at)});
  }

  int additive(Expr& e) {
    int lhs = multiplicative(e);
    for (;;) {
      skip_ws();
      std::size_t at = pos_;
      if (eat('+')) {
        int rhs = multiplicative(e);
        lhs = make(e, {Expr::Op::Add, 0.0, 0, lhs, rhs, static_cast<std::uint32_t>(at)});
      } else if (eat('-')) {
        int rhs = multiplicative(e);
        lhs = make(e, {Expr::Op::Sub, 0.0, 0, lhs, rhs, static_cast<std::uint32_t>(at)});
      } else {
        return lhs;
      }
    }
  }

  int multiplicative(Expr& e) {
    int lhs = unary(e);
    for (;;) {
      skip_ws();
      std::size_t at = pos_;
      if (eat('*')) {
        int rhs = unary(e);
        lhs = make(e, {Expr::Op::Mul, 0.0, 0, lhs, rhs, static_cast<std::uint32_t>(at)});
      } else if (eat('/')) {
        int rhs = unary(e);
        lhs = make(e, {Expr::Op::Div, 0.0, 0, lhs, rhs, static_cast<std::uint32_t>(at)});
      } else {
        return lhs;
      }
    }
  }

  int unary(Expr& e) {
    skip_ws();
    std::size_t at = pos_;
    if (eat('-')) {
      int a = unary(e);
      return make(e, {Expr::Op::Neg, 0.0, 0, a, -1, static_cast<std::uint32_t>(at)});
    }
    return power(e);
  }

  int power(Expr& e) {
    int base = atom(e);
    skip_ws();
    std::size_t at = pos_;
    if (eat('^')) {
      int exp = unary(e);  // right associative, exponent may carry unary minus
      return make(e, {Expr::Op::Pow, 0.0, 0, base, exp, static_cast<std::uint32_t>(at)});
    }
    return base;
  }

  bool match(const char* s) {
    skip_ws();
    std::size_t n = std::char_traits<char>::length(s);
    if (text_.compare(pos_, n, s) == 0) { pos_ += n; return true; }
    return false;
  }

  int atom(Expr& e) {
    skip_ws();
    if (pos_ >= text_.size()) fail("operand");
    std::size_t at = pos_;
    char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      double value = 0.0;
      const char* begin = text_.data() + pos_;
      const char* end = text_.data() + text_.size();
      auto res = std::from_chars(begin, end, value);
      if (res.ec != std::errc()) fail("number");
      pos_ += static_cast<std::size_t>(res.ptr - begin);
      return make(e, {Expr::Op::Lit, value, 0, -1, -1, static_cast<std::uint32_t>(at)});
    }
    if (eat('(')) {
      int inner = comparison(e);
      if (!eat(')')) fail("')'");
      return inner;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < text_.size() && ident_char(text_[pos_])) ++pos_;
      std::string name = text_.substr(start, pos_ - start);
      if (name == "k")
        return make(e, {Expr::Op::Regime, 0.0, 0, -1, -1, static_cast<std::uint32_t>(at)});
      if (name.size() >= 2 && name[0] == 'x') {
        bool digits = true;
        for (std::size_t i = 1; i < name.size(); ++i)
          digits = digits && std::isdigit(static_cast<unsigned char>(name[i]));
        if (digits) {
          int idx = std::stoi(name.substr(1));
          if (idx < 1 || idx > 9) { pos_ = start; fail("variable x1..x9"); }
          return make(e, {Expr::Op::Var, 0.0, idx, -1, -1, static_cast<std::uint32_t>(at)});
        }
      }
      static const std::map<std::string, Expr::Op> unary_fns = {
          {"sin", Expr::Op::Sin}, {"cos", Expr::Op::Cos}, {"exp", Expr::Op::Exp},
          {"log", Expr::Op::Log}, {"tanh", Expr::Op::Tanh}, {"abs", Expr::Op::Abs},
          {"sign", Expr::Op::Sign}, {"sqrt", Expr::Op::Sqrt}, {"ind", Expr::Op::Ind}};
      static const std::map<std::string, Expr::Op> binary_fns = {
          {"min", Expr::Op::Min}, {"max", Expr::Op::Max}};
      if (auto it = unary_fns.find(name); it != unary_fns.end()) {
        if (!eat('(')) fail("'('");
        int a = comparison(e);
        if (!eat(')')) fail("')'");
        return make(e, {it->second, 0.0, 0, a, -1, static_cast<std::uint32_t>(at)});
      }
      if (auto it = binary_fns.find(name); it != binary_fns.end()) {
        if (!eat('(')) fail("'('");
        int a = comparison(e);
        if (!eat(',')) fail("','");
        int b = comparison(e);
        if (!eat(')')) fail("')'");
        return make(e, {it->second, 0.0, 0, a, b, static_cast<std::uint32_t>(at)});
      }
      pos_ = start;
      fail("known function or variable");
    }
    fail("operand");
  }
};

Expr Expr::parse(const std::string& text) { return Parser(text).run(); }

double Expr::eval(const double* x, int dim, int k) const {
  return eval_node(root_, x, dim, k);
}

double Expr::eval_node(int idx, const double* x, int dim, int k) const {
  const Node& n = nodes_[static_cast<std::size_t>(idx)];
  auto finite = [&](double v) {
    if (!std::isfinite(v)) throw EvalError("non-finite result", n.offset);
    return v;
  };
  switch (n.op) {
    case Op::Lit: return n.lit;
    case Op::Var:
      if (n.var > dim) throw EvalError("variable beyond dimension", n.offset);
      return x[n.var - 1];
    case Op::Regime: return static_cast<double>(k);
    case Op::Add: return finite(eval_node(n.a, x, dim, k) + eval_node(n.b, x, dim, k));
    case Op::Sub: return finite(eval_node(n.a, x, dim, k) - eval_node(n.b, x, dim, k));
    case Op::Mul: return finite(eval_node(n.a, x, dim, k) * eval_node(n.b, x, dim, k));
    case Op::Div: {
      double den = eval_node(n.b, x, dim, k);
      if (den == 0.0) throw EvalError("division by zero", n.offset);
      return finite(eval_node(n.a, x, dim, k) / den);
    }
    case Op::Pow: {
      double base = eval_node(n.a, x, dim, k);
      double expo = eval_node(n.b, x, dim, k);
      if (base == 0.0 && expo < 0.0) throw EvalError("zero to negative power", n.offset);
      if (base < 0.0 && expo != std::floor(expo))
        throw EvalError("negative base with non-integer exponent", n.offset);
      return finite(std::pow(base, expo));
    }
    case Op::Neg: return -eval_node(n.a, x, dim, k);
    case Op::Lt: return eval_node(n.a, x, dim, k) < eval_node(n.b, x, dim, k) ? 1.0 : 0.0;
    case Op::Le: return eval_node(n.a, x, dim, k) <= eval_node(n.b, x, dim, k) ? 1.0 : 0.0;
    case Op::Gt: return eval_node(n.a, x, dim, k) > eval_node(n.b, x, dim, k) ? 1.0 : 0.0;
    case Op::Ge: return eval_node(n.a, x, dim, k) >= eval_node(n.b, x, dim, k) ? 1.0 : 0.0;
    case Op::Eq: return eval_node(n.a, x, dim, k) == eval_node(n.b, x, dim, k) ? 1.0 : 0.0;
    case Op::Ne: return eval_node(n.a, x, dim, k) != eval_node(n.b, x, dim, k) ? 1.0 : 0.0;
    case Op::Sin: return finite(std::sin(eval_node(n.a, x, dim, k)));
    case Op::Cos: return finite(std::cos(eval_node(n.a, x, dim, k)));
    case Op::Exp: return finite(std::exp(eval_node(n.a, x, dim, k)));
    case Op::Log: {
      double v = eval_node(n.a, x, dim, k);
      if (v <= 0.0) throw EvalError("log of non-positive value", n.offset);
      return finite(std::log(v));
    }
    case Op::Tanh: return std::tanh(eval_node(n.a, x, dim, k));
    case Op::Abs: return std::fabs(eval_node(n.a, x, dim, k));
    case Op::Sign: {
      double v = eval_node(n.a, x, dim, k);
      return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    }
    case Op::Sqrt: {
      double v = eval_node(n.a, x, dim, k);
      if (v < 0.0) throw EvalError("sqrt of negative value", n.offset);
      return std::sqrt(v);
    }
    case Op::Ind: return eval_node(n.a, x, dim, k) != 0.0 ? 1.0 : 0.0;
    case Op::Min: return std::min(eval_node(n.a, x, dim, k), eval_node(n.b, x, dim, k));
    case Op::Max: return std::max(eval_node(n.a, x, dim, k), eval_node(n.b, x, dim, k));
  }
  throw EvalError("corrupt expression", 0);
}

void Expr::print_node(int idx, int parent_prec, std::string& out) const {
  const Node& n = nodes_[static_cast<std::size_t>(idx)];
  auto binary = [&](const char* sym, int prec, bool right_assoc = false) {
    bool parens = prec < parent_prec;
    if (parens) out += '(';
    print_node(n.a, right_assoc ? prec + 1 : prec, out);
    out += sym;
    print_node(n.b, right_assoc ? prec : prec + 1, out);
    if (parens) out += ')';
  };
  auto fn1 = [&](const char* name) {
    out += name;
    out += '(';
    print_node(n.a, 0, out);
    out += ')';
  };
  switch (n.op) {
    case Op::Lit: {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", n.lit);
      out += buf;
      break;
    }
    case Op::Var: out += 'x'; out += std::to_string(n.var); break;
    case Op::Regime: out += 'k'; break;
    case Op::Add: binary(" + ", 2); break;
    case Op::Sub: binary(" - ", 2); break;
    case Op::Mul: binary("*", 3); break;
    case Op::Div: binary("/", 3); break;
    case Op::Pow: binary("^", 5, true); break;
    case Op::Neg: {
      bool parens = 4 < parent_prec;
      if (parens) out += '(';
      out += '-';
      print_node(n.a, 4, out);
      if (parens) out += ')';
      break;
    }
    case Op::Lt: binary(" < ", 1); break;
    case Op::Le: binary(" <= ", 1); break;
    case Op::Gt: binary(" > ", 1); break;
    case Op::Ge: binary(" >= ", 1); break;
    case Op::Eq: binary(" == ", 1); break;
    case Op::Ne: binary(" != ", 1); break;
    case Op::Sin: fn1("sin"); break;
    case Op::Cos: fn1("cos"); break;
    case Op::Exp: fn1("exp"); break;
    case Op::Log: fn1("log"); break;
    case Op::Tanh: fn1("tanh"); break;
    case Op::Abs: fn1("abs"); break;
    case Op::Sign: fn1("sign"); break;
    case Op::Sqrt: fn1("sqrt"); break;
    case Op::Ind: fn1("ind"); break;
    case Op::Min:
    case Op::Max:
      out += (n.op == Op::Min) ? "min(" : "max(";
      print_node(n.a, 0, out);
      out += ", ";
      print_node(n.b, 0, out);
      out += ')';
      break;
  }
}

std::string Expr::print() const {
  std::string out;
  print_node(root_, 0, out);
  return out;
}

bool Expr::identical(const Expr& other) const {
  // Structural comparison independent of arena layout.
  std::vector<std::pair<int, int>> stack{{root_, other.root_}};
  while (!stack.empty()) {
    auto [ia, ib] = stack.back();
    stack.pop_back();
    if ((ia < 0) != (ib < 0)) return false;
    if (ia < 0) continue;
    const Node& a = nodes_[static_cast<std::size_t>(ia)];
    const Node& b = other.nodes_[static_cast<std::size_t>(ib)];
    if (a.op != b.op || a.lit != b.lit || a.var != b.var) return false;
    stack.push_back({a.a, b.a});
    stack.push_back({a.b, b.b});
  }
  return true;
}

int Expr::max_var() const {
  int m = 0;
  for (const Node& n : nodes_)
    if (n.op == Op::Var) m = std::max(m, n.var);
  return m;
}

}  // namespace coopeig
