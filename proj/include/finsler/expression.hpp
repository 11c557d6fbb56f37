#pragma once

// Closed-form coefficient expressions in the chart variables x1..xn.
//
// Grammar (whitespace ignored):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('+' | '-') unary | power
//   power   := primary ('^' unary)?
//   primary := number | 'x'<k> | 'pi' | func '(' expr ')' | '(' expr ')'
//   func    := exp | log | sqrt | sin | cos | sinh | cosh | atan
// Integer exponents are expanded by repeated multiplication, so negative bases
// are fine; other exponents require a positive base.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "finsler/error.hpp"
#include "finsler/jet.hpp"

namespace finsler {

class Expr {
 public:
  enum class Op { Const, Var, Neg, Add, Sub, Mul, Div, IPow, Pow, Exp, Log, Sqrt, Sin, Cos, Sinh, Cosh, Atan };

  Expr() : Expr(constant(0.0)) {}

  static Expr constant(double v) {
    auto n = std::make_shared<Node>();
    n->op = Op::Const;
    n->value = v;
    return Expr(n);
  }

  static Expr parse(const std::string& text, int dimension) {
    Parser p{text, 0, dimension};
    Expr e = p.expr();
    p.skip();
    if (p.pos != text.size()) p.error("unexpected trailing input");
    e.source_ = text;
    return e;
  }

  const std::string& source() const { return source_; }

  bool is_constant() const { return node_->is_constant(); }

  template <class T>
  T eval(std::span<const T> x) const {
    return eval_node<T>(*node_, x);
  }

  double operator()(std::span<const double> x) const { return eval<double>(x); }

 private:
  struct Node {
    Op op = Op::Const;
    double value = 0.0;
    int index = 0;  // variable index, or integer exponent for IPow
    std::shared_ptr<const Node> a, b;

    bool is_constant() const {
      if (op == Op::Var) return false;
      if (a && !a->is_constant()) return false;
      if (b && !b->is_constant()) return false;
      return true;
    }
  };
  using NodePtr = std::shared_ptr<const Node>;

  explicit Expr(NodePtr n) : node_(std::move(n)), source_(format_const(node_)) {}

  static std::string format_const(const NodePtr& n) {
    if (n->op == Op::Const) return std::to_string(n->value);
    return {};
  }

  static NodePtr make(Op op, NodePtr a, NodePtr b = nullptr, int index = 0) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    n->index = index;
    return n;
  }

  struct Parser {
    const std::string& s;
    std::size_t pos;
    int dim;

    [[noreturn]] void error(const std::string& msg) const {
      fail(ErrorCode::ConfigParse, "expression '" + s + "' at offset " + std::to_string(pos) + ": " + msg);
    }
    void skip() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool accept(char c) {
      skip();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }

    Expr expr() { return Expr(sum()); }

    NodePtr sum() {
      NodePtr lhs = product();
      for (;;) {
        if (accept('+')) lhs = make(Op::Add, lhs, product());
        else if (accept('-')) lhs = make(Op::Sub, lhs, product());
        else return lhs;
      }
    }
    NodePtr product() {
      NodePtr lhs = unary();
      for (;;) {
        if (accept('*')) lhs = make(Op::Mul, lhs, unary());
        else if (accept('/')) lhs = make(Op::Div, lhs, unary());
        else return lhs;
      }
    }
    NodePtr unary() {
      if (accept('-')) return make(Op::Neg, unary());
      if (accept('+')) return unary();
      return power();
    }
    NodePtr power() {
      NodePtr base = primary();
      if (!accept('^')) return base;
      NodePtr ex = unary();
      if (ex->is_constant()) {
        double v = eval_node<double>(*ex, std::span<const double>{});
        if (v == std::round(v) && std::abs(v) <= 64) return make(Op::IPow, base, nullptr, static_cast<int>(v));
      }
      return make(Op::Pow, base, ex);
    }
    NodePtr primary() {
      skip();
      if (pos >= s.size()) error("unexpected end of input");
      char c = s[pos];
      if (accept('(')) {
        NodePtr inner = sum();
        if (!accept(')')) error("expected ')'");
        return inner;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(s.substr(pos), &used);
        } catch (const std::exception&) {
          error("bad number");
        }
        pos += used;
        auto n = std::make_shared<Node>();
        n->op = Op::Const;
        n->value = v;
        return n;
      }
      if (std::isalpha(static_cast<unsigned char>(c))) {
        std::size_t start = pos;
        while (pos < s.size() && std::isalnum(static_cast<unsigned char>(s[pos]))) ++pos;
        std::string id = s.substr(start, pos - start);
        if (id.size() > 1 && id[0] == 'x' && std::all_of(id.begin() + 1, id.end(), [](char d) { return std::isdigit(static_cast<unsigned char>(d)); })) {
          int k = std::stoi(id.substr(1));
          if (k < 1 || k > dim) error("variable " + id + " outside dimension " + std::to_string(dim));
          auto n = std::make_shared<Node>();
          n->op = Op::Var;
          n->index = k - 1;
          return n;
        }
        if (id == "pi") {
          auto n = std::make_shared<Node>();
          n->op = Op::Const;
          n->value = std::numbers::pi;
          return n;
        }
        Op op;
        if (id == "exp") op = Op::Exp;
        else if (id == "log") op = Op::Log;
        else if (id == "sqrt") op = Op::Sqrt;
        else if (id == "sin") op = Op::Sin;
        else if (id == "cos") op = Op::Cos;
        else if (id == "sinh") op = Op::Sinh;
        else if (id == "cosh") op = Op::Cosh;
        else if (id == "atan") op = Op::Atan;
        else error("unknown identifier '" + id + "'");
        if (!accept('(')) error("expected '(' after " + id);
        NodePtr arg = sum();
        if (!accept(')')) error("expected ')'");
        return make(op, arg);
      }
      error(std::string("unexpected character '") + c + "'");
    }
  };

  template <class T>
  static T eval_node(const Node& n, std::span<const T> x) {
    using std::atan;
    using std::cos;
    using std::cosh;
    using std::exp;
    using std::log;
    using std::sin;
    using std::sinh;
    using std::sqrt;
    switch (n.op) {
      case Op::Const:
        if constexpr (std::is_same_v<T, double>) return n.value;
        else return lift(n.value, x[0]);
      case Op::Var: return x[static_cast<std::size_t>(n.index)];
      case Op::Neg: return -eval_node<T>(*n.a, x);
      case Op::Add: return eval_node<T>(*n.a, x) + eval_node<T>(*n.b, x);
      case Op::Sub: return eval_node<T>(*n.a, x) - eval_node<T>(*n.b, x);
      case Op::Mul: return eval_node<T>(*n.a, x) * eval_node<T>(*n.b, x);
      case Op::Div: return eval_node<T>(*n.a, x) / eval_node<T>(*n.b, x);
      case Op::IPow: return ipow(eval_node<T>(*n.a, x), n.index);
      case Op::Pow: {
        T base = eval_node<T>(*n.a, x);
        double ex = value_of(eval_node<T>(*n.b, x));
        if (!n.b->is_constant()) return exp(eval_node<T>(*n.b, x) * log(base));
        if constexpr (std::is_same_v<T, double>) return std::pow(base, ex);
        else return pow(base, ex);
      }
      case Op::Exp: return exp(eval_node<T>(*n.a, x));
      case Op::Log: return log(eval_node<T>(*n.a, x));
      case Op::Sqrt: return sqrt(eval_node<T>(*n.a, x));
      case Op::Sin: return sin(eval_node<T>(*n.a, x));
      case Op::Cos: return cos(eval_node<T>(*n.a, x));
      case Op::Sinh: return sinh(eval_node<T>(*n.a, x));
      case Op::Cosh: return cosh(eval_node<T>(*n.a, x));
      case Op::Atan: return atan(eval_node<T>(*n.a, x));
    }
    fail(ErrorCode::InvalidArgument, "corrupt expression node");
  }

  NodePtr node_;
  std::string source_;
};

}  // namespace finsler
