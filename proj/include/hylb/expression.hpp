#pragma once

#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "hylb/geometry.hpp"

namespace hylb {

/// Scalar expression over named variables. Grammar:
///   expr  := term (('+'|'-') term)*
///   term  := unary (('*'|'/') unary)*
///   unary := ('+'|'-') unary | power
///   power := atom ('^' unary)?
///   atom  := number | name | name '(' expr ')' | '(' expr ')'
/// Functions: exp, log, sqrt, arctan (alias atan), sigmoid, abs.
class Expression {
 public:
  Expression(const std::string& text, const std::vector<std::string>& variables,
             const std::map<std::string, double>& constants = {})
      : text_(text), vars_(variables), consts_(constants) {
    consts_.try_emplace("pi", std::numbers::pi);
    consts_.try_emplace("e", std::numbers::e);
    pos_ = 0;
    root_ = parse_expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
  }

  double operator()(const Vector& x) const { return eval(*root_, x).v; }

  /// Value and gradient by forward-mode differentiation.
  std::pair<double, Vector> value_and_gradient(const Vector& x) const {
    const Dual d = eval(*root_, x);
    return {d.v, d.g};
  }

  Vector gradient(const Vector& x) const { return eval(*root_, x).g; }

  const std::string& text() const { return text_; }

 private:
  enum class Op { Num, Var, Add, Sub, Mul, Div, Pow, Neg, Exp, Log, Sqrt, Atan, Sigmoid, Abs };

  struct Node {
    Op op;
    double value = 0.0;
    int var = -1;
    std::unique_ptr<Node> a, b;
  };

  struct Dual {
    double v;
    Vector g;
  };

  using NodePtr = std::unique_ptr<Node>;

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::ConfigError, "expression '" + text_ + "': " + msg);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  static NodePtr make(Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
    auto n = std::make_unique<Node>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
  }

  NodePtr parse_expr() {
    NodePtr lhs = parse_term();
    for (;;) {
      if (eat('+')) {
        lhs = make(Op::Add, std::move(lhs), parse_term());
      } else if (eat('-')) {
        lhs = make(Op::Sub, std::move(lhs), parse_term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_unary();
    for (;;) {
      if (eat('*')) {
        lhs = make(Op::Mul, std::move(lhs), parse_unary());
      } else if (eat('/')) {
        lhs = make(Op::Div, std::move(lhs), parse_unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_unary() {
    if (eat('-')) return make(Op::Neg, parse_unary());
    if (eat('+')) return parse_unary();
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_atom();
    if (eat('^')) return make(Op::Pow, std::move(base), parse_unary());
    return base;
  }

  NodePtr parse_atom() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr inner = parse_expr();
      if (!eat(')')) fail("missing ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      const double v = std::stod(text_.substr(pos_), &used);
      pos_ += used;
      auto n = make(Op::Num);
      n->value = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        ++pos_;
      }
      const std::string name = text_.substr(start, pos_ - start);
      if (eat('(')) {
        static const std::map<std::string, Op> fns{{"exp", Op::Exp},   {"log", Op::Log},         {"sqrt", Op::Sqrt},
                                                   {"arctan", Op::Atan}, {"atan", Op::Atan},     {"sigmoid", Op::Sigmoid},
                                                   {"abs", Op::Abs}};
        const auto it = fns.find(name);
        if (it == fns.end()) fail("unknown function '" + name + "'");
        NodePtr arg = parse_expr();
        if (!eat(')')) fail("missing ')' after function argument");
        return make(it->second, std::move(arg));
      }
      for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i] == name) {
          auto n = make(Op::Var);
          n->var = static_cast<int>(i);
          return n;
        }
      }
      if (const auto it = consts_.find(name); it != consts_.end()) {
        auto n = make(Op::Num);
        n->value = it->second;
        return n;
      }
      fail("unknown identifier '" + name + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  Dual eval(const Node& n, const Vector& x) const {
    const auto dim = static_cast<Eigen::Index>(vars_.size());
    switch (n.op) {
      case Op::Num: return {n.value, Vector::Zero(dim)};
      case Op::Var: {
        Dual d{x[n.var], Vector::Zero(dim)};
        d.g[n.var] = 1.0;
        return d;
      }
      case Op::Neg: {
        Dual a = eval(*n.a, x);
        return {-a.v, -a.g};
      }
      case Op::Add: {
        Dual a = eval(*n.a, x), b = eval(*n.b, x);
        return {a.v + b.v, a.g + b.g};
      }
      case Op::Sub: {
        Dual a = eval(*n.a, x), b = eval(*n.b, x);
        return {a.v - b.v, a.g - b.g};
      }
      case Op::Mul: {
        Dual a = eval(*n.a, x), b = eval(*n.b, x);
        return {a.v * b.v, b.v * a.g + a.v * b.g};
      }
      case Op::Div: {
        Dual a = eval(*n.a, x), b = eval(*n.b, x);
        return {a.v / b.v, (a.g * b.v - a.v * b.g) / (b.v * b.v)};
      }
      case Op::Pow: {
        Dual a = eval(*n.a, x), b = eval(*n.b, x);
        const double v = std::pow(a.v, b.v);
        Vector g = Vector::Zero(dim);
        if (b.g.isZero(0.0)) {
          // Constant exponent keeps negative bases usable.
          g = b.v == 0.0 ? g : (b.v * std::pow(a.v, b.v - 1.0)) * a.g;
        } else {
          g = v * (b.g * std::log(a.v) + (b.v / a.v) * a.g);
        }
        return {v, g};
      }
      case Op::Exp: {
        Dual a = eval(*n.a, x);
        const double v = std::exp(a.v);
        return {v, v * a.g};
      }
      case Op::Log: {
        Dual a = eval(*n.a, x);
        return {std::log(a.v), a.g / a.v};
      }
      case Op::Sqrt: {
        Dual a = eval(*n.a, x);
        const double v = std::sqrt(a.v);
        return {v, a.g / (2.0 * v)};
      }
      case Op::Atan: {
        Dual a = eval(*n.a, x);
        return {std::atan(a.v), a.g / (1.0 + a.v * a.v)};
      }
      case Op::Sigmoid: {
        Dual a = eval(*n.a, x);
        const double s = 1.0 / (1.0 + std::exp(-a.v));
        return {s, s * (1.0 - s) * a.g};
      }
      case Op::Abs: {
        Dual a = eval(*n.a, x);
        return {std::abs(a.v), (a.v < 0.0 ? -1.0 : 1.0) * a.g};
      }
    }
    return {0.0, Vector::Zero(dim)};
  }

  std::string text_;
  std::vector<std::string> vars_;
  std::map<std::string, double> consts_;
  std::size_t pos_ = 0;
  std::shared_ptr<const Node> root_;
};

}  // namespace hylb
