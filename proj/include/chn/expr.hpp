#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "chn/grid.hpp"

namespace chn {

struct ExprError : Error {
  using Error::Error;
};

/// Minimal arithmetic expression over up to three named variables with
/// sin/cos/exp/tanh/sqrt/abs/min/max, +, -, *, /, ^ and the constant pi.
/// Parsed once into an immutable AST; evaluation is allocation-free.
class Expr {
  struct Node;
  using Ptr = std::unique_ptr<Node>;
  struct Node {
    enum Kind { num, var, add, sub, mul, divi, pow_, neg, fn1, fn2 };
    Kind kind = num;
    double value = 0.0;
    int slot = 0;  // var: which of the three bound names
    int fn = 0;
    Ptr a, b;

    double eval(const double* v) const {
      switch (kind) {
        case num: return value;
        case var: return v[slot];
        case add: return a->eval(v) + b->eval(v);
        case sub: return a->eval(v) - b->eval(v);
        case mul: return a->eval(v) * b->eval(v);
        case divi: return a->eval(v) / b->eval(v);
        case pow_: return std::pow(a->eval(v), b->eval(v));
        case neg: return -a->eval(v);
        case fn1: {
          const double x = a->eval(v);
          switch (fn) {
            case 0: return std::sin(x);
            case 1: return std::cos(x);
            case 2: return std::exp(x);
            case 3: return std::tanh(x);
            case 4: return std::sqrt(x);
            default: return std::abs(x);
          }
        }
        case fn2: {
          const double x = a->eval(v), y = b->eval(v);
          return fn == 0 ? std::min(x, y) : std::max(x, y);
        }
      }
      return 0.0;
    }

    bool uses_var(int s) const {
      if (kind == var) return slot == s;
      if (a && a->uses_var(s)) return true;
      if (b && b->uses_var(s)) return true;
      return false;
    }

    bool has_var() const {
      if (kind == var) return true;
      if (a && a->has_var()) return true;
      if (b && b->has_var()) return true;
      return false;
    }
  };

 public:
  Expr() : Expr(0.0) {}

  static Expr constant(double c) { return Expr(c); }

  /// vars binds identifier names to evaluation slots; empty names are unbound.
  static Expr parse(const std::string& src, std::array<std::string, 3> vars = {"x", "y", "t"}) {
    Parser p{src, vars, 0};
    Expr e;
    e.src_ = src;
    e.root_ = std::shared_ptr<Node>(p.parse_expr().release());
    p.skip_ws();
    if (p.pos != src.size())
      throw ExprError("expression: trailing input at position " + std::to_string(p.pos) + " in '" +
                      src + "'");
    return e;
  }

  double operator()(double a, double b = 0.0, double c = 0.0) const {
    const double v[3] = {a, b, c};
    return root_->eval(v);
  }

  const std::string& source() const { return src_; }
  bool is_constant() const { return !root_->has_var(); }
  bool uses_slot(int s) const { return root_->uses_var(s); }

 private:
  explicit Expr(double c) {
    auto n = std::make_unique<Node>();
    n->kind = Node::num;
    n->value = c;
    root_ = std::shared_ptr<Node>(n.release());
    src_ = "<const>";
  }

  struct Parser {
    const std::string& s;
    std::array<std::string, 3> vars;
    size_t pos;

    void skip_ws() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }

    bool eat(char c) {
      skip_ws();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }

    [[noreturn]] void fail(const std::string& msg) const {
      throw ExprError("expression: " + msg + " at position " + std::to_string(pos) + " in '" + s +
                      "'");
    }

    Ptr parse_expr() {
      Ptr lhs = parse_term();
      for (;;) {
        if (eat('+'))
          lhs = binary(Node::add, std::move(lhs), parse_term());
        else if (eat('-'))
          lhs = binary(Node::sub, std::move(lhs), parse_term());
        else
          return lhs;
      }
    }

    Ptr parse_term() {
      Ptr lhs = parse_unary();
      for (;;) {
        if (eat('*'))
          lhs = binary(Node::mul, std::move(lhs), parse_unary());
        else if (eat('/'))
          lhs = binary(Node::divi, std::move(lhs), parse_unary());
        else
          return lhs;
      }
    }

    Ptr parse_unary() {
      if (eat('-')) {
        auto n = std::make_unique<Node>();
        n->kind = Node::neg;
        n->a = parse_unary();
        return n;
      }
      if (eat('+')) return parse_unary();
      return parse_power();
    }

    Ptr parse_power() {
      Ptr base = parse_primary();
      if (eat('^')) return binary(Node::pow_, std::move(base), parse_unary());  // right-assoc
      return base;
    }

    Ptr parse_primary() {
      skip_ws();
      if (pos >= s.size()) fail("unexpected end of input");
      const char c = s[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        char* end = nullptr;
        const double v = std::strtod(s.c_str() + pos, &end);
        if (end == s.c_str() + pos) fail("bad number");
        pos = static_cast<size_t>(end - s.c_str());
        auto n = std::make_unique<Node>();
        n->kind = Node::num;
        n->value = v;
        return n;
      }
      if (c == '(') {
        ++pos;
        Ptr inner = parse_expr();
        if (!eat(')')) fail("expected ')'");
        return inner;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        size_t start = pos;
        while (pos < s.size() &&
               (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
          ++pos;
        const std::string name = s.substr(start, pos - start);
        skip_ws();
        if (pos < s.size() && s[pos] == '(') return parse_call(name);
        if (name == "pi") {
          auto n = std::make_unique<Node>();
          n->kind = Node::num;
          n->value = 3.14159265358979323846;
          return n;
        }
        for (int k = 0; k < 3; ++k) {
          if (!vars[k].empty() && name == vars[k]) {
            auto n = std::make_unique<Node>();
            n->kind = Node::var;
            n->slot = k;
            return n;
          }
        }
        fail("unknown identifier '" + name + "'");
      }
      fail(std::string("unexpected character '") + c + "'");
    }

    Ptr parse_call(const std::string& name) {
      static const char* unary_fns[] = {"sin", "cos", "exp", "tanh", "sqrt", "abs"};
      static const char* binary_fns[] = {"min", "max"};
      ++pos;  // '('
      int id = -1;
      for (int k = 0; k < 6; ++k)
        if (name == unary_fns[k]) id = k;
      if (id >= 0) {
        auto n = std::make_unique<Node>();
        n->kind = Node::fn1;
        n->fn = id;
        n->a = parse_expr();
        if (!eat(')')) fail("expected ')' after argument of " + name);
        return n;
      }
      for (int k = 0; k < 2; ++k)
        if (name == binary_fns[k]) id = k;
      if (id >= 0) {
        auto n = std::make_unique<Node>();
        n->kind = Node::fn2;
        n->fn = id;
        n->a = parse_expr();
        if (!eat(',')) fail("expected ',' in arguments of " + name);
        n->b = parse_expr();
        if (!eat(')')) fail("expected ')' after arguments of " + name);
        return n;
      }
      fail("unknown function '" + name + "'");
    }

    static Ptr binary(Node::Kind k, Ptr a, Ptr b) {
      auto n = std::make_unique<Node>();
      n->kind = k;
      n->a = std::move(a);
      n->b = std::move(b);
      return n;
    }
  };

  std::shared_ptr<Node> root_;
  std::string src_;
};

}  // namespace chn
