#pragma once

// Scalar expressions in (x, y) for initial data.
//
// Grammar (whitespace ignored):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '·' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?
//   primary := number | 'x' | 'y' | 'pi' | 'π' | fn '(' expr ')' | '(' expr ')'
//   fn      := 'sin' | 'cos' | 'exp'
//
// Expressions are compiled once to a postfix program so that repeated
// evaluation during quadrature sweeps does not walk a tree.

#include <cctype>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "dampedlab/errors.hpp"

#if defined(__SIZEOF_FLOAT128__) && !defined(__clang__)
#include <quadmath.h>
#define DAMPEDLAB_HAVE_FLOAT128 1
#endif

namespace dampedlab {

namespace detail {
// Elementary functions by value type, so the evaluator can run in a wider
// type than double.
template <class T>
T wsin(T v) { return std::sin(v); }
template <class T>
T wcos(T v) { return std::cos(v); }
template <class T>
T wexp(T v) { return std::exp(v); }
template <class T>
T wpow(T b, T e) { return std::pow(b, e); }
template <class T>
T pi_v() { return std::numbers::pi_v<T>; }
#ifdef DAMPEDLAB_HAVE_FLOAT128
using quad = __float128;
template <>
inline quad wsin(quad v) { return sinq(v); }
template <>
inline quad wcos(quad v) { return cosq(v); }
template <>
inline quad wexp(quad v) { return expq(v); }
template <>
inline quad wpow(quad b, quad e) { return powq(b, e); }
template <>
inline quad pi_v<quad>() {
  static const quad p = 4 * atanq(1);
  return p;
}
#else
using quad = long double;
#endif
}  // namespace detail

class Expression {
 public:
  Expression() : Expression("0") {}
  explicit Expression(std::string_view source) : source_(source) {
    Parser p{source_, 0, program_};
    p.parse_expr();
    p.skip_ws();
    if (p.pos != source_.size()) {
      throw ParseError("unexpected '" + std::string(1, source_[p.pos]) + "' at offset " +
                       std::to_string(p.pos) + " in \"" + source_ + "\"");
    }
    compute_depth();
  }

  double operator()(double x, double y) const { return eval<double>(x, y); }

  // Evaluation in a wider type, used where differences of nearby values of
  // the field matter (samples next to a minimum).
  template <class T>
  T eval(T x, T y) const {
    T stack[kMaxDepth] = {};
    std::size_t sp = 0;
    for (const Op& op : program_) {
      switch (op.code) {
        case Code::Const: stack[sp++] = static_cast<T>(op.value); break;
        case Code::Pi: stack[sp++] = detail::pi_v<T>(); break;
        case Code::X: stack[sp++] = x; break;
        case Code::Y: stack[sp++] = y; break;
        case Code::Neg: stack[sp - 1] = -stack[sp - 1]; break;
        case Code::Sin: stack[sp - 1] = detail::wsin(stack[sp - 1]); break;
        case Code::Cos: stack[sp - 1] = detail::wcos(stack[sp - 1]); break;
        case Code::Exp: stack[sp - 1] = detail::wexp(stack[sp - 1]); break;
        case Code::Add: --sp; stack[sp - 1] += stack[sp]; break;
        case Code::Sub: --sp; stack[sp - 1] -= stack[sp]; break;
        case Code::Mul: --sp; stack[sp - 1] *= stack[sp]; break;
        case Code::Div: --sp; stack[sp - 1] /= stack[sp]; break;
        case Code::Pow: {
          --sp;
          const T e = stack[sp];
          T& b = stack[sp - 1];
          b = (e == 2) ? b * b : detail::wpow(b, e);
          break;
        }
      }
    }
    return stack[0];
  }

  const std::string& source() const { return source_; }

  // True when the program is a single literal zero (e.g. rho0 = "0").
  bool is_zero_literal() const {
    return program_.size() == 1 && program_[0].code == Code::Const && program_[0].value == 0.0;
  }

 private:
  enum class Code { Const, Pi, X, Y, Neg, Sin, Cos, Exp, Add, Sub, Mul, Div, Pow };
  struct Op {
    Code code;
    long double value = 0.0;
  };
  static constexpr std::size_t kMaxDepth = 64;

  struct Parser {
    const std::string& s;
    std::size_t pos;
    std::vector<Op>& out;

    void skip_ws() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool accept(std::string_view tok) {
      skip_ws();
      if (s.compare(pos, tok.size(), tok) == 0) {
        pos += tok.size();
        return true;
      }
      return false;
    }
    [[noreturn]] void fail(const std::string& msg) const {
      throw ParseError(msg + " at offset " + std::to_string(pos) + " in \"" + s + "\"");
    }

    void parse_expr() {
      parse_term();
      for (;;) {
        if (accept("+")) {
          parse_term();
          out.push_back({Code::Add});
        } else if (accept("-") || accept("−")) {
          parse_term();
          out.push_back({Code::Sub});
        } else {
          return;
        }
      }
    }
    void parse_term() {
      parse_unary();
      for (;;) {
        if (accept("*") || accept("·")) {
          parse_unary();
          out.push_back({Code::Mul});
        } else if (accept("/")) {
          parse_unary();
          out.push_back({Code::Div});
        } else {
          return;
        }
      }
    }
    void parse_unary() {
      if (accept("-") || accept("−")) {
        parse_unary();
        out.push_back({Code::Neg});
      } else if (accept("+")) {
        parse_unary();
      } else {
        parse_power();
      }
    }
    void parse_power() {
      parse_primary();
      if (accept("^")) {
        parse_unary();
        out.push_back({Code::Pow});
      }
    }
    void parse_call(Code code) {
      if (!accept("(")) fail("expected '(' after function name");
      parse_expr();
      if (!accept(")")) fail("expected ')'");
      out.push_back({code});
    }
    void parse_primary() {
      skip_ws();
      if (pos >= s.size()) fail("unexpected end of expression");
      const char c = s[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stold(s.substr(pos), &used);
        } catch (const std::exception&) {
          fail("malformed number");
        }
        pos += used;
        out.push_back({Code::Const, v});
        return;
      }
      if (accept("(")) {
        parse_expr();
        if (!accept(")")) fail("expected ')'");
        return;
      }
      if (accept("π")) {
        out.push_back({Code::Pi});
        return;
      }
      std::size_t end = pos;
      while (end < s.size() && std::isalpha(static_cast<unsigned char>(s[end]))) ++end;
      const std::string word = s.substr(pos, end - pos);
      if (word.empty()) fail("unexpected character");
      pos = end;
      if (word == "x") {
        out.push_back({Code::X});
      } else if (word == "y") {
        out.push_back({Code::Y});
      } else if (word == "pi") {
        out.push_back({Code::Pi});
      } else if (word == "sin") {
        parse_call(Code::Sin);
      } else if (word == "cos") {
        parse_call(Code::Cos);
      } else if (word == "exp") {
        parse_call(Code::Exp);
      } else {
        pos -= word.size();
        fail("unknown identifier '" + word + "'");
      }
    }
  };

  void compute_depth() {
    std::size_t depth = 0;
    for (const Op& op : program_) {
      switch (op.code) {
        case Code::Const:
        case Code::Pi:
        case Code::X:
        case Code::Y: ++depth; break;
        case Code::Add:
        case Code::Sub:
        case Code::Mul:
        case Code::Div:
        case Code::Pow: --depth; break;
        default: break;
      }
      if (depth > kMaxDepth) throw ParseError("expression nests too deeply: \"" + source_ + "\"");
    }
  }

  std::string source_;
  std::vector<Op> program_;
};

}  // namespace dampedlab
