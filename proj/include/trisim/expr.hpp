#ifndef TRISIM_EXPR_HPP
#define TRISIM_EXPR_HPP

// Arithmetic rate-law expressions: parsing, rendering, evaluation and a
// compiled stack-machine form used by the simulation engines' hot loops.
//
// Grammar (precedence high to low):
//   primary := number | identifier | '(' sum ')'
//   power   := primary ('^' unary)?          right associative
//   unary   := '-' unary | power
//   product := unary (('*' | '/') unary)*    left associative
//   sum     := product (('+' | '-') product)*

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "trisim/error.hpp"

namespace trisim {

enum class BinaryOp : std::uint8_t { add, sub, mul, div, pow };

inline char op_symbol(BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return '+';
    case BinaryOp::sub: return '-';
    case BinaryOp::mul: return '*';
    case BinaryOp::div: return '/';
    case BinaryOp::pow: return '^';
  }
  return '?';
}

struct NumberNode;
struct SymbolNode;
struct NegateNode;
struct BinaryNode;
struct ExprNode;

/// Immutable expression tree. Copies share structure.
class Expr {
 public:
  Expr() = default;
  explicit Expr(std::shared_ptr<const ExprNode> node) : node_(std::move(node)) {}

  static Expr number(double value);
  static Expr symbol(std::string name);
  static Expr negate(Expr operand);
  static Expr binary(BinaryOp op, Expr lhs, Expr rhs);

  bool empty() const noexcept { return !node_; }
  const std::variant<NumberNode, SymbolNode, NegateNode, BinaryNode>& node() const;

  friend bool operator==(const Expr& a, const Expr& b);

 private:
  std::shared_ptr<const ExprNode> node_;
};

struct NumberNode {
  double value;
};
struct SymbolNode {
  std::string name;
};
struct NegateNode {
  Expr operand;
};
struct BinaryNode {
  BinaryOp op;
  Expr lhs;
  Expr rhs;
};

struct ExprNode {
  std::variant<NumberNode, SymbolNode, NegateNode, BinaryNode> v;
};

inline const std::variant<NumberNode, SymbolNode, NegateNode, BinaryNode>& Expr::node() const { return node_->v; }

inline Expr Expr::number(double value) {
  return Expr(std::make_shared<const ExprNode>(ExprNode{NumberNode{value}}));
}
inline Expr Expr::symbol(std::string name) {
  return Expr(std::make_shared<const ExprNode>(ExprNode{SymbolNode{std::move(name)}}));
}
inline Expr Expr::negate(Expr operand) {
  return Expr(std::make_shared<const ExprNode>(ExprNode{NegateNode{std::move(operand)}}));
}
inline Expr Expr::binary(BinaryOp op, Expr lhs, Expr rhs) {
  return Expr(std::make_shared<const ExprNode>(ExprNode{BinaryNode{op, std::move(lhs), std::move(rhs)}}));
}

/// Structural equality (numbers compare by value).
inline bool operator==(const Expr& a, const Expr& b) {
  if (a.node_ == b.node_) return true;
  if (!a.node_ || !b.node_) return false;
  const auto& na = a.node_->v;
  const auto& nb = b.node_->v;
  if (na.index() != nb.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(nb);
        if constexpr (std::is_same_v<T, NumberNode>) {
          return x.value == y.value;
        } else if constexpr (std::is_same_v<T, SymbolNode>) {
          return x.name == y.name;
        } else if constexpr (std::is_same_v<T, NegateNode>) {
          return x.operand == y.operand;
        } else {
          return x.op == y.op && x.lhs == y.lhs && x.rhs == y.rhs;
        }
      },
      na);
}

using Bindings = std::map<std::string, double, std::less<>>;

namespace detail {

class ExprParser {
 public:
  explicit ExprParser(std::string_view text) : text_(text) {}

  Expr parse() {
    skip_ws();
    if (pos_ == text_.size()) throw ParseError("empty expression", pos_);
    Expr e = parse_sum();
    skip_ws();
    if (pos_ != text_.size()) {
      if (text_[pos_] == ')') throw ParseError("unbalanced parentheses: unexpected ')'", pos_);
      throw ParseError(std::string("unexpected character '") + text_[pos_] + "'", pos_);
    }
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr parse_sum() {
    Expr lhs = parse_product();
    for (;;) {
      if (accept('+')) {
        lhs = Expr::binary(BinaryOp::add, lhs, parse_product());
      } else if (accept('-')) {
        lhs = Expr::binary(BinaryOp::sub, lhs, parse_product());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_product() {
    Expr lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = Expr::binary(BinaryOp::mul, lhs, parse_unary());
      } else if (accept('/')) {
        lhs = Expr::binary(BinaryOp::div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_unary() {
    if (accept('-')) return Expr::negate(parse_unary());
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_primary();
    if (accept('^')) return Expr::binary(BinaryOp::pow, base, parse_unary());
    return base;
  }

  Expr parse_primary() {
    skip_ws();
    if (pos_ == text_.size()) throw ParseError("expected operand", pos_);
    const char c = text_[pos_];
    if (c == '(') {
      const std::size_t open = pos_++;
      skip_ws();
      if (pos_ < text_.size() && text_[pos_] == ')') throw ParseError("expected operand", pos_);
      Expr inner = parse_sum();
      if (!accept(')')) throw ParseError("unbalanced parentheses: '(' is never closed", open);
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      return Expr::symbol(std::string(text_.substr(start, pos_ - start)));
    }
    if (c == ')') throw ParseError("expected operand", pos_);
    throw ParseError(std::string("unexpected character '") + c + "'", pos_);
  }

  Expr parse_number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
        ++n;
      }
      return n;
    };
    std::size_t mantissa = digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      mantissa += digits();
    }
    if (mantissa == 0) throw ParseError("malformed number", start);
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      if (digits() == 0) throw ParseError("malformed exponent", start);
    }
    double value = 0.0;
    const auto* first = text_.data() + start;
    const auto* last = text_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) throw ParseError("malformed number", start);
    return Expr::number(value);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

// Precedence levels used when rendering: sum 1, product 2, unary 3, power 4, atom 5.
inline int precedence(const Expr& e) {
  return std::visit(
      [](const auto& n) -> int {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, NegateNode>) {
          return 3;
        } else if constexpr (std::is_same_v<T, BinaryNode>) {
          switch (n.op) {
            case BinaryOp::add:
            case BinaryOp::sub: return 1;
            case BinaryOp::mul:
            case BinaryOp::div: return 2;
            case BinaryOp::pow: return 4;
          }
          return 0;
        } else {
          return 5;
        }
      },
      e.node());
}

inline std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

inline void render_into(const Expr& e, std::string& out);

inline void render_child(const Expr& e, bool parens, std::string& out) {
  if (parens) out += '(';
  render_into(e, out);
  if (parens) out += ')';
}

inline void render_into(const Expr& e, std::string& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, NumberNode>) {
          out += format_number(n.value);
        } else if constexpr (std::is_same_v<T, SymbolNode>) {
          out += n.name;
        } else if constexpr (std::is_same_v<T, NegateNode>) {
          out += '-';
          render_child(n.operand, precedence(n.operand) < 3, out);
        } else {
          if (n.op == BinaryOp::pow) {
            render_child(n.lhs, precedence(n.lhs) <= 4, out);
            out += '^';
            render_child(n.rhs, precedence(n.rhs) < 3, out);
          } else {
            const int p = precedence(e);
            render_child(n.lhs, precedence(n.lhs) < p, out);
            out += n.op == BinaryOp::mul || n.op == BinaryOp::div ? std::string(1, op_symbol(n.op))
                                                                  : std::string(" ") + op_symbol(n.op) + " ";
            render_child(n.rhs, precedence(n.rhs) <= p, out);
          }
        }
      },
      e.node());
}

inline void collect_symbols(const Expr& e, std::set<std::string>& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, SymbolNode>) {
          out.insert(n.name);
        } else if constexpr (std::is_same_v<T, NegateNode>) {
          collect_symbols(n.operand, out);
        } else if constexpr (std::is_same_v<T, BinaryNode>) {
          collect_symbols(n.lhs, out);
          collect_symbols(n.rhs, out);
        }
      },
      e.node());
}

inline double apply_op(BinaryOp op, double x, double y) {
  switch (op) {
    case BinaryOp::add: return x + y;
    case BinaryOp::sub: return x - y;
    case BinaryOp::mul: return x * y;
    case BinaryOp::div:
      if (y == 0.0) throw EvalError("division by zero");
      return x / y;
    case BinaryOp::pow: return std::pow(x, y);
  }
  return 0.0;
}

template <typename Lookup>
double eval_with(const Expr& e, const Lookup& lookup) {
  return std::visit(
      [&](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, NumberNode>) {
          return n.value;
        } else if constexpr (std::is_same_v<T, SymbolNode>) {
          return lookup(n.name);
        } else if constexpr (std::is_same_v<T, NegateNode>) {
          return -eval_with(n.operand, lookup);
        } else {
          return apply_op(n.op, eval_with(n.lhs, lookup), eval_with(n.rhs, lookup));
        }
      },
      e.node());
}

}  // namespace detail

inline Expr parse_expr(std::string_view text) { return detail::ExprParser(text).parse(); }

/// Minimal-parenthesis text form; parse_expr(render(e)) == e for every tree parse_expr can produce.
inline std::string render(const Expr& e) {
  std::string out;
  detail::render_into(e, out);
  return out;
}

inline std::set<std::string> free_symbols(const Expr& e) {
  std::set<std::string> out;
  detail::collect_symbols(e, out);
  return out;
}

inline double eval_expr(const Expr& e, const Bindings& b) {
  const double v = detail::eval_with(e, [&](const std::string& name) {
    auto it = b.find(name);
    if (it == b.end()) throw EvalError("unbound symbol '" + name + "'");
    return it->second;
  });
  if (!std::isfinite(v)) throw EvalError("non-finite result");
  return v;
}

/// Expression lowered to a postfix program. Symbols listed in `slots` are read
/// from the state vector at evaluation time; all others must be bound in
/// `constants` and are folded at compile time.
class CompiledExpr {
 public:
  static constexpr std::size_t kMaxStack = 32;

  CompiledExpr() = default;

  CompiledExpr(const Expr& e, const std::map<std::string, std::size_t, std::less<>>& slots,
               const Bindings& constants) {
    std::size_t depth = 0;
    emit(e, slots, constants, depth);
    if (max_depth_ > kMaxStack) throw EvalError("expression nesting too deep to compile");
    if (auto r = as_rational(e, slots, constants)) {
      rational_ = *r;
      fast_ = true;
    }
  }

  /// True when the program reduced to a single constant.
  bool is_constant() const noexcept { return code_.size() == 1 && code_[0].op == Op::constant; }

  [[gnu::always_inline]] inline double operator()(std::span<const double> state) const {
    if (fast_) [[likely]]
      return rational_(state);
    return run(state);
  }

 private:
  [[gnu::noinline]] double run(std::span<const double> state) const {
    std::array<double, kMaxStack> stack;
    std::size_t top = 0;
    for (const Instr& in : code_) {
      switch (in.op) {
        case Op::constant: stack[top++] = in.value; break;
        case Op::load: stack[top++] = state[in.slot]; break;
        case Op::add: --top; stack[top - 1] += stack[top]; break;
        case Op::sub: --top; stack[top - 1] -= stack[top]; break;
        case Op::mul: --top; stack[top - 1] *= stack[top]; break;
        case Op::div:
          --top;
          if (stack[top] == 0.0) throw EvalError("division by zero");
          stack[top - 1] /= stack[top];
          break;
        case Op::pow: --top; stack[top - 1] = std::pow(stack[top - 1], stack[top]); break;
        case Op::square: stack[top - 1] *= stack[top - 1]; break;
        case Op::neg: stack[top - 1] = -stack[top - 1]; break;
      }
    }
    const double v = stack[0];
    if (!std::isfinite(v)) throw EvalError("non-finite result");
    return v;
  }

  // k * prod x_i^n_i / prod (c_j + d_j * x_j), evaluated without dispatch.
  struct Rational {
    static constexpr std::size_t kMax = 8;
    struct Linear {
      double c, d;
      std::uint32_t slot;
    };
    double k = 1.0;
    std::array<std::uint32_t, kMax> num{};  // repeated for integer powers
    std::array<Linear, kMax> den{};
    std::uint32_t n_num = 0, n_den = 0;

    bool push_num(std::size_t slot, int times) {
      if (n_num + static_cast<std::size_t>(times) > kMax) return false;
      for (int i = 0; i < times; ++i) num[n_num++] = static_cast<std::uint32_t>(slot);
      return true;
    }

    [[gnu::always_inline]] inline double operator()(std::span<const double> x) const {
      double v = k;
      for (std::uint32_t i = 0; i < n_num; ++i) v *= x[num[i]];
      if (n_den > 0) {
        double q = 1.0;
        for (std::uint32_t j = 0; j < n_den; ++j) q *= den[j].c + den[j].d * x[den[j].slot];
        if (q == 0.0) [[unlikely]]
          fail("division by zero");
        v /= q;
      }
      if (!std::isfinite(v)) [[unlikely]]
        fail("non-finite result");
      return v;
    }

    [[noreturn, gnu::cold, gnu::noinline]] static void fail(const char* what) { throw EvalError(what); }
  };

  using Slots = std::map<std::string, std::size_t, std::less<>>;

  static std::optional<std::pair<double, double>> linear_in(const Expr& e, const Slots& slots, const Bindings& constants,
                                                            std::size_t& slot) {
    if (!reads_slot(e, slots)) return std::pair{eval_expr(e, constants), 0.0};
    if (const auto* s = std::get_if<SymbolNode>(&e.node())) {
      slot = slots.find(s->name)->second;
      return std::pair{0.0, 1.0};
    }
    const auto* b = std::get_if<BinaryNode>(&e.node());
    if (!b) return std::nullopt;
    if (b->op == BinaryOp::add) {
      auto l = linear_in(b->lhs, slots, constants, slot);
      if (!l) return std::nullopt;
      auto r = linear_in(b->rhs, slots, constants, slot);
      if (!r) return std::nullopt;
      return std::pair{l->first + r->first, l->second + r->second};
    }
    if (b->op == BinaryOp::mul) {
      const bool lc = !reads_slot(b->lhs, slots), rc = !reads_slot(b->rhs, slots);
      if (lc == rc) return std::nullopt;
      const double k = eval_expr(lc ? b->lhs : b->rhs, constants);
      const auto* sym = std::get_if<SymbolNode>(&(lc ? b->rhs : b->lhs).node());
      if (!sym) return std::nullopt;
      slot = slots.find(sym->name)->second;
      return std::pair{0.0, k};
    }
    return std::nullopt;
  }

  static bool add_linear(Rational& r, const Expr& e, const Slots& slots, const Bindings& constants) {
    if (const auto* b = std::get_if<BinaryNode>(&e.node()); b && b->op == BinaryOp::mul)
      return add_linear(r, b->lhs, slots, constants) && add_linear(r, b->rhs, slots, constants);
    if (!reads_slot(e, slots)) {
      const double c = eval_expr(e, constants);
      if (c == 0.0) return false;
      r.k /= c;
      return true;
    }
    std::size_t slot = 0;
    const auto lin = linear_in(e, slots, constants, slot);
    if (!lin || r.n_den == Rational::kMax || lin->second == 0.0) return false;
    r.den[r.n_den++] = {lin->first, lin->second, static_cast<std::uint32_t>(slot)};
    return true;
  }

  static bool add_factor(Rational& r, const Expr& e, const Slots& slots, const Bindings& constants) {
    if (!reads_slot(e, slots)) {
      r.k *= eval_expr(e, constants);
      return true;
    }
    return std::visit(
        [&](const auto& n) -> bool {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, SymbolNode>) {
            return r.push_num(slots.find(n.name)->second, 1);
          } else if constexpr (std::is_same_v<T, NegateNode>) {
            r.k = -r.k;
            return add_factor(r, n.operand, slots, constants);
          } else if constexpr (std::is_same_v<T, BinaryNode>) {
            if (n.op == BinaryOp::mul)
              return add_factor(r, n.lhs, slots, constants) && add_factor(r, n.rhs, slots, constants);
            if (n.op == BinaryOp::div)
              return add_factor(r, n.lhs, slots, constants) && add_linear(r, n.rhs, slots, constants);
            if (n.op == BinaryOp::pow && !reads_slot(n.rhs, slots)) {
              const auto* sym = std::get_if<SymbolNode>(&n.lhs.node());
              const double p = eval_expr(n.rhs, constants);
              if (!sym || p != std::floor(p) || p < 1.0 || p > 4.0) return false;
              return r.push_num(slots.find(sym->name)->second, static_cast<int>(p));
            }
            return false;
          } else {
            return false;
          }
        },
        e.node());
  }

  static std::optional<Rational> as_rational(const Expr& e, const Slots& slots, const Bindings& constants) {
    try {
      Rational r;
      if (!add_factor(r, e, slots, constants)) return std::nullopt;
      return r;
    } catch (const EvalError&) {
      return std::nullopt;
    }
  }

  enum class Op : std::uint8_t { constant, load, add, sub, mul, div, pow, square, neg };
  struct Instr {
    Op op;
    std::size_t slot = 0;
    double value = 0.0;
  };

  static bool reads_slot(const Expr& e, const std::map<std::string, std::size_t, std::less<>>& slots) {
    for (const auto& s : free_symbols(e))
      if (slots.count(s)) return true;
    return false;
  }

  void push(Instr in, std::size_t& depth, int delta) {
    code_.push_back(in);
    depth = static_cast<std::size_t>(static_cast<long>(depth) + delta);
    if (depth > max_depth_) max_depth_ = depth;
  }

  void emit(const Expr& e, const std::map<std::string, std::size_t, std::less<>>& slots,
            const Bindings& constants, std::size_t& depth) {
    if (!reads_slot(e, slots)) {
      push({Op::constant, 0, eval_expr(e, constants)}, depth, +1);
      return;
    }
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, SymbolNode>) {
            push({Op::load, slots.find(n.name)->second, 0.0}, depth, +1);
          } else if constexpr (std::is_same_v<T, NegateNode>) {
            emit(n.operand, slots, constants, depth);
            push({Op::neg}, depth, 0);
          } else if constexpr (std::is_same_v<T, BinaryNode>) {
            emit(n.lhs, slots, constants, depth);
            if (n.op == BinaryOp::pow && !reads_slot(n.rhs, slots) && eval_expr(n.rhs, constants) == 2.0) {
              push({Op::square}, depth, 0);
              return;
            }
            emit(n.rhs, slots, constants, depth);
            Op op = Op::add;
            switch (n.op) {
              case BinaryOp::add: op = Op::add; break;
              case BinaryOp::sub: op = Op::sub; break;
              case BinaryOp::mul: op = Op::mul; break;
              case BinaryOp::div: op = Op::div; break;
              case BinaryOp::pow: op = Op::pow; break;
            }
            push({op}, depth, -1);
          }
        },
        e.node());
  }

  std::vector<Instr> code_;
  std::size_t max_depth_ = 0;
  Rational rational_;
  bool fast_ = false;
};

}  // namespace trisim

#endif  // TRISIM_EXPR_HPP
