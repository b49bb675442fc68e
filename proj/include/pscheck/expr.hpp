#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pscheck/common.hpp"

namespace pscheck {

enum class Op : std::uint8_t {
  Const, Var,
  Add, Sub, Mul, Mod,
  Eq, Ne, Lt, Le, Gt, Ge,
  And, Or, Not,
  Even, Odd,
  Cond,
};

// Natural-number expression stored as a flat tree; the root is the last node.
// Var operands index a caller-defined variable table (registers for program
// code, memory cells for simulation relations). Sub truncates at zero.
struct Expr {
  struct Node {
    Op op = Op::Const;
    Value value = 0;  // Const literal or Var index
    std::int32_t a = -1, b = -1, c = -1;
    bool operator==(const Node&) const = default;
  };
  std::vector<Node> nodes;

  static Expr constant(Value v);
  static Expr var(std::uint32_t index);

  bool empty() const { return nodes.empty(); }
  bool operator==(const Expr&) const = default;

  // Calls f(index) for every Var node.
  template <class F>
  void for_each_var(F&& f) const {
    for (const auto& n : nodes)
      if (n.op == Op::Var) f(n.value);
  }
  void remap_vars(const std::vector<std::uint32_t>& map);
};

Value eval(const Expr& e, std::span<const Value> vars);
inline Value eval(const Expr& e, const LocalStore& vars) { return eval(e, std::span<const Value>(vars.data(), vars.size())); }

using NameResolver = std::function<std::optional<std::uint32_t>(std::string_view)>;
using NamePrinter = std::function<std::string(std::uint32_t)>;

// Lexical token shared by the expression and program parsers.
struct Token {
  enum Kind { Ident, Number, Punct, End } kind = End;
  std::string text;
  int line = 0;
  int column = 0;
};

std::vector<Token> tokenize_line(std::string_view text, int line);

// Cursor over a token vector; parse functions advance it.
struct TokenCursor {
  const std::vector<Token>* toks;
  std::size_t pos = 0;
  const Token& peek(std::size_t ahead = 0) const;
  const Token& next();
  bool at_end() const { return peek().kind == Token::End; }
  bool accept(std::string_view punct_or_word);
  void expect(std::string_view punct_or_word);
  [[noreturn]] void fail(const std::string& msg) const;
};

// Full expression; stops at the first token that cannot continue it.
Expr parse_expr(TokenCursor& cur, const NameResolver& resolve);
// Single operand: literal, name, function call or parenthesized expression.
Expr parse_operand(TokenCursor& cur, const NameResolver& resolve);
Expr parse_expr_text(std::string_view text, const NameResolver& resolve);

// Prints so that parse_expr(print_expr(e)) == e. With operand=true the result
// is also safe as a single operand (compound expressions get parentheses).
std::string print_expr(const Expr& e, const NamePrinter& name, bool operand = false);

}  // namespace pscheck
