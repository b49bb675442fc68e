#include "pscheck/expr.hpp"

#include <cctype>

namespace pscheck {

Expr Expr::constant(Value v) {
  Expr e;
  e.nodes.push_back({Op::Const, v});
  return e;
}

Expr Expr::var(std::uint32_t index) {
  Expr e;
  e.nodes.push_back({Op::Var, index});
  return e;
}

void Expr::remap_vars(const std::vector<std::uint32_t>& map) {
  for (auto& n : nodes)
    if (n.op == Op::Var) n.value = map.at(n.value);
}

namespace {

Value eval_at(const Expr& e, std::int32_t i, std::span<const Value> vars) {
  const auto& n = e.nodes[static_cast<std::size_t>(i)];
  switch (n.op) {
    case Op::Const: return n.value;
    case Op::Var: return n.value < vars.size() ? vars[n.value] : 0;
    case Op::Not: return eval_at(e, n.a, vars) == 0 ? 1 : 0;
    case Op::Even: return eval_at(e, n.a, vars) % 2 == 0 ? 1 : 0;
    case Op::Odd: return eval_at(e, n.a, vars) % 2 == 1 ? 1 : 0;
    case Op::Cond: return eval_at(e, n.a, vars) != 0 ? eval_at(e, n.b, vars) : eval_at(e, n.c, vars);
    case Op::And: return (eval_at(e, n.a, vars) != 0 && eval_at(e, n.b, vars) != 0) ? 1 : 0;
    case Op::Or: return (eval_at(e, n.a, vars) != 0 || eval_at(e, n.b, vars) != 0) ? 1 : 0;
    default: break;
  }
  const Value x = eval_at(e, n.a, vars);
  const Value y = eval_at(e, n.b, vars);
  switch (n.op) {
    case Op::Add: return x + y;
    case Op::Sub: return x > y ? x - y : 0;
    case Op::Mul: return x * y;
    case Op::Mod: return y == 0 ? 0 : x % y;
    case Op::Eq: return x == y;
    case Op::Ne: return x != y;
    case Op::Lt: return x < y;
    case Op::Le: return x <= y;
    case Op::Gt: return x > y;
    case Op::Ge: return x >= y;
    default: return 0;
  }
}

struct BinInfo {
  std::string_view text;
  Op op;
  int prec;
};

constexpr BinInfo kBinOps[] = {
    {"||", Op::Or, 1},  {"&&", Op::And, 2}, {"==", Op::Eq, 3}, {"=", Op::Eq, 3},
    {"!=", Op::Ne, 3},  {"<", Op::Lt, 4},   {"<=", Op::Le, 4}, {">", Op::Gt, 4},
    {">=", Op::Ge, 4},  {"+", Op::Add, 5},  {"-", Op::Sub, 5}, {"*", Op::Mul, 6},
    {"%", Op::Mod, 6},
};

const BinInfo* find_binop(const Token& t) {
  if (t.kind != Token::Punct) return nullptr;
  for (const auto& b : kBinOps)
    if (b.text == t.text) return &b;
  return nullptr;
}

std::int32_t append(Expr& e, Expr&& sub) {
  const auto off = static_cast<std::int32_t>(e.nodes.size());
  for (auto& n : sub.nodes) {
    if (n.a >= 0) n.a += off;
    if (n.b >= 0) n.b += off;
    if (n.c >= 0) n.c += off;
    e.nodes.push_back(n);
  }
  return static_cast<std::int32_t>(e.nodes.size()) - 1;
}

Expr make_node(Op op, Expr a, Expr b = {}, Expr c = {}) {
  Expr out;
  Expr::Node n{op};
  n.a = append(out, std::move(a));
  if (!b.empty()) n.b = append(out, std::move(b));
  if (!c.empty()) n.c = append(out, std::move(c));
  out.nodes.push_back(n);
  return out;
}

Expr parse_binary(TokenCursor& cur, const NameResolver& resolve, int min_prec);

Expr parse_ternary(TokenCursor& cur, const NameResolver& resolve) {
  Expr cond = parse_binary(cur, resolve, 1);
  if (!cur.accept("?")) return cond;
  Expr a = parse_ternary(cur, resolve);
  cur.expect(":");
  Expr b = parse_ternary(cur, resolve);
  return make_node(Op::Cond, std::move(cond), std::move(a), std::move(b));
}

Expr parse_binary(TokenCursor& cur, const NameResolver& resolve, int min_prec) {
  Expr lhs = parse_operand(cur, resolve);
  for (;;) {
    const BinInfo* b = find_binop(cur.peek());
    if (b == nullptr || b->prec < min_prec) return lhs;
    cur.next();
    Expr rhs = parse_binary(cur, resolve, b->prec + 1);
    lhs = make_node(b->op, std::move(lhs), std::move(rhs));
  }
}

std::string_view op_text(Op op) {
  switch (op) {
    case Op::Add: return "+";
    case Op::Sub: return "-";
    case Op::Mul: return "*";
    case Op::Mod: return "%";
    case Op::Eq: return "==";
    case Op::Ne: return "!=";
    case Op::Lt: return "<";
    case Op::Le: return "<=";
    case Op::Gt: return ">";
    case Op::Ge: return ">=";
    case Op::And: return "&&";
    case Op::Or: return "||";
    default: return "?";
  }
}

bool is_atomic(Op op) {
  return op == Op::Const || op == Op::Var || op == Op::Not || op == Op::Even || op == Op::Odd;
}

// Every non-atomic child is parenthesized, which keeps the tree shape on reparse.
std::string print_at(const Expr& e, std::int32_t i, const NamePrinter& name) {
  const auto& n = e.nodes[static_cast<std::size_t>(i)];
  auto sub = [&](std::int32_t j) {
    const auto& c = e.nodes[static_cast<std::size_t>(j)];
    std::string s = print_at(e, j, name);
    return is_atomic(c.op) ? s : "(" + s + ")";
  };
  switch (n.op) {
    case Op::Const: return std::to_string(n.value);
    case Op::Var: return name(n.value);
    case Op::Not: return "!" + sub(n.a);
    case Op::Even: return "even(" + print_at(e, n.a, name) + ")";
    case Op::Odd: return "odd(" + print_at(e, n.a, name) + ")";
    case Op::Cond: return sub(n.a) + " ? " + sub(n.b) + " : " + sub(n.c);
    default: return sub(n.a) + " " + std::string(op_text(n.op)) + " " + sub(n.b);
  }
}

}  // namespace

Value eval(const Expr& e, std::span<const Value> vars) {
  if (e.nodes.empty()) return 0;
  return eval_at(e, static_cast<std::int32_t>(e.nodes.size()) - 1, vars);
}

std::vector<Token> tokenize_line(std::string_view text, int line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char ch = text[i];
    // '#' starts a comment; a '#' glued to a name (x#) is taken by the name below.
    if (ch == '#') break;
    if (std::isspace(static_cast<unsigned char>(ch))) {
      ++i;
      continue;
    }
    Token t;
    t.line = line;
    t.column = static_cast<int>(i) + 1;
    if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
      std::size_t j = i;
      while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_' ||
                                 text[j] == '.'))
        ++j;
      if (j < text.size() && text[j] == '#') ++j;
      t.kind = Token::Ident;
      t.text = std::string(text.substr(i, j - i));
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(ch))) {
      std::size_t j = i;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      t.kind = Token::Number;
      t.text = std::string(text.substr(i, j - i));
      i = j;
    } else {
      static constexpr std::string_view kTwo[] = {"==", "!=", "<=", ">=", "&&", "||", ":="};
      t.kind = Token::Punct;
      t.text = std::string(1, ch);
      for (auto two : kTwo) {
        if (text.substr(i, 2) == two) {
          t.text = std::string(two);
          break;
        }
      }
      i += t.text.size();
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.line = line;
  end.column = static_cast<int>(text.size()) + 1;
  out.push_back(end);
  return out;
}

const Token& TokenCursor::peek(std::size_t ahead) const {
  const std::size_t i = std::min(pos + ahead, toks->size() - 1);
  return (*toks)[i];
}

const Token& TokenCursor::next() {
  const Token& t = peek();
  if (pos + 1 < toks->size()) ++pos;
  return t;
}

bool TokenCursor::accept(std::string_view s) {
  const Token& t = peek();
  if (t.kind != Token::End && t.text == s) {
    next();
    return true;
  }
  return false;
}

void TokenCursor::expect(std::string_view s) {
  if (!accept(s)) fail("expected '" + std::string(s) + "'");
}

void TokenCursor::fail(const std::string& msg) const {
  const Token& t = peek();
  std::string got = t.kind == Token::End ? "end of line" : "'" + t.text + "'";
  throw SyntaxError(t.line, t.column, msg + " (found " + got + ")");
}

Expr parse_operand(TokenCursor& cur, const NameResolver& resolve) {
  const Token& t = cur.peek();
  if (t.kind == Token::Number) {
    cur.next();
    try {
      return Expr::constant(static_cast<Value>(std::stoul(t.text)));
    } catch (const std::exception&) {
      throw SyntaxError(t.line, t.column, "literal out of range");
    }
  }
  if (t.kind == Token::Punct && t.text == "(") {
    cur.next();
    Expr e = parse_ternary(cur, resolve);
    cur.expect(")");
    return e;
  }
  if (t.kind == Token::Punct && t.text == "!") {
    cur.next();
    return make_node(Op::Not, parse_operand(cur, resolve));
  }
  if (t.kind == Token::Ident) {
    if ((t.text == "even" || t.text == "odd") && cur.peek(1).text == "(") {
      const Op op = t.text == "even" ? Op::Even : Op::Odd;
      cur.next();
      cur.next();
      Expr e = parse_ternary(cur, resolve);
      cur.expect(")");
      return make_node(op, std::move(e));
    }
    auto idx = resolve(t.text);
    if (!idx) throw SyntaxError(t.line, t.column, "unknown name '" + t.text + "'");
    cur.next();
    return Expr::var(*idx);
  }
  cur.fail("expected an expression");
}

Expr parse_expr(TokenCursor& cur, const NameResolver& resolve) { return parse_ternary(cur, resolve); }

Expr parse_expr_text(std::string_view text, const NameResolver& resolve) {
  auto toks = tokenize_line(text, 1);
  TokenCursor cur{&toks};
  Expr e = parse_expr(cur, resolve);
  if (!cur.at_end()) cur.fail("unexpected trailing input");
  return e;
}

std::string print_expr(const Expr& e, const NamePrinter& name, bool operand) {
  if (e.nodes.empty()) return "0";
  const auto root = static_cast<std::int32_t>(e.nodes.size()) - 1;
  std::string s = print_at(e, root, name);
  if (operand && !is_atomic(e.nodes.back().op)) return "(" + s + ")";
  return s;
}

}  // namespace pscheck
