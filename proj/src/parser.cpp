#include "pscheck/parser.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace pscheck {

namespace {

struct Line {
  int number;
  std::vector<Token> toks;
};

bool is_decl_keyword(const std::string& w) {
  return w == "nonvolatile" || w == "volatile" || w == "registers" || w == "arguments";
}

bool is_reserved(const std::string& w) {
  static const char* kWords[] = {"nonvolatile", "volatile", "registers", "arguments", "method", "thread",
                                 "if", "goto", "havoc", "store", "load", "fl", "fo", "sfence", "pfence",
                                 "pb_begin", "pb_end", "call", "return", "faa", "cas", "even", "odd"};
  for (const char* k : kWords)
    if (w == k) return true;
  return false;
}

std::string expect_ident(TokenCursor& cur, const char* what) {
  const Token& t = cur.peek();
  if (t.kind != Token::Ident) cur.fail(std::string("expected ") + what);
  cur.next();
  return t.text;
}

void expect_end(TokenCursor& cur) {
  if (!cur.at_end()) cur.fail("unexpected trailing input");
}

class BlockParser {
 public:
  BlockParser(const Decls& d, bool is_method) : decls_(d), is_method_(is_method) {}

  void add_line(const Line& line) {
    TokenCursor cur{&line.toks};
    while (cur.peek().kind == Token::Ident && cur.peek(1).kind == Token::Punct && cur.peek(1).text == ":") {
      const Token& lab = cur.peek();
      if (is_reserved(lab.text)) throw SyntaxError(lab.line, lab.column, "reserved word used as label");
      if (labels_.count(lab.text)) throw SyntaxError(lab.line, lab.column, "duplicate label '" + lab.text + "'");
      labels_[lab.text] = static_cast<std::uint32_t>(code_.size());
      cur.next();
      cur.next();
    }
    if (cur.at_end()) return;
    code_.push_back(parse_instruction(cur));
  }

  InstrSeq finish() {
    for (const auto& [idx, toks] : pending_) {
      for (const Token& t : toks) {
        auto it = labels_.find(t.text);
        if (it == labels_.end()) throw SyntaxError(t.line, t.column, "undefined label '" + t.text + "'");
        code_[idx].targets.push_back(it->second);
      }
    }
    return std::move(code_);
  }

 private:
  RegId reg(TokenCursor& cur) {
    const Token& t = cur.peek();
    auto r = decls_.find_register(t.text);
    if (t.kind != Token::Ident || !r) cur.fail("expected a declared register");
    cur.next();
    return *r;
  }

  LocId loc(TokenCursor& cur) {
    const Token& t = cur.peek();
    auto x = decls_.find_location(t.text);
    if (t.kind != Token::Ident || !x) cur.fail("expected a declared location");
    cur.next();
    return *x;
  }

  LocMask loc_set(TokenCursor& cur) {
    cur.expect("{");
    LocMask m = 0;
    if (!cur.accept("}")) {
      do {
        const Token& t = cur.peek();
        const LocId x = loc(cur);
        if (!decls_.is_nv(x)) throw SyntaxError(t.line, t.column, "location sets may only name non-volatile locations");
        m |= loc_bit(x);
      } while (cur.accept(","));
      cur.expect("}");
    }
    return m;
  }

  Expr expr(TokenCursor& cur, bool operand) {
    NameResolver res = [this](std::string_view n) -> std::optional<std::uint32_t> {
      if (auto r = decls_.find_register(n)) return *r;
      return std::nullopt;
    };
    try {
      return operand ? parse_operand(cur, res) : parse_expr(cur, res);
    } catch (const SyntaxError& e) {
      // Memory inside expressions is a common slip; point at the fix.
      const Token& t = cur.peek();
      if (t.kind == Token::Ident && decls_.find_location(t.text))
        throw SyntaxError(t.line, t.column, "location '" + t.text + "' in an expression; load it into a register first");
      throw;
    }
  }

  void targets(TokenCursor& cur, Instruction& ins) {
    std::vector<Token> toks;
    do {
      const Token& t = cur.peek();
      if (t.kind != Token::Ident) cur.fail("expected a label");
      toks.push_back(t);
      cur.next();
    } while (cur.accept("|"));
    pending_.emplace_back(code_.size(), std::move(toks));
    ins.kind = InstrKind::IfGoto;
  }

  Instruction parse_instruction(TokenCursor& cur) {
    Instruction ins;
    const Token head = cur.peek();
    if (head.kind == Token::Ident && cur.peek(1).text == ":=") {
      ins.kind = InstrKind::Assign;
      ins.reg = reg(cur);
      cur.next();
      ins.e1 = expr(cur, false);
      expect_end(cur);
      return ins;
    }
    const std::string w = expect_ident(cur, "an instruction");
    if (w == "havoc") {
      ins.kind = InstrKind::Havoc;
    } else if (w == "if") {
      ins.e1 = expr(cur, false);
      cur.expect("goto");
      targets(cur, ins);
    } else if (w == "goto") {
      ins.e1 = Expr::constant(1);
      targets(cur, ins);
    } else if (w == "store") {
      ins.kind = InstrKind::Store;
      ins.loc = loc(cur);
      ins.e1 = expr(cur, false);
    } else if (w == "load") {
      ins.kind = InstrKind::Load;
      ins.reg = reg(cur);
      ins.loc = loc(cur);
    } else if (w == "fl" || w == "fo") {
      ins.kind = w == "fl" ? InstrKind::Flush : InstrKind::FlushOpt;
      const Token& t = cur.peek();
      ins.loc = loc(cur);
      if (!decls_.is_nv(ins.loc)) throw SyntaxError(t.line, t.column, w + " needs a non-volatile location");
    } else if (w == "sfence") {
      ins.kind = InstrKind::SFence;
    } else if (w == "pfence" || w == "pb_begin" || w == "pb_end") {
      ins.kind = w == "pfence" ? InstrKind::PFence : w == "pb_begin" ? InstrKind::PBBegin : InstrKind::PBEnd;
      ins.set = loc_set(cur);
    } else if (w == "call") {
      if (is_method_) throw SyntaxError(head.line, head.column, "methods must be flat (call inside a method body)");
      ins.kind = InstrKind::Call;
      ins.method = expect_ident(cur, "a method name");
    } else if (w == "return") {
      if (!is_method_) throw SyntaxError(head.line, head.column, "return outside a method");
      ins.kind = InstrKind::Return;
    } else if (w == "faa") {
      ins.kind = InstrKind::Faa;
      ins.reg = reg(cur);
      ins.loc = loc(cur);
      ins.e1 = expr(cur, false);
    } else if (w == "cas") {
      ins.kind = InstrKind::Cas;
      ins.reg = reg(cur);
      ins.loc = loc(cur);
      ins.e1 = expr(cur, true);
      ins.e2 = expr(cur, true);
    } else {
      throw SyntaxError(head.line, head.column, "unknown instruction '" + w + "'");
    }
    expect_end(cur);
    return ins;
  }

  const Decls& decls_;
  bool is_method_;
  InstrSeq code_;
  std::map<std::string, std::uint32_t> labels_;
  std::vector<std::pair<std::size_t, std::vector<Token>>> pending_;
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> out;
  int number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++number;
    auto toks = tokenize_line(text.substr(start, end - start), number);
    // ';' separates instructions sharing a line.
    std::vector<Token> part;
    for (auto& t : toks) {
      const bool semi = t.kind == Token::Punct && t.text == ";";
      if (!semi && t.kind != Token::End) {
        part.push_back(std::move(t));
        continue;
      }
      Token stop = t;
      stop.kind = Token::End;
      stop.text.clear();
      if (!part.empty()) {
        part.push_back(stop);
        out.push_back({number, std::move(part)});
      }
      part.clear();
    }
    start = end + 1;
  }
  return out;
}

}  // namespace

ParsedUnit parse_unit(std::string_view text) {
  const auto lines = split_lines(text);
  ParsedUnit unit;
  Decls& decls = unit.program.decls;

  // Declarations first so that blocks can use names declared further down.
  for (const auto& line : lines) {
    const Token& head = line.toks.front();
    if (head.kind != Token::Ident || !is_decl_keyword(head.text)) continue;
    for (std::size_t i = 1; i + 1 < line.toks.size(); ++i) {
      const Token& t = line.toks[i];
      if (t.kind == Token::Punct && t.text == ",") continue;
      if (t.kind != Token::Ident || is_reserved(t.text)) throw SyntaxError(t.line, t.column, "expected a name");
      try {
        if (head.text == "nonvolatile") decls.add_location(t.text, Durability::NonVolatile);
        else if (head.text == "volatile") decls.add_location(t.text, Durability::Volatile);
        else if (head.text == "registers") decls.add_register(t.text);
        else decls.arguments.push_back(decls.add_register(t.text));
      } catch (const SyntaxError&) {
        throw;
      } catch (const InputError& e) {
        throw SyntaxError(t.line, t.column, e.what());
      }
    }
  }

  std::optional<BlockParser> block;
  std::string block_name;
  bool block_is_method = false;
  auto close_block = [&] {
    if (!block) return;
    InstrSeq code = block->finish();
    if (block_is_method) unit.program.methods.push_back({block_name, std::move(code)});
    else unit.program.threads.push_back(std::move(code));
    block.reset();
  };

  for (const auto& line : lines) {
    const Token& head = line.toks.front();
    if (head.kind == Token::Ident && is_decl_keyword(head.text)) continue;
    TokenCursor cur{&line.toks};
    if (head.kind == Token::Ident && (head.text == "method" || head.text == "thread") &&
        cur.peek(1).kind != Token::Punct) {
      close_block();
      cur.next();
      if (head.text == "method") {
        block_name = expect_ident(cur, "a method name");
        if (is_reserved(block_name)) throw SyntaxError(head.line, head.column, "reserved word used as method name");
        if (unit.program.method_index(block_name))
          throw SyntaxError(head.line, head.column, "method '" + block_name + "' defined twice");
        block_is_method = true;
      } else {
        const Token& n = cur.peek();
        if (n.kind != Token::Number || std::stoul(n.text) != unit.program.threads.size() + 1)
          cur.fail("threads must be numbered 1, 2, ... in order");
        cur.next();
        block_is_method = false;
        unit.has_threads = true;
      }
      cur.expect(":");
      expect_end(cur);
      block.emplace(decls, block_is_method);
      continue;
    }
    if (!block) throw SyntaxError(head.line, head.column, "instruction outside a method or thread block");
    block->add_line(line);
  }
  close_block();
  unit.program.resolve_calls();
  validate(unit.program);
  return unit;
}

ConcurrentProgram parse_program(std::string_view text) { return parse_unit(text).program; }

Library parse_library(std::string_view text) {
  ParsedUnit u = parse_unit(text);
  if (u.has_threads) throw InputError("a library may not contain thread blocks");
  return to_library(u.program);
}

Library to_library(const ConcurrentProgram& p) { return Library{p.decls, p.methods}; }

ConcurrentProgram to_program(const Library& l) {
  ConcurrentProgram p;
  p.decls = l.decls;
  p.methods = l.methods;
  p.resolve_calls();
  return p;
}

std::string print_instruction(const Instruction& ins, const Decls& d, const std::vector<std::string>& labels) {
  auto reg = [&](std::uint32_t r) { return d.registers.at(r); };
  auto e = [&](const Expr& x, bool operand) { return print_expr(x, reg, operand); };
  auto target = [&](std::uint32_t pc) { return pc < labels.size() ? labels[pc] : "L" + std::to_string(pc); };
  switch (ins.kind) {
    case InstrKind::Assign: return reg(ins.reg) + " := " + e(ins.e1, false);
    case InstrKind::Havoc: return "havoc";
    case InstrKind::IfGoto: {
      std::string s;
      if (!(ins.e1.nodes.size() == 1 && ins.e1.nodes[0].op == Op::Const && ins.e1.nodes[0].value == 1))
        s = "if " + e(ins.e1, false) + " ";
      s += "goto ";
      for (std::size_t i = 0; i < ins.targets.size(); ++i) s += (i ? "|" : "") + target(ins.targets[i]);
      return s;
    }
    case InstrKind::Store: return "store " + d.loc_name(ins.loc) + " " + e(ins.e1, false);
    case InstrKind::Load: return "load " + reg(ins.reg) + " " + d.loc_name(ins.loc);
    case InstrKind::Flush: return "fl " + d.loc_name(ins.loc);
    case InstrKind::FlushOpt: return "fo " + d.loc_name(ins.loc);
    case InstrKind::SFence: return "sfence";
    case InstrKind::PFence: return "pfence " + d.mask_names(ins.set);
    case InstrKind::PBBegin: return "pb_begin " + d.mask_names(ins.set);
    case InstrKind::PBEnd: return "pb_end " + d.mask_names(ins.set);
    case InstrKind::Call: return "call " + ins.method;
    case InstrKind::Return: return "return";
    case InstrKind::Faa: return "faa " + reg(ins.reg) + " " + d.loc_name(ins.loc) + " " + e(ins.e1, false);
    case InstrKind::Cas:
      return "cas " + reg(ins.reg) + " " + d.loc_name(ins.loc) + " " + e(ins.e1, true) + " " + e(ins.e2, true);
  }
  return "?";
}

namespace {

void print_block(std::ostringstream& os, const InstrSeq& code, const Decls& d) {
  std::vector<bool> is_target(code.size() + 1, false);
  for (const auto& ins : code)
    for (auto t : ins.targets) is_target[t] = true;
  std::vector<std::string> labels(code.size() + 1);
  for (std::size_t pc = 0; pc <= code.size(); ++pc) labels[pc] = "L" + std::to_string(pc);
  for (std::size_t pc = 0; pc <= code.size(); ++pc) {
    if (is_target[pc]) os << labels[pc] << ":\n";
    if (pc < code.size()) os << "  " << print_instruction(code[pc], d, labels) << "\n";
  }
}

void print_decls(std::ostringstream& os, const Decls& d) {
  // One line per run of equal durability, so that indices survive a reparse.
  for (std::size_t i = 0; i < d.locations.size();) {
    const Durability dur = d.locations[i].durability;
    os << (dur == Durability::NonVolatile ? "nonvolatile" : "volatile");
    for (; i < d.locations.size() && d.locations[i].durability == dur; ++i) os << " " << d.locations[i].name;
    os << "\n";
  }
  if (!d.registers.empty()) {
    os << "registers";
    for (const auto& r : d.registers) os << " " << r;
    os << "\n";
  }
  if (!d.arguments.empty()) {
    os << "arguments";
    for (auto a : d.arguments) os << " " << d.registers[a];
    os << "\n";
  }
}

}  // namespace

std::string print_program(const ConcurrentProgram& p) {
  std::ostringstream os;
  print_decls(os, p.decls);
  for (const auto& m : p.methods) {
    os << "\nmethod " << m.name << ":\n";
    print_block(os, m.body, p.decls);
  }
  for (std::size_t t = 0; t < p.threads.size(); ++t) {
    os << "\nthread " << (t + 1) << ":\n";
    print_block(os, p.threads[t], p.decls);
  }
  return os.str();
}

std::string print_library(const Library& l) { return print_program(to_program(l)); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ConcurrentProgram load_program(const std::string& path) {
  try {
    return parse_program(read_file(path));
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

Library load_library(const std::string& path) {
  try {
    return parse_library(read_file(path));
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

}  // namespace pscheck
