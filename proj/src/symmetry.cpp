#include "pscheck/symmetry.hpp"

#include "pscheck/footprint.hpp"

#include <numeric>

namespace pscheck {

namespace {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), fixed_(n, false) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t a) {
    while (parent_[a] != a) a = parent_[a] = parent_[parent_[a]];
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    parent_[b] = a;
    fixed_[a] = fixed_[a] || fixed_[b];
  }
  void fix(std::size_t a) { fixed_[find(a)] = true; }
  bool fixed(std::size_t a) { return fixed_[find(a)]; }

 private:
  std::vector<std::size_t> parent_;
  std::vector<bool> fixed_;
};

bool single_var(const Expr& e) { return e.nodes.size() == 1 && e.nodes[0].op == Op::Var; }

}  // namespace

DataTyping::DataTyping(const std::vector<const ConcurrentProgram*>& progs) {
  if (progs.empty()) return;
  const std::size_t nregs = progs[0]->decls.registers.size();
  bool aligned = nregs <= 64;
  for (const auto* p : progs) {
    aligned = aligned && p->decls.registers.size() == nregs && p->threads.size() == progs[0]->threads.size() &&
              p->decls.locations.size() <= kMaxLocations;
    for (std::size_t t = 0; aligned && t < p->threads.size(); ++t)
      aligned = p->threads[t].size() == progs[0]->threads[t].size();
  }
  if (!aligned) return;

  // Slot numbering: per program, thread bodies then methods, (pc, reg)
  // row-major with the end point included; locations after all code.
  struct Code {
    const InstrSeq* code;
    std::size_t base;
  };
  std::vector<std::vector<Code>> thread_code(progs.size()), method_code(progs.size());
  std::vector<std::size_t> loc_base(progs.size());
  std::size_t n = 0;
  for (std::size_t i = 0; i < progs.size(); ++i) {
    for (const auto& c : progs[i]->threads) {
      thread_code[i].push_back({&c, n});
      n += (c.size() + 1) * nregs;
    }
    for (const auto& m : progs[i]->methods) {
      method_code[i].push_back({&m.body, n});
      n += (m.body.size() + 1) * nregs;
    }
  }
  for (std::size_t i = 0; i < progs.size(); ++i) {
    loc_base[i] = n;
    n += progs[i]->decls.locations.size();
  }
  UnionFind uf(n);
  std::vector<std::vector<std::vector<RegMask>>> live_(progs.size());  // [prog][unit][pc]

  for (std::size_t i = 0; i < progs.size(); ++i) {
    const ConcurrentProgram& p = *progs[i];
    const auto window = p.decls.havoc_window();
    RegMask win = 0;
    for (RegId r : window) win |= RegMask{1} << r;
    auto loc = [&](LocId x) { return loc_base[i] + x; };
    for (std::size_t x = 0; x < p.decls.locations.size(); ++x)
      if (!p.decls.is_nv(static_cast<LocId>(x))) uf.fix(loc(static_cast<LocId>(x)));

    auto type_code = [&](const Code& c, bool is_main) {
      const InstrSeq& code = *c.code;
      const std::size_t end = code.size();
      const std::vector<RegMask> live = live_registers(code, win, nregs);
      live_[i].push_back(live);
      auto slot = [&](std::size_t pc, std::size_t r) { return c.base + std::min(pc, end) * nregs + r; };
      auto is_live = [&](std::size_t pc, std::size_t r) { return live[std::min(pc, end)] >> r & 1; };
      auto fix_vars = [&](const Expr& e, std::size_t pc) {
        e.for_each_var([&](std::uint32_t r) { uf.fix(slot(pc, r)); });
      };
      auto pass = [&](std::size_t from, std::size_t to, RegMask skip) {
        for (std::size_t r = 0; r < nregs; ++r)
          if (!(skip >> r & 1) && is_live(to, r)) uf.unite(slot(from, r), slot(to, r));
      };
      if (is_main)
        for (std::size_t r = 0; r < nregs; ++r) uf.fix(slot(0, r));
      for (std::size_t pc = 0; pc < end; ++pc) {
        const Instruction& ins = code[pc];
        const RegMask def = RegMask{1} << ins.reg;
        switch (ins.kind) {
          case InstrKind::Assign:
            if (single_var(ins.e1)) {
              if (is_live(pc + 1, ins.reg)) uf.unite(slot(pc + 1, ins.reg), slot(pc, ins.e1.nodes[0].value));
            } else {
              uf.fix(slot(pc + 1, ins.reg));
              fix_vars(ins.e1, pc);
            }
            pass(pc, pc + 1, def);
            break;
          case InstrKind::IfGoto:
            fix_vars(ins.e1, pc);
            pass(pc, pc + 1, 0);
            for (auto t : ins.targets) pass(pc, t, 0);
            break;
          case InstrKind::Havoc:
            pass(pc, pc + 1, win);
            break;
          case InstrKind::Load:
            if (is_live(pc + 1, ins.reg)) uf.unite(slot(pc + 1, ins.reg), loc(ins.loc));
            pass(pc, pc + 1, def);
            break;
          case InstrKind::Store:
            if (single_var(ins.e1)) {
              uf.unite(loc(ins.loc), slot(pc, ins.e1.nodes[0].value));
            } else {
              uf.fix(loc(ins.loc));
              fix_vars(ins.e1, pc);
            }
            pass(pc, pc + 1, 0);
            break;
          case InstrKind::Faa:
          case InstrKind::Cas:
            uf.fix(loc(ins.loc));
            uf.fix(slot(pc + 1, ins.reg));
            fix_vars(ins.e1, pc);
            fix_vars(ins.e2, pc);
            pass(pc, pc + 1, def);
            break;
          case InstrKind::Call: {
            if (ins.method_index < 0) break;
            const Code& m = method_code[i][static_cast<std::size_t>(ins.method_index)];
            const InstrSeq& body = *m.code;
            auto mslot = [&](std::size_t mpc, std::size_t r) { return m.base + mpc * nregs + r; };
            for (std::size_t r = 0; r < nregs; ++r) {
              uf.unite(slot(pc, r), mslot(0, r));
              // Kept even when r is dead after the call: RET labels show r.
              for (std::size_t q = 0; q < body.size(); ++q)
                if (body[q].kind == InstrKind::Return) uf.unite(mslot(q, r), slot(pc + 1, r));
            }
            break;
          }
          case InstrKind::Return:
            break;
          default:
            pass(pc, pc + 1, 0);
        }
      }
    };
    for (const auto& c : thread_code[i]) type_code(c, true);
    for (const auto& c : method_code[i]) type_code(c, false);
  }
  // Thread bodies line up across programs.
  for (std::size_t i = 1; i < progs.size(); ++i)
    for (std::size_t t = 0; t < thread_code[i].size(); ++t)
      for (std::size_t k = 0; k < (thread_code[i][t].code->size() + 1) * nregs; ++k)
        uf.unite(thread_code[i][t].base + k, thread_code[0][t].base + k);

  // Dead registers are left out; the state key ignores them.
  auto masks = [&](const Code& c, const std::vector<RegMask>& live) {
    Unit u;
    u.data.assign(c.code->size() + 1, 0);
    for (std::size_t pc = 0; pc <= c.code->size(); ++pc)
      for (std::size_t r = 0; r < nregs; ++r)
        if ((live[pc] >> r & 1) && !uf.fixed(c.base + pc * nregs + r)) u.data[pc] |= RegMask{1} << r;
    return u;
  };
  threads_.resize(progs.size());
  methods_.resize(progs.size());
  locs_.assign(progs.size(), 0);
  for (std::size_t i = 0; i < progs.size(); ++i) {
    std::size_t k = 0;
    for (const auto& c : thread_code[i]) threads_[i].push_back(masks(c, live_[i][k++]));
    for (const auto& c : method_code[i]) methods_[i].push_back(masks(c, live_[i][k++]));
    for (std::size_t x = 0; x < progs[i]->decls.locations.size(); ++x)
      if (!uf.fixed(loc_base[i] + x)) locs_[i] |= loc_bit(static_cast<LocId>(x));
    useful_ = useful_ || locs_[i] != 0;
  }
}

RegMask DataTyping::data_registers(std::size_t prog, std::size_t tid, const SeqThreadState& q) const {
  if (threads_.empty()) return 0;
  const Unit& u = q.f < 0 ? threads_[prog][tid] : methods_[prog][static_cast<std::size_t>(q.f)];
  return u.data[std::min<std::size_t>(q.pc, u.data.size() - 1)];
}

ValuePerm invert(const ValuePerm& p) {
  ValuePerm q(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) q[p[i]] = static_cast<Value>(i);
  return q;
}

ValuePerm compose(const ValuePerm& outer, const ValuePerm& inner) {
  ValuePerm r(std::max(outer.size(), inner.size()));
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = apply_perm(outer, apply_perm(inner, static_cast<Value>(i)));
  return r;
}

bool is_identity(const ValuePerm& p) {
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] != i) return false;
  return true;
}

}  // namespace pscheck
