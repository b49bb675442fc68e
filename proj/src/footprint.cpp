#include "pscheck/footprint.hpp"

#include <algorithm>

namespace pscheck {

Access instruction_access(const Instruction& ins) {
  Access a;
  const LocMask x = loc_bit(ins.loc);
  switch (ins.kind) {
    case InstrKind::Load: a.r = x; break;
    case InstrKind::Store: a.w = a.m = x; break;
    case InstrKind::Flush:
    case InstrKind::FlushOpt: a.m = x; break;
    case InstrKind::Faa:
    case InstrKind::Cas: a.r = a.w = a.m = x; break;
    case InstrKind::PBBegin:
    case InstrKind::PBEnd:
      a.m = ins.set;
      a.pb = true;
      break;
    default: break;
  }
  return a;
}

namespace {

bool only_uses(const Expr& e, RegId r) {
  bool ok = true;
  e.for_each_var([&](std::uint32_t v) { ok = ok && v == r; });
  return ok;
}

void find_gates(const InstrSeq& code, std::vector<Gate>& gates, CodeSummary& cs) {
  cs.check_of.assign(code.size() + 1, -1);
  for (std::uint32_t g = 0; g + 1 < code.size(); ++g) {
    const Instruction& rd = code[g];
    const Instruction& br = code[g + 1];
    if (rd.kind != InstrKind::Load && rd.kind != InstrKind::Cas) continue;
    if (br.kind != InstrKind::IfGoto || br.targets != std::vector<std::uint32_t>{g}) continue;
    if (!only_uses(br.e1, rd.reg) || gates.size() >= 64) continue;
    cs.check_of[g + 1] = static_cast<std::int32_t>(gates.size());
    gates.push_back(Gate{g, rd.loc, rd.reg, br.e1});
  }
}

// Backward fixpoint over the control-flow graph of one code unit.
void summarize(const InstrSeq& code, const std::vector<CodeSummary>* callees, CodeSummary& cs) {
  const std::size_t n = code.size();
  cs.full.assign(n + 1, Access{});
  cs.pre.assign(n + 1, Access{});
  cs.gates.assign(n + 1, 0);
  cs.ret_full.assign(n + 1, false);
  cs.ret_pre.assign(n + 1, false);
  auto at = [&](std::uint32_t pc) { return std::min<std::size_t>(pc, n); };
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = n; i-- > 0;) {
      const Instruction& ins = code[i];
      Access full = instruction_access(ins);
      Access pre = full;
      std::uint64_t gates = 0;
      bool rf = false, rp = false;
      auto flow = [&](std::size_t to, bool pre_too) {
        full |= cs.full[to];
        rf = rf || cs.ret_full[to];
        if (pre_too) {
          pre |= cs.pre[to];
          gates |= cs.gates[to];
          rp = rp || cs.ret_pre[to];
        }
      };
      // The gate read itself passes the gate only on its success path.
      if (ins.kind == InstrKind::Cas && i + 1 < n && cs.check_of[i + 1] >= 0) {
        pre = Access{};
        pre.r = loc_bit(ins.loc);
      }
      switch (ins.kind) {
        case InstrKind::Return:
          rf = rp = true;
          break;
        case InstrKind::IfGoto:
          flow(i + 1, cs.check_of[i] < 0);
          for (auto t : ins.targets) flow(at(t), true);
          break;
        case InstrKind::Call: {
          if (callees && ins.method_index >= 0) {
            const CodeSummary& c = (*callees)[static_cast<std::size_t>(ins.method_index)];
            full |= c.full[0];
            pre |= c.pre[0];
            gates |= c.gates[0];
            if (c.ret_full[0]) {
              full |= cs.full[i + 1];
              rf = rf || cs.ret_full[i + 1];
            }
            if (c.ret_pre[0]) {
              pre |= cs.pre[i + 1];
              gates |= cs.gates[i + 1];
              rp = rp || cs.ret_pre[i + 1];
            }
          }
          break;
        }
        default:
          flow(i + 1, true);
      }
      if (i + 1 < n && cs.check_of[i + 1] >= 0) gates |= std::uint64_t{1} << cs.check_of[i + 1];
      if (!(full == cs.full[i]) || !(pre == cs.pre[i]) || gates != cs.gates[i] || rf != cs.ret_full[i] ||
          rp != cs.ret_pre[i]) {
        cs.full[i] = full;
        cs.pre[i] = pre;
        cs.gates[i] = gates;
        cs.ret_full[i] = rf;
        cs.ret_pre[i] = rp;
        changed = true;
      }
    }
  }
}

}  // namespace

std::vector<std::uint64_t> live_registers(const InstrSeq& code, std::uint64_t window, std::size_t nregs) {
  const std::size_t end = code.size();
  const std::uint64_t all = nregs >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << nregs) - 1;
  std::vector<std::uint64_t> live(end + 1, 0);
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t pc = end; pc-- > 0;) {
      const Instruction& ins = code[pc];
      std::uint64_t use = 0;
      auto uses = [&](const Expr& e) { e.for_each_var([&](std::uint32_t r) { use |= std::uint64_t{1} << r; }); };
      uses(ins.e1);
      uses(ins.e2);
      std::uint64_t in = 0;
      switch (ins.kind) {
        case InstrKind::Call:
        case InstrKind::Return:
          in = all;
          break;
        case InstrKind::IfGoto:
          in = use | live[pc + 1];
          for (auto t : ins.targets) in |= live[std::min<std::size_t>(t, end)];
          break;
        case InstrKind::Havoc:
          in = live[pc + 1] & ~window;
          break;
        case InstrKind::Assign:
        case InstrKind::Load:
        case InstrKind::Faa:
        case InstrKind::Cas:
          in = use | (live[pc + 1] & ~(std::uint64_t{1} << ins.reg));
          break;
        default:
          in = use | live[pc + 1];
      }
      if (in != live[pc]) {
        live[pc] = in;
        changed = true;
      }
    }
  }
  return live;
}

Footprints::Footprints(const ConcurrentProgram& p) {
  methods_.resize(p.methods.size());
  threads_.resize(p.threads.size());
  std::uint64_t window = 0;
  for (RegId r : p.decls.havoc_window()) window |= std::uint64_t{1} << r;
  const std::size_t nregs = p.decls.registers.size();
  for (std::size_t f = 0; f < p.methods.size(); ++f) methods_[f].live = live_registers(p.methods[f].body, window, nregs);
  for (std::size_t t = 0; t < p.threads.size(); ++t) threads_[t].live = live_registers(p.threads[t], window, nregs);
  for (std::size_t f = 0; f < p.methods.size(); ++f) find_gates(p.methods[f].body, gates_, methods_[f]);
  for (std::size_t t = 0; t < p.threads.size(); ++t) find_gates(p.threads[t], gates_, threads_[t]);
  for (std::size_t f = 0; f < p.methods.size(); ++f) summarize(p.methods[f].body, nullptr, methods_[f]);
  for (std::size_t t = 0; t < p.threads.size(); ++t) summarize(p.threads[t], &methods_, threads_[t]);
}

}  // namespace pscheck
