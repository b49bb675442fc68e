#include "pscheck/progsem.hpp"

namespace pscheck {

LocMask varset(const ActionLabel& l) {
  switch (l.kind) {
    case LabelKind::Read: case LabelKind::Write: case LabelKind::Flush: case LabelKind::FlushOpt:
    case LabelKind::RMW: case LabelKind::ReadEx:
      return loc_bit(l.loc);
    case LabelKind::PFence: case LabelKind::PBBegin: case LabelKind::PBEnd:
      return l.set;
    default:
      return 0;
  }
}

bool is_sf_class(const ActionLabel& l, const Decls& d) {
  if (l.kind == LabelKind::SFence) return true;
  return (l.kind == LabelKind::RMW || l.kind == LabelKind::ReadEx) && d.is_nv(l.loc);
}

namespace {

std::string phi_to_string(const LocalStore& phi, const Decls& d) {
  std::string s = "{";
  for (std::size_t i = 0; i < phi.size(); ++i) {
    if (i) s += ",";
    s += (i < d.registers.size() ? d.registers[i] : "?") + ":" + std::to_string(phi[i]);
  }
  return s + "}";
}

}  // namespace

std::string label_to_string(const ActionLabel& l, const Decls& d, const std::vector<Method>& methods) {
  auto x = [&] { return d.loc_name(l.loc); };
  auto mname = [&] {
    return l.method >= 0 && static_cast<std::size_t>(l.method) < methods.size() ? methods[l.method].name : "?";
  };
  switch (l.kind) {
    case LabelKind::Read: return "R " + x() + " " + std::to_string(l.v1);
    case LabelKind::Write: return "W " + x() + " " + std::to_string(l.v1);
    case LabelKind::Flush: return "FL " + x();
    case LabelKind::FlushOpt: return "FO " + x();
    case LabelKind::SFence: return "SF";
    case LabelKind::PFence: return "PF " + d.mask_names(l.set);
    case LabelKind::PBBegin: return "PB_BEGIN " + d.mask_names(l.set);
    case LabelKind::PBEnd: return "PB_END " + d.mask_names(l.set);
    case LabelKind::Call: return "CALL " + mname() + " " + phi_to_string(l.phi, d);
    case LabelKind::Ret: return "RET " + mname() + " " + phi_to_string(l.phi, d);
    case LabelKind::RMW: return "U " + x() + " " + std::to_string(l.v1) + " " + std::to_string(l.v2);
    case LabelKind::ReadEx: return "REX " + x() + " " + std::to_string(l.v1);
  }
  return "?";
}

namespace {

void havoc_stores(const HavocDomain& h, std::size_t nregs, std::vector<LocalStore>& out) {
  LocalStore cur(nregs, 0);
  // Odometer over the window registers.
  for (;;) {
    out.push_back(cur);
    std::size_t i = 0;
    for (; i < h.window.size(); ++i) {
      Value& v = cur[h.window[i]];
      if (v < h.max_value) {
        ++v;
        break;
      }
      v = 0;
    }
    if (i == h.window.size()) return;
  }
}

IseqStep step(std::optional<ActionLabel> label, std::uint32_t pc, const LocalStore& phi) {
  return IseqStep{std::move(label), pc, phi, {}};
}

}  // namespace

std::vector<IseqStep> iseq_enabled(const InstrSeq& code, std::uint32_t pc, const LocalStore& phi,
                                   const ReadMenu& menu, const HavocDomain& havoc) {
  std::vector<IseqStep> out;
  if (pc >= code.size()) return out;
  const Instruction& ins = code[pc];
  const std::uint32_t next = pc + 1;
  switch (ins.kind) {
    case InstrKind::Assign: {
      LocalStore p = phi;
      p[ins.reg] = eval(ins.e1, phi);
      out.push_back(step(std::nullopt, next, p));
      break;
    }
    case InstrKind::IfGoto: {
      if (eval(ins.e1, phi) == 0) {
        out.push_back(step(std::nullopt, next, phi));
        break;
      }
      for (std::size_t i = 0; i < ins.targets.size(); ++i) {
        const auto t = ins.targets[i];
        bool dup = false;
        for (std::size_t j = 0; j < i; ++j) dup = dup || ins.targets[j] == t;
        if (dup) continue;
        IseqStep s = step(std::nullopt, t, phi);
        if (ins.targets.size() > 1) s.payload = GotoChoice{t};
        out.push_back(std::move(s));
      }
      break;
    }
    case InstrKind::Havoc: {
      std::vector<LocalStore> stores;
      havoc_stores(havoc, phi.size(), stores);
      for (auto& st : stores) {
        IseqStep s = step(std::nullopt, next, st);
        s.payload = HavocChoice{std::move(st)};
        out.push_back(std::move(s));
      }
      break;
    }
    case InstrKind::Store:
      out.push_back(step(ActionLabel::write(ins.loc, eval(ins.e1, phi)), next, phi));
      break;
    case InstrKind::Load:
      for (Value v : menu(ins.loc)) {
        LocalStore p = phi;
        p[ins.reg] = v;
        out.push_back(step(ActionLabel::read(ins.loc, v), next, p));
      }
      break;
    case InstrKind::Flush:
      out.push_back(step(ActionLabel::simple(LabelKind::Flush, ins.loc), next, phi));
      break;
    case InstrKind::FlushOpt:
      out.push_back(step(ActionLabel::simple(LabelKind::FlushOpt, ins.loc), next, phi));
      break;
    case InstrKind::SFence:
      out.push_back(step(ActionLabel::simple(LabelKind::SFence), next, phi));
      break;
    case InstrKind::PFence:
      out.push_back(step(ActionLabel::fence_set(LabelKind::PFence, ins.set), next, phi));
      break;
    case InstrKind::PBBegin:
      out.push_back(step(ActionLabel::fence_set(LabelKind::PBBegin, ins.set), next, phi));
      break;
    case InstrKind::PBEnd:
      out.push_back(step(ActionLabel::fence_set(LabelKind::PBEnd, ins.set), next, phi));
      break;
    case InstrKind::Faa: {
      const Value add = eval(ins.e1, phi);
      for (Value v : menu(ins.loc)) {
        LocalStore p = phi;
        p[ins.reg] = v;
        out.push_back(step(ActionLabel::rmw(ins.loc, v, v + add), next, p));
      }
      break;
    }
    case InstrKind::Cas: {
      const Value expected = eval(ins.e1, phi);
      const Value desired = eval(ins.e2, phi);
      for (Value v : menu(ins.loc)) {
        LocalStore p = phi;
        p[ins.reg] = v;
        if (v == expected) out.push_back(step(ActionLabel::rmw(ins.loc, v, desired), next, p));
        else out.push_back(step(ActionLabel::read_ex(ins.loc, v), next, p));
      }
      break;
    }
    case InstrKind::Call:
    case InstrKind::Return:
      break;
  }
  return out;
}

std::vector<ProgStep> seq_enabled(const ConcurrentProgram& p, std::size_t tid, const SeqThreadState& q,
                                  const ReadMenu& menu, const HavocDomain& havoc, bool with_nondet_sf) {
  std::vector<ProgStep> out;
  const InstrSeq& code = q.f < 0 ? p.threads.at(tid) : p.methods.at(static_cast<std::size_t>(q.f)).body;
  if (q.pc < code.size()) {
    const Instruction& ins = code[q.pc];
    if (ins.kind == InstrKind::Call) {
      if (q.f < 0 && ins.method_index >= 0) {
        ActionLabel l = ActionLabel::make(LabelKind::Call);
        l.method = ins.method_index;
        l.phi = q.phi;
        out.push_back({std::move(l), SeqThreadState{0, static_cast<std::int32_t>(q.pc + 1), ins.method_index, q.phi}, {}});
      }
    } else if (ins.kind == InstrKind::Return) {
      if (q.f >= 0) {
        ActionLabel l = ActionLabel::make(LabelKind::Ret);
        l.method = q.f;
        l.phi = q.phi;
        out.push_back({std::move(l), SeqThreadState{static_cast<std::uint32_t>(q.pc_s), -1, -1, q.phi}, {}});
      }
    } else {
      for (auto& s : iseq_enabled(code, q.pc, q.phi, menu, havoc)) {
        ProgStep ps{std::move(s.label), SeqThreadState{s.pc, q.pc_s, q.f, std::move(s.phi)}, {}};
        if (auto* g = std::get_if<GotoChoice>(&s.payload)) ps.payload = *g;
        else if (auto* h = std::get_if<HavocChoice>(&s.payload)) ps.payload = std::move(*h);
        out.push_back(std::move(ps));
      }
    }
  }
  if (with_nondet_sf) out.push_back({ActionLabel::simple(LabelKind::SFence), q, NondetSf{}});
  return out;
}

ConcProgramState initial_program_state(const ConcurrentProgram& p) {
  ConcProgramState q(p.threads.size());
  for (auto& t : q) t.phi.assign(p.decls.registers.size(), 0);
  return q;
}

bool thread_terminated(const ConcurrentProgram& p, std::size_t tid, const SeqThreadState& q) {
  return q.f < 0 && q.pc >= p.threads.at(tid).size();
}

std::vector<ConcProgStep> prog_enabled(const ConcurrentProgram& p, const ConcProgramState& q,
                                       const ReadMenu& menu, const HavocDomain& havoc, bool with_nondet_sf) {
  std::vector<ConcProgStep> out;
  for (std::size_t t = 0; t < q.size(); ++t)
    for (auto& s : seq_enabled(p, t, q[t], menu, havoc, with_nondet_sf)) out.push_back({t, std::move(s)});
  return out;
}

HavocDomain havoc_domain(const ConcurrentProgram& p, Value max_value) {
  return HavocDomain{p.decls.havoc_window(), max_value};
}

}  // namespace pscheck
