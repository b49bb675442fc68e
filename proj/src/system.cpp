#include "pscheck/system.hpp"

#include "pscheck/footprint.hpp"
#include "pscheck/symmetry.hpp"

#include <algorithm>
#include <deque>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace pscheck {

System::System(ConcurrentProgram prog, Bounds bounds) : prog_(std::move(prog)), bounds_(bounds) {
  prog_.resolve_calls();
  if (!prog_.closed()) throw InputError("program calls unbound method '" + prog_.unbound_methods().front() + "'");
  validate(prog_);
  havoc_ = havoc_domain(prog_, bounds_.max_value);
  if (bounds_.partial_order || bounds_.forget_unobservable) fp_ = std::make_shared<const Footprints>(prog_);
  if (bounds_.value_symmetry) use_typing(std::make_shared<const DataTyping>(std::vector<const ConcurrentProgram*>{&prog_}), 0);
}

void System::use_typing(std::shared_ptr<const DataTyping> typing, std::size_t index) {
  typing_ = typing && typing->useful() && bounds_.max_value < 8 ? std::move(typing) : nullptr;
  typing_index_ = index;
}

SysState System::initial() const {
  SysState s;
  s.prog = initial_program_state(prog_);
  s.mem = mem_init(prog_.decls, prog_.threads.size());
  return s;
}

SysState System::initial_with_nvm(const std::vector<Value>& nvm) const {
  SysState s = initial();
  std::size_t i = 0;
  for (std::size_t x = 0; x < s.mem.nvm.size(); ++x)
    if (s.mem.is_nv(static_cast<LocId>(x))) s.mem.nvm[x] = i < nvm.size() ? nvm[i++] : 0;
  return s;
}

namespace {

struct ThreadView {
  Access full, pre;
  std::uint64_t gates = 0;
  bool open = false;  // may get past a gate without help
};

bool conflicts(const Instruction& ins, const Access& o) {
  const LocMask x = loc_bit(ins.loc);
  switch (ins.kind) {
    case InstrKind::Load: return (o.w & x) != 0;
    case InstrKind::Store:
    case InstrKind::Faa:
    case InstrKind::Cas: return ((o.r | o.w | o.m) & x) != 0;
    case InstrKind::Flush:
    case InstrKind::FlushOpt: return (o.m & x) != 0;
    case InstrKind::PBBegin:
    case InstrKind::PBEnd: return o.pb;
    default: return false;
  }
}

void future_of(const Footprints& fp, const SeqThreadState& p, std::size_t u, ThreadView& v, std::int32_t& check) {
  const CodeSummary& main = fp.thread(u);
  if (p.f < 0) {
    const std::size_t pc = std::min<std::size_t>(p.pc, main.full.size() - 1);
    v.full = main.full[pc];
    v.pre = main.pre[pc];
    v.gates = main.gates[pc];
    check = main.check_of[pc];
    return;
  }
  const CodeSummary& m = fp.method(static_cast<std::size_t>(p.f));
  const auto ret = static_cast<std::size_t>(p.pc_s);
  v.full = m.full[p.pc];
  v.pre = m.pre[p.pc];
  v.gates = m.gates[p.pc];
  if (m.ret_full[p.pc]) v.full |= main.full[ret];
  if (m.ret_pre[p.pc]) {
    v.pre |= main.pre[ret];
    v.gates |= main.gates[ret];
  }
  check = m.check_of[p.pc];
}

bool gate_blocks(const Gate& g, const LocalStore& phi, Value v) {
  LocalStore p = phi;
  p[g.reg] = v;
  return eval(g.cond, p) != 0;
}

}  // namespace

bool System::ample_ok(const SysState& s, std::size_t t, bool sf_offered) const {
  const SeqThreadState& q = s.prog[t];
  const InstrSeq& code = q.f < 0 ? prog_.threads[t] : prog_.methods[static_cast<std::size_t>(q.f)].body;
  if (q.pc >= code.size()) return false;
  const Instruction& ins = code[q.pc];
  switch (ins.kind) {
    case InstrKind::Call:
    case InstrKind::Return:
    case InstrKind::SFence:
      return false;
    case InstrKind::Faa:
    case InstrKind::Cas:
      if (decls().is_nv(ins.loc)) return false;
      break;
    case InstrKind::FlushOpt:
      // Would disable this thread's own non-deterministic sfence.
      if (sf_offered) return false;
      break;
    case InstrKind::IfGoto:
      if (std::any_of(ins.targets.begin(), ins.targets.end(), [&](std::uint32_t x) { return x <= q.pc; }))
        return false;
      break;
    default:
      break;
  }
  if (instruction_access(ins) == Access{}) return true;

  const auto& gates = fp_->gates();
  const std::size_t n = s.prog.size();
  std::vector<ThreadView> views(n);
  for (std::size_t u = 0; u < n; ++u) {
    if (u == t) continue;
    ThreadView& v = views[u];
    std::int32_t check = -1;
    future_of(*fp_, s.prog[u], u, v, check);
    const LocalStore& phi = s.prog[u].phi;
    if (check >= 0 && eval(gates[static_cast<std::size_t>(check)].cond, phi) == 0) v.open = true;
    for (std::size_t g = 0; g < gates.size() && !v.open; ++g)
      if ((v.gates >> g & 1) && !gate_blocks(gates[g], phi, mem_lookup(s.mem, gates[g].loc))) v.open = true;
  }
  // A closed gate stays closed while nobody but t could write its location.
  for (bool changed = true; changed;) {
    changed = false;
    LocMask written = 0;
    for (std::size_t u = 0; u < n; ++u)
      if (u != t) written |= views[u].open ? views[u].full.w : views[u].pre.w;
    for (std::size_t u = 0; u < n; ++u) {
      if (u == t || views[u].open) continue;
      for (std::size_t g = 0; g < gates.size(); ++g)
        if ((views[u].gates >> g & 1) && mask_has(written, gates[g].loc)) {
          views[u].open = true;
          changed = true;
          break;
        }
    }
  }
  for (std::size_t u = 0; u < n; ++u)
    if (u != t && conflicts(ins, views[u].open ? views[u].full : views[u].pre)) return false;
  return true;
}

std::vector<Successor> System::enabled(const SysState& s) const {
  std::vector<Successor> out;
  out.reserve(16);
  const bool sf_counted = bounds_.max_nondet_sf != kUnbounded;
  const bool sf_ok = !sf_counted || s.nondet_sf < bounds_.max_nondet_sf;
  const ReadMenu menu = [&s](LocId x) { return std::vector<Value>{mem_lookup(s.mem, x)}; };
  auto thread_steps = [&](std::size_t t, bool with_sf, bool& blocked) {
    for (auto& ps : seq_enabled(prog_, t, s.prog[t], menu, havoc_, with_sf)) {
      Successor succ;
      succ.rt.kind = TransKind::Thread;
      succ.rt.tid = static_cast<ThreadId>(t);
      std::visit([&](auto&& p) { succ.rt.payload = p; }, ps.payload);
      if (ps.label) {
        auto m = mem_apply(s.mem, static_cast<ThreadId>(t), *ps.label);
        if (!m) {
          blocked = true;
          continue;
        }
        succ.state.mem = std::move(*m);
      } else {
        succ.state.mem = s.mem;
      }
      succ.state.prog = s.prog;
      succ.state.prog[t] = std::move(ps.next);
      succ.state.crashes = s.crashes;
      succ.state.nondet_sf = s.nondet_sf + (sf_counted && std::holds_alternative<NondetSf>(ps.payload) ? 1 : 0);
      succ.rt.label = std::move(ps.label);
      out.push_back(std::move(succ));
    }
  };

  const bool drain_after = bounds_.forget_unobservable && bounds_.mode == PersistMode::Units && last_era(s);
  auto drained = [&]() {
    if (drain_after)
      for (auto& succ : out) drain(succ.state, succ.suffix);
  };

  bool blocked = false;
  if (bounds_.partial_order) {
    for (std::size_t t = 0; t < s.prog.size(); ++t) {
      if (!ample_ok(s, t, sf_ok)) continue;
      bool ignored = false;
      thread_steps(t, false, ignored);
      if (!out.empty()) {
        drained();
        return out;
      }
    }
  }
  for (std::size_t t = 0; t < s.prog.size(); ++t) thread_steps(t, sf_ok, blocked);

  const bool full = bounds_.mode == PersistMode::Full;
  const bool persist_ok = (!full || s.per_run < bounds_.max_per_between_steps) && (!bounds_.lazy_persist || blocked);
  if (persist_ok) {
    for (auto& c : persist_choices(s.mem, bounds_.mode)) {
      Successor succ;
      succ.state.prog = s.prog;
      succ.state.mem = mem_persist(s.mem, c);
      succ.state.crashes = s.crashes;
      succ.state.nondet_sf = s.nondet_sf;
      succ.state.per_run = full ? s.per_run + 1 : 0;
      succ.rt.kind = TransKind::Persist;
      succ.rt.payload = std::move(c);
      out.push_back(std::move(succ));
    }
  }
  drained();
  if (s.crashes < bounds_.max_crashes) {
    auto crash_to = [&](MemState m, Trace prefix) {
      Successor succ;
      succ.state.prog = initial_program_state(prog_);
      succ.state.mem = std::move(m);
      succ.state.crashes = s.crashes + 1;
      succ.state.nondet_sf = s.nondet_sf;
      succ.rt.kind = TransKind::Crash;
      succ.prefix = std::move(prefix);
      out.push_back(std::move(succ));
    };
    if (bounds_.lazy_persist) {
      for (auto& img : crash_images(s)) crash_to(std::move(img.mem), std::move(img.persists));
    } else {
      crash_to(mem_crash(s.mem), {});
    }
  }
  return out;
}

void System::drain(SysState& s, Trace& steps) const {
  for (;;) {
    auto choices = persist_choices(s.mem, PersistMode::Units);
    if (choices.empty()) return;
    s.mem = mem_persist(s.mem, choices.front());
    ResolvedTransition rt;
    rt.kind = TransKind::Persist;
    rt.payload = std::move(choices.front());
    steps.push_back(std::move(rt));
  }
}

std::vector<CrashImage> System::crash_images(const SysState& s) const {
  std::vector<CrashImage> out;
  const bool full = bounds_.mode == PersistMode::Full;
  struct Item {
    MemState m;
    Trace path;
    std::uint32_t run;
  };
  std::unordered_map<std::string, char> seen;
  std::unordered_map<std::string, char> images;
  std::deque<Item> queue;
  queue.push_back({s.mem, {}, s.per_run});
  {
    std::string k;
    append_mem_key(k, s.mem, false);
    seen.emplace(std::move(k), 0);
  }
  while (!queue.empty()) {
    Item it = std::move(queue.front());
    queue.pop_front();
    std::string nk;
    for (Value v : it.m.nvm) append_varint(nk, v);
    if (images.emplace(std::move(nk), 0).second) out.push_back({mem_crash(it.m), it.path});
    if (full && it.run >= bounds_.max_per_between_steps) continue;
    for (auto& c : persist_choices(it.m, bounds_.mode)) {
      MemState m = mem_persist(it.m, c);
      std::string k;
      append_mem_key(k, m, false);
      if (!seen.emplace(std::move(k), 0).second) continue;
      Trace path = it.path;
      ResolvedTransition rt;
      rt.kind = TransKind::Persist;
      rt.payload = std::move(c);
      path.push_back(std::move(rt));
      queue.push_back({std::move(m), std::move(path), full ? it.run + 1 : 0});
    }
  }
  return out;
}

SysState System::apply(const SysState& s, const ResolvedTransition& rt) const {
  SysState r;
  r.crashes = s.crashes;
  r.nondet_sf = s.nondet_sf;
  switch (rt.kind) {
    case TransKind::Crash:
      r.prog = initial_program_state(prog_);
      r.mem = mem_crash(s.mem);
      r.crashes = s.crashes + 1;
      return r;
    case TransKind::Persist: {
      const auto* c = std::get_if<PersistChoice>(&rt.payload);
      if (!c || !persist_valid(s.mem, *c)) throw std::invalid_argument("persist choice not valid here");
      r.prog = s.prog;
      r.mem = mem_persist(s.mem, *c);
      r.per_run = bounds_.mode == PersistMode::Full ? s.per_run + 1 : 0;
      return r;
    }
    case TransKind::Thread:
      break;
  }
  if (rt.tid >= s.prog.size()) throw std::invalid_argument("no such thread");
  const ReadMenu menu = [&s](LocId x) { return std::vector<Value>{mem_lookup(s.mem, x)}; };
  HavocDomain wide = havoc_;
  if (const auto* h = std::get_if<HavocChoice>(&rt.payload)) {
    // Accept any recorded havoc store, whatever the replay bound on values.
    for (Value v : h->store) wide.max_value = std::max(wide.max_value, v);
  }
  for (auto& ps : seq_enabled(prog_, rt.tid, s.prog[rt.tid], menu, wide, true)) {
    if (ps.label != rt.label) continue;
    const bool same_payload = std::visit(
        [&](auto&& p) {
          using P = std::decay_t<decltype(p)>;
          const auto* q = std::get_if<P>(&rt.payload);
          return q != nullptr && *q == p;
        },
        ps.payload);
    if (!same_payload) continue;
    if (ps.label) {
      auto m = mem_apply(s.mem, rt.tid, *ps.label);
      if (!m) throw std::invalid_argument("memory blocks the label");
      r.mem = std::move(*m);
    } else {
      r.mem = s.mem;
    }
    r.prog = s.prog;
    r.prog[rt.tid] = std::move(ps.next);
    if (std::holds_alternative<NondetSf>(rt.payload)) ++r.nondet_sf;
    return r;
  }
  throw std::invalid_argument("thread cannot take this step");
}

void System::append_key(std::string& out, const SysState& s) const {
  out.reserve(out.size() + 96);
  for (std::size_t u = 0; u < s.prog.size(); ++u) {
    const SeqThreadState& t = s.prog[u];
    append_varint(out, t.pc);
    append_varint(out, static_cast<std::uint64_t>(t.pc_s + 1));
    append_varint(out, static_cast<std::uint64_t>(t.f + 1));
    // Dead registers are never read again, nor shown by a label.
    const std::uint64_t live = bounds_.forget_unobservable ? live_at(u, t) : ~std::uint64_t{0};
    for (std::size_t r = 0; r < t.phi.size(); ++r) append_varint(out, live >> r & 1 ? t.phi[r] : 0);
  }
  if (last_era(s)) {
    append_observable_mem_key(out, s.mem, unread_locations(s));
  } else {
    append_mem_key(out, s.mem, false);
  }
  append_varint(out, s.crashes);
  if (bounds_.max_nondet_sf != kUnbounded) append_varint(out, s.nondet_sf);
  if (bounds_.mode == PersistMode::Full) append_varint(out, s.per_run);
}

std::uint64_t System::live_at(std::size_t tid, const SeqThreadState& q) const {
  const CodeSummary& c = q.f < 0 ? fp_->thread(tid) : fp_->method(static_cast<std::size_t>(q.f));
  return c.live[std::min<std::size_t>(q.pc, c.live.size() - 1)];
}

LocMask System::unread_locations(const SysState& s) const {
  LocMask read = 0;
  for (std::size_t u = 0; u < s.prog.size(); ++u) {
    ThreadView v;
    std::int32_t check = -1;
    future_of(*fp_, s.prog[u], u, v, check);
    read |= v.full.r;
  }
  return ~read;
}

ValuePerm System::canonicalize(SysState& s, Value* named) const {
  if (named) *named = 0;
  if (!typing_) return {};
  const Value n = bounds_.max_value + 1;
  ValuePerm p(n, n);  // n marks "not yet named"
  Value next = 0;
  auto see = [&](Value v) {
    if (v < n && p[v] == n) p[v] = next++;
  };
  for (std::size_t t = 0; t < s.prog.size() && next < n; ++t) {
    const RegMask d = typing_->data_registers(typing_index_, t, s.prog[t]);
    for (std::size_t r = 0; r < s.prog[t].phi.size(); ++r)
      if (d >> r & 1) see(s.prog[t].phi[r]);
  }
  const bool forget = last_era(s);
  const LocMask unread = forget ? unread_locations(s) : 0;
  const LocMask data = typing_->data_locations(typing_index_) & ~unread;
  for_each_loc(data, [&](LocId x) {
    const Buffer& b = s.mem.buf[x];
    std::size_t newest = b.size();
    for (std::size_t i = 0; i < b.size(); ++i)
      if (!b[i].is_fo) newest = i;
    if (!forget || newest == b.size()) see(s.mem.is_nv(x) ? s.mem.nvm[x] : s.mem.vm[x]);
    for (std::size_t i = 0; i < b.size(); ++i)
      if (!b[i].is_fo && (!forget || i == newest)) see(b[i].value);
  });
  if (named) *named = next;
  for (Value v = 0; v < n; ++v)
    if (p[v] == n) p[v] = next++;
  if (is_identity(p)) return {};
  s = permute(s, p);
  return p;
}

SysState System::permute(const SysState& s, const ValuePerm& p) const {
  if (!typing_ || p.empty()) return s;
  SysState r = s;
  for (std::size_t t = 0; t < r.prog.size(); ++t) {
    const RegMask d = typing_->data_registers(typing_index_, t, r.prog[t]);
    for (std::size_t i = 0; i < r.prog[t].phi.size(); ++i)
      if (d >> i & 1) r.prog[t].phi[i] = apply_perm(p, r.prog[t].phi[i]);
  }
  for_each_loc(typing_->data_locations(typing_index_), [&](LocId x) {
    Value& v = r.mem.is_nv(x) ? r.mem.nvm[x] : r.mem.vm[x];
    v = apply_perm(p, v);
    for (auto& e : r.mem.buf[x])
      if (!e.is_fo) e.value = apply_perm(p, e.value);
  });
  return r;
}

ResolvedTransition System::permute(const ResolvedTransition& rt, const SysState& from, const ValuePerm& p) const {
  if (!typing_ || p.empty() || rt.kind != TransKind::Thread) return rt;
  ResolvedTransition r = rt;
  const SeqThreadState& q = from.prog[rt.tid];
  auto regs = [&](LocalStore& phi, RegMask d) {
    for (std::size_t i = 0; i < phi.size(); ++i)
      if (d >> i & 1) phi[i] = apply_perm(p, phi[i]);
  };
  if (auto* h = std::get_if<HavocChoice>(&r.payload)) {
    SeqThreadState after = q;
    ++after.pc;
    regs(h->store, typing_->data_registers(typing_index_, rt.tid, after));
  }
  if (r.label) {
    ActionLabel& l = *r.label;
    const LocMask data = typing_->data_locations(typing_index_);
    switch (l.kind) {
      case LabelKind::Read:
      case LabelKind::Write:
        if (mask_has(data, l.loc)) l.v1 = apply_perm(p, l.v1);
        break;
      case LabelKind::Call:
      case LabelKind::Ret:
        regs(l.phi, typing_->data_registers(typing_index_, rt.tid, q));
        break;
      default:
        break;
    }
  }
  return r;
}

std::string System::key(const SysState& s) const {
  std::string k;
  append_key(k, s);
  return k;
}

std::vector<Value> System::nv_values(const MemState& m) const {
  std::vector<Value> out;
  for (std::size_t x = 0; x < m.nvm.size(); ++x)
    if (m.is_nv(static_cast<LocId>(x))) out.push_back(m.nvm[x]);
  return out;
}

namespace {

std::string phi_text(const LocalStore& phi, const Decls& d) {
  std::string s = "{";
  for (std::size_t i = 0; i < phi.size(); ++i) s += (i ? "," : "") + d.registers[i] + ":" + std::to_string(phi[i]);
  return s + "}";
}

}  // namespace

std::string System::transition_to_string(const ResolvedTransition& rt) const {
  if (rt.kind == TransKind::Crash) return "crash";
  if (rt.kind == TransKind::Persist) {
    std::string s = "per {";
    const auto& c = std::get<PersistChoice>(rt.payload);
    for (std::size_t i = 0; i < c.prefixes.size(); ++i)
      s += (i ? "," : "") + decls().loc_name(c.prefixes[i].first) + ":" + std::to_string(c.prefixes[i].second);
    return s + "}";
  }
  std::string s = std::to_string(rt.tid + 1) + " ";
  s += rt.label ? label_to_string(*rt.label, decls(), prog_.methods) : "eps";
  if (const auto* g = std::get_if<GotoChoice>(&rt.payload)) s += " goto " + std::to_string(g->target);
  if (const auto* h = std::get_if<HavocChoice>(&rt.payload)) s += " havoc " + phi_text(h->store, decls());
  if (std::holds_alternative<NondetSf>(rt.payload)) s += " nondet";
  return s;
}

std::string System::state_to_string(const SysState& s) const {
  std::ostringstream os;
  for (std::size_t t = 0; t < s.prog.size(); ++t) {
    const auto& q = s.prog[t];
    os << "thread " << (t + 1) << ": " << (q.f < 0 ? std::string("main") : prog_.methods[q.f].name) << " pc=" << q.pc;
    if (q.pc_s >= 0) os << " ret=" << q.pc_s;
    os << " " << phi_text(q.phi, decls()) << "\n";
  }
  os << dump_mem(s.mem, decls());
  os << "crashes " << s.crashes << "\n";
  return os.str();
}

std::vector<SysState> replay(const System& sys, const Trace& t, const std::optional<SysState>& from) {
  std::vector<SysState> states{from ? *from : sys.initial()};
  for (std::size_t i = 0; i < t.size(); ++i) {
    try {
      states.push_back(sys.apply(states.back(), t[i]));
    } catch (const std::invalid_argument& e) {
      throw ReplayError(i, sys.transition_to_string(t[i]) + ": " + e.what());
    }
  }
  return states;
}

std::string dump_trace(const System& sys, const Trace& t) {
  std::string out;
  for (const auto& rt : t) out += sys.transition_to_string(rt) + "\n";
  return out;
}

namespace {

struct TraceLineParser {
  const System& sys;
  TokenCursor cur;

  Value number() {
    const Token& t = cur.peek();
    if (t.kind != Token::Number) cur.fail("expected a number");
    cur.next();
    return static_cast<Value>(std::stoul(t.text));
  }
  LocId loc() {
    const Token& t = cur.peek();
    auto x = sys.decls().find_location(t.text);
    if (!x) cur.fail("expected a location");
    cur.next();
    return *x;
  }
  LocMask loc_set() {
    cur.expect("{");
    LocMask m = 0;
    if (!cur.accept("}")) {
      do m |= loc_bit(loc());
      while (cur.accept(","));
      cur.expect("}");
    }
    return m;
  }
  LocalStore store() {
    LocalStore phi(sys.decls().registers.size(), 0);
    cur.expect("{");
    if (!cur.accept("}")) {
      do {
        const Token& t = cur.peek();
        auto r = sys.decls().find_register(t.text);
        if (!r) cur.fail("expected a register");
        cur.next();
        cur.expect(":");
        phi[*r] = number();
      } while (cur.accept(","));
      cur.expect("}");
    }
    return phi;
  }
  std::int32_t method() {
    const Token& t = cur.peek();
    auto m = sys.program().method_index(t.text);
    if (!m) cur.fail("expected a method");
    cur.next();
    return *m;
  }

  ResolvedTransition parse() {
    ResolvedTransition rt;
    if (cur.accept("crash")) {
      rt.kind = TransKind::Crash;
      return rt;
    }
    if (cur.accept("per")) {
      rt.kind = TransKind::Persist;
      PersistChoice c;
      cur.expect("{");
      if (!cur.accept("}")) {
        do {
          const LocId x = loc();
          cur.expect(":");
          c.prefixes.emplace_back(x, number());
        } while (cur.accept(","));
        cur.expect("}");
      }
      std::sort(c.prefixes.begin(), c.prefixes.end());
      rt.payload = std::move(c);
      return rt;
    }
    const Value tid = number();
    if (tid == 0) cur.fail("thread ids start at 1");
    rt.tid = static_cast<ThreadId>(tid - 1);
    const Token head = cur.next();
    const std::string& w = head.text;
    ActionLabel l;
    if (w == "eps") {
      if (cur.accept("goto")) rt.payload = GotoChoice{number()};
      else if (cur.accept("havoc")) rt.payload = HavocChoice{store()};
      return rt;
    }
    if (w == "R" || w == "W") {
      const LocId x = loc();
      l = w == "R" ? ActionLabel::read(x, number()) : ActionLabel::write(x, number());
    } else if (w == "FL") l = ActionLabel::simple(LabelKind::Flush, loc());
    else if (w == "FO") l = ActionLabel::simple(LabelKind::FlushOpt, loc());
    else if (w == "SF") l = ActionLabel::simple(LabelKind::SFence);
    else if (w == "PF") l = ActionLabel::fence_set(LabelKind::PFence, loc_set());
    else if (w == "PB_BEGIN") l = ActionLabel::fence_set(LabelKind::PBBegin, loc_set());
    else if (w == "PB_END") l = ActionLabel::fence_set(LabelKind::PBEnd, loc_set());
    else if (w == "CALL" || w == "RET") {
      l.kind = w == "CALL" ? LabelKind::Call : LabelKind::Ret;
      l.method = method();
      l.phi = store();
    } else if (w == "U") {
      l = ActionLabel::rmw(loc(), 0, 0);
      l.v1 = number();
      l.v2 = number();
    } else if (w == "REX") {
      l = ActionLabel::read_ex(loc(), 0);
      l.v1 = number();
    } else {
      throw SyntaxError(head.line, head.column, "unknown label '" + w + "'");
    }
    rt.label = std::move(l);
    if (cur.accept("nondet")) rt.payload = NondetSf{};
    return rt;
  }
};

}  // namespace

Trace parse_trace(const System& sys, std::string_view text) {
  Trace t;
  int number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++number;
    auto toks = tokenize_line(text.substr(start, end - start), number);
    start = end + 1;
    if (toks.size() <= 1) continue;
    TraceLineParser p{sys, TokenCursor{&toks}};
    t.push_back(p.parse());
    if (!p.cur.at_end()) p.cur.fail("unexpected trailing input");
  }
  return t;
}

namespace {

struct Expanded {
  std::vector<Successor> succ;
  std::vector<std::string> keys;
};

void expand_batch(const System& sys, const std::vector<SysState>& states, std::size_t lo, std::size_t hi,
                  std::vector<Expanded>& out, unsigned jobs) {
  auto work = [&](std::size_t a, std::size_t b) {
    for (std::size_t i = a; i < b; ++i) {
      Expanded& e = out[i - lo];
      e.succ = sys.enabled(states[i]);
      e.keys.resize(e.succ.size());
      for (std::size_t j = 0; j < e.succ.size(); ++j) sys.append_key(e.keys[j], e.succ[j].state);
    }
  };
  if (jobs <= 1 || hi - lo < 64) {
    work(lo, hi);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t n = hi - lo;
  for (unsigned j = 0; j < jobs; ++j) {
    const std::size_t a = lo + n * j / jobs;
    const std::size_t b = lo + n * (j + 1) / jobs;
    pool.emplace_back(work, a, b);
  }
  for (auto& th : pool) th.join();
}

}  // namespace

void Explorer::run(Visitor* v, const std::optional<SysState>& root) {
  root_ = root ? *root : sys_.initial();
  nodes_.assign(1, NodeRef{0, 0});
  transitions_ = 0;
  hit_step_bound_ = hit_state_budget_ = false;
  std::unordered_map<std::string, std::uint32_t> seen;
  seen.emplace(sys_.key(root_), 0);
  if (v) v->on_state(root_, 0);

  std::vector<SysState> frontier{root_};
  std::vector<std::uint32_t> frontier_ids{0};
  const Bounds& b = sys_.bounds();
  const std::size_t batch = 4096;
  std::vector<Expanded> exp;
  for (std::uint32_t depth = 0; !frontier.empty(); ++depth) {
    if (depth >= b.max_steps) {
      for (const auto& s : frontier)
        if (!sys_.enabled(s).empty()) hit_step_bound_ = true;
      return;
    }
    std::vector<SysState> next;
    std::vector<std::uint32_t> next_ids;
    for (std::size_t lo = 0; lo < frontier.size(); lo += batch) {
      const std::size_t hi = std::min(frontier.size(), lo + batch);
      exp.assign(hi - lo, {});
      expand_batch(sys_, frontier, lo, hi, exp, b.jobs);
      for (std::size_t i = lo; i < hi; ++i) {
        Expanded& e = exp[i - lo];
        for (std::size_t j = 0; j < e.succ.size(); ++j) {
          ++transitions_;
          auto [it, fresh] = seen.emplace(std::move(e.keys[j]), static_cast<std::uint32_t>(nodes_.size()));
          if (fresh) {
            nodes_.push_back(NodeRef{frontier_ids[i], static_cast<std::uint32_t>(j)});
            if (v) v->on_state(e.succ[j].state, it->second);
          }
          if (v) v->on_transition(frontier[i], e.succ[j].rt, e.succ[j].state, it->second, fresh);
          if (fresh) {
            next.push_back(std::move(e.succ[j].state));
            next_ids.push_back(it->second);
          }
          if (nodes_.size() >= b.max_states) {
            hit_state_budget_ = true;
            return;
          }
        }
        if (v && !v->keep_going()) return;
      }
    }
    frontier = std::move(next);
    frontier_ids = std::move(next_ids);
  }
}

Trace trace_from_choices(const System& sys, const SysState& root, const std::vector<std::uint32_t>& choices,
                         bool canonical) {
  Trace t;
  SysState s = root;
  ValuePerm to_canon, back;  // s = to_canon(actual state)
  for (auto c : choices) {
    auto succ = sys.enabled(s);
    if (c >= succ.size()) throw std::logic_error("witness choice out of range");
    t.insert(t.end(), succ[c].prefix.begin(), succ[c].prefix.end());
    t.push_back(sys.permute(succ[c].rt, s, back));
    t.insert(t.end(), succ[c].suffix.begin(), succ[c].suffix.end());
    s = std::move(succ[c].state);
    if (canonical) {
      const ValuePerm p = sys.canonicalize(s);
      if (!p.empty()) {
        to_canon = compose(p, to_canon);
        back = invert(to_canon);
      }
    }
  }
  return t;
}

Trace Explorer::witness(std::uint32_t node) const {
  std::vector<std::uint32_t> choices;
  while (node != 0) {
    choices.push_back(nodes_.at(node).choice);
    node = nodes_[node].parent;
  }
  std::reverse(choices.begin(), choices.end());
  return trace_from_choices(sys_, root_, choices);
}

ExploreReport explore(const System& sys) {
  struct Collect : Explorer::Visitor {
    const System& sys;
    ExploreReport& r;
    Collect(const System& s, ExploreReport& rep) : sys(s), r(rep) {}
    void on_state(const SysState& s, std::uint32_t) override { r.nv_memories.insert(sys.nv_values(s.mem)); }
    void on_transition(const SysState&, const ResolvedTransition& rt, const SysState& to, std::uint32_t,
                       bool) override {
      if (rt.kind == TransKind::Crash) r.post_crash_memories.insert(sys.nv_values(to.mem));
    }
  };
  ExploreReport rep;
  Collect c(sys, rep);
  Explorer ex(sys);
  ex.run(&c);
  rep.states = ex.states();
  rep.transitions = ex.transitions();
  rep.hit_step_bound = ex.hit_step_bound();
  rep.hit_state_budget = ex.hit_state_budget();
  return rep;
}

std::set<std::vector<Value>> reachable_nv_memories(const System& sys) { return explore(sys).post_crash_memories; }

Trace random_run(const System& sys, std::uint64_t seed, std::size_t max_steps) {
  std::mt19937_64 rng(seed);
  Trace t;
  SysState s = sys.initial();
  for (std::size_t i = 0; i < max_steps; ++i) {
    auto succ = sys.enabled(s);
    if (succ.empty()) break;
    std::uniform_int_distribution<std::size_t> pick(0, succ.size() - 1);
    auto& chosen = succ[pick(rng)];
    t.push_back(chosen.rt);
    s = std::move(chosen.state);
  }
  return t;
}

}  // namespace pscheck

namespace pscheck {

namespace {

std::uint64_t read_varint(std::string_view b, std::size_t& i) {
  std::uint64_t v = 0;
  for (unsigned shift = 0;; shift += 7) {
    const auto byte = static_cast<unsigned char>(b.at(i++));
    v |= static_cast<std::uint64_t>(byte & 0x7f) << shift;
    if (!(byte & 0x80)) return v;
  }
}

}  // namespace

std::string pack_state(const SysState& s) {
  std::string out;
  out.reserve(64);
  append_varint(out, s.prog.size());
  for (const auto& t : s.prog) {
    append_varint(out, t.pc);
    append_varint(out, static_cast<std::uint64_t>(t.pc_s + 1));
    append_varint(out, static_cast<std::uint64_t>(t.f + 1));
    append_varint(out, t.phi.size());
    for (Value v : t.phi) append_varint(out, v);
  }
  const MemState& m = s.mem;
  append_varint(out, m.nv);
  append_varint(out, m.nvm.size());
  for (std::size_t x = 0; x < m.nvm.size(); ++x) {
    append_varint(out, m.nvm[x]);
    append_varint(out, m.vm[x]);
    append_varint(out, m.buf[x].size());
    for (const auto& e : m.buf[x]) {
      append_varint(out, e.is_fo ? 1 : 0);
      append_varint(out, e.is_fo ? e.tid : e.value);
      append_varint(out, e.block);
    }
  }
  append_varint(out, m.active.size());
  for (BlockId b : m.active) append_varint(out, b);
  append_varint(out, m.bid.size());
  for (const auto& b : m.bid) {
    append_varint(out, b.id);
    append_varint(out, b.locs);
  }
  append_varint(out, m.next_block);
  append_varint(out, s.crashes);
  append_varint(out, s.nondet_sf);
  append_varint(out, s.per_run);
  return out;
}

SysState unpack_state(std::string_view b) {
  std::size_t i = 0;
  auto next = [&]() { return read_varint(b, i); };
  SysState s;
  s.prog.resize(next());
  for (auto& t : s.prog) {
    t.pc = static_cast<std::uint32_t>(next());
    t.pc_s = static_cast<std::int32_t>(next()) - 1;
    t.f = static_cast<std::int32_t>(next()) - 1;
    t.phi.resize(next());
    for (auto& v : t.phi) v = static_cast<Value>(next());
  }
  MemState& m = s.mem;
  m.nv = next();
  const std::size_t n = next();
  m.nvm.resize(n);
  m.vm.resize(n);
  m.buf.resize(n);
  for (std::size_t x = 0; x < n; ++x) {
    m.nvm[x] = static_cast<Value>(next());
    m.vm[x] = static_cast<Value>(next());
    m.buf[x].resize(next());
    for (auto& e : m.buf[x]) {
      e.is_fo = next() != 0;
      const auto v = next();
      if (e.is_fo) {
        e.tid = static_cast<ThreadId>(v);
      } else {
        e.value = static_cast<Value>(v);
      }
      e.block = static_cast<BlockId>(next());
    }
  }
  m.active.resize(next());
  for (auto& a : m.active) a = static_cast<BlockId>(next());
  m.bid.resize(next());
  for (auto& bi : m.bid) {
    bi.id = static_cast<BlockId>(next());
    bi.locs = next();
  }
  m.next_block = static_cast<BlockId>(next());
  s.crashes = static_cast<std::uint32_t>(next());
  s.nondet_sf = static_cast<std::uint32_t>(next());
  s.per_run = static_cast<std::uint32_t>(next());
  return s;
}

}  // namespace pscheck
