#include "pscheck/refine.hpp"

#include "pscheck/visited.hpp"

#include <algorithm>
#include <numeric>
#include <chrono>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "pscheck/parser.hpp"

namespace pscheck {

// ---------------------------------------------------------------- MGC

namespace {

constexpr std::uint32_t kEndTarget = 0xffffffffU;

Instruction make_ins(InstrKind k) {
  Instruction i;
  i.kind = k;
  return i;
}

Instruction jump(std::vector<std::uint32_t> targets, Expr cond = Expr::constant(1)) {
  Instruction i = make_ins(InstrKind::IfGoto);
  i.e1 = std::move(cond);
  i.targets = std::move(targets);
  return i;
}

Instruction call(const std::string& m) {
  Instruction i = make_ins(InstrKind::Call);
  i.method = m;
  return i;
}

Expr reg_compare(RegId r, const char* op) {
  return parse_expr_text(std::string("v ") + op + " 0",
                         [r](std::string_view n) -> std::optional<std::uint32_t> {
                           if (n == "v") return r;
                           return std::nullopt;
                         });
}

std::string fresh_location(const Decls& d, const std::string& base) {
  std::string name = base;
  for (int i = 2; d.find_location(name); ++i) name = base + "_" + std::to_string(i);
  return name;
}

void emit_free_body(InstrSeq& code, const MethodSet& methods, std::uint32_t calls) {
  const std::size_t first = code.size();
  for (std::uint32_t k = 0; k < calls; ++k) {
    const auto b = static_cast<std::uint32_t>(code.size());
    const auto next_b = b + 1 + 3 * static_cast<std::uint32_t>(methods.size());
    std::vector<std::uint32_t> targets;
    for (std::uint32_t j = 0; j < methods.size(); ++j) targets.push_back(b + 1 + 3 * j);
    targets.push_back(kEndTarget);
    code.push_back(jump(std::move(targets)));
    for (const auto& m : methods) {
      code.push_back(make_ins(InstrKind::Havoc));
      code.push_back(call(m));
      code.push_back(jump({k + 1 == calls ? kEndTarget : next_b}));
    }
  }
  const auto end = static_cast<std::uint32_t>(code.size());
  for (std::size_t i = first; i < code.size(); ++i)
    for (auto& t : code[i].targets)
      if (t == kEndTarget) t = end;
}

}  // namespace

ConcurrentProgram build_mgc(const Library& lib, const MgcConfig& cfg) {
  ConcurrentProgram p;
  p.decls.registers = lib.decls.registers;
  p.decls.arguments = lib.decls.arguments;
  if (!cfg.havoc_registers.empty()) {
    p.decls.arguments.clear();
    for (const auto& name : cfg.havoc_registers) {
      auto r = p.decls.find_register(name);
      if (!r) throw InputError("havoc register '" + name + "' is not declared");
      p.decls.arguments.push_back(*r);
    }
    std::sort(p.decls.arguments.begin(), p.decls.arguments.end());
    p.decls.arguments.erase(std::unique(p.decls.arguments.begin(), p.decls.arguments.end()), p.decls.arguments.end());
  }

  MethodSet loop;
  for (const auto& m : lib.methods) {
    const bool is_recover = cfg.kind == MgcKind::Rec &&
                            std::find(cfg.recover.begin(), cfg.recover.end(), m.name) != cfg.recover.end();
    if (!is_recover) loop.push_back(m.name);
  }
  if (loop.empty() && cfg.calls > 0) throw InputError("the library has no methods for the client to call");

  InstrSeq prefix;
  if (cfg.kind == MgcKind::Rec) {
    if (cfg.recover.empty()) throw InputError("a recovering client needs a recovery method");
    for (const auto& r : cfg.recover)
      if (!lib.find(r)) throw InputError("library has no method '" + r + "'");
    if (p.decls.registers.empty()) p.decls.add_register("mgc_r");
    const RegId r = 0;
    const LocId elect = p.decls.add_location(fresh_location(lib.decls, "mgc_l1"), Durability::Volatile);
    const LocId done = p.decls.add_location(fresh_location(lib.decls, "mgc_l2"), Durability::Volatile);

    Instruction cas = make_ins(InstrKind::Cas);
    cas.reg = r;
    cas.loc = elect;
    cas.e1 = Expr::constant(0);
    cas.e2 = Expr::constant(1);
    prefix.push_back(cas);
    const auto n_rec = static_cast<std::uint32_t>(cfg.recover.size());
    const std::uint32_t wait = 2 + n_rec + 2;
    prefix.push_back(jump({wait}, reg_compare(r, "!=")));
    for (const auto& m : cfg.recover) prefix.push_back(call(m));
    Instruction st = make_ins(InstrKind::Store);
    st.loc = done;
    st.e1 = Expr::constant(1);
    prefix.push_back(st);
    prefix.push_back(jump({wait + 2}));
    Instruction ld = make_ins(InstrKind::Load);
    ld.reg = r;
    ld.loc = done;
    prefix.push_back(ld);
    prefix.push_back(jump({wait}, reg_compare(r, "==")));
  }

  for (std::uint32_t t = 0; t < cfg.threads; ++t) {
    InstrSeq code = prefix;
    emit_free_body(code, loop, cfg.calls);
    p.threads.push_back(std::move(code));
  }
  return p;
}

ConcurrentProgram mgc_program(const Library& lib, const MgcConfig& cfg) {
  ConcurrentProgram out = link(build_mgc(lib, cfg), lib);
  return out;
}

void unify_registers(Library& a, Library& b) {
  Decls u;
  for (const auto* d : {&a.decls, &b.decls})
    for (const auto& r : d->registers) u.add_register(r);
  std::vector<RegId> window;
  for (const auto* d : {&a.decls, &b.decls})
    for (RegId r : d->havoc_window()) window.push_back(*u.find_register(d->registers[r]));
  std::sort(window.begin(), window.end());
  window.erase(std::unique(window.begin(), window.end()), window.end());
  for (Library* l : {&a, &b}) {
    Decls t = l->decls;
    t.registers = u.registers;
    t.arguments = window;
    remap_to(*l, t);
  }
}

Library prefix_library(const Library& lib, const std::string& prefix) {
  Library out = lib;
  for (auto& loc : out.decls.locations) loc.name = prefix + loc.name;
  for (auto& m : out.methods) m.name = prefix + m.name;
  return out;
}

Library library_union(const Library& a, const Library& b) {
  for (const auto& loc : a.decls.locations)
    if (b.decls.find_location(loc.name)) throw InputError("libraries share location '" + loc.name + "'");
  for (const auto& m : a.methods)
    if (b.find(m.name)) throw InputError("libraries share method '" + m.name + "'");
  Library out;
  out.decls = merge_decls({&a.decls, &b.decls});
  Library aa = a;
  Library bb = b;
  remap_to(aa, out.decls);
  remap_to(bb, out.decls);
  out.methods = aa.methods;
  out.methods.insert(out.methods.end(), bb.methods.begin(), bb.methods.end());
  return out;
}

// ---------------------------------------------------------------- spec model

SpecModel::SpecModel(const System& sys, const MethodSet& f, bool ignore_sf)
    : sys_(sys), proj_(sys, f), ignore_sf_(ignore_sf) {
  label_ids_.emplace("", 0);
  macros_.emplace_back();
  macro_ids_.emplace("", 0);
}

std::optional<HistoryLabel> SpecModel::project(const ResolvedTransition& rt) const {
  auto l = proj_.project(rt);
  if (l && ignore_sf_ && l->kind == HistoryLabel::Sf) return std::nullopt;
  return l;
}

std::uint32_t SpecModel::intern_state(SysState s) {
  auto [it, fresh] = state_ids_.emplace(sys_.key(s), static_cast<std::uint32_t>(states_.size()));
  if (fresh) {
    states_.push_back(std::move(s));
    edges_.emplace_back();
    expanded_.push_back(false);
    if (states_.size() >= sys_.bounds().max_states) throw BudgetExceeded("spec side: state budget exhausted");
  }
  return it->second;
}

std::uint32_t SpecModel::intern_label(const HistoryLabel& l) {
  return label_ids_.emplace(l.key(), static_cast<std::uint32_t>(label_ids_.size())).first->second;
}

const std::vector<SpecModel::Edge>& SpecModel::edges(std::uint32_t id) {
  if (!expanded_[id]) {
    const SysState s = states_[id];
    std::vector<Edge> out;
    for (auto& succ : sys_.enabled(s)) {
      const auto l = project(succ.rt);
      const std::uint32_t lid = l ? intern_label(*l) : 0;
      const std::uint32_t to = intern_state(std::move(succ.state));
      out.push_back({lid, to});
    }
    std::sort(out.begin(), out.end(), [](const Edge& a, const Edge& b) {
      return a.label != b.label ? a.label < b.label : a.to < b.to;
    });
    out.erase(std::unique(out.begin(), out.end(),
                          [](const Edge& a, const Edge& b) { return a.label == b.label && a.to == b.to; }),
              out.end());
    edges_[id] = std::move(out);
    expanded_[id] = true;
  }
  return edges_[id];
}

std::uint32_t SpecModel::close(std::vector<std::uint32_t> seeds) {
  std::unordered_set<std::uint32_t> seen(seeds.begin(), seeds.end());
  std::vector<std::uint32_t> stack(seen.begin(), seen.end());
  while (!stack.empty()) {
    const std::uint32_t s = stack.back();
    stack.pop_back();
    for (const Edge& e : edges(s)) {
      if (e.label != 0) break;  // silent edges sort first
      if (seen.insert(e.to).second) stack.push_back(e.to);
    }
  }
  std::vector<std::uint32_t> members(seen.begin(), seen.end());
  std::sort(members.begin(), members.end());
  std::string key;
  for (auto m : members) append_varint(key, m);
  auto [it, fresh] = macro_ids_.emplace(std::move(key), static_cast<std::uint32_t>(macros_.size()));
  if (fresh) macros_.push_back(std::move(members));
  return it->second;
}

std::uint32_t SpecModel::root_macro(const std::vector<SysState>& roots) {
  std::vector<std::uint32_t> seeds;
  for (const auto& s : roots) seeds.push_back(intern_state(s));
  return close(std::move(seeds));
}

std::uint32_t SpecModel::step(std::uint32_t macro, const HistoryLabel& l) {
  const std::uint32_t lid = intern_label(l);
  const std::uint64_t ck = (static_cast<std::uint64_t>(macro) << 32) | lid;
  if (auto it = step_cache_.find(ck); it != step_cache_.end()) return it->second;
  std::vector<std::uint32_t> seeds;
  const std::vector<std::uint32_t> members = macros_[macro];
  for (auto s : members)
    for (const Edge& e : edges(s))
      if (e.label == lid) seeds.push_back(e.to);
  const std::uint32_t out = seeds.empty() ? kEmpty : close(std::move(seeds));
  step_cache_.emplace(ck, out);
  return out;
}

std::uint32_t SpecModel::permute(std::uint32_t macro, const ValuePerm& p) {
  if (p.empty() || macro == kEmpty) return macro;
  std::string ck;
  append_varint(ck, macro);
  for (Value v : p) append_varint(ck, v);
  if (auto it = perm_cache_.find(ck); it != perm_cache_.end()) return it->second;
  std::vector<std::uint32_t> members;
  for (auto id : std::vector<std::uint32_t>(macros_[macro])) members.push_back(intern_state(sys_.permute(states_[id], p)));
  std::sort(members.begin(), members.end());
  std::string key;
  for (auto m : members) append_varint(key, m);
  auto [it, fresh] = macro_ids_.emplace(std::move(key), static_cast<std::uint32_t>(macros_.size()));
  if (fresh) macros_.push_back(std::move(members));
  perm_cache_.emplace(std::move(ck), it->second);
  return it->second;
}

// ---------------------------------------------------------------- product

namespace {

using Clock = std::chrono::steady_clock;

struct ProductRoot {
  SysState impl;
  std::uint32_t macro = 0;
};

struct NodeFailure {
  std::string reason;
  Trace suffix;  // extra steps from the node that expose the failure
};

// nullopt when the node is fine.
using NodeCheck = std::function<std::optional<NodeFailure>(const SysState&, std::uint32_t)>;

struct ProductFailure {
  std::size_t root = 0;
  std::vector<std::uint32_t> choices;
  std::string reason;
  Trace suffix;
  Trace trace;  // the run from the root, suffix included
  bool unmatched_label = false;  // the last label of the path has no spec match
};

struct ProductResult {
  std::optional<ProductFailure> failure;
  std::size_t nodes = 0;
  bool hit_step_bound = false;
};

constexpr std::uint32_t kRootParent = 0xffffffffU;

ValuePerm identity_perm(Value n) {
  ValuePerm p(n);
  std::iota(p.begin(), p.end(), Value{0});
  return p;
}

// Among the renamings p followed by any shuffle of the values from `named`
// up (all give the same canonical impl state), the one with least macro id.
std::pair<std::uint32_t, ValuePerm> least_renaming(SpecModel& spec, std::uint32_t macro, const ValuePerm& p,
                                                   Value named) {
  std::pair<std::uint32_t, ValuePerm> best{spec.permute(macro, p), p};
  ValuePerm tail = identity_perm(static_cast<Value>(p.size()));
  while (std::next_permutation(tail.begin() + named, tail.end())) {
    ValuePerm q = compose(tail, p);
    const std::uint32_t m = spec.permute(macro, q);
    if (m < best.first) best = {m, std::move(q)};
  }
  return best;
}

// With `canonical`, impl states are kept up to value renaming and the macro
// state follows the renaming; failure choices then refer to canonical states.
ProductResult run_product(const System& impl, SpecModel& spec, const std::vector<ProductRoot>& roots,
                          const NodeCheck& check, bool canonical = false) {
  ProductResult res;
  std::vector<NodeRef> nodes;
  VisitedSet seen;
  struct Item {
    std::string s;  // pack_state form
    std::uint32_t macro;
    std::uint32_t id;
  };
  std::vector<Item> frontier;
  auto key_of = [&](const SysState& s, std::uint32_t macro) {
    std::string k;
    impl.append_key(k, s);
    append_varint(k, macro);
    return k;
  };
  // Successor j of (s, macro): its label, and the next node after renaming.
  // Returns the renaming applied to the successor state.
  auto advance = [&](Successor& succ, std::uint32_t& macro, std::optional<HistoryLabel>& l) {
    l = spec.project(succ.rt);
    if (l) macro = spec.step(macro, *l);
    if (!canonical || macro == SpecModel::kEmpty) return ValuePerm{};
    Value named = 0;
    ValuePerm p = impl.canonicalize(succ.state, &named);
    if (p.empty()) p = identity_perm(impl.bounds().max_value + 1);
    auto [m, q] = least_renaming(spec, macro, p, named);
    macro = m;
    if (q != p) succ.state = impl.permute(succ.state, compose(q, invert(p)));
    return q;
  };
  auto fail = [&](std::uint32_t node, std::string reason, Trace suffix = {}) {
    ProductFailure f;
    f.suffix = std::move(suffix);
    while (nodes[node].parent != kRootParent) {
      f.choices.push_back(nodes[node].choice);
      node = nodes[node].parent;
    }
    f.root = nodes[node].choice;
    std::reverse(f.choices.begin(), f.choices.end());
    f.reason = std::move(reason);
    // Walk the path again, mapping each step back to the run from the root.
    SysState s = roots[f.root].impl;
    std::uint32_t macro = roots[f.root].macro;
    ValuePerm to_canon, back;
    for (auto c : f.choices) {
      auto succ = impl.enabled(s);
      f.trace.insert(f.trace.end(), succ[c].prefix.begin(), succ[c].prefix.end());
      f.trace.push_back(impl.permute(succ[c].rt, s, back));
      f.trace.insert(f.trace.end(), succ[c].suffix.begin(), succ[c].suffix.end());
      std::optional<HistoryLabel> l;
      const ValuePerm q = advance(succ[c], macro, l);
      s = std::move(succ[c].state);
      if (!q.empty()) {
        to_canon = compose(q, to_canon);
        back = invert(to_canon);
      }
    }
    for (const auto& rt : f.suffix) f.trace.push_back(back.empty() ? rt : impl.permute(rt, s, back));
    res.failure = std::move(f);
    res.nodes = nodes.size();
  };

  for (std::size_t i = 0; i < roots.size(); ++i) {
    if (!seen.insert(key_of(roots[i].impl, roots[i].macro))) continue;
    nodes.push_back(NodeRef{kRootParent, static_cast<std::uint32_t>(i)});
    const auto id = static_cast<std::uint32_t>(nodes.size() - 1);
    if (roots[i].macro == SpecModel::kEmpty) {
      fail(id, "the spec side has no initial state");
      return res;
    }
    if (check) {
      if (auto why = check(roots[i].impl, roots[i].macro)) {
        fail(id, why->reason, why->suffix);
        return res;
      }
    }
    frontier.push_back({pack_state(roots[i].impl), roots[i].macro, id});
  }

  const Bounds& b = impl.bounds();
  for (std::uint32_t depth = 0; !frontier.empty(); ++depth) {
    if (depth >= b.max_steps) {
      for (const auto& it : frontier)
        if (!impl.enabled(unpack_state(it.s)).empty()) res.hit_step_bound = true;
      break;
    }
    std::vector<Item> next;
    for (auto& it : frontier) {
      auto succ = impl.enabled(unpack_state(it.s));
      std::string().swap(it.s);
      for (std::uint32_t j = 0; j < succ.size(); ++j) {
        std::uint32_t macro = it.macro;
        std::optional<HistoryLabel> l;
        advance(succ[j], macro, l);
        if (!seen.insert(key_of(succ[j].state, macro))) continue;
        nodes.push_back(NodeRef{it.id, j});
        const auto id = static_cast<std::uint32_t>(nodes.size() - 1);
        if (macro == SpecModel::kEmpty) {
          fail(id, "the spec side cannot match " + history_to_string({*l}, impl.decls()));
          res.failure->unmatched_label = true;
          return res;
        }
        if (check) {
          if (auto why = check(succ[j].state, macro)) {
            fail(id, why->reason, why->suffix);
            return res;
          }
        }
        if (nodes.size() >= b.max_states) throw BudgetExceeded("product search: state budget exhausted");
        next.push_back({pack_state(succ[j].state), macro, id});
      }
    }
    frontier = std::move(next);
  }
  res.nodes = nodes.size();
  return res;
}

std::uint32_t crash_count(const History& h) {
  return static_cast<std::uint32_t>(
      std::count_if(h.begin(), h.end(), [](const HistoryLabel& l) { return l.kind == HistoryLabel::Crash; }));
}

Bounds spec_bounds(const Bounds& b) {
  Bounds s = b;
  s.max_nondet_sf = kUnbounded;
  return s;
}

Bounds reduced(Bounds b, bool on) {
  b.lazy_persist = on;
  b.partial_order = on;
  b.forget_unobservable = on;
  return b;
}

void check_same_domain(const Library& a, const Library& b) {
  auto na = a.method_names();
  auto nb = b.method_names();
  std::sort(na.begin(), na.end());
  std::sort(nb.begin(), nb.end());
  if (na != nb) throw InputError("implementation and specification define different methods");
}

// Fills the counterexample and re-checks it independently of the product.
void finish_counterexample(Verdict& v, const System& impl, const SysState& start, const ProductFailure& f,
                           const MethodSet& methods, const ConcurrentProgram& spec_prog, bool verify,
                           bool canonical) {
  Counterexample c;
  c.start = start;
  c.trace = f.trace;
  c.history = history_of(impl, c.trace, methods);
  c.trace_text = dump_trace(impl, c.trace);
  c.reason = f.reason;
  if (canonical && f.unmatched_label && !c.history.empty())
    c.reason = "the spec side cannot match " + history_to_string({c.history.back()}, impl.decls());
  if (verify) {
    const auto states = replay(impl, c.trace, start);
    (void)states;
    Bounds sb = spec_bounds(impl.bounds());
    sb.max_crashes = std::max(sb.max_crashes, crash_count(c.history));
    const System spec(spec_prog, sb);
    if (find_history_witness(spec, methods, c.history))
      throw std::logic_error("counterexample history is produced by the specification");
    v.notes.push_back("counterexample replays; history search over the specification finds no witness");
  }
  v.cex = std::move(c);
}

}  // namespace

Verdict check_refines(const Library& impl_lib, const Library& spec_lib, const RefineOptions& opt) {
  const auto t0 = Clock::now();
  check_same_domain(impl_lib, spec_lib);
  Library a = impl_lib;
  Library b = spec_lib;
  unify_registers(a, b);
  const ConcurrentProgram ip = mgc_program(a, opt.mgc);
  const ConcurrentProgram sp = mgc_program(b, opt.mgc);
  System impl(ip, reduced(opt.bounds, opt.reduce));
  System spec(sp, spec_bounds(reduced(opt.bounds, opt.reduce)));
  // Both MGCs share their client code, so one typing covers the labels of both.
  bool canonical = false;
  if (opt.reduce && opt.symmetry) {
    auto typing = std::make_shared<const DataTyping>(
        std::vector<const ConcurrentProgram*>{&impl.program(), &spec.program()});
    impl.use_typing(typing, 0);
    spec.use_typing(typing, 1);
    canonical = impl.has_typing() && spec.has_typing();
    if (!canonical) {
      impl.use_typing(nullptr, 0);
      spec.use_typing(nullptr, 0);
    }
  }
  const MethodSet f = a.method_names();
  SpecModel model(spec, f);

  Verdict v;
  v.bounds = opt.bounds;
  const std::vector<ProductRoot> roots{{impl.initial(), model.root_macro({spec.initial()})}};
  const ProductResult r = run_product(impl, model, roots, nullptr, canonical);
  v.holds = !r.failure;
  v.stats.product_nodes = r.nodes;
  v.stats.hit_step_bound = r.hit_step_bound;
  if (r.failure) finish_counterexample(v, impl, roots[0].impl, *r.failure, f, sp, opt.verify, canonical);
  v.stats.spec_states = model.num_states();
  v.stats.macros = model.num_macros();
  v.stats.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return v;
}

Verdict check_policy(const ConcurrentProgram& client, const Library& lib, const RefineOptions& opt) {
  const auto t0 = Clock::now();
  ConcurrentProgram cl = client;
  if (cl.decls.registers.empty() && lib.decls.registers.empty()) cl.decls.add_register("mgc_r");
  const ConcurrentProgram ip = link(cl, lib);

  // The MGC works over the client's register table and may set any register.
  Library l = lib;
  Decls t = l.decls;
  t.registers = ip.decls.registers;
  t.arguments.clear();
  remap_to(l, t);
  MgcConfig cfg = opt.mgc;
  cfg.threads = static_cast<std::uint32_t>(ip.threads.size());
  for (const auto& code : ip.threads) {
    const auto calls = static_cast<std::uint32_t>(
        std::count_if(code.begin(), code.end(), [](const Instruction& i) { return i.kind == InstrKind::Call; }));
    cfg.calls = std::max(cfg.calls, calls);
  }
  cfg.havoc_registers = ip.decls.registers;
  const ConcurrentProgram sp = mgc_program(l, cfg);

  const System impl(ip, reduced(opt.bounds, opt.reduce));
  const System spec(sp, spec_bounds(reduced(opt.bounds, opt.reduce)));
  const MethodSet f = lib.method_names();
  SpecModel model(spec, f);

  Verdict v;
  v.bounds = opt.bounds;
  const std::vector<ProductRoot> roots{{impl.initial(), model.root_macro({spec.initial()})}};
  const ProductResult r = run_product(impl, model, roots, nullptr);
  v.holds = !r.failure;
  v.stats.product_nodes = r.nodes;
  v.stats.hit_step_bound = r.hit_step_bound;
  if (r.failure) finish_counterexample(v, impl, roots[0].impl, *r.failure, f, sp, opt.verify, false);
  v.stats.spec_states = model.num_states();
  v.stats.macros = model.num_macros();
  v.stats.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return v;
}

// ---------------------------------------------------------------- simulation

SimRelation::SimRelation(const std::string& text, const Decls& impl, const Decls& spec) : text_(text) {
  auto nv = [](const Decls& d, std::string_view n) -> std::optional<LocId> {
    auto x = d.find_location(n);
    if (x && d.is_nv(*x)) return x;
    return std::nullopt;
  };
  auto var = [this](bool is_impl, LocId x) -> std::uint32_t {
    auto& v = is_impl ? impl_locs_ : spec_locs_;
    auto it = std::find(v.begin(), v.end(), x);
    if (it == v.end()) {
      v.push_back(x);
      it = v.end() - 1;
    }
    const auto i = static_cast<std::uint32_t>(it - v.begin());
    // Spec variables are numbered after all impl locations.
    return is_impl ? i : 64 + i;
  };
  auto resolve = [&](std::string_view n) -> std::optional<std::uint32_t> {
    auto strip = [&](std::string_view prefix) -> std::optional<std::string_view> {
      if (n.substr(0, prefix.size()) == prefix) return n.substr(prefix.size());
      return std::nullopt;
    };
    if (auto s = strip("impl.")) {
      if (auto x = nv(impl, *s)) return var(true, *x);
      return std::nullopt;
    }
    if (auto s = strip("spec.")) {
      if (auto x = nv(spec, *s)) return var(false, *x);
      return std::nullopt;
    }
    if (!n.empty() && n.back() == '#') {
      if (auto x = nv(spec, n.substr(0, n.size() - 1))) return var(false, *x);
      return std::nullopt;
    }
    if (auto x = nv(impl, n)) return var(true, *x);
    if (n.size() > 1) {
      const auto stem = n.substr(0, n.size() - 1);
      if (n.back() == 'n')
        if (auto x = nv(impl, stem)) return var(true, *x);
      if (n.back() == 's')
        if (auto x = nv(spec, stem)) return var(false, *x);
    }
    if (auto x = nv(spec, n)) return var(false, *x);
    return std::nullopt;
  };
  expr_ = parse_expr_text(text, resolve);
}

bool SimRelation::operator()(const MemState& impl, const MemState& spec) const {
  std::vector<Value> vars(64 + spec_locs_.size(), 0);
  for (std::size_t i = 0; i < impl_locs_.size(); ++i) vars[i] = impl.nvm[impl_locs_[i]];
  for (std::size_t i = 0; i < spec_locs_.size(); ++i) vars[64 + i] = spec.nvm[spec_locs_[i]];
  return eval(expr_, vars) != 0;
}

namespace {

std::string values_text(const System& sys, const std::vector<Value>& vals) {
  std::string s = "{";
  std::size_t i = 0;
  const Decls& d = sys.decls();
  for (std::size_t x = 0; x < d.locations.size(); ++x) {
    if (!d.is_nv(static_cast<LocId>(x))) continue;
    s += (i ? ", " : "") + d.locations[x].name + "=" + std::to_string(vals[i]);
    ++i;
  }
  return s + "}";
}

}  // namespace

Verdict check_simulation(const Library& impl_lib, const Library& spec_lib, const std::string& relation,
                         const SimOptions& opt) {
  const auto t0 = Clock::now();
  check_same_domain(impl_lib, spec_lib);
  Library a = impl_lib;
  Library b = spec_lib;
  unify_registers(a, b);
  const ConcurrentProgram ip = mgc_program(a, opt.refine.mgc);
  const ConcurrentProgram sp = mgc_program(b, opt.refine.mgc);
  Bounds ib = reduced(opt.refine.bounds, opt.refine.reduce);
  const std::uint32_t eras = ib.max_crashes;
  ib.max_crashes = 0;
  ib.forget_unobservable = false;  // the relation reads persistent values
  // The spec side keeps every persist placement: related memories are
  // looked up among its states.
  Bounds sb = spec_bounds(ib);
  sb.lazy_persist = false;
  sb.partial_order = false;
  sb.forget_unobservable = false;
  const System impl(ip, ib);
  const System spec(sp, sb);
  const SimRelation rel(relation, ip.decls, sp.decls);
  const MethodSet f = a.method_names();
  SpecModel model(spec, f, opt.ignore_sf);

  Verdict v;
  v.bounds = opt.refine.bounds;
  if (!rel(impl.initial().mem, spec.initial().mem))
    throw InputError("the relation does not hold on the initial memories");

  using Pair = std::pair<std::vector<Value>, std::vector<Value>>;
  std::set<Pair> done;  // pairs already checked with the relation obligation
  std::set<Pair> current{{impl.nv_values(impl.initial().mem), spec.nv_values(spec.initial().mem)}};
  std::size_t nodes = 0;
  for (std::uint32_t era = 0; era <= eras && !current.empty(); ++era) {
    const bool need_rel = era < eras;
    std::vector<Pair> todo;
    for (const auto& p : current)
      if (!done.count(p)) todo.push_back(p);
    std::vector<ProductRoot> roots;
    for (const auto& [iv, sv] : todo) roots.push_back({impl.initial_with_nvm(iv), model.root_macro({spec.initial_with_nvm(sv)})});

    std::set<Pair> next;
    std::unordered_set<std::string> checked;
    NodeCheck check;
    if (need_rel) {
      check = [&](const SysState& s, std::uint32_t macro) -> std::optional<NodeFailure> {
        for (auto& img : impl.crash_images(s)) {
          const auto iv = impl.nv_values(img.mem);
          std::string k;
          append_varint(k, macro);
          for (Value x : iv) append_varint(k, x);
          if (!checked.insert(std::move(k)).second) continue;
          bool any = false;
          for (auto id : model.members(macro)) {
            const SysState& t = model.state(id);
            if (rel(img.mem, t.mem)) {
              any = true;
              next.emplace(iv, spec.nv_values(t.mem));
            }
          }
          if (!any)
            return NodeFailure{"no matching spec run ends in a related memory (impl " + values_text(impl, iv) + ")",
                               std::move(img.persists)};
        }
        return std::nullopt;
      };
    }
    const ProductResult r = run_product(impl, model, roots, check);
    nodes += r.nodes;
    v.stats.hit_step_bound = v.stats.hit_step_bound || r.hit_step_bound;
    v.notes.push_back("era " + std::to_string(era) + ": " + std::to_string(todo.size()) + " start pairs, " +
                      std::to_string(r.nodes) + " product nodes");
    if (r.failure) {
      const auto& [iv, sv] = todo[r.failure->root];
      v.notes.push_back("failing start pair: impl " + values_text(impl, iv) + ", spec " + values_text(spec, sv));
      Counterexample c;
      c.start = roots[r.failure->root].impl;
      c.trace = r.failure->trace;
      c.history = history_of(impl, c.trace, f);
      c.trace_text = dump_trace(impl, c.trace);
      c.reason = r.failure->reason;
      replay(impl, c.trace, c.start);
      v.cex = std::move(c);
      break;
    }
    if (need_rel) done.insert(todo.begin(), todo.end());
    current = std::move(next);
  }
  v.holds = !v.cex;
  v.stats.product_nodes = nodes;
  v.stats.spec_states = model.num_states();
  v.stats.macros = model.num_macros();
  v.stats.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return v;
}

// ---------------------------------------------------------------- composition

ConcurrentProgram compose_program(const ConcurrentProgram& cl_prog, const ConcurrentProgram& lib_prog,
                                  const MethodSet& f) {
  if (cl_prog.decls.registers != lib_prog.decls.registers)
    throw InputError("client and library programs must declare the same registers in the same order");
  auto in_f = [&](const std::string& n) { return std::find(f.begin(), f.end(), n) != f.end(); };
  ConcurrentProgram client = cl_prog;
  client.methods.clear();
  for (const auto& m : cl_prog.methods)
    if (!in_f(m.name)) client.methods.push_back(m);
  Library lib;
  lib.decls = lib_prog.decls;
  for (const auto& name : f) {
    auto idx = lib_prog.method_index(name);
    if (!idx) throw InputError("library program has no method '" + name + "'");
    lib.methods.push_back(lib_prog.methods[static_cast<std::size_t>(*idx)]);
  }
  return link(client, lib);
}

namespace {

struct Translator {
  const System& from;
  const System& to;
  std::vector<std::optional<LocId>> locs;
  std::vector<std::optional<std::int32_t>> methods;

  Translator(const System& a, const System& b) : from(a), to(b) {
    for (const auto& l : a.decls().locations) locs.push_back(b.decls().find_location(l.name));
    for (const auto& m : a.program().methods) methods.push_back(b.program().method_index(m.name));
  }
  LocId loc(LocId x) const {
    if (!locs[x]) throw InputError("location '" + from.decls().loc_name(x) + "' is unknown to the target");
    return *locs[x];
  }
  LocMask mask(LocMask m) const {
    LocMask out = 0;
    for_each_loc(m, [&](LocId x) { out |= loc_bit(loc(x)); });
    return out;
  }
  ResolvedTransition thread_step(const ResolvedTransition& rt) const {
    ResolvedTransition out = rt;
    if (out.label) {
      ActionLabel& l = *out.label;
      switch (l.kind) {
        case LabelKind::PFence: case LabelKind::PBBegin: case LabelKind::PBEnd:
          l.set = mask(l.set);
          break;
        case LabelKind::Call: case LabelKind::Ret:
          if (!methods[static_cast<std::size_t>(l.method)]) throw InputError("method unknown to the target");
          l.method = *methods[static_cast<std::size_t>(l.method)];
          break;
        case LabelKind::SFence:
          break;
        default:
          l.loc = loc(l.loc);
      }
    }
    return out;
  }
  // Persist prefixes restricted to `keep` (a mask over `from`), translated.
  std::optional<ResolvedTransition> persist(const ResolvedTransition& rt, LocMask keep) const {
    PersistChoice c;
    for (const auto& [x, n] : std::get<PersistChoice>(rt.payload).prefixes)
      if (mask_has(keep, x)) c.prefixes.emplace_back(loc(x), n);
    if (c.empty()) return std::nullopt;
    std::sort(c.prefixes.begin(), c.prefixes.end());
    ResolvedTransition out;
    out.kind = TransKind::Persist;
    out.payload = std::move(c);
    return out;
  }
  // Memory restricted to `keep`, re-indexed over the target table; block
  // ids are shifted by `offset`.
  MemState mem(const MemState& m, LocMask keep, BlockId offset) const {
    MemState r = mem_init(to.decls(), to.program().threads.size());
    auto shift = [&](BlockId b) { return b == kNoBlock ? kNoBlock : b + offset; };
    for_each_loc(keep, [&](LocId x) {
      const LocId y = loc(x);
      r.nvm[y] = m.nvm[x];
      r.vm[y] = m.vm[x];
      r.buf[y] = m.buf[x];
      for (auto& e : r.buf[y]) e.block = shift(e.block);
      for (std::size_t t = 0; t < m.num_threads(); ++t)
        r.active_at(static_cast<ThreadId>(t), y) = shift(m.active_at(static_cast<ThreadId>(t), x));
    });
    for (const auto& b : m.bid)
      if (mask_subset(b.locs, keep)) r.bid.push_back({shift(b.id), mask(b.locs)});
    std::sort(r.bid.begin(), r.bid.end());
    return r;
  }
};

struct Segments {
  std::vector<std::vector<std::pair<ResolvedTransition, bool>>> parts;  // step, thread inside F before it
  std::vector<std::pair<ResolvedTransition, bool>> syncs;
  History history;
  SysState final_state;
};

Segments split(const System& sys, const Trace& t, const MethodSet& f) {
  HistoryProjector proj(sys, f);
  Segments s;
  s.parts.emplace_back();
  SysState cur = sys.initial();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& rt = t[i];
    bool inside = false;
    if (rt.kind == TransKind::Thread) {
      if (rt.tid >= cur.prog.size()) throw ReplayError(i, "no such thread");
      inside = proj.in_f(cur.prog[rt.tid].f);
    }
    try {
      cur = sys.apply(cur, rt);
    } catch (const std::invalid_argument& e) {
      throw ReplayError(i, sys.transition_to_string(rt) + ": " + e.what());
    }
    if (auto l = proj.project(rt)) {
      s.history.push_back(*l);
      s.syncs.emplace_back(rt, inside);
      s.parts.emplace_back();
    } else {
      s.parts.back().emplace_back(rt, inside);
    }
  }
  s.final_state = std::move(cur);
  return s;
}

LocMask f_locations(const ConcurrentProgram& p, const MethodSet& f) {
  LocMask m = 0;
  for (const auto& meth : p.methods)
    if (std::find(f.begin(), f.end(), meth.name) != f.end()) m |= used_locations(meth.body);
  return m;
}

}  // namespace

Composition compose_traces(const System& cl_sys, const Trace& t_cl, const System& lib_sys, const Trace& t_lib,
                           const System& target, const MethodSet& f) {
  if (cl_sys.decls().registers != target.decls().registers || lib_sys.decls().registers != target.decls().registers)
    throw InputError("the three programs must share one register table");
  const Segments cl = split(cl_sys, t_cl, f);
  const Segments lib = split(lib_sys, t_lib, f);
  if (cl.history != lib.history)
    throw InputError("the traces have different histories over the method set");

  const Translator tc(cl_sys, target);
  const Translator tl(lib_sys, target);
  const LocMask cl_keep = used_client_locations(cl_sys.program(), f);
  const LocMask lib_keep = f_locations(lib_sys.program(), f);

  Composition out;
  for (std::size_t i = 0; i < cl.parts.size(); ++i) {
    for (const auto& [rt, inside] : cl.parts[i]) {
      if (rt.kind == TransKind::Persist) {
        if (auto p = tc.persist(rt, cl_keep)) out.trace.push_back(std::move(*p));
      } else if (rt.kind == TransKind::Thread && !inside) {
        out.trace.push_back(tc.thread_step(rt));
      }
    }
    for (const auto& [rt, inside] : lib.parts[i]) {
      if (rt.kind == TransKind::Persist) {
        if (auto p = tl.persist(rt, lib_keep)) out.trace.push_back(std::move(*p));
      } else if (rt.kind == TransKind::Thread && inside) {
        out.trace.push_back(tl.thread_step(rt));
      }
    }
    if (i < cl.syncs.size()) {
      const auto& [a_cl, in_cl] = cl.syncs[i];
      const auto& [a_lib, in_lib] = lib.syncs[i];
      if (a_cl.kind == TransKind::Crash) {
        out.trace.push_back(a_cl);
      } else if (a_cl.label->kind == LabelKind::Call) {
        out.trace.push_back(tc.thread_step(a_cl));
      } else if (a_cl.label->kind == LabelKind::Ret) {
        out.trace.push_back(tl.thread_step(a_lib));
      } else {
        // SF class: whoever runs the thread's code at this point.
        (void)in_cl;
        out.trace.push_back(in_lib ? tl.thread_step(a_lib) : tc.thread_step(a_cl));
      }
    }
  }

  std::vector<SysState> states;
  try {
    states = replay(target, out.trace);
  } catch (const ReplayError& e) {
    out.problems.push_back(std::string("composed trace does not replay: ") + e.what());
    return out;
  }
  out.final_state = states.back();

  MethodSet all;
  for (const auto& m : target.program().methods) all.push_back(m.name);
  MethodSet all_cl;
  for (const auto& m : cl_sys.program().methods) all_cl.push_back(m.name);
  if (history_of(target, out.trace, all) != history_of(cl_sys, t_cl, all_cl))
    out.problems.push_back("history of the composed trace differs from the client trace");

  HistoryProjector tp(target, f);
  for (std::size_t t = 0; t < out.final_state.prog.size(); ++t) {
    const auto& q = out.final_state.prog[t];
    const auto& qc = cl.final_state.prog[t];
    const auto& ql = lib.final_state.prog[t];
    auto name = [](const System& s, std::int32_t m) {
      return m < 0 ? std::string() : s.program().methods[static_cast<std::size_t>(m)].name;
    };
    bool ok;
    if (tp.in_f(q.f)) {
      ok = q.pc == ql.pc && q.phi == ql.phi && name(target, q.f) == name(lib_sys, ql.f) && q.pc_s == qc.pc_s;
    } else {
      ok = q.pc == qc.pc && q.pc_s == qc.pc_s && q.phi == qc.phi && name(target, q.f) == name(cl_sys, qc.f);
    }
    if (!ok) out.problems.push_back("thread " + std::to_string(t + 1) + " ends in an unexpected state");
  }

  const LocMask x_cl = tc.mask(cl_keep);
  const LocMask x_lib = tl.mask(lib_keep);
  const MemState expect = merge_mem(tc.mem(cl.final_state.mem, cl_keep, 0), x_cl,
                                    tl.mem(lib.final_state.mem, lib_keep, 1U << 20), x_lib);
  const MemState got = restrict_mem(out.final_state.mem, x_cl | x_lib);
  if (!iso_equal(expect, got))
    out.problems.push_back("final memory is not the merge of the two final memories:\nexpected\n" +
                           dump_mem(expect, target.decls()) + "got\n" + dump_mem(got, target.decls()));
  return out;
}

// ---------------------------------------------------------------- reports

std::string bounds_to_string(const Bounds& b) {
  auto n = [](std::uint32_t v) { return v == kUnbounded ? std::string("unbounded") : std::to_string(v); };
  return "max-steps=" + n(b.max_steps) + " max-crashes=" + n(b.max_crashes) + " values=0.." +
         std::to_string(b.max_value) + " persist-mode=" + (b.mode == PersistMode::Units ? "units" : "full") +
         " nondet-sf=" + n(b.max_nondet_sf);
}

std::string verdict_to_json(const Verdict& v, const Decls& d) {
  using ojson = nlohmann::ordered_json;
  ojson j;
  j["verdict"] = v.holds ? "holds-at-bounds" : "counterexample";
  ojson b;
  auto n = [](std::uint32_t x) { return x == kUnbounded ? ojson("unbounded") : ojson(x); };
  b["max_steps"] = n(v.bounds.max_steps);
  b["max_crashes"] = n(v.bounds.max_crashes);
  b["max_value"] = v.bounds.max_value;
  b["persist_mode"] = v.bounds.mode == PersistMode::Units ? "units" : "full";
  b["nondet_sf"] = n(v.bounds.max_nondet_sf);
  j["bounds"] = b;
  j["bounded"] = true;
  j["hit_step_bound"] = v.stats.hit_step_bound;
  ojson s;
  s["product_nodes"] = v.stats.product_nodes;
  s["spec_states"] = v.stats.spec_states;
  s["macro_states"] = v.stats.macros;
  s["seconds"] = v.stats.seconds;
  j["stats"] = s;
  if (!v.notes.empty()) j["notes"] = v.notes;
  if (v.cex) {
    ojson c;
    c["reason"] = v.cex->reason;
    c["history"] = history_to_jsonl(v.cex->history, d);
    c["trace"] = v.cex->trace_text;
    j["counterexample"] = c;
  }
  return j.dump(2);
}

std::string verdict_to_text(const Verdict& v, const Decls& d) {
  std::string s = v.holds ? "holds at bounds" : "counterexample";
  s += " (" + bounds_to_string(v.bounds) + ")\n";
  s += "product nodes " + std::to_string(v.stats.product_nodes) + ", spec states " +
       std::to_string(v.stats.spec_states) + ", macro states " + std::to_string(v.stats.macros) + "\n";
  if (v.stats.hit_step_bound) s += "step bound reached\n";
  for (const auto& n : v.notes) s += n + "\n";
  if (v.cex) {
    s += "reason: " + v.cex->reason + "\n";
    s += "history: " + history_to_string(v.cex->history, d) + "\n";
    s += "trace:\n" + v.cex->trace_text;
  }
  return s;
}

}  // namespace pscheck
