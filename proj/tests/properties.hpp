#pragma once

// Property checks over sampled states and small state spaces, shared by the
// unit tests and the acceptance runner. Each returns or records violations
// instead of asserting.

#include <algorithm>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <unordered_set>
#include <unordered_map>

#include "pscheck/visited.hpp"
#include "support.hpp"

namespace pscheck::test {

// Grows x until no block straddles it.
inline LocMask close_over_blocks(LocMask x, const MemState& m) {
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& b : m.bid)
      if ((b.locs & x) && !mask_subset(b.locs, x)) {
        x |= b.locs;
        changed = true;
      }
  }
  return x;
}

inline std::vector<ActionLabel> candidate_labels(const Decls& d, LocMask x, Value vmax) {
  std::vector<ActionLabel> out;
  out.push_back(ActionLabel::simple(LabelKind::SFence));
  for_each_loc(x, [&](LocId l) {
    for (Value v = 0; v <= vmax; ++v) {
      out.push_back(ActionLabel::read(l, v));
      out.push_back(ActionLabel::rmw(l, v, (v + 1) % (vmax + 1)));
      out.push_back(ActionLabel::read_ex(l, v));
    }
    out.push_back(ActionLabel::write(l, 1));
    if (d.is_nv(l)) {
      out.push_back(ActionLabel::simple(LabelKind::Flush, l));
      out.push_back(ActionLabel::simple(LabelKind::FlushOpt, l));
    }
  });
  const LocMask nvx = x & d.nv_mask();
  if (nvx) {
    out.push_back(ActionLabel::fence_set(LabelKind::PFence, nvx));
    out.push_back(ActionLabel::fence_set(LabelKind::PBBegin, nvx));
    out.push_back(ActionLabel::fence_set(LabelKind::PBEnd, nvx));
    const LocMask low = nvx & (~nvx + 1);
    out.push_back(ActionLabel::fence_set(LabelKind::PBBegin, low));
    out.push_back(ActionLabel::fence_set(LabelKind::PBEnd, low));
  }
  return out;
}

inline PersistChoice restrict_choice(const PersistChoice& c, LocMask x) {
  PersistChoice r;
  for (const auto& p : c.prefixes)
    if (mask_has(x, p.first)) r.prefixes.push_back(p);
  return r;
}

inline PersistChoice join_choices(const PersistChoice& a, const PersistChoice& b) {
  PersistChoice r = a;
  r.prefixes.insert(r.prefixes.end(), b.prefixes.begin(), b.prefixes.end());
  std::sort(r.prefixes.begin(), r.prefixes.end());
  return r;
}

inline MemState persist_or_same(const MemState& m, const PersistChoice& c) { return c.empty() ? m : mem_persist(m, c); }

struct Violations {
  std::size_t count = 0;
  std::string first;
  void add(const std::string& what) {
    if (count++ == 0) first = what;
  }
};

// One memory state against one separating set.
inline void check_separation(const MemState& m1, LocMask x, const Decls& d, Value vmax, Violations& bad) {
  const LocMask all = d.all_mask();
  const LocMask y = all & ~x;
  const MemState mx = restrict_mem(m1, x);
  const MemState my = restrict_mem(m1, y);
  const std::size_t threads = m1.num_threads();
  const std::string where = "\n" + dump_mem(m1, d) + "X = " + d.mask_names(x);

  for (ThreadId t = 0; t < threads; ++t) {
    for (const ActionLabel& l : candidate_labels(d, x, vmax)) {
      const auto m2 = mem_apply(m1, t, l);
      const auto r2 = mem_apply(mx, t, l);
      const std::string what = label_to_string(l, d, {}) + " by " + std::to_string(t + 1) + where;
      if (!is_sf_class(l, d)) {
        // (1)
        if (m2.has_value() != r2.has_value()) {
          bad.add("(1) enabledness differs for " + what);
        } else if (m2 && (restrict_mem(*m2, x) != *r2 || restrict_mem(*m2, y) != my)) {
          bad.add("(1) results differ for " + what);
        }
      } else {
        // (2)
        const auto s2 = mem_apply(my, t, ActionLabel::simple(LabelKind::SFence));
        if (m2.has_value() != (r2 && s2)) {
          bad.add("(2) enabledness differs for " + what);
        } else if (m2 && (restrict_mem(*m2, x) != *r2 || restrict_mem(*m2, y) != *s2)) {
          bad.add("(2) results differ for " + what);
        }
      }
    }
  }

  // (3), left to right: every persist step splits into steps on both halves.
  const auto choices = persist_choices(m1, PersistMode::Full);
  for (const auto& c : choices) {
    const PersistChoice cx = restrict_choice(c, x);
    const PersistChoice cy = restrict_choice(c, y);
    const MemState m2 = mem_persist(m1, c);
    if ((!cx.empty() && !persist_valid(mx, cx)) || (!cy.empty() && !persist_valid(my, cy)))
      bad.add("(3) a half of a persist step is invalid" + where);
    else if (restrict_mem(m2, x) != persist_or_same(mx, cx) || restrict_mem(m2, y) != persist_or_same(my, cy))
      bad.add("(3) persist results differ" + where);
  }
  // (3), right to left: steps on the halves combine.
  auto cxs = persist_choices(mx, PersistMode::Full);
  auto cys = persist_choices(my, PersistMode::Full);
  cxs.emplace_back();
  cys.emplace_back();
  for (std::size_t i = 0; i < cxs.size() && i < 12; ++i)
    for (std::size_t j = 0; j < cys.size() && j < 12; ++j) {
      const PersistChoice c = join_choices(cxs[i], cys[j]);
      if (c.empty()) continue;
      if (!persist_valid(m1, c)) {
        bad.add("(3) combined persist step is invalid" + where);
        continue;
      }
      const MemState m2 = mem_persist(m1, c);
      if (restrict_mem(m2, x) != persist_or_same(mx, cxs[i]) || restrict_mem(m2, y) != persist_or_same(my, cys[j]))
        bad.add("(3) combined persist results differ" + where);
    }

  // (4)
  const MemState m2 = mem_crash(m1);
  if (restrict_mem(m2, x) != mem_crash(mx) || restrict_mem(m2, y) != mem_crash(my))
    bad.add("(4) crash results differ" + where);
}

inline void check_merge(const MemState& m1, const MemState& m2, LocMask x1, LocMask x2, const Decls& d, Violations& bad) {
  const MemState m = merge_mem(m1, x1, m2, x2);
  const std::string where = "\n" + dump_mem(m1, d) + dump_mem(m2, d) + "X1 = " + d.mask_names(x1) +
                            " X2 = " + d.mask_names(x2);
  if (m != merge_mem(m2, x2, m1, x1)) bad.add("(a) merge is not symmetric" + where);
  if (m != merge_mem(restrict_mem(m1, x1), x1, m2, x2)) bad.add("(b) restricting the first half changes the merge" + where);
  for (const LocMask yy : {x1, d.all_mask() & ~x2})
    if (restrict_mem(m, yy) != restrict_mem(m1, x1)) bad.add("(c) restriction of the merge differs" + where);
  std::string why;
  if (!well_formed(m, &why)) bad.add("merge is not well formed: " + why + where);
}

struct Sample {
  std::string name;
  Decls decls;
  LocMask lib = 0;
  std::vector<SysState> states;
};

inline std::vector<Sample> samples(std::size_t per_example) {
  std::vector<Sample> out;
  std::uint64_t seed = 1;
  for (auto& [name, prog] : example_programs()) {
    const ExampleCase c = load_example(name);
    Sample s;
    s.name = name;
    s.decls = prog.decls;
    if (c.kind != CaseKind::Explore) {
      Decls d = prog.decls;
      s.lib = used_locations(import_library(d, c.kind == CaseKind::Refine ? c.impl : c.spec));
    }
    Bounds b = crash_bounds(1);
    b.max_nondet_sf = kUnbounded;
    const System sys(prog, b);
    s.states = sample_states(sys, per_example, seed++, 60);
    out.push_back(std::move(s));
  }
  return out;
}

// Separation clauses (1)-(4) over every sampled state of s, against the
// library's locations (when there is a library) and one random set.
inline Violations separation_suite(const Sample& s, std::uint64_t seed, std::size_t* checked = nullptr) {
  std::mt19937_64 rng(seed);
  Violations bad;
  const LocMask all = s.decls.all_mask();
  std::size_t n = 0;
  for (const SysState& st : s.states) {
    std::vector<LocMask> xs;
    if (s.lib) xs.push_back(close_over_blocks(s.lib, st.mem));
    xs.push_back(close_over_blocks(static_cast<LocMask>(rng()) & all, st.mem));
    for (const LocMask x : xs) {
      if (!separates(x & s.decls.nv_mask(), st.mem)) {
        bad.add("closed set does not separate");
        continue;
      }
      check_separation(st.mem, x, s.decls, 2, bad);
      ++n;
    }
  }
  if (checked) *checked = n;
  return bad;
}

// Merge properties (a)-(c) over random pairs of sampled states, plus well-formedness of
// the states themselves.
inline Violations merge_suite(const Sample& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Violations bad;
  const LocMask all = s.decls.all_mask();
  for (std::size_t i = 0; i < s.states.size(); ++i) {
    const MemState& m1 = s.states[i].mem;
    const MemState& m2 = s.states[rng() % s.states.size()].mem;
    std::string why;
    if (!well_formed(m1, &why)) bad.add("sampled state is not well formed: " + why);
    const LocMask x1 = close_over_blocks(s.lib ? s.lib : static_cast<LocMask>(rng()) & all, m1);
    // x2 is the complement of x1 minus whatever m2's blocks drag across.
    LocMask x2 = all & ~x1;
    for (const auto& b : m2.bid)
      if (!mask_subset(b.locs, x2)) x2 &= ~b.locs;
    check_merge(m1, m2, x1, x2, s.decls, bad);
    check_merge(m2, m1, x2, x1, s.decls, bad);
  }
  return bad;
}

struct ClosureReport {
  std::size_t histories = 0;
  std::size_t crash_checked = 0;
  std::size_t sf_checked = 0;
  Violations bad;
};

// Prefix, crash and store fence closure of history_set(sys, f). The store
// fence extension is expected wherever a reached state offers that thread a
// non-deterministic fence; an independent search over (state, history) pairs
// finds those places and must also agree on the set itself.
inline ClosureReport closure_check(const System& sys, const MethodSet& f) {
  ClosureReport r;
  bool hit = false;
  const HistoryTrie set = history_set(sys, f, &hit);
  if (hit) r.bad.add("history set hit the step bound");

  HistoryProjector proj(sys, f);
  HistoryTrie mine;
  std::unordered_map<std::string, bool> seen;
  std::map<std::uint32_t, std::set<ThreadId>> sf_offered;
  std::vector<std::pair<SysState, std::uint32_t>> stack{{sys.initial(), 0}};
  mine.mark(0);
  while (!stack.empty()) {
    auto [s, node] = std::move(stack.back());
    stack.pop_back();
    std::string k = sys.key(s);
    append_varint(k, node);
    if (!seen.emplace(k, true).second) continue;
    for (auto& n : sys.enabled(s)) {
      std::uint32_t next = node;
      if (auto l = proj.project(n.rt)) {
        next = mine.child(node, *l);
        if (std::holds_alternative<NondetSf>(n.rt.payload)) sf_offered[node].insert(n.rt.tid);
      }
      mine.mark(next);
      stack.emplace_back(std::move(n.state), next);
    }
  }
  if (mine.size() != set.size()) r.bad.add("independent search finds a different number of histories");

  for (const History& h : set.members()) {
    ++r.histories;
    for (std::size_t i = 0; i < h.size(); ++i)
      if (!set.contains(History(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(i))))
        r.bad.add("prefix missing: " + history_to_string(h, sys.decls()));
    if (!mine.contains(h)) r.bad.add("history not found independently: " + history_to_string(h, sys.decls()));
    const auto crashes = static_cast<std::uint32_t>(
        std::count_if(h.begin(), h.end(), [](const HistoryLabel& l) { return l.kind == HistoryLabel::Crash; }));
    if (crashes < sys.bounds().max_crashes) {
      History ext = h;
      ext.push_back({HistoryLabel::Crash, 0, {}, {}});
      ++r.crash_checked;
      if (!set.contains(ext)) r.bad.add("crash extension missing: " + history_to_string(h, sys.decls()));
    }
  }
  for (const auto& [node, tids] : sf_offered) {
    const History h = mine.history_at(node);
    for (ThreadId t : tids) {
      History ext = h;
      ext.push_back({HistoryLabel::Sf, t, {}, {}});
      ++r.sf_checked;
      if (!set.contains(ext)) r.bad.add("fence extension missing: " + history_to_string(h, sys.decls()));
    }
  }
  return r;
}

struct ClosureCase {
  std::string name;
  ConcurrentProgram prog;
  MethodSet f;
  Bounds bounds;
};

// Small closed clients whose history sets are computed in full.
inline std::vector<ClosureCase> closure_cases() {
  std::vector<ClosureCase> out;
  auto add = [&](const std::string& name, const Library& lib, MgcConfig cfg, std::uint32_t crashes,
                 std::uint32_t sf) {
    Bounds b = crash_bounds(crashes);
    b.max_nondet_sf = sf;
    out.push_back({name, mgc_program(lib, cfg), lib.method_names(), b});
  };
  for (const char* lib : {"lib-noop", "lib-sfence"}) add(lib, cat_lib(lib), {MgcKind::Free, 1, 1}, 1, 2);
  add("pair", cat_lib("pair"), {MgcKind::Rec, 1, 1}, 1, 1);
  add("bpair", cat_lib("bpair"), {MgcKind::Rec, 1, 1}, 1, 1);
  return out;
}

// Persist-mode oracle over every memory state reachable by label sequences
// of two threads on three persistent cells, holding at most max_entries
// buffered entries. From each such state, the persistent memories reachable
// by persist steps must be the same whether steps are minimal units or any
// valid prefix choice.
struct PersistOracleReport {
  std::size_t states = 0;
  Violations bad;
};

inline PersistOracleReport persist_mode_oracle(std::size_t max_entries) {
  Decls d;
  const LocId x = d.add_location("x", Durability::NonVolatile);
  const LocId y = d.add_location("y", Durability::NonVolatile);
  const LocId z = d.add_location("z", Durability::NonVolatile);
  const LocMask xy = loc_bit(x) | loc_bit(y), yz = loc_bit(y) | loc_bit(z);
  std::vector<ActionLabel> alphabet{ActionLabel::simple(LabelKind::SFence), ActionLabel::write(x, 2),
                                    ActionLabel::fence_set(LabelKind::PFence, yz)};
  for (LocId l : {x, y, z}) alphabet.push_back(ActionLabel::write(l, 1));
  for (LocId l : {x, y}) alphabet.push_back(ActionLabel::simple(LabelKind::FlushOpt, l));
  for (LocMask m : {xy, yz}) {
    alphabet.push_back(ActionLabel::fence_set(LabelKind::PBBegin, m));
    alphabet.push_back(ActionLabel::fence_set(LabelKind::PBEnd, m));
  }

  auto key = [](const MemState& m) {
    std::string k;
    append_mem_key(k, m, false);
    return k;
  };
  using Nvms = std::set<std::vector<Value>>;
  // Persistent memories reachable from m by persist steps of one mode.
  auto reach = [&](const MemState& start, PersistMode mode) {
    Nvms out;
    std::unordered_set<std::string> seen_local{key(start)};
    std::vector<MemState> stack{start};
    while (!stack.empty()) {
      const MemState m = std::move(stack.back());
      stack.pop_back();
      out.emplace(m.nvm.begin(), m.nvm.end());
      for (const auto& c : persist_choices(m, mode)) {
        MemState n = mem_persist(m, c);
        if (seen_local.insert(key(n)).second) stack.push_back(std::move(n));
      }
    }
    return out;
  };

  // Blocks with no entries left and no thread inside them cannot influence
  // persist steps; dropping them keeps states small along long paths.
  auto prune = [](MemState& m) {
    std::set<BlockId> live;
    for (const auto& b : m.buf)
      for (const auto& e : b) live.insert(e.block);
    for (BlockId a : m.active) live.insert(a);
    m.bid.erase(std::remove_if(m.bid.begin(), m.bid.end(), [&](const BlockInfo& b) { return !live.count(b.id); }),
                m.bid.end());
  };

  // No label reads memory, so buffer evolution is independent of nvm and vm.
  // Resetting both to the initial zeros leaves one state per buffer shape;
  // writes store 1 or 2, so a surviving 0 marks a location nothing reached.
  const MemState init = mem_init(d, 2);
  auto normalize = [&](MemState& m) {
    m.nvm = init.nvm;
    m.vm = init.vm;
  };

  // Both threads share the alphabet, so swapping them maps reachable states
  // to reachable states with the same persist behaviour.
  auto swapped = [](MemState m) {
    const std::size_t n = m.num_locations();
    for (std::size_t x = 0; x < n; ++x) std::swap(m.active[x], m.active[n + x]);
    for (auto& b : m.buf)
      for (auto& e : b)
        if (e.is_fo) e.tid = 1 - e.tid;
    return m;
  };
  auto canon_key = [&](const MemState& m) { return std::min(key(m), key(swapped(m))); };

  // The frontier grows to millions of states; keep it packed. Only the
  // buffers, open blocks and block table vary once nvm and vm are reset.
  auto pack = [](const MemState& m) {
    std::vector<std::uint32_t> w;
    for (const auto& b : m.buf) {
      w.push_back(static_cast<std::uint32_t>(b.size()));
      for (const auto& e : b) {
        w.push_back(e.is_fo ? 1u + e.tid : 0u);
        w.push_back(e.block);
        w.push_back(e.value);
      }
    }
    for (BlockId a : m.active) w.push_back(a);
    w.push_back(static_cast<std::uint32_t>(m.bid.size()));
    for (const auto& b : m.bid) {
      w.push_back(b.id);
      w.push_back(static_cast<std::uint32_t>(b.locs));
    }
    w.push_back(m.next_block);
    return w;
  };
  auto unpack = [&](const std::vector<std::uint32_t>& w) {
    MemState m = init;
    std::size_t i = 0;
    for (auto& b : m.buf) {
      const std::uint32_t n = w[i++];
      for (std::uint32_t k = 0; k < n; ++k) {
        BufferEntry e;
        e.is_fo = w[i] != 0;
        e.tid = static_cast<ThreadId>(w[i] ? w[i] - 1 : 0);
        e.block = w[i + 1];
        e.value = w[i + 2];
        i += 3;
        b.push_back(e);
      }
    }
    for (auto& a : m.active) a = w[i++];
    const std::uint32_t nb = w[i++];
    for (std::uint32_t k = 0; k < nb; ++k, i += 2) m.bid.push_back(BlockInfo{w[i], w[i + 1]});
    m.next_block = w[i];
    return m;
  };

  PersistOracleReport r;
  VisitedSet seen;
  std::vector<std::vector<std::uint32_t>> frontier{pack(init)};
  seen.insert(canon_key(init));
  while (!frontier.empty()) {
    const MemState m = unpack(frontier.back());
    frontier.pop_back();
    ++r.states;
    if (reach(m, PersistMode::Units) != reach(m, PersistMode::Full)) r.bad.add("modes differ from\n" + dump_mem(m, d));
    std::vector<MemState> next;
    for (ThreadId t = 0; t < 2; ++t)
      for (const auto& l : alphabet)
        if (auto n = mem_apply(m, t, l); n && n->buffered_entries() <= max_entries) next.push_back(std::move(*n));
    for (const auto& c : persist_choices(m, PersistMode::Full)) next.push_back(mem_persist(m, c));
    for (auto& n : next) {
      prune(n);
      normalize(n);
      if (seen.insert(canon_key(n))) frontier.push_back(pack(n));
    }
  }
  return r;
}

}  // namespace pscheck::test
