#include <gtest/gtest.h>

#include <map>
#include <set>
#include <unordered_map>

#include "properties.hpp"

using namespace pscheck;
using namespace pscheck::test;

namespace {

// First random run of sys whose F-history satisfies pred.
template <class Pred>
Trace find_run(const System& sys, const MethodSet& f, Pred pred, std::size_t len = 80) {
  for (std::uint64_t seed = 0; seed < 5000; ++seed) {
    Trace t = random_run(sys, seed, len);
    if (pred(history_of(sys, t, f), t)) return t;
  }
  ADD_FAILURE() << "no run found";
  return {};
}

TEST(HistoryOf, NoopCallAndReturn) {
  const Library noop = cat_lib("lib-noop");
  const System sys(mgc_program(noop, {MgcKind::Free, 1, 1}), Bounds{});
  const MethodSet f = noop.method_names();
  const Trace t = find_run(sys, f, [](const History& h, const Trace&) { return h.size() == 2; });
  const History h = history_of(sys, t, f);
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h[0].kind, HistoryLabel::Call);
  EXPECT_EQ(h[1].kind, HistoryLabel::Ret);
  EXPECT_EQ(h[0].method, "f");
  EXPECT_EQ(h[1].method, "f");
  EXPECT_EQ(h[0].phi, h[1].phi);
}

TEST(HistoryOf, NonVolatileCasIsAStoreFence) {
  const ConcurrentProgram p = parse_program("nonvolatile x\nvolatile v\nregisters r\nthread 1:\n  cas r x 0 1\n  cas r x 0 1\n  cas r v 0 1\n");
  const System sys(p, Bounds{});
  const Trace t = find_run(sys, {}, [](const History&, const Trace& t) {
    return std::count_if(t.begin(), t.end(), [](const ResolvedTransition& r) { return r.kind == TransKind::Thread; }) == 3;
  });
  const History h = history_of(sys, t, {});
  // Success and failure both count; the volatile one does not.
  ASSERT_EQ(h.size(), 2u);
  for (const auto& l : h) {
    EXPECT_EQ(l.kind, HistoryLabel::Sf);
    EXPECT_EQ(l.tid, 0u);
  }
}

TEST(HistoryOf, WritesAndPersistsOnly) {
  const System sys(cat_prog("litmus-block"), Bounds{});
  for (std::uint64_t seed = 0; seed < 20; ++seed) EXPECT_TRUE(history_of(sys, random_run(sys, seed, 50), {}).empty());
}

TEST(HistoryJsonl, Format) {
  Decls d;
  d.add_register("r1");
  d.add_register("r2");
  const History h{{HistoryLabel::Call, 0, "write", {1, 0}},
                  {HistoryLabel::Sf, 1, {}, {}},
                  {HistoryLabel::Crash, 0, {}, {}}};
  EXPECT_EQ(history_to_jsonl(h, d),
            "{\"tid\":1,\"kind\":\"call\",\"f\":\"write\",\"phi\":{\"r1\":1,\"r2\":0}}\n"
            "{\"tid\":2,\"kind\":\"sf\"}\n"
            "{\"kind\":\"crash\"}\n");
  EXPECT_EQ(history_from_jsonl(history_to_jsonl(h, d), d), h);
  EXPECT_THROW(history_from_jsonl("{\"tid\":1,\"kind\":\"call\",\"f\":\"w\",\"phi\":{\"q\":1}}\n", d), InputError);
}

TEST(HistoryJsonl, RoundTripOnRuns) {
  const Library pair = cat_lib("pair");
  Bounds b = crash_bounds(2);
  b.max_nondet_sf = kUnbounded;
  const System sys(mgc_program(pair, {MgcKind::Rec, 2, 2}), b);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const History h = history_of(sys, random_run(sys, seed, 150), pair.method_names());
    EXPECT_EQ(history_from_jsonl(history_to_jsonl(h, sys.decls()), sys.decls()), h);
  }
}

TEST(HistoryOf, CommutesWithCrashConcatenation) {
  const Library pair = cat_lib("pair");
  const System sys(mgc_program(pair, {MgcKind::Rec, 2, 1}), crash_bounds(2));
  const MethodSet f = pair.method_names();
  std::size_t splits = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Trace t = random_run(sys, seed, 120);
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i].kind != TransKind::Crash) continue;
      const Trace t1(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(i));
      const Trace t2(t.begin() + static_cast<std::ptrdiff_t>(i) + 1, t.end());
      History expect = history_of(sys, t1, f);
      expect.push_back({HistoryLabel::Crash, 0, {}, {}});
      const History tail = history_of(sys, t2, f);
      expect.insert(expect.end(), tail.begin(), tail.end());
      EXPECT_EQ(history_of(sys, t, f), expect);
      ++splits;
    }
  }
  EXPECT_GT(splits, 0u);
}

TEST(HistoryOf, MonotoneInMethodSet) {
  const Library pair = cat_lib("pair");
  Bounds b = crash_bounds(1);
  b.max_nondet_sf = kUnbounded;
  const System sys(mgc_program(pair, {MgcKind::Rec, 2, 2}), b);
  const MethodSet f2 = pair.method_names();
  for (const MethodSet& f1 : {MethodSet{}, MethodSet{"write"}, MethodSet{"read", "recover"}}) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const Trace t = random_run(sys, seed, 150);
      History filtered;
      for (const auto& l : history_of(sys, t, f2))
        if ((l.kind != HistoryLabel::Call && l.kind != HistoryLabel::Ret) ||
            std::find(f1.begin(), f1.end(), l.method) != f1.end())
          filtered.push_back(l);
      EXPECT_EQ(history_of(sys, t, f1), filtered);
    }
  }
}

TEST(HistoryTrie, MembershipAndMembers) {
  HistoryTrie trie;
  const HistoryLabel sf{HistoryLabel::Sf, 0, {}, {}};
  const HistoryLabel crash{HistoryLabel::Crash, 0, {}, {}};
  trie.insert({sf, crash});
  EXPECT_TRUE(trie.contains({sf, crash}));
  EXPECT_FALSE(trie.contains({sf}));
  EXPECT_FALSE(trie.contains({crash}));
  trie.insert({});
  EXPECT_EQ(trie.size(), 2u);
  EXPECT_EQ(trie.members().size(), 2u);
}

TEST(HistorySet, ClosureProperties) {
  for (const auto& c : closure_cases()) {
    const ClosureReport r = closure_check(System(c.prog, c.bounds), c.f);
    EXPECT_EQ(r.bad.count, 0u) << c.name << ": " << r.bad.first;
    EXPECT_GT(r.crash_checked, 0u) << c.name;
    EXPECT_GT(r.sf_checked, 0u) << c.name;
  }
}

// A store fence by any thread extends any history while the non-deterministic
// fence budget lasts, provided the thread's own markers can drain first.
TEST(HistorySet, StoreFenceExtensionOnFreeClients) {
  for (const char* lib : {"lib-noop", "lib-sfence"}) {
    Bounds b;
    b.max_nondet_sf = 2;
    const System sys(mgc_program(cat_lib(lib), {MgcKind::Free, 1, 1}), b);
    const HistoryTrie set = history_set(sys, cat_lib(lib).method_names());
    for (const History& h : set.members()) {
      std::size_t sfs = 0;
      for (const auto& l : h) sfs += l.kind == HistoryLabel::Sf;
      if (sfs >= b.max_nondet_sf) continue;
      History ext = h;
      ext.push_back({HistoryLabel::Sf, 0, {}, {}});
      EXPECT_TRUE(set.contains(ext)) << lib << "\n" << history_to_string(h, sys.decls());
    }
  }
}

TEST(HistoryWitness, FoundAndReplayed) {
  const Library pair = cat_lib("pair");
  const System sys(mgc_program(pair, {MgcKind::Rec, 1, 1}), crash_bounds(1));
  const auto members = history_set(sys, pair.method_names()).members();
  for (std::size_t i = 0; i < members.size(); i += 97) {
    const History& h = members[i];
    const auto t = find_history_witness(sys, pair.method_names(), h);
    ASSERT_TRUE(t) << history_to_string(h, sys.decls());
    EXPECT_EQ(history_of(sys, *t, pair.method_names()), h);
    replay(sys, *t);
  }
  History bogus{{HistoryLabel::Ret, 0, "write", LocalStore(sys.decls().registers.size(), 0)}};
  EXPECT_FALSE(find_history_witness(sys, pair.method_names(), bogus));
}

}  // namespace
