#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "support.hpp"

using namespace pscheck;
using namespace pscheck::test;

namespace {

struct Fixture {
  Decls d;
  LocId x, y, z, v;
  Fixture() {
    x = d.add_location("x", Durability::NonVolatile);
    y = d.add_location("y", Durability::NonVolatile);
    z = d.add_location("z", Durability::NonVolatile);
    v = d.add_location("v", Durability::Volatile);
    d.add_register("r");
  }
  MemState init() const { return mem_init(d, 2); }
};

MemState step(const MemState& m, ThreadId t, const ActionLabel& l) {
  auto r = mem_apply(m, t, l);
  if (!r) throw std::runtime_error("blocked");
  return *r;
}

TEST(MemLookup, Examples) {
  Fixture f;
  MemState m = f.init();
  EXPECT_EQ(mem_lookup(m, f.x), 0u);
  EXPECT_EQ(mem_lookup(m, f.v), 0u);
  m = step(m, 0, ActionLabel::write(f.x, 1));
  m = step(m, 0, ActionLabel::simple(LabelKind::FlushOpt, f.x));
  m = step(m, 0, ActionLabel::write(f.x, 2));
  EXPECT_EQ(mem_lookup(m, f.x), 2u);

  MemState n = f.init();
  n = step(n, 0, ActionLabel::write(f.y, 7));
  n = mem_persist(n, PersistChoice{{{f.y, 1}}});
  n = step(n, 0, ActionLabel::simple(LabelKind::FlushOpt, f.y));
  EXPECT_EQ(n.buf[f.y].size(), 1u);
  EXPECT_EQ(mem_lookup(n, f.y), 7u);
}

TEST(MemApply, Examples) {
  Fixture f;
  const MemState m0 = f.init();
  const MemState m1 = step(m0, 0, ActionLabel::write(f.x, 1));
  ASSERT_EQ(m1.buf[f.x].size(), 1u);
  EXPECT_EQ(m1.buf[f.x][0].value, 1u);
  EXPECT_EQ(m1.nvm[f.x], 0u);

  const MemState m2 = step(m0, 0, ActionLabel::simple(LabelKind::FlushOpt, f.x));
  EXPECT_FALSE(mem_apply(m2, 0, ActionLabel::simple(LabelKind::SFence)));
  EXPECT_TRUE(mem_apply(m2, 1, ActionLabel::simple(LabelKind::SFence)));

  const MemState m3 = step(m0, 0, ActionLabel::simple(LabelKind::FlushOpt, f.y));
  EXPECT_TRUE(mem_apply(m3, 0, ActionLabel::fence_set(LabelKind::PFence, loc_bit(f.x))));
  EXPECT_FALSE(mem_apply(m3, 0, ActionLabel::fence_set(LabelKind::PFence, loc_bit(f.y))));

  EXPECT_FALSE(mem_apply(m1, 0, ActionLabel::simple(LabelKind::Flush, f.x)));
  EXPECT_FALSE(mem_apply(m1, 0, ActionLabel::read(f.x, 0)));
  EXPECT_TRUE(mem_apply(m1, 0, ActionLabel::read(f.x, 1)));

  const MemState vw = step(m0, 0, ActionLabel::write(f.v, 3));
  EXPECT_EQ(mem_lookup(vw, f.v), 3u);
  EXPECT_TRUE(vw.buf[f.v].empty());
  // Volatile RMW is not a fence; non-volatile RMW is.
  EXPECT_TRUE(mem_apply(m2, 0, ActionLabel::rmw(f.v, 0, 1)));
  EXPECT_FALSE(mem_apply(m2, 0, ActionLabel::rmw(f.z, 0, 1)));
  EXPECT_FALSE(mem_apply(m2, 0, ActionLabel::read_ex(f.z, 0)));
}

TEST(MemApply, BlocksAllocateAndClose) {
  Fixture f;
  const LocMask xy = loc_bit(f.x) | loc_bit(f.y);
  MemState m = step(f.init(), 0, ActionLabel::fence_set(LabelKind::PBBegin, xy));
  ASSERT_EQ(m.bid.size(), 1u);
  EXPECT_EQ(m.bid[0].locs, xy);
  EXPECT_NE(m.active_at(0, f.x), kNoBlock);
  EXPECT_FALSE(mem_apply(m, 0, ActionLabel::fence_set(LabelKind::PBBegin, loc_bit(f.x))));
  m = step(m, 0, ActionLabel::write(f.x, 1));
  EXPECT_TRUE(persist_choices(m, PersistMode::Full).empty());
  m = step(m, 0, ActionLabel::fence_set(LabelKind::PBEnd, xy));
  EXPECT_EQ(m.active_at(0, f.x), kNoBlock);
  EXPECT_TRUE(well_formed(m));
}

TEST(PersistChoices, IndependentEntries) {
  Fixture f;
  MemState m = step(f.init(), 0, ActionLabel::write(f.x, 1));
  m = step(m, 0, ActionLabel::write(f.y, 1));
  EXPECT_EQ(persist_choices(m, PersistMode::Full).size(), 3u);
  EXPECT_EQ(persist_choices(m, PersistMode::Units).size(), 2u);
}

TEST(PersistChoices, ClosedBlockPersistsTogether) {
  Fixture f;
  const LocMask xy = loc_bit(f.x) | loc_bit(f.y);
  MemState m = step(f.init(), 0, ActionLabel::fence_set(LabelKind::PBBegin, xy));
  m = step(m, 0, ActionLabel::write(f.x, 1));
  m = step(m, 0, ActionLabel::write(f.y, 1));
  m = step(m, 0, ActionLabel::fence_set(LabelKind::PBEnd, xy));
  for (auto mode : {PersistMode::Full, PersistMode::Units}) {
    const auto cs = persist_choices(m, mode);
    ASSERT_EQ(cs.size(), 1u);
    EXPECT_EQ(cs[0].prefix(f.x), 1u);
    EXPECT_EQ(cs[0].prefix(f.y), 1u);
    const MemState p = mem_persist(m, cs[0]);
    EXPECT_EQ(p.nvm[f.x], 1u);
    EXPECT_EQ(p.nvm[f.y], 1u);
  }
}

TEST(PersistChoices, NestedBlocksPersistIndependently) {
  // Outer block over {x, y} opened by thread 0, inner over {z} by thread 1,
  // interleaved writes. Each block persists atomically, in either order.
  Fixture f;
  const LocMask xy = loc_bit(f.x) | loc_bit(f.y);
  const LocMask zz = loc_bit(f.z);
  MemState m = step(f.init(), 0, ActionLabel::fence_set(LabelKind::PBBegin, xy));
  m = step(m, 1, ActionLabel::fence_set(LabelKind::PBBegin, zz));
  m = step(m, 0, ActionLabel::write(f.x, 1));
  m = step(m, 1, ActionLabel::write(f.z, 1));
  m = step(m, 0, ActionLabel::write(f.y, 1));
  m = step(m, 1, ActionLabel::fence_set(LabelKind::PBEnd, zz));
  m = step(m, 0, ActionLabel::fence_set(LabelKind::PBEnd, xy));
  const auto units = persist_choices(m, PersistMode::Units);
  ASSERT_EQ(units.size(), 2u);
  std::set<std::vector<Value>> after;
  for (const auto& c : persist_choices(m, PersistMode::Full)) {
    const MemState p = mem_persist(m, c);
    after.insert({p.nvm[f.x], p.nvm[f.y], p.nvm[f.z]});
  }
  EXPECT_EQ(after, (std::set<std::vector<Value>>{{1, 1, 0}, {0, 0, 1}, {1, 1, 1}}));
}

TEST(MemPersist, Examples) {
  Fixture f;
  MemState m = step(f.init(), 0, ActionLabel::write(f.x, 5));
  m = step(m, 0, ActionLabel::simple(LabelKind::FlushOpt, f.x));
  const MemState p = mem_persist(m, PersistChoice{{{f.x, 1}}});
  EXPECT_EQ(p.nvm[f.x], 5u);
  EXPECT_EQ(p.buf[f.x].size(), 1u);
  const MemState q = mem_persist(p, PersistChoice{{{f.x, 1}}});
  EXPECT_EQ(q.nvm[f.x], 5u);
  EXPECT_TRUE(q.buf[f.x].empty());
  EXPECT_FALSE(persist_valid(m, PersistChoice{{{f.x, 3}}}));
}

TEST(MemCrash, Examples) {
  Fixture f;
  const MemState m0 = f.init();
  EXPECT_EQ(mem_crash(m0), m0);
  MemState m = step(m0, 0, ActionLabel::write(f.x, 1));
  m = mem_persist(m, PersistChoice{{{f.x, 1}}});
  m = step(m, 0, ActionLabel::write(f.y, 2));
  m = step(m, 0, ActionLabel::write(f.v, 2));
  m = step(m, 1, ActionLabel::fence_set(LabelKind::PBBegin, loc_bit(f.z)));
  const MemState c = mem_crash(m);
  EXPECT_EQ(c.nvm[f.x], 1u);
  EXPECT_EQ(c.nvm[f.y], 0u);
  EXPECT_EQ(mem_lookup(c, f.v), 0u);
  EXPECT_TRUE(c.buf[f.y].empty());
  EXPECT_TRUE(c.bid.empty());
  EXPECT_EQ(c.active_at(1, f.z), kNoBlock);
}

TEST(Separation, Examples) {
  Fixture f;
  const MemState m0 = f.init();
  EXPECT_TRUE(separates(loc_bit(f.x), m0));
  const MemState m = step(m0, 0, ActionLabel::fence_set(LabelKind::PBBegin, loc_bit(f.x) | loc_bit(f.y)));
  EXPECT_FALSE(separates(loc_bit(f.x), m));
  EXPECT_TRUE(separates(loc_bit(f.x) | loc_bit(f.y) | loc_bit(f.z), m));
  EXPECT_TRUE(separates(loc_bit(f.z), m));
}

TEST(Restrict, Examples) {
  Fixture f;
  const MemState m0 = f.init();
  EXPECT_EQ(restrict_mem(m0, loc_bit(f.x)), m0);
  MemState m = step(m0, 0, ActionLabel::write(f.x, 1));
  m = mem_persist(m, PersistChoice{{{f.x, 1}}});
  m = step(m, 0, ActionLabel::write(f.v, 2));
  EXPECT_EQ(restrict_mem(m, 0), m0);
  const MemState r = restrict_mem(m, loc_bit(f.v));
  EXPECT_EQ(r.nvm[f.x], 0u);
  EXPECT_EQ(mem_lookup(r, f.v), 2u);
}

// Reachable states of MGC[pair] at two threads, with the library part
// restricted away: client cells zeroed, library cells intact.
TEST(Restrict, LibraryPartOfPairRun) {
  const Library pair = cat_lib("pair");
  const ConcurrentProgram p = mgc_program(pair, {MgcKind::Rec, 2, 1});
  const System sys(p, crash_bounds(1));
  Decls d = p.decls;
  const Library lib_in_p = import_library(d, pair);
  const LocMask lib = used_locations(lib_in_p);
  const LocMask cl = used_client_locations(p, pair.method_names());
  for (const SysState& s : sample_states(sys, 300, 3)) {
    const MemState r = restrict_mem(s.mem, lib);
    for (LocId x = 0; x < p.decls.locations.size(); ++x) {
      if (mask_has(cl, x)) EXPECT_EQ(mem_lookup(r, x), 0u);
      if (mask_has(lib, x)) EXPECT_EQ(mem_lookup(r, x), mem_lookup(s.mem, x));
    }
  }
}

TEST(Merge, Examples) {
  Fixture f;
  MemState m = step(f.init(), 0, ActionLabel::write(f.x, 1));
  m = step(m, 0, ActionLabel::write(f.v, 1));
  m = step(m, 1, ActionLabel::write(f.y, 2));
  const LocMask x = loc_bit(f.x) | loc_bit(f.v);
  const LocMask rest = f.d.all_mask() & ~x;
  EXPECT_EQ(restrict_mem(merge_mem(m, x, f.init(), 0), x), restrict_mem(m, x));
  const MemState other = step(f.init(), 1, ActionLabel::write(f.z, 3));
  EXPECT_EQ(merge_mem(m, x, other, rest), merge_mem(other, rest, m, x));
  EXPECT_EQ(merge_mem(restrict_mem(m, x), x, restrict_mem(m, rest), rest), m);
}

TEST(MemSem, FifoAndWellFormednessAlongRuns) {
  // Every step either extends one buffer by one entry or shortens buffers
  // to suffixes, and keeps the state well formed.
  for (const char* name : {"litmus-block", "pair", "bpair"}) {
    const ConcurrentProgram p = std::string(name) == "litmus-block"
                                    ? cat_prog(name)
                                    : mgc_program(cat_lib(name), {MgcKind::Rec, 2, 2});
    const System sys(p, crash_bounds(1));
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const Trace t = random_run(sys, seed, 150);
      const auto states = replay(sys, t);
      for (std::size_t i = 0; i + 1 < states.size(); ++i) {
        const MemState& a = states[i].mem;
        const MemState& b = states[i + 1].mem;
        std::string why;
        ASSERT_TRUE(well_formed(b, &why)) << name << ": " << why;
        if (t[i].kind == TransKind::Crash) continue;
        int grown = 0;
        for (std::size_t x = 0; x < a.buf.size(); ++x) {
          const auto& pa = a.buf[x];
          const auto& pb = b.buf[x];
          if (pb.size() == pa.size() + 1 && std::equal(pa.begin(), pa.end(), pb.begin())) {
            ++grown;
          } else {
            ASSERT_LE(pb.size(), pa.size()) << name;
            ASSERT_TRUE(std::equal(pb.begin(), pb.end(), pa.end() - static_cast<std::ptrdiff_t>(pb.size())))
                << name;
          }
        }
        EXPECT_LE(grown, 1) << name;
      }
    }
  }
}

}  // namespace
