#include <gtest/gtest.h>

#include "support.hpp"

using namespace pscheck;
using namespace pscheck::test;

namespace {

TEST(Catalog, EveryCaseMatchesItsExpectation) {
  const auto names = example_names();
  ASSERT_FALSE(names.empty());
  for (const auto& name : names) {
    const ExampleCase c = load_example(name);
    EXPECT_EQ(c.name, name);
    if (c.kind == CaseKind::Explore) {
      const ExploreReport r = explore(System(c.program, c.options.bounds));
      EXPECT_FALSE(r.hit_state_budget) << name;
      EXPECT_FALSE(r.post_crash_memories.empty()) << name;
      continue;
    }
    const Verdict v = run_example(c);
    EXPECT_EQ(v.holds, c.expect_holds) << name << "\n" << verdict_to_text(v, c.impl.decls);
    EXPECT_FALSE(v.stats.hit_step_bound) << name;
    if (!v.holds) EXPECT_TRUE(v.cex) << name;
  }
}

TEST(Catalog, Aliases) {
  EXPECT_EQ(load_example("pair-noflush").name, "pair-mutant-noflush");
  EXPECT_EQ(load_example("pair-nosfence").name, "pair-mutant-nosfence");
  EXPECT_EQ(load_example("bpair-noflagflush").name, "bpair-mutant-noflagflush");
  EXPECT_THROW(load_example("no-such-case"), InputError);
}

TEST(Catalog, Contents) {
  const ExampleCase pair = load_example("pair");
  EXPECT_EQ(pair.kind, CaseKind::Refine);
  EXPECT_EQ(pair.options.mgc.kind, MgcKind::Rec);
  EXPECT_TRUE(pair.impl.find("recover"));
  EXPECT_TRUE(pair.spec.find("recover"));
  EXPECT_FALSE(load_example("bad-client").expect_holds);
  EXPECT_EQ(load_example("litmus-block").kind, CaseKind::Explore);
}

// Each mutant differs from its original by the one dropped instruction.
TEST(Catalog, MutantsDropOneInstruction) {
  const std::pair<const char*, const char*> pairs[] = {
      {"pair-noflush", "pair"}, {"pair-nosfence", "pair"}, {"bpair-noflagflush", "bpair"}};
  for (const auto& [mutant, original] : pairs) {
    const Library m = cat_lib(mutant);
    const Library o = cat_lib(original);
    std::size_t diff = 0;
    for (const auto& meth : o.methods) {
      const auto* mm = m.find(meth.name);
      ASSERT_TRUE(mm) << mutant;
      diff += meth.body.size() - mm->body.size();
    }
    EXPECT_EQ(diff, 1u) << mutant;
  }
}

TEST(Catalog, UnsafeClientRefused) {
  EXPECT_THROW(link(cat_prog("unsafe-client"), cat_lib("pair")), SafetyError);
}

}  // namespace
