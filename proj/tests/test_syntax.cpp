#include <gtest/gtest.h>

#include "support.hpp"

using namespace pscheck;
using namespace pscheck::test;

namespace {

std::string names(const Decls& d, LocMask m) { return d.mask_names(m); }

TEST(Parse, TwoStoresOnOneLine) {
  const ConcurrentProgram p = parse_program("nonvolatile x1 x2\nthread 1:\n  store x1 1 ; store x2 1\n");
  ASSERT_EQ(p.threads.size(), 1u);
  ASSERT_EQ(p.threads[0].size(), 2u);
  EXPECT_EQ(p.threads[0][0].kind, InstrKind::Store);
  EXPECT_EQ(p.threads[0][1].loc, *p.decls.find_location("x2"));
}

TEST(Parse, LabelsResolveAndMultiTargetGotoKeepsAllTargets) {
  const ConcurrentProgram p = parse_program(
      "registers r\nthread 1:\nA: r := 1\n  goto A|B\nB: r := 2\n");
  const Instruction& g = p.threads[0][1];
  EXPECT_EQ(g.kind, InstrKind::IfGoto);
  EXPECT_EQ(g.targets, (std::vector<std::uint32_t>{0, 2}));
}

TEST(Parse, RecoveringClientText) {
  // The election and wait loop of the recovering client, written by hand.
  const ConcurrentProgram p = parse_program(R"(
volatile l1 l2
registers r
method recover:
  return
thread 1:
  cas r l1 0 1
  if r != 0 goto WAIT
  call recover
  store l2 1
  goto DONE
WAIT:
  load r l2
  if r == 0 goto WAIT
DONE:
  r := 0
)");
  const auto& code = p.threads[0];
  EXPECT_EQ(code[0].kind, InstrKind::Cas);
  EXPECT_FALSE(p.decls.is_nv(code[0].loc));
  EXPECT_TRUE(p.closed());
}

TEST(Parse, Errors) {
  try {
    parse_program("nonvolatile x\nthread 1:\n  store y 1\n");
    FAIL() << "undeclared location accepted";
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_EQ(e.column(), 9);
  }
  EXPECT_THROW(parse_program("registers r\nthread 1:\n  q := 1\n"), SyntaxError);
  EXPECT_THROW(parse_program("registers r\nthread 1:\nA: r := 1\nA: r := 2\n"), SyntaxError);
  EXPECT_THROW(parse_program("registers r\nthread 1:\n  goto NOWHERE\n"), SyntaxError);
  EXPECT_THROW(parse_program("volatile v\nthread 1:\n  fl v\n"), SyntaxError);
  try {
    parse_library("method f:\n  call g\n  return\n");
    FAIL() << "non-flat method accepted";
  } catch (const SyntaxError& e) {
    EXPECT_NE(std::string(e.what()).find("flat"), std::string::npos);
  }
}

TEST(Parse, RoundTripEveryCatalogFile) {
  for (const char* f : {"pair", "pair-spec", "bpair", "bpair-spec", "pair-noflush", "pair-nosfence",
                        "bpair-noflagflush", "pair-flushed", "lib-noop", "lib-sfence", "litmus-block",
                        "litmus-noblock", "fence-client", "good-client", "bad-client", "unsafe-client"}) {
    const std::string text = read_file(catalog_path(std::string(f) + ".psc"));
    const ConcurrentProgram p = parse_program(text);
    EXPECT_EQ(parse_program(print_program(p)), p) << f;
  }
  const ConcurrentProgram mgc = mgc_program(cat_lib("pair"), {MgcKind::Rec, 2, 2});
  EXPECT_EQ(parse_program(print_program(mgc)), mgc);
}

TEST(UsedLocations, Examples) {
  const ConcurrentProgram p =
      parse_program("nonvolatile x1 x2\nthread 1:\n  pb_begin {x1, x2}\n  store x1 1\n");
  EXPECT_EQ(names(p.decls, used_locations(p.threads[0])), "{x1, x2}");
  const Library noop = cat_lib("lib-noop");
  EXPECT_EQ(used_locations(noop), 0u);
  const Library pair = cat_lib("pair");
  EXPECT_EQ(names(pair.decls, used_locations(pair)), "{x11, x12, x11new, x12new, s, l}");
}

TEST(Safety, Examples) {
  const Library pair = cat_lib("pair");
  EXPECT_TRUE(is_safe(build_mgc(pair, {MgcKind::Rec, 2, 2}), pair));

  const Library writer = parse_library("nonvolatile x\nmethod f:\n  store x 1\n  return\n");
  const ConcurrentProgram client = parse_program("nonvolatile x\nthread 1:\n  store x 2\n  call f\n");
  EXPECT_FALSE(is_safe(client, writer));

  const Library both = library_union(prefix_library(pair, "p_"), prefix_library(cat_lib("bpair"), "b_"));
  MgcConfig cfg{MgcKind::Rec, 1, 1};
  cfg.recover = {"p_recover", "b_recover"};
  EXPECT_TRUE(is_safe(build_mgc(both, cfg), both));
}

TEST(Link, Examples) {
  const Library noop = cat_lib("lib-noop");
  const ConcurrentProgram p = mgc_program(noop, {MgcKind::Free, 1, 1});
  const auto f = p.method_index("f");
  ASSERT_TRUE(f);
  ASSERT_EQ(p.methods[static_cast<std::size_t>(*f)].body.size(), 1u);
  EXPECT_EQ(p.methods[static_cast<std::size_t>(*f)].body[0].kind, InstrKind::Return);

  const Library pair = cat_lib("pair");
  EXPECT_TRUE(mgc_program(pair, {MgcKind::Rec, 2, 2}).closed());

  const ConcurrentProgram reuse = parse_program("nonvolatile s\nregisters r1\nthread 1:\n  store s 1\n  call write\n");
  try {
    link(reuse, pair);
    FAIL() << "unsafe link accepted";
  } catch (const SafetyError& e) {
    EXPECT_EQ(e.location(), "s");
  }
}

TEST(Link, Properties) {
  for (const char* client : {"fence-client", "good-client", "bad-client"}) {
    const ConcurrentProgram pr = cat_prog(client);
    const Library lib = std::string(client) == "fence-client" ? cat_lib("lib-sfence") : cat_lib("pair");
    const ConcurrentProgram linked = link(pr, lib);
    const MethodSet dom = lib.method_names();
    EXPECT_EQ(names(linked.decls, used_client_locations(linked, dom)),
              names(pr.decls, used_client_locations(pr, dom)))
        << client;
    EXPECT_EQ(link(linked, lib), linked) << client;
  }
}

}  // namespace
