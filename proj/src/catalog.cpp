#include "pscheck/catalog.hpp"

#include <algorithm>
#include <cstdlib>

#include "pscheck/parser.hpp"

namespace pscheck {

namespace {

struct Entry {
  const char* name;
  CaseKind kind;
  const char* impl;
  const char* spec;
  MgcKind mgc;
  std::uint32_t threads, calls, crashes;
  bool expect_holds;
  const char* note;
};

// Preset bounds are small enough for a unit test run. V_max is 2 throughout.
const Entry kEntries[] = {
    {"pair", CaseKind::Refine, "pair.psc", "pair-spec.psc", MgcKind::Rec, 1, 1, 1, true,
     "refuted from N=1,K=2 or N=2,K=1 with one crash; see README"},
    {"pair-flushed", CaseKind::Refine, "pair-flushed.psc", "pair-spec.psc", MgcKind::Rec, 1, 2, 1, true,
     "pair with the final sequence number flushed"},
    {"bpair", CaseKind::Refine, "bpair.psc", "bpair-spec.psc", MgcKind::Rec, 1, 2, 1, true, ""},
    {"pair-mutant-noflush", CaseKind::Refine, "pair-noflush.psc", "pair-spec.psc", MgcKind::Rec, 1, 1, 1, false,
     "odd sequence number not flushed before the in-place writes"},
    {"pair-mutant-nosfence", CaseKind::Refine, "pair-nosfence.psc", "pair-spec.psc", MgcKind::Rec, 1, 1, 1,
     false, "redo copy not fenced before the sequence number"},
    {"bpair-mutant-noflagflush", CaseKind::Refine, "bpair-noflagflush.psc", "bpair-spec.psc", MgcKind::Rec, 1, 2,
     1, false, "checkpoint flag not flushed in sync"},
    {"sfence-over-noop", CaseKind::Refine, "lib-sfence.psc", "lib-noop.psc", MgcKind::Free, 1, 1, 0, true,
     "an extra fence is a refinement"},
    {"noop-over-sfence", CaseKind::Refine, "lib-noop.psc", "lib-sfence.psc", MgcKind::Free, 1, 1, 0, false,
     "the spec promises a fence the implementation omits"},
    {"good-client", CaseKind::Policy, "good-client.psc", "pair.psc", MgcKind::Rec, 1, 0, 1, true,
     "recovers first in each era"},
    {"bad-client", CaseKind::Policy, "bad-client.psc", "pair.psc", MgcKind::Rec, 1, 0, 1, false,
     "calls write before recover"},
    {"litmus-noblock", CaseKind::Explore, "litmus-noblock.psc", "", MgcKind::Free, 1, 0, 1, true,
     "four post-crash memories"},
    {"litmus-block", CaseKind::Explore, "litmus-block.psc", "", MgcKind::Free, 1, 0, 1, true,
     "two post-crash memories"},
    {"fence-client-sfence", CaseKind::Explore, "fence-client.psc", "lib-sfence.psc", MgcKind::Free, 1, 0, 1, true,
     "x2=1 implies x1=1 after a crash"},
    {"fence-client-noop", CaseKind::Explore, "fence-client.psc", "lib-noop.psc", MgcKind::Free, 1, 0, 1, true,
     "x2=1, x1=0 reachable after a crash"},
};

const Entry* find_entry(const std::string& name) {
  for (const auto& e : kEntries)
    if (name == e.name) return &e;
  if (name == "pair-noflush") return find_entry("pair-mutant-noflush");
  if (name == "pair-nosfence") return find_entry("pair-mutant-nosfence");
  if (name == "bpair-noflagflush") return find_entry("bpair-mutant-noflagflush");
  return nullptr;
}

}  // namespace

std::string catalog_dir() {
  if (const char* d = std::getenv("PSCHECK_CATALOG")) return d;
  return PSCHECK_CATALOG_DIR;
}

std::string catalog_path(const std::string& file) { return catalog_dir() + "/" + file; }

std::vector<std::string> example_names() {
  std::vector<std::string> out;
  for (const auto& e : kEntries) out.emplace_back(e.name);
  return out;
}

ExampleCase load_example(const std::string& name) {
  const Entry* e = find_entry(name);
  if (!e) throw InputError("unknown example '" + name + "'");
  ExampleCase c;
  c.name = e->name;
  c.kind = e->kind;
  c.impl_file = catalog_path(e->impl);
  if (*e->spec) c.spec_file = catalog_path(e->spec);
  c.expect_holds = e->expect_holds;
  c.note = e->note;
  c.options.mgc.kind = e->mgc;
  c.options.mgc.threads = e->threads;
  c.options.mgc.calls = e->calls;
  c.options.bounds.max_crashes = e->crashes;
  c.options.bounds.max_value = 2;
  c.options.bounds.max_nondet_sf = kUnbounded;

  switch (c.kind) {
    case CaseKind::Refine: {
      c.impl = load_library(c.impl_file);
      c.spec = load_library(c.spec_file);
      // Both sides must be safe for the client that will drive them.
      Library a = c.impl, b = c.spec;
      unify_registers(a, b);
      check_safe(build_mgc(a, c.options.mgc), a);
      check_safe(build_mgc(b, c.options.mgc), b);
      break;
    }
    case CaseKind::Policy:
      c.program = load_program(c.impl_file);
      c.spec = load_library(c.spec_file);
      check_safe(c.program, c.spec);
      break;
    case CaseKind::Explore:
      c.program = load_program(c.impl_file);
      if (!c.spec_file.empty()) {
        c.spec = load_library(c.spec_file);
        c.program = link(c.program, c.spec);
      }
      break;
  }
  return c;
}

Verdict run_example(const ExampleCase& c) {
  switch (c.kind) {
    case CaseKind::Refine:
      return check_refines(c.impl, c.spec, c.options);
    case CaseKind::Policy:
      return check_policy(c.program, c.spec, c.options);
    case CaseKind::Explore:
      break;
  }
  throw InputError("example '" + c.name + "' is an exploration target");
}

}  // namespace pscheck
