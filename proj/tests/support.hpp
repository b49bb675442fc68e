#pragma once

#include <random>
#include <string>
#include <vector>

#include "pscheck/catalog.hpp"
#include "pscheck/parser.hpp"
#include "pscheck/refine.hpp"

namespace pscheck::test {

// Simulation relations for the two durable pair libraries.
inline constexpr const char* kPairRelation =
    "even(s) ? (x11n==x11s && x12n==x12s) : (x11new==x11s && x12new==x12s)";
inline constexpr const char* kBpairRelation =
    "f == 0 ? (x1nextn==x1s && x2nextn==x2s) : (x1prevn==x1s && x2prevn==x2s)";

inline Library cat_lib(const std::string& name) { return load_library(catalog_path(name + ".psc")); }
inline ConcurrentProgram cat_prog(const std::string& name) { return load_program(catalog_path(name + ".psc")); }

inline Bounds crash_bounds(std::uint32_t crashes, Value vmax = 2) {
  Bounds b;
  b.max_crashes = crashes;
  b.max_value = vmax;
  return b;
}

// States along random runs, every state of each run kept.
inline std::vector<SysState> sample_states(const System& sys, std::size_t want, std::uint64_t seed,
                                           std::size_t run_len = 200) {
  std::vector<SysState> out;
  for (std::uint64_t i = 0; out.size() < want && i < 100 * want; ++i) {
    const Trace t = random_run(sys, seed * 7919 + i, run_len);
    for (auto& s : replay(sys, t)) out.push_back(std::move(s));
  }
  return out;
}

// Closed programs of every shipped example, with the bounds used for sampling.
inline std::vector<std::pair<std::string, ConcurrentProgram>> example_programs() {
  std::vector<std::pair<std::string, ConcurrentProgram>> out;
  for (const auto& n : example_names()) {
    const ExampleCase c = load_example(n);
    switch (c.kind) {
      case CaseKind::Refine: {
        MgcConfig m = c.options.mgc;
        m.threads = 2;
        m.calls = 2;
        out.emplace_back(n, mgc_program(c.impl, m));
        break;
      }
      case CaseKind::Policy:
        out.emplace_back(n, link(c.program, c.spec));
        break;
      case CaseKind::Explore:
        out.emplace_back(n, c.program);
        break;
    }
  }
  return out;
}

}  // namespace pscheck::test
