#pragma once

// Client/library trace pairs with equal histories, built from the shipped
// examples. Shared by the unit tests and the acceptance runner.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "support.hpp"

namespace pscheck::test {

struct ComposeCase {
  std::string name;
  ConcurrentProgram cl_prog;   // client code linked with some implementation of f
  ConcurrentProgram lib_prog;  // another client linked with the library whose code is kept
  MethodSet f;
  Bounds bounds;
  Trace t_cl;
  Trace t_lib;
};

using HistoryFilter = std::function<bool(const History&, const Trace&)>;

// Fills t_cl from random runs of cl_prog accepted by keep, and t_lib from a
// history-directed search over lib_prog. Nullopt when no seed works.
inline std::optional<ComposeCase> build_compose_case(std::string name, ConcurrentProgram cl_prog,
                                                     ConcurrentProgram lib_prog, MethodSet f, Bounds bounds,
                                                     const HistoryFilter& keep, std::size_t run_len = 200) {
  const System cl_sys(cl_prog, bounds);
  const System lib_sys(lib_prog, bounds);
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    Trace t = random_run(cl_sys, seed, run_len);
    const History h = history_of(cl_sys, t, f);
    if (!keep(h, t)) continue;
    auto w = find_history_witness(lib_sys, f, h);
    if (!w) continue;
    return ComposeCase{std::move(name), std::move(cl_prog), std::move(lib_prog), std::move(f), bounds,
                       std::move(t), std::move(*w)};
  }
  return std::nullopt;
}

inline bool has_crash(const Trace& t) {
  return std::any_of(t.begin(), t.end(), [](const ResolvedTransition& r) { return r.kind == TransKind::Crash; });
}

inline std::size_t count_kind(const History& h, HistoryLabel::Kind k) {
  return static_cast<std::size_t>(std::count_if(h.begin(), h.end(), [&](const HistoryLabel& l) { return l.kind == k; }));
}

// A store fence strictly between a call and its return.
inline bool sf_inside_call(const History& h) {
  bool open = false;
  for (const auto& l : h) {
    if (l.kind == HistoryLabel::Call) open = true;
    else if (l.kind == HistoryLabel::Ret || l.kind == HistoryLabel::Crash) open = false;
    else if (l.kind == HistoryLabel::Sf && open) return true;
  }
  return false;
}

// 1. The fence client over lib-sfence against MGC_free[lib-sfence].
// 2. The fence client over lib-noop, with a non-deterministic fence inside
//    the call, against MGC_free[lib-sfence].
// 3. The recovering client over pair, with a crash, against MGC_rec[pair-spec].
inline std::vector<std::optional<ComposeCase>> example_compose_cases() {
  std::vector<std::optional<ComposeCase>> out;
  Bounds b = crash_bounds(1);
  b.max_nondet_sf = kUnbounded;

  const Library sfence = cat_lib("lib-sfence");
  const ConcurrentProgram mgc_sfence = mgc_program(sfence, {MgcKind::Free, 1, 1});
  out.push_back(build_compose_case("fence-client-sfence", link(cat_prog("fence-client"), sfence), mgc_sfence,
                                   sfence.method_names(), b, [](const History& h, const Trace& t) {
                                     return count_kind(h, HistoryLabel::Ret) >= 1 && has_crash(t);
                                   }));
  out.push_back(build_compose_case("fence-client-noop", link(cat_prog("fence-client"), cat_lib("lib-noop")),
                                   mgc_sfence, sfence.method_names(), b, [](const History& h, const Trace&) {
                                     return sf_inside_call(h) && count_kind(h, HistoryLabel::Ret) >= 1;
                                   }));

  Library pair = cat_lib("pair");
  Library spec = cat_lib("pair-spec");
  unify_registers(pair, spec);
  MgcConfig rec{MgcKind::Rec, 1, 2};
  out.push_back(build_compose_case(
      "good-client-pair", link(cat_prog("good-client"), pair), mgc_program(spec, rec), pair.method_names(), b,
      [](const History& h, const Trace& t) { return has_crash(t) && count_kind(h, HistoryLabel::Ret) >= 3; }, 400));
  return out;
}

// Composes a case and returns the problems found, including replay and
// history-mismatch errors.
inline std::vector<std::string> compose_problems(const ComposeCase& c) {
  const System cl_sys(c.cl_prog, c.bounds);
  const System lib_sys(c.lib_prog, c.bounds);
  const System target(compose_program(c.cl_prog, c.lib_prog, c.f), c.bounds);
  try {
    Composition r = compose_traces(cl_sys, c.t_cl, lib_sys, c.t_lib, target, c.f);
    if (r.problems.empty()) replay(target, r.trace);
    return r.problems;
  } catch (const std::exception& e) {
    return {e.what()};
  }
}

}  // namespace pscheck::test
