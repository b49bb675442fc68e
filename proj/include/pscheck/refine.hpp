#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pscheck/history.hpp"
#include "pscheck/symmetry.hpp"
#include "pscheck/system.hpp"

namespace pscheck {

enum class MgcKind : std::uint8_t { Free, Rec };

struct MgcConfig {
  MgcKind kind = MgcKind::Free;
  std::uint32_t threads = 1;
  std::uint32_t calls = 1;  // calls per thread, recovery excluded
  // Methods the elected thread runs, in order, before anyone else proceeds.
  MethodSet recover = {"recover"};
  // Registers havoc ranges over; empty keeps the library's argument registers.
  std::vector<std::string> havoc_registers;
};

// The most general client for `lib`, still unlinked. Its symbol table lists
// the library's registers first, so phi layouts match lib's.
ConcurrentProgram build_mgc(const Library& lib, const MgcConfig& cfg);
// build_mgc linked with lib.
ConcurrentProgram mgc_program(const Library& lib, const MgcConfig& cfg);

// Re-expresses both libraries over one register table (union, first-seen
// order), so that call and return stores are comparable position-wise.
void unify_registers(Library& a, Library& b);

// Renames every location and method of lib with a prefix.
Library prefix_library(const Library& lib, const std::string& prefix);
// Disjoint union; throws InputError on a shared location or method name.
Library library_union(const Library& a, const Library& b);

// The spec side of a product: lazily built LTS of history-labelled edges and
// interned "macro states", the sets of spec states consistent with the
// history read so far, closed under silent steps.
class SpecModel {
 public:
  SpecModel(const System& sys, const MethodSet& f, bool ignore_sf = false);

  std::uint32_t root_macro(const std::vector<SysState>& roots);
  // kEmpty when no spec state can take the label.
  std::uint32_t step(std::uint32_t macro, const HistoryLabel& l);
  // The macro state whose members are those of `macro` renamed by p.
  std::uint32_t permute(std::uint32_t macro, const ValuePerm& p);
  const std::vector<std::uint32_t>& members(std::uint32_t macro) const { return macros_[macro]; }
  const SysState& state(std::uint32_t id) const { return states_[id]; }
  const System& system() const { return sys_; }
  std::optional<HistoryLabel> project(const ResolvedTransition& rt) const;

  std::size_t num_states() const { return states_.size(); }
  std::size_t num_macros() const { return macros_.size(); }

  static constexpr std::uint32_t kEmpty = 0;

 private:
  struct Edge {
    std::uint32_t label;  // 0 is silent
    std::uint32_t to;
  };
  std::uint32_t intern_state(SysState s);
  std::uint32_t intern_label(const HistoryLabel& l);
  const std::vector<Edge>& edges(std::uint32_t id);
  std::uint32_t close(std::vector<std::uint32_t> seeds);

  const System& sys_;
  HistoryProjector proj_;
  bool ignore_sf_;
  std::unordered_map<std::string, std::uint32_t> state_ids_;
  std::vector<SysState> states_;
  std::vector<std::vector<Edge>> edges_;
  std::vector<bool> expanded_;
  std::unordered_map<std::string, std::uint32_t> label_ids_;
  std::unordered_map<std::string, std::uint32_t> macro_ids_;
  std::vector<std::vector<std::uint32_t>> macros_;
  std::unordered_map<std::uint64_t, std::uint32_t> step_cache_;
  std::unordered_map<std::string, std::uint32_t> perm_cache_;
};

struct CheckStats {
  std::size_t product_nodes = 0;
  std::size_t spec_states = 0;
  std::size_t macros = 0;
  bool hit_step_bound = false;
  double seconds = 0;
};

struct Counterexample {
  History history;
  Trace trace;              // of the implementation side, from `start`
  SysState start;
  std::string trace_text;   // dump_trace form
  std::string reason;
};

struct Verdict {
  bool holds = false;
  Bounds bounds;
  CheckStats stats;
  std::optional<Counterexample> cex;
  // Extra human-readable lines (simulation pairs, verification notes).
  std::vector<std::string> notes;
};

struct RefineOptions {
  MgcConfig mgc;
  Bounds bounds;
  // Re-check each counterexample: replay it and confirm, by a separate
  // history-directed search, that the spec side cannot produce its history.
  bool verify = true;
  // Explore a reduced state space with the same histories: lazy persistence,
  // partial order reduction, forgetting unobservable values, and (refinement
  // only) data value symmetry.
  bool reduce = true;
  bool symmetry = true;  // with reduce
};

// histories(MGC[impl]) within bounds, each produced by MGC[spec].
Verdict check_refines(const Library& impl, const Library& spec, const RefineOptions& opt);

// Histories over dom lib of client[lib], each produced by MGC[lib].
Verdict check_policy(const ConcurrentProgram& client, const Library& lib, const RefineOptions& opt);

// Predicate over (impl persistent memory, spec persistent memory).
class SimRelation {
 public:
  // Names: impl locations bare or as impl.x / xn; spec locations as spec.x,
  // x# or xs; a bare name absent from impl falls back to spec.
  SimRelation(const std::string& text, const Decls& impl, const Decls& spec);
  bool operator()(const MemState& impl, const MemState& spec) const;
  const std::string& text() const { return text_; }

 private:
  std::string text_;
  Expr expr_;
  std::vector<LocId> impl_locs_;  // variable i < impl_locs_.size() reads impl_locs_[i]
  std::vector<LocId> spec_locs_;
};

struct SimOptions {
  RefineOptions refine;
  // Drop SF history labels on both sides.
  bool ignore_sf = false;
};

// Era-wise simulation check: from every related pair of persistent
// memories, each crashless MGC[impl] run must be matched by a crashless
// MGC[spec] run with the same history that ends related.
Verdict check_simulation(const Library& impl, const Library& spec, const std::string& relation, const SimOptions& opt);

// target = client code of cl_prog with the F methods of lib_prog.
ConcurrentProgram compose_program(const ConcurrentProgram& cl_prog, const ConcurrentProgram& lib_prog,
                                  const MethodSet& f);

struct Composition {
  Trace trace;
  SysState final_state;
  std::vector<std::string> problems;  // empty when every check passes
};

// Builds a trace of target from a trace of cl_sys and a trace of lib_sys
// with equal F-histories, then replays it and checks the history, the final
// thread states and the merged final memory.
Composition compose_traces(const System& cl_sys, const Trace& t_cl, const System& lib_sys, const Trace& t_lib,
                           const System& target, const MethodSet& f);

std::string verdict_to_json(const Verdict& v, const Decls& d);
std::string verdict_to_text(const Verdict& v, const Decls& d);
std::string bounds_to_string(const Bounds& b);

}  // namespace pscheck
