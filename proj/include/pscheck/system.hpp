#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "pscheck/memsem.hpp"
#include "pscheck/progsem.hpp"

namespace pscheck {

inline constexpr std::uint32_t kUnbounded = std::numeric_limits<std::uint32_t>::max();

struct Bounds {
  std::uint32_t max_steps = 1'000'000;
  std::uint32_t max_crashes = 0;
  std::uint32_t max_per_between_steps = 8;  // Full mode only
  std::uint32_t max_nondet_sf = 0;          // kUnbounded: offered everywhere, not counted
  Value max_value = 3;
  PersistMode mode = PersistMode::Units;
  std::size_t max_states = 40'000'000;
  unsigned jobs = 1;
  // History-preserving reductions, used by the refinement checks.
  // lazy_persist: persist steps only while some thread step is blocked by
  // memory; a crash step comes with every persist sequence that may precede
  // it (see Successor::prefix).
  bool lazy_persist = false;
  // Ample sets: when one thread's next step is invisible and independent of
  // all the other threads can do before it, only that step is offered.
  bool partial_order = false;
  // States that differ only in dead registers share one key. Once the crash
  // budget is spent, states that differ only in values no later load can
  // return share one key too, and (units mode) every step is followed by
  // all the persists it allows, since nothing can observe persistence then.
  bool forget_unobservable = false;
  // Callers that track a value renaming per state (the product search) may
  // canonicalize states up to renaming of data values.
  bool value_symmetry = false;
};

struct SysState {
  ConcProgramState prog;
  MemState mem;
  std::uint32_t crashes = 0;
  std::uint32_t nondet_sf = 0;
  std::uint32_t per_run = 0;  // consecutive persist steps (Full mode)
  bool operator==(const SysState&) const = default;
};

enum class TransKind : std::uint8_t { Thread, Persist, Crash };

using Payload = std::variant<std::monostate, GotoChoice, HavocChoice, NondetSf, PersistChoice>;

struct ResolvedTransition {
  TransKind kind = TransKind::Thread;
  ThreadId tid = 0;
  std::optional<ActionLabel> label;  // thread steps only; nullopt is epsilon
  Payload payload;
  bool operator==(const ResolvedTransition&) const = default;
};

using Trace = std::vector<ResolvedTransition>;

struct Successor {
  ResolvedTransition rt;
  SysState state;
  Trace prefix;  // persist steps taken right before rt
  Trace suffix;  // persist steps taken right after rt
};

struct CrashImage {
  MemState mem;    // right after the crash
  Trace persists;  // leading there from the state
};

class Footprints;
class DataTyping;
using ValuePerm = SmallVec<Value, 8>;

// Pr ⋈ PSC for one closed program under fixed bounds.
class System {
 public:
  System(ConcurrentProgram prog, Bounds bounds);

  const ConcurrentProgram& program() const { return prog_; }
  const Decls& decls() const { return prog_.decls; }
  const Bounds& bounds() const { return bounds_; }

  SysState initial() const;
  SysState initial_with_nvm(const std::vector<Value>& nvm) const;
  // Deterministic order: threads ascending, then persist choices, then crash.
  std::vector<Successor> enabled(const SysState& s) const;
  // Applies one transition; throws std::invalid_argument when not enabled.
  // Budgets are not enforced here, only the semantics.
  SysState apply(const SysState& s, const ResolvedTransition& rt) const;
  void append_key(std::string& out, const SysState& s) const;
  std::string key(const SysState& s) const;

  // Value renaming. With value_symmetry, canonicalize rewrites s to the
  // representative of its class and returns the renaming applied (empty when
  // symmetry is off or nothing moved). Values from *named up do not occur
  // in the canonical state, so any renaming among them keeps it.
  void use_typing(std::shared_ptr<const DataTyping> typing, std::size_t index);
  bool has_typing() const { return typing_ != nullptr; }
  ValuePerm canonicalize(SysState& s, Value* named = nullptr) const;
  SysState permute(const SysState& s, const ValuePerm& p) const;
  // The transition that `rt` from `from` becomes when both are renamed by p.
  ResolvedTransition permute(const ResolvedTransition& rt, const SysState& from, const ValuePerm& p) const;

  // One entry per distinct post-crash memory reachable by persisting first.
  std::vector<CrashImage> crash_images(const SysState& s) const;

  std::vector<Value> nv_values(const MemState& m) const;  // persistent memory at NV locations
  std::string transition_to_string(const ResolvedTransition& rt) const;
  std::string state_to_string(const SysState& s) const;

 private:
  bool ample_ok(const SysState& s, std::size_t t, bool sf_offered) const;
  LocMask unread_locations(const SysState& s) const;
  std::uint64_t live_at(std::size_t tid, const SeqThreadState& q) const;
  void drain(SysState& s, Trace& steps) const;
  bool last_era(const SysState& s) const { return bounds_.forget_unobservable && s.crashes >= bounds_.max_crashes; }

  ConcurrentProgram prog_;
  Bounds bounds_;
  HavocDomain havoc_;
  std::shared_ptr<const Footprints> fp_;
  std::shared_ptr<const DataTyping> typing_;
  std::size_t typing_index_ = 0;
};

// Replays from `from` (initial state when absent) and returns every state.
std::vector<SysState> replay(const System& sys, const Trace& t, const std::optional<SysState>& from = std::nullopt);

// One transition per line: "<tid> <label> [payload]", "per {x:k,...}", "crash".
std::string dump_trace(const System& sys, const Trace& t);
Trace parse_trace(const System& sys, std::string_view text);

struct NodeRef {
  std::uint32_t parent = 0;
  std::uint32_t choice = 0;  // index into System::enabled(parent state)
};

// Breadth-first explorer with canonical-state memoization. Node 0 is the root.
class Explorer {
 public:
  struct Visitor {
    virtual ~Visitor() = default;
    virtual void on_state(const SysState&, std::uint32_t /*node*/) {}
    virtual void on_transition(const SysState& /*from*/, const ResolvedTransition&, const SysState& /*to*/,
                               std::uint32_t /*to_node*/, bool /*fresh*/) {}
    // Returning false stops the search.
    virtual bool keep_going() { return true; }
  };

  explicit Explorer(const System& sys) : sys_(sys) {}

  void run(Visitor* v = nullptr, const std::optional<SysState>& root = std::nullopt);

  std::size_t states() const { return nodes_.size(); }
  std::size_t transitions() const { return transitions_; }
  bool hit_step_bound() const { return hit_step_bound_; }
  bool hit_state_budget() const { return hit_state_budget_; }
  Trace witness(std::uint32_t node) const;
  const SysState& root() const { return root_; }

 private:
  const System& sys_;
  SysState root_;
  std::vector<NodeRef> nodes_;
  std::size_t transitions_ = 0;
  bool hit_step_bound_ = false;
  bool hit_state_budget_ = false;
};

// Rebuilds the trace of a node path recorded as (parent, choice) pairs.
// Lossless compact encoding, for holding many states in a search queue.
std::string pack_state(const SysState& s);
SysState unpack_state(std::string_view bytes);

// With `canonical`, choices index the successors of canonicalized states and
// the returned trace is mapped back to run from root itself.
Trace trace_from_choices(const System& sys, const SysState& root, const std::vector<std::uint32_t>& choices,
                         bool canonical = false);

struct ExploreReport {
  std::size_t states = 0;
  std::size_t transitions = 0;
  bool hit_step_bound = false;
  bool hit_state_budget = false;
  std::set<std::vector<Value>> nv_memories;          // over all reachable states
  std::set<std::vector<Value>> post_crash_memories;  // right after each crash
};

ExploreReport explore(const System& sys);
std::set<std::vector<Value>> reachable_nv_memories(const System& sys);

// Uniformly random walk; stops at a dead end or after max_steps.
Trace random_run(const System& sys, std::uint64_t seed, std::size_t max_steps);

}  // namespace pscheck
