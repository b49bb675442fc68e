#pragma once

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pscheck/syntax.hpp"

namespace pscheck {

enum class LabelKind : std::uint8_t {
  Read, Write, Flush, FlushOpt, SFence, PFence, PBBegin, PBEnd,
  Call, Ret,
  RMW,     // U(x, read, written)
  ReadEx,  // failed CAS: R-ex(x, read)
};

struct ActionLabel {
  LabelKind kind = LabelKind::SFence;
  LocId loc = 0;
  LocMask set = 0;
  Value v1 = 0;  // value read (R, U, R-ex) or written (W)
  Value v2 = 0;  // value written by U
  std::int32_t method = -1;
  LocalStore phi;  // Call and Ret

  bool operator==(const ActionLabel&) const = default;

  static ActionLabel make(LabelKind k, LocId x = 0, LocMask m = 0, Value a = 0, Value b = 0) {
    ActionLabel l;
    l.kind = k;
    l.loc = x;
    l.set = m;
    l.v1 = a;
    l.v2 = b;
    return l;
  }
  static ActionLabel read(LocId x, Value v) { return make(LabelKind::Read, x, 0, v); }
  static ActionLabel write(LocId x, Value v) { return make(LabelKind::Write, x, 0, v); }
  static ActionLabel rmw(LocId x, Value r, Value w) { return make(LabelKind::RMW, x, 0, r, w); }
  static ActionLabel read_ex(LocId x, Value v) { return make(LabelKind::ReadEx, x, 0, v); }
  static ActionLabel simple(LabelKind k, LocId x = 0) { return make(k, x); }
  static ActionLabel fence_set(LabelKind k, LocMask m) { return make(k, 0, m); }
};

// Locations a label talks about; empty for SF, CALL and RET.
LocMask varset(const ActionLabel& l);
// SFence, and RMW / R-ex on non-volatile locations.
bool is_sf_class(const ActionLabel& l, const Decls& d);
std::string label_to_string(const ActionLabel& l, const Decls& d, const std::vector<Method>& methods);

struct GotoChoice {
  std::uint32_t target = 0;
  bool operator==(const GotoChoice&) const = default;
};
struct HavocChoice {
  LocalStore store;
  bool operator==(const HavocChoice&) const = default;
};
// Marks the SF self-loop that is available in every program state.
struct NondetSf {
  bool operator==(const NondetSf&) const = default;
};

struct SeqThreadState {
  std::uint32_t pc = 0;
  std::int32_t pc_s = -1;  // return address in the main code; -1 while in main
  std::int32_t f = -1;     // active method; -1 for main
  LocalStore phi;

  bool operator==(const SeqThreadState&) const = default;
  bool in_method() const { return f >= 0; }
};

using ConcProgramState = SmallVec<SeqThreadState, 4>;

// Values a read of a location may return.
using ReadMenu = std::function<std::vector<Value>(LocId)>;

struct HavocDomain {
  std::vector<RegId> window;
  Value max_value = 3;
};

// One step of an instruction sequence.
struct IseqStep {
  std::optional<ActionLabel> label;  // nullopt is epsilon
  std::uint32_t pc = 0;
  LocalStore phi;
  std::variant<std::monostate, GotoChoice, HavocChoice> payload;
};

std::vector<IseqStep> iseq_enabled(const InstrSeq& code, std::uint32_t pc, const LocalStore& phi,
                                   const ReadMenu& menu, const HavocDomain& havoc);

struct ProgStep {
  std::optional<ActionLabel> label;
  SeqThreadState next;
  std::variant<std::monostate, GotoChoice, HavocChoice, NondetSf> payload;
};

// Steps of one sequential program (main code plus the shared methods).
// The non-deterministic SF self-loop is included when with_nondet_sf is set.
std::vector<ProgStep> seq_enabled(const ConcurrentProgram& p, std::size_t tid, const SeqThreadState& q,
                                  const ReadMenu& menu, const HavocDomain& havoc, bool with_nondet_sf);

ConcProgramState initial_program_state(const ConcurrentProgram& p);
bool thread_terminated(const ConcurrentProgram& p, std::size_t tid, const SeqThreadState& q);

struct ConcProgStep {
  std::size_t tid = 0;
  ProgStep step;
};

// Thread steps of all threads. The crash step is implicit: it is always
// available and leads to initial_program_state.
std::vector<ConcProgStep> prog_enabled(const ConcurrentProgram& p, const ConcProgramState& q,
                                       const ReadMenu& menu, const HavocDomain& havoc, bool with_nondet_sf);

HavocDomain havoc_domain(const ConcurrentProgram& p, Value max_value);

}  // namespace pscheck
