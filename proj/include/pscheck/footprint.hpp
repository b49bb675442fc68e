#pragma once

#include <cstdint>
#include <vector>

#include "pscheck/syntax.hpp"

namespace pscheck {

// Locations a piece of code may touch, split by how the access interferes.
struct Access {
  LocMask r = 0;  // value reads
  LocMask w = 0;  // value writes
  LocMask m = 0;  // buffer changes: writes, fo, fl, rmw, block sets
  bool pb = false;
  Access& operator|=(const Access& o) {
    r |= o.r;
    w |= o.w;
    m |= o.m;
    pb = pb || o.pb;
    return *this;
  }
  bool operator==(const Access&) const = default;
};

// A spin gate: `g: load/cas r l ...` followed by `if cond(r) goto g`. The
// thread only gets past g + 1 once cond reads 0 on the value of l.
struct Gate {
  std::uint32_t pc = 0;
  LocId loc = 0;
  RegId reg = 0;
  Expr cond;
};

struct CodeSummary {
  std::vector<Access> full;         // everything reachable from pc
  std::vector<Access> pre;          // reachable without getting past a gate
  std::vector<std::uint64_t> gates; // gates met on the way, bits into Footprints::gates()
  std::vector<bool> ret_full, ret_pre;
  std::vector<std::int32_t> check_of;  // pc g + 1 of a gate -> gate index, else -1
  std::vector<std::uint64_t> live;     // registers still read later, by code or a CALL/RET label
};

// Per-pc future access summaries for every thread body and method.
class Footprints {
 public:
  explicit Footprints(const ConcurrentProgram& p);
  const CodeSummary& thread(std::size_t t) const { return threads_[t]; }
  const CodeSummary& method(std::size_t f) const { return methods_[f]; }
  const std::vector<Gate>& gates() const { return gates_; }

 private:
  std::vector<Gate> gates_;  // at most 64
  std::vector<CodeSummary> threads_;
  std::vector<CodeSummary> methods_;
};

Access instruction_access(const Instruction& ins);

// Per pc (end included), the registers whose value may still be used. CALL
// and RET labels use every register; havoc overwrites `window`.
std::vector<std::uint64_t> live_registers(const InstrSeq& code, std::uint64_t window, std::size_t nregs);

}  // namespace pscheck
