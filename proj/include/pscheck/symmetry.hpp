#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "pscheck/progsem.hpp"

namespace pscheck {

using RegMask = std::uint64_t;

// Data slots: registers (per program point) and locations whose contents
// are only copied around, never computed with, compared, branched on or
// reset to a constant. Renaming the values held in data slots maps runs to
// runs, so states that differ by such a renaming behave alike.
//
// Several programs may be typed together; their thread bodies are then
// identified slot by slot, which makes CALL and RET labels agree on which
// registers hold data.
class DataTyping {
 public:
  explicit DataTyping(const std::vector<const ConcurrentProgram*>& progs);

  // Data registers of a thread at its current point.
  RegMask data_registers(std::size_t prog, std::size_t tid, const SeqThreadState& q) const;
  LocMask data_locations(std::size_t prog) const { return locs_.empty() ? 0 : locs_[prog]; }
  // False when nothing can be renamed (or the programs do not line up).
  bool useful() const { return useful_; }

 private:
  struct Unit {
    std::vector<RegMask> data;  // per pc, end included
  };
  std::vector<std::vector<Unit>> threads_;  // [prog][tid]
  std::vector<std::vector<Unit>> methods_;  // [prog][method]
  std::vector<LocMask> locs_;
  bool useful_ = false;
};

// A renaming of the values 0..n-1; values outside stay put.
using ValuePerm = SmallVec<Value, 8>;

inline Value apply_perm(const ValuePerm& p, Value v) { return v < p.size() ? p[v] : v; }
ValuePerm invert(const ValuePerm& p);
ValuePerm compose(const ValuePerm& outer, const ValuePerm& inner);  // outer after inner
bool is_identity(const ValuePerm& p);

}  // namespace pscheck
