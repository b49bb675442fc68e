#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/container/small_vector.hpp>

namespace pscheck {

using Value = std::uint32_t;
using LocId = std::uint16_t;
using RegId = std::uint16_t;
using ThreadId = std::uint16_t;  // 0-based internally, printed 1-based
using BlockId = std::uint32_t;   // 0 is the "no block" marker
using LocMask = std::uint64_t;

inline constexpr BlockId kNoBlock = 0;
inline constexpr std::size_t kMaxLocations = 64;

inline LocMask loc_bit(LocId x) { return LocMask{1} << x; }
inline bool mask_has(LocMask m, LocId x) { return (m >> x) & 1U; }
inline bool mask_subset(LocMask a, LocMask b) { return (a & ~b) == 0; }

template <class F>
void for_each_loc(LocMask m, F&& f) {
  while (m != 0) {
    const int i = std::countr_zero(m);
    f(static_cast<LocId>(i));
    m &= m - 1;
  }
}

// Short vectors inside states stay off the heap.
template <class T, std::size_t N>
using SmallVec = boost::container::small_vector<T, N>;

using LocalStore = SmallVec<Value, 8>;

// Input problems: malformed text, ill-typed programs, unsafe linking.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SyntaxError : public InputError {
 public:
  SyntaxError(int line, int column, const std::string& msg)
      : InputError("line " + std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

class SafetyError : public InputError {
 public:
  SafetyError(std::string location, const std::string& msg)
      : InputError(msg), location_(std::move(location)) {}
  const std::string& location() const { return location_; }

 private:
  std::string location_;
};

// A trace that does not replay against the semantics.
class ReplayError : public InputError {
 public:
  ReplayError(std::size_t index, const std::string& msg)
      : InputError("step " + std::to_string(index) + ": " + msg), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

// A search ran out of its state budget before finishing.
class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pscheck
