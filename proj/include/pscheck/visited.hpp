#pragma once

#include <cstdint>
#include <string_view>
#include <utility>

#include <absl/container/flat_hash_set.h>
#include <absl/hash/hash.h>

namespace pscheck {

// Seen-state set over 128-bit fingerprints of state keys. Two distinct keys
// collide with probability about n^2 / 2^129, in which case one of them is
// wrongly treated as seen.
class VisitedSet {
 public:
  bool insert(std::string_view key) {
    const std::uint64_t a = absl::Hash<std::string_view>{}(key);
    const std::uint64_t b = absl::Hash<std::pair<std::string_view, std::uint64_t>>{}({key, 0x9e3779b97f4a7c15ULL});
    return set_.insert({a, b}).second;
  }
  std::size_t size() const { return set_.size(); }

 private:
  absl::flat_hash_set<std::pair<std::uint64_t, std::uint64_t>> set_;
};

}  // namespace pscheck
