#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pscheck/progsem.hpp"
#include "pscheck/syntax.hpp"

namespace pscheck {

struct BufferEntry {
  bool is_fo = false;
  ThreadId tid = 0;         // owner of an FO marker
  BlockId block = kNoBlock; // block of a write, kNoBlock outside blocks
  Value value = 0;
  bool operator==(const BufferEntry&) const = default;
};

using Buffer = SmallVec<BufferEntry, 4>;

struct BlockInfo {
  BlockId id = kNoBlock;
  LocMask locs = 0;
  bool operator==(const BlockInfo&) const = default;
  auto operator<=>(const BlockInfo&) const = default;
};

// PSC memory. Arrays are indexed by LocId over the whole location table;
// entries of the "wrong" durability stay zero / empty.
struct MemState {
  LocMask nv = 0;
  SmallVec<Value, 12> nvm;       // persistent memory
  SmallVec<Value, 12> vm;        // volatile memory
  SmallVec<Buffer, 12> buf;      // per-location persistence buffers
  SmallVec<BlockId, 24> active;  // open block per (thread, location), row-major by thread
  SmallVec<BlockInfo, 2> bid;    // allocated blocks, sorted by id
  BlockId next_block = 1;      // allocator cursor, ignored by ==

  std::size_t num_locations() const { return nvm.size(); }
  std::size_t num_threads() const { return nvm.empty() ? 0 : active.size() / nvm.size(); }
  BlockId active_at(ThreadId t, LocId x) const { return active[t * nvm.size() + x]; }
  BlockId& active_at(ThreadId t, LocId x) { return active[t * nvm.size() + x]; }
  const BlockInfo* find_block(BlockId b) const;
  bool is_nv(LocId x) const { return mask_has(nv, x); }
  std::size_t buffered_entries() const;

  bool operator==(const MemState& o) const {
    return nv == o.nv && nvm == o.nvm && vm == o.vm && buf == o.buf && active == o.active && bid == o.bid;
  }
};

MemState mem_init(const Decls& d, std::size_t num_threads);

Value mem_lookup(const MemState& m, LocId x);

// nullopt when the label is blocked. CALL and RET leave memory unchanged.
std::optional<MemState> mem_apply(const MemState& m, ThreadId t, const ActionLabel& l);

// Per-location prefix lengths to persist; locations with zero are omitted.
struct PersistChoice {
  std::vector<std::pair<LocId, std::uint32_t>> prefixes;
  bool operator==(const PersistChoice&) const = default;
  std::uint32_t prefix(LocId x) const;
  bool empty() const { return prefixes.empty(); }
};

enum class PersistMode : std::uint8_t { Units, Full };

bool persist_valid(const MemState& m, const PersistChoice& c);
std::vector<PersistChoice> persist_choices(const MemState& m, PersistMode mode);
MemState mem_persist(const MemState& m, const PersistChoice& c);
MemState mem_crash(const MemState& m);

// Every allocated block lies entirely inside x or entirely outside it.
bool separates(LocMask x, const MemState& m);
MemState restrict_mem(const MemState& m, LocMask x);
MemState merge_mem(const MemState& m1, LocMask x1, const MemState& m2, LocMask x2);

bool well_formed(const MemState& m, std::string* why = nullptr);

// Canonical serialization: block ids renamed by first occurrence in the
// buffers, then in the active table. With include_dead, blocks that no
// longer occur anywhere are kept (sorted by location set); otherwise they
// are dropped, which is what state memoization uses.
void append_mem_key(std::string& out, const MemState& m, bool include_dead);
// Key of what stays observable when no crash can happen any more: buffered
// values other than the newest write, persistent values hidden behind a
// buffered write, and every value at `unread` are dropped.
void append_observable_mem_key(std::string& out, const MemState& m, LocMask unread);
bool iso_equal(const MemState& a, const MemState& b);

std::string dump_mem(const MemState& m, const Decls& d);

void append_varint_slow(std::string& out, std::uint64_t v);
inline void append_varint(std::string& out, std::uint64_t v) {
  if (v < 0x80) out.push_back(static_cast<char>(v));
  else append_varint_slow(out, v);
}

}  // namespace pscheck
