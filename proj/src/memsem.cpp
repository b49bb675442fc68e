#include "pscheck/memsem.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace pscheck {

const BlockInfo* MemState::find_block(BlockId b) const {
  auto it = std::lower_bound(bid.begin(), bid.end(), b, [](const BlockInfo& i, BlockId v) { return i.id < v; });
  return it != bid.end() && it->id == b ? &*it : nullptr;
}

std::size_t MemState::buffered_entries() const {
  std::size_t n = 0;
  for (const auto& b : buf) n += b.size();
  return n;
}

MemState mem_init(const Decls& d, std::size_t num_threads) {
  MemState m;
  const std::size_t n = d.locations.size();
  m.nv = d.nv_mask();
  m.nvm.assign(n, 0);
  m.vm.assign(n, 0);
  m.buf.assign(n, {});
  m.active.assign(n * num_threads, kNoBlock);
  return m;
}

Value mem_lookup(const MemState& m, LocId x) {
  if (!m.is_nv(x)) return m.vm[x];
  const Buffer& b = m.buf[x];
  for (auto it = b.rbegin(); it != b.rend(); ++it)
    if (!it->is_fo) return it->value;
  return m.nvm[x];
}

namespace {

bool has_fo(const Buffer& b, ThreadId t) {
  for (const auto& e : b)
    if (e.is_fo && e.tid == t) return true;
  return false;
}

bool sf_enabled(const MemState& m, ThreadId t, LocMask over) {
  bool ok = true;
  for_each_loc(over & m.nv, [&](LocId x) { ok = ok && !has_fo(m.buf[x], t); });
  return ok;
}

LocMask all_locs(const MemState& m) {
  return m.nvm.size() >= 64 ? ~LocMask{0} : (LocMask{1} << m.nvm.size()) - 1;
}

void do_write(MemState& m, ThreadId t, LocId x, Value v) {
  if (m.is_nv(x)) m.buf[x].push_back(BufferEntry{false, 0, m.active_at(t, x), v});
  else m.vm[x] = v;
}

}  // namespace

std::optional<MemState> mem_apply(const MemState& m, ThreadId t, const ActionLabel& l) {
  switch (l.kind) {
    case LabelKind::Read:
      if (mem_lookup(m, l.loc) != l.v1) return std::nullopt;
      return m;
    case LabelKind::Write: {
      MemState r = m;
      do_write(r, t, l.loc, l.v1);
      return r;
    }
    case LabelKind::Flush:
      if (m.is_nv(l.loc) && !m.buf[l.loc].empty()) return std::nullopt;
      return m;
    case LabelKind::FlushOpt: {
      if (!m.is_nv(l.loc)) return m;
      MemState r = m;
      r.buf[l.loc].push_back(BufferEntry{true, t, kNoBlock, 0});
      return r;
    }
    case LabelKind::SFence:
      if (!sf_enabled(m, t, all_locs(m))) return std::nullopt;
      return m;
    case LabelKind::PFence:
      if (!sf_enabled(m, t, l.set)) return std::nullopt;
      return m;
    case LabelKind::PBBegin: {
      bool free = true;
      for_each_loc(l.set, [&](LocId x) { free = free && m.active_at(t, x) == kNoBlock; });
      if (!free) return std::nullopt;
      MemState r = m;
      BlockId b = r.next_block;
      while (r.find_block(b) != nullptr) ++b;
      r.next_block = b + 1;
      for_each_loc(l.set, [&](LocId x) { r.active_at(t, x) = b; });
      r.bid.push_back(BlockInfo{b, l.set});
      std::sort(r.bid.begin(), r.bid.end());
      return r;
    }
    case LabelKind::PBEnd: {
      MemState r = m;
      for_each_loc(l.set, [&](LocId x) { r.active_at(t, x) = kNoBlock; });
      return r;
    }
    case LabelKind::Call:
    case LabelKind::Ret:
      return m;
    case LabelKind::RMW: {
      if (m.is_nv(l.loc) && !sf_enabled(m, t, all_locs(m))) return std::nullopt;
      if (mem_lookup(m, l.loc) != l.v1) return std::nullopt;
      MemState r = m;
      do_write(r, t, l.loc, l.v2);
      return r;
    }
    case LabelKind::ReadEx:
      if (m.is_nv(l.loc) && !sf_enabled(m, t, all_locs(m))) return std::nullopt;
      if (mem_lookup(m, l.loc) != l.v1) return std::nullopt;
      return m;
  }
  return std::nullopt;
}

std::uint32_t PersistChoice::prefix(LocId x) const {
  for (const auto& [loc, k] : prefixes)
    if (loc == x) return k;
  return 0;
}

namespace {

bool block_active(const MemState& m, BlockId b) {
  return std::find(m.active.begin(), m.active.end(), b) != m.active.end();
}

// Prefix lengths as a dense vector.
std::vector<std::uint32_t> dense(const MemState& m, const PersistChoice& c) {
  std::vector<std::uint32_t> p(m.buf.size(), 0);
  for (const auto& [x, k] : c.prefixes) p.at(x) = k;
  return p;
}

PersistChoice sparse(const std::vector<std::uint32_t>& p) {
  PersistChoice c;
  for (std::size_t x = 0; x < p.size(); ++x)
    if (p[x] > 0) c.prefixes.emplace_back(static_cast<LocId>(x), p[x]);
  return c;
}

bool valid_dense(const MemState& m, const std::vector<std::uint32_t>& p) {
  for (std::size_t x = 0; x < m.buf.size(); ++x) {
    if (p[x] > m.buf[x].size()) return false;
    for (std::uint32_t i = 0; i < p[x]; ++i) {
      const BufferEntry& e = m.buf[x][i];
      if (e.is_fo || e.block == kNoBlock) continue;
      if (block_active(m, e.block)) return false;
      for (std::size_t y = 0; y < m.buf.size(); ++y)
        for (std::size_t j = p[y]; j < m.buf[y].size(); ++j)
          if (!m.buf[y][j].is_fo && m.buf[y][j].block == e.block) return false;
    }
  }
  return true;
}

// Smallest choice containing the head of x that keeps every touched block whole.
std::vector<std::uint32_t> head_closure(const MemState& m, LocId x) {
  std::vector<std::uint32_t> p(m.buf.size(), 0);
  p[x] = 1;
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t y = 0; y < m.buf.size(); ++y) {
      for (std::uint32_t i = 0; i < p[y]; ++i) {
        const BufferEntry& e = m.buf[y][i];
        if (e.is_fo || e.block == kNoBlock) continue;
        for (std::size_t z = 0; z < m.buf.size(); ++z) {
          for (std::size_t j = m.buf[z].size(); j > p[z]; --j) {
            const BufferEntry& f = m.buf[z][j - 1];
            if (!f.is_fo && f.block == e.block) {
              p[z] = static_cast<std::uint32_t>(j);
              changed = true;
              break;
            }
          }
        }
      }
    }
  }
  return p;
}

bool dense_leq(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] > b[i]) return false;
  return true;
}

}  // namespace

bool persist_valid(const MemState& m, const PersistChoice& c) {
  if (c.empty()) return false;
  for (const auto& [x, k] : c.prefixes)
    if (x >= m.buf.size() || k == 0) return false;
  return valid_dense(m, dense(m, c));
}

std::vector<PersistChoice> persist_choices(const MemState& m, PersistMode mode) {
  std::vector<PersistChoice> out;
  const std::size_t n = m.buf.size();
  if (mode == PersistMode::Units) {
    std::vector<std::vector<std::uint32_t>> cands;
    for (std::size_t x = 0; x < n; ++x) {
      if (m.buf[x].empty()) continue;
      auto p = head_closure(m, static_cast<LocId>(x));
      if (!valid_dense(m, p)) continue;
      if (std::find(cands.begin(), cands.end(), p) == cands.end()) cands.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < cands.size(); ++i) {
      bool minimal = true;
      for (std::size_t j = 0; j < cands.size() && minimal; ++j)
        if (i != j && dense_leq(cands[j], cands[i])) minimal = false;
      if (minimal) out.push_back(sparse(cands[i]));
    }
    return out;
  }
  std::vector<std::uint32_t> p(n, 0);
  for (;;) {
    std::size_t x = 0;
    for (; x < n; ++x) {
      if (p[x] < m.buf[x].size()) {
        ++p[x];
        break;
      }
      p[x] = 0;
    }
    if (x == n) break;
    if (valid_dense(m, p)) out.push_back(sparse(p));
  }
  return out;
}

MemState mem_persist(const MemState& m, const PersistChoice& c) {
  MemState r = m;
  for (const auto& [x, k] : c.prefixes) {
    Buffer& b = r.buf[x];
    for (std::uint32_t i = 0; i < k; ++i)
      if (!b[i].is_fo) r.nvm[x] = b[i].value;
    b.erase(b.begin(), b.begin() + k);
  }
  return r;
}

MemState mem_crash(const MemState& m) {
  MemState r;
  r.nv = m.nv;
  r.nvm = m.nvm;
  r.vm.assign(m.vm.size(), 0);
  r.buf.assign(m.buf.size(), {});
  r.active.assign(m.active.size(), kNoBlock);
  return r;
}

bool separates(LocMask x, const MemState& m) {
  for (const auto& b : m.bid)
    if (!mask_subset(b.locs, x) && (b.locs & x) != 0) return false;
  return true;
}

MemState restrict_mem(const MemState& m, LocMask x) {
  MemState r = m;
  for (std::size_t i = 0; i < m.nvm.size(); ++i) {
    if (mask_has(x, static_cast<LocId>(i))) continue;
    r.nvm[i] = 0;
    r.vm[i] = 0;
    r.buf[i].clear();
    for (std::size_t t = 0; t < m.num_threads(); ++t) r.active_at(static_cast<ThreadId>(t), static_cast<LocId>(i)) = kNoBlock;
  }
  r.bid.clear();
  for (const auto& b : m.bid)
    if (mask_subset(b.locs, x)) r.bid.push_back(b);
  return r;
}

MemState merge_mem(const MemState& m1, LocMask x1, const MemState& m2, LocMask x2) {
  MemState r = mem_crash(m1);
  for (std::size_t i = 0; i < m1.nvm.size(); ++i) {
    const auto x = static_cast<LocId>(i);
    const MemState* src = mask_has(x1, x) ? &m1 : mask_has(x2, x) ? &m2 : nullptr;
    r.nvm[i] = src ? src->nvm[i] : 0;
    r.vm[i] = src ? src->vm[i] : 0;
    r.buf[i] = src ? src->buf[i] : Buffer{};
    for (std::size_t t = 0; t < m1.num_threads(); ++t)
      r.active_at(static_cast<ThreadId>(t), x) = src ? src->active_at(static_cast<ThreadId>(t), x) : kNoBlock;
  }
  for (const auto& b : m1.bid)
    if (mask_subset(b.locs, x1)) r.bid.push_back(b);
  for (const auto& b : m2.bid)
    if (mask_subset(b.locs, x2) && std::find(r.bid.begin(), r.bid.end(), b) == r.bid.end()) r.bid.push_back(b);
  std::sort(r.bid.begin(), r.bid.end());
  r.next_block = std::max(m1.next_block, m2.next_block);
  return r;
}

bool well_formed(const MemState& m, std::string* why) {
  auto fail = [&](const std::string& s) {
    if (why) *why = s;
    return false;
  };
  for (std::size_t x = 0; x < m.buf.size(); ++x) {
    if (!m.is_nv(static_cast<LocId>(x)) && !m.buf[x].empty())
      return fail("volatile location " + std::to_string(x) + " has a buffer");
    for (const auto& e : m.buf[x]) {
      if (e.is_fo || e.block == kNoBlock) continue;
      const BlockInfo* b = m.find_block(e.block);
      if (!b || !mask_has(b->locs, static_cast<LocId>(x)))
        return fail("write of block " + std::to_string(e.block) + " at location " + std::to_string(x) +
                    " without a matching allocation");
    }
  }
  for (std::size_t t = 0; t < m.num_threads(); ++t) {
    for (std::size_t x = 0; x < m.buf.size(); ++x) {
      const BlockId id = m.active_at(static_cast<ThreadId>(t), static_cast<LocId>(x));
      if (id == kNoBlock) continue;
      const BlockInfo* b = m.find_block(id);
      if (!b || !mask_has(b->locs, static_cast<LocId>(x)))
        return fail("active block " + std::to_string(id) + " without a matching allocation");
    }
  }
  return true;
}

void append_varint_slow(std::string& out, std::uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<char>((v & 0x7f) | 0x80));
    v >>= 7;
  }
  out.push_back(static_cast<char>(v));
}

namespace {
void append_mem_key_impl(std::string& out, const MemState& m, bool include_dead, bool observable, LocMask unread);
}  // namespace

void append_mem_key(std::string& out, const MemState& m, bool include_dead) {
  append_mem_key_impl(out, m, include_dead, false, 0);
}

void append_observable_mem_key(std::string& out, const MemState& m, LocMask unread) {
  append_mem_key_impl(out, m, false, true, unread);
}

namespace {

void append_mem_key_impl(std::string& out, const MemState& m, bool include_dead, bool observable, LocMask unread) {
  // Small fixed-size rename table; block ids are dense in practice.
  std::vector<std::pair<BlockId, std::uint32_t>> names;
  auto rename = [&](BlockId b) -> std::uint32_t {
    if (b == kNoBlock) return 0;
    for (const auto& [id, n] : names)
      if (id == b) return n;
    names.emplace_back(b, static_cast<std::uint32_t>(names.size() + 1));
    return static_cast<std::uint32_t>(names.size());
  };
  for (std::size_t x = 0; x < m.nvm.size(); ++x) {
    const Buffer& b = m.buf[x];
    // Without crashes ahead only the newest write of a buffer is ever read.
    std::size_t newest = b.size();
    if (observable)
      for (std::size_t i = 0; i < b.size(); ++i)
        if (!b[i].is_fo) newest = i;
    const bool seen = !observable || !mask_has(unread, static_cast<LocId>(x));
    const Value mem = m.is_nv(static_cast<LocId>(x)) ? m.nvm[x] : m.vm[x];
    append_varint(out, seen && newest == b.size() ? mem : 0);
    append_varint(out, b.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
      const auto& e = b[i];
      if (e.is_fo) {
        append_varint(out, 0);
        append_varint(out, e.tid);
      } else {
        append_varint(out, 1 + rename(e.block));
        append_varint(out, seen && (!observable || i == newest) ? e.value : 0);
      }
    }
  }
  for (BlockId b : m.active) append_varint(out, rename(b));
  // Location sets of live blocks in renamed order.
  for (const auto& [id, n] : names) {
    const BlockInfo* b = m.find_block(id);
    append_varint(out, b ? b->locs : 0);
  }
  if (include_dead) {
    std::vector<LocMask> dead;
    for (const auto& b : m.bid) {
      bool live = false;
      for (const auto& [id, n] : names) live = live || id == b.id;
      if (!live) dead.push_back(b.locs);
    }
    std::sort(dead.begin(), dead.end());
    append_varint(out, dead.size());
    for (LocMask d : dead) append_varint(out, d);
  }
}

}  // namespace

bool iso_equal(const MemState& a, const MemState& b) {
  if (a.nv != b.nv || a.nvm.size() != b.nvm.size() || a.active.size() != b.active.size()) return false;
  std::string ka, kb;
  append_mem_key(ka, a, true);
  append_mem_key(kb, b, true);
  return ka == kb;
}

std::string dump_mem(const MemState& m, const Decls& d) {
  std::ostringstream os;
  os << "nvmem";
  for (std::size_t x = 0; x < m.nvm.size(); ++x)
    if (m.is_nv(static_cast<LocId>(x))) os << " " << d.loc_name(static_cast<LocId>(x)) << "=" << m.nvm[x];
  os << "\nvmem";
  for (std::size_t x = 0; x < m.vm.size(); ++x)
    if (!m.is_nv(static_cast<LocId>(x))) os << " " << d.loc_name(static_cast<LocId>(x)) << "=" << m.vm[x];
  os << "\n";
  for (std::size_t x = 0; x < m.buf.size(); ++x) {
    if (m.buf[x].empty()) continue;
    os << "buf " << d.loc_name(static_cast<LocId>(x)) << ":";
    for (const auto& e : m.buf[x]) {
      if (e.is_fo) os << " FO(" << (e.tid + 1) << ")";
      else os << " W(" << (e.block == kNoBlock ? std::string("_") : "b" + std::to_string(e.block)) << "," << e.value << ")";
    }
    os << "\n";
  }
  for (std::size_t t = 0; t < m.num_threads(); ++t) {
    std::string line;
    for (std::size_t x = 0; x < m.nvm.size(); ++x) {
      const BlockId b = m.active_at(static_cast<ThreadId>(t), static_cast<LocId>(x));
      if (b != kNoBlock) line += " " + d.loc_name(static_cast<LocId>(x)) + "=b" + std::to_string(b);
    }
    if (!line.empty()) os << "open " << (t + 1) << ":" << line << "\n";
  }
  for (const auto& b : m.bid) os << "block b" << b.id << " " << d.mask_names(b.locs) << "\n";
  return os.str();
}

}  // namespace pscheck
