#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pscheck/common.hpp"
#include "pscheck/expr.hpp"

namespace pscheck {

enum class Durability : std::uint8_t { Volatile, NonVolatile };

struct Location {
  std::string name;
  Durability durability = Durability::NonVolatile;
  bool operator==(const Location&) const = default;
};

// Symbol table shared by the code of one program or library.
struct Decls {
  std::vector<Location> locations;
  std::vector<std::string> registers;
  // Registers that havoc ranges over; empty means every register.
  std::vector<RegId> arguments;

  std::optional<LocId> find_location(std::string_view name) const;
  std::optional<RegId> find_register(std::string_view name) const;
  LocId add_location(const std::string& name, Durability d);  // throws on a durability clash
  RegId add_register(const std::string& name);

  bool is_nv(LocId x) const { return locations[x].durability == Durability::NonVolatile; }
  LocMask nv_mask() const;
  LocMask all_mask() const;
  std::vector<RegId> havoc_window() const;
  std::string loc_name(LocId x) const { return locations.at(x).name; }
  std::string mask_names(LocMask m) const;  // "{x, y}"
  LocMask parse_mask_names(const std::vector<std::string>& names) const;

  bool operator==(const Decls&) const = default;
};

enum class InstrKind : std::uint8_t {
  Assign, IfGoto, Havoc,
  Store, Load, Flush, FlushOpt, SFence, PFence, PBBegin, PBEnd,
  Call, Return,
  Faa, Cas,
};

struct Instruction {
  InstrKind kind = InstrKind::Return;
  RegId reg = 0;     // destination of Assign, Load, Faa, Cas
  LocId loc = 0;     // Store, Load, Flush, FlushOpt, Faa, Cas
  LocMask set = 0;   // PFence, PBBegin, PBEnd
  Expr e1;           // Assign value, IfGoto condition, Store value, Faa addend, Cas expected
  Expr e2;           // Cas new value
  std::vector<std::uint32_t> targets;  // IfGoto
  std::string method;                  // Call
  std::int32_t method_index = -1;      // resolved by ConcurrentProgram::resolve_calls

  bool operator==(const Instruction& o) const {
    return kind == o.kind && reg == o.reg && loc == o.loc && set == o.set && e1 == o.e1 && e2 == o.e2 &&
           targets == o.targets && method == o.method;
  }
};

using InstrSeq = std::vector<Instruction>;

struct Method {
  std::string name;
  InstrSeq body;
  bool operator==(const Method&) const = default;
};

struct Library {
  Decls decls;
  std::vector<Method> methods;

  const Method* find(std::string_view name) const;
  std::vector<std::string> method_names() const;
  bool operator==(const Library&) const = default;
};

using MethodSet = std::vector<std::string>;

struct ConcurrentProgram {
  Decls decls;
  std::vector<Method> methods;   // bodies shared by all threads
  std::vector<InstrSeq> threads; // main code of thread 1..N

  std::optional<std::int32_t> method_index(std::string_view name) const;
  // Binds every call instruction to its method; unbound calls keep index -1.
  void resolve_calls();
  // Names called somewhere but not defined.
  std::vector<std::string> unbound_methods() const;
  bool closed() const { return unbound_methods().empty(); }
  std::size_t num_threads() const { return threads.size(); }
  // flags[i] is true when methods[i] is in F.
  std::vector<bool> method_flags(const MethodSet& f) const;

  bool operator==(const ConcurrentProgram& o) const {
    return decls == o.decls && methods == o.methods && threads == o.threads;
  }
};

// Structural checks: flat methods, targets in range, no return in main code.
void validate(const ConcurrentProgram& p);
void validate(const Library& l);

LocMask used_locations(const InstrSeq& code);
LocMask used_locations(const Library& l);
// Locations touched by main code and by methods outside f.
LocMask used_client_locations(const ConcurrentProgram& p, const MethodSet& f);

// Renames the library's symbols into the program's table, adding new ones.
// Returns the library re-expressed over the merged declarations.
Library import_library(Decls& into, const Library& lib);

// Throws SafetyError naming a shared location when the client touches
// locations of the library.
void check_safe(const ConcurrentProgram& p, const Library& l);
bool is_safe(const ConcurrentProgram& p, const Library& l);

// p[l]: binds the library methods into the program, replacing bodies p
// already has for them. Requires safety.
ConcurrentProgram link(const ConcurrentProgram& p, const Library& l);

// Union of several symbol tables, in first-seen order. Throws on a
// durability clash.
Decls merge_decls(const std::vector<const Decls*>& tables);
// Re-expresses the code over `target`, which must contain every symbol used.
void remap_to(ConcurrentProgram& p, const Decls& target);
void remap_to(Library& l, const Decls& target);

}  // namespace pscheck
