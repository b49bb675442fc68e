#include "pscheck/syntax.hpp"

#include <algorithm>

namespace pscheck {

std::optional<LocId> Decls::find_location(std::string_view name) const {
  for (std::size_t i = 0; i < locations.size(); ++i)
    if (locations[i].name == name) return static_cast<LocId>(i);
  return std::nullopt;
}

std::optional<RegId> Decls::find_register(std::string_view name) const {
  for (std::size_t i = 0; i < registers.size(); ++i)
    if (registers[i] == name) return static_cast<RegId>(i);
  return std::nullopt;
}

LocId Decls::add_location(const std::string& name, Durability d) {
  if (auto x = find_location(name)) {
    if (locations[*x].durability != d)
      throw InputError("location '" + name + "' declared both volatile and non-volatile");
    return *x;
  }
  if (find_register(name)) throw InputError("'" + name + "' is already a register");
  if (locations.size() >= kMaxLocations) throw InputError("too many locations (limit 64)");
  locations.push_back({name, d});
  return static_cast<LocId>(locations.size() - 1);
}

RegId Decls::add_register(const std::string& name) {
  if (auto r = find_register(name)) return *r;
  if (find_location(name)) throw InputError("'" + name + "' is already a location");
  registers.push_back(name);
  return static_cast<RegId>(registers.size() - 1);
}

LocMask Decls::nv_mask() const {
  LocMask m = 0;
  for (std::size_t i = 0; i < locations.size(); ++i)
    if (locations[i].durability == Durability::NonVolatile) m |= loc_bit(static_cast<LocId>(i));
  return m;
}

LocMask Decls::all_mask() const {
  return locations.size() >= 64 ? ~LocMask{0} : (LocMask{1} << locations.size()) - 1;
}

std::vector<RegId> Decls::havoc_window() const {
  if (!arguments.empty()) return arguments;
  std::vector<RegId> all(registers.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<RegId>(i);
  return all;
}

std::string Decls::mask_names(LocMask m) const {
  std::string s = "{";
  bool first = true;
  for_each_loc(m, [&](LocId x) {
    if (!first) s += ", ";
    first = false;
    s += x < locations.size() ? locations[x].name : "?" + std::to_string(x);
  });
  return s + "}";
}

LocMask Decls::parse_mask_names(const std::vector<std::string>& names) const {
  LocMask m = 0;
  for (const auto& n : names) {
    auto x = find_location(n);
    if (!x) throw InputError("unknown location '" + n + "'");
    m |= loc_bit(*x);
  }
  return m;
}

const Method* Library::find(std::string_view name) const {
  for (const auto& m : methods)
    if (m.name == name) return &m;
  return nullptr;
}

std::vector<std::string> Library::method_names() const {
  std::vector<std::string> out;
  for (const auto& m : methods) out.push_back(m.name);
  return out;
}

std::optional<std::int32_t> ConcurrentProgram::method_index(std::string_view name) const {
  for (std::size_t i = 0; i < methods.size(); ++i)
    if (methods[i].name == name) return static_cast<std::int32_t>(i);
  return std::nullopt;
}

void ConcurrentProgram::resolve_calls() {
  auto bind = [&](InstrSeq& code) {
    for (auto& ins : code)
      if (ins.kind == InstrKind::Call) ins.method_index = method_index(ins.method).value_or(-1);
  };
  for (auto& m : methods) bind(m.body);
  for (auto& t : threads) bind(t);
}

std::vector<std::string> ConcurrentProgram::unbound_methods() const {
  std::vector<std::string> out;
  auto scan = [&](const InstrSeq& code) {
    for (const auto& ins : code)
      if (ins.kind == InstrKind::Call && !method_index(ins.method) &&
          std::find(out.begin(), out.end(), ins.method) == out.end())
        out.push_back(ins.method);
  };
  for (const auto& m : methods) scan(m.body);
  for (const auto& t : threads) scan(t);
  return out;
}

std::vector<bool> ConcurrentProgram::method_flags(const MethodSet& f) const {
  std::vector<bool> flags(methods.size(), false);
  for (std::size_t i = 0; i < methods.size(); ++i)
    flags[i] = std::find(f.begin(), f.end(), methods[i].name) != f.end();
  return flags;
}

namespace {

void validate_code(const InstrSeq& code, bool is_method, const std::string& where) {
  for (std::size_t pc = 0; pc < code.size(); ++pc) {
    const auto& ins = code[pc];
    const std::string at = where + " pc " + std::to_string(pc);
    if (ins.kind == InstrKind::IfGoto) {
      if (ins.targets.empty()) throw InputError(at + ": goto without targets");
      for (auto t : ins.targets)
        if (t > code.size()) throw InputError(at + ": jump target out of range");
    }
    if (is_method && ins.kind == InstrKind::Call)
      throw InputError(at + ": methods must be flat (call inside a method body)");
    if (!is_method && ins.kind == InstrKind::Return) throw InputError(at + ": return outside a method");
  }
}

void validate_methods(const std::vector<Method>& methods) {
  for (std::size_t i = 0; i < methods.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j)
      if (methods[i].name == methods[j].name) throw InputError("method '" + methods[i].name + "' defined twice");
    validate_code(methods[i].body, true, "method " + methods[i].name);
  }
}

void remap_code(InstrSeq& code, const std::vector<std::uint32_t>& regs, const std::vector<LocId>& locs) {
  for (auto& ins : code) {
    ins.reg = static_cast<RegId>(regs.empty() ? ins.reg : regs.at(ins.reg));
    switch (ins.kind) {
      case InstrKind::Store: case InstrKind::Load: case InstrKind::Flush:
      case InstrKind::FlushOpt: case InstrKind::Faa: case InstrKind::Cas:
        ins.loc = locs.at(ins.loc);
        break;
      default:
        break;
    }
    LocMask m = 0;
    for_each_loc(ins.set, [&](LocId x) { m |= loc_bit(locs.at(x)); });
    ins.set = m;
    ins.e1.remap_vars(regs);
    ins.e2.remap_vars(regs);
  }
}

struct Remap {
  std::vector<std::uint32_t> regs;
  std::vector<LocId> locs;
};

Remap build_remap(const Decls& from, const Decls& to) {
  Remap r;
  for (const auto& name : from.registers) {
    auto t = to.find_register(name);
    if (!t) throw InputError("register '" + name + "' missing from target table");
    r.regs.push_back(*t);
  }
  for (const auto& loc : from.locations) {
    auto t = to.find_location(loc.name);
    if (!t || to.locations[*t].durability != loc.durability)
      throw InputError("location '" + loc.name + "' missing from target table");
    r.locs.push_back(*t);
  }
  return r;
}

}  // namespace

void validate(const ConcurrentProgram& p) {
  validate_methods(p.methods);
  for (std::size_t t = 0; t < p.threads.size(); ++t)
    validate_code(p.threads[t], false, "thread " + std::to_string(t + 1));
}

void validate(const Library& l) { validate_methods(l.methods); }

LocMask used_locations(const InstrSeq& code) {
  LocMask m = 0;
  for (const auto& ins : code) {
    switch (ins.kind) {
      case InstrKind::Store: case InstrKind::Load: case InstrKind::Flush:
      case InstrKind::FlushOpt: case InstrKind::Faa: case InstrKind::Cas:
        m |= loc_bit(ins.loc);
        break;
      case InstrKind::PFence: case InstrKind::PBBegin: case InstrKind::PBEnd:
        m |= ins.set;
        break;
      default:
        break;
    }
  }
  return m;
}

LocMask used_locations(const Library& l) {
  LocMask m = 0;
  for (const auto& meth : l.methods) m |= used_locations(meth.body);
  return m;
}

LocMask used_client_locations(const ConcurrentProgram& p, const MethodSet& f) {
  LocMask m = 0;
  for (const auto& t : p.threads) m |= used_locations(t);
  for (const auto& meth : p.methods)
    if (std::find(f.begin(), f.end(), meth.name) == f.end()) m |= used_locations(meth.body);
  return m;
}

Decls merge_decls(const std::vector<const Decls*>& tables) {
  Decls out;
  for (const Decls* d : tables) {
    for (const auto& loc : d->locations) out.add_location(loc.name, loc.durability);
    for (const auto& r : d->registers) out.add_register(r);
  }
  for (const Decls* d : tables) {
    for (RegId a : d->arguments) {
      const RegId t = *out.find_register(d->registers[a]);
      if (std::find(out.arguments.begin(), out.arguments.end(), t) == out.arguments.end())
        out.arguments.push_back(t);
    }
  }
  std::sort(out.arguments.begin(), out.arguments.end());
  return out;
}

void remap_to(ConcurrentProgram& p, const Decls& target) {
  const Remap r = build_remap(p.decls, target);
  for (auto& m : p.methods) remap_code(m.body, r.regs, r.locs);
  for (auto& t : p.threads) remap_code(t, r.regs, r.locs);
  p.decls = target;
}

void remap_to(Library& l, const Decls& target) {
  const Remap r = build_remap(l.decls, target);
  for (auto& m : l.methods) remap_code(m.body, r.regs, r.locs);
  l.decls = target;
}

Library import_library(Decls& into, const Library& lib) {
  into = merge_decls({&into, &lib.decls});
  Library out = lib;
  remap_to(out, into);
  return out;
}

void check_safe(const ConcurrentProgram& p, const Library& l) {
  const Decls merged = merge_decls({&p.decls, &l.decls});
  ConcurrentProgram pp = p;
  Library ll = l;
  remap_to(pp, merged);
  remap_to(ll, merged);
  const LocMask shared = used_client_locations(pp, ll.method_names()) & used_locations(ll);
  if (shared != 0) {
    const auto x = static_cast<LocId>(std::countr_zero(shared));
    throw SafetyError(merged.loc_name(x), "client and library share location '" + merged.loc_name(x) + "'");
  }
}

bool is_safe(const ConcurrentProgram& p, const Library& l) {
  try {
    check_safe(p, l);
    return true;
  } catch (const SafetyError&) {
    return false;
  }
}

ConcurrentProgram link(const ConcurrentProgram& p, const Library& l) {
  check_safe(p, l);
  ConcurrentProgram out = p;
  // p's symbols keep their indices: merge_decls lists them first.
  const Library lib = import_library(out.decls, l);
  for (const auto& m : lib.methods) {
    if (auto i = out.method_index(m.name)) out.methods[static_cast<std::size_t>(*i)] = m;
    else out.methods.push_back(m);
  }
  out.resolve_calls();
  validate(out);
  return out;
}

}  // namespace pscheck
