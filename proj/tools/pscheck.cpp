// pscheck: command-line front end.
//
// Exit codes: 0 success or holds-at-bounds, 1 refuted or mismatch,
// 2 input error, 3 state budget exhausted.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pscheck/catalog.hpp"
#include "pscheck/history.hpp"
#include "pscheck/parser.hpp"
#include "pscheck/refine.hpp"

using namespace pscheck;
using ojson = nlohmann::ordered_json;

namespace {

struct BoundOpts {
  std::uint32_t max_steps = 1'000'000;
  std::uint32_t max_crashes = 0;
  unsigned values = 3;
  std::string mode = "units";
  std::string nondet_sf = "0";
  std::size_t max_states = 40'000'000;
  unsigned jobs = 1;

  Bounds make() const {
    Bounds b;
    b.max_steps = max_steps;
    b.max_crashes = max_crashes;
    b.max_value = static_cast<Value>(values);
    b.mode = mode == "full" ? PersistMode::Full : PersistMode::Units;
    b.max_nondet_sf = nondet_sf == "all" ? kUnbounded : static_cast<std::uint32_t>(std::stoul(nondet_sf));
    b.max_states = max_states;
    b.jobs = jobs;
    return b;
  }
};

struct MgcOpts {
  std::string kind = "free";
  std::uint32_t threads = 1;
  std::uint32_t calls = 1;

  MgcConfig make() const {
    MgcConfig c;
    c.kind = kind == "rec" ? MgcKind::Rec : MgcKind::Free;
    c.threads = threads;
    c.calls = calls;
    return c;
  }
};

void add_bounds(CLI::App* c, BoundOpts& b, bool nondet_sf) {
  c->add_option("--max-steps", b.max_steps, "Transitions per run")->capture_default_str();
  c->add_option("--max-crashes", b.max_crashes, "Crashes per run")->capture_default_str();
  c->add_option("--values", b.values, "Largest value havoc may pick (V_max)")->capture_default_str();
  c->add_option("--persist-mode", b.mode, "Persist step granularity")
      ->check(CLI::IsMember({"units", "full"}))
      ->capture_default_str();
  if (nondet_sf)
    c->add_option("--nondet-sf", b.nondet_sf, "Non-deterministic sfence steps per run, or 'all'")
        ->capture_default_str();
  c->add_option("--max-states", b.max_states, "State budget")->capture_default_str();
  c->add_option("--jobs", b.jobs, "Worker threads (default $PSCHECK_JOBS or 1)");
}

void add_mgc(CLI::App* c, MgcOpts& m) {
  c->add_option("--mgc", m.kind, "Most general client")->check(CLI::IsMember({"free", "rec"}))->capture_default_str();
  c->add_option("--threads", m.threads, "Client threads")->capture_default_str();
  c->add_option("--calls", m.calls, "Calls per thread, recovery excluded")->capture_default_str();
}

// A program file, optionally linked with a library file.
ConcurrentProgram load_linked(const std::string& prog, const std::string& lib) {
  ConcurrentProgram p = load_program(prog);
  if (!lib.empty()) p = link(p, load_library(lib));
  return p;
}

std::string mem_text(const Decls& d, const std::vector<Value>& m) {
  std::string s = "{";
  std::size_t i = 0;
  for (std::size_t x = 0; x < d.locations.size(); ++x) {
    if (!d.is_nv(static_cast<LocId>(x))) continue;
    if (i) s += ", ";
    s += d.locations[x].name + "=" + std::to_string(m[i++]);
  }
  return s + "}";
}

ojson mem_json(const Decls& d, const std::vector<Value>& m) {
  ojson j = ojson::object();
  std::size_t i = 0;
  for (std::size_t x = 0; x < d.locations.size(); ++x)
    if (d.is_nv(static_cast<LocId>(x))) j[d.locations[x].name] = m[i++];
  return j;
}

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << text;
}

int report_verdict(const Verdict& v, const Decls& d, bool json) {
  std::cout << (json ? verdict_to_json(v, d) + "\n" : verdict_to_text(v, d));
  return v.holds ? 0 : 1;
}

// Register table the implementation side of a refinement runs over.
Decls refine_decls(const Library& impl, const Library& spec, const MgcConfig& cfg) {
  Library a = impl, b = spec;
  unify_registers(a, b);
  return mgc_program(a, cfg).decls;
}

MethodSet split_methods(const std::string& s) {
  MethodSet out;
  std::stringstream in(s);
  std::string m;
  while (std::getline(in, m, ','))
    if (!m.empty()) out.push_back(m);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bounded model checker for concurrent libraries under persistent sequential consistency"};
  app.require_subcommand(1);
  app.fallthrough();
  bool json = false;
  app.add_flag("--json", json, "Machine-readable output");

  BoundOpts bo;
  if (const char* j = std::getenv("PSCHECK_JOBS")) bo.jobs = static_cast<unsigned>(std::max(1, std::atoi(j)));
  MgcOpts mo;
  bool no_reduce = false;

  auto* explore_cmd = app.add_subcommand("explore", "Reachable states and post-crash persistent memories");
  std::string prog_file, lib_file;
  explore_cmd->add_option("program", prog_file, "Program file")->required()->check(CLI::ExistingFile);
  explore_cmd->add_option("--lib", lib_file, "Library to link")->check(CLI::ExistingFile);
  add_bounds(explore_cmd, bo, true);

  auto* refine_cmd = app.add_subcommand("refine", "Check histories(MGC[impl]) within histories(MGC[spec])");
  std::string impl_file, spec_file;
  refine_cmd->add_option("--impl", impl_file, "Implementation library")->required()->check(CLI::ExistingFile);
  refine_cmd->add_option("--spec", spec_file, "Specification library")->required()->check(CLI::ExistingFile);
  refine_cmd->add_flag("--no-reduce", no_reduce, "Explore the full state space");
  add_mgc(refine_cmd, mo);
  add_bounds(refine_cmd, bo, false);

  auto* policy_cmd = app.add_subcommand("policy", "Check that a client calls a library as the MGC allows");
  std::string client_file;
  policy_cmd->add_option("--client", client_file, "Client program")->required()->check(CLI::ExistingFile);
  policy_cmd->add_option("--lib", lib_file, "Library")->required()->check(CLI::ExistingFile);
  policy_cmd->add_flag("--no-reduce", no_reduce, "Explore the full state space");
  add_mgc(policy_cmd, mo);
  add_bounds(policy_cmd, bo, false);

  auto* sim_cmd = app.add_subcommand("sim", "Era-wise simulation check with a relation on persistent memories");
  std::string rel;
  bool ignore_sf = false;
  sim_cmd->add_option("--impl", impl_file, "Implementation library")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--spec", spec_file, "Specification library")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--rel", rel, "Relation over impl (x, xn) and spec (x#, xs) locations")->required();
  sim_cmd->add_flag("--ignore-sf", ignore_sf, "Drop SF history labels (spec without fo/sfence)");
  sim_cmd->add_flag("--no-reduce", no_reduce, "Explore the full state space");
  add_mgc(sim_cmd, mo);
  add_bounds(sim_cmd, bo, false);

  auto* compose_cmd = app.add_subcommand("compose", "Combine a client trace and a library trace");
  std::string cl_prog, lib_prog, cl_trace, lib_trace, methods, out_file;
  compose_cmd->add_option("--cl-prog", cl_prog, "Program of the client trace")->required()->check(CLI::ExistingFile);
  compose_cmd->add_option("--cl", cl_trace, "Client trace")->required()->check(CLI::ExistingFile);
  compose_cmd->add_option("--lib-prog", lib_prog, "Program of the library trace")->required()->check(CLI::ExistingFile);
  compose_cmd->add_option("--lib", lib_trace, "Library trace")->required()->check(CLI::ExistingFile);
  compose_cmd->add_option("--methods", methods, "Comma-separated method set F")->required();
  compose_cmd->add_option("--out", out_file, "Where to write the composed trace (default stdout)");
  add_bounds(compose_cmd, bo, true);

  auto* run_cmd = app.add_subcommand("run", "One random schedule (demo only)");
  std::uint64_t seed = 0;
  run_cmd->add_option("program", prog_file, "Program file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--lib", lib_file, "Library to link")->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
  run_cmd->add_option("--out", out_file, "Where to write the trace (default stdout)");
  add_bounds(run_cmd, bo, true);

  auto* mgc_cmd = app.add_subcommand("mgc", "Print MGC[lib] as a closed program");
  mgc_cmd->add_option("--lib", lib_file, "Library")->required()->check(CLI::ExistingFile);
  add_mgc(mgc_cmd, mo);

  auto* list_cmd = app.add_subcommand("examples", "List or run the shipped examples");
  std::string example;
  list_cmd->add_option("name", example, "Example to run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  if (bo.jobs == 0) bo.jobs = 1;

  try {
    if (*explore_cmd) {
      const ConcurrentProgram p = load_linked(prog_file, lib_file);
      const System sys(p, bo.make());
      const ExploreReport r = explore(sys);
      if (json) {
        ojson j;
        j["states"] = r.states;
        j["transitions"] = r.transitions;
        j["hit_step_bound"] = r.hit_step_bound;
        j["hit_state_budget"] = r.hit_state_budget;
        ojson pc = ojson::array();
        for (const auto& m : r.post_crash_memories) pc.push_back(mem_json(p.decls, m));
        j["post_crash_memories"] = pc;
        std::cout << j.dump(2) << "\n";
      } else {
        std::cout << "states " << r.states << ", transitions " << r.transitions << "\n";
        if (r.hit_step_bound) std::cout << "step bound reached\n";
        if (r.hit_state_budget) std::cout << "state budget exhausted\n";
        std::cout << "post-crash memories " << r.post_crash_memories.size() << "\n";
        for (const auto& m : r.post_crash_memories) std::cout << "  " << mem_text(p.decls, m) << "\n";
      }
      return r.hit_state_budget ? 3 : 0;
    }

    if (*refine_cmd) {
      RefineOptions o;
      o.mgc = mo.make();
      o.bounds = bo.make();
      o.bounds.max_nondet_sf = kUnbounded;
      o.reduce = !no_reduce;
      const Library impl = load_library(impl_file), spec = load_library(spec_file);
      const Verdict v = check_refines(impl, spec, o);
      return report_verdict(v, refine_decls(impl, spec, o.mgc), json);
    }

    if (*policy_cmd) {
      RefineOptions o;
      o.mgc = mo.make();
      o.bounds = bo.make();
      o.bounds.max_nondet_sf = kUnbounded;
      o.reduce = !no_reduce;
      const ConcurrentProgram client = load_program(client_file);
      const Library lib = load_library(lib_file);
      const Verdict v = check_policy(client, lib, o);
      return report_verdict(v, link(client, lib).decls, json);
    }

    if (*sim_cmd) {
      SimOptions o;
      o.refine.mgc = mo.make();
      o.refine.bounds = bo.make();
      o.refine.bounds.max_nondet_sf = kUnbounded;
      o.refine.reduce = !no_reduce;
      o.ignore_sf = ignore_sf;
      const Library impl = load_library(impl_file), spec = load_library(spec_file);
      const Verdict v = check_simulation(impl, spec, rel, o);
      return report_verdict(v, refine_decls(impl, spec, o.refine.mgc), json);
    }

    if (*compose_cmd) {
      const ConcurrentProgram pc = load_program(cl_prog), pl = load_program(lib_prog);
      const MethodSet f = split_methods(methods);
      const Bounds b = bo.make();
      const System cl_sys(pc, b), lib_sys(pl, b);
      const Trace t1 = parse_trace(cl_sys, read_file(cl_trace));
      const Trace t2 = parse_trace(lib_sys, read_file(lib_trace));
      if (history_of(cl_sys, t1, f) != history_of(lib_sys, t2, f)) {
        std::cerr << "error: the traces have different histories over the method set\n";
        return 1;
      }
      const System target(compose_program(pc, pl, f), b);
      const Composition c = compose_traces(cl_sys, t1, lib_sys, t2, target, f);
      write_out(out_file, dump_trace(target, c.trace));
      for (const auto& p : c.problems) std::cerr << "check failed: " << p << "\n";
      return c.problems.empty() ? 0 : 1;
    }

    if (*run_cmd) {
      const ConcurrentProgram p = load_linked(prog_file, lib_file);
      const System sys(p, bo.make());
      const Trace t = random_run(sys, seed, bo.max_steps);
      write_out(out_file, dump_trace(sys, t));
      MethodSet f;
      for (const auto& m : p.methods) f.push_back(m.name);
      std::cerr << "history: " << history_to_string(history_of(sys, t, f), p.decls) << "\n";
      return 0;
    }

    if (*mgc_cmd) {
      std::cout << print_program(mgc_program(load_library(lib_file), mo.make()));
      return 0;
    }

    if (*list_cmd) {
      if (example.empty()) {
        for (const auto& n : example_names()) {
          const ExampleCase c = load_example(n);
          std::cout << n << (c.note.empty() ? "" : "  (" + c.note + ")") << "\n";
        }
        return 0;
      }
      const ExampleCase c = load_example(example);
      if (c.kind == CaseKind::Explore) {
        const System sys(c.program, c.options.bounds);
        const ExploreReport r = explore(sys);
        std::cout << "post-crash memories " << r.post_crash_memories.size() << "\n";
        for (const auto& m : r.post_crash_memories) std::cout << "  " << mem_text(c.program.decls, m) << "\n";
        return 0;
      }
      const Verdict v = run_example(c);
      const Decls d = c.kind == CaseKind::Refine ? refine_decls(c.impl, c.spec, c.options.mgc)
                                                 : link(c.program, c.spec).decls;
      report_verdict(v, d, json);
      return v.holds == c.expect_holds ? 0 : 1;
    }
  } catch (const BudgetExceeded& e) {
    std::cerr << "budget: " << e.what() << "\n";
    return 3;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
