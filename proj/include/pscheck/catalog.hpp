#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pscheck/refine.hpp"

namespace pscheck {

enum class CaseKind : std::uint8_t { Refine, Policy, Explore };

// One shipped example with the verdict it is expected to produce at its
// preset bounds.
struct ExampleCase {
  std::string name;
  CaseKind kind = CaseKind::Refine;
  std::string impl_file;  // Refine: implementation; Policy: client; Explore: program
  std::string spec_file;  // Refine: specification; Policy: library
  RefineOptions options;  // mgc and bounds preset
  bool expect_holds = true;
  std::string note;

  // Parsed and validated contents; empty for the kinds that do not use them.
  Library impl;
  Library spec;
  ConcurrentProgram program;
};

std::string catalog_dir();
std::string catalog_path(const std::string& file);
std::vector<std::string> example_names();
// Throws InputError for an unknown name or an invalid case.
ExampleCase load_example(const std::string& name);
// Runs a Refine or Policy case at its preset bounds.
Verdict run_example(const ExampleCase& c);

}  // namespace pscheck
