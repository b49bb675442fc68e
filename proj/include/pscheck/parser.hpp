#pragma once

#include <string>
#include <string_view>

#include "pscheck/syntax.hpp"

namespace pscheck {

// Text format, one instruction per line, '#' comments:
//
//   nonvolatile x1 x2        volatile l
//   registers r1 r2 r        arguments r1 r2
//   method write:
//     LOCK: cas r l 0 1
//           if r != 0 goto LOCK
//           ...
//           return
//   thread 1:
//     call write
//
// A unit without thread blocks is a library.
struct ParsedUnit {
  ConcurrentProgram program;
  bool has_threads = false;
};

ParsedUnit parse_unit(std::string_view text);
ConcurrentProgram parse_program(std::string_view text);
Library parse_library(std::string_view text);

std::string print_program(const ConcurrentProgram& p);
std::string print_library(const Library& l);
std::string print_instruction(const Instruction& ins, const Decls& d,
                              const std::vector<std::string>& labels = {});

std::string read_file(const std::string& path);
ConcurrentProgram load_program(const std::string& path);
Library load_library(const std::string& path);

Library to_library(const ConcurrentProgram& p);
ConcurrentProgram to_program(const Library& l);

}  // namespace pscheck
