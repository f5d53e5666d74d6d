#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cmdkit {

// Exit codes: 0 ok, 2 usage/config, 3 numeric divergence, 4 degenerate data, 5 I/O.
// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// FNV-1a 64 of a byte string, as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace cmdkit
