#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace hinet {

// Parses `key = value` lines; '#' starts a comment. Throws Error(Validation)
// with a line number on anything else.
std::map<std::string, std::string> parse_config(std::string_view text);

// Entry point behind the `hinet` binary. `args` excludes the program name.
// Returns the process exit code:
//   0 ok, 1 validation, 2 I/O, 3 numeric, 4 malformed input,
//   5 property violation.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hinet
