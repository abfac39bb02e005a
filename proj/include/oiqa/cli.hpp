#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace oiqa {

/// Runs one `oiqa` invocation. args excludes the program name. Writes a
/// one-line JSON summary to `out` and human-readable detail to `err`.
/// Returns 0 on success, 1 usage error, 2 data/format error, 3 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses "k/255"-style fractions or decimals.
double parse_epsilon(const std::string& text);
/// "k/255" when the value is a whole multiple of 1/255, else %.17g.
std::string canonical_epsilon(double value);

}  // namespace oiqa
