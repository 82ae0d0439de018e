#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vibeharvest {

/// Entry point of the `vibeharvest` tool. Returns 0 on success, 1 on a domain
/// error, 2 on a usage or configuration error. Errors are written to `err`
/// as `error[<code>]: <message>`.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vibeharvest
