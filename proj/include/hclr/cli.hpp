#pragma once

#include <iosfwd>

namespace hclr {

/// Entry point of the `hclr` tool. Exit codes: 0 success, 2 config error,
/// 3 runtime error.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hclr
