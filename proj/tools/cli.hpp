#pragma once

#include <ostream>

namespace wordbench::cli {

/// Exit codes: 0 success, 1 data/format error, 2 usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace wordbench::cli
