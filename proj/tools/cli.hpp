// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace idim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // experiment-level failure
inline constexpr int kExitUsage = 2;    // usage, config or input error

// Entry point of the `idim` tool; never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace idim::cli
