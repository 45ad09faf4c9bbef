// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>

namespace dsal {

/// Bad or inconsistent configuration. Mapped to exit code 2 by the CLI.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unreadable, malformed, or inconsistent data files. Exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite loss during training. Exit code 4.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dsal
