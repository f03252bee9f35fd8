#pragma once

#include <iosfwd>
#include <string>

#include "lpf/harness.hpp"

namespace lpf {

/// Parse a plain-text "key = value" config with [section] headers (one
/// section per experiment plus [world], [decoder], [train], [constants])
/// into overrides on top of the built-in defaults. Unknown keys warn on
/// `warnings`; malformed lines throw ConfigError with line information.
ExperimentConfig parse_config(std::istream& in, ExperimentConfig defaults,
                              std::ostream& warnings);

/// Load from a file path. A missing file throws ConfigError naming the
/// path; an empty file yields the defaults untouched.
ExperimentConfig load_config(const std::string& path,
                             ExperimentConfig defaults,
                             std::ostream& warnings);

}  // namespace lpf
