#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tankmpc/harness.hpp"

namespace tankmpc {

/// Thrown for unknown keys, malformed values, and files that cannot be read.
class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

/// INI text with sections [tank], [ambient], [sim], [one_node], [three_node],
/// [mpc], [scenario], [run]. Keys carry their unit as a suffix (t_low_f,
/// dt_s, volume_m3, ...). Missing keys keep the defaults of `base`.
RunConfig parse_config(std::istream& is, const RunConfig& base = {});
RunConfig load_config(const std::string& path, const RunConfig& base = {});

/// Applies "section.key=value" overrides in order.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);

/// Every key understood by the loader, as "section.key".
std::vector<std::string> known_keys();

/// Writes a complete config that parses back to `cfg`.
void write_config(const RunConfig& cfg, std::ostream& os);

}  // namespace tankmpc
