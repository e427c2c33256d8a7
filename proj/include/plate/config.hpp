#pragma once

#include <string>
#include <vector>

#include "plate/protocol.hpp"

namespace plate {

// JSON configuration files; the schema is documented in docs/config.md.
// Unknown keys anywhere are rejected with a ContractError naming the path.

ProtocolConfig parse_protocol_config(const std::string& json_text);

/// Canonical JSON (every field, fixed key order) for a config.
std::string protocol_config_json(const ProtocolConfig& cfg);

/// {"base": {...}, "grid": {"dotted.path": [values...], ...}}: the cartesian
/// product of the grid axes, in file order, each applied to the base config.
/// A plain protocol config is accepted as a grid of one.
std::vector<ProtocolConfig> parse_sweep_config(const std::string& json_text);

}  // namespace plate
