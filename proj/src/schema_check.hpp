#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace leakmap::detail {

/// Validates `doc` against a draft-07 schema restricted to the keywords the experiment schema uses:
/// type, enum, required, properties, additionalProperties (boolean), items, min/maxItems,
/// (exclusive)minimum/maximum and local $ref. Returns one message per violation, prefixed by the
/// JSON pointer of the offending value.
std::vector<std::string> validate_schema(const nlohmann::json& schema, const nlohmann::json& doc);

}  // namespace leakmap::detail
