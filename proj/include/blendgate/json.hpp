#pragma once

#include <nlohmann/json.hpp>

namespace blendgate {

/// Insertion-ordered JSON; keeps wire and report field order stable.
using Json = nlohmann::ordered_json;

}  // namespace blendgate
