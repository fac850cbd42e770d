#pragma once

#include <string>

#include <json.hpp>

#include "glim/nn.hpp"

namespace glim {

// Flat binary parameter container: an 8-byte little-endian header length,
// a JSON header (version, dtype, array names + shapes, free-form meta),
// then the raw little-endian array payloads in header order.
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    ParamMap arrays;
    nlohmann::json meta;
    int version = kCheckpointVersion;
};

void save_checkpoint(const std::string& path, const ParamMap& arrays,
                     const nlohmann::json& meta = nlohmann::json::object());

Checkpoint load_checkpoint(const std::string& path);

}  // namespace glim
