// Run manifests: one JSON file per output directory recording what produced
// its contents.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vmfd/common.hpp"

namespace vmfd {

inline constexpr const char* kToolVersion = "vmfdistill 1.0.0";

struct RunManifest {
    std::string tool_version = kToolVersion;
    std::string command;
    std::string config_hash;  // hex of the effective config
    std::string group_hash;   // hex with seed keys removed
    uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    double duration_seconds = 0.0;

    // Identifier stamped into every output file this manifest covers.
    std::string id() const { return config_hash + "-" + std::to_string(seed); }
};

bool manifest_exists(const std::string& dir);
void write_manifest(const std::string& dir, const RunManifest& manifest);
RunManifest read_manifest(const std::string& dir);

}  // namespace vmfd
