// Flat key = value run configuration with section prefixes (train., sample.,
// scene.), canonical serialization and hashing.

#pragma once

#include <map>
#include <string>

#include "vmfd/synthdata.hpp"
#include "vmfd/trainer.hpp"

namespace vmfd {

struct ParsedConfig {
    std::map<std::string, std::string> values;

    bool has(const std::string& key) const { return values.count(key) > 0; }
    void set(const std::string& key, const std::string& value) { values[key] = value; }
};

ParsedConfig parse_config_text(const std::string& text);
ParsedConfig parse_config_file(const std::string& path);

// Sorted "key = value" lines; the hash of this text identifies a run.
std::string canonical_text(const ParsedConfig& config);
uint64_t config_hash(const ParsedConfig& config);
// Hash with seed keys removed; used to group seed-replicas of one setup.
uint64_t config_group_hash(const ParsedConfig& config);
std::string hash_hex(uint64_t hash);

// Builders validate values and reject unknown keys. Missing required keys
// raise ConfigError naming the field.
SceneConfig scene_config_from(const ParsedConfig& config, int* num_scenes);
TrainConfig train_config_from(const ParsedConfig& config);

// Unknown-key detection across all sections.
void check_known_keys(const ParsedConfig& config);

}  // namespace vmfd
