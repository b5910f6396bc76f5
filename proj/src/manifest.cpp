#include "vmfd/manifest.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace vmfd {

namespace fs = std::filesystem;

namespace {
fs::path manifest_path(const std::string& dir) { return fs::path(dir) / "manifest.json"; }
}  // namespace

bool manifest_exists(const std::string& dir) { return fs::exists(manifest_path(dir)); }

void write_manifest(const std::string& dir, const RunManifest& manifest) {
    nlohmann::json j;
    j["tool_version"] = manifest.tool_version;
    j["command"] = manifest.command;
    j["config_hash"] = manifest.config_hash;
    j["group_hash"] = manifest.group_hash;
    j["seed"] = manifest.seed;
    j["inputs"] = manifest.inputs;
    j["outputs"] = manifest.outputs;
    j["duration_seconds"] = manifest.duration_seconds;

    const fs::path path = manifest_path(dir);
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw IoError("write_manifest: cannot open " + tmp.string());
        os << j.dump(2) << "\n";
        if (!os) throw IoError("write_manifest: write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

RunManifest read_manifest(const std::string& dir) {
    const fs::path path = manifest_path(dir);
    std::ifstream is(path);
    if (!is) throw IoError("read_manifest: cannot open " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("read_manifest: invalid JSON in " + path.string() + ": " +
                          e.what());
    }
    RunManifest m;
    try {
        m.tool_version = j.at("tool_version").get<std::string>();
        m.command = j.at("command").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.group_hash = j.at("group_hash").get<std::string>();
        m.seed = j.at("seed").get<uint64_t>();
        m.inputs = j.at("inputs").get<std::vector<std::string>>();
        m.outputs = j.at("outputs").get<std::vector<std::string>>();
        m.duration_seconds = j.at("duration_seconds").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("read_manifest: missing field in " + path.string() + ": " +
                          e.what());
    }
    return m;
}

}  // namespace vmfd
