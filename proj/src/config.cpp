#include "vmfd/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace vmfd {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

const std::set<std::string> kKnownKeys = {
    "train.epochs",      "train.batch_scenes", "train.m_s",
    "train.lr0",         "train.momentum",     "train.weight_decay",
    "train.alpha",       "train.tau",          "train.lambda1",
    "train.lambda2",     "train.lambda3",      "train.seed",
    "train.kappa_max",   "train.train_2d_heads", "train.c3d",
    "train.c_embed",     "sample.mode",        "sample.bandwidth",
    "sample.kde_prescaled",
    "scene.num_points",  "scene.num_classes",  "scene.class_frequencies",
    "scene.range_profile", "scene.label_noise_rate", "scene.descriptor_noise",
    "scene.seed",        "scene.num_scenes",   "scene.image_height",
    "scene.image_width", "scene.num_cameras",  "scene.pixel_descriptor_dim",
    "scene.sectors_per_class",
};

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("invalid numeric value for " + key + ": '" + value + "'");
    }
}

long parse_int(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const long v = std::stol(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("invalid integer value for " + key + ": '" + value + "'");
    }
}

uint64_t parse_seed(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        const unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("invalid seed value for " + key + ": '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("invalid boolean value for " + key + ": '" + value + "'");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
    return out;
}

void require(const ParsedConfig& config, const std::string& key) {
    if (!config.has(key)) throw ConfigError("missing required field: " + key);
}

}  // namespace

ParsedConfig parse_config_text(const std::string& text) {
    ParsedConfig config;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              " is not of the form key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) +
                                           " has an empty key");
        if (config.has(key)) throw ConfigError("duplicate config key: " + key);
        config.values[key] = value;
    }
    return config;
}

ParsedConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << is.rdbuf();
    return parse_config_text(buffer.str());
}

std::string canonical_text(const ParsedConfig& config) {
    std::string out;
    for (const auto& [key, value] : config.values) out += key + " = " + value + "\n";
    return out;
}

uint64_t config_hash(const ParsedConfig& config) { return fnv1a64(canonical_text(config)); }

uint64_t config_group_hash(const ParsedConfig& config) {
    ParsedConfig copy = config;
    copy.values.erase("train.seed");
    copy.values.erase("scene.seed");
    return fnv1a64(canonical_text(copy));
}

std::string hash_hex(uint64_t hash) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

void check_known_keys(const ParsedConfig& config) {
    for (const auto& [key, value] : config.values) {
        if (!kKnownKeys.count(key)) throw ConfigError("unknown config key: " + key);
    }
}

SceneConfig scene_config_from(const ParsedConfig& config, int* num_scenes) {
    check_known_keys(config);
    require(config, "scene.num_points");
    require(config, "scene.num_classes");
    require(config, "scene.seed");

    SceneConfig sc;
    const auto get = [&](const char* key) { return config.values.at(key); };
    sc.num_points = static_cast<int>(parse_int("scene.num_points", get("scene.num_points")));
    sc.num_classes =
        static_cast<int>(parse_int("scene.num_classes", get("scene.num_classes")));
    sc.seed = parse_seed("scene.seed", get("scene.seed"));
    if (config.has("scene.class_frequencies"))
        sc.class_frequencies =
            parse_double_list("scene.class_frequencies", get("scene.class_frequencies"));
    if (config.has("scene.range_profile")) {
        const auto profile =
            parse_double_list("scene.range_profile", get("scene.range_profile"));
        if (profile.size() != 3)
            throw ConfigError("scene.range_profile must be min,max,decay");
        sc.range_min = profile[0];
        sc.range_max = profile[1];
        sc.range_decay = profile[2];
    }
    if (config.has("scene.label_noise_rate"))
        sc.label_noise_rate =
            parse_double("scene.label_noise_rate", get("scene.label_noise_rate"));
    if (config.has("scene.descriptor_noise"))
        sc.descriptor_noise =
            parse_double("scene.descriptor_noise", get("scene.descriptor_noise"));
    if (config.has("scene.image_height"))
        sc.image_height =
            static_cast<int>(parse_int("scene.image_height", get("scene.image_height")));
    if (config.has("scene.image_width"))
        sc.image_width =
            static_cast<int>(parse_int("scene.image_width", get("scene.image_width")));
    if (config.has("scene.num_cameras"))
        sc.num_cameras =
            static_cast<int>(parse_int("scene.num_cameras", get("scene.num_cameras")));
    if (config.has("scene.pixel_descriptor_dim"))
        sc.pixel_descriptor_dim = static_cast<int>(
            parse_int("scene.pixel_descriptor_dim", get("scene.pixel_descriptor_dim")));
    if (config.has("scene.sectors_per_class"))
        sc.sectors_per_class = static_cast<int>(
            parse_int("scene.sectors_per_class", get("scene.sectors_per_class")));

    int scenes = 4;
    if (config.has("scene.num_scenes"))
        scenes = static_cast<int>(parse_int("scene.num_scenes", get("scene.num_scenes")));
    if (scenes < 1) throw ConfigError("scene.num_scenes must be >= 1");
    if (num_scenes) *num_scenes = scenes;

    sc.validate();
    return sc;
}

TrainConfig train_config_from(const ParsedConfig& config) {
    check_known_keys(config);
    require(config, "train.epochs");
    require(config, "train.seed");

    TrainConfig tc;
    const auto get = [&](const char* key) { return config.values.at(key); };
    tc.epochs = static_cast<int>(parse_int("train.epochs", get("train.epochs")));
    tc.seed = parse_seed("train.seed", get("train.seed"));
    if (config.has("train.batch_scenes"))
        tc.batch_scenes =
            static_cast<int>(parse_int("train.batch_scenes", get("train.batch_scenes")));
    if (config.has("train.m_s"))
        tc.m_s = static_cast<int>(parse_int("train.m_s", get("train.m_s")));
    if (config.has("train.lr0")) tc.lr0 = parse_double("train.lr0", get("train.lr0"));
    if (config.has("train.momentum"))
        tc.momentum = parse_double("train.momentum", get("train.momentum"));
    if (config.has("train.weight_decay"))
        tc.weight_decay = parse_double("train.weight_decay", get("train.weight_decay"));
    if (config.has("train.alpha")) tc.alpha = parse_double("train.alpha", get("train.alpha"));
    if (config.has("train.tau")) tc.tau = parse_double("train.tau", get("train.tau"));
    if (config.has("train.lambda1"))
        tc.lambda1 = parse_double("train.lambda1", get("train.lambda1"));
    if (config.has("train.lambda2"))
        tc.lambda2 = parse_double("train.lambda2", get("train.lambda2"));
    if (config.has("train.lambda3"))
        tc.lambda3 = parse_double("train.lambda3", get("train.lambda3"));
    if (config.has("train.kappa_max"))
        tc.kappa_max = parse_double("train.kappa_max", get("train.kappa_max"));
    if (config.has("train.train_2d_heads"))
        tc.train_2d_heads = parse_bool("train.train_2d_heads", get("train.train_2d_heads"));
    if (config.has("train.c3d"))
        tc.c3d = static_cast<int>(parse_int("train.c3d", get("train.c3d")));
    if (config.has("train.c_embed"))
        tc.c_embed = static_cast<int>(parse_int("train.c_embed", get("train.c_embed")));

    if (config.has("sample.mode")) {
        const std::string mode = get("sample.mode");
        if (mode == "random") tc.sampling_mode = SamplingMode::kRandom;
        else if (mode == "density") tc.sampling_mode = SamplingMode::kDensity;
        else if (mode == "category") tc.sampling_mode = SamplingMode::kCategory;
        else if (mode == "dcas") tc.sampling_mode = SamplingMode::kDcas;
        else throw ConfigError("sample.mode must be one of random|density|category|dcas");
    }
    if (config.has("sample.bandwidth")) {
        const std::string bw = get("sample.bandwidth");
        if (bw == "silverman") {
            tc.bandwidth_mode = TrainConfig::BandwidthMode::kSilverman;
        } else if (bw.rfind("fixed:", 0) == 0) {
            tc.bandwidth_mode = TrainConfig::BandwidthMode::kFixed;
            tc.fixed_bandwidth = parse_double("sample.bandwidth", bw.substr(6));
        } else {
            throw ConfigError("sample.bandwidth must be 'silverman' or 'fixed:<h>'");
        }
    }
    if (config.has("sample.kde_prescaled"))
        tc.kde_prescaled_kernel =
            parse_bool("sample.kde_prescaled", get("sample.kde_prescaled"));

    tc.validate();
    return tc;
}

}  // namespace vmfd
