// vmfdistill: generate synthetic scenes, pretrain under any ablation
// configuration, probe frozen representations, and compare completed runs.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vmfd/config.hpp"
#include "vmfd/log.hpp"
#include "vmfd/manifest.hpp"
#include "vmfd/trainer.hpp"

namespace fs = std::filesystem;
using namespace vmfd;

namespace {

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    }
};

void write_text_file(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw IoError("cannot open " + tmp.string());
        os << content;
        if (!os) throw IoError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

void prepare_out_dir(const std::string& out_dir, bool force) {
    fs::create_directories(out_dir);
    if (manifest_exists(out_dir) && !force)
        throw ConfigError("output directory " + out_dir +
                          " already contains a manifest; pass --force to overwrite");
}

ParsedConfig load_config(const std::string& path, std::optional<uint64_t> seed_override,
                         const char* seed_key) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    ParsedConfig config = parse_config_file(path);
    if (seed_override) config.set(seed_key, std::to_string(*seed_override));
    return config;
}

std::vector<Scene> load_dataset(const std::string& data_dir) {
    if (!fs::exists(data_dir)) throw ConfigError("data directory not found: " + data_dir);
    if (!manifest_exists(data_dir))
        throw ConfigError("data directory has no manifest: " + data_dir);
    const RunManifest m = read_manifest(data_dir);
    std::vector<Scene> scenes;
    for (const auto& name : m.outputs) {
        const fs::path path = fs::path(data_dir) / name;
        if (path.extension() != ".bin") continue;
        scenes.push_back(load_scene(path.string()));
    }
    if (scenes.empty()) throw ConfigError("data directory lists no scene files: " + data_dir);
    return scenes;
}

std::string format_kv(const char* key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return std::string(key) + " = " + buf + "\n";
}

int cmd_generate(const std::string& config_path, const std::string& out_dir,
                 std::optional<uint64_t> seed, bool force) {
    Timer timer;
    ParsedConfig config = load_config(config_path, seed, "scene.seed");
    int num_scenes = 0;
    const SceneConfig scene_config = scene_config_from(config, &num_scenes);
    prepare_out_dir(out_dir, force);

    RunManifest manifest;
    manifest.command = "generate";
    manifest.config_hash = hash_hex(config_hash(config));
    manifest.group_hash = hash_hex(config_group_hash(config));
    manifest.seed = scene_config.seed;
    manifest.inputs = {config_path};

    for (int s = 0; s < num_scenes; ++s) {
        SceneConfig per_scene = scene_config;
        per_scene.seed = derive_seed(scene_config.seed, static_cast<uint64_t>(s));
        const Scene scene = generate_scene(per_scene);
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%03d.bin", s);
        save_scene((fs::path(out_dir) / name).string(), scene, config_hash(config));
        manifest.outputs.push_back(name);
        log_info(std::string("wrote ") + name);
    }
    manifest.duration_seconds = timer.seconds();
    write_manifest(out_dir, manifest);
    log_info("generate complete: " + std::to_string(num_scenes) + " scenes");
    return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& data_dir,
                 const std::string& out_dir, std::optional<uint64_t> seed, bool force) {
    Timer timer;
    ParsedConfig config = load_config(config_path, seed, "train.seed");
    const TrainConfig train_config = train_config_from(config);
    const std::vector<Scene> scenes = load_dataset(data_dir);
    prepare_out_dir(out_dir, force);

    RunManifest manifest;
    manifest.command = "pretrain";
    manifest.config_hash = hash_hex(config_hash(config));
    manifest.group_hash = hash_hex(config_group_hash(config));
    manifest.seed = train_config.seed;
    manifest.inputs = {config_path, data_dir};

    const TrainResult result = run_training(scenes, train_config);

    std::string metrics = "# manifest " + manifest.id() + "\n" + metrics_header() + "\n";
    for (const auto& m : result.history) metrics += metrics_row(m) + "\n";
    write_text_file(fs::path(out_dir) / "metrics.tsv", metrics);

    save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string(), result.model,
                    config_hash(config), canonical_text(config));

    const EpochMetrics& last = result.history.back();
    std::string summary = "# manifest " + manifest.id() + "\n";
    summary += "epochs = " + std::to_string(train_config.epochs) + "\n";
    summary += format_kv("final_loss_ppnce", last.loss_ppnce);
    summary += format_kv("final_loss_sup", last.loss_sup);
    summary += format_kv("final_loss_kl", last.loss_kl);
    summary += format_kv("final_loss_total", last.loss_total);
    summary += format_kv("final_lr", last.lr);
    summary += format_kv("final_sigma_w_sq", result.final_variance.sigma_w_sq);
    summary += format_kv("final_sigma_b_sq", result.final_variance.sigma_b_sq);
    write_text_file(fs::path(out_dir) / "summary.txt", summary);

    manifest.outputs = {"metrics.tsv", "checkpoint.bin", "summary.txt"};
    manifest.duration_seconds = timer.seconds();
    write_manifest(out_dir, manifest);
    log_info("pretrain complete: " + std::to_string(train_config.epochs) + " epochs in " +
             std::to_string(manifest.duration_seconds) + "s");
    return 0;
}

int cmd_probe(const std::string& checkpoint_path, const std::string& data_dir,
              const std::string& out_dir, std::optional<uint64_t> seed, bool force) {
    Timer timer;
    if (!fs::exists(checkpoint_path))
        throw ConfigError("checkpoint not found: " + checkpoint_path);
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const std::vector<Scene> scenes = load_dataset(data_dir);
    prepare_out_dir(out_dir, force);

    const ParsedConfig ckpt_config = parse_config_text(ckpt.config_text);
    uint64_t split_seed = 0;
    if (ckpt_config.has("train.seed"))
        split_seed = std::stoull(ckpt_config.values.at("train.seed"));
    if (seed) split_seed = *seed;

    RunManifest manifest;
    manifest.command = "probe";
    manifest.config_hash = hash_hex(ckpt.config_hash);
    manifest.group_hash = hash_hex(config_group_hash(ckpt_config));
    manifest.seed = split_seed;
    manifest.inputs = {checkpoint_path, data_dir};

    VarianceMetrics variance;
    const ProbeResult probe =
        probe_heldout(scenes, ckpt.model, derive_seed(split_seed, 0x70726f6265ull),
                      &variance);

    std::string report = "# manifest " + manifest.id() + "\n";
    report += format_kv("accuracy", probe.accuracy);
    report += format_kv("mean_iou", probe.mean_iou);
    for (size_t k = 0; k < probe.per_class_iou.size(); ++k)
        report += format_kv(("iou." + std::to_string(k)).c_str(), probe.per_class_iou[k]);
    report += format_kv("sigma_w_sq", variance.sigma_w_sq);
    report += format_kv("sigma_b_sq", variance.sigma_b_sq);
    write_text_file(fs::path(out_dir) / "probe.txt", report);

    manifest.outputs = {"probe.txt"};
    manifest.duration_seconds = timer.seconds();
    write_manifest(out_dir, manifest);
    log_info("probe complete: accuracy " + std::to_string(probe.accuracy));
    return 0;
}

// Key = value summary files from completed runs, grouped by config-sans-seed.
int cmd_compare(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                bool force) {
    Timer timer;
    struct RunSummary {
        std::string dir;
        std::string group;
        std::map<std::string, double> values;
    };
    std::vector<RunSummary> runs;
    for (const auto& dir : run_dirs) {
        if (!manifest_exists(dir)) {
            log_error("skipping incomplete run (no manifest): " + dir);
            continue;
        }
        const fs::path summary_path = fs::path(dir) / "summary.txt";
        if (!fs::exists(summary_path)) {
            log_error("skipping incomplete run (no summary): " + dir);
            continue;
        }
        RunSummary run;
        run.dir = dir;
        run.group = read_manifest(dir).group_hash;
        std::ifstream is(summary_path);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = line.substr(0, eq - 1);
            run.values[key.substr(0, key.find_last_not_of(' ') + 1)] =
                std::stod(line.substr(eq + 1));
        }
        runs.push_back(std::move(run));
    }
    if (runs.size() < 2) throw ConfigError("compare needs at least 2 completed runs");

    std::vector<std::string> columns;
    for (const auto& [key, value] : runs.front().values) columns.push_back(key);

    std::map<std::string, std::vector<const RunSummary*>> groups;
    for (const auto& run : runs) groups[run.group].push_back(&run);

    prepare_out_dir(out_dir, force);
    std::string table = "group\truns";
    for (const auto& c : columns) table += "\t" + c + "_mean\t" + c + "_std";
    table += "\n";
    for (const auto& [group, members] : groups) {
        table += group + "\t" + std::to_string(members.size());
        for (const auto& c : columns) {
            double mean = 0.0;
            int n = 0;
            for (const auto* run : members) {
                const auto it = run->values.find(c);
                if (it != run->values.end()) {
                    mean += it->second;
                    ++n;
                }
            }
            mean = n > 0 ? mean / n : 0.0;
            double var = 0.0;
            for (const auto* run : members) {
                const auto it = run->values.find(c);
                if (it != run->values.end()) var += (it->second - mean) * (it->second - mean);
            }
            const double stddev = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
            char buf[80];
            std::snprintf(buf, sizeof(buf), "\t%.17g\t%.17g", mean, stddev);
            table += buf;
        }
        table += "\n";
    }
    write_text_file(fs::path(out_dir) / "compare.tsv", table);

    RunManifest manifest;
    manifest.command = "compare";
    ParsedConfig pseudo;
    for (const auto& run : runs) pseudo.set("run." + run.dir, run.group);
    manifest.config_hash = hash_hex(config_hash(pseudo));
    manifest.group_hash = manifest.config_hash;
    manifest.inputs = run_dirs;
    manifest.outputs = {"compare.tsv"};
    manifest.duration_seconds = timer.seconds();
    write_manifest(out_dir, manifest);
    log_info("compare complete: " + std::to_string(runs.size()) + " runs, " +
             std::to_string(groups.size()) + " groups");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic image-to-LiDAR contrastive distillation workbench"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, checkpoint_path;
    std::vector<std::string> run_dirs;
    std::optional<uint64_t> seed;
    bool force = false;

    auto* generate = app.add_subcommand("generate", "generate a synthetic scene dataset");
    generate->add_option("--config", config_path, "scene config file")->required();
    generate->add_option("--out", out_dir, "output directory")->required();
    generate->add_option("--seed", seed, "override scene.seed");
    generate->add_flag("--force", force, "overwrite an existing manifest");

    auto* pretrain = app.add_subcommand("pretrain", "run contrastive pretraining");
    pretrain->add_option("--config", config_path, "training config file")->required();
    pretrain->add_option("--data", data_dir, "scene dataset directory")->required();
    pretrain->add_option("--out", out_dir, "output directory")->required();
    pretrain->add_option("--seed", seed, "override train.seed");
    pretrain->add_flag("--force", force, "overwrite an existing manifest");

    auto* probe = app.add_subcommand("probe", "linear-probe a checkpoint");
    probe->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    probe->add_option("--data", data_dir, "scene dataset directory")->required();
    probe->add_option("--out", out_dir, "output directory")->required();
    probe->add_option("--seed", seed, "override the probe split seed");
    probe->add_flag("--force", force, "overwrite an existing manifest");

    auto* compare = app.add_subcommand("compare", "tabulate completed runs");
    compare->add_option("runs", run_dirs, "run directories")->expected(-1);
    compare->add_option("--out", out_dir, "output directory")->required();
    compare->add_flag("--force", force, "overwrite an existing manifest");

    try {
        app.parse(argc, argv);
        if (generate->parsed()) return cmd_generate(config_path, out_dir, seed, force);
        if (pretrain->parsed())
            return cmd_pretrain(config_path, data_dir, out_dir, seed, force);
        if (probe->parsed())
            return cmd_probe(checkpoint_path, data_dir, out_dir, seed, force);
        if (compare->parsed()) return cmd_compare(run_dirs, out_dir, force);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "VMFD_ERROR: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "VMFD_ERROR: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "VMFD_ERROR: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
