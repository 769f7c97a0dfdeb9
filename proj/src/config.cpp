#include "amc/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <type_traits>

#include <json.hpp>

namespace amc {
namespace {

using Json = nlohmann::json;

[[noreturn]] void bad(const std::string& where, const std::string& msg) {
    throw Error(ErrorKind::Config, "config " + where + ": " + msg);
}

void check_keys(const Json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) bad(where, "expected an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            bad(where, "unknown key '" + key + "'");
        }
    }
}

// Field readers: leave `out` untouched when the key is absent.
template <typename U>
    requires std::is_unsigned_v<U>
void read(const Json& obj, const char* key, const std::string& where, U& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj[key];
    if (!v.is_number_unsigned()) bad(where + "." + key, "expected a non-negative integer");
    out = v.get<U>();
}

void read(const Json& obj, const char* key, const std::string& where, double& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj[key];
    if (!v.is_number()) bad(where + "." + key, "expected a number");
    out = v.get<double>();
}

void read(const Json& obj, const char* key, const std::string& where, bool& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj[key];
    if (!v.is_boolean()) bad(where + "." + key, "expected true or false");
    out = v.get<bool>();
}

void read(const Json& obj, const char* key, const std::string& where, std::filesystem::path& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj[key];
    if (!v.is_string()) bad(where + "." + key, "expected a string");
    out = v.get<std::string>();
}

std::vector<int> read_ints(const Json& v, const std::string& where) {
    if (!v.is_array()) bad(where, "expected an array of integers");
    std::vector<int> out;
    for (const auto& e : v) {
        if (!e.is_number_integer()) bad(where, "expected an array of integers");
        out.push_back(e.get<int>());
    }
    return out;
}

void merge_dataset(const Json& j, DatasetManifest& m) {
    check_keys(j, "dataset", {"schemes", "snrs_db", "snr_range", "frames_per_cell", "frame_length",
                              "samples_per_symbol", "master_seed", "silent_bursts"});
    if (j.contains("schemes")) {
        if (!j["schemes"].is_array()) bad("dataset.schemes", "expected an array of scheme names");
        m.schemes.clear();
        for (const auto& name : j["schemes"]) {
            if (!name.is_string()) bad("dataset.schemes", "expected an array of scheme names");
            const auto s = parse_modulation(name.get<std::string>());
            if (!s) bad("dataset.schemes", "unknown modulation '" + name.get<std::string>() + "'");
            m.schemes.push_back(*s);
        }
    }
    if (j.contains("snrs_db") && j.contains("snr_range")) bad("dataset", "give either snrs_db or snr_range, not both");
    if (j.contains("snrs_db")) m.snrs_db = read_ints(j["snrs_db"], "dataset.snrs_db");
    if (j.contains("snr_range")) {
        const auto& r = j["snr_range"];
        check_keys(r, "dataset.snr_range", {"min", "max", "step"});
        if (!r.contains("min") || !r.contains("max") || !r.contains("step")) {
            bad("dataset.snr_range", "needs min, max and step");
        }
        const auto v = read_ints(Json::array({r["min"], r["max"], r["step"]}), "dataset.snr_range");
        try {
            m.snrs_db = snr_range(v[0], v[1], v[2]);
        } catch (const Error& e) {
            bad("dataset.snr_range", e.what());
        }
    }
    read(j, "frames_per_cell", "dataset", m.frames_per_cell);
    read(j, "frame_length", "dataset", m.frame_length);
    read(j, "samples_per_symbol", "dataset", m.samples_per_symbol);
    read(j, "master_seed", "dataset", m.master_seed);
    read(j, "silent_bursts", "dataset", m.silent_bursts);
}

void merge_model(const Json& j, ModelConfig& c) {
    check_keys(j, "model", {"channels", "compression", "units", "pool_after", "groups", "classes"});
    read(j, "channels", "model", c.channels);
    read(j, "compression", "model", c.compression);
    read(j, "units", "model", c.units);
    read(j, "groups", "model", c.groups);
    read(j, "classes", "model", c.classes);
    if (j.contains("pool_after")) {
        c.pool_after.clear();
        for (int v : read_ints(j["pool_after"], "model.pool_after")) {
            if (v < 1) bad("model.pool_after", "unit indices start at 1");
            c.pool_after.push_back(std::size_t(v));
        }
    }
}

void merge_train(const Json& j, TrainConfig& c) {
    check_keys(j, "train", {"learning_rate", "batch_size", "max_epochs", "patience", "val_fraction", "top_k",
                            "split_ratio", "split_seed", "shuffle_seed", "init_seed", "stage2_init_seed",
                            "stage2_finetune"});
    read(j, "learning_rate", "train", c.learning_rate);
    read(j, "batch_size", "train", c.batch_size);
    read(j, "max_epochs", "train", c.max_epochs);
    read(j, "patience", "train", c.patience);
    read(j, "val_fraction", "train", c.val_fraction);
    read(j, "top_k", "train", c.top_k);
    read(j, "split_ratio", "train", c.split_ratio);
    read(j, "split_seed", "train", c.split_seed);
    read(j, "shuffle_seed", "train", c.shuffle_seed);
    read(j, "init_seed", "train", c.init_seed);
    read(j, "stage2_init_seed", "train", c.stage2_init_seed);
    read(j, "stage2_finetune", "train", c.stage2_finetune);
}

void merge_paths(const Json& j, PathConfig& p) {
    check_keys(j, "paths", {"out_dir", "dataset", "manifest", "checkpoint", "weights", "report", "report_dir"});
    read(j, "out_dir", "paths", p.out_dir);
    read(j, "dataset", "paths", p.dataset);
    read(j, "manifest", "paths", p.manifest);
    read(j, "checkpoint", "paths", p.checkpoint);
    read(j, "weights", "paths", p.weights);
    read(j, "report", "paths", p.report);
    read(j, "report_dir", "paths", p.report_dir);
}

}  // namespace

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : paths.out_dir / p;
}

void RunConfig::validate() const {
    if (dataset.schemes.empty()) bad("dataset.schemes", "at least one scheme is required");
    if (dataset.snrs_db.empty()) bad("dataset.snrs_db", "at least one SNR is required");
    if (dataset.frames_per_cell == 0) bad("dataset.frames_per_cell", "must be positive");
    if (model.frame_length != dataset.frame_length) {
        bad("model", "frame length " + std::to_string(model.frame_length) + " differs from the dataset's " +
                         std::to_string(dataset.frame_length));
    }
    for (auto s : dataset.schemes) {
        if (modulation_index(s) >= model.classes) {
            bad("model.classes", std::string(modulation_name(s)) + " has class index " +
                                     std::to_string(modulation_index(s)) + " but the model has " +
                                     std::to_string(model.classes) + " outputs");
        }
    }
    if (paths.out_dir.empty()) bad("paths.out_dir", "must not be empty");
    try {
        model.validate();
        train.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::Config, e.what());
    }
    if (train.top_k > model.classes) bad("train.top_k", "exceeds the number of classes");
}

RunConfig default_run_config() {
    RunConfig c;
    c.dataset = default_manifest();
    c.model.frame_length = c.dataset.frame_length;
    if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') c.paths.out_dir = root;
    return c;
}

RunConfig merge_run_config(const RunConfig& base, const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        bad("file", std::string("malformed JSON: ") + e.what());
    }
    check_keys(j, "root", {"threads", "dataset", "model", "train", "paths"});
    RunConfig c = base;
    read(j, "threads", "root", c.train.threads);
    if (j.contains("dataset")) merge_dataset(j["dataset"], c.dataset);
    if (j.contains("model")) merge_model(j["model"], c.model);
    if (j.contains("train")) merge_train(j["train"], c.train);
    if (j.contains("paths")) merge_paths(j["paths"], c.paths);
    c.model.frame_length = c.dataset.frame_length;
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return merge_run_config(base, ss.str());
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

std::string run_config_to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["threads"] = c.train.threads;

    auto& d = j["dataset"];
    std::vector<std::string> names;
    for (auto s : c.dataset.schemes) names.emplace_back(modulation_name(s));
    d["schemes"] = names;
    d["snrs_db"] = c.dataset.snrs_db;
    d["frames_per_cell"] = c.dataset.frames_per_cell;
    d["frame_length"] = c.dataset.frame_length;
    d["samples_per_symbol"] = c.dataset.samples_per_symbol;
    d["master_seed"] = c.dataset.master_seed;
    d["silent_bursts"] = c.dataset.silent_bursts;

    auto& m = j["model"];
    m["channels"] = c.model.channels;
    m["compression"] = c.model.compression;
    m["units"] = c.model.units;
    m["pool_after"] = c.model.pool_after;
    m["groups"] = c.model.groups;
    m["classes"] = c.model.classes;

    auto& t = j["train"];
    t["learning_rate"] = c.train.learning_rate;
    t["batch_size"] = c.train.batch_size;
    t["max_epochs"] = c.train.max_epochs;
    t["patience"] = c.train.patience;
    t["val_fraction"] = c.train.val_fraction;
    t["top_k"] = c.train.top_k;
    t["split_ratio"] = c.train.split_ratio;
    t["split_seed"] = c.train.split_seed;
    t["shuffle_seed"] = c.train.shuffle_seed;
    t["init_seed"] = c.train.init_seed;
    t["stage2_init_seed"] = c.train.stage2_init_seed;
    t["stage2_finetune"] = c.train.stage2_finetune;

    auto& p = j["paths"];
    p["out_dir"] = c.paths.out_dir.string();
    p["dataset"] = c.paths.dataset.string();
    p["manifest"] = c.paths.manifest.string();
    p["checkpoint"] = c.paths.checkpoint.string();
    p["weights"] = c.paths.weights.string();
    p["report"] = c.paths.report.string();
    p["report_dir"] = c.paths.report_dir.string();
    return j.dump(2) + "\n";
}

}  // namespace amc
