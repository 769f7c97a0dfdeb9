#pragma once

// Run configuration shared by the command-line tool and the bindings.
//
// Precedence, lowest first: built-in defaults, the AMC_OUTPUT_ROOT
// environment variable (output directory only), the JSON config file,
// command-line flags.

#include <cstddef>
#include <filesystem>
#include <string>

#include "amc/model.hpp"
#include "amc/signal.hpp"
#include "amc/train.hpp"

namespace amc {

inline constexpr const char* kOutputRootEnv = "AMC_OUTPUT_ROOT";

struct PathConfig {
    // Relative paths below resolve against out_dir.
    std::filesystem::path out_dir = "runs";
    std::filesystem::path dataset = "dataset.amc";
    std::filesystem::path manifest = "manifest.json";
    // Empty: the subcommand picks its natural input (stage1.afn for weigh,
    // stage2.afn for eval).
    std::filesystem::path checkpoint;
    std::filesystem::path weights = "weights.csv";
    std::filesystem::path report = "report.json";
    std::filesystem::path report_dir = "report";

    bool operator==(const PathConfig&) const = default;
};

struct RunConfig {
    DatasetManifest dataset;
    ModelConfig model;
    TrainConfig train;
    PathConfig paths;

    std::filesystem::path resolve(const std::filesystem::path& p) const;
    // Cross-section checks on top of each section's own validation: the
    // model's frame length follows the dataset and every scheme needs an
    // output class.
    void validate() const;
    bool operator==(const RunConfig&) const = default;
};

// Defaults with out_dir taken from AMC_OUTPUT_ROOT when it is set.
RunConfig default_run_config();

// Overlays the keys present in `text` onto `base`. Unknown keys, wrong types
// and malformed JSON raise ErrorKind::Config.
RunConfig merge_run_config(const RunConfig& base, const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base);

// Every field, explicit, so a run can be replayed from the snapshot alone.
std::string run_config_to_json(const RunConfig& config);

}  // namespace amc
