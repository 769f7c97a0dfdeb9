#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "amc/config.hpp"
#include "amc/eval.hpp"
#include "amc/selftest.hpp"

namespace {

using namespace amc;
namespace fs = std::filesystem;

// Exit status per failure category; 2 is reserved for usage errors.
int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return 3;
        case ErrorKind::ShapeMismatch: return 4;
        case ErrorKind::Io: return 5;
        case ErrorKind::BadMagic: return 6;
        case ErrorKind::VersionMismatch: return 7;
        case ErrorKind::Truncated: return 8;
        case ErrorKind::NonFinite: return 9;
        case ErrorKind::Config: return 10;
    }
    return 1;
}

struct Overrides {
    std::optional<fs::path> config_file;
    std::optional<fs::path> out_dir;
    std::optional<std::size_t> threads;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> frames_per_cell;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> patience;
    std::optional<std::size_t> batch_size;
    std::optional<double> learning_rate;
    std::optional<std::size_t> top_k;
    bool finetune = false;
    std::optional<fs::path> dataset;
    std::optional<fs::path> checkpoint;
    std::optional<fs::path> report;
    std::optional<fs::path> report_dir;
    std::size_t selftest_seeds = 1;
};

RunConfig resolve_config(const Overrides& o) {
    RunConfig c = default_run_config();
    if (o.config_file) c = load_run_config(*o.config_file, c);
    if (o.out_dir) c.paths.out_dir = *o.out_dir;
    if (o.threads) c.train.threads = *o.threads;
    if (o.seed) c.dataset.master_seed = *o.seed;
    if (o.frames_per_cell) c.dataset.frames_per_cell = *o.frames_per_cell;
    if (o.epochs) c.train.max_epochs = *o.epochs;
    if (o.patience) c.train.patience = *o.patience;
    if (o.batch_size) c.train.batch_size = *o.batch_size;
    if (o.learning_rate) c.train.learning_rate = *o.learning_rate;
    if (o.top_k) c.train.top_k = *o.top_k;
    if (o.finetune) c.train.stage2_finetune = true;
    if (o.dataset) c.paths.dataset = *o.dataset;
    if (o.checkpoint) c.paths.checkpoint = *o.checkpoint;
    if (o.report) c.paths.report = *o.report;
    if (o.report_dir) c.paths.report_dir = *o.report_dir;
    c.validate();
    return c;
}

void prepare_output(const RunConfig& c, const std::string& command) {
    std::error_code ec;
    fs::create_directories(c.paths.out_dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create " + c.paths.out_dir.string() + ": " + ec.message());
    const auto path = c.paths.out_dir / ("resolved_config." + command + ".json");
    std::ofstream os(path, std::ios::trunc);
    os << run_config_to_json(c);
    if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
}

std::vector<FrameRecord> load_records(const RunConfig& c) {
    const auto manifest_path = c.resolve(c.paths.manifest);
    if (fs::exists(manifest_path) && !(read_manifest(manifest_path) == c.dataset)) {
        throw Error(ErrorKind::Config, manifest_path.string() +
                                           " describes a different dataset than the configuration; rerun gen");
    }
    auto records = read_dataset(c.resolve(c.paths.dataset));
    if (!records.empty() && records.front().length() != c.dataset.frame_length) {
        throw Error(ErrorKind::Config, "dataset frames have length " + std::to_string(records.front().length()) +
                                           ", configuration expects " + std::to_string(c.dataset.frame_length));
    }
    return records;
}

EpochCallback progress(std::string label) {
    return [label = std::move(label), stage = 0](const EpochRecord& e) mutable {
        if (e.epoch == 1) ++stage;
        std::fprintf(stderr, "%s%s epoch %3zu  train_loss %.5f  val_loss %.5f  val_acc %.4f\n", label.c_str(),
                     label == "stage" ? std::to_string(stage).c_str() : "", e.epoch, e.train_loss, e.val_loss,
                     e.val_acc);
    };
}

fs::path checkpoint_or(const RunConfig& c, const char* fallback) {
    return c.resolve(c.paths.checkpoint.empty() ? fs::path(fallback) : c.paths.checkpoint);
}

int cmd_gen(const RunConfig& c) {
    prepare_output(c, "gen");
    generate_dataset(c.dataset, c.resolve(c.paths.dataset), c.resolve(c.paths.manifest), c.train.threads);
    std::printf("wrote %zu frames to %s\n", c.dataset.total_frames(), c.resolve(c.paths.dataset).c_str());
    return 0;
}

int cmd_train(const RunConfig& c) {
    prepare_output(c, "train");
    const auto records = load_records(c);
    const auto splits = prepare_splits(records, c.train);
    const auto result = train_stage(init_params<float>(c.model, c.train.init_seed), splits.fit, splits.val, nullptr,
                                    c.train, progress("stage1"));
    save_checkpoint(c.paths.out_dir / artifacts::kStage1Checkpoint, result.params);
    write_history(c.paths.out_dir / artifacts::kStage1History, result.history);
    std::printf("best epoch %zu, checkpoint %s\n", result.history.best_epoch,
                (c.paths.out_dir / artifacts::kStage1Checkpoint).c_str());
    return 0;
}

int cmd_weigh(const RunConfig& c) {
    prepare_output(c, "weigh");
    const auto params = load_checkpoint(checkpoint_or(c, artifacts::kStage1Checkpoint));
    const auto records = load_records(c);
    const auto splits = prepare_splits(records, c.train);
    const auto table = compute_instance_weights(params, splits.fit, c.train.top_k, c.train.threads);
    write_weight_table(c.resolve(c.paths.weights), table);
    double mean = 0.0;
    for (double w : table.weights) mean += w / double(table.weights.size());
    std::printf("wrote %zu weights (mean %.4f) to %s\n", table.weights.size(), mean,
                c.resolve(c.paths.weights).c_str());
    return 0;
}

int cmd_train2(const RunConfig& c) {
    prepare_output(c, "train2");
    const auto records = load_records(c);
    const auto splits = prepare_splits(records, c.train);
    const auto r = two_stage_train(splits, c.model, c.train, c.paths.out_dir, progress("stage"));
    std::printf("stage 1 best epoch %zu, stage 2 best epoch %zu, artifacts in %s\n", r.stage1.history.best_epoch,
                r.stage2.history.best_epoch, c.paths.out_dir.c_str());
    return 0;
}

int cmd_eval(const RunConfig& c) {
    prepare_output(c, "eval");
    const auto params = load_checkpoint(checkpoint_or(c, artifacts::kStage2Checkpoint));
    const auto records = load_records(c);
    const auto splits = prepare_splits(records, c.train);
    const auto report = evaluate(params, splits.test, c.train.top_k, c.train.threads);
    const auto path = c.resolve(c.paths.report);
    std::ofstream os(path, std::ios::trunc);
    os << report_to_json(report);
    if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
    std::printf("overall %.4f  average %.4f  max %.4f at %+d dB  -> %s\n", report.overall_accuracy,
                report.average_accuracy, report.max_accuracy, report.max_accuracy_snr, path.c_str());
    return 0;
}

int cmd_report(const RunConfig& c) {
    prepare_output(c, "report");
    const auto path = c.resolve(c.paths.report);
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open report " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    export_report(report_from_json(ss.str()), c.resolve(c.paths.report_dir));
    std::printf("exported report to %s\n", c.resolve(c.paths.report_dir).c_str());
    return 0;
}

int cmd_selftest(std::size_t seeds) {
    bool ok = true;
    auto show = [&](const SelfTestReport& r) {
        for (const auto& t : r.cases) {
            std::printf("%-4s %-40s %.3e (limit %.1e)\n", t.passed ? "ok" : "FAIL", t.name.c_str(), t.metric,
                        t.threshold);
        }
        ok = ok && r.passed();
    };
    for (std::size_t s = 1; s <= seeds; ++s) show(run_gradient_suite(s));
    show(run_invariant_suite());
    std::printf("%s\n", ok ? "selftest passed" : "selftest FAILED");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AFNet modulation classifier: synthetic dataset generation, two-stage training, evaluation"};
    app.name("afnet");
    app.require_subcommand(1, 1);
    app.fallthrough();

    Overrides o;
    app.add_option("-c,--config", o.config_file, "JSON run configuration");
    app.add_option("-o,--out", o.out_dir, std::string("output directory (default: $") + kOutputRootEnv + " or ./runs)");
    app.add_option("-j,--threads", o.threads, "worker threads; results do not depend on it")->check(CLI::PositiveNumber);
    app.add_option("--seed", o.seed, "dataset master seed");
    app.add_option("--frames-per-cell", o.frames_per_cell, "frames per (scheme, SNR) cell");
    app.add_option("--epochs", o.epochs, "maximum epochs per stage");
    app.add_option("--patience", o.patience, "early-stopping patience");
    app.add_option("--batch-size", o.batch_size, "mini-batch size");
    app.add_option("--lr", o.learning_rate, "Adam learning rate");
    app.add_option("-k,--top-k", o.top_k, "classes entering the confidence weight");
    app.add_option("--dataset", o.dataset, "dataset file (relative to the output directory)");

    auto* gen = app.add_subcommand("gen", "generate the synthetic I/Q dataset and its manifest");
    auto* train = app.add_subcommand("train", "single cross-entropy training stage");
    auto* weigh = app.add_subcommand("weigh", "confidence weight table from a checkpoint");
    auto* train2 = app.add_subcommand("train2", "full two-stage pipeline");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    auto* report = app.add_subcommand("report", "export CSV tables and SVG charts from an evaluation report");
    auto* selftest = app.add_subcommand("selftest", "gradient checks and invariant suite");

    for (auto* sub : {weigh, eval}) sub->add_option("--checkpoint", o.checkpoint, "checkpoint to load");
    train2->add_flag("--finetune", o.finetune, "start stage 2 from the stage-1 checkpoint");
    eval->add_option("--report", o.report, "report JSON to write");
    report->add_option("--report", o.report, "report JSON to read");
    report->add_option("--report-dir", o.report_dir, "directory for the exported files");
    selftest->add_option("--seeds", o.selftest_seeds, "gradient suite repetitions")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        const auto rest = app.remaining();
        if (!rest.empty() && app.get_subcommands().empty()) {
            std::cerr << "afnet: unknown subcommand '" << rest.front() << "'\n\n" << app.help();
        } else {
            std::cerr << "afnet: " << e.what() << "\n\n" << app.help();
        }
        return 2;
    }

    try {
        if (selftest->parsed()) return cmd_selftest(o.selftest_seeds);
        const RunConfig cfg = resolve_config(o);
        const auto start = std::chrono::steady_clock::now();
        int status = 0;
        if (gen->parsed()) status = cmd_gen(cfg);
        else if (train->parsed()) status = cmd_train(cfg);
        else if (weigh->parsed()) status = cmd_weigh(cfg);
        else if (train2->parsed()) status = cmd_train2(cfg);
        else if (eval->parsed()) status = cmd_eval(cfg);
        else if (report->parsed()) status = cmd_report(cfg);
        const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
        std::fprintf(stderr, "done in %.1f s\n", took.count());
        return status;
    } catch (const Error& e) {
        std::cerr << "afnet: " << to_string(e.kind()) << ": " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "afnet: " << e.what() << "\n";
        return 1;
    }
}
