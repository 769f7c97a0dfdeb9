#pragma once

// Mini-batch Adam training with early stopping, per-instance confidence
// weights, and the two-stage pipeline:
//   stage 1: train with cross entropy from a fresh init
//   weigh:   w_i = confidence_weight(model(x_i), k) on every fit instance
//   stage 2: retrain with w_i * CE (fresh init by default)

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amc/model.hpp"
#include "amc/signal.hpp"

namespace amc {

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t batch_size = 512;
    std::size_t max_epochs = 200;
    std::size_t patience = 15;
    double val_fraction = 0.1;  // carved from the train split
    std::size_t top_k = 3;
    double split_ratio = 0.8;   // train : test
    std::uint64_t split_seed = 1;
    std::uint64_t shuffle_seed = 2;
    std::uint64_t init_seed = 3;
    std::uint64_t stage2_init_seed = 4;
    bool stage2_finetune = false;  // continue from the stage-1 checkpoint instead of re-initializing
    std::size_t threads = 1;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct WeightTable {
    std::vector<double> weights;  // indexed by position in the fit set
    std::string checkpoint_hash;  // hex FNV-1a of the stage-1 checkpoint bytes
    std::size_t k = 3;

    bool operator==(const WeightTable&) const = default;
};

// "# checkpoint=<hash> k=<k> count=<n>" then "index,weight" lines, weights
// with 9 decimals.
std::string weight_table_to_text(const WeightTable& table);
WeightTable weight_table_from_text(const std::string& text);
void write_weight_table(const std::filesystem::path& path, const WeightTable& table);
WeightTable read_weight_table(const std::filesystem::path& path);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;  // argmin val_loss, 1-based
    bool stopped_early = false;
    bool operator==(const TrainHistory&) const = default;
};

// CSV "epoch,train_loss,val_loss,val_acc".
std::string history_to_csv(const TrainHistory& history);
void write_history(const std::filesystem::path& path, const TrainHistory& history);

std::string fnv1a_hex(const std::string& bytes);

// Posterior for every record, evaluated in parallel with results in input order.
std::vector<std::vector<float>> predict_probs(const AFNetParams<float>& params, std::span<const FrameRecord> records,
                                              std::size_t threads = 1);

struct BatchResult {
    double loss_sum = 0.0;       // sum of per-instance (weighted) losses
    std::size_t correct = 0;
    AFNetParams<float> grads;    // gradient of the MEAN batch loss
};

// Gradient of mean_i w_i * CE_i over the given indices. Work is split into
// fixed 16-instance chunks reduced in index order, so the result does not
// depend on the thread count.
BatchResult batch_gradient(const AFNetParams<float>& params, std::span<const FrameRecord> records,
                           std::span<const std::size_t> indices, std::span<const double> weights,
                           std::size_t threads = 1);

struct LossAccuracy {
    double loss = 0.0;  // mean CE
    double accuracy = 0.0;
};

LossAccuracy evaluate_loss(const AFNetParams<float>& params, std::span<const FrameRecord> records,
                           std::size_t threads = 1);

struct StageResult {
    AFNetParams<float> params;  // best-validation-loss checkpoint
    TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// One training stage. `weights`, when given, must hold one weight per
// training record; the batch loss becomes the mean of w_i * CE_i.
StageResult train_stage(AFNetParams<float> params, std::span<const FrameRecord> train,
                        std::span<const FrameRecord> val, const WeightTable* weights, const TrainConfig& config,
                        const EpochCallback& on_epoch = {});

WeightTable compute_instance_weights(const AFNetParams<float>& params, std::span<const FrameRecord> records,
                                     std::size_t k, std::size_t threads = 1);

struct PreparedSplits {
    std::vector<FrameRecord> fit;
    std::vector<FrameRecord> val;
    std::vector<FrameRecord> test;
};

// train : test by split_ratio, then val_fraction of train held out for early
// stopping. Both splits are stratified per (scheme, SNR) cell.
PreparedSplits prepare_splits(std::span<const FrameRecord> records, const TrainConfig& config);

struct TwoStageResult {
    StageResult stage1;
    WeightTable weights;
    StageResult stage2;
};

// Artifact names written by two_stage_train into its output directory.
namespace artifacts {
inline constexpr const char* kStage1Checkpoint = "stage1.afn";
inline constexpr const char* kStage1History = "stage1_history.csv";
inline constexpr const char* kWeights = "weights.csv";
inline constexpr const char* kStage2Checkpoint = "stage2.afn";
inline constexpr const char* kStage2History = "stage2_history.csv";
}  // namespace artifacts

// Runs both stages on splits.fit / splits.val. If out_dir is set, every
// checkpoint, history and the weight table are written there; on failure the
// files written so far are removed. Stage 2 consumes the weight table as
// persisted (9 decimals), so a rerun from the file is bit-identical.
TwoStageResult two_stage_train(const PreparedSplits& splits, const ModelConfig& model, const TrainConfig& config,
                               const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                               const EpochCallback& on_epoch = {});

}  // namespace amc
