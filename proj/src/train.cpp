#include "amc/train.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "amc/losses.hpp"
#include "binary_io.hpp"

namespace amc {

namespace {

constexpr std::size_t kChunk = 16;

// Runs fn(chunk_index) for every chunk, distributing chunks round-robin.
template <typename Fn>
void for_each_chunk(std::size_t n_chunks, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n_chunks));
    if (threads == 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) fn(c);
        return;
    }
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t c = t; c < n_chunks; c += threads) fn(c);
        });
    }
}

void add_into(AFNetParams<float>& total, const AFNetParams<float>& part) {
    auto dst = total.blocks();
    const auto src = part.blocks();
    for (std::size_t b = 0; b < dst.size(); ++b) {
        float* d = dst[b].value->data();
        const float* s = src[b].second->data();
        for (std::size_t i = 0; i < dst[b].value->size(); ++i) d[i] += s[i];
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string fmt9g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidArgument, "train config: " + msg); };
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (batch_size == 0) fail("batch_size must be >= 1");
    if (patience == 0) fail("patience must be >= 1");
    if (max_epochs == 0) fail("max_epochs must be >= 1");
    if (top_k < 2) fail("top_k must be >= 2");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) fail("val_fraction must lie in (0, 1)");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) fail("split_ratio must lie in (0, 1)");
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

std::string weight_table_to_text(const WeightTable& table) {
    std::string out = "# checkpoint=" + table.checkpoint_hash + " k=" + std::to_string(table.k) +
                      " count=" + std::to_string(table.weights.size()) + "\n";
    char buf[64];
    for (std::size_t i = 0; i < table.weights.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.9f\n", i, table.weights[i]);
        out += buf;
    }
    return out;
}

WeightTable weight_table_from_text(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line.rfind("# ", 0) != 0) {
        throw Error(ErrorKind::BadMagic, "weight table: missing '# checkpoint=... k=... count=...' header");
    }
    WeightTable t;
    std::size_t count = 0;
    std::istringstream header(line.substr(2));
    std::string field;
    bool have_k = false, have_count = false;
    while (header >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
        try {
            if (key == "checkpoint") t.checkpoint_hash = value;
            if (key == "k") { t.k = std::stoul(value); have_k = true; }
            if (key == "count") { count = std::stoul(value); have_count = true; }
        } catch (const std::exception&) {
            throw Error(ErrorKind::InvalidArgument, "weight table: bad header field '" + field + "'");
        }
    }
    if (!have_k || !have_count) throw Error(ErrorKind::InvalidArgument, "weight table: header lacks k or count");
    t.weights.reserve(count);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw Error(ErrorKind::InvalidArgument, "weight table: malformed line '" + line + "'");
        std::size_t index = 0;
        double w = 0.0;
        try {
            index = std::stoul(line.substr(0, comma));
            w = std::stod(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw Error(ErrorKind::InvalidArgument, "weight table: malformed line '" + line + "'");
        }
        if (index != t.weights.size()) {
            throw Error(ErrorKind::InvalidArgument, "weight table: expected index " + std::to_string(t.weights.size()) +
                                                        ", found " + std::to_string(index));
        }
        if (!(w >= 0.0 && w <= 1.0)) {
            throw Error(ErrorKind::InvalidArgument, "weight table: weight " + std::to_string(w) + " outside [0, 1]");
        }
        t.weights.push_back(w);
    }
    if (t.weights.size() != count) {
        throw Error(ErrorKind::Truncated, "weight table: header declares " + std::to_string(count) + " weights, found " +
                                              std::to_string(t.weights.size()));
    }
    return t;
}

void write_weight_table(const std::filesystem::path& path, const WeightTable& table) {
    write_text(path, weight_table_to_text(table));
}

WeightTable read_weight_table(const std::filesystem::path& path) { return weight_table_from_text(read_text(path)); }

std::string history_to_csv(const TrainHistory& history) {
    std::string out = "epoch,train_loss,val_loss,val_acc\n";
    for (const auto& e : history.epochs) {
        out += std::to_string(e.epoch) + "," + fmt9g(e.train_loss) + "," + fmt9g(e.val_loss) + "," + fmt9g(e.val_acc) + "\n";
    }
    return out;
}

void write_history(const std::filesystem::path& path, const TrainHistory& history) {
    write_text(path, history_to_csv(history));
}

std::vector<std::vector<float>> predict_probs(const AFNetParams<float>& params, std::span<const FrameRecord> records,
                                              std::size_t threads) {
    std::vector<std::vector<float>> out(records.size());
    const std::size_t n_chunks = (records.size() + kChunk - 1) / kChunk;
    for_each_chunk(n_chunks, threads, [&](std::size_t c) {
        for (std::size_t i = c * kChunk; i < std::min(records.size(), (c + 1) * kChunk); ++i) {
            const auto probs = afnet_forward(frame_tensor<float>(records[i].iq, params.config.frame_length), params);
            out[i].assign(probs.values().begin(), probs.values().end());
        }
    });
    return out;
}

BatchResult batch_gradient(const AFNetParams<float>& params, std::span<const FrameRecord> records,
                           std::span<const std::size_t> indices, std::span<const double> weights,
                           std::size_t threads) {
    if (!weights.empty() && weights.size() != records.size()) {
        throw Error(ErrorKind::ShapeMismatch, "batch_gradient: " + std::to_string(weights.size()) + " weights for " +
                                                  std::to_string(records.size()) + " records");
    }
    const std::size_t n = indices.size();
    const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
    struct Chunk {
        double loss = 0.0;
        std::size_t correct = 0;
        AFNetParams<float> grads;
    };
    std::vector<Chunk> chunks(n_chunks);

    for_each_chunk(n_chunks, threads, [&](std::size_t c) {
        Chunk& ch = chunks[c];
        ch.grads = params.zeros_like();
        NetworkCache<float> cache;
        for (std::size_t j = c * kChunk; j < std::min(n, (c + 1) * kChunk); ++j) {
            const auto& rec = records[indices[j]];
            const std::size_t label = modulation_index(rec.label);
            const double w = weights.empty() ? 1.0 : weights[indices[j]];
            const auto probs = afnet_forward(frame_tensor<float>(rec.iq, params.config.frame_length), params, &cache);
            ch.loss += cw_loss<float>(probs.values(), label, w);
            if (argmax(probs.values()) == label) ++ch.correct;
            Tensor<float> d_logits = probs;
            d_logits[label] -= 1.0f;
            for (auto& v : d_logits.values()) v *= float(w);
            afnet_backward(params, cache, d_logits, ch.grads);
        }
    });

    BatchResult out;
    out.grads = params.zeros_like();
    for (const auto& ch : chunks) {
        out.loss_sum += ch.loss;
        out.correct += ch.correct;
        add_into(out.grads, ch.grads);
    }
    if (n > 0) {
        const float scale = 1.0f / float(n);
        for (auto& b : out.grads.blocks()) {
            for (auto& v : b.value->values()) v *= scale;
        }
    }
    return out;
}

LossAccuracy evaluate_loss(const AFNetParams<float>& params, std::span<const FrameRecord> records, std::size_t threads) {
    if (records.empty()) throw Error(ErrorKind::InvalidArgument, "evaluate_loss: no records");
    const auto probs = predict_probs(params, records, threads);
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::size_t label = modulation_index(records[i].label);
        loss += ce_loss<float>(probs[i], label);
        if (argmax(probs[i]) == label) ++correct;
    }
    return {loss / double(records.size()), double(correct) / double(records.size())};
}

StageResult train_stage(AFNetParams<float> params, std::span<const FrameRecord> train,
                        std::span<const FrameRecord> val, const WeightTable* weights, const TrainConfig& config,
                        const EpochCallback& on_epoch) {
    config.validate();
    if (train.empty() || val.empty()) throw Error(ErrorKind::InvalidArgument, "train_stage needs non-empty train and validation sets");
    if (weights && weights->weights.size() != train.size()) {
        throw Error(ErrorKind::ShapeMismatch, "weight table has " + std::to_string(weights->weights.size()) +
                                                  " entries for " + std::to_string(train.size()) + " training instances");
    }
    const std::span<const double> w = weights ? std::span<const double>(weights->weights) : std::span<const double>();

    AdamState<float> adam;
    StageResult best{params, {}};
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    std::vector<std::size_t> order(train.size());

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(detail::hash_combine(detail::mix64(config.shuffle_seed), epoch));
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            auto batch = batch_gradient(params, train, std::span(order).subspan(start, end - start), w, config.threads);
            if (!std::isfinite(batch.loss_sum)) {
                throw Error(ErrorKind::NonFinite, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                                      std::to_string(batch_index));
            }
            loss_sum += batch.loss_sum;
            std::vector<Tensor<float>> grads;
            for (auto& b : batch.grads.blocks()) grads.push_back(std::move(*b.value));
            const auto blocks = params.blocks();
            try {
                adam_step<float>(blocks, grads, adam, config.learning_rate);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::NonFinite) throw;
                throw Error(ErrorKind::NonFinite, std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                                      ", batch " + std::to_string(batch_index));
            }
        }

        const auto v = evaluate_loss(params, val, config.threads);
        if (!std::isfinite(v.loss)) {
            throw Error(ErrorKind::NonFinite, "non-finite validation loss at epoch " + std::to_string(epoch));
        }
        EpochRecord rec{epoch, loss_sum / double(train.size()), v.loss, v.accuracy};
        best.history.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (v.loss < best_loss) {
            best_loss = v.loss;
            best.history.best_epoch = epoch;
            best.params = params;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            best.history.stopped_early = true;
            break;
        }
    }
    return best;
}

WeightTable compute_instance_weights(const AFNetParams<float>& params, std::span<const FrameRecord> records,
                                     std::size_t k, std::size_t threads) {
    if (k < 2 || k > params.config.classes) {
        throw Error(ErrorKind::InvalidArgument, "top-k needs 2 <= k <= " + std::to_string(params.config.classes));
    }
    WeightTable t;
    t.k = k;
    t.checkpoint_hash = fnv1a_hex(checkpoint_bytes(params));
    const auto probs = predict_probs(params, records, threads);
    t.weights.reserve(records.size());
    for (const auto& p : probs) t.weights.push_back(confidence_weight<float>(p, k));
    return t;
}

PreparedSplits prepare_splits(std::span<const FrameRecord> records, const TrainConfig& config) {
    config.validate();
    auto outer = split_dataset(records, config.split_ratio, config.split_seed);
    auto inner = split_dataset(outer.train, 1.0 - config.val_fraction, detail::hash_combine(config.split_seed, 1));
    return {std::move(inner.train), std::move(inner.test), std::move(outer.test)};
}

TwoStageResult two_stage_train(const PreparedSplits& splits, const ModelConfig& model, const TrainConfig& config,
                               const std::optional<std::filesystem::path>& out_dir, const EpochCallback& on_epoch) {
    std::vector<std::filesystem::path> written;
    auto emit = [&](const char* name, auto&& writer) {
        if (!out_dir) return;
        const auto path = *out_dir / name;
        written.push_back(path);
        writer(path);
    };
    try {
        if (out_dir) std::filesystem::create_directories(*out_dir);
        TwoStageResult r;
        r.stage1 = train_stage(init_params<float>(model, config.init_seed), splits.fit, splits.val, nullptr, config, on_epoch);
        emit(artifacts::kStage1Checkpoint, [&](const auto& p) { save_checkpoint(p, r.stage1.params); });
        emit(artifacts::kStage1History, [&](const auto& p) { write_history(p, r.stage1.history); });

        // round-trip through the persisted form so stage 2 sees exactly the file's values
        r.weights = weight_table_from_text(
            weight_table_to_text(compute_instance_weights(r.stage1.params, splits.fit, config.top_k, config.threads)));
        emit(artifacts::kWeights, [&](const auto& p) { write_weight_table(p, r.weights); });

        auto init2 = config.stage2_finetune ? r.stage1.params : init_params<float>(model, config.stage2_init_seed);
        r.stage2 = train_stage(std::move(init2), splits.fit, splits.val, &r.weights, config, on_epoch);
        emit(artifacts::kStage2Checkpoint, [&](const auto& p) { save_checkpoint(p, r.stage2.params); });
        emit(artifacts::kStage2History, [&](const auto& p) { write_history(p, r.stage2.history); });
        return r;
    } catch (...) {
        std::error_code ec;
        for (const auto& p : written) std::filesystem::remove(p, ec);
        throw;
    }
}

}  // namespace amc
