#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amc/model.hpp"
#include "amc/signal.hpp"

namespace amc {

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;  // [true][predicted]

struct EvalReport {
    std::size_t classes = kNumModulations;
    std::size_t k = 3;
    double overall_accuracy = 0.0;
    double average_accuracy = 0.0;  // unweighted mean over SNRs
    double max_accuracy = 0.0;      // best single SNR
    int max_accuracy_snr = 0;
    std::map<int, double> accuracy_by_snr;
    std::map<int, std::size_t> count_by_snr;
    // Only cells with at least one instance appear.
    std::map<std::pair<std::size_t, int>, double> accuracy_by_class_snr;
    std::map<std::pair<std::size_t, int>, std::size_t> count_by_class_snr;
    std::map<int, ConfusionMatrix> confusion_by_snr;
    std::map<int, double> confidence_by_snr;
    std::map<std::size_t, double> confidence_by_class;

    bool operator==(const EvalReport&) const = default;
};

// Posterior over `classes` for one frame.
using Predictor = std::function<std::vector<double>(const FrameRecord&)>;

EvalReport evaluate(const Predictor& predict, std::span<const FrameRecord> records, std::size_t classes,
                    std::size_t k = 3);

// Batched inference through the network; otherwise identical to the above.
EvalReport evaluate(const AFNetParams<float>& params, std::span<const FrameRecord> records, std::size_t k = 3,
                    std::size_t threads = 1);

// Build a report from precomputed posteriors (one row per record).
EvalReport evaluate_probs(std::span<const std::vector<double>> probs, std::span<const FrameRecord> records,
                          std::size_t classes, std::size_t k);

struct ConfidenceStats {
    std::map<int, double> by_snr;
    std::map<std::size_t, double> by_class;
};

ConfidenceStats confidence_stats(const AFNetParams<float>& params, std::span<const FrameRecord> records,
                                 std::size_t k, std::size_t threads = 1);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

// Writes acc_by_snr.csv, acc_by_class_snr.csv, confusion_<snr>.csv,
// confidence.csv, summary.csv and the SVG charts acc_by_snr.svg,
// acc_by_class_snr.svg, confidence_by_snr.svg into out_dir. Output bytes are
// a pure function of the report.
void export_report(const EvalReport& report, const std::filesystem::path& out_dir);

struct ChartSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

// Minimal standalone SVG line chart.
std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           std::span<const ChartSeries> series, double y_min = 0.0, double y_max = 1.0);

}  // namespace amc
