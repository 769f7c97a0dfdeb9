#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "amc/eval.hpp"
#include "amc/losses.hpp"
#include "test_support.hpp"

namespace amc {
namespace {

// Label-only records over every scheme and the given SNRs; frames are empty
// because the predictors below never look at them.
std::vector<FrameRecord> labelled(const std::vector<int>& snrs, std::size_t per_cell) {
    std::vector<FrameRecord> out;
    std::uint64_t seed = 0;
    for (std::size_t c = 0; c < kNumModulations; ++c)
        for (int snr : snrs)
            for (std::size_t i = 0; i < per_cell; ++i) out.push_back({modulation_from_index(c), snr, seed++, {}});
    return out;
}

std::vector<double> one_hot(std::size_t i) {
    std::vector<double> v(kNumModulations, 0.0);
    v[i] = 1.0;
    return v;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

TEST(Evaluate, OraclePredictorIsPerfect) {
    const auto recs = labelled({-10, 0, 10}, 4);
    const auto r = evaluate([](const FrameRecord& f) { return one_hot(modulation_index(f.label)); }, recs,
                            kNumModulations);
    EXPECT_EQ(r.overall_accuracy, 1.0);
    EXPECT_EQ(r.average_accuracy, 1.0);
    for (const auto& [snr, m] : r.confusion_by_snr)
        for (std::size_t t = 0; t < kNumModulations; ++t)
            for (std::size_t p = 0; p < kNumModulations; ++p) EXPECT_EQ(m[t][p], t == p ? 4u : 0u);
    for (const auto& [snr, w] : r.confidence_by_snr) EXPECT_EQ(w, 1.0);
}

TEST(Evaluate, RandomGuessingSitsAtChance) {
    const auto recs = labelled({0}, 2000);
    std::mt19937_64 rng(5);
    const auto r = evaluate([&](const FrameRecord&) { return one_hot(rng() % kNumModulations); }, recs,
                            kNumModulations);
    const double p = 1.0 / 11.0, n = double(recs.size());
    EXPECT_NEAR(r.overall_accuracy, p, 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(Evaluate, AccuraciesFollowFromConfusionMatrices) {
    const auto recs = labelled({-4, 2, 8}, 5);
    std::mt19937_64 rng(6);
    // right for even seeds, otherwise a random class
    const auto r = evaluate(
        [&](const FrameRecord& f) {
            return one_hot(f.seed % 2 == 0 ? modulation_index(f.label) : rng() % kNumModulations);
        },
        recs, kNumModulations);
    double sum = 0.0;
    std::size_t diag = 0, total = 0;
    for (const auto& [snr, m] : r.confusion_by_snr) {
        std::size_t d = 0, t = 0;
        for (std::size_t i = 0; i < m.size(); ++i)
            for (std::size_t j = 0; j < m.size(); ++j) {
                t += m[i][j];
                if (i == j) d += m[i][j];
            }
        EXPECT_EQ(t, kNumModulations * 5);
        EXPECT_EQ(r.accuracy_by_snr.at(snr), double(d) / double(t));
        sum += double(d) / double(t);
        diag += d;
        total += t;
    }
    EXPECT_NEAR(r.average_accuracy, sum / 3.0, 1e-15);
    EXPECT_EQ(r.overall_accuracy, double(diag) / double(total));
    double best = 0.0;
    for (const auto& [snr, a] : r.accuracy_by_snr) best = std::max(best, a);
    EXPECT_EQ(r.max_accuracy, best);
    EXPECT_EQ(r.accuracy_by_snr.at(r.max_accuracy_snr), best);
}

TEST(Evaluate, MissingCellsAreOmitted) {
    std::vector<FrameRecord> recs = {{Modulation::QPSK, 4, 0, {}}, {Modulation::QPSK, 4, 1, {}}};
    const auto r = evaluate([](const FrameRecord&) { return one_hot(1); }, recs, kNumModulations);
    EXPECT_EQ(r.accuracy_by_class_snr.size(), 1u);
    EXPECT_EQ(r.accuracy_by_class_snr.at({1, 4}), 1.0);
}

TEST(Evaluate, ConfidenceMatchesTheWeightDefinition) {
    const auto recs = labelled({0, 6}, 3);
    auto predictor = [](const FrameRecord& f) {
        std::vector<double> p(kNumModulations, 0.01);
        p[f.seed % kNumModulations] += 0.5 + 0.01 * double(f.snr_db);
        double s = 0.0;
        for (double v : p) s += v;
        for (auto& v : p) v /= s;
        return p;
    };
    const auto r = evaluate(predictor, recs, kNumModulations, 3);
    for (int snr : {0, 6}) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& f : recs)
            if (f.snr_db == snr) {
                sum += confidence_weight<double>(predictor(f), 3);
                ++n;
            }
        EXPECT_NEAR(r.confidence_by_snr.at(snr), sum / double(n), 1e-12);
        EXPECT_GE(r.confidence_by_snr.at(snr), 0.0);
        EXPECT_LE(r.confidence_by_snr.at(snr), 1.0);
    }
}

TEST(Evaluate, Errors) {
    const auto recs = labelled({0}, 1);
    EXPECT_EQ(test::thrown_kind([&] { evaluate([](const FrameRecord&) { return one_hot(0); }, {}, kNumModulations); }),
              ErrorKind::InvalidArgument);
    EXPECT_EQ(test::thrown_kind([&] {
                  evaluate([](const FrameRecord&) { return std::vector<double>(3, 1.0 / 3); }, recs, kNumModulations);
              }),
              ErrorKind::ShapeMismatch);
}

TEST(Evaluate, NetworkPathMatchesPredictorPath) {
    DatasetManifest m;
    m.schemes = {Modulation::BPSK, Modulation::QAM16};
    m.snrs_db = {0, 10};
    m.frames_per_cell = 3;
    m.frame_length = 16;
    const auto recs = generate_records(m);
    const auto params = init_params<float>(ModelConfig::tiny(), 21);
    const auto direct = evaluate(params, recs, 3, 2);
    const auto via = evaluate(
        [&](const FrameRecord& f) {
            const auto p = afnet_forward(frame_tensor<float>(f.iq, 16), params);
            return std::vector<double>(p.values().begin(), p.values().end());
        },
        recs, kNumModulations, 3);
    EXPECT_EQ(direct, via);
    const auto stats = confidence_stats(params, recs, 3);
    EXPECT_EQ(stats.by_snr, direct.confidence_by_snr);
    EXPECT_EQ(stats.by_class, direct.confidence_by_class);
}

EvalReport sample_report() {
    const auto recs = labelled({-2, 0, 2}, 7);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return evaluate(
        [&](const FrameRecord&) {
            std::vector<double> p(kNumModulations);
            double s = 0.0;
            for (auto& v : p) s += (v = u(rng));
            for (auto& v : p) v /= s;
            return p;
        },
        recs, kNumModulations);
}

TEST(Report, JsonRoundTrip) {
    const auto r = sample_report();
    const auto text = report_to_json(r);
    const auto back = report_from_json(text);
    EXPECT_EQ(report_to_json(back), text);
    EXPECT_EQ(back.confusion_by_snr, r.confusion_by_snr);
    EXPECT_EQ(back.count_by_class_snr, r.count_by_class_snr);
    EXPECT_NEAR(back.average_accuracy, r.average_accuracy, 1e-15);
    EXPECT_EQ(test::thrown_kind([] { report_from_json("{not json"); }), ErrorKind::Config);
}

TEST(Report, CsvExportAgreesWithReport) {
    const auto r = sample_report();
    test::TempDir dir("report");
    export_report(r, dir.path());

    const auto by_snr = read_csv(dir / "acc_by_snr.csv");
    ASSERT_EQ(by_snr.size(), 4u);
    EXPECT_EQ(by_snr[0], (std::vector<std::string>{"snr_db", "accuracy", "count"}));
    double mean = 0.0;
    for (std::size_t i = 1; i < by_snr.size(); ++i) {
        const int snr = std::stoi(by_snr[i][0]);
        const double acc = std::stod(by_snr[i][1]);
        EXPECT_NEAR(acc, r.accuracy_by_snr.at(snr), 1e-9 * std::max(1.0, acc));
        EXPECT_EQ(std::stoul(by_snr[i][2]), r.count_by_snr.at(snr));
        mean += acc / 3.0;
    }
    EXPECT_NEAR(mean, r.average_accuracy, 1e-8);

    const auto cells = read_csv(dir / "acc_by_class_snr.csv");
    EXPECT_EQ(cells.size(), 1 + r.accuracy_by_class_snr.size());
    const auto confusion = read_csv(dir / "confusion_0.csv");
    ASSERT_EQ(confusion.size(), 1 + kNumModulations);
    EXPECT_EQ(confusion[0][1], "BPSK");
    std::size_t sum = 0;
    for (std::size_t t = 1; t < confusion.size(); ++t)
        for (std::size_t p = 1; p < confusion[t].size(); ++p) sum += std::stoul(confusion[t][p]);
    EXPECT_EQ(sum, r.count_by_snr.at(0));

    for (const auto& row : read_csv(dir / "confidence.csv")) {
        if (row[0] == "group") continue;
        const double v = std::stod(row[2]);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Report, ExportIsBytesStable) {
    const auto r = sample_report();
    test::TempDir a("stable_a"), b("stable_b");
    export_report(r, a.path());
    export_report(report_from_json(report_to_json(r)), b.path());
    std::size_t files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(a.path())) {
        ++files;
        EXPECT_EQ(test::read_bytes(entry.path()), test::read_bytes(b / entry.path().filename()))
            << entry.path().filename();
    }
    EXPECT_EQ(files, 4u + 3u + 3u);  // four tables, one confusion matrix per SNR, three charts
}

TEST(Report, SvgIsWellFormed) {
    const std::vector<ChartSeries> series = {{"a <b>", {{0, 0.1}, {1, 0.5}, {2, 0.9}}}, {"c&d", {{0, 0.2}}}};
    const auto svg = svg_line_chart("t", "x", "y", series);
    EXPECT_NE(svg.find("<svg"), std::string::npos);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_EQ(svg.find("<b>"), std::string::npos);
    EXPECT_NE(svg.find("a &lt;b&gt;"), std::string::npos);
    EXPECT_NE(svg.find("c&amp;d"), std::string::npos);
    std::size_t open = 0, close = 0;
    for (std::size_t i = 0; i < svg.size(); ++i) {
        open += svg[i] == '<';
        close += svg[i] == '>';
    }
    EXPECT_EQ(open, close);
}

}  // namespace
}  // namespace amc
