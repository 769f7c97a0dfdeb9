#include "amc/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "amc/losses.hpp"
#include "amc/train.hpp"

namespace amc {

namespace {

std::string fmt9g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string fmt_coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string class_name(std::size_t c) {
    return c < kNumModulations ? std::string(modulation_name(static_cast<Modulation>(c))) : "class" + std::to_string(c);
}

std::size_t diagonal(const ConfusionMatrix& m) {
    std::size_t d = 0;
    for (std::size_t i = 0; i < m.size(); ++i) d += m[i][i];
    return d;
}

std::size_t total(const ConfusionMatrix& m) {
    std::size_t t = 0;
    for (const auto& row : m)
        for (auto v : row) t += v;
    return t;
}

}  // namespace

EvalReport evaluate_probs(std::span<const std::vector<double>> probs, std::span<const FrameRecord> records,
                          std::size_t classes, std::size_t k) {
    if (records.empty()) throw Error(ErrorKind::InvalidArgument, "evaluate: empty test set");
    if (probs.size() != records.size()) throw Error(ErrorKind::ShapeMismatch, "evaluate: one posterior per record required");
    EvalReport r;
    r.classes = classes;
    r.k = k;
    std::map<int, std::pair<double, std::size_t>> conf_snr;
    std::map<std::size_t, std::pair<double, std::size_t>> conf_class;

    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& p = probs[i];
        if (p.size() != classes) throw Error(ErrorKind::ShapeMismatch, "evaluate: posterior length differs from class count");
        const std::size_t truth = modulation_index(records[i].label);
        if (truth >= classes) throw Error(ErrorKind::InvalidArgument, "evaluate: label outside the class range");
        const std::size_t pred = argmax(std::span<const double>(p));
        const int snr = records[i].snr_db;
        auto& m = r.confusion_by_snr[snr];
        if (m.empty()) m.assign(classes, std::vector<std::size_t>(classes, 0));
        m[truth][pred] += 1;

        const double w = confidence_weight<double>(p, k);
        conf_snr[snr].first += w;
        conf_snr[snr].second += 1;
        conf_class[truth].first += w;
        conf_class[truth].second += 1;
    }

    // every accuracy is derived from the confusion matrices
    std::size_t all_correct = 0, all_total = 0;
    double acc_sum = 0.0;
    bool first = true;
    for (const auto& [snr, m] : r.confusion_by_snr) {
        const std::size_t d = diagonal(m), t = total(m);
        all_correct += d;
        all_total += t;
        const double acc = double(d) / double(t);
        r.accuracy_by_snr[snr] = acc;
        r.count_by_snr[snr] = t;
        acc_sum += acc;
        if (first || acc > r.max_accuracy) {
            r.max_accuracy = acc;
            r.max_accuracy_snr = snr;
            first = false;
        }
        for (std::size_t c = 0; c < classes; ++c) {
            std::size_t row = 0;
            for (auto v : m[c]) row += v;
            if (row == 0) continue;
            r.accuracy_by_class_snr[{c, snr}] = double(m[c][c]) / double(row);
            r.count_by_class_snr[{c, snr}] = row;
        }
    }
    r.overall_accuracy = double(all_correct) / double(all_total);
    r.average_accuracy = acc_sum / double(r.confusion_by_snr.size());
    for (const auto& [snr, s] : conf_snr) r.confidence_by_snr[snr] = s.first / double(s.second);
    for (const auto& [c, s] : conf_class) r.confidence_by_class[c] = s.first / double(s.second);
    return r;
}

EvalReport evaluate(const Predictor& predict, std::span<const FrameRecord> records, std::size_t classes, std::size_t k) {
    std::vector<std::vector<double>> probs;
    probs.reserve(records.size());
    for (const auto& rec : records) probs.push_back(predict(rec));
    return evaluate_probs(probs, records, classes, k);
}

EvalReport evaluate(const AFNetParams<float>& params, std::span<const FrameRecord> records, std::size_t k,
                    std::size_t threads) {
    const auto raw = predict_probs(params, records, threads);
    std::vector<std::vector<double>> probs;
    probs.reserve(raw.size());
    for (const auto& p : raw) probs.emplace_back(p.begin(), p.end());
    return evaluate_probs(probs, records, params.config.classes, k);
}

ConfidenceStats confidence_stats(const AFNetParams<float>& params, std::span<const FrameRecord> records, std::size_t k,
                                 std::size_t threads) {
    const auto table = compute_instance_weights(params, records, k, threads);
    std::map<int, std::pair<double, std::size_t>> snr;
    std::map<std::size_t, std::pair<double, std::size_t>> cls;
    for (std::size_t i = 0; i < records.size(); ++i) {
        snr[records[i].snr_db].first += table.weights[i];
        snr[records[i].snr_db].second += 1;
        cls[modulation_index(records[i].label)].first += table.weights[i];
        cls[modulation_index(records[i].label)].second += 1;
    }
    ConfidenceStats s;
    for (const auto& [key, v] : snr) s.by_snr[key] = v.first / double(v.second);
    for (const auto& [key, v] : cls) s.by_class[key] = v.first / double(v.second);
    return s;
}

std::string report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["classes"] = r.classes;
    j["k"] = r.k;
    j["overall_accuracy"] = r.overall_accuracy;
    j["average_accuracy"] = r.average_accuracy;
    j["max_accuracy"] = r.max_accuracy;
    j["max_accuracy_snr"] = r.max_accuracy_snr;
    auto& snrs = j["snr"] = nlohmann::ordered_json::array();
    for (const auto& [snr, m] : r.confusion_by_snr) {
        nlohmann::ordered_json e;
        e["snr_db"] = snr;
        e["accuracy"] = r.accuracy_by_snr.at(snr);
        e["count"] = r.count_by_snr.at(snr);
        e["confidence"] = r.confidence_by_snr.count(snr) ? r.confidence_by_snr.at(snr) : 0.0;
        e["confusion"] = m;
        snrs.push_back(std::move(e));
    }
    auto& cells = j["class_snr"] = nlohmann::ordered_json::array();
    for (const auto& [key, acc] : r.accuracy_by_class_snr) {
        cells.push_back({{"class", key.first}, {"snr_db", key.second}, {"accuracy", acc},
                         {"count", r.count_by_class_snr.at(key)}});
    }
    auto& conf = j["confidence_by_class"] = nlohmann::ordered_json::array();
    for (const auto& [c, v] : r.confidence_by_class) conf.push_back({{"class", c}, {"confidence", v}});
    return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        EvalReport r;
        r.classes = j.at("classes").get<std::size_t>();
        r.k = j.at("k").get<std::size_t>();
        r.overall_accuracy = j.at("overall_accuracy").get<double>();
        r.average_accuracy = j.at("average_accuracy").get<double>();
        r.max_accuracy = j.at("max_accuracy").get<double>();
        r.max_accuracy_snr = j.at("max_accuracy_snr").get<int>();
        for (const auto& e : j.at("snr")) {
            const int snr = e.at("snr_db").get<int>();
            r.accuracy_by_snr[snr] = e.at("accuracy").get<double>();
            r.count_by_snr[snr] = e.at("count").get<std::size_t>();
            r.confidence_by_snr[snr] = e.at("confidence").get<double>();
            r.confusion_by_snr[snr] = e.at("confusion").get<ConfusionMatrix>();
        }
        for (const auto& e : j.at("class_snr")) {
            const std::pair<std::size_t, int> key{e.at("class").get<std::size_t>(), e.at("snr_db").get<int>()};
            r.accuracy_by_class_snr[key] = e.at("accuracy").get<double>();
            r.count_by_class_snr[key] = e.at("count").get<std::size_t>();
        }
        for (const auto& e : j.at("confidence_by_class")) {
            r.confidence_by_class[e.at("class").get<std::size_t>()] = e.at("confidence").get<double>();
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Config, std::string("report json: ") + e.what());
    }
}

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           std::span<const ChartSeries> series, double y_min, double y_max) {
    static constexpr const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                              "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#000000"};
    const double W = 720, H = 440, left = 60, right = 150, top = 40, bottom = 50;
    const double pw = W - left - right, ph = H - top - bottom;

    double x_min = 0, x_max = 1;
    bool any = false;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            if (!any) { x_min = x_max = x; any = true; }
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
        }
    }
    if (x_max == x_min) x_max = x_min + 1;
    if (y_max == y_min) y_max = y_min + 1;
    auto sx = [&](double x) { return left + (x - x_min) / (x_max - x_min) * pw; };
    auto sy = [&](double y) { return top + (1.0 - (y - y_min) / (y_max - y_min)) * ph; };

    std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"440\" viewBox=\"0 0 720 440\">\n";
    out += "<rect x=\"0\" y=\"0\" width=\"720\" height=\"440\" fill=\"#ffffff\"/>\n";
    out += "<text x=\"" + fmt_coord(left + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
           xml_escape(title) + "</text>\n";
    out += "<rect x=\"" + fmt_coord(left) + "\" y=\"" + fmt_coord(top) + "\" width=\"" + fmt_coord(pw) + "\" height=\"" +
           fmt_coord(ph) + "\" fill=\"none\" stroke=\"#333333\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double y = y_min + (y_max - y_min) * i / 5.0;
        out += "<line x1=\"" + fmt_coord(left) + "\" y1=\"" + fmt_coord(sy(y)) + "\" x2=\"" + fmt_coord(left + pw) + "\" y2=\"" +
               fmt_coord(sy(y)) + "\" stroke=\"#dddddd\"/>\n";
        out += "<text x=\"" + fmt_coord(left - 6) + "\" y=\"" + fmt_coord(sy(y) + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt9g(y) + "</text>\n";
    }
    for (int i = 0; i <= 5; ++i) {
        const double x = x_min + (x_max - x_min) * i / 5.0;
        out += "<text x=\"" + fmt_coord(sx(x)) + "\" y=\"" + fmt_coord(top + ph + 16) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + fmt9g(x) + "</text>\n";
    }
    out += "<text x=\"" + fmt_coord(left + pw / 2) + "\" y=\"" + fmt_coord(H - 12) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + xml_escape(x_label) + "</text>\n";
    out += "<text x=\"16\" y=\"" + fmt_coord(top + ph / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 " +
           fmt_coord(top + ph / 2) + ")\">" + xml_escape(y_label) + "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kColors[s % std::size(kColors)];
        std::string pts;
        for (const auto& [x, y] : series[s].points) {
            if (!pts.empty()) pts += ' ';
            pts += fmt_coord(sx(x)) + "," + fmt_coord(sy(y));
        }
        out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.8\" points=\"" + pts + "\"/>\n";
        const double ly = top + 14 + 16.0 * double(s);
        out += "<line x1=\"" + fmt_coord(left + pw + 12) + "\" y1=\"" + fmt_coord(ly - 4) + "\" x2=\"" + fmt_coord(left + pw + 32) +
               "\" y2=\"" + fmt_coord(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
        out += "<text x=\"" + fmt_coord(left + pw + 36) + "\" y=\"" + fmt_coord(ly) + "\" font-family=\"sans-serif\" font-size=\"11\">" +
               xml_escape(series[s].name) + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

void export_report(const EvalReport& r, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create report directory " + out_dir.string() + ": " + ec.message());

    std::string summary = "metric,value\n";
    summary += "overall_accuracy," + fmt9g(r.overall_accuracy) + "\n";
    summary += "average_accuracy," + fmt9g(r.average_accuracy) + "\n";
    summary += "max_accuracy," + fmt9g(r.max_accuracy) + "\n";
    summary += "max_accuracy_snr," + std::to_string(r.max_accuracy_snr) + "\n";
    summary += "k," + std::to_string(r.k) + "\n";
    write_file(out_dir / "summary.csv", summary);

    std::string by_snr = "snr_db,accuracy,count\n";
    for (const auto& [snr, acc] : r.accuracy_by_snr) {
        by_snr += std::to_string(snr) + "," + fmt9g(acc) + "," + std::to_string(r.count_by_snr.at(snr)) + "\n";
    }
    write_file(out_dir / "acc_by_snr.csv", by_snr);

    std::string by_cell = "class,snr_db,accuracy,count\n";
    for (const auto& [key, acc] : r.accuracy_by_class_snr) {
        by_cell += class_name(key.first) + "," + std::to_string(key.second) + "," + fmt9g(acc) + "," +
                   std::to_string(r.count_by_class_snr.at(key)) + "\n";
    }
    write_file(out_dir / "acc_by_class_snr.csv", by_cell);

    for (const auto& [snr, m] : r.confusion_by_snr) {
        std::string csv = "true\\predicted";
        for (std::size_t c = 0; c < m.size(); ++c) csv += "," + class_name(c);
        csv += "\n";
        for (std::size_t t = 0; t < m.size(); ++t) {
            csv += class_name(t);
            for (auto v : m[t]) csv += "," + std::to_string(v);
            csv += "\n";
        }
        write_file(out_dir / ("confusion_" + std::to_string(snr) + ".csv"), csv);
    }

    std::string conf = "group,key,mean_confidence\n";
    for (const auto& [snr, v] : r.confidence_by_snr) conf += "snr," + std::to_string(snr) + "," + fmt9g(v) + "\n";
    for (const auto& [c, v] : r.confidence_by_class) conf += "class," + class_name(c) + "," + fmt9g(v) + "\n";
    write_file(out_dir / "confidence.csv", conf);

    ChartSeries overall{"all classes", {}};
    for (const auto& [snr, acc] : r.accuracy_by_snr) overall.points.emplace_back(snr, acc);
    write_file(out_dir / "acc_by_snr.svg",
               svg_line_chart("Classification accuracy vs SNR", "SNR (dB)", "accuracy", std::span(&overall, 1)));

    std::vector<ChartSeries> per_class;
    for (const auto& [key, acc] : r.accuracy_by_class_snr) {
        const auto name = class_name(key.first);
        auto it = std::find_if(per_class.begin(), per_class.end(), [&](const auto& s) { return s.name == name; });
        if (it == per_class.end()) {
            per_class.push_back({name, {}});
            it = per_class.end() - 1;
        }
        it->points.emplace_back(key.second, acc);
    }
    write_file(out_dir / "acc_by_class_snr.svg",
               svg_line_chart("Per-class accuracy vs SNR", "SNR (dB)", "accuracy", per_class));

    ChartSeries confidence{"mean confidence", {}};
    for (const auto& [snr, v] : r.confidence_by_snr) confidence.points.emplace_back(snr, v);
    write_file(out_dir / "confidence_by_snr.svg",
               svg_line_chart("Mean instance confidence vs SNR", "SNR (dB)", "confidence", std::span(&confidence, 1)));
}

}  // namespace amc
