#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "amc/config.hpp"
#include "amc/eval.hpp"
#include "amc/losses.hpp"
#include "amc/selftest.hpp"

namespace py = pybind11;
using namespace amc;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Modulation scheme(const std::string& name) {
    const auto m = parse_modulation(name);
    if (!m) throw Error(ErrorKind::InvalidArgument, "unknown modulation '" + name + "'");
    return *m;
}

std::vector<double> to_vector(const DoubleArray& a) {
    if (a.ndim() != 1) throw Error(ErrorKind::ShapeMismatch, "expected a 1-D probability vector");
    return {a.data(), a.data() + a.size()};
}

template <typename T>
py::array_t<T> array_1d(const T* data, std::size_t n) {
    py::array_t<T> out(static_cast<py::ssize_t>(n));
    std::copy(data, data + n, out.mutable_data());
    return out;
}

py::array_t<std::complex<double>> complex_array(const std::vector<Complex>& v) { return array_1d(v.data(), v.size()); }

// (iq[n, 2, N] float32, labels[n] int, snr_db[n] int, seeds[n] uint64)
py::tuple records_to_arrays(const std::vector<FrameRecord>& records) {
    const std::size_t n = records.size(), len = n ? records.front().length() : 0;
    py::array_t<float> iq({n, std::size_t{2}, len});
    const auto count = static_cast<py::ssize_t>(n);
    py::array_t<int> labels(count), snrs(count);
    py::array_t<std::uint64_t> seeds(count);
    auto out = iq.mutable_unchecked<3>();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < 2 * len; ++j) out(i, j / len, j % len) = records[i].iq[j];
        labels.mutable_at(i) = int(modulation_index(records[i].label));
        snrs.mutable_at(i) = records[i].snr_db;
        seeds.mutable_at(i) = records[i].seed;
    }
    return py::make_tuple(iq, labels, snrs, seeds);
}

DatasetManifest make_manifest(const std::vector<std::string>& schemes, const std::vector<int>& snrs,
                              std::size_t frames_per_cell, std::size_t frame_length, std::uint64_t seed) {
    DatasetManifest m;
    for (const auto& s : schemes) m.schemes.push_back(scheme(s));
    m.snrs_db = snrs;
    m.frames_per_cell = frames_per_cell;
    m.frame_length = frame_length;
    m.master_seed = seed;
    return m;
}

class Model {
public:
    explicit Model(AFNetParams<float> p) : params_(std::move(p)) {}

    static Model create(std::size_t channels, std::size_t compression, std::size_t units,
                        std::vector<std::size_t> pool_after, std::size_t classes, std::size_t frame_length,
                        std::uint64_t seed) {
        ModelConfig c;
        c.channels = channels;
        c.compression = compression;
        c.units = units;
        c.pool_after = std::move(pool_after);
        c.classes = classes;
        c.frame_length = frame_length;
        return Model(init_params<float>(c, seed));
    }

    // iq: [n, 2, N] or [2, N]; returns posteriors [n, classes].
    py::array_t<float> predict(const FloatArray& iq) const {
        const std::size_t len = params_.config.frame_length;
        const bool single = iq.ndim() == 2;
        if ((iq.ndim() != 2 && iq.ndim() != 3) || iq.shape(iq.ndim() - 2) != 2 ||
            std::size_t(iq.shape(iq.ndim() - 1)) != len) {
            throw Error(ErrorKind::ShapeMismatch, "predict expects iq of shape [n, 2, " + std::to_string(len) + "]");
        }
        const std::size_t n = single ? 1 : std::size_t(iq.shape(0));
        const std::size_t m = params_.config.classes;
        py::array_t<float> out({n, m});
        auto o = out.mutable_unchecked<2>();
        for (std::size_t i = 0; i < n; ++i) {
            const auto probs = afnet_forward(
                frame_tensor<float>(std::span<const float>(iq.data() + i * 2 * len, 2 * len), len), params_);
            for (std::size_t c = 0; c < m; ++c) o(i, c) = probs[c];
        }
        if (single) return out.reshape({py::ssize_t(m)});
        return out;
    }

    std::size_t parameter_count() const { return params_.parameter_count(); }
    std::size_t classes() const { return params_.config.classes; }
    std::size_t frame_length() const { return params_.config.frame_length; }
    void save(const std::filesystem::path& p) const { save_checkpoint(p, params_); }
    std::string hash() const { return fnv1a_hex(checkpoint_bytes(params_)); }

private:
    AFNetParams<float> params_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "AFNet automatic modulation classification: signal synthesis, losses, model inference, pipeline";

    static py::exception<Error> error(m, "AmcError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(error.ptr(), (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
        }
    });

    m.def("modulations", [] {
        std::vector<std::string> names;
        for (std::size_t i = 0; i < kNumModulations; ++i) names.emplace_back(modulation_name(modulation_from_index(i)));
        return names;
    }, "Scheme names in class-index order.");

    m.def("constellation", [](const std::string& name) { return complex_array(constellation(scheme(name))); },
          py::arg("scheme"), "Unit-energy Gray-coded constellation in bit-pattern order.");

    m.def("synthesize_frame",
          [](const std::string& name, int snr_db, std::uint64_t seed, std::size_t frame_length) {
              GeneratorConfig g;
              g.frame_length = frame_length;
              const auto f = synthesize_frame(scheme(name), snr_db, seed, g);
              return py::make_tuple(complex_array(f.clean), complex_array(f.noisy));
          },
          py::arg("scheme"), py::arg("snr_db"), py::arg("seed"), py::arg("frame_length") = 128,
          "Returns (clean, noisy) complex baseband frames; clean has unit average power.");

    m.def("generate",
          [](const std::vector<std::string>& schemes, const std::vector<int>& snrs, std::size_t frames_per_cell,
             std::size_t frame_length, std::uint64_t seed, std::size_t threads) {
              const auto manifest = make_manifest(schemes, snrs, frames_per_cell, frame_length, seed);
              std::vector<FrameRecord> recs;
              {
                  py::gil_scoped_release release;
                  recs = generate_records(manifest, threads);
              }
              return records_to_arrays(recs);
          },
          py::arg("schemes"), py::arg("snrs_db"), py::arg("frames_per_cell"), py::arg("frame_length") = 128,
          py::arg("master_seed") = 0, py::arg("threads") = 1,
          "Synthesize a dataset in memory: returns (iq[n,2,N], labels, snr_db, seeds).");

    m.def("read_dataset", [](const std::filesystem::path& p) { return records_to_arrays(read_dataset(p)); },
          py::arg("path"), "Load a dataset file written by `afnet gen`.");

    m.def("lambda_softmax",
          [](const DoubleArray& a, const DoubleArray& b, double lam) {
              const auto av = to_vector(a), bv = to_vector(b);
              if (av.size() != bv.size()) throw Error(ErrorKind::ShapeMismatch, "a and b differ in length");
              const auto [alpha, beta] = lambda_softmax(Tensor<double>({av.size()}, av), Tensor<double>({bv.size()}, bv), lam);
              return py::make_tuple(array_1d(alpha.data(), alpha.size()), array_1d(beta.data(), beta.size()));
          },
          py::arg("a"), py::arg("b"), py::arg("lam"), "Channelwise two-way softmax scaled to sum to lam.");

    m.def("count_fusion_params", &count_fusion_params, py::arg("channels"), py::arg("compression"));
    m.def("ce_loss", [](const DoubleArray& p, std::size_t label) { return ce_loss<double>(to_vector(p), label); },
          py::arg("probs"), py::arg("label"));
    m.def("topk_entropy", [](const DoubleArray& p, std::size_t k) { return topk_entropy<double>(to_vector(p), k); },
          py::arg("probs"), py::arg("k"));
    m.def("confidence_weight",
          [](const DoubleArray& p, std::size_t k) { return confidence_weight<double>(to_vector(p), k); },
          py::arg("probs"), py::arg("k") = 3);
    m.def("cw_loss",
          [](const DoubleArray& p, std::size_t label, double w) { return cw_loss<double>(to_vector(p), label, w); },
          py::arg("probs"), py::arg("label"), py::arg("weight"));

    py::class_<Model>(m, "Model")
        .def_static("create", &Model::create, py::arg("channels") = 48, py::arg("compression") = 16,
                    py::arg("units") = 9, py::arg("pool_after") = std::vector<std::size_t>{3, 6},
                    py::arg("classes") = 11, py::arg("frame_length") = 128, py::arg("seed") = 0,
                    "Freshly initialized network.")
        .def_static("load", [](const std::filesystem::path& p) { return Model(load_checkpoint(p)); }, py::arg("path"))
        .def("save", &Model::save, py::arg("path"))
        .def("predict", &Model::predict, py::arg("iq"), "Posteriors for iq of shape [n, 2, N] or [2, N].")
        .def_property_readonly("parameter_count", &Model::parameter_count)
        .def_property_readonly("classes", &Model::classes)
        .def_property_readonly("frame_length", &Model::frame_length)
        .def_property_readonly("hash", &Model::hash, "FNV-1a hash of the checkpoint bytes.");

    m.def("train_two_stage",
          [](const std::string& config_json, const std::filesystem::path& out_dir) {
              RunConfig cfg = merge_run_config(default_run_config(), config_json);
              cfg.paths.out_dir = out_dir;
              cfg.validate();
              TwoStageResult r;
              {
                  py::gil_scoped_release release;
                  const auto records = generate_records(cfg.dataset, cfg.train.threads);
                  r = two_stage_train(prepare_splits(records, cfg.train), cfg.model, cfg.train, out_dir);
              }
              auto history = [](const TrainHistory& h) {
                  py::list rows;
                  for (const auto& e : h.epochs) rows.append(py::make_tuple(e.epoch, e.train_loss, e.val_loss, e.val_acc));
                  return py::dict(py::arg("epochs") = rows, py::arg("best_epoch") = h.best_epoch,
                                  py::arg("stopped_early") = h.stopped_early);
              };
              return py::dict(py::arg("stage1") = history(r.stage1.history), py::arg("stage2") = history(r.stage2.history),
                              py::arg("weights") = r.weights.weights);
          },
          py::arg("config_json"), py::arg("out_dir"),
          "Generate the configured dataset in memory and run both training stages, writing artifacts to out_dir.");

    m.def("evaluate",
          [](const Model& model, const FloatArray& iq, const std::vector<int>& labels, const std::vector<int>& snrs,
             std::size_t k) {
              const std::size_t n = labels.size();
              const auto probs = model.predict(iq);
              if (std::size_t(probs.shape(0)) != n || snrs.size() != n) {
                  throw Error(ErrorKind::ShapeMismatch, "iq, labels and snr_db must have the same length");
              }
              std::vector<FrameRecord> recs(n);
              std::vector<std::vector<double>> rows(n);
              for (std::size_t i = 0; i < n; ++i) {
                  recs[i].label = modulation_from_index(std::size_t(labels[i]));
                  recs[i].snr_db = snrs[i];
                  rows[i].assign(probs.data(i, 0), probs.data(i, 0) + model.classes());
              }
              return report_to_json(evaluate_probs(rows, recs, model.classes(), k));
          },
          py::arg("model"), py::arg("iq"), py::arg("labels"), py::arg("snr_db"), py::arg("k") = 3,
          "Evaluation report as JSON text.");

    m.def("selftest", [] {
        py::list out;
        bool ok = true;
        for (const auto& r : {run_gradient_suite(), run_invariant_suite()}) {
            ok = ok && r.passed();
            for (const auto& c : r.cases) out.append(py::make_tuple(c.name, c.passed, c.metric, c.threshold));
        }
        return py::make_tuple(ok, out);
    }, "Run the gradient and invariant suites; returns (all_passed, [(name, passed, metric, threshold)]).");
}
