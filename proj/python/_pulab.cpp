#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pulab/experiment.hpp"
#include "pulab/rng.hpp"
#include "pulab/verification.hpp"

namespace py = pybind11;
using namespace pulab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto cols = static_cast<std::size_t>(a.shape(1));
    return Tensor({rows, cols}, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const Tensor& t) {
    Array out({t.rows(), t.cols()});
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

LabelArray to_labels(const std::vector<Label>& labels) {
    LabelArray out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(labels.size())});
    auto* p = out.mutable_data();
    for (std::size_t i = 0; i < labels.size(); ++i) p[i] = labels[i] == Label::positive ? 1 : 0;
    return out;
}

std::vector<Label> from_labels(const LabelArray& a) {
    std::vector<Label> out;
    out.reserve(static_cast<std::size_t>(a.size()));
    for (py::ssize_t i = 0; i < a.size(); ++i) {
        const auto v = a.data()[i];
        if (v != 0 && v != 1) throw py::value_error("labels must be 0 (negative) or 1 (positive)");
        out.push_back(v == 1 ? Label::positive : Label::negative);
    }
    return out;
}

py::dict history_dict(const std::vector<MetricsRecord>& history) {
    auto column = [&](auto get) {
        py::list l;
        for (const auto& r : history) {
            const std::optional<double> v = get(r);
            l.append(v ? py::object(py::float_(*v)) : py::object(py::none()));
        }
        return l;
    };
    py::list epochs;
    for (const auto& r : history) epochs.append(r.epoch);
    py::dict d;
    d["epoch"] = epochs;
    d["loss_d"] = column([](const MetricsRecord& r) { return std::optional<double>(r.loss_d); });
    d["loss_g"] = column([](const MetricsRecord& r) { return std::optional<double>(r.loss_g); });
    d["loss_ob"] = column([](const MetricsRecord& r) { return std::optional<double>(r.loss_ob); });
    d["test_accuracy"] = column([](const MetricsRecord& r) { return r.test_accuracy; });
    d["fd_gen_unlabeled"] = column([](const MetricsRecord& r) { return r.fd_gen_unlabeled; });
    d["fd_gen_positive"] = column([](const MetricsRecord& r) { return r.fd_gen_positive; });
    return d;
}

py::object summary_tuple(const std::optional<RollingSummary>& s) {
    if (!s) return py::none();
    return py::make_tuple(s->mean, s->std);
}

GaussianFit fit(const Array& x) { return fit_gaussian(to_tensor(x)); }

ExperimentConfig config_with_seed(const std::filesystem::path& path, std::optional<std::uint64_t> seed) {
    ExperimentConfig cfg = load_config(path);
    if (seed) override_seed(cfg, *seed);
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_pulab, m) {
    m.doc() = "Positive-unlabeled learning lab: datasets, PU splits, metrics and the experiment runner.";

    py::register_exception<SpecError>(m, "SpecError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<IngestError>(m, "IngestError", PyExc_IOError);
    py::register_exception<UsageError>(m, "UsageError", PyExc_RuntimeError);

    m.def("derive_seed", &derive_seed, py::arg("root"), py::arg("label"));

    m.def(
        "make_two_moons",
        [](std::size_t n, double noise, std::uint64_t seed) {
            Rng rng(seed);
            const LabeledPool pool = make_two_moons(n, noise, rng);
            return py::make_tuple(to_array(pool.features), to_labels(pool.labels));
        },
        py::arg("n"), py::arg("noise"), py::arg("seed"),
        "Two interleaved half circles; returns (features, labels) with 1 = positive (upper arc).");

    m.def(
        "make_pu_split",
        [](const Array& features, const LabelArray& labels, double alpha, std::size_t n_p, std::size_t n_u,
           std::size_t n_test, std::uint64_t seed) {
            LabeledPool pool{to_tensor(features), from_labels(labels)};
            if (pool.labels.size() != pool.features.rows()) throw py::value_error("features and labels differ in length");
            Rng rng(seed);
            const PUDataset ds = make_pu_split(pool, alpha, n_p, n_u, n_test, rng);
            py::dict d;
            d["x_p"] = to_array(ds.x_p);
            d["x_u"] = to_array(ds.x_u);
            d["test_x"] = to_array(ds.test.features);
            d["test_y"] = to_labels(ds.test.labels);
            d["u_labels"] = to_labels(ds.hidden_u_labels());
            d["p_source"] = ds.p_source;
            d["u_source"] = ds.u_source;
            d["test_source"] = ds.test_source;
            return d;
        },
        py::arg("features"), py::arg("labels"), py::arg("alpha"), py::arg("n_p"), py::arg("n_u"),
        py::arg("n_test"), py::arg("seed"));

    m.def(
        "frechet_distance", [](const Array& a, const Array& b) { return frechet_distance(fit(a), fit(b)); },
        py::arg("a"), py::arg("b"), "Frechet distance between Gaussian fits of two sample matrices.");

    m.def(
        "accuracy",
        [](const Array& scores, const LabelArray& labels, double threshold) {
            const std::vector<double> s(scores.data(), scores.data() + scores.size());
            return accuracy(s, from_labels(labels), threshold);
        },
        py::arg("scores"), py::arg("labels"), py::arg("threshold") = 0.5,
        "Scores are negative-class probabilities; positive iff score < threshold.");

    m.def(
        "rolling_summary",
        [](const std::vector<double>& accuracies, std::size_t last_n) {
            std::vector<MetricsRecord> h(accuracies.size());
            for (std::size_t i = 0; i < h.size(); ++i) {
                h[i].epoch = i + 1;
                h[i].test_accuracy = accuracies[i];
            }
            const RollingSummary s = rolling_summary(h, last_n);
            return py::make_tuple(s.mean, s.std);
        },
        py::arg("accuracies"), py::arg("last_n"));

    auto loss = [&](const char* name, double (*f)(const Tensor&, const Tensor&)) {
        m.def(
            name, [f](const Array& a, const Array& b) { return f(to_tensor(a), to_tensor(b)); }, py::arg("a"),
            py::arg("b"));
    };
    loss("loss_d", static_cast<double (*)(const Tensor&, const Tensor&)>(&loss_d));
    loss("loss_ob", static_cast<double (*)(const Tensor&, const Tensor&)>(&loss_ob));
    loss("loss_g", static_cast<double (*)(const Tensor&, const Tensor&)>(&loss_g));

    m.def(
        "read_idx_images",
        [](const std::filesystem::path& path) {
            const IdxImages img = read_idx_images(path);
            py::array_t<std::uint8_t> out({img.count, img.rows, img.cols});
            std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
            return out;
        },
        py::arg("path"));
    m.def(
        "write_idx_images",
        [](const std::filesystem::path& path, const py::array_t<std::uint8_t, py::array::c_style>& images) {
            if (images.ndim() != 3) throw py::value_error("expected a (count, rows, cols) uint8 array");
            IdxImages img;
            img.count = static_cast<std::size_t>(images.shape(0));
            img.rows = static_cast<std::size_t>(images.shape(1));
            img.cols = static_cast<std::size_t>(images.shape(2));
            img.pixels.assign(images.data(), images.data() + images.size());
            write_idx_images(path, img);
        },
        py::arg("path"), py::arg("images"));
    m.def(
        "read_idx_labels",
        [](const std::filesystem::path& path) {
            const auto labels = read_idx_labels(path);
            py::array_t<std::uint8_t> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(labels.size())});
            std::copy(labels.begin(), labels.end(), out.mutable_data());
            return out;
        },
        py::arg("path"));

    m.def(
        "gradient_suite",
        [](std::uint64_t seed, double h) {
            py::list out;
            for (const auto& e : run_gradient_suite(seed, h)) {
                py::dict d;
                d["name"] = e.name;
                d["max_rel_error"] = e.max_rel_error;
                d["worst_param"] = e.worst_param;
                d["checked"] = e.checked;
                out.append(d);
            }
            return out;
        },
        py::arg("seed") = 7, py::arg("h") = 1e-5);

    m.def(
        "run_experiment",
        [](const std::filesystem::path& config, const std::filesystem::path& out_dir,
           std::optional<std::uint64_t> seed) {
            const ExperimentConfig cfg = config_with_seed(config, seed);
            std::vector<MethodOutcome> outcomes;
            {
                py::gil_scoped_release release;
                outcomes = run_experiment(cfg, out_dir);
            }
            py::list out;
            for (const auto& o : outcomes) {
                py::dict d;
                d["dataset"] = o.dataset;
                d["method"] = o.method;
                d["history"] = history_dict(o.history);
                d["last_50"] = summary_tuple(o.last_50);
                d["last_100"] = summary_tuple(o.last_100);
                out.append(d);
            }
            return out;
        },
        py::arg("config"), py::arg("out_dir"), py::arg("seed") = py::none(),
        "Train every configured method; writes metrics.csv and summary.json per dataset/method.");

    m.def(
        "dump_samples",
        [](const std::filesystem::path& config, const std::filesystem::path& out_dir, std::size_t epoch) {
            const ExperimentConfig cfg = load_config(config);
            std::vector<DumpFiles> files;
            {
                py::gil_scoped_release release;
                files = dump_experiment(cfg, out_dir, epoch);
            }
            py::list out;
            for (const auto& f : files) out.append(py::make_tuple(f.samples, f.latents));
            return out;
        },
        py::arg("config"), py::arg("out_dir"), py::arg("epoch"));

    m.def(
        "validate_config",
        [](const std::string& text) {
            const ExperimentConfig cfg = parse_config(text);
            py::dict d;
            d["methods"] = cfg.methods;
            py::list names;
            for (const auto& ds : cfg.datasets) names.append(ds.name);
            d["datasets"] = names;
            d["seed"] = cfg.seed;
            return d;
        },
        py::arg("text"), "Parse and validate a JSON config; raises SpecError with a line-numbered message.");
}
