#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "conqar/commands.hpp"
#include "conqar/errors.hpp"

namespace py = pybind11;
using namespace conqar;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    if (a.ndim() == 1) {
        Tensor t({static_cast<std::size_t>(a.shape(0))});
        std::copy(a.data(), a.data() + a.size(), t.data().begin());
        return t;
    }
    if (a.ndim() != 2) throw DimensionError("expected a 1-D or 2-D array");
    Tensor t({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))});
    std::copy(a.data(), a.data() + a.size(), t.data().begin());
    return t;
}

Array to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array a(shape);
    std::copy(t.data().begin(), t.data().end(), a.mutable_data());
    return a;
}

std::optional<std::filesystem::path> optional_dir(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return std::filesystem::path(s);
}

std::string prepare(const std::string& input, const std::string& out, const std::string& format, std::uint64_t seed,
                    std::size_t min_count, std::size_t max_review_words, std::size_t max_reviews) {
    PrepareOptions options;
    options.format = parse_dataset_format(format);
    options.seed = seed;
    options.min_count = min_count;
    options.limits = {max_review_words, max_reviews};
    auto s = prepare_directory(input, out, options);
    return json{{"records", s.records}, {"malformed", s.malformed}, {"users", s.users}, {"items", s.items},
                {"vocab_size", s.vocab_size}, {"train", s.train}, {"validation", s.validation}, {"test", s.test}}
        .dump();
}

std::string train_run(const std::string& config_json, const std::string& data_dir, const std::string& out) {
    auto config = TrainConfig::from_json(json::parse(config_json));
    PreparedData data = load_prepared(data_dir);
    MetricsReport report;
    {
        py::gil_scoped_release release;
        report = train_to_directory(config, data, out);
    }
    json j = report.summary();
    j["epochs"] = json::array();
    std::istringstream lines(report.epochs_jsonl());
    for (std::string line; std::getline(lines, line);)
        if (!line.empty()) j["epochs"].push_back(json::parse(line));
    return j.dump();
}

std::string grid_run(const std::string& grid_json, const std::string& data_dir, std::size_t threads) {
    json j = json::parse(grid_json);
    GridSpec spec = j.value("standard", false) ? GridSpec::standard(TrainConfig::from_json(j.value("base", json::object())))
                                               : GridSpec::from_json(j);
    PreparedData data = load_prepared(data_dir);
    GridResult result;
    {
        py::gil_scoped_release release;
        result = grid_search(data, spec, threads);
    }
    json entries = json::array();
    for (const auto& e : result.entries) {
        json rec{{"config", e.config.to_json()}};
        rec["val_mae"] = std::isfinite(e.val_mae) ? json(e.val_mae) : json(nullptr);
        if (!e.error.empty()) rec["error"] = e.error;
        entries.push_back(rec);
    }
    return json{{"entries", entries}, {"best_index", result.best_index}, {"best", result.best_report.summary()}}.dump();
}

std::string ablate(const std::string& config_json, const std::string& data_dir) {
    auto config = TrainConfig::from_json(json::parse(config_json));
    PreparedData data = load_prepared(data_dir);
    std::vector<AblationRow> rows;
    {
        py::gil_scoped_release release;
        rows = run_ablation(data, config);
    }
    json out = json::array();
    for (const auto& r : rows) {
        json rec{{"variant", std::string(to_string(r.variant))},
                 {"representation_size", r.representation_size},
                 {"test_mae", r.test_mae}};
        rec["val_mae"] = r.val_mae ? json(*r.val_mae) : json(nullptr);
        out.push_back(rec);
    }
    return out.dump();
}

double evaluate(const std::string& checkpoint, const std::string& split, const std::string& data_dir) {
    auto loaded = load_checkpoint_with_data(checkpoint, optional_dir(data_dir));
    return evaluate_checkpoint(loaded, parse_split(split));
}

std::map<std::string, std::string> visualize(const std::string& checkpoint, const std::string& user,
                                             const std::string& item, const std::string& out, int k,
                                             const std::string& data_dir) {
    auto loaded = load_checkpoint_with_data(checkpoint, optional_dir(data_dir));
    auto files = export_pair_visuals(loaded, user, item, out, k);
    return {{"user_csv", files.user_heatmap.csv.string()},    {"user_svg", files.user_heatmap.svg.string()},
            {"item_csv", files.item_heatmap.csv.string()},    {"item_svg", files.item_heatmap.svg.string()},
            {"user_html", files.user_highlights.html.string()}, {"user_txt", files.user_highlights.txt.string()},
            {"item_html", files.item_highlights.html.string()}, {"item_txt", files.item_highlights.txt.string()}};
}

Array py_density_matrix(const Array& states, const Array& p) {
    Tape tape(Tape::Mode::NoGrad);
    return to_array(density_matrix(tape, to_tensor(states), to_tensor(p)).values);
}

Array py_unit_states(const Array& features) {
    Tape tape(Tape::Mode::NoGrad);
    return to_array(normalize_columns(tape, to_tensor(features)));
}

double py_mutual_trace(const Array& rho_u, const Array& rho_v) {
    Tape tape(Tape::Mode::NoGrad);
    return trace(tape, mutual_matrix(tape, to_tensor(rho_u), to_tensor(rho_v))).item();
}

std::vector<std::pair<std::size_t, double>> py_top_k(const std::vector<std::int32_t>& token_ids,
                                                     const std::vector<double>& p, int k) {
    std::vector<std::pair<std::size_t, double>> out;
    for (const auto& h : top_k_positions(token_ids, p, k)) out.emplace_back(h.position, h.weight);
    return out;
}

}  // namespace

PYBIND11_MODULE(_conqar, m) {
    m.doc() = "ConQAR rating prediction core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<IndexError>(m, "IndexError", PyExc_IndexError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def("prepare", &prepare, py::arg("input"), py::arg("out"), py::arg("format"), py::arg("seed"),
          py::arg("min_count"), py::arg("max_review_words"), py::arg("max_reviews"));
    m.def("train", &train_run, py::arg("config_json"), py::arg("data_dir"), py::arg("out"));
    m.def("grid_search", &grid_run, py::arg("grid_json"), py::arg("data_dir"), py::arg("threads"));
    m.def("ablate", &ablate, py::arg("config_json"), py::arg("data_dir"));
    m.def("evaluate", &evaluate, py::arg("checkpoint"), py::arg("split"), py::arg("data_dir"));
    m.def("visualize", &visualize, py::arg("checkpoint"), py::arg("user"), py::arg("item"), py::arg("out"),
          py::arg("k"), py::arg("data_dir"));

    m.def("tokenize", [](const std::string& text) { return tokenize(text); }, py::arg("text"));
    m.def("unit_states", &py_unit_states, py::arg("features"));
    m.def("density_matrix", &py_density_matrix, py::arg("states"), py::arg("p"));
    m.def("mutual_trace", &py_mutual_trace, py::arg("rho_u"), py::arg("rho_v"));
    m.def("mean_absolute_error",
          [](const std::vector<double>& p, const std::vector<double>& y) { return mean_absolute_error(p, y); },
          py::arg("predictions"), py::arg("truths"));
    m.def("top_k_positions", &py_top_k, py::arg("token_ids"), py::arg("p"), py::arg("k"));
    m.def("matrix_csv", [](const Array& a) { return matrix_csv(to_tensor(a)); }, py::arg("matrix"));
    m.def("parse_matrix_csv", [](const std::string& text) { return to_array(parse_matrix_csv(text)); },
          py::arg("text"));
}
