#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "oris/datagen.hpp"
#include "oris/harness.hpp"

namespace py = pybind11;
using namespace oris;

namespace {

// Env plus the generator driving its noise, so Python callers only deal in seeds.
class PyEnv {
public:
    PyEnv(const EnvSpec& spec, std::uint64_t seed) : env_(spec), rng_(seed) {}

    Vector reset() { return env_.reset(rng_); }
    py::tuple step(const Vector& action) {
        const auto r = env_.step(action, rng_);
        return py::make_tuple(r.observation, r.reward, r.done, r.terminal);
    }
    void set_state(const Vector& obs) { env_.set_state(obs); }
    Vector observe() const { return env_.observe(); }
    const EnvSpec& spec() const { return env_.spec(); }

private:
    Env env_;
    Rng rng_;
};

Matrix stack(const std::vector<Transition>& ts, bool next) {
    if (ts.empty()) return {};
    Matrix out(static_cast<Eigen::Index>(ts.size()), (next ? ts[0].s_next : ts[0].s).size());
    for (std::size_t i = 0; i < ts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = next ? ts[i].s_next : ts[i].s;
    return out;
}

Matrix actions_of(const std::vector<Transition>& ts) {
    if (ts.empty()) return {};
    Matrix out(static_cast<Eigen::Index>(ts.size()), ts[0].a.size());
    for (std::size_t i = 0; i < ts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = ts[i].a;
    return out;
}

std::vector<Vector> rows_of(const Matrix& m) {
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(m.row(r).transpose());
    return out;
}

harness::ExperimentConfig config_from(const py::object& source) {
    if (py::isinstance<py::dict>(source)) {
        const auto text = py::module_::import("json").attr("dumps")(source).cast<std::string>();
        return harness::parse_config(nlohmann::json::parse(text));
    }
    return harness::load_config(source.cast<std::filesystem::path>());
}

py::list rows_to_python(const harness::ScoreTable& table) {
    py::list rows;
    for (const auto& r : table.rows) {
        py::dict d;
        d["label"] = r.label;
        d["variant"] = to_string(r.variant);
        d["seeds"] = r.seeds;
        d["final_returns"] = r.final_returns;
        d["normalized"] = r.normalized;
        d["mean_normalized"] = r.mean_normalized;
        d["std_normalized"] = r.std_normalized;
        rows.append(d);
    }
    return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Offline RL with a restart-distribution GAN and an inaccurate simulator";

    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<InvalidStateError>(m, "InvalidStateError", PyExc_ValueError);
    py::register_exception<UsageError>(m, "UsageError", PyExc_RuntimeError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<DynamicsPerturbation>(m, "DynamicsPerturbation")
        .def(py::init([](double g, double f, double n) { return DynamicsPerturbation{g, f, n}; }),
             py::arg("gravity_scale") = 1.0, py::arg("friction_scale") = 1.0, py::arg("action_noise_std") = 0.0)
        .def_readwrite("gravity_scale", &DynamicsPerturbation::gravity_scale)
        .def_readwrite("friction_scale", &DynamicsPerturbation::friction_scale)
        .def_readwrite("action_noise_std", &DynamicsPerturbation::action_noise_std)
        .def("is_identity", &DynamicsPerturbation::is_identity);

    py::class_<EnvSpec>(m, "EnvSpec")
        .def_static("real", [](const std::string& id) { return EnvSpec::real(env_id_from_string(id)); })
        .def_static("simulator",
                    [](const std::string& id, const DynamicsPerturbation& p) {
                        return EnvSpec::simulator(env_id_from_string(id), p);
                    })
        .def_property_readonly("env_id", [](const EnvSpec& s) { return to_string(s.env_id); })
        .def_readonly("perturbation", &EnvSpec::perturbation)
        .def_property_readonly("obs_dim", &EnvSpec::obs_dim)
        .def_property_readonly("action_dim", &EnvSpec::action_dim)
        .def_property_readonly("action_bound", &EnvSpec::action_bound);

    py::class_<PyEnv>(m, "Env")
        .def(py::init<const EnvSpec&, std::uint64_t>(), py::arg("spec"), py::arg("seed") = 0)
        .def("reset", &PyEnv::reset)
        .def("step", &PyEnv::step, py::arg("action"), "Returns (observation, reward, done, terminal).")
        .def("set_state", &PyEnv::set_state)
        .def("observe", &PyEnv::observe)
        .def_property_readonly("spec", &PyEnv::spec);

    py::class_<Dataset>(m, "Dataset")
        .def("__len__", &Dataset::size)
        .def_property_readonly("num_trajectories", &Dataset::num_trajectories)
        .def_readonly("trajectory_ends", &Dataset::trajectory_ends)
        .def_property_readonly("env_id", [](const Dataset& d) { return to_string(d.meta.env_id); })
        .def_property_readonly("tier", [](const Dataset& d) { return to_string(d.meta.tier); })
        .def_property_readonly("states", [](const Dataset& d) { return stack(d.transitions, false); })
        .def_property_readonly("next_states", [](const Dataset& d) { return stack(d.transitions, true); })
        .def_property_readonly("actions", [](const Dataset& d) { return actions_of(d.transitions); })
        .def_property_readonly("rewards",
                               [](const Dataset& d) {
                                   std::vector<double> r;
                                   for (const auto& t : d.transitions) r.push_back(t.r);
                                   return r;
                               })
        .def("trajectory_returns", &Dataset::trajectory_returns);

    m.def(
        "generate_dataset",
        [](const std::string& env_id, const std::string& tier, int episodes, std::uint64_t seed) {
            return generate_dataset(EnvSpec::real(env_id_from_string(env_id)), tier_from_string(tier), episodes, seed,
                                    nullptr);
        },
        py::arg("env_id"), py::arg("tier") = "random", py::arg("episodes") = 10, py::arg("seed") = 0,
        "Datasets that need no trained behavior policy (random tier).");
    m.def("read_dataset", &read_dataset, py::arg("path"));
    m.def("write_dataset", &write_dataset, py::arg("dataset"), py::arg("path"));
    m.def("subsample_trajectories", &subsample_trajectories, py::arg("dataset"), py::arg("fraction"),
          py::arg("seed") = 0);

    py::class_<gan::GanPair>(m, "Gan")
        .def_readonly("z_dim", &gan::GanPair::z_dim)
        .def_readonly("w_min", &gan::GanPair::w_min)
        .def_readonly("w_max", &gan::GanPair::w_max)
        .def(
            "sample_restarts",
            [](const gan::GanPair& g, int n, std::uint64_t seed) {
                Rng rng(seed);
                Matrix out(n, g.state_dim());
                for (int i = 0; i < n; ++i) out.row(i) = gan::sample_restart(g, rng).transpose();
                return out;
            },
            py::arg("n"), py::arg("seed") = 0)
        .def("discriminate",
             [](const gan::GanPair& g, const Matrix& states) {
                 std::vector<double> out;
                 for (const auto& s : rows_of(states)) out.push_back(g.discriminate(s));
                 return out;
             })
        .def("weights", [](const gan::GanPair& g, const Matrix& states) { return gan::weights_of(g, rows_of(states)); })
        .def("save", &gan::GanPair::save)
        .def_static("load", &gan::GanPair::load);

    m.def(
        "pretrain_gan",
        [](const Matrix& states, int iterations, int hidden_width, double learning_rate, std::uint64_t seed) {
            gan::GanHyperParams hp;
            hp.iterations = iterations;
            hp.hidden_width = hidden_width;
            hp.learning_rate = learning_rate;
            hp.seed = seed;
            py::gil_scoped_release release;
            return gan::pretrain(rows_of(states), hp).gan;
        },
        py::arg("states"), py::arg("iterations") = 2000, py::arg("hidden_width") = 64, py::arg("learning_rate") = 2e-4,
        py::arg("seed") = 0, "Pretrains the generator/discriminator pair on row-wise states.");
    m.def("weight_from_discriminator", &gan::weight_from_discriminator, py::arg("d"), py::arg("w_min") = 0.1,
          py::arg("w_max") = 1.0);

    m.def("normalized_score", &harness::normalized_score, py::arg("raw"), py::arg("random_ref"), py::arg("expert_ref"));
    m.def(
        "config_hash", [](const py::object& source) { return config_from(source).hash(); }, py::arg("config"));
    m.def(
        "validate_config",
        [](const py::object& source) {
            const auto cfg = config_from(source);
            return py::module_::import("json").attr("loads")(cfg.document.dump());
        },
        py::arg("config"), "Validates a config (path or dict) and returns its canonical form.");
    m.def(
        "train",
        [](const py::object& source, std::optional<std::uint64_t> seed, std::optional<std::string> out) {
            auto cfg = config_from(source);
            if (seed) cfg.seeds = {*seed};
            if (out) cfg.output_dir = *out;
            harness::ScoreTable table;
            {
                py::gil_scoped_release release;
                table = harness::run(cfg);
            }
            return rows_to_python(table);
        },
        py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none(),
        "Runs every (variant, seed) of the config; returns the score rows.");
    m.def(
        "sweep",
        [](const py::object& source, const std::string& axis, std::optional<std::string> out) {
            auto cfg = config_from(source);
            if (out) cfg.output_dir = *out;
            harness::ScoreTable table;
            {
                py::gil_scoped_release release;
                table = harness::sweep(cfg, harness::sweep_axis_from_string(axis));
            }
            py::dict result;
            result["rows"] = rows_to_python(table);
            result["failures"] = table.failures;
            return result;
        },
        py::arg("config"), py::arg("axis"), py::arg("out") = py::none());
    m.def(
        "read_metrics",
        [](const std::filesystem::path& path) {
            const auto parsed = harness::read_metrics_csv(path);
            py::dict d;
            d["config_hash"] = parsed.config_hash;
            py::list rows;
            for (const auto& r : parsed.rows) {
                py::dict row;
                row["epoch"] = r.epoch;
                row["eval_return_mean"] = r.eval_return_mean;
                row["normalized_score"] = r.normalized_score;
                rows.append(row);
            }
            d["rows"] = rows;
            return d;
        },
        py::arg("path"));
}
