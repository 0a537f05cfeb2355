#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "beable/analysis.hpp"
#include "beable/errors.hpp"
#include "beable/io.hpp"
#include "beable/mechanism.hpp"
#include "beable/optimizer.hpp"
#include "beable/propagator.hpp"
#include "beable/sampler.hpp"

namespace py = pybind11;
using namespace beable;

namespace {

Eigen::MatrixXd populations(const Propagation& prop) {
  Eigen::MatrixXd out(prop.states.size(), prop.states.front().size());
  for (std::size_t p = 0; p < prop.states.size(); ++p) out.row(p) = prop.populations(p).transpose();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Beable trajectories for driven few-level systems";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<EmptyResultError>(m, "EmptyResultError", PyExc_LookupError);

  py::class_<LevelSystem>(m, "LevelSystem")
      .def(py::init<std::vector<double>, Eigen::MatrixXd>(), py::arg("omega"), py::arg("mu"))
      .def_property_readonly("count", &LevelSystem::count)
      .def_property_readonly("omega", &LevelSystem::omega)
      .def_property_readonly("mu", &LevelSystem::mu)
      .def_property_readonly("edges", &LevelSystem::edges)
      .def("coupled", &LevelSystem::coupled)
      .def("shortest_jumps", &LevelSystem::shortest_jumps, py::arg("source"), py::arg("target"));
  m.def("seven_level_example", &seven_level_example);

  py::class_<ControlField>(m, "ControlField")
      .def_static("sampled", &ControlField::sampled, py::arg("step"), py::arg("samples"))
      .def_property_readonly("step", [](const ControlField& f) { return f.grid().step; })
      .def_property_readonly("steps", [](const ControlField& f) { return f.grid().steps; })
      .def_property_readonly("modulation", &ControlField::modulation)
      .def("values", &ControlField::values)
      .def("with_modulation", &ControlField::with_modulation, py::arg("modulation"));

  m.def(
      "populations",
      [](const LevelSystem& sys, const ControlField& field, int initial) {
        return populations(propagate(sys, field, QuantumState::basis(sys.count(), initial)));
      },
      py::arg("system"), py::arg("field"), py::arg("initial") = 0,
      "|psi_n(t_p)|^2 on every grid point, shape (steps + 1, count).");

  m.def(
      "optimize",
      [](const LevelSystem& sys, int initial, int target, double horizon, double step, int iterations,
         double learning_rate, double stop_transfer, std::uint64_t seed) {
        OptimizerConfig cfg;
        cfg.transfer = {initial, target};
        cfg.horizon = horizon;
        cfg.step = step;
        cfg.iterations = iterations;
        cfg.learning_rate = learning_rate;
        cfg.stop_transfer = stop_transfer;
        cfg.initial.seed = seed;
        const OptimizationResult res = optimize(sys, cfg);
        return py::make_tuple(res.field, res.transfer);
      },
      py::arg("system"), py::arg("initial"), py::arg("target"), py::arg("horizon") = 100.0,
      py::arg("step") = 0.025, py::arg("iterations") = 2000, py::arg("learning_rate") = 10.0,
      py::arg("stop_transfer") = 0.97, py::arg("seed") = 1,
      "Returns (field, transferred population).");

  py::class_<JumpEvent>(m, "JumpEvent")
      .def_readonly("step", &JumpEvent::step)
      .def_readonly("source", &JumpEvent::from)
      .def_readonly("target", &JumpEvent::to);
  py::class_<Trajectory>(m, "Trajectory")
      .def_readonly("initial", &Trajectory::initial)
      .def_readonly("final", &Trajectory::final)
      .def_readonly("events", &Trajectory::events)
      .def("site_at", &Trajectory::site_at);
  py::class_<Ensemble>(m, "Ensemble")
      .def_readonly("trajectories", &Ensemble::trajectories)
      .def("__len__", &Ensemble::size)
      .def_property_readonly("floor_exceptions", [](const Ensemble& e) { return e.stats.floor_exceptions; })
      .def_property_readonly("pair_instances", [](const Ensemble& e) { return e.stats.pair_instances; });

  m.def(
      "run_ensemble",
      [](const LevelSystem& sys, const ControlField& field, int n_traj, std::uint64_t seed, int initial,
         int substeps, int workers) {
        EnsembleConfig cfg;
        cfg.n_traj = n_traj;
        cfg.seed = seed;
        cfg.initial = initial;
        cfg.substeps = substeps;
        cfg.workers = workers;
        py::gil_scoped_release release;
        return run_ensemble(sys, field, cfg);
      },
      py::arg("system"), py::arg("field"), py::arg("n_traj"), py::arg("seed") = 0, py::arg("initial") = 0,
      py::arg("substeps") = 1, py::arg("workers") = 0);

  m.def("occupancy", &occupancy, py::arg("ensemble"), py::arg("step"));
  m.def(
      "pathway_table",
      [](const Ensemble& ens) {
        py::list rows;
        for (const auto& r : pathway_table(ens).rows)
          rows.append(py::make_tuple(r.pathway.sites, r.count, r.probability, r.std_error));
        return rows;
      },
      py::arg("ensemble"), "List of (sites, count, probability, std_error), most frequent first.");
  m.def(
      "jump_moments",
      [](const Ensemble& ens, int k_max, std::optional<int> only_reaching) {
        return jump_moments(ens, k_max, only_reaching).moments;
      },
      py::arg("ensemble"), py::arg("k_max") = 4, py::arg("only_reaching") = py::none(),
      "<j^k> for k = 0..k_max.");
  m.def(
      "jump_correlation",
      [](const Ensemble& ens, int source, int target, const std::vector<double>& taus) {
        JumpSelector sel;
        sel.from = source;
        sel.to = target;
        return jump_correlation(ens, sel, taus);
      },
      py::arg("ensemble"), py::arg("source"), py::arg("target"), py::arg("taus"));

  py::class_<ModulationDataset>(m, "ModulationDataset")
      .def_readonly("increment", &ModulationDataset::increment)
      .def_property_readonly("modulation",
                             [](const ModulationDataset& d) {
                               std::vector<double> v;
                               for (const auto& r : d.rows) v.push_back(r.modulation);
                               return v;
                             })
      .def_property_readonly("population", [](const ModulationDataset& d) {
        std::vector<double> v;
        for (const auto& r : d.rows) v.push_back(r.population);
        return v;
      });

  m.def("modulation_grid", &modulation_grid, py::arg("lo") = 0.01, py::arg("hi") = 1.6,
        py::arg("increment") = 0.01);
  m.def(
      "sweep",
      [](const LevelSystem& sys, const ControlField& field, int initial, int target,
         const std::vector<double>& grid, double sigma, std::uint64_t seed) {
        py::gil_scoped_release release;
        return sweep(sys, field, {initial, target}, grid, sigma, seed);
      },
      py::arg("system"), py::arg("field"), py::arg("initial"), py::arg("target"), py::arg("modulations"),
      py::arg("sigma") = 0.0, py::arg("seed") = 0);
  m.def("model_population",
        [](double mod, const std::vector<double>& moments, double a, double amplitude) {
          return model_population(mod, FitParameters{moments, a, amplitude});
        },
        py::arg("modulation"), py::arg("moments"), py::arg("a"), py::arg("amplitude"));
  m.def(
      "dataset",
      [](const std::vector<double>& mods, const std::vector<double>& pops, double sigma) {
        ModulationDataset ds;
        if (mods.size() != pops.size()) throw ConfigError("modulation and population lengths differ");
        for (std::size_t i = 0; i < mods.size(); ++i) ds.rows.push_back({mods[i], pops[i], sigma});
        ds.increment = mods.size() > 1 ? mods[1] - mods[0] : 0.0;
        ds.validate();
        return ds;
      },
      py::arg("modulation"), py::arg("population"), py::arg("sigma") = 0.0);
  m.def(
      "estimate_jmin",
      [](const ModulationDataset& ds, double head_fraction) {
        const JminEstimate e = estimate_jmin(ds, head_fraction);
        return py::make_tuple(e.j_min, e.limit);
      },
      py::arg("dataset"), py::arg("head_fraction") = 0.1, "Returns (j_min, extrapolated limit).");
  m.def(
      "lm_fit",
      [](const ModulationDataset& ds, double lo, double hi, int k_max, std::optional<int> a_lower_bound) {
        FitOptions opt;
        opt.k_max = k_max;
        opt.a_lower_bound = a_lower_bound;
        const FitResult f = lm_fit(ds, {lo, hi}, opt);
        py::dict out;
        out["moments"] = f.params.moments;
        out["a"] = f.params.a;
        out["amplitude"] = f.params.amplitude;
        out["msd"] = f.msd;
        out["points"] = f.points;
        out["converged"] = f.converged;
        return out;
      },
      py::arg("dataset"), py::arg("lo"), py::arg("hi"), py::arg("k_max") = 4,
      py::arg("a_lower_bound") = py::none());
  m.def(
      "mechanism",
      [](const ModulationDataset& ds, int workers) {
        const JminEstimate est = estimate_jmin(ds);
        FitOptions opt;
        opt.a_lower_bound = est.j_min;
        RangeReport rep;
        {
          py::gil_scoped_release release;
          rep = range_search(ds, RangeGrid{}, opt, est.j_min, workers);
        }
        const BestFit best = select_best(rep);
        return io::mechanism_report(est, rep, best).dump();
      },
      py::arg("dataset"), py::arg("workers") = 0,
      "Full j_min and window search; returns the report as a JSON string.");

  m.def("read_field", [](const std::filesystem::path& p) { return io::read_field(p); });
  m.def("write_field", [](const std::filesystem::path& p, const ControlField& f) { io::write_field(p, f); });
  m.def("read_dataset", [](const std::filesystem::path& p) { return io::read_dataset(p); });
  m.def("read_system", [](const std::filesystem::path& p) { return io::read_system(p); });
}
