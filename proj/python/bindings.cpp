#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dcharge/battery.hpp"
#include "dcharge/dataset.hpp"
#include "dcharge/errors.hpp"
#include "dcharge/expert.hpp"
#include "dcharge/policy.hpp"

namespace py = pybind11;
using namespace dcharge;

PYBIND11_MODULE(_dcharge, m) {
  m.doc() = "Battery simulator, MPC expert and recurrent charging policy";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ModelError>(m, "ModelError", PyExc_RuntimeError);

  py::class_<BatteryParams>(m, "BatteryParams")
      .def(py::init<>())
      .def_readwrite("capacity_ah", &BatteryParams::capacity_ah)
      .def_readwrite("r_sei_ohm", &BatteryParams::r_sei_ohm)
      .def_readwrite("c_core", &BatteryParams::c_core)
      .def_readwrite("c_surf", &BatteryParams::c_surf)
      .def_readwrite("r_core_surf", &BatteryParams::r_core_surf)
      .def_readwrite("r_surf_env", &BatteryParams::r_surf_env)
      .def_readwrite("t_env", &BatteryParams::t_env)
      .def_readwrite("ocv_p_coeffs", &BatteryParams::ocv_p_coeffs)
      .def_readwrite("ocv_n_coeffs", &BatteryParams::ocv_n_coeffs)
      .def_readwrite("eta_gain_p", &BatteryParams::eta_gain_p)
      .def_readwrite("eta_gain_n", &BatteryParams::eta_gain_n)
      .def_readwrite("eta_current_scale", &BatteryParams::eta_current_scale)
      .def("validate", &BatteryParams::validate);

  py::class_<BatteryState>(m, "BatteryState")
      .def(py::init<>())
      .def(py::init([](double soc, double t_core, double t_surf, double last_current) {
             return BatteryState{soc, t_core, t_surf, last_current, false};
           }),
           py::arg("soc"), py::arg("t_core") = 298.15, py::arg("t_surf") = 298.15, py::arg("last_current") = 0.0)
      .def_readwrite("soc", &BatteryState::soc)
      .def_readwrite("t_core", &BatteryState::t_core)
      .def_readwrite("t_surf", &BatteryState::t_surf)
      .def_readwrite("last_current", &BatteryState::last_current)
      .def_readwrite("soc_clamped", &BatteryState::soc_clamped);

  m.def("open_circuit_voltage", &open_circuit_voltage, py::arg("soc"), py::arg("params"));
  m.def("terminal_voltage", &terminal_voltage, py::arg("state"), py::arg("params"), py::arg("current"));
  m.def("heat_generation", &heat_generation, py::arg("state"), py::arg("params"), py::arg("current"));
  m.def(
      "step", [](const BatteryState& s, const BatteryParams& p, double i, double dt) { return step(s, p, i, dt); },
      py::arg("state"), py::arg("params"), py::arg("current"), py::arg("dt"));

  py::class_<Bounds>(m, "Bounds")
      .def(py::init<>())
      .def_readwrite("i_min", &Bounds::i_min)
      .def_readwrite("i_max", &Bounds::i_max)
      .def_readwrite("soc_min", &Bounds::soc_min)
      .def_readwrite("soc_max", &Bounds::soc_max)
      .def_readwrite("t_max", &Bounds::t_max)
      .def_readwrite("v_max", &Bounds::v_max);

  py::enum_<SolverKind>(m, "SolverKind").value("smooth", SolverKind::smooth).value("grid_oracle", SolverKind::grid_oracle);

  py::class_<ExpertConfig>(m, "ExpertConfig")
      .def(py::init<>())
      .def_readwrite("horizon", &ExpertConfig::horizon)
      .def_readwrite("ts", &ExpertConfig::ts)
      .def_readwrite("q_soc", &ExpertConfig::q_soc)
      .def_readwrite("r", &ExpertConfig::r)
      .def_readwrite("bounds", &ExpertConfig::bounds)
      .def_readwrite("penalty_weight", &ExpertConfig::penalty_weight)
      .def_readwrite("solver", &ExpertConfig::solver)
      .def_readwrite("max_iterations", &ExpertConfig::max_iterations);

  py::class_<HorizonSolution>(m, "HorizonSolution")
      .def_readonly("currents", &HorizonSolution::currents)
      .def_readonly("cost", &HorizonSolution::cost)
      .def_readonly("converged", &HorizonSolution::converged)
      .def_readonly("iterations", &HorizonSolution::iterations);

  py::class_<ExpertDecision>(m, "ExpertDecision")
      .def_readonly("current", &ExpertDecision::current)
      .def_readonly("converged", &ExpertDecision::converged)
      .def_readonly("safety_override", &ExpertDecision::safety_override);

  m.def(
      "augmented_cost",
      [](const BatteryState& s, const BatteryParams& p, double ref, const ExpertConfig& c,
         const std::vector<double>& u) { return augmented_cost(s, p, ref, c, u); },
      py::arg("state"), py::arg("params"), py::arg("soc_ref"), py::arg("cfg"), py::arg("currents"));
  m.def(
      "solve_horizon",
      [](const BatteryState& s, const BatteryParams& p, double ref, const ExpertConfig& c,
         const std::vector<double>& warm) { return solve_horizon(s, p, ref, c, warm); },
      py::arg("state"), py::arg("params"), py::arg("soc_ref"), py::arg("cfg"),
      py::arg("warm_start") = std::vector<double>{});
  m.def("grid_oracle", &grid_oracle, py::arg("state"), py::arg("params"), py::arg("soc_ref"), py::arg("cfg"),
        py::arg("levels"));
  m.def(
      "expert_action",
      [](const BatteryState& s, const BatteryParams& p, double ref, const ExpertConfig& c) {
        return expert_action(s, p, ref, c);
      },
      py::arg("state"), py::arg("params"), py::arg("soc_ref"), py::arg("cfg"));

  py::class_<EpisodeSpec>(m, "EpisodeSpec")
      .def(py::init<>())
      .def_readwrite("n_steps", &EpisodeSpec::n_steps)
      .def_readwrite("rest_steps", &EpisodeSpec::rest_steps)
      .def_readwrite("ts", &EpisodeSpec::ts)
      .def_readwrite("soc0", &EpisodeSpec::soc0)
      .def_readwrite("t_core0", &EpisodeSpec::t_core0)
      .def_readwrite("t_surf0", &EpisodeSpec::t_surf0)
      .def_readwrite("soc_ref", &EpisodeSpec::soc_ref)
      .def_readwrite("params", &EpisodeSpec::params)
      .def_readwrite("seed", &EpisodeSpec::seed);
  m.def("sample_episode_spec", [](std::uint64_t seed) { return sample_episode_spec(seed); }, py::arg("seed"));

  py::class_<TrajectoryStep>(m, "TrajectoryStep")
      .def_readonly("step", &TrajectoryStep::step)
      .def_readonly("rest", &TrajectoryStep::rest)
      .def_readonly("soc", &TrajectoryStep::soc)
      .def_readonly("t_core", &TrajectoryStep::t_core)
      .def_readonly("t_surf", &TrajectoryStep::t_surf)
      .def_readonly("current", &TrajectoryStep::current)
      .def_readonly("voltage", &TrajectoryStep::voltage)
      .def_readonly("expert_current", &TrajectoryStep::expert_current);

  // Expert-driven episode: returns the trajectory and the labelled rows.
  m.def(
      "run_expert_episode",
      [](const EpisodeSpec& spec, int n_w, const ExpertConfig& expert) {
        EpisodeOptions opt;
        opt.n_w = n_w;
        opt.expert = expert;
        EpisodeResult r = run_episode(spec, expert_policy(), opt);
        std::vector<std::vector<double>> rows;
        rows.reserve(r.rows.size());
        for (std::size_t i = 0; i < r.rows.size(); ++i) {
          auto raw = r.rows.raw_row(i);
          rows.emplace_back(raw.begin(), raw.end());
        }
        return py::make_tuple(r.trajectory, rows);
      },
      py::arg("spec"), py::arg("n_w") = 20, py::arg("expert") = ExpertConfig{});

  py::class_<Architecture>(m, "Architecture")
      .def(py::init<>())
      .def_readwrite("n_w", &Architecture::n_w)
      .def_readwrite("lstm_sizes", &Architecture::lstm_sizes)
      .def_readwrite("dense_sizes", &Architecture::dense_sizes)
      .def_readwrite("i_min", &Architecture::i_min)
      .def_readwrite("i_max", &Architecture::i_max)
      .def("parameter_count", &Architecture::parameter_count);

  py::class_<PolicyModel>(m, "PolicyModel")
      .def(py::init<Architecture, std::uint64_t>(), py::arg("arch") = Architecture{}, py::arg("init_seed") = 0)
      .def_static("load", py::overload_cast<const std::filesystem::path&>(&PolicyModel::load), py::arg("path"))
      .def("save", &PolicyModel::save, py::arg("path"))
      .def_property_readonly("architecture", &PolicyModel::architecture)
      .def(
          "forward",
          [](const PolicyModel& model, const std::vector<double>& window, double soc_ref) {
            return model.forward(window, soc_ref);
          },
          py::arg("window"), py::arg("soc_ref"));
}
