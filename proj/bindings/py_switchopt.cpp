#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "switchopt/cia.hpp"
#include "switchopt/model.hpp"
#include "switchopt/relaxed.hpp"
#include "switchopt/seqopt.hpp"
#include "switchopt/sto.hpp"

namespace py = pybind11;
using namespace switchopt;

namespace {

Sequence make_sequence(const std::vector<Eigen::VectorXd>& stages) {
  Sequence s;
  s.stages = stages;
  return s;
}

}  // namespace

PYBIND11_MODULE(_switchopt, m) {
  m.doc() = "Switched-system optimal control: relaxed solve, CIA rounding, "
            "switching time optimization and iterative sequence optimization";

  py::class_<DoubleTankConstants>(m, "DoubleTankConstants")
      .def(py::init<>())
      .def_readwrite("alpha", &DoubleTankConstants::alpha)
      .def_readwrite("beta1", &DoubleTankConstants::beta1)
      .def_readwrite("beta2", &DoubleTankConstants::beta2)
      .def_readwrite("gamma", &DoubleTankConstants::gamma)
      .def_readwrite("tf", &DoubleTankConstants::tf)
      .def_readwrite("x0_1", &DoubleTankConstants::x0_1)
      .def_readwrite("x0_2", &DoubleTankConstants::x0_2);

  py::class_<ProblemSpec>(m, "ProblemSpec")
      .def_readonly("state_dim", &ProblemSpec::state_dim)
      .def_readonly("discrete_input_dim", &ProblemSpec::discrete_input_dim)
      .def_readonly("continuous_input_dim", &ProblemSpec::continuous_input_dim)
      .def_readonly("t0", &ProblemSpec::t0)
      .def_readonly("tf", &ProblemSpec::tf)
      .def_readonly("x0", &ProblemSpec::x0);

  py::class_<Trajectory>(m, "Trajectory")
      .def_readonly("times", &Trajectory::times)
      .def_readonly("states", &Trajectory::states)
      .def_readonly("discrete_inputs", &Trajectory::discrete_inputs)
      .def_readonly("continuous_inputs", &Trajectory::continuous_inputs)
      .def_readonly("running_cost", &Trajectory::running_cost)
      .def_readonly("total_cost", &Trajectory::total_cost);

  m.def("reference", &reference, py::arg("t"));
  m.def("double_tank_rhs", &double_tank_rhs, py::arg("x"), py::arg("u"), py::arg("c"));
  m.def("make_double_tank", &make_double_tank, py::arg("constants") = DoubleTankConstants{});
  m.def(
      "simulate",
      [](const ProblemSpec& spec, const std::vector<double>& times,
         const std::vector<Eigen::VectorXd>& discrete,
         const std::vector<Eigen::VectorXd>& continuous) {
        ControlGrid g;
        g.times = times;
        g.discrete = discrete;
        g.continuous = continuous;
        return simulate(spec, g, spec.x0);
      },
      py::arg("spec"), py::arg("times"), py::arg("discrete"), py::arg("continuous"));
  m.def(
      "euler_step",
      [](const ProblemSpec& spec, const Vec& x, const Vec& u, const Vec& c, double t, double h) {
        return euler_step(spec, x, u, c, t, h);
      },
      py::arg("spec"), py::arg("x"), py::arg("u"), py::arg("c"), py::arg("t"), py::arg("h"));

  py::class_<RelaxedControlGrid>(m, "RelaxedControlGrid")
      .def(py::init<>())
      .def_readwrite("t_left", &RelaxedControlGrid::t_left)
      .def_readwrite("t_right", &RelaxedControlGrid::t_right)
      .def_readwrite("values", &RelaxedControlGrid::values);

  py::class_<NlpSolution>(m, "NlpSolution")
      .def_readonly("objective_value", &NlpSolution::objective_value)
      .def_readonly("eq_residual_norm", &NlpSolution::eq_residual_norm)
      .def_readonly("kkt_residual", &NlpSolution::kkt_residual)
      .def_readonly("iterations", &NlpSolution::iterations)
      .def_property_readonly("status",
                             [](const NlpSolution& s) { return std::string(to_string(s.status)); });

  py::class_<RelaxedSolution>(m, "RelaxedSolution")
      .def_readonly("trajectory", &RelaxedSolution::trajectory)
      .def_readonly("objective_value", &RelaxedSolution::objective_value)
      .def_readonly("relaxed_control_grid", &RelaxedSolution::relaxed_control_grid)
      .def_readonly("nlp", &RelaxedSolution::nlp);

  m.def(
      "solve_relaxed",
      [](const ProblemSpec& spec, int nodes) { return solve_relaxed(spec, nodes); },
      py::arg("spec"), py::arg("nodes") = 300);

  py::class_<BinaryGrid>(m, "BinaryGrid")
      .def_readonly("t_left", &BinaryGrid::t_left)
      .def_readonly("t_right", &BinaryGrid::t_right)
      .def_readonly("values", &BinaryGrid::values);

  py::class_<CiaResult>(m, "CiaResult")
      .def_readonly("grid", &CiaResult::grid)
      .def_property_readonly("eta", [](const CiaResult& r) { return r.bound.eta; })
      .def_readonly("nodes_expanded", &CiaResult::nodes_expanded)
      .def_readonly("proven_optimal", &CiaResult::proven_optimal);

  m.def("sum_up_rounding", &sum_up_rounding, py::arg("grid"));
  m.def(
      "solve_cia_bnb",
      [](const RelaxedControlGrid& grid, double min_uptime) {
        CiaOptions opts;
        opts.min_uptime = min_uptime;
        return solve_cia_bnb(grid, opts);
      },
      py::arg("grid"), py::arg("min_uptime") = 0.0);
  m.def(
      "evaluate_eta",
      [](const RelaxedControlGrid& rel, const BinaryGrid& bin) {
        return evaluate_eta(rel, bin).eta;
      },
      py::arg("relaxed"), py::arg("binary"));

  m.def("w_of_tau", [](const std::vector<double>& w, double tau) {
    return w_of_tau(DurationSet{w}, tau);
  });
  m.def("time_of_tau", [](const std::vector<double>& w, double tau) {
    return time_of_tau(DurationSet{w}, tau);
  });
  m.def("tau_of_time", [](const std::vector<double>& w, double t) {
    return tau_of_time(DurationSet{w}, t);
  });

  py::class_<StoSolution>(m, "StoSolution")
      .def_property_readonly("sequence",
                             [](const StoSolution& s) { return s.sequence.stages; })
      .def_property_readonly("w", [](const StoSolution& s) { return s.w.w; })
      .def_readonly("slacks", &StoSolution::slacks)
      .def_readonly("cost", &StoSolution::cost)
      .def_readonly("penalized_cost", &StoSolution::penalized_cost)
      .def_readonly("trajectory", &StoSolution::trajectory)
      .def_readonly("nlp", &StoSolution::nlp);

  m.def(
      "solve_sto",
      [](const ProblemSpec& spec, const std::vector<Eigen::VectorXd>& stages, int nodes_per_stage,
         std::vector<double> lb, std::vector<double> a, std::vector<double> b) {
        const int ns = static_cast<int>(stages.size());
        if (lb.empty()) lb.assign(ns, 0.0);
        SlackCosts costs;
        costs.a = a.empty() ? std::vector<double>(ns, 1.0) : a;
        costs.b = b.empty() ? std::vector<double>(ns, 0.0) : b;
        return solve_sto(spec, make_sequence(stages), nodes_per_stage, lb, costs);
      },
      py::arg("spec"), py::arg("stages"), py::arg("nodes_per_stage") = 20,
      py::arg("lower_bounds") = std::vector<double>{}, py::arg("a") = std::vector<double>{},
      py::arg("b") = std::vector<double>{});

  py::class_<IterationRecord>(m, "IterationRecord")
      .def_readonly("iteration", &IterationRecord::iteration)
      .def_readonly("w", &IterationRecord::w)
      .def_readonly("e", &IterationRecord::e)
      .def_readonly("removed", &IterationRecord::removed)
      .def_readonly("candidate", &IterationRecord::candidate)
      .def_readonly("cost", &IterationRecord::cost);

  py::class_<IstoResult>(m, "IstoResult")
      .def_readonly("solution", &IstoResult::solution)
      .def_readonly("records", &IstoResult::records);

  m.def("double_tank_initial_sequence",
        []() { return double_tank_initial_sequence().stages; });
  m.def(
      "run_isto",
      [](const ProblemSpec& spec, const std::vector<Eigen::VectorXd>& initial, double min_uptime,
         int nodes_per_stage) {
        IstoOptions opts;
        opts.min_uptime = min_uptime;
        opts.nodes_per_stage = nodes_per_stage;
        return run_isto(spec, make_sequence(initial), opts);
      },
      py::arg("spec"), py::arg("initial"), py::arg("min_uptime") = 0.0,
      py::arg("nodes_per_stage") = 0);
}
