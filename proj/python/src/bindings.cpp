#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "outbreak/allocator.hpp"
#include "outbreak/belief.hpp"
#include "outbreak/config.hpp"
#include "outbreak/engine.hpp"
#include "outbreak/errors.hpp"
#include "outbreak/harness.hpp"
#include "outbreak/objective.hpp"
#include "outbreak/service.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace outbreak;

namespace {

// Documents cross the boundary as JSON text; the Python layer decodes them.
json parse(const std::string& text) {
  try {
    return text.empty() ? json::object() : json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("invalid JSON: ") + e.what());
  }
}

json decision_json(const DayRecord& r) {
  json clusters = json::array();
  double reward = 0.0;
  for (const auto& cr : r.step.rewards) {
    reward += cr.reward;
    clusters.push_back({{"cluster", cr.cluster_id},
                        {"ds1", cr.outcome.ds1},
                        {"ds2", cr.outcome.ds2},
                        {"ds3", cr.outcome.ds3},
                        {"reward", cr.reward}});
  }
  return {{"day", r.day},
          {"active_clusters", r.active_clusters},
          {"multiplier", r.decision.multiplier},
          {"budget", r.decision.budget},
          {"candidates", r.decision.candidates},
          {"demand", r.decision.demand},
          {"executed", r.step.executed_tests},
          {"demand_evaluations", r.decision.demand_evaluations},
          {"policy_evaluations", r.decision.policy_evaluations},
          {"overridden", r.decision.overridden},
          {"reward", reward},
          {"clusters", clusters}};
}

class PyEngine {
 public:
  PyEngine(const std::string& config, std::uint64_t seed, const std::string& policy) {
    json doc = parse(config);
    if (!doc.contains("schema_version")) doc["schema_version"] = 1;
    spec_ = experiment_from_json(doc);
    if (!policy.empty()) spec_.policy = parse_policy(policy);
    spec_.validate();
    engine_.emplace(spec_.system, seed, make_binding(spec_), false);
  }

  std::string step(std::optional<double> multiplier, std::optional<int> budget) {
    StepOverride ov;
    ov.multiplier = multiplier;
    ov.budget = budget;
    return decision_json(engine_->step(ov)).dump();
  }

  bool done() const { return engine_->done(); }
  int day() const { return engine_->state().day; }
  std::string policy() const { return policy_name(spec_.policy); }

 private:
  ExperimentSpec spec_;
  std::optional<Engine> engine_;
};

class PySessions {
 public:
  explicit PySessions(int max_sessions) {
    ServiceConfig c;
    c.max_sessions = max_sessions;
    manager_ = std::make_unique<SessionManager>(c);
  }

  std::string create(const std::string& body) { return manager_->create(parse(body)).id; }
  std::string step(const std::string& id, const std::string& body) {
    return manager_->step(id, parse_step_override(parse(body))).dump();
  }
  std::string fork(const std::string& id) { return manager_->fork(id).id; }
  std::string reset(const std::string& id) { return manager_->reset(id).dump(); }
  std::string state(const std::string& id) const { return manager_->state(id).dump(); }
  std::string metrics(const std::string& id) const { return manager_->metrics(id).dump(); }
  std::string diff(const std::string& a, const std::string& b) const { return manager_->diff(a, b).dump(); }
  bool verify_replay(const std::string& id) const { return manager_->verify_replay(id); }
  void remove(const std::string& id) { manager_->remove(id); }
  std::vector<std::string> list() const { return manager_->list(); }
  std::string describe() const { return manager_->describe().dump(); }

 private:
  std::unique_ptr<SessionManager> manager_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-cluster outbreak testing-allocation engine.";

  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
  py::register_exception<BudgetViolation>(m, "BudgetViolation", PyExc_RuntimeError);
  py::register_exception<CapacityError>(m, "CapacityError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ServiceError& e) {
      PyErr_SetString(PyExc_LookupError, e.to_json().dump().c_str());
    }
  });

  m.def("quarantine_decision",
        [](double q, double alpha2) { return quarantine_decision(q, alpha2) == QuarantineDecision::kQuarantine; },
        py::arg("q"), py::arg("alpha2"), "True when the contact should be quarantined.");
  m.def("quarantine_threshold", &quarantine_threshold, py::arg("alpha2"));

  m.def(
      "cluster_reward",
      [](double s1, double s2, double s3, int n, double alpha2, double alpha3_true) {
        CostParams c;
        c.alpha2 = alpha2;
        c.alpha3_true = alpha3_true;
        const auto r = cluster_reward(s1, s2, s3, n, c);
        return std::make_tuple(r.reward, r.s1_norm, r.s2_norm, r.s3_norm);
      },
      py::arg("s1"), py::arg("s2"), py::arg("s3"), py::arg("n"), py::arg("alpha2") = 0.1,
      py::arg("alpha3_true") = 0.05, "(reward, s1/N, s2/N, s3/N)");

  m.def(
      "q_rank_allocate",
      [](const std::vector<std::tuple<int, int, double>>& items, int budget) {
        std::vector<CandidateAction> cands;
        for (const auto& [c, i, dq] : items) cands.push_back({c, i, dq});
        std::vector<std::pair<int, int>> out;
        for (const auto& s : q_rank_allocate(cands, budget).selected) out.push_back({s.cluster_id, s.individual_id});
        return out;
      },
      py::arg("candidates"), py::arg("budget"), "Selected (cluster, individual) pairs in rank order.");

  m.def("policy_names", [] {
    std::vector<std::string> names;
    for (auto k : all_policies()) names.push_back(policy_name(k));
    return names;
  });

  m.def(
      "run_experiment",
      [](const std::string& config) {
        json doc = parse(config);
        if (!doc.contains("schema_version")) doc["schema_version"] = 1;
        const auto spec = experiment_from_json(doc);
        spec.validate();
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(spec);
        }
        return json{{"row", to_json(r.row)}, {"latency", to_json(r.latency)}}.dump();
      },
      py::arg("config"));

  m.def("default_config", [] { return json{{"schema_version", 1}, {"system", to_json(desk_system())}}.dump(); });

  py::class_<PyEngine>(m, "Engine")
      .def(py::init<const std::string&, std::uint64_t, const std::string&>(), py::arg("config"),
           py::arg("seed"), py::arg("policy") = "")
      .def("step", &PyEngine::step, py::arg("multiplier") = py::none(), py::arg("budget") = py::none())
      .def_property_readonly("done", &PyEngine::done)
      .def_property_readonly("day", &PyEngine::day)
      .def_property_readonly("policy", &PyEngine::policy);

  py::class_<PySessions>(m, "Sessions")
      .def(py::init<int>(), py::arg("max_sessions") = 16)
      .def("create", &PySessions::create)
      .def("step", &PySessions::step)
      .def("fork", &PySessions::fork)
      .def("reset", &PySessions::reset)
      .def("state", &PySessions::state)
      .def("metrics", &PySessions::metrics)
      .def("diff", &PySessions::diff)
      .def("verify_replay", &PySessions::verify_replay)
      .def("remove", &PySessions::remove)
      .def("list", &PySessions::list)
      .def("describe", &PySessions::describe);
}
