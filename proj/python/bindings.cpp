#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "oko/calibration.hpp"
#include "oko/cli.hpp"
#include "oko/errors.hpp"
#include "oko/experiment.hpp"
#include "oko/theoryverify.hpp"

namespace py = pybind11;
using namespace oko;

namespace {

py::tuple loss_pair(const LossGrad& g) { return py::make_tuple(g.loss, g.grad); }

// Heavy work runs without the GIL; exceptions cross back as Python errors.
template <class F>
auto unlocked(F&& f) {
  py::gil_scoped_release release;
  return f();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "odd-k-out training, calibration metrics and theory checks";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

  m.def("softmax", [](const Vec& z) { return softmax(z); });
  m.def("log_softmax", [](const Vec& z) { return log_softmax(z); });
  m.def("log_sum_exp", [](const Vec& z) { return log_sum_exp(z); });

  m.def("vanilla_ce", [](const Vec& z, int y) { return loss_pair(vanilla_ce(z, y)); });
  m.def("smoothed_ce", [](const Vec& z, int y, double a) { return loss_pair(smoothed_ce(z, y, a)); },
        py::arg("z"), py::arg("y"), py::arg("alpha") = 0.1);
  m.def("focal", [](const Vec& z, int y, double g) { return loss_pair(focal(z, y, g)); }, py::arg("z"),
        py::arg("y"), py::arg("gamma") = 2.0);
  m.def("oko_hard", [](const Vec& z, int y) { return loss_pair(oko_hard(z, y)); },
        "cross-entropy of the summed set logits against the pair class");
  m.def("oko_soft", [](const Vec& z, const std::vector<int>& labels) { return loss_pair(oko_soft(z, labels)); });
  m.def("set_logit_sum", [](const std::vector<Vec>& members) { return set_logit_sum(members); });

  m.def("ece",
        [](const std::vector<double>& conf, const std::vector<int>& correct, std::size_t bins, double lo,
           double hi) { return ece(conf, correct, bins, {lo, hi}); },
        py::arg("confidences"), py::arg("correct"), py::arg("bins") = 10, py::arg("lo") = 0.0,
        py::arg("hi") = 1.0);
  m.def("rc", [](int y, const Vec& q) { return rc(y, q); }, "relative cross-entropy of one prediction");
  m.def("temperature_scale", [](const Vec& z, double tau) { return temperature_scale(z, tau); });
  m.def("evaluate_json",
        [](const std::vector<Vec>& probs, const std::vector<int>& labels, std::size_t bins) {
          return report_to_json(evaluate(probs, labels, bins));
        },
        py::arg("probs"), py::arg("labels"), py::arg("bins") = 10);

  m.def("q_epsilon", [](double eps, const Logits3& a) { return build_q_epsilon(eps).value(a); });
  m.def("q_epsilon_by_enumeration", [](double eps, const Logits3& a) { return q_epsilon_by_enumeration(eps, a); });
  m.def("minimize_q_epsilon", [](double eps) {
    const auto r = unlocked([&] { return minimize_q_epsilon(build_q_epsilon(eps)); });
    return py::make_tuple(r.a, r.value, r.iterations);
  });
  m.def("limit_deviation", [](const Logits3& a) { return limit_deviation(a); });

  m.def("verify_json",
        [](std::vector<double> eps, std::size_t rc_samples, std::uint64_t seed) {
          VerifyOptions o;
          o.eps = std::move(eps);
          o.rc_samples = rc_samples;
          o.seed = seed;
          const auto results = unlocked([&] { return run_verification_suite(o); });
          return suite_to_json(results).dump();
        },
        py::arg("eps") = std::vector<double>{0.1, 0.01, 0.001}, py::arg("rc_samples") = 1'000'000,
        py::arg("seed") = 0);

  m.def("config_hash", [](const std::string& text) {
    return hash_hex(config_hash(parse_config(nlohmann::json::parse(text))));
  });

  // CLI entry points: return (exit_code, stdout, stderr).
  m.def("train",
        [](const std::filesystem::path& config, std::size_t workers) {
          std::ostringstream out, err;
          const int rc = unlocked([&] { return cmd_train(config, workers, out, err); });
          return py::make_tuple(rc, out.str(), err.str());
        },
        py::arg("config"), py::arg("workers") = 1);
  m.def("report", [](const std::filesystem::path& dir) {
    std::ostringstream out, err;
    const int rc = unlocked([&] { return cmd_report(dir, out, err); });
    return py::make_tuple(rc, out.str(), err.str());
  });
}
