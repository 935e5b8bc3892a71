#include "oko/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "oko/errors.hpp"
#include "oko/experiment.hpp"

namespace oko {

int cmd_train(const std::filesystem::path& config, std::size_t workers, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(config);
  } catch (const ValidationError& e) {
    err << e.what() << "\n";
    return kExitValidation;
  }
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  out << "config " << hash_hex(config_hash(cfg)) << " -> " << cfg.output_dir.string() << "\n";
  TrainSummary s;
  try {
    s = run_experiment(cfg, workers, out);
  } catch (const std::exception& e) {
    err << "train failed: " << e.what() << "\n";
    return kExitFailure;
  }
  out << s.records.size() - s.failed << " of " << s.records.size() << " runs succeeded\n";
  return s.failed == 0 ? kExitOk : kExitFailure;
}

int cmd_verify(const VerifyOptions& opts, const std::optional<std::filesystem::path>& json_out,
               std::ostream& out, std::ostream& err, bool parallel) {
  try {
    opts.validate();
  } catch (const InvalidArgument& e) {
    err << "invalid verify options: " << e.what() << "\n";
    return kExitValidation;
  }
  const auto results = run_verification_suite(opts, parallel);
  bool all = true;
  for (const auto& r : results) {
    out << (r.pass ? "PASS " : "FAIL ") << r.name;
    if (!r.error.empty()) out << " (" << r.error.substr(0, r.error.find('\n')) << ")";
    out << "\n";
    all = all && r.pass;
  }
  const std::string text = suite_to_json(results).dump(2) + "\n";
  if (json_out) {
    std::ofstream f(*json_out);
    if (!(f << text)) {
      err << "cannot write " << json_out->string() << "\n";
      return kExitFailure;
    }
  }
  return all ? kExitOk : kExitFailure;
}

int cmd_report(const std::filesystem::path& dir, std::ostream& out, std::ostream& err) {
  ReportResult r;
  try {
    r = build_report(dir, err);
  } catch (const InvalidArgument& e) {
    err << e.what() << "\n";
    return kExitValidation;
  }
  out << "method,runs,mean_accuracy,mean_ece,mae_xent_entropy\n";
  for (const auto& s : r.rows)
    out << to_string(s.method) << "," << s.runs << "," << s.mean_accuracy << "," << s.mean_ece << ","
        << s.mae_xent_entropy << "\n";
  if (!r.skipped.empty()) out << r.skipped.size() << " malformed record(s) skipped\n";
  out << "wrote " << (dir / "summary.csv").string() << " and " << (dir / "long.csv").string() << "\n";
  return kExitOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"odd-k-out training, calibration and theory checks"};
  app.require_subcommand(1);

  std::string config;
  std::size_t workers = 1;
  auto* train = app.add_subcommand("train", "run every (method, size, seed) cell of a config");
  train->add_option("--config", config, "experiment config (JSON)")->required();
  train->add_option("--workers", workers, "parallel runs; 0 uses every core");

  VerifyOptions vopts;
  std::string json_path;
  bool serial = false, broken = false;
  auto* verify = app.add_subcommand("verify", "numerically check the theoretical claims");
  auto* eps_opt = verify->add_option("--eps", vopts.eps, "epsilon values for the toy minimizer")->expected(0, -1);
  verify->add_option("--gap-eps", vopts.gap_eps, "decreasing epsilon list for the regularization gap")->expected(0, -1);
  verify->add_option("--rc-samples", vopts.rc_samples, "Monte-Carlo draws for the calibrated-RC check");
  verify->add_option("--property-draws", vopts.property_draws, "random draws for property checks");
  verify->add_option("--steps", vopts.divergence_steps, "gradient steps on the divergence path");
  verify->add_option("--seed", vopts.seed, "seed for random test points");
  verify->add_option("--json", json_path, "write verdicts as JSON");
  verify->add_flag("--serial", serial, "run checks one after another");
  verify->add_flag("--inject-broken-loss", broken, "harness self-test: perturb the hard loss")->group("");

  std::string dir;
  auto* report = app.add_subcommand("report", "aggregate run records into summary tables");
  report->add_option("--dir", dir, "directory holding RunRecord JSON files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, er;
    app.exit(e, o, er);
    out << o.str();
    err << er.str();
    return kExitValidation;
  }

  if (*train) return cmd_train(config, workers, out, err);
  if (*verify) {
    const auto raw_eps = eps_opt->results();
    if (eps_opt->count() > 0 && (raw_eps.empty() || raw_eps.front().empty())) {
      err << "--eps needs at least one value\n";
      return kExitValidation;
    }
    if (broken)
      vopts.hard_loss = [](std::span<const double> z, int y) {
        auto lg = oko_hard(z, y);
        lg.loss += 1e-6;
        return lg;
      };
    std::optional<std::filesystem::path> jp;
    if (!json_path.empty()) jp = json_path;
    return cmd_verify(vopts, jp, out, err, !serial);
  }
  return cmd_report(dir, out, err);
}

}  // namespace oko
