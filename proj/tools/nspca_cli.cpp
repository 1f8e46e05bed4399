// Command-line front end: data generation, single runs, parameter sweeps,
// closed-form bound reports and randomized lemma verification.
//
// Exit codes: 0 success, 1 invariant violation, 2 invalid configuration.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nspca/analysis.hpp"
#include "nspca/errors.hpp"
#include "nspca/harness.hpp"
#include "nspca/model.hpp"
#include "nspca/npm.hpp"
#include "nspca/verify.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kViolation = 1;
constexpr int kBadConfig = 2;

struct GenerateArgs {
  int p = 4, k = 1;
  double delta = 1.0, sigma = 1.0, gamma = 0.0;
  long T = 100;
};

struct RunArgs {
  int p = 50, k = 3;
  double delta = 1.0, sigma = 1.0, gamma = 0.0;
  long B = 1000;
  int L = 10;
  double epsilon = 0.1;
  bool json = false;
  bool allow_large_epsilon = false;
};

struct BoundsArgs {
  int p = 50, k = 3;
  long T = 1000000;
  double epsilon = 0.1, delta = 1.0, sigma = 1.0, gamma = 0.0;
  double C = 1.0;
  bool fit_c = false;
  bool json = false;
  bool recommend = false;
};

struct VerifyArgs {
  std::string lemma = "all";
  long trials = 1000;
  std::string json_path;
};

std::vector<nspca::verify::LemmaId> lemmas_from_name(const std::string& name) {
  using nspca::verify::LemmaId;
  if (name == "all")
    return {LemmaId::PM_STAT, LemmaId::LEM1, LemmaId::LEM2, LemmaId::DAVIS_KAHAN,
            LemmaId::SIN_SUM, LemmaId::WEYL, LemmaId::NORM_INEQ};
  for (LemmaId id : {LemmaId::PM_STAT, LemmaId::LEM1, LemmaId::LEM2,
                     LemmaId::DAVIS_KAHAN, LemmaId::SIN_SUM, LemmaId::WEYL,
                     LemmaId::NORM_INEQ})
    if (name == nspca::verify::lemma_name(id)) return {id};
  throw nspca::InvalidParamsError("unknown lemma name: " + name);
}

std::ostream& open_out(std::ofstream& file, const std::string& path) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw nspca::InvalidParamsError("cannot open output file: " + path);
  return file;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"non-stationary streaming PCA workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 1;
  std::string out_path;
  std::string config_path;
  int threads = 0;
  app.add_option("--seed", seed, "base RNG seed");
  app.add_option("--out", out_path, "output file ('-' for stdout)");
  app.add_option("--config", config_path, "JSON config file (sweep)");
  app.add_option("--threads", threads, "worker threads (0 = all cores)");

  GenerateArgs gen;
  auto* cmd_gen = app.add_subcommand("generate", "emit a subspace path file");
  cmd_gen->add_option("--p", gen.p);
  cmd_gen->add_option("--k", gen.k);
  cmd_gen->add_option("--delta", gen.delta);
  cmd_gen->add_option("--sigma", gen.sigma);
  cmd_gen->add_option("--gamma", gen.gamma);
  cmd_gen->add_option("--T", gen.T);

  RunArgs run;
  auto* cmd_run = app.add_subcommand("run", "single streaming run, prints the error trace");
  cmd_run->add_option("--p", run.p);
  cmd_run->add_option("--k", run.k);
  cmd_run->add_option("--delta", run.delta);
  cmd_run->add_option("--sigma", run.sigma);
  cmd_run->add_option("--gamma", run.gamma);
  cmd_run->add_option("--B", run.B);
  cmd_run->add_option("--L", run.L);
  cmd_run->add_option("--epsilon", run.epsilon);
  cmd_run->add_flag("--json", run.json);
  cmd_run->add_flag("--allow-large-epsilon", run.allow_large_epsilon);

  auto* cmd_sweep = app.add_subcommand("sweep", "run a parameter sweep, write CSV");
  int sweep_trials = -1;
  double sweep_eps = -1.0;
  std::string sweep_policy;
  std::vector<double> sweep_gammas;
  std::vector<long> sweep_ts;
  cmd_sweep->add_option("--trials", sweep_trials);
  cmd_sweep->add_option("--epsilon", sweep_eps);
  cmd_sweep->add_option("--policy", sweep_policy,
                        "explicit|from-theorem|noise-optimal|full-window");
  cmd_sweep->add_option("--gamma", sweep_gammas, "gamma grid override");
  cmd_sweep->add_option("--T", sweep_ts, "T grid override");

  BoundsArgs bounds;
  auto* cmd_bounds = app.add_subcommand("bounds", "closed-form bound report");
  cmd_bounds->add_option("--p", bounds.p);
  cmd_bounds->add_option("--k", bounds.k);
  cmd_bounds->add_option("--T", bounds.T);
  cmd_bounds->add_option("--epsilon", bounds.epsilon);
  cmd_bounds->add_option("--delta", bounds.delta);
  cmd_bounds->add_option("--sigma", bounds.sigma);
  cmd_bounds->add_option("--gamma", bounds.gamma);
  cmd_bounds->add_option("--C", bounds.C);
  cmd_bounds->add_flag("--fit-C", bounds.fit_c, "calibrate C from noise measurements first");
  cmd_bounds->add_flag("--recommend", bounds.recommend,
                       "solve the T = B*L fixpoint instead of using --T");
  cmd_bounds->add_flag("--json", bounds.json);

  VerifyArgs verify;
  auto* cmd_verify = app.add_subcommand("verify", "randomized lemma property suites");
  cmd_verify->add_option("--lemma", verify.lemma,
                         "pm_stat|lem1|lem2|dk|sinsum|weyl|norm_ineq|all");
  cmd_verify->add_option("--trials", verify.trials);
  cmd_verify->add_option("--json", verify.json_path, "write a JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kBadConfig;
  }

  try {
    if (cmd_gen->parsed()) {
      nspca::model::SpikedParams params{gen.p, gen.k, gen.delta, gen.sigma, gen.gamma, seed};
      const auto path = nspca::model::generate_rotating_path(params, gen.T);
      std::ofstream file;
      std::ostream& os = open_out(file, out_path);
      nspca::model::save_path(os, path, params);
      std::cerr << "wrote path: T=" << path.length()
                << " certified drift=" << path.gamma_certified << "\n";
      return kOk;
    }

    if (cmd_run->parsed()) {
      nspca::model::SpikedParams params{run.p, run.k, run.delta, run.sigma, run.gamma, seed};
      nspca::npm::NpmConfig config;
      config.p = run.p;
      config.k = run.k;
      config.B = run.B;
      config.L = run.L;
      config.epsilon = run.epsilon;
      config.seed = nspca::rng::derive(seed, {nspca::rng::kTagIterateInit});
      config.allow_large_epsilon = run.allow_large_epsilon;
      const auto result = nspca::npm::run_npm_streaming(params, config);
      if (run.json) {
        nlohmann::json j;
        j["error_trace"] = result.error_trace;
        j["final_error"] = result.error_trace.back();
        j["samples"] = result.samples_consumed;
        j["rank_recoveries"] = result.state.rank_recoveries;
        std::cout << j.dump(2) << "\n";
      } else {
        for (std::size_t l = 0; l < result.error_trace.size(); ++l)
          std::cout << "block " << l + 1 << "  error " << result.error_trace[l] << "\n";
        std::cout << "final error " << result.error_trace.back() << "\n";
      }
      return kOk;
    }

    if (cmd_sweep->parsed()) {
      nspca::harness::SweepSpec spec;
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw nspca::InvalidParamsError("cannot read config: " + config_path);
        std::stringstream buf;
        buf << in.rdbuf();
        spec = nspca::harness::SweepSpec::from_json(buf.str());
      }
      if (app.count("--seed") > 0) spec.seed = seed;
      if (app.count("--threads") > 0) spec.threads = threads;
      if (sweep_trials >= 0) spec.trials = sweep_trials;
      if (sweep_eps >= 0.0) spec.epsilon = sweep_eps;
      if (!sweep_gammas.empty()) spec.gamma_grid = sweep_gammas;
      if (!sweep_ts.empty()) spec.t_grid = sweep_ts;
      if (!sweep_policy.empty()) {
        const auto p = nspca::harness::policy_from_name(sweep_policy);
        if (!p) throw nspca::InvalidParamsError("unknown policy: " + sweep_policy);
        spec.policy = *p;
      }
      std::ofstream file;
      std::ostream& os = open_out(file, out_path);
      const auto records = nspca::harness::run_sweep(spec, &os);
      long failures = 0;
      for (const auto& r : records)
        if (r.status.rfind("error:", 0) == 0) ++failures;
      std::cerr << "sweep done: " << records.size() << " rows, " << failures
                << " failed trials\n";
      return kOk;
    }

    if (cmd_bounds->parsed()) {
      double C = bounds.C;
      if (bounds.fit_c) {
        nspca::harness::NoiseFitSpec fit_spec;
        fit_spec.seed = seed;
        C = nspca::harness::fit_constant_C(fit_spec).C;
        std::cerr << "fitted C = " << C << "\n";
      }
      const auto report =
          bounds.recommend
              ? nspca::analysis::recommend_run(bounds.epsilon, bounds.delta, bounds.sigma,
                                               bounds.gamma, bounds.p, bounds.k, C, bounds.T)
              : nspca::analysis::check_assumptions(bounds.epsilon, bounds.delta, bounds.sigma,
                                                   bounds.gamma, bounds.p, bounds.k,
                                                   bounds.T, C);
      std::ofstream file;
      std::ostream& os = open_out(file, out_path);
      os << (bounds.json ? report.to_json() + "\n" : report.to_text());
      return kOk;
    }

    if (cmd_verify->parsed()) {
      const auto ids = lemmas_from_name(verify.lemma);
      nlohmann::json all = nlohmann::json::array();
      bool ok = true;
      for (const auto id : ids) {
        const auto report = nspca::verify::run_suite(id, verify.trials, seed);
        all.push_back(nlohmann::json::parse(report.to_json()));
        std::cout << nspca::verify::lemma_name(id) << ": "
                  << (report.passed() ? "ok" : "VIOLATIONS") << " (" << report.evaluated
                  << " evaluated, " << report.rejected << " rejected, worst margin "
                  << report.worst_margin << ")\n";
        ok = ok && report.passed();
      }
      if (!verify.json_path.empty()) {
        std::ofstream jf(verify.json_path);
        jf << all.dump(2) << "\n";
      }
      return ok ? kOk : kViolation;
    }
  } catch (const nspca::InvalidParamsError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return kBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kViolation;
  }
  return kBadConfig;
}
