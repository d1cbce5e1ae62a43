#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "branchlab/config.hpp"
#include "branchlab/errors.hpp"
#include "branchlab/limits.hpp"
#include "branchlab/report.hpp"
#include "branchlab/semigroup.hpp"
#include "branchlab/sha256.hpp"
#include "branchlab/simulator.hpp"
#include "branchlab/spectral.hpp"

namespace fs = std::filesystem;
using namespace branchlab;

namespace {

struct CliArgs {
  std::string config_path;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir = ".";
};

struct Emitter {
  fs::path dir;
  std::vector<std::string> written;

  void text(const std::string& name, const std::string& body) {
    fs::create_directories(dir);
    std::ofstream out(dir / name, std::ios::binary);
    out << body;
    written.push_back(name);
  }
  void json_file(const std::string& name, const ordered_json& doc) {
    text(name, doc.dump(2) + "\n");
  }
};

double param_number(const ordered_json& params, const std::string& key, double fallback) {
  if (!params.contains(key)) return fallback;
  return params[key].get<double>();
}

long param_long(const ordered_json& params, const std::string& key, long fallback) {
  if (!params.contains(key)) return fallback;
  return params[key].get<long>();
}

bool param_bool(const ordered_json& params, const std::string& key, bool fallback) {
  if (!params.contains(key)) return fallback;
  return params[key].get<bool>();
}

Vec param_vec(const ordered_json& params, const std::string& key, const Vec& fallback) {
  if (!params.contains(key)) return fallback;
  return params[key].get<Vec>();
}

std::vector<long> param_counts(const ordered_json& params, const std::string& key,
                               const std::vector<long>& fallback) {
  if (!params.contains(key)) return fallback;
  return params[key].get<std::vector<long>>();
}

std::vector<double> param_grid(const ordered_json& params, const std::string& key) {
  if (!params.contains(key)) return {};
  return params[key].get<std::vector<double>>();
}

int run_check(const ExperimentConfig& cfg, const CliArgs& args, Emitter& emit) {
  const MeanGenerator gen = build_mean_generator(cfg.model);
  const EigenTriple triple = eigen_triple(gen);
  AssumptionOptions opts;
  opts.delta_grid = param_grid(cfg.params, "delta_grid");
  opts.random_starts = static_cast<int>(param_long(cfg.params, "random_starts", 64));
  opts.seed = args.seed;
  const AssumptionReport rep = check_assumptions(cfg.model, triple, opts);
  emit.json_file("assumptions.json", assumptions_json(rep, triple));
  emit.text("mixing.csv", mixing_csv(rep.mixing));
  return rep.k_positive ? 0 : 1;
}

int run_solve(const ExperimentConfig& cfg, const CliArgs& args, Emitter& emit) {
  (void)args;
  const std::string target =
      cfg.params.contains("target") ? cfg.params["target"].get<std::string>() : "flow";
  const MeanGenerator gen = build_mean_generator(cfg.model);
  const int n = space_dim(cfg.model);
  const double horizon = param_number(cfg.params, "horizon", 10.0);
  std::vector<double> checkpoints = param_grid(cfg.params, "checkpoints");
  if (checkpoints.empty()) checkpoints = default_checkpoints(horizon);

  if (target == "flow") {
    EigenTriple triple = eigen_triple(gen);
    Trajectory tr;
    std::string channel;
    if (std::holds_alternative<BranchingModel>(cfg.model)) {
      const Vec g0 = param_vec(cfg.params, "g0", Vec(n, 0.0));
      tr = solve_nonlinear(std::get<BranchingModel>(cfg.model), gen, g0, horizon, checkpoints,
                           &triple.left);
      channel = "u";
    } else {
      const Vec f0 = param_vec(cfg.params, "f0", Vec(n, 1.0));
      tr = solve_nonlinear(std::get<SuperModel>(cfg.model), gen, f0, horizon, checkpoints,
                           &triple.left);
      channel = "V";
    }
    emit.text("trajectory.csv", trajectory_csv(tr, channel));
    ordered_json summary;
    summary["accepted_steps"] = tr.stats.accepted;
    summary["rejected_steps"] = tr.stats.rejected;
    summary["clamp_events"] = tr.stats.clamp_events;
    summary["final_values"] = tr.values.back();
    emit.json_file("solve.json", summary);
    return 0;
  }
  if (target == "immigration") {
    if (!cfg.immigration) throw SchemaError("immigration target needs an immigration law");
    const Vec f = param_vec(cfg.params, "f", Vec(n, 1.0));
    Trajectory tr;
    std::string channel;
    if (std::holds_alternative<BranchingModel>(cfg.model)) {
      tr = immigration_log_laplace(std::get<BranchingModel>(cfg.model), gen,
                                   std::get<ImmigrationLaw>(*cfg.immigration), f, horizon,
                                   checkpoints);
      channel = "v";
    } else {
      tr = immigration_log_laplace(std::get<SuperModel>(cfg.model), gen,
                                   std::get<SpImmigrationLaw>(*cfg.immigration), f, horizon,
                                   checkpoints);
      channel = "V";
    }
    emit.text("trajectory.csv", trajectory_csv(tr, channel));
    return 0;
  }
  if (target == "stationary") {
    if (!cfg.immigration) throw SchemaError("stationary target needs an immigration law");
    const EigenTriple triple = eigen_triple(gen);
    const Vec f = param_vec(cfg.params, "f", Vec(n, 1.0));
    const double tail_tol = param_number(cfg.params, "tail_tol", 1e-10);
    const double force_horizon = param_number(cfg.params, "force_horizon", -1.0);
    StationaryValue sv;
    if (std::holds_alternative<BranchingModel>(cfg.model))
      sv = stationary_log_laplace(std::get<BranchingModel>(cfg.model), gen, triple,
                                  std::get<ImmigrationLaw>(*cfg.immigration), f, tail_tol,
                                  force_horizon);
    else
      sv = stationary_log_laplace(std::get<SuperModel>(cfg.model), gen, triple,
                                  std::get<SpImmigrationLaw>(*cfg.immigration), f, tail_tol,
                                  force_horizon);
    ordered_json out;
    out["integral"] = sv.integral;
    out["tail_bound"] = sv.tail_bound;
    out["horizon"] = sv.horizon;
    out["laplace"] = sv.laplace();
    emit.json_file("stationary.json", out);
    return 0;
  }
  if (target == "survival") {
    const double t = param_number(cfg.params, "t", horizon);
    ordered_json out;
    if (std::holds_alternative<BranchingModel>(cfg.model)) {
      const std::vector<long> init =
          param_counts(cfg.params, "init", std::vector<long>(n, 0));
      out["probability"] =
          survival_probability(std::get<BranchingModel>(cfg.model), gen, init, t);
    } else {
      const Vec mu = param_vec(cfg.params, "init_mass", Vec(n, 1.0));
      const SpSurvival s = survival_probability(std::get<SuperModel>(cfg.model), gen, mu, t);
      out["probability"] = s.probability;
      out["ladder_theta"] = s.theta_used;
      out["ladder_gap"] = s.ladder_gap;
    }
    emit.json_file("survival.json", out);
    return 0;
  }
  throw SchemaError("unknown solve target \"" + target + "\"");
}

int run_simulate(const ExperimentConfig& cfg, const CliArgs& args, Emitter& emit) {
  if (!std::holds_alternative<BranchingModel>(cfg.model))
    throw ApplicabilityError("pathwise simulation covers particle models only");
  const auto& m = std::get<BranchingModel>(cfg.model);
  const int n = m.space.n;
  const ImmigrationLaw* imm = nullptr;
  if (cfg.immigration) {
    if (!std::holds_alternative<ImmigrationLaw>(*cfg.immigration))
      throw SchemaError("particle simulation needs a particle immigration law");
    imm = &std::get<ImmigrationLaw>(*cfg.immigration);
  }
  const std::string estimator =
      cfg.params.contains("estimator") ? cfg.params["estimator"].get<std::string>() : "survival";
  const std::vector<long> init = param_counts(cfg.params, "init", std::vector<long>(n, 0));
  const double t = param_number(cfg.params, "t", 1.0);
  SimOptions sopts;
  sopts.population_cap = param_long(cfg.params, "population_cap", sopts.population_cap);

  if (estimator == "path") {
    const double horizon = param_number(cfg.params, "horizon", t);
    std::vector<double> checkpoints = param_grid(cfg.params, "checkpoints");
    if (checkpoints.empty()) checkpoints = default_checkpoints(horizon);
    const long n_paths = param_long(cfg.params, "n", 1);
    emit.text("replicates.csv",
              replicates_csv(m, imm, init, horizon, args.seed, n_paths, checkpoints, sopts));
    return 0;
  }

  const long n_rep = param_long(cfg.params, "n", 0);
  if (n_rep < 2) throw SchemaError("n >= 2 required");
  McEstimate est;
  if (estimator == "survival") {
    if (imm != nullptr)
      throw ApplicabilityError("extinction is a no-immigration statistic");
    est = mc_survival(m, init, t, n_rep, args.seed, args.threads, sopts);
  } else if (estimator == "laplace") {
    const Vec f = param_vec(cfg.params, "f", Vec(n, 1.0));
    const double theta = param_number(cfg.params, "theta", 1.0);
    const bool conditional = param_bool(cfg.params, "conditional", false);
    est = mc_laplace(m, imm, init, f, theta, t, n_rep, args.seed, conditional, args.threads,
                     sopts);
  } else if (estimator == "mean") {
    const Vec f = param_vec(cfg.params, "f", Vec(n, 1.0));
    est = mc_pairing_mean(m, imm, init, f, t, n_rep, args.seed, args.threads, sopts);
  } else {
    throw SchemaError("unknown estimator \"" + estimator + "\"");
  }
  emit.json_file("estimate.json", estimate_json(est));
  return 0;
}

int run_verify(const ExperimentConfig& cfg, const CliArgs& args, Emitter& emit) {
  VerifyOptions opts;
  opts.mu = param_counts(cfg.params, "mu", {});
  opts.mu_mass = param_vec(cfg.params, "mu_mass", {});
  opts.f = param_vec(cfg.params, "f", {});
  if (cfg.params.contains("theta_grid"))
    opts.theta_grid = cfg.params["theta_grid"].get<std::vector<double>>();
  opts.schedule = param_grid(cfg.params, "schedule");
  opts.tolerance = param_number(cfg.params, "tolerance", -1.0);
  opts.with_mc = param_bool(cfg.params, "with_mc", false);
  opts.mc_n = param_long(cfg.params, "mc_n", 100000);
  opts.mc_t = param_number(cfg.params, "mc_t", 200.0);
  opts.seed = args.seed;
  opts.threads = args.threads;
  opts.model_id = cfg.id;
  const int theorem = static_cast<int>(param_long(cfg.params, "theorem", 0));
  const ImmAny* imm = cfg.immigration ? &*cfg.immigration : nullptr;
  const TheoremReport rep = verify_theorem(theorem, cfg.model, imm, opts);
  emit.json_file("report.json", report_json(rep));
  emit.text("comparison.csv", report_csv(rep));
  std::cout << (rep.pass ? "PASS" : "FAIL") << " theorem " << theorem << " ("
            << rep.statistic << ", final error " << rep.final_abs_err << ")\n";
  return rep.pass ? 0 : 1;
}

int dispatch(const std::string& command, const CliArgs& args) {
  std::ifstream in(args.config_path, std::ios::binary);
  if (!in) throw SchemaError("cannot read config file " + args.config_path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const ExperimentConfig cfg = parse_config_text(text);
  if (cfg.kind != command)
    throw SchemaError("config experiment.kind \"" + cfg.kind +
                      "\" does not match the subcommand \"" + command + "\"");

  Emitter emit{fs::path(args.out_dir), {}};
  int status = 0;
  if (command == "check")
    status = run_check(cfg, args, emit);
  else if (command == "solve")
    status = run_solve(cfg, args, emit);
  else if (command == "simulate")
    status = run_simulate(cfg, args, emit);
  else
    status = run_verify(cfg, args, emit);

  emit.json_file("manifest.json",
                 manifest_json(sha256_hex(text), args.seed, args.threads, command, emit.written));
  return status;
}

int guarded(const std::string& command, const CliArgs& args) {
  auto emit_error = [&](int status, const char* kind, const std::string& what) {
    ordered_json err;
    err["status"] = status;
    err["kind"] = kind;
    err["message"] = what;
    std::cerr << err.dump() << "\n";
    try {
      Emitter emit{fs::path(args.out_dir), {}};
      emit.json_file("error.json", err);
    } catch (...) {
    }
    return status;
  };
  try {
    return dispatch(command, args);
  } catch (const SchemaError& err) {
    return emit_error(2, "schema", err.what());
  } catch (const ApplicabilityError& err) {
    return emit_error(3, "applicability", err.what());
  } catch (const NumericalFault& err) {
    return emit_error(4, "numerical", err.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"branchlab: branching-process laboratory"};
  app.require_subcommand(1);
  CliArgs args;

  std::vector<CLI::App*> subs;
  for (const char* name : {"check", "solve", "simulate", "verify"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", args.config_path, "experiment config (JSON)")->required();
    sub->add_option("--seed", args.seed, "base RNG seed");
    sub->add_option("--threads", args.threads, "worker count");
    sub->add_option("--out", args.out_dir, "output directory");
    subs.push_back(sub);
  }

  CLI11_PARSE(app, argc, argv);
  for (CLI::App* sub : subs)
    if (sub->parsed()) return guarded(sub->get_name(), args);
  return 2;
}
