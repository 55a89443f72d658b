// Command-line front end: k-NN MI, the bound pipeline with BCa intervals,
// ground truth for the simulation models, the replication study and the
// capacity optimizer. Results are printed as JSON lines.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "nubound/nubound.hpp"

using json = nlohmann::json;
using namespace nubound;

namespace {

JointSample load_sample(const std::string& path) {
  if (path == "-") return read_joint_csv(std::cin);
  return read_joint_csv(path);
}

GaussianizingMap make_map(const std::string& name, double mean, double var) {
  if (name == "empirical") return GaussianizingMap::empirical();
  if (name == "normal") return GaussianizingMap::known(normal_law(mean, var));
  if (name == "mixture") {
    const GenModel m = GenModel::mixture(1.0, 1.0);
    return GaussianizingMap::known(mixture_law(m.mu1, m.sigma1_2, m.mu2, m.sigma2_2));
  }
  throw Error(ErrorCode::InvalidArgument, "unknown --x-cdf '" + name + "' (normal, mixture, empirical)");
}

json nats_bits(double nats) { return {{"nats", nats}, {"bits", nats_to_bits(nats)}}; }

json interval_json(const BcaInterval& ci) {
  return {{"level", ci.level},     {"lower", nats_bits(ci.lower)},  {"upper", nats_bits(ci.upper)},
          {"z0", ci.z0},           {"a", ci.a},                     {"replicates", ci.replicates},
          {"invalid_fraction", ci.invalid_fraction}, {"redraws", ci.redraws}, {"degenerate", ci.degenerate}};
}

GenModel model_from_flags(const std::string& model, double beta, double se2, double sx2, int support, double gap,
                          double cond_sd) {
  switch (parse_model_variant(model)) {
    case ModelVariant::BivariateNormal: return GenModel::bivariate_normal(beta, se2, sx2);
    case ModelVariant::Mixture: return GenModel::mixture(beta, se2);
    case ModelVariant::DiscreteInput: return GenModel::discrete_uniform(support, gap, cond_sd);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown model");
}

void print(const json& j) { std::cout << j.dump() << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lower bounds and estimators for mutual information"};
  app.require_subcommand(1);

  // knnmi
  auto* knn_cmd = app.add_subcommand("knnmi", "k-nearest-neighbour MI estimate");
  std::string knn_input;
  KnnConfig knn_cfg;
  knn_cmd->add_option("--input", knn_input, "CSV with header x,z ('-' for stdin)")->required();
  knn_cmd->add_option("--k", knn_cfg.k, "number of neighbours")->capture_default_str();
  knn_cmd->add_option("--jitter", knn_cfg.jitter_scale, "sd of Gaussian jitter for tied data")->capture_default_str();
  knn_cmd->add_option("--seed", knn_cfg.jitter_seed, "jitter seed")->capture_default_str();

  // estimate
  auto* est_cmd = app.add_subcommand("estimate", "bound, BCa interval, k-NN and composite estimates");
  std::string est_input, x_cdf = "empirical";
  double x_mean = 0.0, x_var = 1.0;
  BcaConfig bca;
  int est_k = 3;
  std::string nu_form = "sample";
  est_cmd->add_option("--input", est_input, "CSV with header x,z ('-' for stdin)")->required();
  est_cmd->add_option("--x-cdf", x_cdf, "marginal law of X: normal, mixture or empirical")->capture_default_str();
  est_cmd->add_option("--x-mean", x_mean, "mean for --x-cdf normal")->capture_default_str();
  est_cmd->add_option("--x-var", x_var, "variance for --x-cdf normal")->capture_default_str();
  est_cmd->add_option("--level", bca.level, "interval level")->capture_default_str();
  est_cmd->add_option("--B", bca.replicates, "bootstrap replicates")->capture_default_str();
  est_cmd->add_option("--k", est_k, "k-NN neighbours")->capture_default_str();
  est_cmd->add_option("--seed", bca.seed, "bootstrap seed")->capture_default_str();
  est_cmd->add_option("--nu-form", nu_form, "ratio form: sample, known or residual")->capture_default_str();

  // truth
  auto* truth_cmd = app.add_subcommand("truth", "true I(X;Z) for a simulation model");
  std::string truth_model = "mixture";
  double beta = 1.0, se2 = 1.0, sx2 = 1.0, gap = 2.0, cond_sd = 0.1;
  int support = 2;
  std::size_t draws = 100000;
  std::uint64_t truth_seed = 1;
  truth_cmd->add_option("--model", truth_model, "gaussian, mixture or discrete")->capture_default_str();
  truth_cmd->add_option("--beta", beta)->capture_default_str();
  truth_cmd->add_option("--sigma-eps2", se2)->capture_default_str();
  truth_cmd->add_option("--sigma-x2", sx2, "input variance (gaussian)")->capture_default_str();
  truth_cmd->add_option("--support", support, "support size (discrete demo)")->capture_default_str();
  truth_cmd->add_option("--gap", gap, "support spacing (discrete demo)")->capture_default_str();
  truth_cmd->add_option("--cond-sd", cond_sd, "noise sd (discrete demo)")->capture_default_str();
  truth_cmd->add_option("--M", draws, "Monte Carlo draws")->capture_default_str();
  truth_cmd->add_option("--seed", truth_seed)->capture_default_str();

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "draw a dataset from a simulation model as CSV");
  std::string gen_model = "mixture";
  std::size_t gen_n = 25;
  std::uint64_t gen_seed = 1;
  gen_cmd->add_option("--model", gen_model, "gaussian, mixture or discrete")->capture_default_str();
  gen_cmd->add_option("--beta", beta)->capture_default_str();
  gen_cmd->add_option("--sigma-eps2", se2)->capture_default_str();
  gen_cmd->add_option("--sigma-x2", sx2)->capture_default_str();
  gen_cmd->add_option("--support", support)->capture_default_str();
  gen_cmd->add_option("--gap", gap)->capture_default_str();
  gen_cmd->add_option("--cond-sd", cond_sd)->capture_default_str();
  gen_cmd->add_option("--n", gen_n)->capture_default_str();
  gen_cmd->add_option("--seed", gen_seed)->capture_default_str();

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "replication study from a flat config file");
  std::string config_path, out_dir = "results";
  int workers = 0;
  std::uint64_t sim_seed = 0;
  sim_cmd->add_option("--config", config_path, "key = value study file")->required();
  sim_cmd->add_option("--out", out_dir, "output directory")->capture_default_str();
  auto* workers_opt = sim_cmd->add_option("--workers", workers, "worker threads (overrides config)");
  auto* seed_opt = sim_cmd->add_option("--seed", sim_seed, "root seed (overrides config)");

  // capacity
  auto* cap_cmd = app.add_subcommand("capacity", "maximize the capacity lower bound over Gaussian pseudo-inputs");
  std::string channel = "linear-gaussian";
  std::vector<std::string> params;
  double mean_lo = -1.0, mean_hi = 1.0, var_lo = 0.01, var_hi = 1.0;
  CapacityConfig cap_cfg;
  cap_cmd->add_option("--channel", channel, "linear-gaussian, saturating or input-scaled-noise")->capture_default_str();
  cap_cmd->add_option("--param", params, "channel parameter key=value (repeatable)");
  cap_cmd->add_option("--mean-lo", mean_lo)->capture_default_str();
  cap_cmd->add_option("--mean-hi", mean_hi)->capture_default_str();
  cap_cmd->add_option("--var-lo", var_lo)->capture_default_str();
  cap_cmd->add_option("--var-hi", var_hi, "variance cap on the pseudo-input")->capture_default_str();
  cap_cmd->add_option("--draws", cap_cfg.mc_draws, "Monte Carlo draws per evaluation")->capture_default_str();
  cap_cmd->add_option("--budget", cap_cfg.max_evaluations, "maximum bound evaluations")->capture_default_str();
  cap_cmd->add_option("--seed", cap_cfg.seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*knn_cmd) {
      const auto s = load_sample(knn_input);
      const double mi = knn_mutual_information(s.x, s.z, knn_cfg);
      print({{"command", "knnmi"}, {"n", s.size()}, {"k", knn_cfg.k}, {"mi", nats_bits(mi)}});
    } else if (*est_cmd) {
      const auto s = load_sample(est_input);
      const auto map = make_map(x_cdf, x_mean, x_var);
      PipelineConfig pipe;
      if (nu_form == "sample") pipe.form = NuForm::FittedOverSample;
      else if (nu_form == "known") pipe.form = NuForm::FittedOverKnown;
      else if (nu_form == "residual") pipe.form = NuForm::ResidualOverKnown;
      else throw Error(ErrorCode::InvalidArgument, "unknown --nu-form '" + nu_form + "'");
      KnnConfig kc;
      kc.k = est_k;
      const auto r = composite(s, map, kc, pipe, bca);
      json bound = r.bound.point.valid() ? nats_bits(*r.bound.point.bound_nats) : json(nullptr);
      print({{"command", "estimate"},
             {"n", s.size()},
             {"x_cdf", x_cdf},
             {"nu_hat", r.bound.point.nu_hat},
             {"nu_valid", r.bound.point.valid()},
             {"bound", bound},
             {"lambda", r.bound.point.lambda},
             {"df", r.bound.point.hat_trace},
             {"interval", interval_json(r.bound.interval)},
             {"knn", nats_bits(r.knn_nats)},
             {"composite", nats_bits(r.composite.value)},
             {"source", r.composite.source == CompositeSource::Knn ? "knn" : "ci_lower"},
             {"warning", r.composite.warning}});
    } else if (*truth_cmd) {
      const auto m = model_from_flags(truth_model, beta, se2, sx2, support, gap, cond_sd);
      m.validate();
      Rng rng(truth_seed);
      const auto t = true_mi(m, draws, rng);
      json j{{"command", "truth"},
             {"model", std::string(to_string(m.variant))},
             {"mi", nats_bits(t.mi_nats)},
             {"method", t.method == TruthMethod::ClosedForm ? "closed_form" : "monte_carlo"},
             {"mc_draws", t.mc_draws},
             {"stderr", nats_bits(t.mc_stderr)}};
      if (m.variant == ModelVariant::DiscreteInput) j["note"] = "convergence demo model, not part of the replication study";
      print(j);
    } else if (*gen_cmd) {
      const auto m = model_from_flags(gen_model, beta, se2, sx2, support, gap, cond_sd);
      m.validate();
      Rng rng(gen_seed);
      write_joint_csv(std::cout, generate(m, gen_n, rng));
    } else if (*sim_cmd) {
      StudyConfig cfg = read_study_config(config_path);
      if (*workers_opt) cfg.workers = std::max(1, workers);
      if (*seed_opt) cfg.seed = sim_seed;
      const auto result = run_study(cfg);
      emit_results(result, out_dir);
      int failed = 0;
      for (const auto& r : result.scenarios) failed += r.failed ? 1 : 0;
      for (const auto& r : result.panels) {
        if (r.excluded) std::cerr << "excluded scenario " << r.scenario << " replicate " << r.replicate << ": " << r.message << '\n';
      }
      print({{"command", "simulate"},
             {"out", out_dir},
             {"scenarios", result.scenarios.size()},
             {"replicates", result.panels.size()},
             {"failed_scenarios", failed}});
      return failed == 0 ? 0 : 3;
    } else if (*cap_cmd) {
      channels::Params p;
      for (const auto& kv : params) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "--param expects key=value");
        p[kv.substr(0, eq)] = detail::parse_double(std::string_view(kv).substr(eq + 1));
      }
      const auto ch = channels::make(channel, p);
      const auto r = maximize_capacity_bound(ch, PseudoInputBox::scalar(mean_lo, mean_hi, var_lo, var_hi), cap_cfg);
      print({{"command", "capacity"},
             {"channel", ch.name},
             {"pseudo_mean", r.pseudo.mean[0]},
             {"pseudo_variance", r.pseudo.covariance(0, 0)},
             {"bound", nats_bits(r.evaluation.bound.nats)},
             {"stderr", nats_bits(r.evaluation.stderr_nats)},
             {"escape_fraction", r.evaluation.escape_fraction},
             {"evaluations", r.evaluations},
             {"budget_exhausted", r.budget_exhausted}});
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
