#pragma once

// Monte Carlo replication study: generate data, run the k-NN, ν-bound and
// correlation-bound pipelines, and aggregate bias, rmse, coverage and
// exceedance against the true mutual information.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nubound/estimate.hpp"
#include "nubound/knnmi.hpp"
#include "nubound/models.hpp"
#include "nubound/sample.hpp"

namespace nubound {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kMaxExcludedFraction = 0.10;
inline constexpr double kMiBinWidthBits = 0.5;

struct Scenario {
  GenModel model;
  std::size_t n = 25;
  int replications = 500;
  double level = 0.90;
  int B = 2000;
  int k = 3;
  std::uint64_t seed = 1;
  std::size_t truth_draws = 100000;
};

/// One replicate: all estimates in bits.
struct ReplicateRecord {
  std::size_t scenario = 0;
  int replicate = 0;
  std::string model;
  std::size_t n = 0;
  double beta = kNaN;
  double sigma_eps2 = kNaN;
  double sigma_x2 = kNaN;
  double true_mi_bits = kNaN;
  double nu_hat = kNaN;
  double bound_bits = kNaN;
  double ci_lower_bits = kNaN;
  double ci_upper_bits = kNaN;
  double knn_bits = kNaN;
  double composite_bits = kNaN;
  std::string source;
  double corr_bound_bits = kNaN;
  double corr_lower_bits = kNaN;
  double corr_upper_bits = kNaN;
  double corr_composite_bits = kNaN;
  bool excluded = false;
  std::string message;
};

struct ReplicationReport {
  std::string model;
  std::size_t n = 0;
  double beta = kNaN;
  double sigma_eps2 = kNaN;
  double sigma_x2 = kNaN;
  int replications = 0;
  double level = 0.0;
  int B = 0;
  int k = 0;
  std::uint64_t seed = 0;
  double true_mi_bits = kNaN;
  double truth_stderr_bits = 0.0;
  double mi_bin = kNaN;
  double knn_bias = kNaN;
  double knn_rmse = kNaN;
  double composite_bias = kNaN;
  double composite_rmse = kNaN;
  double corr_composite_bias = kNaN;
  double corr_composite_rmse = kNaN;
  double coverage = kNaN;
  double exceedance = kNaN;
  double invalid_nu_rate = 0.0;
  double excluded_rate = 0.0;
  bool failed = false;
};

namespace detail {

inline double mi_bin(double bits) { return std::floor(bits / kMiBinWidthBits) * kMiBinWidthBits; }

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Results must
/// be written by index so the outcome does not depend on scheduling.
inline void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  const auto w = static_cast<std::size_t>(std::max(1, workers));
  if (w == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(w, count); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace detail

/// True I(X;Z) for a scenario, seeded from the scenario seed.
inline TruthResult scenario_truth(const Scenario& s) {
  Rng rng(derive_seed(s.seed, 0x7275746855ULL));
  return true_mi(s.model, s.truth_draws, rng);
}

/// One replicate of the study. Failures are caught and marked excluded.
///
/// Bivariate normal: X̃ = X/σ_X and the bound is ν(Z|X), with Z regressed on
/// X̃. Mixture: X̃ = Φ⁻¹(F_X(X)) and the bound is ν(X̃|Z), with X̃ regressed on
/// Z, alongside the correlation bound.
inline ReplicateRecord run_replicate(const Scenario& s, double truth_bits, std::size_t scenario_index, int rep) {
  ReplicateRecord r;
  r.scenario = scenario_index;
  r.replicate = rep;
  r.model = std::string(to_string(s.model.variant));
  r.n = s.n;
  r.beta = s.model.beta;
  r.sigma_eps2 = s.model.sigma_eps2;
  r.sigma_x2 = s.model.variant == ModelVariant::BivariateNormal ? s.model.sigma_x2 : kNaN;
  r.true_mi_bits = truth_bits;
  try {
    Rng rng(derive_seed(s.seed, static_cast<std::uint64_t>(rep), 1));
    const JointSample data = generate(s.model, s.n, rng);
    const auto map = GaussianizingMap::known(input_law(s.model));
    const auto xt = map.gaussianize(data.x);

    PipelineConfig pipe;
    BcaConfig bca;
    bca.level = s.level;
    bca.replicates = s.B;
    bca.seed = derive_seed(s.seed, static_cast<std::uint64_t>(rep), 2);

    const bool gaussian = s.model.variant == ModelVariant::BivariateNormal;
    const BoundInterval bound =
        gaussian ? nu_bound_interval_gaussianized(data.z, xt, pipe, bca) : nu_bound_interval_gaussianized(xt, data.z, pipe, bca);
    KnnConfig knn;
    knn.k = s.k;
    const double knn_nats = knn_mutual_information(data.x, data.z, knn);
    const CompositeEstimate comp = combine(knn_nats, bound.interval);

    r.nu_hat = bound.point.nu_hat;
    r.bound_bits = nats_to_bits(bound.point.statistic());
    r.ci_lower_bits = nats_to_bits(bound.interval.lower);
    r.ci_upper_bits = nats_to_bits(bound.interval.upper);
    r.knn_bits = nats_to_bits(knn_nats);
    r.composite_bits = nats_to_bits(comp.value);
    r.source = comp.source == CompositeSource::Knn ? "knn" : "ci_lower";
    if (comp.warning) r.message = "degenerate bootstrap; composite uses knn";

    if (s.model.variant == ModelVariant::Mixture) {
      BcaConfig cb = bca;
      cb.seed = derive_seed(s.seed, static_cast<std::uint64_t>(rep), 3);
      const BoundInterval corr = correlation_bound_interval_gaussianized(xt, data.z, cb);
      const CompositeEstimate cc = combine(knn_nats, corr.interval);
      r.corr_bound_bits = nats_to_bits(corr.point.statistic());
      r.corr_lower_bits = nats_to_bits(corr.interval.lower);
      r.corr_upper_bits = nats_to_bits(corr.interval.upper);
      r.corr_composite_bits = nats_to_bits(cc.value);
    }
  } catch (const std::exception& e) {
    r.excluded = true;
    r.message = detail::sanitize(e.what());
  }
  return r;
}

/// Aggregates replicate records; each record is scored against its own truth.
inline ReplicationReport summarize(const Scenario& s, std::span<const ReplicateRecord> records, double truth_stderr_bits = 0.0) {
  ReplicationReport rep;
  rep.model = std::string(to_string(s.model.variant));
  rep.n = s.n;
  rep.beta = s.model.beta;
  rep.sigma_eps2 = s.model.sigma_eps2;
  rep.sigma_x2 = s.model.variant == ModelVariant::BivariateNormal ? s.model.sigma_x2 : kNaN;
  rep.replications = static_cast<int>(records.size());
  rep.level = s.level;
  rep.B = s.B;
  rep.k = s.k;
  rep.seed = s.seed;
  rep.truth_stderr_bits = truth_stderr_bits;

  std::size_t used = 0, excluded = 0, invalid = 0, covered = 0, exceeded = 0;
  double truth = 0.0, kb = 0.0, kr = 0.0, cb = 0.0, cr = 0.0, ccb = 0.0, ccr = 0.0;
  bool have_corr = false;
  for (const auto& r : records) {
    if (r.excluded) {
      ++excluded;
      ++invalid;
      continue;
    }
    ++used;
    if (!(r.nu_hat > 0.0 && r.nu_hat <= 1.0)) ++invalid;
    truth += r.true_mi_bits;
    const double ek = r.knn_bits - r.true_mi_bits, ec = r.composite_bits - r.true_mi_bits;
    kb += ek;
    kr += ek * ek;
    cb += ec;
    cr += ec * ec;
    if (std::isfinite(r.corr_composite_bits)) {
      have_corr = true;
      const double e = r.corr_composite_bits - r.true_mi_bits;
      ccb += e;
      ccr += e * e;
    }
    if (r.ci_lower_bits <= r.true_mi_bits && r.true_mi_bits <= r.ci_upper_bits) ++covered;
    if (r.true_mi_bits > r.ci_lower_bits) ++exceeded;
  }
  const auto total = static_cast<double>(records.size());
  rep.excluded_rate = total > 0 ? static_cast<double>(excluded) / total : 0.0;
  rep.invalid_nu_rate = total > 0 ? static_cast<double>(invalid) / total : 0.0;
  rep.failed = rep.excluded_rate > kMaxExcludedFraction || used == 0;
  if (used > 0) {
    const auto u = static_cast<double>(used);
    rep.true_mi_bits = truth / u;
    rep.mi_bin = detail::mi_bin(rep.true_mi_bits);
    rep.knn_bias = kb / u;
    rep.knn_rmse = std::sqrt(kr / u);
    rep.composite_bias = cb / u;
    rep.composite_rmse = std::sqrt(cr / u);
    if (have_corr) {
      rep.corr_composite_bias = ccb / u;
      rep.corr_composite_rmse = std::sqrt(ccr / u);
    }
    rep.coverage = static_cast<double>(covered) / u;
    rep.exceedance = static_cast<double>(exceeded) / u;
  }
  return rep;
}

struct ScenarioRun {
  ReplicationReport report;
  std::vector<ReplicateRecord> records;
};

/// Replicates at fixed parameters. Output is identical for any worker count.
inline ScenarioRun run_scenario(const Scenario& s, int workers = 1, std::size_t scenario_index = 0) {
  if (s.replications < 1) throw Error(ErrorCode::InvalidArgument, "replications must be at least 1");
  if (s.model.variant == ModelVariant::DiscreteInput) {
    throw Error(ErrorCode::InvalidArgument, "the discrete demo model has no estimation pipeline");
  }
  s.model.validate();
  const TruthResult truth = scenario_truth(s);
  ScenarioRun run;
  run.records.resize(static_cast<std::size_t>(s.replications));
  detail::parallel_for(run.records.size(), workers, [&](std::size_t i) {
    run.records[i] = run_replicate(s, truth.mi_bits(), scenario_index, static_cast<int>(i));
  });
  run.report = summarize(s, run.records, truth.stderr_bits());
  return run;
}

struct ConvergenceRow {
  double cond_sd = 0.0;
  double nu_output = 0.0;
  double true_mi_bits = 0.0;
  double mc_stderr_bits = 0.0;
  double entropy_bits = 0.0;
  double gap_bits = 0.0;  // H(X) − I(X;Z)
};

/// Discrete-input demo: fixed support, shrinking noise.
inline std::vector<ConvergenceRow> run_convergence_demo(int support_size, double gap, std::span<const double> sd_sequence,
                                                        std::size_t truth_draws, std::uint64_t seed) {
  if (!(gap >= 2.0)) throw Error(ErrorCode::InvalidArgument, "support gap must be at least 2");
  std::vector<ConvergenceRow> rows;
  for (std::size_t i = 0; i < sd_sequence.size(); ++i) {
    const GenModel m = GenModel::discrete_uniform(support_size, gap, sd_sequence[i]);
    Rng rng(derive_seed(seed, i));
    const TruthResult t = true_mi(m, truth_draws, rng);
    ConvergenceRow row;
    row.cond_sd = sd_sequence[i];
    row.nu_output = population_nu_output(m);
    row.true_mi_bits = t.mi_bits();
    row.mc_stderr_bits = t.stderr_bits();
    row.entropy_bits = nats_to_bits(m.input_entropy());
    row.gap_bits = row.entropy_bits - row.true_mi_bits;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Study configuration

struct StudyConfig {
  ModelVariant model = ModelVariant::BivariateNormal;
  std::vector<std::size_t> n{25};
  int replications = 500;
  int B = 2000;
  int k = 3;
  double level = 0.90;
  std::uint64_t seed = 1;
  bool sampling = false;
  int vectors = 60;
  std::vector<double> beta{5.0};
  std::vector<double> sigma_eps2{1.0};
  std::vector<double> sigma_x2{1.0};
  std::size_t truth_draws = 100000;
  int workers = 1;
  bool convergence = false;
  std::vector<double> convergence_sd{1.0, 0.3, 0.1, 0.03, 0.01};
  int convergence_support = 2;
  double convergence_gap = 2.0;
};

namespace detail {

inline std::vector<double> parse_list(std::string_view v) {
  std::vector<double> out;
  while (true) {
    const auto comma = v.find(',');
    out.push_back(parse_double(v.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

inline bool parse_switch(std::string_view v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw Error(ErrorCode::InvalidArgument, "expected on/off, got '" + std::string(v) + "'");
}

inline long long parse_count(std::string_view v, long long min) {
  const double d = parse_double(v);
  if (d != std::floor(d) || d < static_cast<double>(min) || d > 9e15) {
    throw Error(ErrorCode::InvalidArgument, "expected an integer >= " + std::to_string(min) + ", got '" + std::string(v) + "'");
  }
  return static_cast<long long>(d);
}

inline const std::vector<double>& pick(const std::vector<double>& v, std::size_t count) {
  if (v.size() != 1 && v.size() != count) throw Error(ErrorCode::InvalidArgument, "parameter lists differ in length");
  return v;
}

}  // namespace detail

/// Flat `key = value` text; `#` starts a comment. Lists are comma separated.
inline StudyConfig parse_study_config(std::istream& in) {
  StudyConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key(detail::trim(t.substr(0, eq)));
    const auto val = detail::trim(t.substr(eq + 1));
    if (key == "model") {
      c.model = parse_model_variant(val);
    } else if (key == "n") {
      c.n.clear();
      for (double v : detail::parse_list(val)) c.n.push_back(static_cast<std::size_t>(detail::parse_count(detail::format_double(v), 2)));
    } else if (key == "replications") {
      c.replications = static_cast<int>(detail::parse_count(val, 1));
    } else if (key == "B") {
      c.B = static_cast<int>(detail::parse_count(val, 200));
    } else if (key == "k") {
      c.k = static_cast<int>(detail::parse_count(val, 1));
    } else if (key == "level") {
      c.level = detail::parse_double(val);
    } else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(detail::parse_count(val, 0));
    } else if (key == "sampling") {
      c.sampling = detail::parse_switch(val);
    } else if (key == "vectors") {
      c.vectors = static_cast<int>(detail::parse_count(val, 1));
    } else if (key == "beta") {
      c.beta = detail::parse_list(val);
    } else if (key == "sigma_eps2") {
      c.sigma_eps2 = detail::parse_list(val);
    } else if (key == "sigma_x2") {
      c.sigma_x2 = detail::parse_list(val);
    } else if (key == "truth_draws") {
      c.truth_draws = static_cast<std::size_t>(detail::parse_count(val, 10000));
    } else if (key == "workers") {
      c.workers = static_cast<int>(detail::parse_count(val, 1));
    } else if (key == "convergence") {
      c.convergence = detail::parse_switch(val);
    } else if (key == "convergence_sd") {
      c.convergence_sd = detail::parse_list(val);
    } else if (key == "convergence_support") {
      c.convergence_support = static_cast<int>(detail::parse_count(val, 2));
    } else if (key == "convergence_gap") {
      c.convergence_gap = detail::parse_double(val);
    } else {
      throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  if (!(c.level > 0.0 && c.level < 1.0)) throw Error(ErrorCode::InvalidArgument, "level must lie in (0, 1)");
  return c;
}

inline StudyConfig read_study_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return parse_study_config(in);
}

/// Fixed-parameter scenarios: parameter lists are zipped (length-one lists
/// broadcast) and crossed with the sample sizes.
inline std::vector<Scenario> fixed_scenarios(const StudyConfig& c) {
  const std::size_t count = std::max({c.beta.size(), c.sigma_eps2.size(), c.sigma_x2.size()});
  const auto& b = detail::pick(c.beta, count);
  const auto& e = detail::pick(c.sigma_eps2, count);
  const auto& x = detail::pick(c.sigma_x2, count);
  std::vector<Scenario> out;
  for (std::size_t n : c.n) {
    for (std::size_t i = 0; i < count; ++i) {
      Scenario s;
      const double bi = b[b.size() == 1 ? 0 : i], ei = e[e.size() == 1 ? 0 : i], xi = x[x.size() == 1 ? 0 : i];
      switch (c.model) {
        case ModelVariant::BivariateNormal: s.model = GenModel::bivariate_normal(bi, ei, xi); break;
        case ModelVariant::Mixture: s.model = GenModel::mixture(bi, ei); break;
        case ModelVariant::DiscreteInput:
          throw Error(ErrorCode::InvalidArgument, "the discrete demo model has no estimation pipeline");
      }
      s.n = n;
      s.replications = c.replications;
      s.level = c.level;
      s.B = c.B;
      s.k = c.k;
      s.seed = derive_seed(c.seed, out.size());
      s.truth_draws = c.truth_draws;
      out.push_back(s);
    }
  }
  return out;
}

/// One scenario per sampled parameter vector, each with a single replicate.
inline std::vector<Scenario> sampled_scenarios(const StudyConfig& c) {
  if (c.model == ModelVariant::DiscreteInput) {
    throw Error(ErrorCode::InvalidArgument, "the discrete demo model has no estimation pipeline");
  }
  std::vector<Scenario> out;
  for (std::size_t n : c.n) {
    for (int v = 0; v < c.vectors; ++v) {
      Rng rng(derive_seed(c.seed, 0x706172616dULL, static_cast<std::uint64_t>(v)));
      Scenario s;
      s.model = sample_params(c.model, rng);
      s.n = n;
      s.replications = 1;
      s.level = c.level;
      s.B = c.B;
      s.k = c.k;
      s.seed = derive_seed(c.seed, out.size());
      s.truth_draws = c.truth_draws;
      out.push_back(s);
    }
  }
  return out;
}

struct StudyResult {
  std::vector<ReplicationReport> scenarios;
  std::vector<ReplicateRecord> panels;
  std::vector<ConvergenceRow> convergence;
};

/// Runs the configured study. Sampling mode reports one row per sample size
/// and 0.5-bit bin of true MI.
inline StudyResult run_study(const StudyConfig& c) {
  StudyResult out;
  if (c.sampling) {
    const auto scenarios = sampled_scenarios(c);
    std::vector<TruthResult> truths(scenarios.size());
    out.panels.resize(scenarios.size());
    detail::parallel_for(scenarios.size(), c.workers, [&](std::size_t i) {
      truths[i] = scenario_truth(scenarios[i]);
      out.panels[i] = run_replicate(scenarios[i], truths[i].mi_bits(), i, 0);
    });
    std::map<std::pair<std::size_t, double>, std::vector<ReplicateRecord>> bins;
    for (const auto& r : out.panels) bins[{r.n, detail::mi_bin(r.true_mi_bits)}].push_back(r);
    for (const auto& [key, recs] : bins) {
      Scenario s = scenarios.front();
      s.n = key.first;
      s.model.beta = kNaN;
      s.model.sigma_eps2 = kNaN;
      s.model.sigma_x2 = kNaN;
      auto rep = summarize(s, recs);
      rep.mi_bin = key.second;
      rep.seed = c.seed;
      out.scenarios.push_back(rep);
    }
  } else {
    const auto scenarios = fixed_scenarios(c);
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
      auto run = run_scenario(scenarios[i], c.workers, i);
      out.scenarios.push_back(run.report);
      out.panels.insert(out.panels.end(), run.records.begin(), run.records.end());
    }
  }
  if (c.convergence) {
    out.convergence = run_convergence_demo(c.convergence_support, c.convergence_gap, c.convergence_sd, c.truth_draws,
                                           derive_seed(c.seed, 0x636f6e76ULL));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV output

inline const std::vector<std::string>& scenario_columns() {
  static const std::vector<std::string> cols{
      "model",         "n",         "beta",           "sigma_eps2",     "sigma_x2",
      "replications",  "level",     "B",              "k",              "seed",
      "true_mi_bits",  "truth_stderr_bits", "mi_bin", "knn_bias",       "knn_rmse",
      "composite_bias", "composite_rmse", "corr_composite_bias", "corr_composite_rmse", "coverage",
      "exceedance",    "invalid_nu_rate", "excluded_rate", "status"};
  return cols;
}

inline const std::vector<std::string>& panel_columns() {
  static const std::vector<std::string> cols{
      "scenario",       "replicate",      "model",         "n",               "beta",
      "sigma_eps2",     "sigma_x2",       "true_mi_bits",  "nu_hat",          "bound_bits",
      "ci_lower_bits",  "ci_upper_bits",  "knn_bits",      "composite_bits",  "source",
      "corr_bound_bits", "corr_lower_bits", "corr_upper_bits", "corr_composite_bits", "status",
      "message"};
  return cols;
}

inline const std::vector<std::string>& convergence_columns() {
  static const std::vector<std::string> cols{"cond_sd",       "nu_output",    "true_mi_bits",
                                             "mc_stderr_bits", "entropy_bits", "gap_bits"};
  return cols;
}

namespace detail {

inline void write_header(std::ostream& os, const std::vector<std::string>& cols) {
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
}

inline std::string fmt(double v) { return format_double(v); }

inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  while (true) {
    const auto comma = line.find(',');
    out.emplace_back(line.substr(0, comma));
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return out;
}

inline std::vector<std::vector<std::string>> read_table(std::istream& in, const std::vector<std::string>& cols) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Io, "empty table");
  if (split_csv(trim(line)) != cols) throw Error(ErrorCode::Io, "unexpected column header");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty()) continue;
    auto fields = split_csv(t);
    if (fields.size() != cols.size()) throw Error(ErrorCode::Io, "row has the wrong number of fields");
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace detail

inline void write_scenarios_csv(std::ostream& os, std::span<const ReplicationReport> reports) {
  using detail::fmt;
  detail::write_header(os, scenario_columns());
  for (const auto& r : reports) {
    os << r.model << ',' << r.n << ',' << fmt(r.beta) << ',' << fmt(r.sigma_eps2) << ',' << fmt(r.sigma_x2) << ','
       << r.replications << ',' << fmt(r.level) << ',' << r.B << ',' << r.k << ',' << r.seed << ','
       << fmt(r.true_mi_bits) << ',' << fmt(r.truth_stderr_bits) << ',' << fmt(r.mi_bin) << ',' << fmt(r.knn_bias) << ','
       << fmt(r.knn_rmse) << ',' << fmt(r.composite_bias) << ',' << fmt(r.composite_rmse) << ','
       << fmt(r.corr_composite_bias) << ',' << fmt(r.corr_composite_rmse) << ',' << fmt(r.coverage) << ','
       << fmt(r.exceedance) << ',' << fmt(r.invalid_nu_rate) << ',' << fmt(r.excluded_rate) << ','
       << (r.failed ? "failed" : "ok") << '\n';
  }
}

inline std::vector<ReplicationReport> read_scenarios_csv(std::istream& in) {
  using detail::parse_double;
  std::vector<ReplicationReport> out;
  for (const auto& f : detail::read_table(in, scenario_columns())) {
    ReplicationReport r;
    std::size_t i = 0;
    r.model = f[i++];
    r.n = static_cast<std::size_t>(parse_double(f[i++]));
    r.beta = parse_double(f[i++]);
    r.sigma_eps2 = parse_double(f[i++]);
    r.sigma_x2 = parse_double(f[i++]);
    r.replications = static_cast<int>(parse_double(f[i++]));
    r.level = parse_double(f[i++]);
    r.B = static_cast<int>(parse_double(f[i++]));
    r.k = static_cast<int>(parse_double(f[i++]));
    r.seed = std::stoull(f[i++]);
    r.true_mi_bits = parse_double(f[i++]);
    r.truth_stderr_bits = parse_double(f[i++]);
    r.mi_bin = parse_double(f[i++]);
    r.knn_bias = parse_double(f[i++]);
    r.knn_rmse = parse_double(f[i++]);
    r.composite_bias = parse_double(f[i++]);
    r.composite_rmse = parse_double(f[i++]);
    r.corr_composite_bias = parse_double(f[i++]);
    r.corr_composite_rmse = parse_double(f[i++]);
    r.coverage = parse_double(f[i++]);
    r.exceedance = parse_double(f[i++]);
    r.invalid_nu_rate = parse_double(f[i++]);
    r.excluded_rate = parse_double(f[i++]);
    r.failed = f[i++] == "failed";
    out.push_back(r);
  }
  return out;
}

inline void write_panels_csv(std::ostream& os, std::span<const ReplicateRecord> records) {
  using detail::fmt;
  detail::write_header(os, panel_columns());
  for (const auto& r : records) {
    os << r.scenario << ',' << r.replicate << ',' << r.model << ',' << r.n << ',' << fmt(r.beta) << ','
       << fmt(r.sigma_eps2) << ',' << fmt(r.sigma_x2) << ',' << fmt(r.true_mi_bits) << ',' << fmt(r.nu_hat) << ','
       << fmt(r.bound_bits) << ',' << fmt(r.ci_lower_bits) << ',' << fmt(r.ci_upper_bits) << ',' << fmt(r.knn_bits)
       << ',' << fmt(r.composite_bits) << ',' << r.source << ',' << fmt(r.corr_bound_bits) << ','
       << fmt(r.corr_lower_bits) << ',' << fmt(r.corr_upper_bits) << ',' << fmt(r.corr_composite_bits) << ','
       << (r.excluded ? "excluded" : "ok") << ',' << detail::sanitize(r.message) << '\n';
  }
}

inline std::vector<ReplicateRecord> read_panels_csv(std::istream& in) {
  using detail::parse_double;
  std::vector<ReplicateRecord> out;
  for (const auto& f : detail::read_table(in, panel_columns())) {
    ReplicateRecord r;
    std::size_t i = 0;
    r.scenario = static_cast<std::size_t>(parse_double(f[i++]));
    r.replicate = static_cast<int>(parse_double(f[i++]));
    r.model = f[i++];
    r.n = static_cast<std::size_t>(parse_double(f[i++]));
    for (double* p : {&r.beta, &r.sigma_eps2, &r.sigma_x2, &r.true_mi_bits, &r.nu_hat, &r.bound_bits, &r.ci_lower_bits,
                      &r.ci_upper_bits, &r.knn_bits, &r.composite_bits}) {
      *p = parse_double(f[i++]);
    }
    r.source = f[i++];
    for (double* p : {&r.corr_bound_bits, &r.corr_lower_bits, &r.corr_upper_bits, &r.corr_composite_bits}) {
      *p = parse_double(f[i++]);
    }
    r.excluded = f[i++] == "excluded";
    r.message = f[i++];
    out.push_back(r);
  }
  return out;
}

inline void write_convergence_csv(std::ostream& os, std::span<const ConvergenceRow> rows) {
  using detail::fmt;
  detail::write_header(os, convergence_columns());
  for (const auto& r : rows) {
    os << fmt(r.cond_sd) << ',' << fmt(r.nu_output) << ',' << fmt(r.true_mi_bits) << ',' << fmt(r.mc_stderr_bits) << ','
       << fmt(r.entropy_bits) << ',' << fmt(r.gap_bits) << '\n';
  }
}

inline std::vector<ConvergenceRow> read_convergence_csv(std::istream& in) {
  using detail::parse_double;
  std::vector<ConvergenceRow> out;
  for (const auto& f : detail::read_table(in, convergence_columns())) {
    out.push_back({parse_double(f[0]), parse_double(f[1]), parse_double(f[2]), parse_double(f[3]), parse_double(f[4]),
                   parse_double(f[5])});
  }
  return out;
}

/// Writes scenarios.csv, panels.csv and (when present) convergence.csv.
inline void emit_results(const StudyResult& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  const auto write = [&](const char* name, const auto& fn) {
    const auto path = dir / name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string());
    fn(os);
    if (!os) throw Error(ErrorCode::Io, "write failed for " + path.string());
  };
  write("scenarios.csv", [&](std::ostream& os) { write_scenarios_csv(os, r.scenarios); });
  write("panels.csv", [&](std::ostream& os) { write_panels_csv(os, r.panels); });
  if (!r.convergence.empty()) {
    write("convergence.csv", [&](std::ostream& os) { write_convergence_csv(os, r.convergence); });
  }
}

}  // namespace nubound
