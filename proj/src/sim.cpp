#include "attrlab/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "engine.hpp"
#include "util.hpp"

namespace attrlab {

using nlohmann::json;

CovariateLaw CovariateLaw::bernoulli(std::string name, double p) {
  CovariateLaw law;
  law.name = std::move(name);
  law.kind = Kind::Bernoulli;
  law.param = p;
  return law;
}

CovariateLaw CovariateLaw::fixed(std::string name, double value) {
  CovariateLaw law;
  law.name = std::move(name);
  law.kind = Kind::Fixed;
  law.param = value;
  return law;
}

namespace {

std::vector<std::string> law_names(const std::vector<CovariateLaw>& laws) {
  std::vector<std::string> names = {"intercept"};
  for (const auto& l : laws) names.push_back(lower(l.name));
  return names;
}

void check_generating_spec(const GeneratorConfig& cfg) {
  const auto& spec = cfg.generating_spec;
  const int n_vars = cfg.design.n_vars();
  if (static_cast<int>(spec.chain.size()) != n_vars)
    fail(Errc::InvalidArgument, "generating spec chain length must match design");
  static constexpr Var order[kNumVars] = {Var::Y1, Var::Y2, Var::W1, Var::Y3,
                                          Var::W2};
  for (int i = 0; i < n_vars; ++i)
    if (spec.chain[i].response != order[i])
      fail(Errc::InvalidArgument, "generating spec must follow chain order");
  const ParameterVector shape = ParameterVector::zeros(spec);
  if (shape.values.size() != cfg.truth.values.size())
    fail(Errc::InvalidArgument,
         "truth vector does not match the generating spec layout");
}

}  // namespace

GeneratedPanel generate(const GeneratorConfig& cfg) {
  check_generating_spec(cfg);
  const auto cov_names = law_names(cfg.covariates);
  const auto cs = detail::compile(cfg.generating_spec, cov_names);
  const int n_vars = cfg.design.n_vars();
  const bool three = cfg.design.three_wave();
  const bool returners = cfg.design.returners();
  const bool follow = cfg.design.follow_up();
  if (three && cfg.n_r2 <= 0)
    fail(Errc::InvalidArgument, "three-wave designs need n_r2 > 0");

  GeneratedPanel out;
  out.data.design = cfg.design;
  out.data.covariate_names = cov_names;
  const long total = cfg.n_p + cfg.n_r1 + (three ? cfg.n_r2 : 0);
  out.data.cases.reserve(total);
  out.truth.reserve(total);

  Rng rng(cfg.seed);
  char idbuf[32];
  for (long i = 0; i < total; ++i) {
    const Cohort cohort = i < cfg.n_p              ? Cohort::Panel
                          : i < cfg.n_p + cfg.n_r1 ? Cohort::R1
                                                   : Cohort::R2;
    CaseRecord rec;
    switch (cohort) {
      case Cohort::Panel:
        std::snprintf(idbuf, sizeof idbuf, "p%06ld", i + 1);
        break;
      case Cohort::R1:
        std::snprintf(idbuf, sizeof idbuf, "r1_%06ld", i - cfg.n_p + 1);
        break;
      case Cohort::R2:
        std::snprintf(idbuf, sizeof idbuf, "r2_%06ld",
                      i - cfg.n_p - cfg.n_r1 + 1);
        break;
    }
    rec.case_id = idbuf;
    rec.cohort = cohort;
    rec.x.resize(cov_names.size());
    rec.x[0] = 1.0;
    for (size_t j = 0; j < cfg.covariates.size(); ++j)
      rec.x[j + 1] = cfg.covariates[j].kind == CovariateLaw::Kind::Bernoulli
                         ? rbernoulli(rng, cfg.covariates[j].param)
                         : cfg.covariates[j].param;

    std::array<std::int8_t, kNumVars> v{};
    for (const auto& m : cs.models) {
      const double eta =
          detail::eta_of(m, cfg.truth.values.data(), rec.x.data(), v.data());
      v[m.response] = static_cast<std::int8_t>(
          rbernoulli(rng, 1.0 / (1.0 + std::exp(-eta))));
    }
    out.truth.push_back(v);

    auto keep = [&](Var var) { rec.value[static_cast<int>(var)] =
                                   v[static_cast<int>(var)]; };
    switch (cohort) {
      case Cohort::Panel:
        keep(Var::Y1);
        keep(Var::W1);
        if (v[static_cast<int>(Var::W1)] == 1) keep(Var::Y2);
        if (three) {
          if (returners) {
            keep(Var::W2);
            if (v[static_cast<int>(Var::W2)] == 1) keep(Var::Y3);
          } else if (v[static_cast<int>(Var::W1)] == 1) {
            keep(Var::W2);
            if (v[static_cast<int>(Var::W2)] == 1) keep(Var::Y3);
          }
        }
        break;
      case Cohort::R1:
        keep(Var::Y2);
        if (three && follow) {
          keep(Var::W2);
          if (v[static_cast<int>(Var::W2)] == 1) keep(Var::Y3);
        }
        break;
      case Cohort::R2:
        keep(Var::Y3);
        break;
    }
    (void)n_vars;
    out.data.cases.push_back(std::move(rec));
  }

  validate_and_classify(out.data);
  return out;
}

namespace {

struct FitSummary {
  std::vector<double> mean, sd, q025, q975;
};

FitSummary summarize(const PosteriorDraws& d) {
  FitSummary s;
  for (int j = 0; j < d.n_params(); ++j) {
    s.mean.push_back(d.mean(j));
    s.sd.push_back(d.sd(j));
    s.q025.push_back(d.quantile(j, 0.025));
    s.q975.push_back(d.quantile(j, 0.975));
  }
  return s;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& body) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

std::vector<ExperimentRow> run_experiment(const ExperimentConfig& cfg) {
  if (cfg.replications < 1)
    fail(Errc::InvalidArgument, "replications must be >= 1");
  if (cfg.fits.empty()) fail(Errc::InvalidArgument, "no fitted specs");
  for (const auto& f : cfg.fits) require_identified(f.spec);

  const int reps = cfg.replications;
  const int n_specs = static_cast<int>(cfg.fits.size());
  std::vector<std::vector<FitSummary>> results(
      reps, std::vector<FitSummary>(n_specs));

  parallel_for(reps, cfg.jobs, [&](int r) {
    GeneratorConfig gen = cfg.generator;
    gen.seed = mix_seed(cfg.generator.seed, static_cast<std::uint64_t>(r) + 1);
    const GeneratedPanel panel = generate(gen);
    for (int s = 0; s < n_specs; ++s) {
      McmcConfig mc = cfg.mcmc;
      mc.seed = mix_seed(cfg.mcmc.seed, static_cast<std::uint64_t>(r) + 1);
      mc.jobs = 1;
      const PosteriorDraws draws = run_mwg(panel.data, cfg.fits[s].spec, mc);
      results[r][s] = summarize(draws);
    }
  });

  // Parameter names per spec (same for every replication).
  std::vector<ExperimentRow> rows;
  for (int s = 0; s < n_specs; ++s) {
    const ParameterVector shape = ParameterVector::zeros(cfg.fits[s].spec);
    for (size_t j = 0; j < shape.names.size(); ++j) {
      ExperimentRow row;
      row.spec_label = cfg.fits[s].label;
      row.parameter = shape.names[j];
      row.fixed = shape.free[j] == 0;
      const int truth_idx = cfg.generator.truth.index_of(shape.names[j]);
      row.has_truth = truth_idx >= 0;
      if (row.has_truth) row.truth = cfg.generator.truth.values[truth_idx];

      double sum_mean = 0, sum_sd = 0;
      long covered = 0;
      for (int r = 0; r < reps; ++r) {
        const FitSummary& fs = results[r][s];
        sum_mean += fs.mean[j];
        sum_sd += fs.sd[j];
        if (row.has_truth && fs.q025[j] <= row.truth &&
            row.truth <= fs.q975[j])
          ++covered;
      }
      row.mean_of_means = sum_mean / reps;
      row.avg_post_sd = sum_sd / reps;
      if (row.has_truth && !row.fixed) {
        const double c = static_cast<double>(covered) / reps;
        row.coverage_pct = 100.0 * c;
        row.coverage_mc_se = 100.0 * std::sqrt(std::max(c * (1 - c), 0.0) /
                                               reps);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string experiment_csv(const std::vector<ExperimentRow>& rows) {
  std::ostringstream ss;
  ss << "spec,parameter,truth,mean,avg_post_sd,coverage95_pct,coverage_mc_se_pct,fixed\n";
  char buf[160];
  for (const auto& r : rows) {
    ss << r.spec_label << ',' << r.parameter << ',';
    if (r.has_truth) ss << r.truth;
    std::snprintf(buf, sizeof buf, ",%.4f,%.4f", r.mean_of_means,
                  r.avg_post_sd);
    ss << buf;
    if (r.has_truth && !r.fixed) {
      std::snprintf(buf, sizeof buf, ",%.1f,%.1f", r.coverage_pct,
                    r.coverage_mc_se);
      ss << buf;
    } else {
      ss << ",,";
    }
    ss << ',' << (r.fixed ? 1 : 0) << '\n';
  }
  return ss.str();
}

std::vector<AuditRow> mi_variance_audit(const ExperimentConfig& cfg, int m,
                                        MIMode mode) {
  if (cfg.generator.design.three_wave())
    fail(Errc::InvalidArgument,
         "the MI variance audit is defined for two-wave designs");
  if (cfg.fits.empty()) fail(Errc::InvalidArgument, "no fitted spec");
  const ModelSpec& fit_spec = cfg.fits[0].spec;
  require_identified(fit_spec);

  // Completed-data analyses: the fitted chain's Y1 and Y2 models.
  std::vector<ConditionalModel> analyses;
  for (const auto& cm : fit_spec.chain)
    if (cm.response == Var::Y1 || cm.response == Var::Y2) {
      ConditionalModel f = cm;
      f.fixed.clear();
      analyses.push_back(std::move(f));
    }

  std::vector<std::string> param_names;
  for (const auto& f : analyses)
    for (const auto& t : f.terms)
      param_names.push_back(std::string(var_name(f.response)) + "." +
                            t.text());
  const int n_params = static_cast<int>(param_names.size());

  const int reps = cfg.replications;
  std::vector<std::vector<double>> qbar(reps), tm(reps);
  std::vector<std::vector<int>> covered(reps);

  parallel_for(reps, cfg.jobs, [&](int r) {
    GeneratorConfig gen = cfg.generator;
    gen.seed = mix_seed(cfg.generator.seed, static_cast<std::uint64_t>(r) + 1);
    const GeneratedPanel panel = generate(gen);

    McmcConfig mc = cfg.mcmc;
    mc.seed = mix_seed(cfg.mcmc.seed, static_cast<std::uint64_t>(r) + 1);
    mc.jobs = 1;
    const PosteriorDraws draws = run_mwg(panel.data, fit_spec, mc);
    const auto completed = emit_imputations(
        draws, panel.data, fit_spec, m, mode,
        mix_seed(cfg.mcmc.seed ^ 0x5afeULL, static_cast<std::uint64_t>(r) + 1));

    std::vector<std::vector<double>> q(n_params), u(n_params);
    long rows_used = 0;
    int p_total = 0;
    for (const auto& f : analyses) p_total += static_cast<int>(f.terms.size());
    for (const auto& cd : completed) {
      int k = 0;
      rows_used = static_cast<long>(cd.cases.size());
      for (const auto& f : analyses) {
        const MlFit fit = fit_logistic_ml(cd, f);
        for (size_t j = 0; j < fit.q.size(); ++j, ++k) {
          q[k].push_back(fit.q[j]);
          u[k].push_back(fit.u[j]);
        }
      }
    }

    qbar[r].resize(n_params);
    tm[r].resize(n_params);
    covered[r].resize(n_params);
    for (int k = 0; k < n_params; ++k) {
      const double nu_com = static_cast<double>(rows_used - p_total);
      const MIResult res = rubin_combine(q[k], u[k], nu_com);
      qbar[r][k] = res.q_bar;
      tm[r][k] = res.t_m;
      const int truth_idx = cfg.generator.truth.index_of(param_names[k]);
      const double truth =
          truth_idx >= 0 ? cfg.generator.truth.values[truth_idx] : 0.0;
      covered[r][k] =
          (res.ci_lo <= truth && truth <= res.ci_hi) ? 1 : 0;
    }
  });

  std::vector<AuditRow> out;
  for (int k = 0; k < n_params; ++k) {
    AuditRow row;
    row.parameter = param_names[k];
    const int truth_idx = cfg.generator.truth.index_of(param_names[k]);
    row.truth = truth_idx >= 0 ? cfg.generator.truth.values[truth_idx] : 0.0;
    std::vector<double> qs(reps), ts(reps);
    long cov = 0;
    for (int r = 0; r < reps; ++r) {
      qs[r] = qbar[r][k];
      ts[r] = tm[r][k];
      cov += covered[r][k];
    }
    row.avg_qbar = mean_of(qs);
    row.var_qbar = sample_variance(qs);
    row.avg_tm = mean_of(ts);
    row.coverage_pct = 100.0 * static_cast<double>(cov) / reps;
    out.push_back(std::move(row));
  }
  return out;
}

std::string audit_csv(const std::vector<AuditRow>& rows) {
  std::ostringstream ss;
  ss << "parameter,truth,avg_qbar,var_qbar,avg_Tm,coverage95_pct\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.4g,%.4f,%.6f,%.6f,%.1f\n",
                  r.parameter.c_str(), r.truth, r.avg_qbar, r.var_qbar,
                  r.avg_tm, r.coverage_pct);
    ss << buf;
  }
  return ss.str();
}

namespace {

json mcmc_to_json(const McmcConfig& m) {
  json j;
  j["iterations"] = m.iterations;
  j["burn_in_fraction"] = m.burn_in_fraction;
  j["proposal_scale"] = m.proposal_scale;
  j["adapt"] = m.adapt;
  j["seed"] = m.seed;
  j["n_chains"] = m.n_chains;
  j["prior_sd"] = m.prior_sd;
  return j;
}

McmcConfig mcmc_from_json(const json& j) {
  McmcConfig m;
  if (j.contains("iterations")) m.iterations = j["iterations"].get<int>();
  if (j.contains("burn_in_fraction"))
    m.burn_in_fraction = j["burn_in_fraction"].get<double>();
  if (j.contains("proposal_scale"))
    m.proposal_scale = j["proposal_scale"].get<double>();
  if (j.contains("adapt")) m.adapt = j["adapt"].get<bool>();
  if (j.contains("seed")) m.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("n_chains")) m.n_chains = j["n_chains"].get<int>();
  if (j.contains("prior_sd")) m.prior_sd = j["prior_sd"].get<double>();
  return m;
}

std::vector<std::string> spec_lines(const ModelSpec& s) {
  std::vector<std::string> out;
  for (const auto& m : s.chain) out.push_back(m.text());
  return out;
}

ModelSpec spec_from_lines(const std::vector<std::string>& lines,
                          const StudyDesign& d) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  return parse_spec(text, d);
}

}  // namespace

std::string experiment_json(const ExperimentConfig& cfg) {
  json j;
  j["design"] = variant_name(cfg.generator.design.variant);
  json gen;
  gen["seed"] = cfg.generator.seed;
  gen["sizes"] = {{"n_p", cfg.generator.n_p},
                  {"n_r1", cfg.generator.n_r1},
                  {"n_r2", cfg.generator.n_r2}};
  json laws = json::array();
  for (const auto& l : cfg.generator.covariates)
    laws.push_back({{"name", l.name},
                    {"law", l.kind == CovariateLaw::Kind::Bernoulli
                                ? "bernoulli"
                                : "fixed"},
                    {"param", l.param}});
  gen["covariates"] = laws;
  gen["spec"] = spec_lines(cfg.generator.generating_spec);
  json truth;
  for (size_t i = 0; i < cfg.generator.truth.names.size(); ++i)
    truth[cfg.generator.truth.names[i]] = cfg.generator.truth.values[i];
  gen["truth"] = truth;
  j["generator"] = gen;

  json fits = json::array();
  for (const auto& f : cfg.fits)
    fits.push_back({{"label", f.label}, {"spec", spec_lines(f.spec)}});
  j["fits"] = fits;
  j["replications"] = cfg.replications;
  j["mcmc"] = mcmc_to_json(cfg.mcmc);
  j["jobs"] = cfg.jobs;
  return j.dump(2) + "\n";
}

ExperimentConfig parse_experiment_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(Errc::MalformedFile, std::string("bad experiment JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    const StudyDesign d =
        StudyDesign::make(parse_variant(j.at("design").get<std::string>()));
    const json& gen = j.at("generator");
    cfg.generator.design = d;
    cfg.generator.seed = gen.value("seed", std::uint64_t{0});
    cfg.generator.n_p = gen.at("sizes").at("n_p").get<long>();
    cfg.generator.n_r1 = gen.at("sizes").at("n_r1").get<long>();
    cfg.generator.n_r2 = gen.at("sizes").value("n_r2", 0L);
    for (const auto& l : gen.at("covariates")) {
      const std::string kind = l.at("law").get<std::string>();
      if (kind == "bernoulli")
        cfg.generator.covariates.push_back(CovariateLaw::bernoulli(
            l.at("name").get<std::string>(), l.at("param").get<double>()));
      else if (kind == "fixed")
        cfg.generator.covariates.push_back(CovariateLaw::fixed(
            l.at("name").get<std::string>(), l.at("param").get<double>()));
      else
        fail(Errc::MalformedFile, "unknown covariate law " + kind);
    }
    cfg.generator.generating_spec =
        spec_from_lines(gen.at("spec").get<std::vector<std::string>>(), d);
    cfg.generator.truth =
        ParameterVector::zeros(cfg.generator.generating_spec);
    for (const auto& [name, value] : gen.at("truth").items())
      cfg.generator.truth.set(name, value.get<double>());

    for (const auto& f : j.at("fits"))
      cfg.fits.push_back(
          {f.at("label").get<std::string>(),
           spec_from_lines(f.at("spec").get<std::vector<std::string>>(), d)});
    cfg.replications = j.value("replications", 100);
    if (j.contains("mcmc")) cfg.mcmc = mcmc_from_json(j["mcmc"]);
    cfg.jobs = j.value("jobs", 1);
  } catch (const json::exception& e) {
    fail(Errc::MalformedFile,
         std::string("bad experiment JSON: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_experiment(const std::string& path) {
  return parse_experiment_json(read_file(path));
}

}  // namespace attrlab
