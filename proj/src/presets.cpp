#include "attrlab/sim.hpp"

#include <algorithm>
#include <initializer_list>
#include <utility>

#include "util.hpp"

namespace attrlab {

namespace {

void set_truth(ParameterVector& t,
               std::initializer_list<std::pair<const char*, double>> kv) {
  for (const auto& [name, value] : kv) t.set(name, value);
}

ModelSpec with_fixed(ModelSpec spec, Var response, const Term& term,
                     double value) {
  ConditionalModel* m = spec.find(response);
  if (std::find(m->terms.begin(), m->terms.end(), term) == m->terms.end())
    m->terms.push_back(term);
  m->fixed[term] = value;
  return spec;
}

/// Two-wave generator at the benchmark truths; shared by several presets.
GeneratorConfig two_wave_generator() {
  GeneratorConfig gen;
  gen.design = StudyDesign::make(DesignVariant::TwoWave);
  gen.covariates = {CovariateLaw::bernoulli("x", 0.5)};
  gen.generating_spec = default_an_spec(gen.design, {"x"});
  gen.truth = ParameterVector::zeros(gen.generating_spec);
  set_truth(gen.truth, {{"y1.1", 0.3},
                        {"y1.x", -0.4},
                        {"y2.1", 0.3},
                        {"y2.x", -0.3},
                        {"y2.y1", 0.7},
                        {"w1.1", -0.4},
                        {"w1.x", 1.0},
                        {"w1.y1", -0.7},
                        {"w1.y2", 1.3}});
  gen.n_p = 10000;
  gen.n_r1 = 5000;
  gen.seed = 20070101;
  return gen;
}

const Term kY1Y2 = Term::interaction(Factor::outcome(Var::Y1),
                                     Factor::outcome(Var::Y2));

}  // namespace

ExperimentConfig preset_table1(bool full_scale) {
  ExperimentConfig cfg;
  cfg.generator = two_wave_generator();
  const ModelSpec an = default_an_spec(cfg.generator.design, {"x"});
  cfg.fits.push_back({"AN", an});
  cfg.fits.push_back(
      {"MAR", with_fixed(an, Var::W1, Term::outcome(Var::Y2), 0.0)});
  cfg.fits.push_back(
      {"HW", with_fixed(an, Var::W1, Term::outcome(Var::Y1), 0.0)});
  cfg.replications = full_scale ? 500 : 100;
  cfg.mcmc.iterations = 10000;
  cfg.mcmc.burn_in_fraction = 0.5;
  cfg.mcmc.seed = 90210;
  return cfg;
}

ExperimentConfig preset_table2(bool full_scale) {
  ExperimentConfig cfg;
  cfg.generator = two_wave_generator();
  cfg.generator.seed = 20070202;
  // Selection with a genuine outcome-outcome interaction.
  ModelSpec gen_spec = cfg.generator.generating_spec;
  gen_spec.find(Var::W1)->terms.push_back(kY1Y2);
  cfg.generator.generating_spec = gen_spec;
  cfg.generator.truth = ParameterVector::zeros(gen_spec);
  set_truth(cfg.generator.truth, {{"y1.1", 0.3},
                                  {"y1.x", -0.4},
                                  {"y2.1", 0.3},
                                  {"y2.x", -0.3},
                                  {"y2.y1", 0.7},
                                  {"w1.1", -0.4},
                                  {"w1.x", 1.0},
                                  {"w1.y1", -0.7},
                                  {"w1.y2", 1.3},
                                  {"w1.y1:y2", 1.0}});

  const ModelSpec an = default_an_spec(cfg.generator.design, {"x"});
  cfg.fits.push_back({"AN", an});
  cfg.fits.push_back({"AN+y1y2", with_fixed(an, Var::W1, kY1Y2, 1.0)});
  cfg.replications = 100;
  cfg.mcmc.iterations = 10000;
  cfg.mcmc.burn_in_fraction = 0.5;
  cfg.mcmc.seed = 90211;
  (void)full_scale;  // the benchmark run is itself 100 replications
  return cfg;
}

ExperimentConfig preset_table3(bool full_scale) {
  ExperimentConfig cfg;
  cfg.generator = two_wave_generator();
  cfg.generator.seed = 20070303;
  cfg.fits.push_back(
      {"AN", default_an_spec(cfg.generator.design, {"x"})});
  cfg.replications = full_scale ? 500 : 100;
  // Longer chain: m=100 imputations must be spaced to near-independence.
  cfg.mcmc.iterations = 30000;
  cfg.mcmc.burn_in_fraction = 0.5;
  cfg.mcmc.seed = 90212;
  return cfg;
}

ExperimentConfig preset_three_wave(bool full_scale) {
  ExperimentConfig cfg;
  GeneratorConfig gen;
  gen.design = StudyDesign::make(DesignVariant::ThreeReturnersNoFollow);
  gen.covariates = {CovariateLaw::bernoulli("x", 0.5)};
  gen.generating_spec = default_an_spec(gen.design, {"x"});
  gen.truth = ParameterVector::zeros(gen.generating_spec);
  set_truth(gen.truth, {{"y1.1", 0.3},    {"y1.x", -0.4},
                        {"y2.1", 0.3},    {"y2.x", -0.3},
                        {"y2.y1", 0.7},   {"w1.1", -0.4},
                        {"w1.x", 1.0},    {"w1.y1", -0.7},
                        {"w1.y2", 1.3},   {"y3.1", 0.2},
                        {"y3.x", -0.3},   {"y3.y1", 0.5},
                        {"y3.y2", 1.0},   {"y3.y1:y2", -0.4},
                        {"y3.w1", 0.6},   {"y3.y1:w1", -0.5},
                        {"w2.1", -0.3},   {"w2.x", 0.5},
                        {"w2.y1", -0.4},  {"w2.y2", 0.5},
                        {"w2.y3", 0.8},   {"w2.y1:y2", -0.3},
                        {"w2.w1", 0.7},   {"w2.y1:w1", -0.4}});
  gen.n_p = full_scale ? 10000 : 4000;
  gen.n_r1 = full_scale ? 5000 : 2000;
  gen.n_r2 = full_scale ? 5000 : 2000;
  gen.seed = 20070404;
  cfg.generator = gen;
  cfg.fits.push_back({"AN", default_an_spec(gen.design, {"x"})});
  cfg.replications = full_scale ? 500 : 100;
  cfg.mcmc.iterations = 10000;
  cfg.mcmc.burn_in_fraction = 0.5;
  cfg.mcmc.seed = 90213;
  return cfg;
}

ExperimentConfig preset_apyn_like(bool full_scale) {
  ExperimentConfig cfg;
  GeneratorConfig gen;
  gen.design = StudyDesign::make(DesignVariant::ThreeReturnersNoFollow);
  gen.covariates = {
      CovariateLaw::bernoulli("age1", 0.28),
      CovariateLaw::bernoulli("age2", 0.32),
      CovariateLaw::bernoulli("age3", 0.25),
      CovariateLaw::bernoulli("male", 0.45),
      CovariateLaw::bernoulli("college", 0.30),
      CovariateLaw::bernoulli("black", 0.08),
  };
  const std::vector<std::string> covs = {"age1", "age2",    "age3",
                                         "male", "college", "black"};
  gen.generating_spec = default_an_spec(gen.design, covs);
  gen.truth = ParameterVector::zeros(gen.generating_spec);
  // Synthetic truths shaped like a one-year election panel: strong interest
  // persistence, education and age gradients, nonignorable wave-3 dropout.
  set_truth(gen.truth, {{"y1.1", -1.60},    {"y1.age1", 0.25},
                        {"y1.age2", 0.75},  {"y1.age3", 1.26},
                        {"y1.male", -0.05}, {"y1.college", 0.11},
                        {"y1.black", 0.75}, {"y2.1", -1.77},
                        {"y2.age1", 0.27},  {"y2.age2", 0.62},
                        {"y2.age3", 0.96},  {"y2.male", -0.02},
                        {"y2.college", 0.53}, {"y2.black", -0.02},
                        {"y2.y1", 2.49},    {"w1.1", 1.64},
                        {"w1.age1", -0.08}, {"w1.age2", 0.24},
                        {"w1.age3", 0.37},  {"w1.male", 0.13},
                        {"w1.college", 0.35}, {"w1.black", -0.54},
                        {"w1.y1", 0.50},    {"w1.y2", -0.58},
                        {"y3.1", 0.04},     {"y3.age1", 0.03},
                        {"y3.age2", 0.15},  {"y3.age3", 0.88},
                        {"y3.male", -0.02}, {"y3.college", 0.57},
                        {"y3.black", 0.11}, {"y3.y1", 1.94},
                        {"y3.y2", 2.03},    {"y3.y1:y2", -0.37},
                        {"y3.w1", -0.42},   {"y3.y1:w1", -0.52},
                        {"w2.1", -1.40},    {"w2.age1", 0.28},
                        {"w2.age2", 0.27},  {"w2.age3", 0.41},
                        {"w2.male", 0.08},  {"w2.college", 0.58},
                        {"w2.black", -0.12}, {"w2.y1", 0.88},
                        {"w2.y2", 0.27},    {"w2.y3", -1.10},
                        {"w2.y1:y2", -0.07}, {"w2.w1", 2.47},
                        {"w2.y1:w1", -0.62}});
  gen.n_p = 2730;
  gen.n_r1 = 691;
  gen.n_r2 = 461;
  gen.seed = 20080101;
  cfg.generator = gen;
  cfg.fits.push_back({"AN", default_an_spec(gen.design, covs)});
  cfg.replications = 1;
  cfg.mcmc.iterations = full_scale ? 200000 : 20000;
  cfg.mcmc.burn_in_fraction = 0.5;
  cfg.mcmc.seed = 90214;
  return cfg;
}

ExperimentConfig preset_by_name(const std::string& name, bool full_scale) {
  const std::string n = lower(trim(name));
  if (n == "table1") return preset_table1(full_scale);
  if (n == "table2") return preset_table2(full_scale);
  if (n == "table3") return preset_table3(full_scale);
  if (n == "three-wave" || n == "three_wave")
    return preset_three_wave(full_scale);
  if (n == "apyn-like" || n == "apyn_like") return preset_apyn_like(full_scale);
  fail(Errc::InvalidArgument, "unknown preset '" + name + "'");
}

}  // namespace attrlab
