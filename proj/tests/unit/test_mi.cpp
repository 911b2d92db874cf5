#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "attrlab/error.hpp"
#include "attrlab/mi.hpp"
#include "attrlab/sim.hpp"
#include "test_helpers.hpp"

using namespace attrlab;
using attrlab::testing::bench_two_wave;
using attrlab::testing::dataset_from_csv;

namespace {

/// Hand evaluation of the combining rules, independent of the library.
void hand_rubin(const std::vector<double>& q, const std::vector<double>& u,
                double& qbar, double& bm, double& ubar, double& tm,
                double& num) {
  const int m = static_cast<int>(q.size());
  qbar = 0;
  for (double v : q) qbar += v;
  qbar /= m;
  bm = 0;
  for (double v : q) bm += (v - qbar) * (v - qbar);
  bm /= (m - 1);
  ubar = 0;
  for (double v : u) ubar += v;
  ubar /= m;
  tm = (1.0 + 1.0 / m) * bm + ubar;
  num = (m - 1) * std::pow(1.0 + ubar / ((1.0 + 1.0 / m) * bm), 2.0);
}

PosteriorDraws synthetic_draws(const std::vector<double>& series) {
  PosteriorDraws d;
  d.names = {"a"};
  d.free = {1};
  d.n_chains = 1;
  d.retained_per_chain = static_cast<int>(series.size());
  d.data = series;
  return d;
}

}  // namespace

TEST_CASE("rubin_combine: degenerate between-variance") {
  const MIResult r = rubin_combine({1, 1, 1}, {4, 4, 4});
  CHECK(r.q_bar == 1.0);
  CHECK(r.b_m == 0.0);
  CHECK(r.t_m == 4.0);
  CHECK(r.degenerate_between);
  CHECK(std::isinf(r.nu_m));
  // Normal-quantile interval.
  CHECK(r.ci_lo == doctest::Approx(1.0 - 1.959963984540054 * 2.0).epsilon(1e-9));
}

TEST_CASE("rubin_combine: hand-evaluated two-imputation example") {
  const MIResult r = rubin_combine({0, 2}, {1, 1});
  CHECK(r.q_bar == doctest::Approx(1.0));
  CHECK(r.b_m == doctest::Approx(2.0));
  CHECK(r.t_m == doctest::Approx(4.0));
  CHECK(r.nu_m == doctest::Approx(16.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("rubin_combine matches the hand formulas on random inputs") {
  Rng rng(2718);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 2 + static_cast<int>(runif(rng) * 30);
    std::vector<double> q(m), u(m);
    for (int i = 0; i < m; ++i) {
      q[i] = runif(rng, -3, 3);
      u[i] = runif(rng, 0.01, 2.0);
    }
    double qbar, bm, ubar, tm, num;
    hand_rubin(q, u, qbar, bm, ubar, tm, num);
    const MIResult r = rubin_combine(q, u);
    CHECK(r.q_bar == doctest::Approx(qbar).epsilon(1e-12));
    CHECK(r.b_m == doctest::Approx(bm).epsilon(1e-12));
    CHECK(r.u_bar == doctest::Approx(ubar).epsilon(1e-12));
    CHECK(r.t_m == doctest::Approx(tm).epsilon(1e-12));
    CHECK(r.nu_m == doctest::Approx(num).epsilon(1e-12));
    // T_m >= u_bar always.
    CHECK(r.t_m >= r.u_bar);
    // Permutation invariance.
    std::vector<double> q2 = q, u2 = u;
    std::vector<int> perm(m);
    for (int i = 0; i < m; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), std::mt19937(trial));
    for (int i = 0; i < m; ++i) {
      q2[i] = q[perm[i]];
      u2[i] = u[perm[i]];
    }
    const MIResult r2 = rubin_combine(q2, u2);
    CHECK(r2.t_m == doctest::Approx(r.t_m).epsilon(1e-12));
    CHECK(r2.nu_m == doctest::Approx(r.nu_m).epsilon(1e-12));
  }
}

TEST_CASE("nu_m grows with u_bar/b_m and Barnard-Rubin never exceeds it") {
  double prev = 0.0;
  for (double ub : {0.5, 1.0, 2.0, 4.0}) {
    const MIResult r = rubin_combine({0, 1, 2}, {ub, ub, ub});
    CHECK(r.nu_m > prev);
    prev = r.nu_m;
    const MIResult br = rubin_combine({0, 1, 2}, {ub, ub, ub}, 50.0);
    CHECK(br.nu_br <= br.nu_m);
    CHECK(br.nu_br > 0.0);
  }
}

TEST_CASE("intercept-only ML fit on a balanced outcome is near zero") {
  CompletedDataset cd;
  cd.design = StudyDesign::make(DesignVariant::TwoWave);
  cd.covariate_names = {"intercept"};
  for (int i = 0; i < 100; ++i) {
    CompletedCase c;
    c.case_id = "c" + std::to_string(i);
    c.cohort = Cohort::Panel;
    c.x = {1.0};
    c.value = {1, static_cast<std::int8_t>(i % 2), 1, 0, 0};
    cd.cases.push_back(std::move(c));
  }
  ConditionalModel formula;
  formula.response = Var::Y2;
  formula.terms = {Term::intercept()};
  const MlFit fit = fit_logistic_ml(cd, formula);
  CHECK(std::abs(fit.q[0]) < 1e-8);
  CHECK(fit.u[0] == doctest::Approx(4.0 / 100.0).epsilon(1e-6));
}

TEST_CASE("ML fit on completed benchmark data recovers the lag coefficient") {
  auto gen = bench_two_wave(8000, 0, 1001);
  gen.truth.set("w1.1", 30.0);
  gen.truth.set("w1.y1", 0.0);
  gen.truth.set("w1.y2", 0.0);
  const GeneratedPanel panel = generate(gen);

  CompletedDataset cd;
  cd.design = panel.data.design;
  cd.covariate_names = panel.data.covariate_names;
  for (const auto& c : panel.data.cases) {
    CompletedCase cc;
    cc.case_id = c.case_id;
    cc.cohort = c.cohort;
    cc.x = c.x;
    cc.value = c.value;
    cd.cases.push_back(std::move(cc));
  }
  ConditionalModel formula;
  formula.response = Var::Y2;
  formula.terms = {Term::intercept(), Term::covariate("x"),
                   Term::outcome(Var::Y1)};
  const MlFit fit = fit_logistic_ml(cd, formula);
  CHECK(std::abs(fit.q[2] - 0.7) < 0.15);
}

TEST_CASE("perfectly separated data raises Separation") {
  CompletedDataset cd;
  cd.design = StudyDesign::make(DesignVariant::TwoWave);
  cd.covariate_names = {"intercept", "x"};
  for (int i = 0; i < 40; ++i) {
    CompletedCase c;
    c.case_id = "c" + std::to_string(i);
    c.cohort = Cohort::Panel;
    const int x = i % 2;
    c.x = {1.0, static_cast<double>(x)};
    c.value = {1, static_cast<std::int8_t>(x), 1, 0, 0};
    cd.cases.push_back(std::move(c));
  }
  ConditionalModel formula;
  formula.response = Var::Y2;
  formula.terms = {Term::intercept(), Term::covariate("x")};
  try {
    fit_logistic_ml(cd, formula);
    FAIL("expected Separation");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Separation);
  }
}

TEST_CASE("rank-deficient design raises RankDeficient") {
  CompletedDataset cd;
  cd.design = StudyDesign::make(DesignVariant::TwoWave);
  cd.covariate_names = {"intercept", "x"};
  for (int i = 0; i < 40; ++i) {
    CompletedCase c;
    c.case_id = "c" + std::to_string(i);
    c.cohort = Cohort::Panel;
    c.x = {1.0, 1.0};  // duplicate of the intercept
    c.value = {1, static_cast<std::int8_t>(i % 2), 1, 0, 0};
    cd.cases.push_back(std::move(c));
  }
  ConditionalModel formula;
  formula.response = Var::Y2;
  formula.terms = {Term::intercept(), Term::covariate("x")};
  try {
    fit_logistic_ml(cd, formula);
    FAIL("expected RankDeficient");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::RankDeficient);
  }
}

TEST_CASE("thinning interval on synthetic chains") {
  // Near-iid noise thins at lag one.
  std::vector<double> iid(4000);
  Rng rng(5);
  for (auto& v : iid) v = rnorm(rng);
  CHECK(thinning_interval(synthetic_draws(iid), 0.1, 100) == 1);

  // A strongly autocorrelated AR(1) needs a longer interval, and a tight
  // max_lag makes the requirement unattainable.
  std::vector<double> ar(4000);
  double state = 0;
  for (auto& v : ar) {
    state = 0.95 * state + rnorm(rng);
    v = state;
  }
  const int t = thinning_interval(synthetic_draws(ar), 0.1, 400);
  CHECK(t > 5);
  CHECK_THROWS_AS(thinning_interval(synthetic_draws(ar), 0.1, 2), Error);
}

TEST_CASE("emit_imputations: completed copies and mode row counts") {
  auto gen = bench_two_wave(400, 200, 321);
  const GeneratedPanel panel = generate(gen);
  const ModelSpec spec = default_an_spec(panel.data.design, {"x"});
  McmcConfig cfg;
  cfg.iterations = 3000;
  cfg.seed = 99;
  const PosteriorDraws draws = run_mwg(panel.data, spec, cfg);

  const auto ponly =
      emit_imputations(draws, panel.data, spec, 5, MIMode::POnly, 7);
  REQUIRE(ponly.size() == 5);
  const Counts k = counts(panel.data);
  for (const auto& cd : ponly) {
    CHECK(static_cast<long>(cd.cases.size()) == k.n_p);
    for (const auto& c : cd.cases) {
      CHECK(c.cohort == Cohort::Panel);
      for (int v = 0; v < 3; ++v) CHECK((c.value[v] == 0 || c.value[v] == 1));
    }
  }

  const auto ppr =
      emit_imputations(draws, panel.data, spec, 5, MIMode::PPlusR, 7);
  for (const auto& cd : ppr)
    CHECK(static_cast<long>(cd.cases.size()) == k.n_p + k.n_r1);

  // Same draw, same seed: the panel rows agree across modes.
  for (size_t l = 0; l < ponly.size(); ++l) {
    CHECK(ponly[l].draw_index == ppr[l].draw_index);
    for (size_t i = 0; i < ponly[l].cases.size(); ++i) {
      CHECK(ponly[l].cases[i].case_id == ppr[l].cases[i].case_id);
      CHECK(ponly[l].cases[i].value == ppr[l].cases[i].value);
    }
  }
}

TEST_CASE("emit_imputations on complete data yields identical copies") {
  auto gen = bench_two_wave(200, 0, 17);
  gen.truth.set("w1.1", 30.0);
  const GeneratedPanel panel = generate(gen);
  const ModelSpec spec = default_an_spec(panel.data.design, {"x"});
  McmcConfig cfg;
  cfg.iterations = 200;
  cfg.seed = 3;
  const PosteriorDraws draws = run_mwg(panel.data, spec, cfg);
  const auto sets =
      emit_imputations(draws, panel.data, spec, 2, MIMode::POnly, 5);
  REQUIRE(sets.size() == 2);
  for (size_t i = 0; i < sets[0].cases.size(); ++i) {
    CHECK(sets[0].cases[i].value == sets[1].cases[i].value);
    CHECK(sets[0].cases[i].value == panel.data.cases[i].value);
  }

  // Combining identical completed-data fits flags the degenerate case.
  ConditionalModel formula;
  formula.response = Var::Y1;
  formula.terms = {Term::intercept(), Term::covariate("x")};
  std::vector<double> q, u;
  for (const auto& cd : sets) {
    const MlFit fit = fit_logistic_ml(cd, formula);
    q.push_back(fit.q[1]);
    u.push_back(fit.u[1]);
  }
  const MIResult r = rubin_combine(q, u);
  CHECK(r.degenerate_between);
  CHECK(r.t_m == doctest::Approx(r.u_bar));
}

TEST_CASE("emit_imputations error paths") {
  auto gen = bench_two_wave(100, 50, 23);
  const GeneratedPanel panel = generate(gen);
  const ModelSpec spec = default_an_spec(panel.data.design, {"x"});
  McmcConfig cfg;
  cfg.iterations = 20;
  cfg.seed = 1;
  const PosteriorDraws draws = run_mwg(panel.data, spec, cfg);
  try {
    emit_imputations(draws, panel.data, spec, 200, MIMode::POnly, 1);
    FAIL("expected InsufficientDraws");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InsufficientDraws);
  }
}
