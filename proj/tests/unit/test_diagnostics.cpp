#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "attrlab/diagnostics.hpp"
#include "attrlab/error.hpp"
#include "attrlab/sim.hpp"
#include "test_helpers.hpp"

using namespace attrlab;
using attrlab::testing::bench_two_wave;

namespace {

/// Naive double-loop transliteration of the two-sided probability.
double naive_ppp(double s_d, const std::vector<double>& s_r) {
  int gt = 0;
  for (double s : s_r)
    if (s_d - s > 0) ++gt;
  int lt = 0;
  for (double s : s_r)
    if (s - s_d > 0) ++lt;
  return 2.0 / static_cast<double>(s_r.size()) *
         static_cast<double>(std::min(gt, lt));
}

PosteriorDraws draws_from_chains(const std::vector<std::vector<double>>& chains) {
  PosteriorDraws d;
  d.names = {"a"};
  d.free = {1};
  d.n_chains = static_cast<int>(chains.size());
  d.retained_per_chain = static_cast<int>(chains[0].size());
  for (const auto& c : chains) d.data.insert(d.data.end(), c.begin(), c.end());
  return d;
}

}  // namespace

TEST_CASE("ppp closed-form examples") {
  CHECK(ppp_value(2.5, {1, 2, 3, 4}) == doctest::Approx(1.0));
  CHECK(ppp_value(5.0, {1, 2, 3, 4}) == doctest::Approx(0.0));
  // Ties count in neither sum.
  CHECK(ppp_value(1.0, {1, 1, 1}) == doctest::Approx(0.0));
}

TEST_CASE("ppp equals the naive double-loop evaluation") {
  Rng rng(13);
  for (int trial = 0; trial < 300; ++trial) {
    const int t = 1 + static_cast<int>(runif(rng) * 40);
    std::vector<double> s_r(t);
    for (auto& s : s_r)
      s = runif(rng) < 0.2 ? 0.5 : runif(rng);  // inject ties sometimes
    const double s_d = runif(rng) < 0.3 ? 0.5 : runif(rng);
    const double p = ppp_value(s_d, s_r);
    CHECK(p == naive_ppp(s_d, s_r));
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    // Invariance under a strictly increasing transform.
    std::vector<double> s_r2 = s_r;
    for (auto& s : s_r2) s = std::exp(2.0 * s);
    CHECK(ppp_value(std::exp(2.0 * s_d), s_r2) == p);
  }
}

TEST_CASE("ppp is uniform-ish when replicates straddle the observed value") {
  Rng rng(29);
  const int trials = 400, t = 99;
  double sum = 0.0;
  for (int i = 0; i < trials; ++i) {
    const double s_d = rnorm(rng);
    std::vector<double> s_r(t);
    for (auto& s : s_r) s = s_d + rnorm(rng);
    sum += ppp_value(s_d, s_r);
  }
  const double mean = sum / trials;
  const double se = std::sqrt(1.0 / 12.0 / trials);
  CHECK(std::abs(mean - 0.5) <= 3 * se);
}

TEST_CASE("replicate_data touches only observed outcome cells") {
  auto gen = bench_two_wave(300, 150, 51);
  const GeneratedPanel panel = generate(gen);
  const ModelSpec spec = default_an_spec(panel.data.design, {"x"});
  McmcConfig cfg;
  cfg.iterations = 400;
  cfg.seed = 9;
  const PosteriorDraws draws = run_mwg(panel.data, spec, cfg);
  const ReplicateSet reps = replicate_data(draws, panel.data, spec, 7, 1234);
  REQUIRE(reps.T() == 7);

  for (int l = 0; l < reps.T(); ++l) {
    const PanelDataset repl = materialize_replicate(panel.data, reps, l);
    for (long i = 0; i < panel.data.n_cases(); ++i) {
      const CaseRecord& orig = panel.data.cases[i];
      const CaseRecord& got = repl.cases[i];
      CHECK(got.case_id == orig.case_id);
      CHECK(got.x == orig.x);
      for (int v = 0; v < 3; ++v) {
        const Var var = static_cast<Var>(v);
        if (reps.replicated_mask[i] & (1u << v)) {
          CHECK(orig.observed(var));
          CHECK((got.val(var) == 0 || got.val(var) == 1));
        } else {
          CHECK(got.val(var) == orig.val(var));  // bit-identical
        }
      }
    }
  }

  // Y2 is replicated exactly for complete panel cases and R1 cases.
  for (long i = 0; i < panel.data.n_cases(); ++i) {
    const CaseRecord& c = panel.data.cases[i];
    const bool expect = c.observed(Var::Y2);
    CHECK(((reps.replicated_mask[i] &
            (1u << static_cast<int>(Var::Y2))) != 0) == expect);
  }
}

TEST_CASE("a degenerate always-one model replicates only ones") {
  auto gen = bench_two_wave(120, 60, 87);
  const GeneratedPanel panel = generate(gen);
  const ModelSpec spec = default_an_spec(panel.data.design, {"x"});
  // Hand-build a one-row draws matrix pinned at extreme intercepts.
  ParameterVector theta = ParameterVector::zeros(spec);
  theta.set("y2.1", 60.0);
  PosteriorDraws draws;
  draws.names = theta.names;
  draws.free = theta.free;
  draws.n_chains = 1;
  draws.retained_per_chain = 1;
  draws.data = theta.values;

  const ReplicateSet reps = replicate_data(draws, panel.data, spec, 1, 5);
  for (long i = 0; i < panel.data.n_cases(); ++i)
    if (reps.replicated_mask[i] & (1u << static_cast<int>(Var::Y2)))
      CHECK(reps.values[0][i][static_cast<int>(Var::Y2)] == 1);
}

TEST_CASE("standard checks on a well-fitting model do not flag") {
  auto gen = bench_two_wave(3000, 1500, 4242);
  const GeneratedPanel panel = generate(gen);
  const ModelSpec spec = default_an_spec(panel.data.design, {"x"});
  McmcConfig cfg;
  cfg.iterations = 4000;
  cfg.seed = 31;
  const PosteriorDraws draws = run_mwg(panel.data, spec, cfg);
  const auto reports = standard_checks(draws, panel.data, spec, 200, 777);
  REQUIRE(!reports.empty());

  // The refreshment-sample marginal is present and its replicated values
  // bracket the observed one under a correctly specified model.
  const auto it = std::find_if(reports.begin(), reports.end(),
                               [](const PppReport& r) {
                                 return r.statistic_name == "Pr(y2=0) in R1";
                               });
  REQUIRE(it != reports.end());
  CHECK(*std::min_element(it->s_r.begin(), it->s_r.end()) <= it->s_d);
  CHECK(*std::max_element(it->s_r.begin(), it->s_r.end()) >= it->s_d);
  for (const auto& r : reports) CHECK(r.ppp >= 0.05);
}

TEST_CASE("a mis-fixed lag coefficient trips the regression check") {
  auto gen = bench_two_wave(4000, 2000, 999);
  const GeneratedPanel panel = generate(gen);
  ModelSpec spec = default_an_spec(panel.data.design, {"x"});
  spec.find(Var::Y2)->fixed[Term::outcome(Var::Y1)] = 0.0;  // truth is 0.7
  McmcConfig cfg;
  cfg.iterations = 4000;
  cfg.seed = 32;
  const PosteriorDraws draws = run_mwg(panel.data, spec, cfg);
  const auto reports = standard_checks(draws, panel.data, spec, 200, 778);
  const auto it = std::find_if(reports.begin(), reports.end(),
                               [](const PppReport& r) {
                                 return r.statistic_name ==
                                        "cc coef y2 ~ y1";
                               });
  REQUIRE(it != reports.end());
  CHECK(it->ppp < 0.05);
  CHECK(it->flagged);
}

TEST_CASE("sensitivity at zero reproduces the plain fit") {
  auto gen = bench_two_wave(500, 250, 2023);
  const GeneratedPanel panel = generate(gen);
  const ModelSpec an = default_an_spec(panel.data.design, {"x"});
  McmcConfig cfg;
  cfg.iterations = 600;
  cfg.seed = 44;

  const PosteriorDraws plain = run_mwg(panel.data, an, cfg);
  const Term y1y2 = Term::interaction(Factor::outcome(Var::Y1),
                                      Factor::outcome(Var::Y2));
  const auto rows =
      sensitivity_scan(panel.data, an, y1y2, Var::W1, {0.0}, cfg);
  REQUIRE(rows.size() == 1);
  for (const auto& s : rows[0].summaries) {
    if (s.fixed) continue;
    const int col = plain.column(s.name);
    CHECK(s.mean == doctest::Approx(plain.mean(col)).epsilon(1e-12));
  }
  CHECK(rows[0].odds_gloss.find("exp(") != std::string::npos);
}

TEST_CASE("sensitivity at the generating interaction recovers the truth") {
  auto gen = bench_two_wave(4000, 2000, 31415);
  ModelSpec gspec = gen.generating_spec;
  const Term y1y2 = Term::interaction(Factor::outcome(Var::Y1),
                                      Factor::outcome(Var::Y2));
  gspec.find(Var::W1)->terms.push_back(y1y2);
  gen.generating_spec = gspec;
  ParameterVector truth = ParameterVector::zeros(gspec);
  for (const auto& name : gen.truth.names)
    truth.set(name, gen.truth.get(name));
  truth.set("w1.y1:y2", 1.0);
  gen.truth = truth;
  const GeneratedPanel panel = generate(gen);

  const ModelSpec an = default_an_spec(panel.data.design, {"x"});
  McmcConfig cfg;
  cfg.iterations = 5000;
  cfg.seed = 46;
  const auto rows =
      sensitivity_scan(panel.data, an, y1y2, Var::W1, {1.0}, cfg);
  REQUIRE(rows.size() == 1);
  for (const auto& s : rows[0].summaries) {
    if (s.fixed) continue;
    const double t = truth.get(s.name);
    CHECK(std::abs(s.mean - t) <= 3.0 * s.sd + 1e-9);
  }
}

TEST_CASE("convergence summary: constant, mixed, and split chains") {
  // Two identical constant chains: undefined.
  {
    const auto rows = convergence_summary(
        draws_from_chains({std::vector<double>(50, 1.0),
                           std::vector<double>(50, 1.0)}));
    REQUIRE(rows.size() == 1);
    CHECK(!rows[0].defined);
  }
  // Well-mixed independent chains: R-hat close to one, healthy ESS.
  {
    Rng rng(6);
    std::vector<std::vector<double>> chains(4, std::vector<double>(2000));
    for (auto& c : chains)
      for (auto& v : c) v = rnorm(rng);
    const auto rows = convergence_summary(draws_from_chains(chains));
    REQUIRE(rows[0].defined);
    CHECK(rows[0].rhat < 1.01);
    CHECK(rows[0].ess > 1000.0);
  }
  // Disjoint modes: R-hat far above one.
  {
    Rng rng(7);
    std::vector<std::vector<double>> chains(2, std::vector<double>(500));
    for (size_t c = 0; c < 2; ++c)
      for (auto& v : chains[c]) v = rnorm(rng) + (c == 0 ? 0.0 : 10.0);
    const auto rows = convergence_summary(draws_from_chains(chains));
    CHECK(rows[0].rhat > 1.2);
  }
  // One chain is not enough.
  {
    try {
      convergence_summary(draws_from_chains({std::vector<double>(50, 0.5)}));
      FAIL("expected TooFewDraws");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::TooFewDraws);
    }
  }
}
