#include <doctest.h>

#include <array>
#include <cmath>

#include "attrlab/error.hpp"
#include "attrlab/sim.hpp"
#include "test_helpers.hpp"

using namespace attrlab;
using attrlab::testing::bench_two_wave;
using attrlab::testing::sigmoid;

TEST_CASE("generate is bit-deterministic for a fixed seed") {
  const auto gen = bench_two_wave(500, 250, 424242);
  const GeneratedPanel a = generate(gen);
  const GeneratedPanel b = generate(gen);
  REQUIRE(a.data.n_cases() == b.data.n_cases());
  CHECK(a.truth == b.truth);
  for (long i = 0; i < a.data.n_cases(); ++i) {
    CHECK(a.data.cases[i].value == b.data.cases[i].value);
    CHECK(a.data.cases[i].x == b.data.cases[i].x);
  }
}

TEST_CASE("masking is lossless against the retained truth") {
  const auto gen = bench_two_wave(400, 200, 2);
  const GeneratedPanel p = generate(gen);
  for (long i = 0; i < p.data.n_cases(); ++i)
    for (int v = 0; v < 3; ++v) {
      const Var var = static_cast<Var>(v);
      if (p.data.cases[i].observed(var))
        CHECK(p.data.cases[i].val(var) == p.truth[i][v]);
      else
        CHECK((p.truth[i][v] == 0 || p.truth[i][v] == 1));
    }
}

TEST_CASE("benchmark truths give the expected first-wave margin") {
  const auto gen = bench_two_wave(10000, 5000, 99991);
  const GeneratedPanel p = generate(gen);
  const Counts k = counts(p.data);
  CHECK(k.n_p == 10000);
  CHECK(k.n_r1 == 5000);

  double y1_mean = 0;
  long n = 0;
  for (long i = 0; i < p.data.n_cases(); ++i)
    if (p.data.cases[i].cohort == Cohort::Panel) {
      y1_mean += p.data.cases[i].val(Var::Y1);
      ++n;
    }
  y1_mean /= n;
  // Enumeration over x of the inverse logit at the generating values.
  const double expected = 0.5 * sigmoid(0.3) + 0.5 * sigmoid(-0.1);
  CHECK(expected == doctest::Approx(0.5247316646).epsilon(1e-9));
  CHECK(std::abs(y1_mean - expected) < 4.0 * std::sqrt(0.25 / n));
}

TEST_CASE("all-zero coefficients give symmetric margins and attrition") {
  GeneratorConfig gen = bench_two_wave(20000, 0, 5150);
  gen.truth = ParameterVector::zeros(gen.generating_spec);
  const GeneratedPanel p = generate(gen);
  double y1 = 0, w1 = 0;
  for (long i = 0; i < p.data.n_cases(); ++i) {
    y1 += p.truth[i][0];
    w1 += p.truth[i][2];
  }
  const double se = std::sqrt(0.25 / p.data.n_cases());
  CHECK(std::abs(y1 / p.data.n_cases() - 0.5) < 4 * se);
  CHECK(std::abs(w1 / p.data.n_cases() - 0.5) < 4 * se);
}

TEST_CASE("strongly negative selection makes completers unrepresentative") {
  GeneratorConfig gen = bench_two_wave(20000, 0, 860);
  gen.truth.set("w1.y2", -2.5);
  const GeneratedPanel p = generate(gen);
  double full = 0, completers = 0;
  long n_full = 0, n_comp = 0;
  for (long i = 0; i < p.data.n_cases(); ++i) {
    full += p.truth[i][1];
    ++n_full;
    if (p.data.cases[i].val(Var::W1) == 1) {
      completers += p.data.cases[i].val(Var::Y2);
      ++n_comp;
    }
  }
  CHECK(completers / n_comp < full / n_full);
}

TEST_CASE("empirical cell frequencies match the analytic eight-cell joint") {
  const auto gen = bench_two_wave(40000, 0, 1212);
  const GeneratedPanel p = generate(gen);

  // Analytic joint by enumeration over the covariate and the chain.
  auto cellp = [&](int y1, int y2, int w1) {
    double total = 0;
    for (int x = 0; x <= 1; ++x) {
      const double p1 = sigmoid(0.3 - 0.4 * x);
      const double p2 = sigmoid(0.3 - 0.3 * x + 0.7 * y1);
      const double pw = sigmoid(-0.4 + 1.0 * x - 0.7 * y1 + 1.3 * y2);
      total += 0.5 * (y1 ? p1 : 1 - p1) * (y2 ? p2 : 1 - p2) *
               (w1 ? pw : 1 - pw);
    }
    return total;
  };

  std::array<long, 8> freq{};
  for (long i = 0; i < p.data.n_cases(); ++i)
    ++freq[p.truth[i][0] | (p.truth[i][1] << 1) | (p.truth[i][2] << 2)];
  for (int c = 0; c < 8; ++c) {
    const double expect = cellp(c & 1, (c >> 1) & 1, (c >> 2) & 1);
    const double got = static_cast<double>(freq[c]) / p.data.n_cases();
    const double se = std::sqrt(expect * (1 - expect) / p.data.n_cases());
    CHECK(std::abs(got - expect) <= 4 * se);
  }
}

TEST_CASE("three-wave generation respects each variant's mask") {
  for (DesignVariant v :
       {DesignVariant::ThreeMonotoneNoFollow,
        DesignVariant::ThreeReturnersNoFollow,
        DesignVariant::ThreeMonotoneFollow,
        DesignVariant::ThreeReturnersFollow}) {
    ExperimentConfig preset = preset_three_wave(false);
    GeneratorConfig gen = preset.generator;
    gen.design = StudyDesign::make(v);
    gen.generating_spec = default_an_spec(gen.design, {"x"});
    gen.truth = ParameterVector::zeros(gen.generating_spec);
    gen.n_p = 300;
    gen.n_r1 = 150;
    gen.n_r2 = 150;
    const GeneratedPanel p = generate(gen);  // loader validation must pass
    CHECK(counts(p.data).n_r2 == 150);
  }
}

TEST_CASE("experiment config JSON round-trips") {
  const ExperimentConfig cfg = preset_table1(false);
  const std::string text = experiment_json(cfg);
  const ExperimentConfig back = parse_experiment_json(text);
  CHECK(back.replications == cfg.replications);
  CHECK(back.generator.n_p == cfg.generator.n_p);
  CHECK(back.generator.truth.values == cfg.generator.truth.values);
  CHECK(back.fits.size() == cfg.fits.size());
  for (size_t i = 0; i < back.fits.size(); ++i) {
    CHECK(back.fits[i].label == cfg.fits[i].label);
    CHECK(back.fits[i].spec.text() == cfg.fits[i].spec.text());
  }
  CHECK(experiment_json(back) == text);
}

TEST_CASE("single tiny replication yields degenerate coverage") {
  ExperimentConfig cfg = preset_table1(false);
  cfg.replications = 1;
  cfg.generator.n_p = 120;
  cfg.generator.n_r1 = 60;
  cfg.fits.resize(1);  // AN only
  cfg.mcmc.iterations = 400;
  cfg.jobs = 2;
  const auto rows = run_experiment(cfg);
  REQUIRE(!rows.empty());
  for (const auto& r : rows) {
    if (!r.has_truth || r.fixed) continue;
    CHECK((r.coverage_pct == 0.0 || r.coverage_pct == 100.0));
  }
}

TEST_CASE("preset registry resolves every name") {
  for (const char* name :
       {"table1", "table2", "table3", "three-wave", "apyn-like"}) {
    const ExperimentConfig cfg = preset_by_name(name, false);
    CHECK(!cfg.fits.empty());
    for (const auto& f : cfg.fits) CHECK(validate_identified(f.spec).pass);
  }
  CHECK_THROWS_AS(preset_by_name("nope", false), Error);
}
