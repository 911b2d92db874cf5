#include <doctest.h>

#include <cmath>

#include "attrlab/inference.hpp"
#include "attrlab/sim.hpp"
#include "engine.hpp"
#include "test_helpers.hpp"

using namespace attrlab;
using attrlab::testing::bench_two_wave;

TEST_CASE("grouped block log likelihood equals the per-case reference") {
  for (const bool three : {false, true}) {
    GeneratorConfig gen;
    if (three) {
      gen = preset_three_wave(false).generator;
      gen.n_p = 250;
      gen.n_r1 = 120;
      gen.n_r2 = 120;
      gen.seed = 5051;
    } else {
      gen = bench_two_wave(300, 150, 5050);
    }
    const GeneratedPanel panel = generate(gen);
    const ModelSpec spec = default_an_spec(panel.data.design, {"x"});

    ParameterVector theta = ParameterVector::zeros(spec);
    Rng rng(808);
    for (auto& v : theta.values) v = runif(rng, -0.7, 0.7);

    const LatentCompletion lat = draw_latents(panel.data, spec, theta, 99);

    const auto cs = detail::compile(spec, panel.data.covariate_names);
    auto wd = detail::build_working_data(panel.data);
    detail::attach_models(wd, cs);

    std::vector<std::array<std::int8_t, kNumVars>> cur(wd.n);
    for (long i = 0; i < wd.n; ++i) {
      cur[i] = wd.obs[i];
      for (int v = 0; v < wd.n_vars; ++v)
        if (cur[i][v] == kMissing) cur[i][v] = lat.values[i][v];
    }
    detail::ComboTable combo;
    combo.init(wd);
    combo.rebuild(wd, cur);

    double total = 0;
    for (size_t b = 0; b < cs.models.size(); ++b)
      total += combo.block_loglik(wd, cs, static_cast<int>(b),
                                  theta.values.data());
    const double reference = joint_loglik(panel.data, spec, theta, lat);
    CHECK(total == doctest::Approx(reference).epsilon(1e-10));
  }
}

TEST_CASE("class conditionals agree with the public per-case conditional") {
  auto gen = bench_two_wave(200, 100, 6060);
  const GeneratedPanel panel = generate(gen);
  const ModelSpec spec = default_an_spec(panel.data.design, {"x"});
  ParameterVector theta = ParameterVector::zeros(spec);
  Rng rng(11);
  for (auto& v : theta.values) v = runif(rng, -1, 1);

  const auto cs = detail::compile(spec, panel.data.covariate_names);
  auto wd = detail::build_working_data(panel.data);
  detail::attach_models(wd, cs);

  std::vector<double> probs;
  for (const auto& cls : wd.classes) {
    detail::class_conditional(wd, cs, cls, theta.values.data(), probs);
    const long rep = cls.members.front();
    const auto cond = latent_full_conditional(
        panel.data.cases[rep], spec, panel.data.covariate_names, theta);
    REQUIRE(cond.prob.size() == probs.size());
    REQUIRE(cond.vars == cls.vars);
    for (size_t i = 0; i < probs.size(); ++i)
      CHECK(probs[i] == doctest::Approx(cond.prob[i]).epsilon(1e-12));
  }
}
