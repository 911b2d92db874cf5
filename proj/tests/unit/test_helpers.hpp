#ifndef ATTRLAB_TESTS_HELPERS_HPP
#define ATTRLAB_TESTS_HELPERS_HPP

#include <sstream>
#include <string>
#include <vector>

#include "attrlab/data.hpp"
#include "attrlab/model.hpp"
#include "attrlab/sim.hpp"

namespace attrlab::testing {

inline PanelDataset dataset_from_csv(const std::string& csv,
                                     DesignVariant variant) {
  std::istringstream ss(csv);
  return read_dataset(ss, StudyDesign::make(variant), "<test>");
}

/// Table-style two-wave generator truths used across the inference tests.
inline GeneratorConfig bench_two_wave(long n_p, long n_r,
                                      std::uint64_t seed) {
  GeneratorConfig gen;
  gen.design = StudyDesign::make(DesignVariant::TwoWave);
  gen.covariates = {CovariateLaw::bernoulli("x", 0.5)};
  gen.generating_spec = default_an_spec(gen.design, {"x"});
  gen.truth = ParameterVector::zeros(gen.generating_spec);
  gen.truth.set("y1.1", 0.3);
  gen.truth.set("y1.x", -0.4);
  gen.truth.set("y2.1", 0.3);
  gen.truth.set("y2.x", -0.3);
  gen.truth.set("y2.y1", 0.7);
  gen.truth.set("w1.1", -0.4);
  gen.truth.set("w1.x", 1.0);
  gen.truth.set("w1.y1", -0.7);
  gen.truth.set("w1.y2", 1.3);
  gen.n_p = n_p;
  gen.n_r1 = n_r;
  gen.seed = seed;
  return gen;
}

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

}  // namespace attrlab::testing

#endif
