#ifndef ATTRLAB_SIM_HPP
#define ATTRLAB_SIM_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "attrlab/data.hpp"
#include "attrlab/inference.hpp"
#include "attrlab/mi.hpp"
#include "attrlab/model.hpp"

namespace attrlab {

struct CovariateLaw {
  std::string name;
  enum class Kind { Bernoulli, Fixed } kind = Kind::Bernoulli;
  double param = 0.5;  // p for Bernoulli, the value for Fixed

  static CovariateLaw bernoulli(std::string name, double p);
  static CovariateLaw fixed(std::string name, double value);
};

/// The generating spec may be richer than any fittable spec (e.g. include
/// the outcome-outcome selection interaction).
struct GeneratorConfig {
  StudyDesign design;
  ModelSpec generating_spec;
  ParameterVector truth;
  std::vector<CovariateLaw> covariates;
  long n_p = 0, n_r1 = 0, n_r2 = 0;
  std::uint64_t seed = 0;
};

struct GeneratedPanel {
  PanelDataset data;  // masked per the design's observation pattern
  /// Pre-mask complete chain draws, per case in data.cases order.
  std::vector<std::array<std::int8_t, kNumVars>> truth;
};

/// Draws covariates, then the full chain for every case, then applies the
/// design's observation mask. Bit-deterministic given the seed.
GeneratedPanel generate(const GeneratorConfig& cfg);

struct FittedSpecConfig {
  std::string label;
  ModelSpec spec;
};

struct ExperimentConfig {
  GeneratorConfig generator;
  std::vector<FittedSpecConfig> fits;
  int replications = 100;
  McmcConfig mcmc;
  int jobs = 1;
};

struct ExperimentRow {
  std::string spec_label;
  std::string parameter;
  double truth = 0;
  bool has_truth = false;
  bool fixed = false;
  double mean_of_means = 0;
  double avg_post_sd = 0;
  double coverage_pct = 0;   // 95% central interval coverage
  double coverage_mc_se = 0; // sqrt(c(1-c)/reps), in percent
};

/// Per (spec, parameter): mean of posterior means, average posterior sd,
/// and 95%-interval coverage with its Monte Carlo standard error.
std::vector<ExperimentRow> run_experiment(const ExperimentConfig& cfg);

std::string experiment_csv(const std::vector<ExperimentRow>& rows);

struct AuditRow {
  std::string parameter;
  double truth = 0;
  double avg_qbar = 0;
  double var_qbar = 0;  // empirical variance across replications
  double avg_tm = 0;
  double coverage_pct = 0;
};

/// P-only multiple-imputation variance audit: per parameter of the
/// completed-data analyses (the fitted chain's Y1 and Y2 models), the
/// average point estimate, its empirical variance across replications, the
/// average Rubin variance, and 95% coverage.
std::vector<AuditRow> mi_variance_audit(const ExperimentConfig& cfg, int m,
                                        MIMode mode);

std::string audit_csv(const std::vector<AuditRow>& rows);

/// Experiment configuration serialization (JSON).
ExperimentConfig parse_experiment_json(const std::string& text);
std::string experiment_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment(const std::string& path);

/// Built-in experiment presets; desk scale unless full_scale is set.
ExperimentConfig preset_table1(bool full_scale = false);
ExperimentConfig preset_table2(bool full_scale = false);
ExperimentConfig preset_table3(bool full_scale = false);
/// Synthetic three-wave returners design shaped like the election-poll
/// application (sizes 2730/691/461, six binary demographics).
ExperimentConfig preset_apyn_like(bool full_scale = false);
/// Moderate three-wave returners design used by the diagnostics
/// calibration runs.
ExperimentConfig preset_three_wave(bool full_scale = false);

ExperimentConfig preset_by_name(const std::string& name,
                                bool full_scale = false);

}  // namespace attrlab

#endif
