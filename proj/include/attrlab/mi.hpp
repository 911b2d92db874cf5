#ifndef ATTRLAB_MI_HPP
#define ATTRLAB_MI_HPP

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "attrlab/data.hpp"
#include "attrlab/inference.hpp"
#include "attrlab/model.hpp"

namespace attrlab {

enum class MIMode { POnly, PPlusR };
const char* mi_mode_name(MIMode m);

struct CompletedCase {
  std::string case_id;
  Cohort cohort = Cohort::Panel;
  std::vector<double> x;
  std::array<std::int8_t, kNumVars> value{};  // fully observed in-design vars
};

/// A completed data set materialized from one posterior draw. POnly holds
/// the panel rows only; PPlusR additionally holds the refreshment rows.
struct CompletedDataset {
  MIMode mode = MIMode::POnly;
  long draw_index = 0;  // row of the PosteriorDraws matrix used
  StudyDesign design;
  std::vector<std::string> covariate_names;
  std::vector<CompletedCase> cases;
};

void save_completed_csv(const CompletedDataset& cd, const std::string& path);

/// Smallest lag at which every parameter's |autocorrelation| (averaged over
/// chains) falls below `threshold`. Constant columns are skipped. Returns
/// the lag; throws AutocorrelationTooHigh when no lag up to max_lag works.
int thinning_interval(const PosteriorDraws& draws, double threshold,
                      int max_lag);

/// Selects m draws spaced by a thinning interval at which all-parameter lag
/// autocorrelation < threshold, then samples every missing cell of every
/// case from its exact full conditional at each selected draw.
std::vector<CompletedDataset> emit_imputations(
    const PosteriorDraws& draws, const PanelDataset& ds, const ModelSpec& spec,
    int m, MIMode mode, std::uint64_t seed, double acf_threshold = 0.1);

struct MlFit {
  std::vector<std::string> names;
  std::vector<double> q;  // coefficient estimates
  std::vector<double> u;  // diagonal of inverse observed information
  int iterations = 0;
  long n_rows = 0;
};

/// Newton-Raphson maximum likelihood for a logistic completed-data analysis.
/// The formula is a ConditionalModel evaluated on the completed records
/// (fixed entries are ignored; all terms are estimated).
MlFit fit_logistic_ml(const CompletedDataset& completed,
                      const ConditionalModel& formula);

struct MIResult {
  int m = 0;
  double q_bar = 0;
  double b_m = 0;
  double u_bar = 0;
  double t_m = 0;
  double nu_m = std::numeric_limits<double>::infinity();
  double nu_br = std::numeric_limits<double>::infinity();
  double ci_lo = 0, ci_hi = 0;  // 95% interval
  /// b_m == 0: degrees of freedom treated as infinite, normal quantile used.
  bool degenerate_between = false;
};

/// Rubin's rules for a scalar estimand; nu_com is the complete-data degrees
/// of freedom for the Barnard-Rubin adjustment (infinite => nu_br = nu_m).
MIResult rubin_combine(const std::vector<double>& q,
                       const std::vector<double>& u,
                       double nu_com = std::numeric_limits<double>::infinity());

std::string mi_result_json(const std::vector<std::string>& names,
                           const std::vector<MIResult>& results);
std::string mi_result_table(const std::vector<std::string>& names,
                            const std::vector<MIResult>& results);

}  // namespace attrlab

#endif
