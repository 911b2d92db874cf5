#ifndef ATTRLAB_DIAGNOSTICS_HPP
#define ATTRLAB_DIAGNOSTICS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "attrlab/data.hpp"
#include "attrlab/inference.hpp"
#include "attrlab/model.hpp"

namespace attrlab {

struct PppReport {
  std::string statistic_name;
  double s_d = 0;
  std::vector<double> s_r;  // one entry per replicated data set
  double ppp = 0;
  bool flagged = false;  // ppp < 0.05
};

/// Two-sided posterior predictive probability
///   (2/T) * min(#{s_d > s_r}, #{s_r > s_d});
/// ties count in neither sum.
double ppp_value(double s_d, const std::vector<double>& s_r);

/// Replicated outcome cells for T approximately independent posterior draws.
/// Only observed Y2/Y3 cells are regenerated (conditional on each case's
/// observed predecessors and indicators); everything else in values[l] is
/// bit-identical to the source data.
struct ReplicateSet {
  std::vector<long> draw_indices;
  /// Bitmask per case of the chain variables that were replicated.
  std::vector<std::uint8_t> replicated_mask;
  /// values[l][case][var]: completed replicate l.
  std::vector<std::vector<std::array<std::int8_t, kNumVars>>> values;

  int T() const { return static_cast<int>(values.size()); }
};

ReplicateSet replicate_data(const PosteriorDraws& draws, const PanelDataset& ds,
                            const ModelSpec& spec, int T, std::uint64_t seed);

/// Copy of `ds` with replicate l's regenerated outcome values swapped in.
PanelDataset materialize_replicate(const PanelDataset& ds,
                                   const ReplicateSet& reps, int l);

/// The standard statistic battery: marginal refreshment-sample outcome
/// probabilities, conditional cell probabilities given response patterns,
/// and complete-case regression coefficients of the final outcome on its
/// predecessors, each with its ppp.
std::vector<PppReport> standard_checks(const PosteriorDraws& draws,
                                       const PanelDataset& ds,
                                       const ModelSpec& spec, int T,
                                       std::uint64_t seed);

std::string ppp_report_json(const std::vector<PppReport>& reports);
std::string ppp_report_table(const std::vector<PppReport>& reports);

struct ParamSummary {
  std::string name;
  double mean = 0, sd = 0, q025 = 0, q975 = 0;
  bool fixed = false;
};

struct SensitivityRow {
  double fixed_value = 0;
  std::vector<ParamSummary> summaries;
  std::string odds_gloss;
};

/// One full fit per grid value with `term` frozen in the model for
/// `response`. The gloss reports the implied response-odds ratio
/// exp(main-effect + fixed value) for the interaction's later operand.
std::vector<SensitivityRow> sensitivity_scan(const PanelDataset& ds,
                                             const ModelSpec& spec,
                                             const Term& term, Var response,
                                             const std::vector<double>& grid,
                                             const McmcConfig& cfg);

std::string sensitivity_csv(const std::vector<SensitivityRow>& rows);

struct ConvergenceRow {
  std::string name;
  double rhat = 0;
  double ess = 0;
  /// False when the pooled draws are constant (zero variance).
  bool defined = false;
};

/// Rank-normalized split R-hat and bulk effective sample size. Requires at
/// least two chains and four retained draws per chain.
std::vector<ConvergenceRow> convergence_summary(const PosteriorDraws& draws);

}  // namespace attrlab

#endif
