#ifndef ATTRLAB_SRC_ENGINE_HPP
#define ATTRLAB_SRC_ENGINE_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "attrlab/data.hpp"
#include "attrlab/inference.hpp"
#include "attrlab/model.hpp"

namespace attrlab::detail {

struct CompiledTerm {
  enum class Type : std::uint8_t {
    Intercept,
    Cov,        // x[a]
    Chain,      // v[a]
    ChainChain, // v[a] * v[b]
    CovChain,   // x[a] * v[b]
    CovCov,     // x[a] * x[b]
  };
  Type type = Type::Intercept;
  int a = -1;
  int b = -1;
};

struct CompiledModel {
  int response = 0;  // chain var index
  std::vector<CompiledTerm> terms;
  std::vector<int> pidx;  // global parameter slot per term
  std::uint8_t var_mask = 0;  // chain vars referenced, response included
};

struct CompiledSpec {
  std::vector<CompiledModel> models;
  int n_vars = 3;
  int n_params = 0;
  std::vector<std::string> names;
  std::vector<std::uint8_t> free;
  std::vector<int> block_offset;  // per model, plus end sentinel
};

/// Resolves covariate names to column indices and flattens terms.
CompiledSpec compile(const ModelSpec& spec,
                     const std::vector<std::string>& covariate_names);

/// Compiles a single conditional model as a standalone formula
/// (pidx = 0..p-1), for completed-data analyses.
CompiledModel compile_formula(const ConditionalModel& formula,
                              const std::vector<std::string>& covariate_names);

inline double term_value(const CompiledTerm& t, const double* x,
                         const std::int8_t* v) {
  switch (t.type) {
    case CompiledTerm::Type::Intercept: return 1.0;
    case CompiledTerm::Type::Cov: return x[t.a];
    case CompiledTerm::Type::Chain: return v[t.a];
    case CompiledTerm::Type::ChainChain:
      return static_cast<double>(v[t.a] * v[t.b]);
    case CompiledTerm::Type::CovChain: return x[t.a] * v[t.b];
    case CompiledTerm::Type::CovCov: return x[t.a] * x[t.b];
  }
  return 0.0;
}

inline double eta_of(const CompiledModel& m, const double* theta,
                     const double* x, const std::int8_t* v) {
  double eta = 0.0;
  for (std::size_t t = 0; t < m.terms.size(); ++t)
    eta += theta[m.pidx[t]] * term_value(m.terms[t], x, v);
  return eta;
}

inline double log_sigmoid(double eta) {
  return eta > 0 ? -std::log1p(std::exp(-eta))
                 : eta - std::log1p(std::exp(eta));
}

/// Case-oriented view of a dataset with covariate patterns deduplicated and
/// cases grouped into augmentation classes (same covariate pattern, same
/// observed values, same missing set => identical full conditionals).
struct WorkingData {
  int n_vars = 3;
  long n = 0;
  int n_cov = 1;

  std::vector<int> covpat;         // per case
  long n_covpat = 0;
  std::vector<double> covpat_row;  // n_covpat x n_cov, row-major

  std::vector<std::array<std::int8_t, kNumVars>> obs;  // -1 where missing
  std::vector<std::uint8_t> miss_mask;

  struct AugClass {
    int covpat = 0;
    std::uint8_t miss = 0;
    std::array<std::int8_t, kNumVars> base{};  // observed values, -1 holes
    std::vector<Var> vars;        // missing vars in chain order
    std::vector<int> models;      // models touching any missing var
    std::vector<long> members;
  };
  std::vector<AugClass> classes;

  const double* cov_row(int pat) const { return &covpat_row[pat * n_cov]; }
};

WorkingData build_working_data(const PanelDataset& ds);

/// As above, but cells flagged in extra_missing (bitmask per case) are
/// treated as missing in addition to the genuinely missing ones; their
/// observed values are ignored. Used for posterior-predictive replication.
WorkingData build_working_data(const PanelDataset& ds,
                               const std::vector<std::uint8_t>& extra_missing);

/// Fills class model lists from a compiled spec (depends on the spec's term
/// structure, not its coefficients).
void attach_models(WorkingData& wd, const CompiledSpec& cs);

/// Exact discrete conditional for one augmentation class at theta.
/// probs has size 2^k; completion i sets vars[j] = (i >> j) & 1.
void class_conditional(const WorkingData& wd, const CompiledSpec& cs,
                       const WorkingData::AugClass& cls, const double* theta,
                       std::vector<double>& probs);

/// Per-block log likelihood over the completed data, grouped by
/// (covariate pattern, chain-value combination) counts.
class ComboTable {
 public:
  void init(const WorkingData& wd);
  void rebuild(const WorkingData& wd,
               const std::vector<std::array<std::int8_t, kNumVars>>& cur);
  double block_loglik(const WorkingData& wd, const CompiledSpec& cs,
                      int block, const double* theta) const;

 private:
  bool dense_ = true;
  int n_vars_ = 3;
  int combos_per_pat_ = 8;
  std::vector<std::int32_t> count_;
  std::vector<std::int32_t> touched_;
  // fallback (per-case) path state:
  const std::vector<std::array<std::int8_t, kNumVars>>* cur_ = nullptr;
  const WorkingData* wd_ = nullptr;
};

/// Plain Newton-Raphson logistic ML on a dense design matrix (row-major,
/// n x p). Throws Separation / RankDeficient.
struct NewtonResult {
  std::vector<double> beta;
  std::vector<double> var_diag;  // diag of inverse observed information
  int iterations = 0;
};
NewtonResult logistic_newton(const std::vector<double>& design, long n, int p,
                             const std::vector<std::int8_t>& y,
                             int max_iter = 60, double tol = 1e-10);

}  // namespace attrlab::detail

#endif
