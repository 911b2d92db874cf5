#ifndef ATTRLAB_INFERENCE_HPP
#define ATTRLAB_INFERENCE_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "attrlab/data.hpp"
#include "attrlab/model.hpp"
#include "attrlab/rng.hpp"

namespace attrlab {

/// Flat, named coefficient vector with one block per conditional model in
/// the chain. Fixed terms carry their frozen values and are never updated.
struct ParameterVector {
  std::vector<double> values;       // all terms, block-major in chain order
  std::vector<std::string> names;   // "<response>.<term>"
  std::vector<std::uint8_t> free;   // 1 = sampled, 0 = frozen
  std::vector<int> block_offset;    // per chain model, plus end sentinel

  static ParameterVector zeros(const ModelSpec& spec);

  int size() const { return static_cast<int>(values.size()); }
  int n_blocks() const { return static_cast<int>(block_offset.size()) - 1; }
  int block_begin(int b) const { return block_offset[b]; }
  int block_end(int b) const { return block_offset[b + 1]; }

  double get(const std::string& name) const;
  void set(const std::string& name, double v);
  int index_of(const std::string& name) const;  // -1 when absent
};

struct McmcConfig {
  int iterations = 10000;
  double burn_in_fraction = 0.5;
  /// Initial random-walk scale; broadcast to every block unless
  /// proposal_scales overrides per block.
  double proposal_scale = 0.1;
  std::vector<double> proposal_scales;
  bool adapt = true;
  std::uint64_t seed = 0;
  int n_chains = 1;
  double prior_sd = 5.0;
  enum class Init { Zeros, CompleteCaseML } init = Init::Zeros;
  /// Threads for running chains concurrently (each chain stays sequential).
  int jobs = 1;

  int burn_in() const {
    return static_cast<int>(iterations * burn_in_fraction);
  }
  int retained() const { return iterations - burn_in(); }
  void validate() const;
};

struct PosteriorDraws {
  std::vector<std::string> names;
  std::vector<std::uint8_t> free;
  int n_chains = 1;
  int retained_per_chain = 0;
  /// Row-major (rows = n_chains * retained_per_chain, chains concatenated).
  std::vector<double> data;
  std::vector<std::string> block_names;
  /// Post-burn-in acceptance rate per (chain, block), row-major by chain.
  std::vector<double> acceptance;
  McmcConfig config;  // echo, including seed

  long n_rows() const {
    return static_cast<long>(n_chains) * retained_per_chain;
  }
  int n_params() const { return static_cast<int>(names.size()); }
  double at(long row, int col) const { return data[row * names.size() + col]; }
  int column(const std::string& name) const;
  double mean(int col) const;
  double sd(int col) const;
  double quantile(int col, double q) const;
};

void save_draws_csv(const PosteriorDraws& d, const std::string& path);

/// Values for the missing chain cells of each case; entries for observed
/// cells are ignored. -1 marks "not supplied".
struct LatentCompletion {
  std::vector<std::array<std::int8_t, kNumVars>> values;

  static LatentCompletion empty(long n_cases);
};

/// y * eta - log(1 + exp(eta)), overflow-safe.
double bernoulli_loglik(int y, double eta);

/// Log joint of the full chain over every case, using observed values plus
/// the supplied completion for missing cells. Throws IncompleteLatent when a
/// required cell has no value.
double joint_loglik(const PanelDataset& ds, const ModelSpec& spec,
                    const ParameterVector& theta,
                    const LatentCompletion& latent);

/// Analytic score of joint_loglik in the free coefficients (order: free
/// entries of theta in index order).
std::vector<double> loglik_gradient(const PanelDataset& ds,
                                    const ModelSpec& spec,
                                    const ParameterVector& theta,
                                    const LatentCompletion& latent);

/// Exact discrete full conditional over the 2^k completions of one case's
/// missing chain variables. Completion index i encodes vars[j] = (i >> j) & 1.
struct DiscreteConditional {
  std::vector<Var> vars;      // missing chain variables, chain order
  std::vector<double> prob;   // size 2^vars.size(), sums to one

  int draw(double uniform01) const;
};

DiscreteConditional latent_full_conditional(
    const CaseRecord& c, const ModelSpec& spec,
    const std::vector<std::string>& covariate_names,
    const ParameterVector& theta);

/// One exact-conditional draw of every missing cell, each case keyed to its
/// own derived stream so draws are reproducible and order-independent.
LatentCompletion draw_latents(const PanelDataset& ds, const ModelSpec& spec,
                              const ParameterVector& theta,
                              std::uint64_t seed, std::uint64_t salt = 0);

/// Metropolis-within-Gibbs: alternates exact latent draws with per-block
/// random-walk updates of the free coefficients under independent
/// N(0, prior_sd^2) priors. Deterministic given (dataset, spec, config).
PosteriorDraws run_mwg(const PanelDataset& ds, const ModelSpec& spec,
                       const McmcConfig& cfg);

}  // namespace attrlab

#endif
