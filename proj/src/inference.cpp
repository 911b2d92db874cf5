#include "attrlab/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "engine.hpp"
#include "util.hpp"

namespace attrlab {

using detail::CompiledSpec;
using detail::ComboTable;
using detail::WorkingData;

ParameterVector ParameterVector::zeros(const ModelSpec& spec) {
  ParameterVector p;
  for (const auto& m : spec.chain) {
    p.block_offset.push_back(static_cast<int>(p.values.size()));
    for (const auto& t : m.terms) {
      p.names.push_back(std::string(var_name(m.response)) + "." + t.text());
      auto it = m.fixed.find(t);
      p.values.push_back(it == m.fixed.end() ? 0.0 : it->second);
      p.free.push_back(it == m.fixed.end() ? 1 : 0);
    }
  }
  p.block_offset.push_back(static_cast<int>(p.values.size()));
  return p;
}

int ParameterVector::index_of(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

double ParameterVector::get(const std::string& name) const {
  const int i = index_of(name);
  if (i < 0) fail(Errc::InvalidArgument, "no parameter named " + name);
  return values[i];
}

void ParameterVector::set(const std::string& name, double v) {
  const int i = index_of(name);
  if (i < 0) fail(Errc::InvalidArgument, "no parameter named " + name);
  values[i] = v;
}

void McmcConfig::validate() const {
  if (iterations < 2)
    fail(Errc::InvalidArgument, "iterations must be at least 2");
  if (burn_in_fraction < 0.0 || burn_in_fraction >= 1.0)
    fail(Errc::InvalidArgument, "burn_in_fraction must be in [0, 1)");
  if (proposal_scale <= 0.0)
    fail(Errc::InvalidArgument, "proposal_scale must be positive");
  for (double s : proposal_scales)
    if (s <= 0.0)
      fail(Errc::InvalidArgument, "proposal scales must be positive");
  if (n_chains < 1) fail(Errc::InvalidArgument, "n_chains must be >= 1");
  if (prior_sd <= 0.0) fail(Errc::InvalidArgument, "prior_sd must be positive");
  if (retained() < 1)
    fail(Errc::InvalidArgument, "no retained iterations after burn-in");
}

int PosteriorDraws::column(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  fail(Errc::InvalidArgument, "no parameter named " + name);
}

double PosteriorDraws::mean(int col) const {
  double s = 0;
  const long rows = n_rows();
  for (long r = 0; r < rows; ++r) s += at(r, col);
  return rows > 0 ? s / static_cast<double>(rows) : 0.0;
}

double PosteriorDraws::sd(int col) const {
  const long rows = n_rows();
  if (rows < 2) return 0.0;
  const double m = mean(col);
  double s = 0;
  for (long r = 0; r < rows; ++r) {
    const double d = at(r, col) - m;
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(rows - 1));
}

double PosteriorDraws::quantile(int col, double q) const {
  std::vector<double> v(n_rows());
  for (long r = 0; r < n_rows(); ++r) v[r] = at(r, col);
  return quantile_of(std::move(v), q);
}

void save_draws_csv(const PosteriorDraws& d, const std::string& path) {
  std::ostringstream ss;
  ss << "chain";
  for (const auto& n : d.names) ss << ',' << n;
  ss << '\n';
  char buf[32];
  for (int c = 0; c < d.n_chains; ++c) {
    for (int r = 0; r < d.retained_per_chain; ++r) {
      const long row = static_cast<long>(c) * d.retained_per_chain + r;
      ss << c;
      for (int j = 0; j < d.n_params(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", d.at(row, j));
        ss << ',' << buf;
      }
      ss << '\n';
    }
  }
  write_file_atomic(path, ss.str());
}

LatentCompletion LatentCompletion::empty(long n_cases) {
  LatentCompletion lc;
  lc.values.assign(n_cases, {kMissing, kMissing, kMissing, kMissing, kMissing});
  return lc;
}

double bernoulli_loglik(int y, double eta) {
  return y ? detail::log_sigmoid(eta) : detail::log_sigmoid(-eta);
}

namespace {

/// Observed values with latent values merged in for missing cells.
std::array<std::int8_t, kNumVars> completed_values(
    const CaseRecord& c, int n_vars,
    const std::array<std::int8_t, kNumVars>* latent, long case_index) {
  std::array<std::int8_t, kNumVars> v{};
  for (int j = 0; j < n_vars; ++j) {
    const Var var = static_cast<Var>(j);
    if (c.observed(var)) {
      v[j] = c.val(var);
    } else if (c.missing_cell(var)) {
      const std::int8_t lv = latent ? (*latent)[j] : kMissing;
      if (lv != 0 && lv != 1)
        fail(Errc::IncompleteLatent,
             "case '" + c.case_id + "' (index " + std::to_string(case_index) +
                 "): no latent value for " + var_name(var));
      v[j] = lv;
    }
  }
  return v;
}

}  // namespace

double joint_loglik(const PanelDataset& ds, const ModelSpec& spec,
                    const ParameterVector& theta,
                    const LatentCompletion& latent) {
  const CompiledSpec cs = detail::compile(spec, ds.covariate_names);
  const int n_vars = spec.design.n_vars();
  double ll = 0.0;
  for (long i = 0; i < ds.n_cases(); ++i) {
    const CaseRecord& c = ds.cases[i];
    const auto v = completed_values(
        c, n_vars, latent.values.empty() ? nullptr : &latent.values[i], i);
    for (const auto& m : cs.models) {
      const double eta = detail::eta_of(m, theta.values.data(), c.x.data(),
                                        v.data());
      ll += bernoulli_loglik(v[m.response], eta);
    }
  }
  return ll;
}

std::vector<double> loglik_gradient(const PanelDataset& ds,
                                    const ModelSpec& spec,
                                    const ParameterVector& theta,
                                    const LatentCompletion& latent) {
  const CompiledSpec cs = detail::compile(spec, ds.covariate_names);
  const int n_vars = spec.design.n_vars();
  std::vector<int> free_pos(cs.n_params, -1);
  int n_free = 0;
  for (int j = 0; j < cs.n_params; ++j)
    if (cs.free[j]) free_pos[j] = n_free++;
  std::vector<double> grad(n_free, 0.0);

  for (long i = 0; i < ds.n_cases(); ++i) {
    const CaseRecord& c = ds.cases[i];
    const auto v = completed_values(
        c, n_vars, latent.values.empty() ? nullptr : &latent.values[i], i);
    for (const auto& m : cs.models) {
      const double eta = detail::eta_of(m, theta.values.data(), c.x.data(),
                                        v.data());
      const double pi = 1.0 / (1.0 + std::exp(-eta));
      const double resid = static_cast<double>(v[m.response]) - pi;
      for (size_t t = 0; t < m.terms.size(); ++t) {
        const int fp = free_pos[m.pidx[t]];
        if (fp >= 0)
          grad[fp] += resid * detail::term_value(m.terms[t], c.x.data(),
                                                 v.data());
      }
    }
  }
  return grad;
}

int DiscreteConditional::draw(double uniform01) const {
  double acc = 0.0;
  const int n = static_cast<int>(prob.size());
  for (int i = 0; i < n; ++i) {
    acc += prob[i];
    if (uniform01 < acc) return i;
  }
  return n - 1;
}

DiscreteConditional latent_full_conditional(
    const CaseRecord& c, const ModelSpec& spec,
    const std::vector<std::string>& covariate_names,
    const ParameterVector& theta) {
  const CompiledSpec cs = detail::compile(spec, covariate_names);
  const int n_vars = spec.design.n_vars();

  DiscreteConditional out;
  for (int j = 0; j < n_vars; ++j)
    if (c.missing_cell(static_cast<Var>(j)))
      out.vars.push_back(static_cast<Var>(j));
  const int k = static_cast<int>(out.vars.size());
  const int ncomp = 1 << k;
  out.prob.assign(ncomp, 0.0);

  std::array<std::int8_t, kNumVars> v{};
  for (int j = 0; j < n_vars; ++j)
    v[j] = c.observed(static_cast<Var>(j)) ? c.val(static_cast<Var>(j))
                                           : std::int8_t{0};
  double maxlog = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < ncomp; ++i) {
    for (int j = 0; j < k; ++j)
      v[static_cast<int>(out.vars[j])] = static_cast<std::int8_t>((i >> j) & 1);
    double ll = 0.0;
    for (const auto& m : cs.models) {
      const double eta =
          detail::eta_of(m, theta.values.data(), c.x.data(), v.data());
      ll += bernoulli_loglik(v[m.response], eta);
    }
    out.prob[i] = ll;
    maxlog = std::max(maxlog, ll);
  }
  if (!std::isfinite(maxlog))
    fail(Errc::ZeroMass, "case '" + c.case_id +
                             "': every latent completion has zero mass");
  double total = 0.0;
  for (double& p : out.prob) {
    p = std::exp(p - maxlog);
    total += p;
  }
  for (double& p : out.prob) p /= total;
  return out;
}

LatentCompletion draw_latents(const PanelDataset& ds, const ModelSpec& spec,
                              const ParameterVector& theta, std::uint64_t seed,
                              std::uint64_t salt) {
  LatentCompletion lc = LatentCompletion::empty(ds.n_cases());
  const CompiledSpec cs = detail::compile(spec, ds.covariate_names);
  const int n_vars = spec.design.n_vars();
  std::vector<Var> vars;
  std::vector<double> logp;
  std::array<std::int8_t, kNumVars> v{};

  for (long i = 0; i < ds.n_cases(); ++i) {
    const CaseRecord& c = ds.cases[i];
    vars.clear();
    for (int j = 0; j < n_vars; ++j) {
      const Var var = static_cast<Var>(j);
      v[j] = c.observed(var) ? c.val(var) : std::int8_t{0};
      if (c.missing_cell(var)) vars.push_back(var);
    }
    if (vars.empty()) continue;

    const int k = static_cast<int>(vars.size());
    const int ncomp = 1 << k;
    logp.assign(ncomp, 0.0);
    double maxlog = -std::numeric_limits<double>::infinity();
    for (int comp = 0; comp < ncomp; ++comp) {
      for (int j = 0; j < k; ++j)
        v[static_cast<int>(vars[j])] =
            static_cast<std::int8_t>((comp >> j) & 1);
      double ll = 0.0;
      for (const auto& m : cs.models) {
        const double eta =
            detail::eta_of(m, theta.values.data(), c.x.data(), v.data());
        ll += bernoulli_loglik(v[m.response], eta);
      }
      logp[comp] = ll;
      maxlog = std::max(maxlog, ll);
    }
    if (!std::isfinite(maxlog))
      fail(Errc::ZeroMass, "case '" + c.case_id +
                               "': every latent completion has zero mass");
    double total = 0.0;
    for (double& p : logp) {
      p = std::exp(p - maxlog);
      total += p;
    }
    SplitStream stream(seed, salt, static_cast<std::uint64_t>(i));
    const double u = stream.uniform() * total;
    double acc = 0.0;
    int pick = ncomp - 1;
    for (int comp = 0; comp < ncomp; ++comp) {
      acc += logp[comp];
      if (u < acc) {
        pick = comp;
        break;
      }
    }
    for (int j = 0; j < k; ++j)
      lc.values[i][static_cast<int>(vars[j])] =
          static_cast<std::int8_t>((pick >> j) & 1);
  }
  return lc;
}

namespace {

struct ChainResult {
  std::vector<double> acceptance;  // per block
};

void complete_case_ml_init(const PanelDataset& ds, const CompiledSpec& cs,
                           std::vector<double>& theta) {
  const int n_vars = cs.n_vars;
  for (size_t b = 0; b < cs.models.size(); ++b) {
    const auto& m = cs.models[b];
    const int p = static_cast<int>(m.terms.size());
    std::vector<double> design;
    std::vector<std::int8_t> y;
    for (const auto& c : ds.cases) {
      bool usable = true;
      for (int j = 0; j < n_vars && usable; ++j)
        if ((m.var_mask >> j) & 1) usable = c.observed(static_cast<Var>(j));
      if (!usable) continue;
      std::array<std::int8_t, kNumVars> v{};
      for (int j = 0; j < n_vars; ++j)
        v[j] = c.observed(static_cast<Var>(j)) ? c.val(static_cast<Var>(j))
                                               : std::int8_t{0};
      for (const auto& t : m.terms)
        design.push_back(detail::term_value(t, c.x.data(), v.data()));
      y.push_back(v[m.response]);
    }
    if (static_cast<long>(y.size()) < 5L * p) continue;
    try {
      auto fit = detail::logistic_newton(design, static_cast<long>(y.size()),
                                         p, y);
      for (int t = 0; t < p; ++t)
        if (cs.free[m.pidx[t]]) theta[m.pidx[t]] = fit.beta[t];
    } catch (const Error&) {
      // keep zeros for this block
    }
  }
}

void run_chain(const WorkingData& wd_in, const CompiledSpec& cs,
               const McmcConfig& cfg, const std::vector<double>& theta0,
               std::uint64_t chain_seed, double* out_rows,
               ChainResult& result) {
  WorkingData wd = wd_in;  // class draw state is per chain
  Rng rng(chain_seed);
  std::vector<double> theta = theta0;
  const int n_blocks = static_cast<int>(cs.models.size());
  const int n_params = cs.n_params;
  const double prior_var = cfg.prior_sd * cfg.prior_sd;

  std::vector<std::array<std::int8_t, kNumVars>> cur(wd.n);
  for (long i = 0; i < wd.n; ++i) {
    cur[i] = wd.obs[i];
    for (int j = 0; j < wd.n_vars; ++j)
      if (cur[i][j] == kMissing) cur[i][j] = 0;
  }

  std::vector<double> probs, cdf;
  auto draw_all_latents = [&]() {
    for (const auto& cls : wd.classes) {
      detail::class_conditional(wd, cs, cls, theta.data(), probs);
      cdf.resize(probs.size());
      double acc = 0.0;
      for (size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        cdf[i] = acc;
      }
      const int k = static_cast<int>(cls.vars.size());
      for (long idx : cls.members) {
        const double u = runif(rng);
        int pick = static_cast<int>(
            std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        if (pick >= static_cast<int>(cdf.size()))
          pick = static_cast<int>(cdf.size()) - 1;
        for (int j = 0; j < k; ++j)
          cur[idx][static_cast<int>(cls.vars[j])] =
              static_cast<std::int8_t>((pick >> j) & 1);
      }
    }
  };

  draw_all_latents();
  ComboTable combo;
  combo.init(wd);
  combo.rebuild(wd, cur);

  {
    double total = 0.0;
    for (int b = 0; b < n_blocks; ++b)
      total += combo.block_loglik(wd, cs, b, theta.data());
    if (!std::isfinite(total))
      fail(Errc::NonFinitePosterior,
           "log likelihood is not finite at the initial state");
  }

  std::vector<std::vector<int>> free_idx(n_blocks);
  for (int b = 0; b < n_blocks; ++b)
    for (int j = cs.block_offset[b]; j < cs.block_offset[b + 1]; ++j)
      if (cs.free[j]) free_idx[b].push_back(j);

  std::vector<double> log_scale(n_blocks);
  for (int b = 0; b < n_blocks; ++b) {
    const double s0 = cfg.proposal_scales.empty()
                          ? cfg.proposal_scale
                          : cfg.proposal_scales[b % cfg.proposal_scales.size()];
    log_scale[b] = std::log(s0);
  }

  const int burn = cfg.burn_in();
  constexpr int kAdaptWindow = 50;
  constexpr double kTargetRate = 0.3;
  std::vector<int> win_accept(n_blocks, 0), win_count(n_blocks, 0);
  std::vector<int> windows_done(n_blocks, 0);
  std::vector<long> post_accept(n_blocks, 0), post_total(n_blocks, 0);
  std::vector<double> prop = theta;

  auto block_logprior = [&](const std::vector<double>& th, int b) {
    double lp = 0.0;
    for (int j : free_idx[b]) lp -= 0.5 * th[j] * th[j] / prior_var;
    return lp;
  };

  int row = 0;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    draw_all_latents();
    combo.rebuild(wd, cur);

    for (int b = 0; b < n_blocks; ++b) {
      if (free_idx[b].empty()) continue;
      const double cur_ll = combo.block_loglik(wd, cs, b, theta.data());
      if (!std::isfinite(cur_ll))
        fail(Errc::NonFinitePosterior, "log likelihood became non-finite");
      const double scale = std::exp(log_scale[b]);
      for (int j : free_idx[b]) prop[j] = theta[j] + scale * rnorm(rng);
      const double new_ll = combo.block_loglik(wd, cs, b, prop.data());
      const double log_ratio = (new_ll + block_logprior(prop, b)) -
                               (cur_ll + block_logprior(theta, b));
      const double u = runif(rng);
      const bool accept =
          std::isfinite(new_ll) && std::log(std::max(u, 1e-300)) < log_ratio;
      if (accept) {
        for (int j : free_idx[b]) theta[j] = prop[j];
      } else {
        for (int j : free_idx[b]) prop[j] = theta[j];
      }

      if (iter < burn) {
        if (cfg.adapt) {
          win_accept[b] += accept ? 1 : 0;
          if (++win_count[b] == kAdaptWindow) {
            const double rate =
                static_cast<double>(win_accept[b]) / kAdaptWindow;
            ++windows_done[b];
            log_scale[b] +=
                (rate - kTargetRate) / std::sqrt(double(windows_done[b]));
            log_scale[b] = std::clamp(log_scale[b], std::log(1e-4),
                                      std::log(10.0));
            win_accept[b] = 0;
            win_count[b] = 0;
          }
        }
      } else {
        post_accept[b] += accept ? 1 : 0;
        ++post_total[b];
      }
    }

    if (iter >= burn) {
      double* dst = out_rows + static_cast<long>(row) * n_params;
      std::copy(theta.begin(), theta.end(), dst);
      ++row;
    }
  }

  result.acceptance.resize(n_blocks);
  for (int b = 0; b < n_blocks; ++b)
    result.acceptance[b] =
        post_total[b] > 0
            ? static_cast<double>(post_accept[b]) / post_total[b]
            : 0.0;
}

}  // namespace

PosteriorDraws run_mwg(const PanelDataset& ds, const ModelSpec& spec,
                       const McmcConfig& cfg) {
  cfg.validate();
  require_identified(spec);
  const CompiledSpec cs = detail::compile(spec, ds.covariate_names);
  WorkingData wd = detail::build_working_data(ds);
  detail::attach_models(wd, cs);

  ParameterVector theta0 = ParameterVector::zeros(spec);
  if (cfg.init == McmcConfig::Init::CompleteCaseML)
    complete_case_ml_init(ds, cs, theta0.values);

  PosteriorDraws out;
  out.names = cs.names;
  out.free = cs.free;
  out.n_chains = cfg.n_chains;
  out.retained_per_chain = cfg.retained();
  out.config = cfg;
  for (const auto& m : cs.models)
    out.block_names.push_back(var_name(static_cast<Var>(m.response)));
  out.data.assign(out.n_rows() * static_cast<long>(cs.n_params), 0.0);
  out.acceptance.assign(
      static_cast<size_t>(cfg.n_chains) * cs.models.size(), 0.0);

  std::vector<ChainResult> results(cfg.n_chains);
  auto run_one = [&](int c) {
    run_chain(wd, cs, cfg, theta0.values,
              cfg.seed + static_cast<std::uint64_t>(c),
              out.data.data() +
                  static_cast<long>(c) * out.retained_per_chain * cs.n_params,
              results[c]);
  };

  const int jobs = std::max(1, std::min(cfg.jobs, cfg.n_chains));
  if (jobs == 1 || cfg.n_chains == 1) {
    for (int c = 0; c < cfg.n_chains; ++c) run_one(c);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int t = 0; t < jobs; ++t)
      pool.emplace_back([&]() {
        for (;;) {
          const int c = next.fetch_add(1);
          if (c >= cfg.n_chains) return;
          try {
            run_one(c);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  for (int c = 0; c < cfg.n_chains; ++c)
    for (size_t b = 0; b < cs.models.size(); ++b)
      out.acceptance[c * cs.models.size() + b] = results[c].acceptance[b];
  return out;
}

}  // namespace attrlab
