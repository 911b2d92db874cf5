#include "engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "util.hpp"

namespace attrlab::detail {

namespace {

int cov_index(const std::vector<std::string>& names, const std::string& name) {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  fail(Errc::MalformedSpec,
       "covariate '" + name + "' is not present in the dataset");
}

CompiledTerm compile_term(const Term& t,
                          const std::vector<std::string>& cov_names) {
  CompiledTerm ct;
  if (t.is_intercept()) {
    ct.type = CompiledTerm::Type::Intercept;
    return ct;
  }
  if (t.factors.size() == 1) {
    const Factor& f = t.factors[0];
    if (f.chain_var()) {
      ct.type = CompiledTerm::Type::Chain;
      ct.a = static_cast<int>(f.var);
    } else {
      ct.type = CompiledTerm::Type::Cov;
      ct.a = cov_index(cov_names, f.cov);
    }
    return ct;
  }
  const Factor& a = t.factors[0];
  const Factor& b = t.factors[1];
  if (a.chain_var() && b.chain_var()) {
    ct.type = CompiledTerm::Type::ChainChain;
    ct.a = static_cast<int>(a.var);
    ct.b = static_cast<int>(b.var);
  } else if (!a.chain_var() && !b.chain_var()) {
    ct.type = CompiledTerm::Type::CovCov;
    ct.a = cov_index(cov_names, a.cov);
    ct.b = cov_index(cov_names, b.cov);
  } else {
    const Factor& cov = a.chain_var() ? b : a;
    const Factor& chv = a.chain_var() ? a : b;
    ct.type = CompiledTerm::Type::CovChain;
    ct.a = cov_index(cov_names, cov.cov);
    ct.b = static_cast<int>(chv.var);
  }
  return ct;
}

}  // namespace

CompiledSpec compile(const ModelSpec& spec,
                     const std::vector<std::string>& covariate_names) {
  CompiledSpec cs;
  cs.n_vars = spec.design.n_vars();
  for (const auto& m : spec.chain) {
    cs.block_offset.push_back(cs.n_params);
    CompiledModel cm;
    cm.response = static_cast<int>(m.response);
    cm.var_mask = static_cast<std::uint8_t>(1u << cm.response);
    for (const auto& t : m.terms) {
      CompiledTerm ct = compile_term(t, covariate_names);
      cm.terms.push_back(ct);
      cm.pidx.push_back(cs.n_params);
      cs.names.push_back(std::string(var_name(m.response)) + "." + t.text());
      cs.free.push_back(m.is_fixed(t) ? 0 : 1);
      ++cs.n_params;
      for (const auto& f : t.factors)
        if (f.chain_var())
          cm.var_mask |= static_cast<std::uint8_t>(1u << static_cast<int>(f.var));
    }
    cs.models.push_back(std::move(cm));
  }
  cs.block_offset.push_back(cs.n_params);
  return cs;
}

CompiledModel compile_formula(const ConditionalModel& formula,
                              const std::vector<std::string>& covariate_names) {
  CompiledModel cm;
  cm.response = static_cast<int>(formula.response);
  cm.var_mask = static_cast<std::uint8_t>(1u << cm.response);
  int idx = 0;
  for (const auto& t : formula.terms) {
    cm.terms.push_back(compile_term(t, covariate_names));
    cm.pidx.push_back(idx++);
    for (const auto& f : t.factors)
      if (f.chain_var())
        cm.var_mask |= static_cast<std::uint8_t>(1u << static_cast<int>(f.var));
  }
  return cm;
}

WorkingData build_working_data(const PanelDataset& ds) {
  return build_working_data(ds, {});
}

WorkingData build_working_data(const PanelDataset& ds,
                               const std::vector<std::uint8_t>& extra_missing) {
  WorkingData wd;
  wd.n_vars = ds.design.n_vars();
  wd.n = ds.n_cases();
  wd.n_cov = ds.n_cov();
  wd.covpat.resize(wd.n);
  wd.obs.resize(wd.n);
  wd.miss_mask.resize(wd.n);

  std::map<std::vector<double>, int> pats;
  // class key: (covpat, miss mask, packed observed values)
  std::map<std::tuple<int, int, long>, long> class_index;

  for (long i = 0; i < wd.n; ++i) {
    const CaseRecord& c = ds.cases[i];
    auto [it, inserted] =
        pats.emplace(c.x, static_cast<int>(pats.size()));
    if (inserted)
      wd.covpat_row.insert(wd.covpat_row.end(), c.x.begin(), c.x.end());
    wd.covpat[i] = it->second;

    std::uint8_t miss =
        extra_missing.empty() ? 0 : extra_missing[i];
    long packed = 0;
    for (int v = 0; v < wd.n_vars; ++v) {
      if (c.missing_cell(static_cast<Var>(v)))
        miss |= static_cast<std::uint8_t>(1u << v);
      wd.obs[i][v] = (miss & (1u << v)) ? kMissing : c.value[v];
      packed = packed * 3 + (wd.obs[i][v] == kMissing ? 2 : wd.obs[i][v]);
    }
    wd.miss_mask[i] = miss;
    if (miss == 0) continue;

    auto key = std::make_tuple(it->second, static_cast<int>(miss), packed);
    auto [cit, cnew] =
        class_index.emplace(key, static_cast<long>(wd.classes.size()));
    if (cnew) {
      WorkingData::AugClass cls;
      cls.covpat = it->second;
      cls.miss = miss;
      cls.base = wd.obs[i];
      for (int v = 0; v < wd.n_vars; ++v)
        if (miss & (1u << v)) cls.vars.push_back(static_cast<Var>(v));
      wd.classes.push_back(std::move(cls));
    }
    wd.classes[cit->second].members.push_back(i);
  }
  wd.n_covpat = static_cast<long>(pats.size());
  return wd;
}

void attach_models(WorkingData& wd, const CompiledSpec& cs) {
  for (auto& cls : wd.classes) {
    cls.models.clear();
    for (size_t m = 0; m < cs.models.size(); ++m)
      if (cs.models[m].var_mask & cls.miss)
        cls.models.push_back(static_cast<int>(m));
  }
}

void class_conditional(const WorkingData& wd, const CompiledSpec& cs,
                       const WorkingData::AugClass& cls, const double* theta,
                       std::vector<double>& probs) {
  const int k = static_cast<int>(cls.vars.size());
  const int ncomp = 1 << k;
  probs.assign(ncomp, 0.0);
  const double* x = wd.cov_row(cls.covpat);
  std::array<std::int8_t, kNumVars> v = cls.base;

  double maxlog = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < ncomp; ++i) {
    for (int j = 0; j < k; ++j)
      v[static_cast<int>(cls.vars[j])] =
          static_cast<std::int8_t>((i >> j) & 1);
    double ll = 0.0;
    for (int mi : cls.models) {
      const CompiledModel& m = cs.models[mi];
      const double eta = eta_of(m, theta, x, v.data());
      ll += v[m.response] ? log_sigmoid(eta) : log_sigmoid(-eta);
    }
    probs[i] = ll;
    maxlog = std::max(maxlog, ll);
  }
  if (!std::isfinite(maxlog))
    fail(Errc::ZeroMass, "all latent completions have zero posterior mass");
  double total = 0.0;
  for (double& p : probs) {
    p = std::exp(p - maxlog);
    total += p;
  }
  for (double& p : probs) p /= total;
}

void ComboTable::init(const WorkingData& wd) {
  wd_ = &wd;
  n_vars_ = wd.n_vars;
  combos_per_pat_ = 1 << n_vars_;
  const long dense_size = wd.n_covpat * combos_per_pat_;
  dense_ = dense_size <= std::max<long>(4096, 8 * wd.n);
  if (dense_) {
    count_.assign(dense_size, 0);
    touched_.reserve(std::min<long>(wd.n, dense_size));
  }
}

void ComboTable::rebuild(
    const WorkingData& wd,
    const std::vector<std::array<std::int8_t, kNumVars>>& cur) {
  cur_ = &cur;
  if (!dense_) return;
  for (std::int32_t id : touched_) count_[id] = 0;
  touched_.clear();
  for (long i = 0; i < wd.n; ++i) {
    int bits = 0;
    for (int v = 0; v < n_vars_; ++v) bits |= (cur[i][v] & 1) << v;
    const std::int32_t id = wd.covpat[i] * combos_per_pat_ + bits;
    if (count_[id] == 0) touched_.push_back(id);
    ++count_[id];
  }
}

double ComboTable::block_loglik(const WorkingData& wd, const CompiledSpec& cs,
                                int block, const double* theta) const {
  const CompiledModel& m = cs.models[block];
  double ll = 0.0;
  if (dense_) {
    std::array<std::int8_t, kNumVars> v{};
    for (std::int32_t id : touched_) {
      const int pat = id / combos_per_pat_;
      const int bits = id % combos_per_pat_;
      for (int j = 0; j < n_vars_; ++j)
        v[j] = static_cast<std::int8_t>((bits >> j) & 1);
      const double eta = eta_of(m, theta, wd.cov_row(pat), v.data());
      const double one =
          v[m.response] ? log_sigmoid(eta) : log_sigmoid(-eta);
      ll += count_[id] * one;
    }
  } else {
    const auto& cur = *cur_;
    for (long i = 0; i < wd.n; ++i) {
      const double eta =
          eta_of(m, theta, wd.cov_row(wd.covpat[i]), cur[i].data());
      ll += cur[i][m.response] ? log_sigmoid(eta) : log_sigmoid(-eta);
    }
  }
  return ll;
}

NewtonResult logistic_newton(const std::vector<double>& design, long n, int p,
                             const std::vector<std::int8_t>& y, int max_iter,
                             double tol) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  Eigen::Map<const MatrixXd> xt(design.data(), p, n);  // column per case

  {
    MatrixXd xtx = xt * xt.transpose();
    Eigen::FullPivLU<MatrixXd> lu(xtx);
    lu.setThreshold(1e-10);
    if (lu.rank() < p)
      fail(Errc::RankDeficient, "design matrix is rank deficient");
  }

  VectorXd beta = VectorXd::Zero(p);
  VectorXd eta(n), mu(n), w(n);
  NewtonResult out;
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    eta = xt.transpose() * beta;
    for (long i = 0; i < n; ++i) {
      const double e = eta[i];
      const double pi = 1.0 / (1.0 + std::exp(-e));
      mu[i] = pi;
      w[i] = pi * (1.0 - pi);
    }
    VectorXd resid(n);
    for (long i = 0; i < n; ++i) resid[i] = static_cast<double>(y[i]) - mu[i];
    VectorXd grad = xt * resid;
    MatrixXd info = xt * w.asDiagonal() * xt.transpose();
    Eigen::LDLT<MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      fail(Errc::Separation,
           "observed information is not positive definite (separation?)");
    VectorXd step = ldlt.solve(grad);
    beta += step;
    out.iterations = it + 1;
    if (step.cwiseAbs().maxCoeff() < tol) {
      converged = true;
      break;
    }
    if (beta.cwiseAbs().maxCoeff() > 40.0)
      fail(Errc::Separation,
           "coefficients diverging; data are (quasi-)separated");
  }
  if (!converged)
    fail(Errc::Separation, "Newton-Raphson failed to converge");

  eta = xt.transpose() * beta;
  for (long i = 0; i < n; ++i) {
    const double pi = 1.0 / (1.0 + std::exp(-eta[i]));
    w[i] = pi * (1.0 - pi);
  }
  MatrixXd info = xt * w.asDiagonal() * xt.transpose();
  Eigen::LDLT<MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success)
    fail(Errc::Separation, "information matrix not factorizable at optimum");
  MatrixXd cov = ldlt.solve(MatrixXd::Identity(p, p));

  out.beta.assign(beta.data(), beta.data() + p);
  out.var_diag.resize(p);
  for (int j = 0; j < p; ++j) out.var_diag[j] = cov(j, j);
  return out;
}

}  // namespace attrlab::detail
