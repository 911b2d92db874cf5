#include "attrlab/mi.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "engine.hpp"
#include "util.hpp"

namespace attrlab {

using nlohmann::json;

const char* mi_mode_name(MIMode m) {
  return m == MIMode::POnly ? "p_only" : "p_plus_r";
}

void save_completed_csv(const CompletedDataset& cd, const std::string& path) {
  std::ostringstream ss;
  ss << "case_id,cohort";
  for (size_t j = 1; j < cd.covariate_names.size(); ++j)
    ss << ",x_" << cd.covariate_names[j];
  for (int v = 0; v < cd.design.n_vars(); ++v)
    ss << ',' << var_name(static_cast<Var>(v));
  ss << '\n';
  for (const auto& c : cd.cases) {
    ss << c.case_id << ',' << cohort_name(c.cohort);
    for (size_t j = 1; j < cd.covariate_names.size(); ++j) ss << ',' << c.x[j];
    for (int v = 0; v < cd.design.n_vars(); ++v)
      ss << ',' << static_cast<int>(c.value[v]);
    ss << '\n';
  }
  write_file_atomic(path, ss.str());
}

namespace {

bool constant_column(const PosteriorDraws& d, int col) {
  const double first = d.at(0, col);
  for (long r = 1; r < d.n_rows(); ++r)
    if (d.at(r, col) != first) return false;
  return true;
}

/// Lag-t autocorrelation of column `col`, averaged over chains.
double avg_acf(const PosteriorDraws& d, int col, int lag) {
  double acf_sum = 0.0;
  int used = 0;
  const int n = d.retained_per_chain;
  for (int c = 0; c < d.n_chains; ++c) {
    const long base = static_cast<long>(c) * n;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += d.at(base + i, col);
    mean /= n;
    double c0 = 0.0, ct = 0.0;
    for (int i = 0; i < n; ++i) {
      const double di = d.at(base + i, col) - mean;
      c0 += di * di;
      if (i + lag < n) ct += di * (d.at(base + i + lag, col) - mean);
    }
    if (c0 <= 0.0) continue;
    acf_sum += ct / c0;
    ++used;
  }
  return used > 0 ? acf_sum / used : 0.0;
}

}  // namespace

int thinning_interval(const PosteriorDraws& draws, double threshold,
                      int max_lag) {
  std::vector<int> cols;
  for (int j = 0; j < draws.n_params(); ++j)
    if (draws.free[j] && !constant_column(draws, j)) cols.push_back(j);
  if (cols.empty()) return 1;
  for (int t = 1; t <= max_lag; ++t) {
    bool ok = true;
    for (int j : cols) {
      if (std::abs(avg_acf(draws, j, t)) >= threshold) {
        ok = false;
        break;
      }
    }
    if (ok) return t;
  }
  fail(Errc::AutocorrelationTooHigh,
       "no thinning interval up to " + std::to_string(max_lag) +
           " brings every parameter's autocorrelation below " +
           std::to_string(threshold));
}

namespace {

ParameterVector theta_at_row(const PosteriorDraws& draws,
                             const ModelSpec& spec, long row) {
  ParameterVector theta = ParameterVector::zeros(spec);
  if (static_cast<int>(theta.values.size()) != draws.n_params())
    fail(Errc::InvalidArgument,
         "draws do not match the spec's parameter layout");
  for (int j = 0; j < draws.n_params(); ++j) theta.values[j] = draws.at(row, j);
  return theta;
}

bool dataset_has_missing(const PanelDataset& ds) {
  for (const auto& c : ds.cases)
    for (int v = 0; v < ds.design.n_vars(); ++v)
      if (c.missing_cell(static_cast<Var>(v))) return true;
  return false;
}

}  // namespace

std::vector<CompletedDataset> emit_imputations(const PosteriorDraws& draws,
                                               const PanelDataset& ds,
                                               const ModelSpec& spec, int m,
                                               MIMode mode, std::uint64_t seed,
                                               double acf_threshold) {
  if (m < 2) fail(Errc::InvalidArgument, "m must be at least 2");
  const long rows = draws.n_rows();
  if (rows < m)
    fail(Errc::InsufficientDraws, "need at least m=" + std::to_string(m) +
                                      " retained draws, have " +
                                      std::to_string(rows));

  long interval = 1;
  if (dataset_has_missing(ds)) {
    const int max_lag = static_cast<int>(
        std::min<long>((rows - 1) / (m - 1), draws.retained_per_chain - 1));
    if (max_lag < 1)
      fail(Errc::InsufficientDraws, "too few draws to space m imputations");
    interval = thinning_interval(draws, acf_threshold, max_lag);
  }

  std::vector<CompletedDataset> out;
  out.reserve(m);
  for (int l = 0; l < m; ++l) {
    const long row = static_cast<long>(l) * interval;
    const ParameterVector theta = theta_at_row(draws, spec, row);
    const LatentCompletion lat =
        draw_latents(ds, spec, theta, seed, static_cast<std::uint64_t>(l));

    CompletedDataset cd;
    cd.mode = mode;
    cd.draw_index = row;
    cd.design = ds.design;
    cd.covariate_names = ds.covariate_names;
    for (long i = 0; i < ds.n_cases(); ++i) {
      const CaseRecord& c = ds.cases[i];
      if (mode == MIMode::POnly && c.cohort != Cohort::Panel) continue;
      CompletedCase cc;
      cc.case_id = c.case_id;
      cc.cohort = c.cohort;
      cc.x = c.x;
      for (int v = 0; v < ds.design.n_vars(); ++v) {
        const Var var = static_cast<Var>(v);
        cc.value[v] = c.observed(var) ? c.val(var) : lat.values[i][v];
        if (cc.value[v] != 0 && cc.value[v] != 1)
          fail(Errc::IncompleteLatent,
               "case '" + c.case_id + "': cell " + var_name(var) +
                   " has no imputed value");
      }
      cd.cases.push_back(std::move(cc));
    }
    out.push_back(std::move(cd));
  }
  return out;
}

MlFit fit_logistic_ml(const CompletedDataset& completed,
                      const ConditionalModel& formula) {
  const auto cm =
      detail::compile_formula(formula, completed.covariate_names);
  const int p = static_cast<int>(cm.terms.size());
  const long n = static_cast<long>(completed.cases.size());
  if (n == 0) fail(Errc::InvalidArgument, "empty completed dataset");

  std::vector<double> design;
  design.reserve(n * p);
  std::vector<std::int8_t> y;
  y.reserve(n);
  for (const auto& c : completed.cases) {
    for (const auto& t : cm.terms)
      design.push_back(detail::term_value(t, c.x.data(), c.value.data()));
    y.push_back(c.value[cm.response]);
  }

  const auto nr = detail::logistic_newton(design, n, p, y);
  MlFit fit;
  for (const auto& t : formula.terms)
    fit.names.push_back(std::string(var_name(formula.response)) + "." +
                        t.text());
  fit.q = nr.beta;
  fit.u = nr.var_diag;
  fit.iterations = nr.iterations;
  fit.n_rows = n;
  return fit;
}

MIResult rubin_combine(const std::vector<double>& q,
                       const std::vector<double>& u, double nu_com) {
  if (q.size() != u.size())
    fail(Errc::InvalidArgument, "q and u must have equal length");
  const int m = static_cast<int>(q.size());
  if (m < 2) fail(Errc::InvalidArgument, "need at least two completed-data estimates");
  for (double ui : u)
    if (ui < 0.0)
      fail(Errc::InvalidArgument, "within-imputation variances must be >= 0");

  MIResult r;
  r.m = m;
  r.q_bar = mean_of(q);
  r.b_m = sample_variance(q);
  r.u_bar = mean_of(u);
  const double inflate = 1.0 + 1.0 / m;
  r.t_m = inflate * r.b_m + r.u_bar;

  if (r.b_m <= 0.0) {
    r.degenerate_between = true;
    r.nu_m = std::numeric_limits<double>::infinity();
    r.nu_br = std::numeric_limits<double>::infinity();
    const double z = normal_quantile(0.975);
    const double half = z * std::sqrt(r.t_m);
    r.ci_lo = r.q_bar - half;
    r.ci_hi = r.q_bar + half;
    return r;
  }

  const double ratio = r.u_bar / (inflate * r.b_m);
  r.nu_m = (m - 1) * (1.0 + ratio) * (1.0 + ratio);

  if (std::isfinite(nu_com)) {
    const double gamma = inflate * r.b_m / r.t_m;
    const double nu_obs =
        (nu_com + 1.0) / (nu_com + 3.0) * nu_com * (1.0 - gamma);
    r.nu_br = 1.0 / (1.0 / r.nu_m + 1.0 / nu_obs);
  } else {
    r.nu_br = r.nu_m;
  }

  const double tq = student_t_quantile(0.975, r.nu_br);
  const double half = tq * std::sqrt(r.t_m);
  r.ci_lo = r.q_bar - half;
  r.ci_hi = r.q_bar + half;
  return r;
}

std::string mi_result_json(const std::vector<std::string>& names,
                           const std::vector<MIResult>& results) {
  json arr = json::array();
  for (size_t i = 0; i < results.size(); ++i) {
    const MIResult& r = results[i];
    json j;
    j["parameter"] = i < names.size() ? names[i] : "q" + std::to_string(i);
    j["m"] = r.m;
    j["q_bar"] = r.q_bar;
    j["b_m"] = r.b_m;
    j["u_bar"] = r.u_bar;
    j["t_m"] = r.t_m;
    j["nu_m"] = std::isfinite(r.nu_m) ? json(r.nu_m) : json("inf");
    j["nu_br"] = std::isfinite(r.nu_br) ? json(r.nu_br) : json("inf");
    j["ci95"] = {r.ci_lo, r.ci_hi};
    j["degenerate_between"] = r.degenerate_between;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::string mi_result_table(const std::vector<std::string>& names,
                            const std::vector<MIResult>& results) {
  std::ostringstream ss;
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %10s %10s %10s %10s %8s %20s\n",
                "parameter", "q_bar", "b_m", "u_bar", "T_m", "nu_BR",
                "95% interval");
  ss << line;
  for (size_t i = 0; i < results.size(); ++i) {
    const MIResult& r = results[i];
    char nu[16];
    if (std::isfinite(r.nu_br))
      std::snprintf(nu, sizeof nu, "%8.1f", r.nu_br);
    else
      std::snprintf(nu, sizeof nu, "%8s", "inf");
    std::snprintf(line, sizeof line,
                  "%-20s %10.4f %10.5f %10.5f %10.5f %8s (%8.4f, %8.4f)%s\n",
                  (i < names.size() ? names[i] : "q" + std::to_string(i)).c_str(),
                  r.q_bar, r.b_m, r.u_bar, r.t_m, nu, r.ci_lo, r.ci_hi,
                  r.degenerate_between ? "  [b_m = 0]" : "");
    ss << line;
  }
  return ss.str();
}

}  // namespace attrlab
