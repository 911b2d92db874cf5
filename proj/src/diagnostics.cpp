#include "attrlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "engine.hpp"
#include "util.hpp"

namespace attrlab {

using nlohmann::json;

double ppp_value(double s_d, const std::vector<double>& s_r) {
  if (s_r.empty()) fail(Errc::InvalidArgument, "ppp needs at least one replicate");
  long above = 0, below = 0;
  for (double s : s_r) {
    if (s_d - s > 0) ++above;
    if (s - s_d > 0) ++below;
  }
  const double t = static_cast<double>(s_r.size());
  return (2.0 / t) * static_cast<double>(std::min(above, below));
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

/// Maximally spread row indices (the draws closest to independent that the
/// run can offer).
std::vector<long> spread_rows(long rows, int T) {
  std::vector<long> idx(T);
  if (T == 1) {
    idx[0] = rows - 1;
    return idx;
  }
  for (int l = 0; l < T; ++l)
    idx[l] = static_cast<long>(l) * (rows - 1) / (T - 1);
  return idx;
}

std::uint8_t bit(Var v) {
  return static_cast<std::uint8_t>(1u << static_cast<int>(v));
}

}  // namespace

ReplicateSet replicate_data(const PosteriorDraws& draws, const PanelDataset& ds,
                            const ModelSpec& spec, int T, std::uint64_t seed) {
  if (T < 1) fail(Errc::InvalidArgument, "T must be at least 1");
  const long rows = draws.n_rows();
  if (rows < T)
    fail(Errc::InsufficientDraws, "need at least T=" + std::to_string(T) +
                                      " retained draws, have " +
                                      std::to_string(rows));

  ReplicateSet out;
  out.draw_indices = spread_rows(rows, T);
  const long n = ds.n_cases();
  out.replicated_mask.assign(n, 0);
  for (long i = 0; i < n; ++i) {
    const CaseRecord& c = ds.cases[i];
    if (c.observed(Var::Y2)) out.replicated_mask[i] |= bit(Var::Y2);
    if (ds.design.three_wave() && c.observed(Var::Y3))
      out.replicated_mask[i] |= bit(Var::Y3);
  }

  const auto cs = detail::compile(spec, ds.covariate_names);
  detail::WorkingData wd = detail::build_working_data(ds, out.replicated_mask);
  detail::attach_models(wd, cs);

  std::vector<std::array<std::int8_t, kNumVars>> observed(n);
  for (long i = 0; i < n; ++i) observed[i] = ds.cases[i].value;

  out.values.resize(T);
  std::vector<double> probs, cdf;
  for (int l = 0; l < T; ++l) {
    const ParameterVector theta =
        theta_at_row(draws, spec, out.draw_indices[l]);
    out.values[l] = observed;
    for (const auto& cls : wd.classes) {
      detail::class_conditional(wd, cs, cls, theta.values.data(), probs);
      cdf.resize(probs.size());
      double acc = 0.0;
      for (size_t j = 0; j < probs.size(); ++j) {
        acc += probs[j];
        cdf[j] = acc;
      }
      const int k = static_cast<int>(cls.vars.size());
      for (long i : cls.members) {
        SplitStream stream(seed, static_cast<std::uint64_t>(l),
                           static_cast<std::uint64_t>(i));
        const double u = stream.uniform();
        int pick = static_cast<int>(
            std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        if (pick >= static_cast<int>(cdf.size()))
          pick = static_cast<int>(cdf.size()) - 1;
        for (int j = 0; j < k; ++j) {
          const Var v = cls.vars[j];
          if (out.replicated_mask[i] & bit(v))
            out.values[l][i][static_cast<int>(v)] =
                static_cast<std::int8_t>((pick >> j) & 1);
        }
      }
    }
  }
  return out;
}

PanelDataset materialize_replicate(const PanelDataset& ds,
                                   const ReplicateSet& reps, int l) {
  PanelDataset out = ds;
  for (long i = 0; i < ds.n_cases(); ++i)
    for (int v = 0; v < ds.design.n_vars(); ++v)
      if (reps.replicated_mask[i] & (1u << v))
        out.cases[i].value[v] = reps.values[l][i][v];
  return out;
}

namespace {

/// One named statistic computed from a (possibly replicated) value matrix.
struct Statistic {
  std::string name;
  /// Returns false when the statistic is unavailable (e.g. a replicate
  /// regression failed to converge).
  std::function<bool(const std::vector<std::array<std::int8_t, kNumVars>>&,
                     double&)> eval;
};

using Values = std::vector<std::array<std::int8_t, kNumVars>>;

int iv(Var v) { return static_cast<int>(v); }

}  // namespace

std::vector<PppReport> standard_checks(const PosteriorDraws& draws,
                                       const PanelDataset& ds,
                                       const ModelSpec& spec, int T,
                                       std::uint64_t seed) {
  const ReplicateSet reps = replicate_data(draws, ds, spec, T, seed);
  const StudyDesign& d = ds.design;
  const long n = ds.n_cases();

  std::vector<Statistic> stats;

  // Cell probabilities. The subsets condition on cohort and indicators,
  // which are never replicated, so each subset is fixed across replicates.
  auto prob_stat = [&](std::string name, std::vector<long> cases,
                       std::vector<std::pair<Var, int>> targets) {
    stats.push_back(Statistic{
        std::move(name),
        [cases = std::move(cases), targets = std::move(targets)](
            const Values& v, double& out) {
          if (cases.empty()) return false;
          long hit = 0;
          for (long i : cases) {
            bool all = true;
            for (const auto& [var, val] : targets)
              all = all && v[i][iv(var)] == val;
            hit += all ? 1 : 0;
          }
          out = static_cast<double>(hit) / static_cast<double>(cases.size());
          return true;
        }});
  };

  auto collect = [&](auto&& pred) {
    std::vector<long> out;
    for (long i = 0; i < n; ++i)
      if (pred(ds.cases[i])) out.push_back(i);
    return out;
  };

  const auto r1 = collect([](const CaseRecord& c) {
    return c.cohort == Cohort::R1;
  });
  prob_stat("Pr(y2=0) in R1", r1, {{Var::Y2, 0}});

  const auto panel_w1 = collect([](const CaseRecord& c) {
    return c.cohort == Cohort::Panel && c.val(Var::W1) == 1;
  });
  prob_stat("Pr(y2=0 | w1=1)", panel_w1, {{Var::Y2, 0}});

  if (d.three_wave()) {
    const auto r2 = collect([](const CaseRecord& c) {
      return c.cohort == Cohort::R2;
    });
    prob_stat("Pr(y3=0) in R2", r2, {{Var::Y3, 0}});

    const auto panel_w1w2 = collect([](const CaseRecord& c) {
      return c.cohort == Cohort::Panel && c.val(Var::W1) == 1 &&
             c.val(Var::W2) == 1;
    });
    prob_stat("Pr(y3=0 | w1=1, w2=1)", panel_w1w2, {{Var::Y3, 0}});
    if (d.returners()) {
      const auto returner = collect([](const CaseRecord& c) {
        return c.cohort == Cohort::Panel && c.val(Var::W1) == 0 &&
               c.val(Var::W2) == 1;
      });
      prob_stat("Pr(y3=0 | w1=0, w2=1)", returner, {{Var::Y3, 0}});
    }
    if (d.follow_up()) {
      const auto r1_follow = collect([](const CaseRecord& c) {
        return c.cohort == Cohort::R1 && c.val(Var::W2) == 1;
      });
      prob_stat("Pr(y3=0 | w2=1) in R1", r1_follow, {{Var::Y3, 0}});
    }
    prob_stat("Pr(y2=0, y3=0 | w1=1, w2=1)", panel_w1w2,
              {{Var::Y2, 0}, {Var::Y3, 0}});
    prob_stat("Pr(y2=0, y3=1 | w1=1, w2=1)", panel_w1w2,
              {{Var::Y2, 0}, {Var::Y3, 1}});
    prob_stat("Pr(y2=1, y3=0 | w1=1, w2=1)", panel_w1w2,
              {{Var::Y2, 1}, {Var::Y3, 0}});
  }

  // Complete-case regression of the final outcome on its predecessors.
  {
    ConditionalModel formula;
    std::vector<long> cc;
    if (d.three_wave()) {
      formula.response = Var::Y3;
      cc = collect([](const CaseRecord& c) {
        return c.cohort == Cohort::Panel && c.val(Var::W1) == 1 &&
               c.val(Var::W2) == 1;
      });
    } else {
      formula.response = Var::Y2;
      cc = panel_w1;
    }
    formula.terms.push_back(Term::intercept());
    for (size_t j = 1; j < ds.covariate_names.size(); ++j)
      formula.terms.push_back(Term::covariate(ds.covariate_names[j]));
    formula.terms.push_back(Term::outcome(Var::Y1));
    if (d.three_wave()) {
      formula.terms.push_back(Term::outcome(Var::Y2));
      formula.terms.push_back(Term::interaction(Factor::outcome(Var::Y1),
                                                Factor::outcome(Var::Y2)));
    }
    const auto cm = detail::compile_formula(formula, ds.covariate_names);
    const int p = static_cast<int>(cm.terms.size());

    for (int coef = 0; coef < p; ++coef) {
      const std::string nm = "cc coef " +
                             std::string(var_name(formula.response)) + " ~ " +
                             formula.terms[coef].text();
      stats.push_back(Statistic{
          nm, [&ds, cc, cm, p, coef](const Values& v, double& out) {
            std::vector<double> design;
            design.reserve(cc.size() * p);
            std::vector<std::int8_t> y;
            y.reserve(cc.size());
            for (long i : cc) {
              for (const auto& t : cm.terms)
                design.push_back(
                    detail::term_value(t, ds.cases[i].x.data(), v[i].data()));
              y.push_back(v[i][cm.response]);
            }
            if (y.empty()) return false;
            try {
              const auto fit = detail::logistic_newton(
                  design, static_cast<long>(y.size()), p, y);
              out = fit.beta[coef];
              return true;
            } catch (const Error&) {
              return false;
            }
          }});
    }
  }

  Values observed(n);
  for (long i = 0; i < n; ++i) observed[i] = ds.cases[i].value;

  std::vector<PppReport> reports;
  for (const auto& s : stats) {
    PppReport rep;
    rep.statistic_name = s.name;
    double sd_val;
    if (!s.eval(observed, sd_val)) continue;
    rep.s_d = sd_val;
    for (int l = 0; l < reps.T(); ++l) {
      double sr;
      if (s.eval(reps.values[l], sr)) rep.s_r.push_back(sr);
    }
    if (rep.s_r.empty()) continue;
    rep.ppp = ppp_value(rep.s_d, rep.s_r);
    rep.flagged = rep.ppp < 0.05;
    reports.push_back(std::move(rep));
  }
  return reports;
}

std::string ppp_report_json(const std::vector<PppReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) {
    json j;
    j["statistic"] = r.statistic_name;
    j["s_d"] = r.s_d;
    j["ppp"] = r.ppp;
    j["flagged"] = r.flagged;
    j["s_r"] = r.s_r;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::string ppp_report_table(const std::vector<PppReport>& reports) {
  std::ostringstream ss;
  char line[192];
  std::snprintf(line, sizeof line, "%-42s %10s %8s\n", "Quantity", "observed",
                "ppp");
  ss << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-42s %10.4f %8.2f%s\n",
                  r.statistic_name.c_str(), r.s_d, r.ppp,
                  r.flagged ? "  *" : "");
    ss << line;
  }
  return ss.str();
}

std::vector<SensitivityRow> sensitivity_scan(const PanelDataset& ds,
                                             const ModelSpec& spec,
                                             const Term& term, Var response,
                                             const std::vector<double>& grid,
                                             const McmcConfig& cfg) {
  if (grid.empty()) fail(Errc::InvalidArgument, "empty sensitivity grid");

  std::vector<SensitivityRow> rows;
  for (double value : grid) {
    ModelSpec fixed_spec = spec;
    ConditionalModel* m = fixed_spec.find(response);
    if (m == nullptr)
      fail(Errc::InvalidArgument, std::string("no model for response ") +
                                      var_name(response));
    if (std::find(m->terms.begin(), m->terms.end(), term) == m->terms.end())
      m->terms.push_back(term);
    m->fixed[term] = value;

    const PosteriorDraws draws = run_mwg(ds, fixed_spec, cfg);

    SensitivityRow row;
    row.fixed_value = value;
    for (int j = 0; j < draws.n_params(); ++j) {
      ParamSummary s;
      s.name = draws.names[j];
      s.fixed = draws.free[j] == 0;
      s.mean = draws.mean(j);
      s.sd = draws.sd(j);
      s.q025 = draws.quantile(j, 0.025);
      s.q975 = draws.quantile(j, 0.975);
      row.summaries.push_back(std::move(s));
    }

    // Odds gloss: for an interaction a:b, the response-odds multiplier of
    // b=1 at a=1 relative to a=1, b=0 is exp(main effect of b + fixed value).
    if (term.is_interaction() && term.factors[0].chain_var() &&
        term.factors[1].chain_var()) {
      const Factor& later = term.factors[1];
      const std::string main_name = std::string(var_name(response)) + "." +
                                    var_name(later.var);
      double main = 0.0;
      for (int j = 0; j < draws.n_params(); ++j)
        if (draws.names[j] == main_name) main = draws.mean(j);
      char buf[192];
      std::snprintf(buf, sizeof buf,
                    "odds of %s=1 for (%s=1,%s=1) vs (%s=1,%s=0): "
                    "exp(%.3f%+.3f) ~ %.2fx",
                    var_name(response), term.factors[0].text().c_str(),
                    later.text().c_str(), term.factors[0].text().c_str(),
                    later.text().c_str(), main, value, std::exp(main + value));
      row.odds_gloss = buf;
    } else {
      char buf[96];
      std::snprintf(buf, sizeof buf, "odds multiplier exp(%.3f) ~ %.2fx",
                    value, std::exp(value));
      row.odds_gloss = buf;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sensitivity_csv(const std::vector<SensitivityRow>& rows) {
  std::ostringstream ss;
  ss << "fixed_value,parameter,mean,sd,q025,q975,fixed,gloss\n";
  char buf[64];
  for (const auto& row : rows) {
    for (const auto& s : row.summaries) {
      ss << row.fixed_value << ',' << s.name;
      std::snprintf(buf, sizeof buf, ",%.6g,%.6g,%.6g,%.6g,", s.mean, s.sd,
                    s.q025, s.q975);
      ss << buf << (s.fixed ? 1 : 0) << ",\"" << row.odds_gloss << "\"\n";
    }
  }
  return ss.str();
}

namespace {

/// Rank-normalization: average ranks mapped through the normal quantile.
std::vector<double> rank_normalize(const std::vector<double>& x) {
  const size_t s = x.size();
  std::vector<size_t> order(s);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(s);
  size_t i = 0;
  while (i < s) {
    size_t j = i;
    while (j + 1 < s && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  std::vector<double> z(s);
  for (size_t k = 0; k < s; ++k)
    z[k] = normal_quantile((rank[k] - 0.375) / (static_cast<double>(s) + 0.25));
  return z;
}

}  // namespace

std::vector<ConvergenceRow> convergence_summary(const PosteriorDraws& draws) {
  if (draws.n_chains < 2)
    fail(Errc::TooFewDraws, "split R-hat needs at least two chains");
  if (draws.retained_per_chain < 4)
    fail(Errc::TooFewDraws, "need at least four retained draws per chain");

  const int half = draws.retained_per_chain / 2;
  const int n_seq = 2 * draws.n_chains;

  std::vector<ConvergenceRow> rows;
  for (int col = 0; col < draws.n_params(); ++col) {
    ConvergenceRow row;
    row.name = draws.names[col];

    std::vector<double> pooled;
    pooled.reserve(static_cast<size_t>(n_seq) * half);
    for (int c = 0; c < draws.n_chains; ++c) {
      const long base = static_cast<long>(c) * draws.retained_per_chain;
      for (int i = 0; i < half; ++i) pooled.push_back(draws.at(base + i, col));
      for (int i = 0; i < half; ++i)
        pooled.push_back(
            draws.at(base + draws.retained_per_chain - half + i, col));
    }
    const bool constant =
        std::all_of(pooled.begin(), pooled.end(),
                    [&](double v) { return v == pooled[0]; });
    if (constant) {
      row.defined = false;
      rows.push_back(std::move(row));
      continue;
    }

    const std::vector<double> z = rank_normalize(pooled);

    std::vector<double> seq_mean(n_seq), seq_var(n_seq);
    double w = 0.0;
    for (int m = 0; m < n_seq; ++m) {
      const double* seq = z.data() + static_cast<size_t>(m) * half;
      double mean = 0.0;
      for (int i = 0; i < half; ++i) mean += seq[i];
      mean /= half;
      double var = 0.0;
      for (int i = 0; i < half; ++i) var += (seq[i] - mean) * (seq[i] - mean);
      var /= (half - 1);
      seq_mean[m] = mean;
      seq_var[m] = var;
      w += var;
    }
    w /= n_seq;
    const double grand = mean_of(seq_mean);
    double b = 0.0;
    for (int m = 0; m < n_seq; ++m)
      b += (seq_mean[m] - grand) * (seq_mean[m] - grand);
    b *= static_cast<double>(half) / (n_seq - 1);

    const double var_plus = (half - 1.0) / half * w + b / half;
    row.rhat = std::sqrt(var_plus / w);

    // Bulk ESS via combined autocorrelations with Geyer's initial monotone
    // positive sequence.
    std::vector<double> rho(half, 0.0);
    {
      std::vector<std::vector<double>> acov(n_seq);
      for (int m = 0; m < n_seq; ++m) {
        const double* seq = z.data() + static_cast<size_t>(m) * half;
        acov[m].assign(half, 0.0);
        for (int t = 0; t < half; ++t) {
          double s = 0.0;
          for (int i = 0; i + t < half; ++i)
            s += (seq[i] - seq_mean[m]) * (seq[i + t] - seq_mean[m]);
          acov[m][t] = s / half;
        }
      }
      for (int t = 0; t < half; ++t) {
        double avg = 0.0;
        for (int m = 0; m < n_seq; ++m) avg += acov[m][t];
        avg /= n_seq;
        rho[t] = 1.0 - (w - avg) / var_plus;
      }
    }

    double tau = 1.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (int t = 1; t + 1 < half; t += 2) {
      double pair = rho[t] + rho[t + 1];
      if (pair < 0.0) break;
      pair = std::min(pair, prev_pair);  // enforce monotone decrease
      prev_pair = pair;
      tau += 2.0 * pair;
    }
    const double total = static_cast<double>(n_seq) * half;
    row.ess = std::min(total, total / tau);
    row.defined = true;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace attrlab
