#include "attrlab/model.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "util.hpp"

namespace attrlab {

namespace {

constexpr Var kChainOrder[kNumVars] = {Var::Y1, Var::Y2, Var::W1, Var::Y3,
                                       Var::W2};

int chain_pos(Var v) {
  for (int i = 0; i < kNumVars; ++i)
    if (kChainOrder[i] == v) return i;
  return -1;
}

}  // namespace

Factor Factor::covariate(std::string name) {
  Factor f;
  f.kind = Kind::Covariate;
  f.cov = std::move(name);
  return f;
}

Factor Factor::outcome(Var v) {
  Factor f;
  f.kind = Kind::Outcome;
  f.var = v;
  return f;
}

Factor Factor::indicator(Var v) {
  Factor f;
  f.kind = Kind::Indicator;
  f.var = v;
  return f;
}

Factor Factor::of(Var v) {
  return is_indicator(v) ? indicator(v) : outcome(v);
}

std::string Factor::text() const {
  return kind == Kind::Covariate ? cov : var_name(var);
}

bool Factor::operator<(const Factor& o) const {
  // Chain variables order by chain position; covariates come after, by name.
  const bool a_cov = kind == Kind::Covariate;
  const bool b_cov = o.kind == Kind::Covariate;
  if (a_cov != b_cov) return !a_cov;
  if (a_cov) return cov < o.cov;
  return chain_pos(var) < chain_pos(o.var);
}

Term Term::intercept() { return Term{}; }

Term Term::covariate(std::string name) {
  return Term{{Factor::covariate(std::move(name))}};
}

Term Term::outcome(Var v) { return Term{{Factor::outcome(v)}}; }

Term Term::indicator(Var v) { return Term{{Factor::indicator(v)}}; }

Term Term::interaction(Factor a, Factor b) {
  if (a == b)
    fail(Errc::MalformedSpec,
         "interaction operands must be distinct: " + a.text());
  if (b < a) std::swap(a, b);
  return Term{{std::move(a), std::move(b)}};
}

bool Term::involves_covariate() const {
  return std::any_of(factors.begin(), factors.end(), [](const Factor& f) {
    return f.kind == Factor::Kind::Covariate;
  });
}

bool Term::involves(Var v) const {
  return std::any_of(factors.begin(), factors.end(), [&](const Factor& f) {
    return f.chain_var() && f.var == v;
  });
}

int Term::latest_var() const {
  int latest = -1;
  for (const auto& f : factors)
    if (f.chain_var()) latest = std::max(latest, chain_pos(f.var));
  return latest;
}

std::string Term::text() const {
  if (factors.empty()) return "1";
  std::string s = factors[0].text();
  for (size_t i = 1; i < factors.size(); ++i) s += ":" + factors[i].text();
  return s;
}

bool Term::operator<(const Term& o) const { return factors < o.factors; }

namespace {

Factor parse_factor(const std::string& token) {
  const std::string t = lower(trim(token));
  if (t.empty()) fail(Errc::MalformedSpec, "empty factor in term");
  for (int v = 0; v < kNumVars; ++v)
    if (t == var_name(static_cast<Var>(v)))
      return Factor::of(static_cast<Var>(v));
  if (t == "1" || t == "intercept")
    fail(Errc::MalformedSpec, "the intercept cannot appear in an interaction");
  return Factor::covariate(t);
}

}  // namespace

Term parse_term(const std::string& text) {
  const std::string t = trim(text);
  if (t == "1") return Term::intercept();
  const auto parts = split(t, ':');
  if (parts.size() == 1) {
    const std::string token = lower(trim(parts[0]));
    if (token == "intercept") return Term::intercept();
    for (int v = 0; v < kNumVars; ++v)
      if (token == var_name(static_cast<Var>(v)))
        return static_cast<Var>(v) == Var::W1 || static_cast<Var>(v) == Var::W2
                   ? Term::indicator(static_cast<Var>(v))
                   : Term::outcome(static_cast<Var>(v));
    if (token.empty()) fail(Errc::MalformedSpec, "empty term");
    return Term::covariate(token);
  }
  if (parts.size() == 2)
    return Term::interaction(parse_factor(parts[0]), parse_factor(parts[1]));
  fail(Errc::MalformedSpec, "interactions are pairwise only: '" + t + "'");
}

std::string ConditionalModel::text() const {
  std::string s = std::string(var_name(response)) + " ~ ";
  bool first = true;
  for (const auto& t : terms) {
    if (!first) s += " + ";
    first = false;
    auto it = fixed.find(t);
    if (it != fixed.end()) {
      std::ostringstream v;
      v << it->second;
      s += "fix(" + t.text() + "=" + v.str() + ")";
    } else {
      s += t.text();
    }
  }
  return s;
}

const ConditionalModel* ModelSpec::find(Var response) const {
  for (const auto& m : chain)
    if (m.response == response) return &m;
  return nullptr;
}

ConditionalModel* ModelSpec::find(Var response) {
  for (auto& m : chain)
    if (m.response == response) return &m;
  return nullptr;
}

std::string ModelSpec::text() const {
  std::string s;
  for (const auto& m : chain) s += m.text() + "\n";
  return s;
}

int cell_count(const StudyDesign& d) { return d.three_wave() ? 32 : 8; }

int independent_constraints(const StudyDesign& d) {
  switch (d.variant) {
    case DesignVariant::TwoWave: return 7;
    case DesignVariant::ThreeMonotoneNoFollow: return 16;
    case DesignVariant::ThreeReturnersNoFollow: return 20;
    case DesignVariant::ThreeMonotoneFollow: return 20;
    case DesignVariant::ThreeReturnersFollow: return 22;
  }
  fail(Errc::InvalidArgument, "bad design variant");
}

namespace {

/// Rules for outcome/indicator-only terms in the wave-3 models (Y3, W2).
/// Returns empty when the term is identified, otherwise the violated rule.
std::string wave3_rule(const StudyDesign& d, Var response, const Term& t) {
  const bool touches_w1 = t.involves(Var::W1);
  if (response == Var::W2 && t.is_interaction() && t.involves(Var::Y3))
    return "interactions involving y3 are not identified in the w2 model";
  switch (d.variant) {
    case DesignVariant::ThreeMonotoneNoFollow:
      if (touches_w1)
        return "terms involving w1 are not identified in the " +
               std::string(var_name(response)) +
               " model (w1=0 is never observed jointly with y3 or w2)";
      break;
    case DesignVariant::ThreeReturnersNoFollow:
      if (t.is_interaction() && touches_w1 && t.involves(Var::Y2))
        return "the y2:w1 interaction is not identified (y2 is never "
               "observed with y3 except when w1=1)";
      break;
    case DesignVariant::ThreeMonotoneFollow:
      if (t.is_interaction() && touches_w1 && t.involves(Var::Y1))
        return "the y1:w1 interaction is not identified under "
               "three_monotone_follow";
      break;
    case DesignVariant::ThreeReturnersFollow:
      break;
    case DesignVariant::TwoWave:
      break;
  }
  return "";
}

}  // namespace

ValidationReport validate_identified(const ModelSpec& spec) {
  ValidationReport rep;
  const StudyDesign& d = spec.design;

  // Structural checks: chain shape, ordering, term sanity.
  const int n_vars = d.n_vars();
  if (static_cast<int>(spec.chain.size()) != n_vars)
    fail(Errc::MalformedSpec,
         "chain must have " + std::to_string(n_vars) + " conditional models");
  for (int i = 0; i < n_vars; ++i) {
    if (spec.chain[i].response != kChainOrder[i])
      fail(Errc::MalformedSpec,
           std::string("chain order must be y1, y2, w1") +
               (n_vars == 5 ? ", y3, w2" : "") + "; model " +
               std::to_string(i) + " is for " +
               var_name(spec.chain[i].response));
  }
  for (const auto& m : spec.chain) {
    std::vector<Term> seen;
    for (const auto& t : m.terms) {
      if (std::find(seen.begin(), seen.end(), t) != seen.end())
        fail(Errc::MalformedSpec, std::string("duplicate term ") + t.text() +
                                      " in " + var_name(m.response) +
                                      " model");
      seen.push_back(t);
      if (t.factors.size() > 2)
        fail(Errc::MalformedSpec, "interactions are pairwise only");
      for (const auto& f : t.factors)
        if (f.chain_var() && !d.in_design(f.var))
          fail(Errc::MalformedSpec, std::string(f.text()) +
                                        " is not part of this design");
      if (t.latest_var() >= chain_pos(m.response))
        fail(Errc::MalformedSpec,
             std::string(t.text()) + " references a variable at or after " +
                 var_name(m.response) + " in the chain order");
    }
    for (const auto& [t, v] : m.fixed) {
      (void)v;
      if (std::find(m.terms.begin(), m.terms.end(), t) == m.terms.end())
        fail(Errc::MalformedSpec, std::string("fixed term ") + t.text() +
                                      " is not in the " +
                                      var_name(m.response) + " model");
    }
  }

  // (b) per-variant forbidden-term rules; frozen terms are exempt.
  for (const auto& m : spec.chain) {
    for (const auto& t : m.terms) {
      if (m.is_fixed(t) || t.involves_covariate()) continue;
      std::string why;
      if (m.response == Var::W1 && t.is_interaction() &&
          t.involves(Var::Y1) && t.involves(Var::Y2)) {
        why = "the y1:y2 interaction in the w1 model breaks separability and "
              "is not identified";
      } else if (m.response == Var::Y3 || m.response == Var::W2) {
        why = wave3_rule(d, m.response, t);
      }
      if (!why.empty())
        rep.violations.push_back("free term " + t.text() + " in " +
                                 var_name(m.response) + " model: " + why);
    }
  }

  // (a) identification budget: free non-covariate parameters, counting the
  // implicit sum-to-one, must fit the design's identified-quantity count.
  int free_noncov = 0;
  for (const auto& m : spec.chain)
    for (const auto& t : m.terms)
      if (!m.is_fixed(t) && !t.involves_covariate()) ++free_noncov;
  rep.free_noncovariate_params = free_noncov + 1;
  rep.budget = independent_constraints(d);
  if (rep.free_noncovariate_params > rep.budget) {
    std::ostringstream w;
    w << "free non-covariate parameters (" << free_noncov
      << ") plus the sum-to-one constraint exceed the "
      << rep.budget << " identified quantities of a "
      << variant_name(d.variant) << " design";
    rep.violations.push_back(w.str());
  }

  rep.pass = rep.violations.empty();
  return rep;
}

void require_identified(const ModelSpec& spec) {
  const auto rep = validate_identified(spec);
  if (!rep.pass) {
    std::string msg = "model is not identified:";
    for (const auto& v : rep.violations) msg += "\n  - " + v;
    fail(Errc::NotIdentified, msg);
  }
}

ModelSpec default_an_spec(const StudyDesign& d,
                          const std::vector<std::string>& covariates) {
  ModelSpec spec;
  spec.design = d;

  auto base = [&](Var response) {
    ConditionalModel m;
    m.response = response;
    m.terms.push_back(Term::intercept());
    for (const auto& c : covariates) {
      if (lower(c) == "intercept") continue;
      m.terms.push_back(Term::covariate(lower(c)));
    }
    return m;
  };

  ConditionalModel y1 = base(Var::Y1);
  ConditionalModel y2 = base(Var::Y2);
  y2.terms.push_back(Term::outcome(Var::Y1));
  ConditionalModel w1 = base(Var::W1);
  w1.terms.push_back(Term::outcome(Var::Y1));
  w1.terms.push_back(Term::outcome(Var::Y2));
  spec.chain = {y1, y2, w1};

  if (d.three_wave()) {
    ConditionalModel y3 = base(Var::Y3);
    y3.terms.push_back(Term::outcome(Var::Y1));
    y3.terms.push_back(Term::outcome(Var::Y2));
    y3.terms.push_back(
        Term::interaction(Factor::outcome(Var::Y1), Factor::outcome(Var::Y2)));
    ConditionalModel w2 = base(Var::W2);
    w2.terms.push_back(Term::outcome(Var::Y1));
    w2.terms.push_back(Term::outcome(Var::Y2));
    w2.terms.push_back(Term::outcome(Var::Y3));
    w2.terms.push_back(
        Term::interaction(Factor::outcome(Var::Y1), Factor::outcome(Var::Y2)));

    // Additional terms identified by returns and refreshment follow-up.
    auto add_w1_terms = [&](ConditionalModel& m, bool y1w1, bool y2w1) {
      m.terms.push_back(Term::indicator(Var::W1));
      if (y1w1)
        m.terms.push_back(Term::interaction(Factor::outcome(Var::Y1),
                                            Factor::indicator(Var::W1)));
      if (y2w1)
        m.terms.push_back(Term::interaction(Factor::outcome(Var::Y2),
                                            Factor::indicator(Var::W1)));
    };
    switch (d.variant) {
      case DesignVariant::ThreeMonotoneNoFollow:
        break;
      case DesignVariant::ThreeReturnersNoFollow:
        add_w1_terms(y3, true, false);
        add_w1_terms(w2, true, false);
        break;
      case DesignVariant::ThreeMonotoneFollow:
        add_w1_terms(y3, false, true);
        add_w1_terms(w2, false, true);
        break;
      case DesignVariant::ThreeReturnersFollow:
        add_w1_terms(y3, true, true);
        add_w1_terms(w2, true, true);
        break;
      case DesignVariant::TwoWave:
        break;
    }
    spec.chain.push_back(y3);
    spec.chain.push_back(w2);
  }
  return spec;
}

ModelSpec parse_spec(const std::string& text, const StudyDesign& design) {
  ModelSpec spec;
  spec.design = design;
  for (const auto& raw : split(text, '\n')) {
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto tilde = line.find('~');
    if (tilde == std::string::npos)
      fail(Errc::MalformedSpec, "expected 'response ~ terms', got '" + line +
                                    "'");
    const std::string resp = lower(trim(line.substr(0, tilde)));
    ConditionalModel m;
    bool found = false;
    for (int v = 0; v < kNumVars; ++v)
      if (resp == var_name(static_cast<Var>(v))) {
        m.response = static_cast<Var>(v);
        found = true;
      }
    if (!found)
      fail(Errc::MalformedSpec, "unknown response '" + resp + "'");
    for (const auto& piece : split(line.substr(tilde + 1), '+')) {
      std::string tok = trim(piece);
      if (tok.empty())
        fail(Errc::MalformedSpec, "empty term in '" + line + "'");
      if (lower(tok).rfind("fix(", 0) == 0) {
        if (tok.back() != ')')
          fail(Errc::MalformedSpec, "unterminated fix() in '" + line + "'");
        const std::string inner = tok.substr(4, tok.size() - 5);
        const auto eq = inner.find('=');
        if (eq == std::string::npos)
          fail(Errc::MalformedSpec, "fix() needs term=value: '" + tok + "'");
        Term t = parse_term(inner.substr(0, eq));
        double v;
        if (!parse_double(inner.substr(eq + 1), v))
          fail(Errc::MalformedSpec, "bad fix() value in '" + tok + "'");
        m.terms.push_back(t);
        m.fixed[t] = v;
      } else {
        m.terms.push_back(parse_term(tok));
      }
    }
    spec.chain.push_back(std::move(m));
  }
  return spec;
}

ModelSpec load_spec(const std::string& path, const StudyDesign& design) {
  return parse_spec(read_file(path), design);
}

void save_spec(const ModelSpec& spec, const std::string& path) {
  write_file_atomic(path, spec.text());
}

}  // namespace attrlab
