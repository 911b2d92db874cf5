#ifndef ATTRLAB_MODEL_HPP
#define ATTRLAB_MODEL_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attrlab/data.hpp"

namespace attrlab {

/// One multiplicand of a regression term: a covariate, an outcome (Y) or a
/// response indicator (W).
struct Factor {
  enum class Kind { Covariate, Outcome, Indicator };
  Kind kind = Kind::Covariate;
  std::string cov;  // Covariate only
  Var var = Var::Y1;

  static Factor covariate(std::string name);
  static Factor outcome(Var v);
  static Factor indicator(Var v);
  static Factor of(Var v);

  bool chain_var() const { return kind != Kind::Covariate; }
  std::string text() const;
  bool operator==(const Factor&) const = default;
  bool operator<(const Factor& o) const;
};

/// A term in a conditional model's linear predictor. Zero factors denote the
/// intercept; one factor a main effect; two factors a pairwise interaction.
/// Interactions are canonically ordered and pairwise only.
struct Term {
  std::vector<Factor> factors;

  static Term intercept();
  static Term covariate(std::string name);
  static Term outcome(Var v);
  static Term indicator(Var v);
  static Term interaction(Factor a, Factor b);

  bool is_intercept() const { return factors.empty(); }
  bool is_interaction() const { return factors.size() == 2; }
  /// True when any factor is a covariate (such terms never count against the
  /// identification budget).
  bool involves_covariate() const;
  bool involves(Var v) const;
  /// Chain-order position of the latest chain variable referenced, or -1.
  int latest_var() const;

  std::string text() const;
  bool operator==(const Term&) const = default;
  bool operator<(const Term& o) const;
};

/// Parses "1", "x", "y1", "w1", "y1:y2", "x:y1". Chain-variable tokens are
/// case-insensitive; anything else is a covariate name.
Term parse_term(const std::string& text);

struct ConditionalModel {
  Var response = Var::Y1;
  std::vector<Term> terms;
  /// Coefficients frozen at a given value and excluded from sampling.
  std::map<Term, double> fixed;

  bool is_fixed(const Term& t) const { return fixed.count(t) > 0; }
  int n_free() const { return static_cast<int>(terms.size() - fixed.size()); }
  std::string text() const;
};

struct ModelSpec {
  StudyDesign design;
  /// Chain order is fixed: Y1, Y2, W1 and, for three-wave designs, Y3, W2.
  std::vector<ConditionalModel> chain;

  const ConditionalModel* find(Var response) const;
  ConditionalModel* find(Var response);
  std::string text() const;
};

struct ValidationReport {
  bool pass = true;
  int free_noncovariate_params = 0;  // counting the implicit sum-to-one
  int budget = 0;
  std::vector<std::string> violations;
};

/// Contingency-table size for the design's variable set: 8 or 32.
int cell_count(const StudyDesign& d);

/// Identified quantities available from the observed data, including the
/// fully observed joint cells: {7, 16, 20, 20, 22} across the five variants.
int independent_constraints(const StudyDesign& d);

/// Checks structural soundness (chain order, pairwise interactions), the
/// identification budget, and the per-variant forbidden-term rules. Terms
/// frozen via `fixed` are exempt from the forbidden-term rules.
ValidationReport validate_identified(const ModelSpec& spec);

/// Throws NotIdentified with the report's violations when validation fails.
void require_identified(const ModelSpec& spec);

/// The just-identified additive-nonignorable chain for a design, with every
/// covariate entering every conditional model as a main effect.
ModelSpec default_an_spec(const StudyDesign& d,
                          const std::vector<std::string>& covariates);

/// Text format: one line per conditional model,
///   `response ~ term + term + fix(term=value)`.
ModelSpec parse_spec(const std::string& text, const StudyDesign& design);
ModelSpec load_spec(const std::string& path, const StudyDesign& design);
void save_spec(const ModelSpec& spec, const std::string& path);

}  // namespace attrlab

#endif
