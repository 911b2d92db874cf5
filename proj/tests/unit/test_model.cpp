#include <doctest.h>

#include <algorithm>
#include <random>

#include "attrlab/error.hpp"
#include "attrlab/model.hpp"

using namespace attrlab;

namespace {

const DesignVariant kAllVariants[] = {
    DesignVariant::TwoWave, DesignVariant::ThreeMonotoneNoFollow,
    DesignVariant::ThreeReturnersNoFollow, DesignVariant::ThreeMonotoneFollow,
    DesignVariant::ThreeReturnersFollow};

int free_count(const ModelSpec& s) {
  int n = 0;
  for (const auto& m : s.chain) n += m.n_free();
  return n;
}

int free_noncov_count(const ModelSpec& s) {
  int n = 0;
  for (const auto& m : s.chain)
    for (const auto& t : m.terms)
      if (!m.is_fixed(t) && !t.involves_covariate()) ++n;
  return n;
}

}  // namespace

TEST_CASE("cell_count is 8 for two waves and 32 for three") {
  CHECK(cell_count(StudyDesign::make(DesignVariant::TwoWave)) == 8);
  CHECK(cell_count(StudyDesign::make(DesignVariant::ThreeMonotoneNoFollow)) ==
        32);
  CHECK(cell_count(StudyDesign::make(DesignVariant::ThreeReturnersFollow)) ==
        32);
}

TEST_CASE("independent_constraints per design variant") {
  CHECK(independent_constraints(StudyDesign::make(DesignVariant::TwoWave)) ==
        7);
  CHECK(independent_constraints(
            StudyDesign::make(DesignVariant::ThreeMonotoneNoFollow)) == 16);
  CHECK(independent_constraints(
            StudyDesign::make(DesignVariant::ThreeReturnersNoFollow)) == 20);
  CHECK(independent_constraints(
            StudyDesign::make(DesignVariant::ThreeMonotoneFollow)) == 20);
  CHECK(independent_constraints(
            StudyDesign::make(DesignVariant::ThreeReturnersFollow)) == 22);
}

TEST_CASE("default AN spec is just-identified for every variant") {
  for (DesignVariant v : kAllVariants) {
    const StudyDesign d = StudyDesign::make(v);
    for (const auto& covs : {std::vector<std::string>{},
                             std::vector<std::string>{"x"},
                             std::vector<std::string>{"a", "b", "c"}}) {
      const ModelSpec spec = default_an_spec(d, covs);
      const auto rep = validate_identified(spec);
      CHECK(rep.pass);
      // Free non-covariate parameters plus sum-to-one saturate the budget.
      CHECK(free_noncov_count(spec) + 1 == independent_constraints(d));
    }
  }
}

TEST_CASE("two-wave default spec has the expected coefficient counts") {
  const StudyDesign d = StudyDesign::make(DesignVariant::TwoWave);
  CHECK(free_count(default_an_spec(d, {"x"})) == 9);
  CHECK(free_count(default_an_spec(d, {})) == 6);
}

TEST_CASE("returners default spec matches the five-regression shape") {
  const StudyDesign d = StudyDesign::make(DesignVariant::ThreeReturnersNoFollow);
  const ModelSpec spec = default_an_spec(d, {"x"});
  const ConditionalModel* y3 = spec.find(Var::Y3);
  REQUIRE(y3 != nullptr);
  const Term y1w1 = Term::interaction(Factor::outcome(Var::Y1),
                                      Factor::indicator(Var::W1));
  const Term y1y2 = Term::interaction(Factor::outcome(Var::Y1),
                                      Factor::outcome(Var::Y2));
  CHECK(std::count(y3->terms.begin(), y3->terms.end(), y1w1) == 1);
  CHECK(std::count(y3->terms.begin(), y3->terms.end(), y1y2) == 1);
  CHECK(std::count(y3->terms.begin(), y3->terms.end(),
                   Term::indicator(Var::W1)) == 1);
  const ConditionalModel* w2 = spec.find(Var::W2);
  REQUIRE(w2 != nullptr);
  CHECK(std::count(w2->terms.begin(), w2->terms.end(),
                   Term::outcome(Var::Y3)) == 1);
  CHECK(std::count(w2->terms.begin(), w2->terms.end(), y1w1) == 1);
}

TEST_CASE("free y1:y2 in the selection model is rejected") {
  const StudyDesign d = StudyDesign::make(DesignVariant::TwoWave);
  ModelSpec spec = default_an_spec(d, {"x"});
  const Term y1y2 = Term::interaction(Factor::outcome(Var::Y1),
                                      Factor::outcome(Var::Y2));
  spec.find(Var::W1)->terms.push_back(y1y2);
  const auto rep = validate_identified(spec);
  CHECK(!rep.pass);
  REQUIRE(!rep.violations.empty());
  CHECK(rep.violations[0].find("y1:y2") != std::string::npos);

  // Freezing the same term turns the spec identifiable again.
  spec.find(Var::W1)->fixed[y1y2] = 0.0;
  CHECK(validate_identified(spec).pass);
  CHECK_THROWS_AS(
      [&] {
        ModelSpec bad = default_an_spec(d, {"x"});
        bad.find(Var::W1)->terms.push_back(y1y2);
        require_identified(bad);
      }(),
      Error);
}

TEST_CASE("y2:w1 is rejected in returners designs without follow-up") {
  const StudyDesign d = StudyDesign::make(DesignVariant::ThreeReturnersNoFollow);
  ModelSpec spec = default_an_spec(d, {"x"});
  const Term y2w1 = Term::interaction(Factor::outcome(Var::Y2),
                                      Factor::indicator(Var::W1));
  spec.find(Var::Y3)->terms.push_back(y2w1);
  const auto rep = validate_identified(spec);
  CHECK(!rep.pass);
  CHECK(rep.violations[0].find("y2:w1") != std::string::npos);

  // ...but is identified when the refreshment sample is followed up.
  ModelSpec follow = default_an_spec(
      StudyDesign::make(DesignVariant::ThreeReturnersFollow), {"x"});
  CHECK(validate_identified(follow).pass);
}

TEST_CASE("monotone designs reject any w1 term in the wave-3 models") {
  const StudyDesign d = StudyDesign::make(DesignVariant::ThreeMonotoneNoFollow);
  ModelSpec spec = default_an_spec(d, {"x"});
  spec.find(Var::Y3)->terms.push_back(Term::indicator(Var::W1));
  CHECK(!validate_identified(spec).pass);
}

TEST_CASE("monotone-with-follow-up permits y2:w1 but not y1:w1") {
  const StudyDesign d = StudyDesign::make(DesignVariant::ThreeMonotoneFollow);
  CHECK(validate_identified(default_an_spec(d, {"x"})).pass);

  ModelSpec bad = default_an_spec(d, {"x"});
  // Swap the identified y2:w1 interaction for y1:w1.
  const Term y2w1 = Term::interaction(Factor::outcome(Var::Y2),
                                      Factor::indicator(Var::W1));
  const Term y1w1 = Term::interaction(Factor::outcome(Var::Y1),
                                      Factor::indicator(Var::W1));
  auto& terms = bad.find(Var::Y3)->terms;
  *std::find(terms.begin(), terms.end(), y2w1) = y1w1;
  CHECK(!validate_identified(bad).pass);
}

TEST_CASE("interactions with y3 are rejected in the w2 model") {
  const StudyDesign d = StudyDesign::make(DesignVariant::ThreeReturnersFollow);
  ModelSpec spec = default_an_spec(d, {"x"});
  spec.find(Var::W2)->terms.push_back(Term::interaction(
      Factor::outcome(Var::Y2), Factor::outcome(Var::Y3)));
  CHECK(!validate_identified(spec).pass);
}

TEST_CASE("exceeding the identification budget is rejected") {
  // Two-wave with an extra free outcome term in w1 beyond the AN chain.
  const StudyDesign d = StudyDesign::make(DesignVariant::TwoWave);
  ModelSpec spec = default_an_spec(d, {});
  // y1:y2 would both break the rule and the budget; instead overfill y2's
  // model with a duplicate-free but budget-busting construction is not
  // possible without breaking chain order, so check the budget arithmetic
  // directly through the report.
  const auto rep = validate_identified(spec);
  CHECK(rep.free_noncovariate_params == rep.budget);
}

TEST_CASE("covariate interactions are permitted and do not hit the budget") {
  const StudyDesign d = StudyDesign::make(DesignVariant::TwoWave);
  ModelSpec spec = default_an_spec(d, {"x"});
  spec.find(Var::W1)->terms.push_back(Term::interaction(
      Factor::covariate("x"), Factor::outcome(Var::Y2)));
  const auto rep = validate_identified(spec);
  CHECK(rep.pass);
  CHECK(rep.free_noncovariate_params == rep.budget);
}

TEST_CASE("chain-order violations are structural errors") {
  const StudyDesign d = StudyDesign::make(DesignVariant::TwoWave);
  ModelSpec spec = default_an_spec(d, {});
  spec.find(Var::Y2)->terms.push_back(Term::indicator(Var::W1));
  CHECK_THROWS_AS(validate_identified(spec), Error);
}

TEST_CASE("spec text round-trips through parse") {
  for (DesignVariant v : kAllVariants) {
    const StudyDesign d = StudyDesign::make(v);
    ModelSpec spec = default_an_spec(d, {"x", "z"});
    if (v == DesignVariant::TwoWave)
      spec.find(Var::W1)->fixed[Term::outcome(Var::Y2)] = 0.25;
    const ModelSpec back = parse_spec(spec.text(), d);
    CHECK(back.text() == spec.text());
    CHECK(validate_identified(back).pass == validate_identified(spec).pass);
  }
}

TEST_CASE("parse_term handles the full token grammar") {
  CHECK(parse_term("1").is_intercept());
  CHECK(parse_term("Y1") == Term::outcome(Var::Y1));
  CHECK(parse_term("w2") == Term::indicator(Var::W2));
  CHECK(parse_term("age1") == Term::covariate("age1"));
  CHECK(parse_term("y1:y2") == Term::interaction(Factor::outcome(Var::Y1),
                                                 Factor::outcome(Var::Y2)));
  // Canonical operand order.
  CHECK(parse_term("y2:y1") == parse_term("y1:y2"));
  CHECK(parse_term("x:y1") == Term::interaction(Factor::covariate("x"),
                                                Factor::outcome(Var::Y1)));
  CHECK_THROWS_AS(parse_term("y1:y2:w1"), Error);
  CHECK_THROWS_AS(parse_term("y1:y1"), Error);
}

TEST_CASE("malformed spec text is rejected") {
  const StudyDesign d = StudyDesign::make(DesignVariant::TwoWave);
  CHECK_THROWS_AS(parse_spec("y1 + x\n", d), Error);
  CHECK_THROWS_AS(parse_spec("q9 ~ 1\n", d), Error);
  CHECK_THROWS_AS(parse_spec("y1 ~ 1 + fix(x=oops)\n", d), Error);
  // Structural validation catches wrong chain shape.
  CHECK_THROWS_AS(validate_identified(parse_spec("y1 ~ 1\n", d)), Error);
}
