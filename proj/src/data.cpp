#include "attrlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "util.hpp"

namespace attrlab {

const char* var_name(Var v) {
  switch (v) {
    case Var::Y1: return "y1";
    case Var::Y2: return "y2";
    case Var::W1: return "w1";
    case Var::Y3: return "y3";
    case Var::W2: return "w2";
  }
  return "?";
}

bool is_indicator(Var v) { return v == Var::W1 || v == Var::W2; }

const char* cohort_name(Cohort c) {
  switch (c) {
    case Cohort::Panel: return "Panel";
    case Cohort::R1: return "R1";
    case Cohort::R2: return "R2";
  }
  return "?";
}

const char* variant_name(DesignVariant v) {
  switch (v) {
    case DesignVariant::TwoWave: return "two_wave";
    case DesignVariant::ThreeMonotoneNoFollow:
      return "three_monotone_nofollow";
    case DesignVariant::ThreeReturnersNoFollow:
      return "three_returners_nofollow";
    case DesignVariant::ThreeMonotoneFollow: return "three_monotone_follow";
    case DesignVariant::ThreeReturnersFollow: return "three_returners_follow";
  }
  return "?";
}

DesignVariant parse_variant(const std::string& name) {
  const std::string n = lower(trim(name));
  for (int i = 0; i <= static_cast<int>(DesignVariant::ThreeReturnersFollow);
       ++i) {
    auto v = static_cast<DesignVariant>(i);
    if (n == variant_name(v)) return v;
  }
  fail(Errc::InvalidArgument, "unknown design variant: " + name);
}

StudyDesign StudyDesign::make(DesignVariant v) {
  StudyDesign d;
  d.variant = v;
  d.n_waves = (v == DesignVariant::TwoWave) ? 2 : 3;
  return d;
}

CellRule pattern_rule(const StudyDesign& d, Cohort c, Var v) {
  if (!d.in_design(v))
    fail(Errc::InvalidArgument,
         std::string("variable ") + var_name(v) + " is not part of a " +
             variant_name(d.variant) + " design");
  if (!d.permits_cohort(c))
    fail(Errc::PatternViolation, std::string("cohort ") + cohort_name(c) +
                                     " not permitted under " +
                                     variant_name(d.variant));
  switch (c) {
    case Cohort::Panel:
      return CellRule::Observable;
    case Cohort::R1:
      if (v == Var::Y2) return CellRule::Observable;
      if ((v == Var::Y3 || v == Var::W2) && d.follow_up())
        return CellRule::Observable;
      return CellRule::StructurallyMissing;
    case Cohort::R2:
      return v == Var::Y3 ? CellRule::Observable
                          : CellRule::StructurallyMissing;
  }
  return CellRule::StructurallyMissing;
}

namespace {

void set_status(CaseRecord& r, Var v, CellStatus s) {
  r.status[static_cast<int>(v)] = s;
}

bool present(const CaseRecord& r, Var v) { return r.val(v) != kMissing; }

[[noreturn]] void case_fail(Errc code, const CaseRecord& r,
                            const std::string& what) {
  fail(code, "case '" + r.case_id + "' (" + cohort_name(r.cohort) + "): " +
                 what);
}

void require_present(const CaseRecord& r, Var v) {
  if (!present(r, v))
    case_fail(Errc::MissingRequiredValue, r,
              std::string(var_name(v)) + " is required by the design");
}

void require_absent(const CaseRecord& r, Var v, const char* why) {
  if (present(r, v))
    case_fail(Errc::PatternViolation, r,
              std::string(var_name(v)) + " observed although " + why);
}

/// Outcome governed by a response indicator: required when the indicator is
/// one, attrition-missing when it is zero.
void classify_indicated(CaseRecord& r, Var outcome, Var indicator) {
  if (r.val(indicator) == 1) {
    if (!present(r, outcome))
      case_fail(Errc::InconsistentIndicator, r,
                std::string(var_name(indicator)) + "=1 but " +
                    var_name(outcome) + " is missing");
    set_status(r, outcome, CellStatus::Observed);
  } else {
    require_absent(r, outcome,
                   (std::string(var_name(indicator)) + "=0").c_str());
    set_status(r, outcome, CellStatus::AttritionMissing);
  }
}

void classify_case(CaseRecord& r, const StudyDesign& d) {
  if (!d.permits_cohort(r.cohort))
    case_fail(Errc::PatternViolation, r,
              std::string("cohort not permitted under ") +
                  variant_name(d.variant));

  for (int iv = 0; iv < d.n_vars(); ++iv) {
    Var v = static_cast<Var>(iv);
    if (pattern_rule(d, r.cohort, v) == CellRule::StructurallyMissing) {
      require_absent(r, v, "it is structurally missing for this cohort");
      set_status(r, v, CellStatus::StructurallyMissing);
    }
  }

  switch (r.cohort) {
    case Cohort::Panel: {
      require_present(r, Var::Y1);
      set_status(r, Var::Y1, CellStatus::Observed);
      require_present(r, Var::W1);
      set_status(r, Var::W1, CellStatus::Observed);
      classify_indicated(r, Var::Y2, Var::W1);
      if (d.three_wave()) {
        if (d.returners()) {
          // W2 is defined for every panel case, whatever W1 was.
          require_present(r, Var::W2);
          set_status(r, Var::W2, CellStatus::Observed);
          classify_indicated(r, Var::Y3, Var::W2);
        } else if (r.val(Var::W1) == 1) {
          require_present(r, Var::W2);
          set_status(r, Var::W2, CellStatus::Observed);
          classify_indicated(r, Var::Y3, Var::W2);
        } else {
          // Monotone dropout: out of the study from wave 2 onward.
          require_absent(r, Var::W2, "w1=0 under a monotone design");
          require_absent(r, Var::Y3, "w1=0 under a monotone design");
          set_status(r, Var::W2, CellStatus::StructurallyMissing);
          set_status(r, Var::Y3, CellStatus::StructurallyMissing);
        }
      }
      break;
    }
    case Cohort::R1: {
      require_present(r, Var::Y2);
      set_status(r, Var::Y2, CellStatus::Observed);
      if (d.three_wave() && d.follow_up()) {
        require_present(r, Var::W2);
        set_status(r, Var::W2, CellStatus::Observed);
        classify_indicated(r, Var::Y3, Var::W2);
      }
      break;
    }
    case Cohort::R2: {
      require_present(r, Var::Y3);
      set_status(r, Var::Y3, CellStatus::Observed);
      break;
    }
  }
}

void covariate_balance_warnings(PanelDataset& ds) {
  const int ncov = ds.n_cov();
  for (int j = 1; j < ncov; ++j) {
    double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
    long n[3] = {0, 0, 0};
    for (const auto& c : ds.cases) {
      int g = static_cast<int>(c.cohort);
      sum[g] += c.x[j];
      sq[g] += c.x[j] * c.x[j];
      ++n[g];
    }
    for (int g = 1; g <= 2; ++g) {
      if (n[g] < 2 || n[0] < 2) continue;
      double m0 = sum[0] / n[0], mg = sum[g] / n[g];
      double v0 = sq[0] / n[0] - m0 * m0, vg = sq[g] / n[g] - mg * mg;
      double se = std::sqrt(std::max(v0, 1e-12) / n[0] +
                            std::max(vg, 1e-12) / n[g]);
      if (std::abs(mg - m0) > 4.0 * se) {
        std::ostringstream w;
        w << "covariate '" << ds.covariate_names[j] << "' mean differs between "
          << cohort_name(static_cast<Cohort>(g)) << " (" << mg
          << ") and Panel (" << m0 << ")";
        ds.warnings.push_back(w.str());
      }
    }
  }
}

Cohort parse_cohort(const std::string& s, const std::string& origin) {
  const std::string t = lower(trim(s));
  if (t == "panel") return Cohort::Panel;
  if (t == "r1") return Cohort::R1;
  if (t == "r2") return Cohort::R2;
  fail(Errc::MalformedFile, origin + ": unknown cohort '" + s + "'");
}

std::int8_t parse_cell(const std::string& s, const std::string& origin,
                       const char* col) {
  const std::string t = trim(s);
  if (t == "?" || t.empty()) return kMissing;
  if (t == "0") return 0;
  if (t == "1") return 1;
  fail(Errc::MalformedFile,
       origin + ": column " + col + " must be 0, 1 or '?', got '" + s + "'");
}

}  // namespace

void validate_and_classify(PanelDataset& ds) {
  for (auto& c : ds.cases) classify_case(c, ds.design);
  ds.warnings.clear();
  covariate_balance_warnings(ds);
}

Counts counts(const PanelDataset& ds) {
  Counts k;
  for (const auto& c : ds.cases) {
    switch (c.cohort) {
      case Cohort::Panel:
        ++k.n_p;
        if (c.val(Var::W1) == 1) ++k.n_cp;
        if (ds.design.three_wave() && c.val(Var::W2) == 1) ++k.n_cp2;
        break;
      case Cohort::R1: ++k.n_r1; break;
      case Cohort::R2: ++k.n_r2; break;
    }
  }
  return k;
}

PanelDataset read_dataset(std::istream& in, const StudyDesign& design,
                          const std::string& origin) {
  std::string header;
  if (!std::getline(in, header))
    fail(Errc::MalformedFile, origin + ": empty file");
  const auto cols = split(trim(header), ',');

  int col_id = -1, col_cohort = -1;
  std::array<int, kNumVars> col_var;
  col_var.fill(-1);
  std::vector<int> cov_cols;
  std::vector<std::string> cov_names = {"intercept"};

  for (size_t i = 0; i < cols.size(); ++i) {
    const std::string name = lower(trim(cols[i]));
    if (name == "case_id") {
      col_id = static_cast<int>(i);
    } else if (name == "cohort") {
      col_cohort = static_cast<int>(i);
    } else if (name.rfind("x_", 0) == 0) {
      cov_cols.push_back(static_cast<int>(i));
      cov_names.push_back(name.substr(2));
    } else {
      bool matched = false;
      for (int v = 0; v < kNumVars; ++v) {
        if (name == var_name(static_cast<Var>(v))) {
          if (!design.in_design(static_cast<Var>(v)))
            fail(Errc::MalformedFile, origin + ": column '" + name +
                                          "' is not part of a " +
                                          variant_name(design.variant) +
                                          " design");
          col_var[v] = static_cast<int>(i);
          matched = true;
          break;
        }
      }
      if (!matched)
        fail(Errc::MalformedFile, origin + ": unknown column '" + name + "'");
    }
  }
  if (col_id < 0 || col_cohort < 0)
    fail(Errc::MalformedFile, origin + ": header must have case_id and cohort");
  for (int v = 0; v < design.n_vars(); ++v)
    if (col_var[v] < 0)
      fail(Errc::MalformedFile, origin + ": missing column '" +
                                    var_name(static_cast<Var>(v)) + "'");

  PanelDataset ds;
  ds.design = design;
  ds.covariate_names = cov_names;

  std::string line;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != cols.size())
      fail(Errc::MalformedFile, origin + ":" + std::to_string(lineno) +
                                    ": expected " +
                                    std::to_string(cols.size()) + " fields");
    const std::string where = origin + ":" + std::to_string(lineno);
    CaseRecord r;
    r.case_id = trim(f[col_id]);
    if (r.case_id.empty())
      fail(Errc::MalformedFile, where + ": empty case_id");
    r.cohort = parse_cohort(f[col_cohort], where);
    r.x.resize(cov_names.size());
    r.x[0] = 1.0;
    for (size_t j = 0; j < cov_cols.size(); ++j) {
      const std::string raw = trim(f[cov_cols[j]]);
      if (raw == "?" || raw.empty())
        fail(Errc::MissingRequiredValue,
             where + ": covariates must be fully observed (x_" +
                 cov_names[j + 1] + ")");
      if (!parse_double(raw, r.x[j + 1]))
        fail(Errc::MalformedFile,
             where + ": bad covariate value '" + raw + "'");
    }
    for (int v = 0; v < design.n_vars(); ++v)
      r.value[v] = parse_cell(f[col_var[v]], where,
                              var_name(static_cast<Var>(v)));
    ds.cases.push_back(std::move(r));
  }

  validate_and_classify(ds);
  return ds;
}

PanelDataset load_dataset(const std::string& path, const StudyDesign& design) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open " + path);
  return read_dataset(in, design, path);
}

void write_dataset(const PanelDataset& ds, std::ostream& out) {
  out << "case_id,cohort";
  for (int j = 1; j < ds.n_cov(); ++j)
    out << ",x_" << ds.covariate_names[j];
  for (int v = 0; v < ds.design.n_vars(); ++v)
    out << ',' << var_name(static_cast<Var>(v));
  out << '\n';
  std::ostringstream num;
  for (const auto& c : ds.cases) {
    out << c.case_id << ',' << cohort_name(c.cohort);
    for (int j = 1; j < ds.n_cov(); ++j) {
      num.str("");
      num << c.x[j];
      out << ',' << num.str();
    }
    for (int v = 0; v < ds.design.n_vars(); ++v) {
      if (c.value[v] == kMissing)
        out << ",?";
      else
        out << ',' << static_cast<int>(c.value[v]);
    }
    out << '\n';
  }
}

void save_dataset(const PanelDataset& ds, const std::string& path) {
  std::ostringstream ss;
  write_dataset(ds, ss);
  write_file_atomic(path, ss.str());
}

StudyDesign load_design(const std::string& path) {
  const std::string text = read_file(path);
  long n_waves = -1;
  std::string variant;
  for (const auto& raw : split(text, '\n')) {
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(Errc::MalformedFile, path + ": expected key = value, got '" +
                                    line + "'");
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "n_waves") {
      if (!parse_long(val, n_waves))
        fail(Errc::MalformedFile, path + ": bad n_waves '" + val + "'");
    } else if (key == "variant") {
      variant = val;
    } else {
      fail(Errc::MalformedFile, path + ": unknown key '" + key + "'");
    }
  }
  if (variant.empty())
    fail(Errc::MalformedFile, path + ": missing variant");
  StudyDesign d = StudyDesign::make(parse_variant(variant));
  if (n_waves >= 0 && n_waves != d.n_waves)
    fail(Errc::MalformedFile,
         path + ": n_waves " + std::to_string(n_waves) +
             " inconsistent with variant " + variant_name(d.variant));
  return d;
}

void save_design(const StudyDesign& d, const std::string& path) {
  std::ostringstream ss;
  ss << "n_waves = " << d.n_waves << "\n"
     << "variant = " << variant_name(d.variant) << "\n";
  write_file_atomic(path, ss.str());
}

}  // namespace attrlab
