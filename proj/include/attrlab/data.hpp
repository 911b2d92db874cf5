#ifndef ATTRLAB_DATA_HPP
#define ATTRLAB_DATA_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "attrlab/error.hpp"

namespace attrlab {

/// Chain variables in chain order. Two-wave designs use Y1, Y2, W1 only.
enum class Var : int { Y1 = 0, Y2 = 1, W1 = 2, Y3 = 3, W2 = 4 };
inline constexpr int kNumVars = 5;

const char* var_name(Var v);
bool is_indicator(Var v);

enum class Cohort : int { Panel = 0, R1 = 1, R2 = 2 };
const char* cohort_name(Cohort c);

enum class DesignVariant : int {
  TwoWave = 0,
  ThreeMonotoneNoFollow,
  ThreeReturnersNoFollow,
  ThreeMonotoneFollow,
  ThreeReturnersFollow,
};

const char* variant_name(DesignVariant v);
DesignVariant parse_variant(const std::string& name);

struct StudyDesign {
  int n_waves = 2;  // 2 or 3
  DesignVariant variant = DesignVariant::TwoWave;

  static StudyDesign make(DesignVariant v);

  int n_vars() const { return n_waves == 2 ? 3 : 5; }
  bool three_wave() const { return n_waves == 3; }
  bool returners() const {
    return variant == DesignVariant::ThreeReturnersNoFollow ||
           variant == DesignVariant::ThreeReturnersFollow;
  }
  bool follow_up() const {
    return variant == DesignVariant::ThreeMonotoneFollow ||
           variant == DesignVariant::ThreeReturnersFollow;
  }
  bool in_design(Var v) const { return static_cast<int>(v) < n_vars(); }
  bool permits_cohort(Cohort c) const {
    return c != Cohort::R2 || three_wave();
  }

  bool operator==(const StudyDesign&) const = default;
};

/// Unconditional observation-pattern table entry: whether a variable can
/// ever be observed for a cohort under a design.
enum class CellRule { Observable, StructurallyMissing };

/// Total over every (design, cohort, variable-in-design) triple.
CellRule pattern_rule(const StudyDesign& d, Cohort c, Var v);

/// Per-cell status after load-time classification.
enum class CellStatus : std::int8_t {
  Observed = 0,
  AttritionMissing = 1,     // observable per design, lost to nonresponse
  StructurallyMissing = 2,  // never collected for this case by design
  NotInDesign = 3,
};

inline constexpr std::int8_t kMissing = -1;

struct CaseRecord {
  std::string case_id;
  Cohort cohort = Cohort::Panel;
  /// Covariate values parallel to PanelDataset::covariate_names;
  /// slot 0 is the intercept and is always 1.
  std::vector<double> x;
  /// Chain variable values indexed by Var; 0/1 when observed, -1 otherwise.
  std::array<std::int8_t, kNumVars> value{kMissing, kMissing, kMissing,
                                          kMissing, kMissing};
  std::array<CellStatus, kNumVars> status{
      CellStatus::NotInDesign, CellStatus::NotInDesign,
      CellStatus::NotInDesign, CellStatus::NotInDesign,
      CellStatus::NotInDesign};

  std::int8_t val(Var v) const { return value[static_cast<int>(v)]; }
  CellStatus stat(Var v) const { return status[static_cast<int>(v)]; }
  bool observed(Var v) const { return stat(v) == CellStatus::Observed; }
  bool missing_cell(Var v) const {
    CellStatus s = stat(v);
    return s == CellStatus::AttritionMissing ||
           s == CellStatus::StructurallyMissing;
  }
};

struct Counts {
  long n_p = 0;    // original panel cases
  long n_cp = 0;   // panel cases with W1 = 1
  long n_cp2 = 0;  // panel cases with W2 = 1 (three-wave designs)
  long n_r1 = 0;
  long n_r2 = 0;

  bool operator==(const Counts&) const = default;
};

/// Immutable after load; safe to share across threads read-only.
struct PanelDataset {
  StudyDesign design;
  /// covariate_names[0] == "intercept"; the remaining names come from the
  /// file's x_<name> columns in order.
  std::vector<std::string> covariate_names;
  std::vector<CaseRecord> cases;
  /// Set when the refreshment covariate means deviate notably from the
  /// panel's (reported, never enforced).
  std::vector<std::string> warnings;

  long n_cases() const { return static_cast<long>(cases.size()); }
  int n_cov() const { return static_cast<int>(covariate_names.size()); }
};

Counts counts(const PanelDataset& ds);

/// Validates every record against the design's observation pattern and
/// classifies each missing cell as structural or attrition.
PanelDataset load_dataset(const std::string& path, const StudyDesign& design);
PanelDataset read_dataset(std::istream& in, const StudyDesign& design,
                          const std::string& origin = "<stream>");

void save_dataset(const PanelDataset& ds, const std::string& path);
void write_dataset(const PanelDataset& ds, std::ostream& out);

/// Design descriptor file: `n_waves = 2`, `variant = two_wave` lines.
StudyDesign load_design(const std::string& path);
void save_design(const StudyDesign& d, const std::string& path);

/// Re-runs the per-case pattern validation/classification used by the
/// loader. `cases` must carry observed values (missing cells = -1); statuses
/// are recomputed in place.
void validate_and_classify(PanelDataset& ds);

}  // namespace attrlab

#endif
