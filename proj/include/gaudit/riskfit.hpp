#pragma once

#include <string>
#include <vector>

#include "gaudit/domain.hpp"

namespace gaudit {

// Columns of the payment regression: one indicator per Age×Sex cell followed
// by the HCC indicators. There is no intercept; the cells partition the
// sample. Market enters as an absorbed fixed effect.
struct DesignSpec {
  int cell_count = 0;
  int hcc_count = 0;
  std::vector<std::string> column_names;

  static DesignSpec for_profile(const FormulaProfile& profile);
  int column_count() const noexcept { return cell_count + hcc_count; }
};

struct FitResult {
  int year = 0;  // feature year of the sample
  std::vector<std::string> column_names;
  // Indexed by design column; dropped columns hold 0 and are listed in
  // dropped_columns.
  std::vector<double> beta;
  std::vector<int> retained_columns;
  std::vector<int> dropped_columns;
  std::vector<std::string> person_ids;
  std::vector<double> predictions;
  std::vector<double> residuals;  // prediction - spend
  double r_squared = 0.0;
  int market_count = 0;
  int singleton_markets = 0;
  bool jittered = false;  // ridge jitter was needed to factor the system
};

// Least squares of spend on the design after absorbing market fixed effects
// by within-market demeaning. Predictions add the market means back, so the
// residuals are those of the full model. Collinear or empty columns are
// dropped scanning left to right (the lowest index of a dependent set is
// kept). Throws EmptyPanel, YearMismatch (rows from several years) or
// DegenerateDesign (nothing left to estimate).
FitResult fit(const Panel& panel_year, const DesignSpec& design, int threads = 1);

struct ConditionResidualRow {
  int year = 0;
  int component = 0;
  double mean_absent = 0.0;
  double mean_present = 0.0;
  std::int64_t n_absent = 0;
  std::int64_t n_present = 0;
};

// Mean residual with and without each chronic condition component. Negative
// means the formula underpays. Throws Misalignment when fit and panel rows
// do not line up.
std::vector<ConditionResidualRow> residual_by_condition(const FitResult& fit, const Panel& panel,
                                                        const FormulaProfile& profile);

}  // namespace gaudit
