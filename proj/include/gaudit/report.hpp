#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gaudit/aggregate.hpp"
#include "gaudit/riskfit.hpp"
#include "gaudit/synthgen.hpp"

namespace gaudit::report {

// Whole dollars with thousands separators and a leading minus: -5,000.
std::string format_dollars(double value);

// One row per group (undercompensated section first), one column per
// component constrained by any shown group. Present constraints are filled
// circles, absent constraints unfilled circles; a bar and label give the
// overall mean predicted residual. Throws EmptyInput when there are no groups.
std::string render_dot_plot(const RankedGroups& groups, std::span<const std::string> labels,
                            std::string_view title);
void dot_plot(const RankedGroups& groups, std::span<const std::string> labels,
              const std::filesystem::path& path, std::string_view title = "");

// One point per group-year with an observed mean: predicted on x, observed
// on y, both axes on the same scale, identity line drawn. Throws EmptyInput
// when no group-year has an observed mean.
std::string render_scatter(std::span<const GroupStats> groups, std::string_view title);
void scatter_obs_vs_pred(std::span<const GroupStats> groups, const std::filesystem::path& path,
                         std::string_view title = "");

// Percent of rows with each component, one column per year.
std::string prevalence_table_text(std::span<const PrevalenceRow> rows,
                                  const FormulaProfile& profile);
std::string prevalence_table_csv(std::span<const PrevalenceRow> rows,
                                 const FormulaProfile& profile);

// Mean residual without / with each condition, two columns per year.
std::string residual_table_text(std::span<const ConditionResidualRow> rows,
                                const FormulaProfile& profile);
std::string residual_table_csv(std::span<const ConditionResidualRow> rows,
                               const FormulaProfile& profile);

}  // namespace gaudit::report
