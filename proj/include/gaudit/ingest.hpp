#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gaudit/aggregate.hpp"
#include "gaudit/domain.hpp"
#include "gaudit/gforest.hpp"
#include "gaudit/riskfit.hpp"
#include "gaudit/synthgen.hpp"

namespace gaudit {

namespace csv {

// RFC-4180: fields containing a comma, quote, CR or LF are quoted and inner
// quotes doubled.
std::string quote(std::string_view field);
std::string join(std::span<const std::string> fields);

// Fixed-point decimal with exactly `digits` fractional digits, correctly
// rounded; "-0.00" is printed as "0.00".
std::string fixed(double value, int digits);

// Splits a whole document into records. `line` reports the 1-based line on
// which each record starts.
class Reader {
 public:
  Reader(std::string text, std::string source);

  bool next(std::vector<std::string>& fields);
  std::size_t line() const noexcept { return record_line_; }
  const std::string& source() const noexcept { return source_; }

 private:
  std::string text_;
  std::string source_;
  std::size_t pos_ = 0;
  std::size_t current_line_ = 1;
  std::size_t record_line_ = 0;
};

Reader open(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace csv

// person_id,feature_year,spend_year,age_band,sex,market,hcc_0..,comp_0..,spend
std::vector<std::string> panel_header(const FormulaProfile& profile);

// Rows are validated against the profile; any violation rejects the whole
// file with RowError (line + field). SchemaMismatch when the header differs,
// IoError when the file cannot be read.
Panel read_panel(const std::filesystem::path& path, const FormulaProfile& profile);

// Spend is written with two decimals; row order is preserved.
void write_panel(const Panel& panel, const std::filesystem::path& path,
                 const FormulaProfile& profile);

// residuals_<year>.csv: person_id,prediction,residual
void write_residuals(const FitResult& fit, const std::filesystem::path& path);
FitResult read_residuals(const std::filesystem::path& path, int year);

// fit_<year>.csv: column,beta,retained
void write_fit(const FitResult& fit, const std::filesystem::path& path);

// forest_<year>.csv: tree_index,leaf_id,signature,member_count,mean_residual.
// Single-leaf trees are written with an empty signature.
void write_forest(std::span<const TreeRecord> forest, std::span<const std::string> labels,
                  const std::filesystem::path& path);
// Rebuilds leaf lists (no internal nodes) from a dump.
std::vector<TreeRecord> read_forest(const std::filesystem::path& path,
                                    std::span<const std::string> labels);

enum class GroupSection { kUnder, kOver, kNeutral };

struct GroupRow {
  GroupSection section = GroupSection::kNeutral;
  int rank = 0;
  GroupStats stats;
};

// section,rank,signature,n_constraints, then per year
// tree_count_Y,tree_fraction_Y,predicted_Y,observed_Y,members_Y, then
// overall_predicted. Observed fields are blank until filled.
void write_groups(std::span<const GroupRow> rows, std::span<const int> years,
                  std::span<const std::string> labels, const std::filesystem::path& path);
std::vector<GroupRow> read_groups(const std::filesystem::path& path,
                                  std::span<const std::string> labels);

// Stats in map order, section by sign, rank = position.
std::vector<GroupRow> group_rows(const StatsMap& stats);
// Under section then over section, ranks starting at 1 in each.
std::vector<GroupRow> group_rows(const RankedGroups& ranked);

void write_prevalence(std::span<const PrevalenceRow> rows, const FormulaProfile& profile,
                      const std::filesystem::path& path);

}  // namespace gaudit
