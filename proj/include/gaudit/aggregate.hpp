#pragma once

#include <map>
#include <span>
#include <vector>

#include "gaudit/domain.hpp"
#include "gaudit/gforest.hpp"
#include "gaudit/riskfit.hpp"
#include "gaudit/synthgen.hpp"

namespace gaudit {

using ForestsByYear = std::map<int, std::vector<TreeRecord>>;
using StatsMap = std::map<GroupSignature, GroupStats>;

// Per signature and year: the number of trees with a leaf carrying exactly
// that signature, and the mean over those trees of the leaf's in-bag mean
// residual. The overall mean is the unweighted mean of the per-year means.
// Throws YearMismatch when the forests' years differ from `years`.
StatsMap collect(const ForestsByYear& forests, int n_trees, std::span<const int> years);

// Keeps signatures whose tree fraction is at least `threshold` in every one
// of `years` (inclusive boundary).
StatsMap persistence_filter(const StatsMap& stats, double threshold, std::span<const int> years);

// Single-year variant used for the per-year report.
StatsMap persistence_filter_year(const StatsMap& stats, double threshold, int year);

using FitsByYear = std::map<int, FitResult>;

// Fills observed_mean_residual and member_count per year by scanning every
// panel row that satisfies the signature. Groups with no members keep
// member_count 0 and an observed mean of 0. Throws YearMismatch when a
// year's panel or fit is missing, Misalignment when they differ in length.
StatsMap observed_residuals(const StatsMap& stats, const PanelSet& panels, const FitsByYear& fits);

struct RankedGroups {
  std::vector<GroupStats> under;  // most negative overall mean first
  std::vector<GroupStats> over;   // most positive overall mean first
};

// Top-k groups on each side of zero; groups with a zero mean are in neither
// list. Ties are ordered by signature.
RankedGroups rank(const StatsMap& stats, int top_k);

}  // namespace gaudit
