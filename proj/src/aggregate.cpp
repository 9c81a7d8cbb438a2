#include "gaudit/aggregate.hpp"

#include <algorithm>
#include <set>

#include "gaudit/errors.hpp"

namespace gaudit {

namespace {

// Absorbs the rounding of count / n_trees so that e.g. 10 of 1000 trees
// passes a 0.01 threshold.
constexpr double kFractionSlack = 1e-12;

}  // namespace

StatsMap collect(const ForestsByYear& forests, int n_trees, std::span<const int> years) {
  const std::set<int> wanted(years.begin(), years.end());
  std::set<int> have;
  for (const auto& [year, _] : forests) have.insert(year);
  if (wanted != have) throw YearMismatch("collect: forests do not cover exactly the configured years");
  if (n_trees < 1) throw ConfigError("collect: n_trees must be >= 1");

  struct Accum {
    int trees = 0;
    double sum_of_means = 0.0;
  };
  std::map<GroupSignature, std::map<int, Accum>> acc;
  for (const auto& [year, trees] : forests) {
    for (const auto& tree : trees) {
      if (!tree.has_groups()) continue;
      std::set<GroupSignature> seen;
      for (const auto& leaf : tree.leaves) {
        if (!seen.insert(leaf.signature).second) {
          throw Error(ErrorKind::kInternal, "collect: signature repeated within tree " +
                                                std::to_string(tree.tree_index));
        }
        auto& a = acc[leaf.signature][year];
        ++a.trees;
        a.sum_of_means += leaf.mean_residual;
      }
    }
  }

  StatsMap out;
  for (const auto& [sig, per_year] : acc) {
    GroupStats g;
    g.signature = sig;
    double total = 0.0;
    for (const auto& [year, a] : per_year) {
      YearStats ys;
      ys.tree_count = a.trees;
      ys.tree_fraction = static_cast<double>(a.trees) / static_cast<double>(n_trees);
      ys.mean_predicted_residual = a.sum_of_means / static_cast<double>(a.trees);
      total += ys.mean_predicted_residual;
      g.per_year.emplace(year, ys);
    }
    g.overall_mean_predicted_residual = total / static_cast<double>(per_year.size());
    out.emplace(sig, std::move(g));
  }
  return out;
}

StatsMap persistence_filter(const StatsMap& stats, double threshold, std::span<const int> years) {
  StatsMap out;
  for (const auto& [sig, g] : stats) {
    const bool keep = std::all_of(years.begin(), years.end(), [&](int y) {
      auto it = g.per_year.find(y);
      return it != g.per_year.end() && it->second.tree_fraction >= threshold - kFractionSlack;
    });
    if (keep) out.emplace(sig, g);
  }
  return out;
}

StatsMap persistence_filter_year(const StatsMap& stats, double threshold, int year) {
  StatsMap out;
  for (const auto& [sig, g] : stats) {
    auto it = g.per_year.find(year);
    if (it == g.per_year.end() || it->second.tree_fraction < threshold - kFractionSlack) continue;
    GroupStats single;
    single.signature = sig;
    single.per_year.emplace(year, it->second);
    single.overall_mean_predicted_residual = it->second.mean_predicted_residual;
    out.emplace(sig, std::move(single));
  }
  return out;
}

StatsMap observed_residuals(const StatsMap& stats, const PanelSet& panels, const FitsByYear& fits) {
  StatsMap out = stats;
  for (auto& [sig, g] : out) {
    for (auto& [year, ys] : g.per_year) {
      auto p = panels.find(year);
      auto f = fits.find(year);
      if (p == panels.end() || f == fits.end()) {
        throw YearMismatch("observed_residuals: no panel or fit for year " + std::to_string(year));
      }
      const Panel& panel = p->second;
      const FitResult& fit = f->second;
      if (fit.residuals.size() != panel.size()) {
        throw Misalignment("observed_residuals: fit and panel lengths differ for year " +
                           std::to_string(year));
      }
      double sum = 0.0;
      std::int64_t members = 0;
      for (std::size_t i = 0; i < panel.size(); ++i) {
        if (sig.matches(panel[i].components)) {
          sum += fit.residuals[i];
          ++members;
        }
      }
      ys.member_count = members;
      ys.observed_mean_residual = members > 0 ? sum / static_cast<double>(members) : 0.0;
      ys.observed = true;
    }
  }
  return out;
}

RankedGroups rank(const StatsMap& stats, int top_k) {
  RankedGroups out;
  for (const auto& [sig, g] : stats) {
    if (g.overall_mean_predicted_residual < 0.0) out.under.push_back(g);
    if (g.overall_mean_predicted_residual > 0.0) out.over.push_back(g);
  }
  auto by_under = [](const GroupStats& a, const GroupStats& b) {
    if (a.overall_mean_predicted_residual != b.overall_mean_predicted_residual) {
      return a.overall_mean_predicted_residual < b.overall_mean_predicted_residual;
    }
    return a.signature < b.signature;
  };
  auto by_over = [](const GroupStats& a, const GroupStats& b) {
    if (a.overall_mean_predicted_residual != b.overall_mean_predicted_residual) {
      return a.overall_mean_predicted_residual > b.overall_mean_predicted_residual;
    }
    return a.signature < b.signature;
  };
  std::sort(out.under.begin(), out.under.end(), by_under);
  std::sort(out.over.begin(), out.over.end(), by_over);
  const auto k = static_cast<std::size_t>(std::max(0, top_k));
  if (out.under.size() > k) out.under.resize(k);
  if (out.over.size() > k) out.over.resize(k);
  return out;
}

}  // namespace gaudit
