#include "gaudit/gforest.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "gaudit/errors.hpp"
#include "gaudit/parallel.hpp"
#include "gaudit/riskfit.hpp"

namespace gaudit {

namespace {

// A split whose SSE reduction is this small relative to the node's sum of
// squared residuals is numerically indistinguishable from zero.
constexpr double kMinRelativeGain = 1e-12;

struct OpenLeaf {
  int node = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::uint64_t used = 0;
  std::vector<Constraint> path;
  std::optional<Split> split;
};

std::vector<int> draw_candidates(int component_count, int mtry, std::uint64_t used,
                                 rng::Stream& stream) {
  std::vector<int> pool(static_cast<std::size_t>(component_count));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < mtry; ++i) {
    const auto j = i + static_cast<int>(stream.below(static_cast<std::uint64_t>(component_count - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(mtry));
  std::erase_if(pool, [used](int c) { return (used >> c) & 1u; });
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

ResidualTable ResidualTable::from(const Panel& panel, const FitResult& fit, int component_count) {
  if (fit.residuals.size() != panel.size()) {
    throw Misalignment("residual table: fit has " + std::to_string(fit.residuals.size()) +
                       " rows, panel has " + std::to_string(panel.size()));
  }
  ResidualTable table;
  table.component_count = component_count;
  table.components.reserve(panel.size());
  for (std::size_t i = 0; i < panel.size(); ++i) {
    if (!fit.person_ids.empty() && fit.person_ids[i] != panel[i].person_id) {
      throw Misalignment("residual table: row " + std::to_string(i + 1) + " is person " +
                         panel[i].person_id + " in the panel but " + fit.person_ids[i] +
                         " in the fit");
    }
    table.components.push_back(panel[i].components.bits());
  }
  table.residuals = fit.residuals;
  return table;
}

std::optional<Split> best_split(const ResidualTable& data, std::span<const std::uint32_t> rows,
                                std::span<const int> candidates, int min_node_size) {
  if (rows.empty() || candidates.empty()) return std::nullopt;
  std::uint64_t mask = 0;
  for (int c : candidates) mask |= std::uint64_t{1} << c;

  std::array<double, Indicators::kMaxSize> present_sum{};
  std::array<std::int64_t, Indicators::kMaxSize> present_n{};
  double total = 0.0;
  double sumsq = 0.0;
  for (std::uint32_t row : rows) {
    const double r = data.residuals[row];
    total += r;
    sumsq += r * r;
    for (std::uint64_t bits = data.components[row] & mask; bits != 0; bits &= bits - 1) {
      const int c = std::countr_zero(bits);
      present_sum[static_cast<std::size_t>(c)] += r;
      ++present_n[static_cast<std::size_t>(c)];
    }
  }

  const auto n = static_cast<std::int64_t>(rows.size());
  std::optional<Split> best;
  for (std::uint64_t bits = mask; bits != 0; bits &= bits - 1) {
    const int c = std::countr_zero(bits);
    const std::int64_t n_present = present_n[static_cast<std::size_t>(c)];
    const std::int64_t n_absent = n - n_present;
    if (n_present < min_node_size || n_absent < min_node_size) continue;
    const double mean_present = present_sum[static_cast<std::size_t>(c)] / static_cast<double>(n_present);
    const double mean_absent =
        (total - present_sum[static_cast<std::size_t>(c)]) / static_cast<double>(n_absent);
    const double diff = mean_present - mean_absent;
    const double gain = static_cast<double>(n_present) * static_cast<double>(n_absent) /
                        static_cast<double>(n) * diff * diff;
    if (!(gain > kMinRelativeGain * sumsq)) continue;
    if (!best || gain > best->sse_reduction) best = Split{c, gain};
  }
  return best;
}

int TreeRecord::route(std::uint64_t components) const noexcept {
  int node = 0;
  while (!nodes[static_cast<std::size_t>(node)].is_leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(node)];
    node = ((components >> n.component) & 1u) ? n.present_child : n.absent_child;
  }
  return node;
}

std::vector<std::uint32_t> draw_bootstrap(std::size_t n, rng::Stream& stream) {
  std::vector<std::uint32_t> rows(n);
  for (auto& r : rows) r = static_cast<std::uint32_t>(stream.below(n));
  return rows;
}

TreeRecord grow_tree(const ResidualTable& data, std::vector<std::uint32_t> rows,
                     const TreeParams& params, rng::Stream& stream, int tree_index) {
  const int s = data.component_count;
  if (params.mtry < 1 || params.mtry > s) {
    throw ConfigError("forest.mtry: " + std::to_string(params.mtry) + " outside [1, " +
                      std::to_string(s) + "]");
  }
  if (params.min_node_size < 1) throw ConfigError("forest.min_node_size: must be >= 1");
  if (params.max_leaf_nodes < 2) throw ConfigError("forest.max_leaf_nodes: must be >= 2");

  TreeRecord tree;
  tree.tree_index = tree_index;
  tree.nodes.emplace_back();

  auto evaluate = [&](OpenLeaf& leaf) {
    const auto candidates = draw_candidates(s, params.mtry, leaf.used, stream);
    leaf.split = best_split(data, std::span(rows).subspan(leaf.begin, leaf.end - leaf.begin),
                            candidates, params.min_node_size);
  };

  std::vector<OpenLeaf> frontier;
  frontier.push_back({0, 0, rows.size(), 0, {}, std::nullopt});
  evaluate(frontier.front());

  int leaf_count = 1;
  while (leaf_count < params.max_leaf_nodes) {
    std::size_t pick = frontier.size();
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      const auto& cand = frontier[i];
      if (!cand.split) continue;
      if (pick == frontier.size() || cand.split->sse_reduction > frontier[pick].split->sse_reduction ||
          (cand.split->sse_reduction == frontier[pick].split->sse_reduction &&
           cand.node < frontier[pick].node)) {
        pick = i;
      }
    }
    if (pick == frontier.size()) break;

    OpenLeaf parent = std::move(frontier[pick]);
    frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(pick));
    const int c = parent.split->component;
    const auto first = rows.begin() + static_cast<std::ptrdiff_t>(parent.begin);
    const auto last = rows.begin() + static_cast<std::ptrdiff_t>(parent.end);
    const auto mid = std::stable_partition(
        first, last, [&](std::uint32_t r) { return ((data.components[r] >> c) & 1u) == 0; });
    const auto mid_pos = static_cast<std::size_t>(mid - rows.begin());

    const int absent_id = static_cast<int>(tree.nodes.size());
    const int present_id = absent_id + 1;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& pnode = tree.nodes[static_cast<std::size_t>(parent.node)];
    pnode.component = c;
    pnode.absent_child = absent_id;
    pnode.present_child = present_id;
    ++leaf_count;

    const std::uint64_t used = parent.used | (std::uint64_t{1} << c);
    OpenLeaf absent{absent_id, parent.begin, mid_pos, used, parent.path, std::nullopt};
    absent.path.push_back({c, false});
    OpenLeaf present{present_id, mid_pos, parent.end, used, std::move(parent.path), std::nullopt};
    present.path.push_back({c, true});
    if (leaf_count < params.max_leaf_nodes) {
      evaluate(absent);
      evaluate(present);
    }
    frontier.push_back(std::move(absent));
    frontier.push_back(std::move(present));
  }

  for (const auto& leaf : frontier) {
    auto& node = tree.nodes[static_cast<std::size_t>(leaf.node)];
    double sum = 0.0;
    for (std::size_t i = leaf.begin; i < leaf.end; ++i) sum += data.residuals[rows[i]];
    node.member_count = static_cast<std::int64_t>(leaf.end - leaf.begin);
    node.mean_residual = node.member_count > 0 ? sum / static_cast<double>(node.member_count) : 0.0;
    if (!leaf.path.empty()) node.signature = canonicalize(leaf.path);
  }
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    const auto& node = tree.nodes[id];
    if (node.is_leaf()) {
      tree.leaves.push_back({static_cast<int>(id), node.signature, node.member_count, node.mean_residual});
    }
  }

  std::vector<char> in_bag(data.size(), 0);
  for (std::uint32_t r : rows) in_bag[r] = 1;
  double sse = 0.0;
  std::size_t oob = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    if (in_bag[r]) continue;
    const double pred = tree.nodes[static_cast<std::size_t>(tree.route(data.components[r]))].mean_residual;
    sse += (pred - data.residuals[r]) * (pred - data.residuals[r]);
    ++oob;
  }
  tree.oob_mse = oob > 0 ? sse / static_cast<double>(oob) : std::numeric_limits<double>::quiet_NaN();
  return tree;
}

std::vector<TreeRecord> grow_forest(const ResidualTable& data, const AuditConfig& config, int year,
                                    int threads) {
  if (data.size() == 0) throw EmptyPanel("grow_forest: no rows for year " + std::to_string(year));
  const auto params = TreeParams::from(config);
  std::vector<TreeRecord> forest(static_cast<std::size_t>(config.n_trees));
  parallel_for(forest.size(), threads, [&](std::size_t t) {
    rng::Stream stream(config.master_seed, rng::Purpose::kTree, year, t);
    auto rows = draw_bootstrap(data.size(), stream);
    forest[t] = grow_tree(data, std::move(rows), params, stream, static_cast<int>(t));
  });
  return forest;
}

}  // namespace gaudit
