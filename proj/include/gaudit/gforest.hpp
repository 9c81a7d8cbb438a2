#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gaudit/domain.hpp"
#include "gaudit/rng.hpp"

namespace gaudit {

struct FitResult;

// Training view for the forest: each row's component bits and its residual.
struct ResidualTable {
  int component_count = 0;
  std::vector<std::uint64_t> components;
  std::vector<double> residuals;

  std::size_t size() const noexcept { return residuals.size(); }

  // Throws Misalignment when fit and panel rows differ.
  static ResidualTable from(const Panel& panel, const FitResult& fit, int component_count);
};

struct Split {
  int component = -1;
  double sse_reduction = 0.0;
};

// Best single-component split of `rows` among `candidates` (component
// indices, any order). Both children must keep at least min_node_size rows
// and the SSE reduction must be positive; ties go to the lowest component.
std::optional<Split> best_split(const ResidualTable& data, std::span<const std::uint32_t> rows,
                                std::span<const int> candidates, int min_node_size);

struct TreeParams {
  int mtry = 10;
  int min_node_size = 100;
  int max_leaf_nodes = 8;

  static TreeParams from(const AuditConfig& config) {
    return {config.mtry, config.min_node_size, config.max_leaf_nodes};
  }
};

// Internal nodes route rows without the component to `absent_child` and
// rows with it to `present_child`. Leaves carry the in-bag statistics and
// the canonical path signature (empty for a root that never split).
struct TreeNode {
  int component = -1;
  int absent_child = -1;
  int present_child = -1;
  double mean_residual = 0.0;
  std::int64_t member_count = 0;
  GroupSignature signature;

  bool is_leaf() const noexcept { return component < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct LeafSummary {
  int leaf_id = 0;  // node index within the tree
  GroupSignature signature;
  std::int64_t member_count = 0;
  double mean_residual = 0.0;

  friend bool operator==(const LeafSummary&, const LeafSummary&) = default;
};

struct TreeRecord {
  int tree_index = 0;
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<LeafSummary> leaves;  // in node-index order
  double oob_mse = 0.0;  // NaN when every row was in bag

  // Leaf node index reached by a row with these component bits.
  int route(std::uint64_t components) const noexcept;
  // A tree that never split defines no groups.
  bool has_groups() const noexcept { return leaves.size() > 1; }

  friend bool operator==(const TreeRecord&, const TreeRecord&) = default;
};

// Best-first growth on `bootstrap_rows` (indices into `data`, repeats
// allowed). Each leaf draws a fresh mtry-subset of components from `stream`
// when it joins the frontier; components already used on its path are then
// excluded. The frontier leaf with the largest SSE reduction is expanded
// until max_leaf_nodes is reached or nothing can split. OOB rows are those
// of `data` absent from the bootstrap. Throws ConfigError if mtry is out of
// [1, component_count].
TreeRecord grow_tree(const ResidualTable& data, std::vector<std::uint32_t> bootstrap_rows,
                     const TreeParams& params, rng::Stream& stream, int tree_index = 0);

// n draws with replacement.
std::vector<std::uint32_t> draw_bootstrap(std::size_t n, rng::Stream& stream);

// Tree t draws its bootstrap and splits from substream (master_seed, year, t).
std::vector<TreeRecord> grow_forest(const ResidualTable& data, const AuditConfig& config, int year,
                                    int threads = 1);

}  // namespace gaudit
