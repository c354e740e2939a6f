#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "artree/dataset.hpp"

namespace artree {

inline constexpr int kDefaultLaneWidth = 8;  // tree count must be a multiple

// Arena-allocated decision tree node. Children are indices into the owning
// tree's node vector; -1 marks a leaf. class_counts carry the training
// sample distribution needed for leaf prediction and pruning risk.
struct TreeNode {
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint16_t feature = 0;
  float threshold = 0.0f;
  std::uint32_t n_samples = 0;
  std::vector<std::uint32_t> class_counts;

  bool is_leaf() const { return left < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // root at index 0
  int n_classes = 0;

  std::size_t node_count() const { return nodes.size(); }
};

struct GrowParams {
  int k_features = 0;        // candidate features per node; 0 = ceil(sqrt(d))
  int min_samples_leaf = 1;
  int max_depth = 20;
};

// Row-major training view: row i occupies x[i*n_features .. +n_features).
struct SampleView {
  std::span<const double> x;
  std::span<const int> y;
  int n_features = 0;

  std::size_t n_samples() const { return n_features > 0 ? x.size() / n_features : 0; }
  double at(std::size_t row, int feature) const { return x[row * n_features + feature]; }
};

// Extra-Trees growth: at each node draw k random features and one uniform
// threshold per feature inside the node's value range, keep the pair with
// the lowest weighted Gini impurity. value <= threshold goes left, with the
// threshold stored as float and widened back for the comparison.
Tree grow_tree(const SampleView& samples, int n_classes, const GrowParams& params,
               std::uint64_t seed);

// Majority class of the reached leaf; ties break to the smallest class id.
int predict_tree(const Tree& tree, std::span<const double> features);

struct ForestModel {
  LabelScheme scheme = LabelScheme::BC;
  int n_classes = 2;
  int n_outputs = 1;
  int n_features = 0;
  int lane_width = kDefaultLaneWidth;
  std::vector<std::vector<Tree>> outputs;  // [output][tree]
  GrowParams params;
  std::uint64_t seed = 0;

  std::size_t trees_per_output() const {
    return outputs.empty() ? 0 : outputs[0].size();
  }
  std::size_t total_trees() const;
  std::size_t total_nodes() const;
};

// One independent Extra-Trees ensemble per output. n_trees must be a
// positive multiple of the lane width. Tree (output o, index i) uses seed
// seed + o*n_trees + i; growth parallelizes per tree.
ForestModel grow_forest(const FeatureTable& table, int n_trees,
                        const GrowParams& params, std::uint64_t seed,
                        unsigned threads, int lane_width = kDefaultLaneWidth);

// Plurality vote across trees, ties to the smallest class id; one result
// per output.
std::vector<int> predict_forest(const ForestModel& forest,
                                std::span<const double> features);

// Recomputes every node's n_samples/class_counts by routing the table's
// rows down each tree with the inference comparison rule. Replaying the
// original training table reproduces the grow-time statistics exactly
// (Extra-Trees uses the full sample, no bootstrap), which is how pruning
// statistics are restored for models loaded from the compact format.
void refit_statistics(ForestModel& forest, const FeatureTable& table);

// One weakest-link pruning step: alpha and the tree size after applying
// every collapse up to and including that alpha.
struct CcpStep {
  double alpha = 0.0;
  std::uint32_t leaf_count = 0;
  std::uint32_t node_count = 0;
};

struct CcpSequence {
  std::vector<CcpStep> steps;  // alphas non-decreasing; ends at the root-only tree
  // Per node: alpha at which the node turns into a leaf (+inf for original
  // leaves). A node stays internal at alpha iff collapse_alpha > alpha.
  std::vector<double> collapse_alpha;

  static constexpr double kNever = std::numeric_limits<double>::infinity();
};

// Minimal cost-complexity pruning schedule. Risk R(t) is the node's training
// misclassification count over the root sample count; ties in the weakest
// link g(t) are detected with exact integer arithmetic and collapsed
// together.
CcpSequence cost_complexity_sequence(const Tree& tree);

// Smallest optimally pruned subtree at the given alpha. alpha 0 collapses
// exactly the zero-gain splits.
Tree prune_at_alpha(const Tree& tree, double alpha);
Tree prune_at_alpha(const Tree& tree, const CcpSequence& seq, double alpha);

ForestModel prune_forest_at_alpha(const ForestModel& forest, double alpha);

// Critical alphas of every tree in the forest, merged, deduplicated, sorted,
// always starting at 0.
std::vector<double> merged_critical_alphas(const ForestModel& forest);

struct BudgetResult {
  ForestModel forest;
  double alpha = 0.0;
};

// Smallest alpha (uniform across the ensemble) whose pruned forest packs
// into budget_bytes of node payload (9 bytes per node). The unpruned forest
// is returned unchanged when it already fits.
BudgetResult prune_to_budget(const ForestModel& forest, std::uint64_t budget_bytes);

// Non-normative debug dump (JSON); the normative binary format lives in
// compact.hpp.
std::string forest_debug_json(const ForestModel& forest);

}  // namespace artree
