#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "artree/forest.hpp"

namespace artree {

// Per-node payload: 1 (feature u8) + 4 (threshold f32) + 2 (left u16) +
// 2 (right u16) bytes.
inline constexpr std::uint64_t kNodeBytes = 9;
inline constexpr std::uint16_t kLeafSentinel = 0xFFFF;
inline constexpr std::uint32_t kMaxCompactNodes = 0xFFFE;  // one index reserved
inline constexpr std::uint16_t kFormatVersion = 1;

// Four parallel arrays, root at index 0. A node is a leaf iff
// left[i] == 0xFFFF; its class id is injected into right[i] and feature[i]
// and threshold[i] are zero.
struct CompactTree {
  std::vector<std::uint8_t> feature;
  std::vector<float> threshold;
  std::vector<std::uint16_t> left;
  std::vector<std::uint16_t> right;

  std::size_t node_count() const { return feature.size(); }
};

struct CompactForest {
  std::uint16_t version = kFormatVersion;
  LabelScheme scheme = LabelScheme::BC;
  std::uint8_t n_outputs = 1;
  std::uint16_t n_classes = 2;
  std::uint16_t n_features = 0;
  std::uint8_t lane_width = kDefaultLaneWidth;
  std::vector<std::vector<CompactTree>> outputs;  // [output][tree]

  std::uint32_t total_trees() const;
  std::uint64_t total_nodes() const;
};

// Preorder flattening with the leaf-injection rule. Throws CapacityError
// when node count, feature index, or class id exceed the encoding limits.
CompactTree pack(const Tree& tree);

// Pointer-form reconstruction; leaf class counts become a one-hot vector
// scaled by n_samples_hint, so pack(unpack(c)) is byte-identical to c.
// Throws CorruptionError on cycles, orphans, or out-of-range indices.
Tree unpack(const CompactTree& compact, int n_classes,
            std::uint32_t n_samples_hint = 1);

struct TraverseResult {
  int class_id = 0;
  int nodes_visited = 0;
};

// Iterative descent: features[feature[i]] <= widen(threshold[i]) goes left.
TraverseResult traverse(const CompactTree& tree, std::span<const double> features);

// Plurality vote over one output's trees, ties to the smallest class id.
// visited, when given, accumulates nodes_visited over all trees.
int predict_compact(const CompactForest& forest, std::span<const double> features,
                    int output, std::uint64_t* visited = nullptr);

CompactForest pack_forest(const ForestModel& forest);
ForestModel unpack_forest(const CompactForest& forest);

// Normative .ctf byte layout, little-endian:
//   magic 'CTF1' | version u16 | scheme u8 | n_outputs u8 | n_classes u16 |
//   n_features u16 | lane_width u8 | pad u8 | tree_count u32 |
//   per-tree node counts u32 ... | per tree: feature bytes, threshold f32s,
//   left u16s, right u16s.
// tree_count is the total number of trees (n_outputs * trees per output),
// serialized output-major.
std::vector<std::uint8_t> serialize(const CompactForest& forest);
CompactForest deserialize(std::span<const std::uint8_t> bytes);

// Exact serialized size: header + node-count table + 9 bytes per node.
std::uint64_t packed_size_bytes(const CompactForest& forest);
// Node payload alone (9 bytes per node) -- the prune budget metric.
std::uint64_t payload_size_bytes(const CompactForest& forest);

void write_model_file(const CompactForest& forest, const std::filesystem::path& path);
CompactForest read_model_file(const std::filesystem::path& path);

}  // namespace artree
