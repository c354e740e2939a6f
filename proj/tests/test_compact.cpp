#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "artree/compact.hpp"
#include "artree/errors.hpp"
#include "artree/forest.hpp"
#include "artree/rng.hpp"

using namespace artree;

namespace {

Tree leaf_tree(int cls, int n_classes) {
  Tree tree;
  tree.n_classes = n_classes;
  TreeNode node;
  node.n_samples = 1;
  node.class_counts.assign(n_classes, 0);
  node.class_counts[cls] = 1;
  tree.nodes.push_back(std::move(node));
  return tree;
}

Tree full_tree(int depth, int n_classes) {
  Tree tree;
  tree.n_classes = n_classes;
  auto build = [&](auto&& self, int level) -> std::int32_t {
    const auto index = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[index].class_counts.assign(n_classes, 0);
    tree.nodes[index].class_counts[0] = 1;
    tree.nodes[index].n_samples = 1;
    if (level < depth) {
      tree.nodes[index].feature = static_cast<std::uint16_t>(level % 4);
      tree.nodes[index].threshold = 0.5f;
      const auto left = self(self, level + 1);
      const auto right = self(self, level + 1);
      tree.nodes[index].left = left;
      tree.nodes[index].right = right;
    }
    return index;
  };
  build(build, 0);
  return tree;
}

std::int32_t random_topology(Tree& tree, int budget, int n_features, int n_classes,
                             Rng& rng) {
  const auto index = static_cast<std::int32_t>(tree.nodes.size());
  tree.nodes.emplace_back();
  tree.nodes[index].class_counts.assign(n_classes, 0);
  if (budget >= 3 && rng.next_double() < 0.7) {
    const int remaining = budget - 1;
    const int left_budget = 1 + static_cast<int>(rng.below(remaining - 1));
    tree.nodes[index].feature = static_cast<std::uint16_t>(rng.below(n_features));
    tree.nodes[index].threshold = static_cast<float>(rng.uniform(-10.0, 10.0));
    tree.nodes[index].n_samples = 2;
    tree.nodes[index].class_counts[0] = 2;
    const auto left = random_topology(tree, left_budget, n_features, n_classes, rng);
    const auto right = random_topology(tree, remaining - left_budget, n_features, n_classes, rng);
    tree.nodes[index].left = left;
    tree.nodes[index].right = right;
  } else {
    const auto cls = static_cast<int>(rng.below(n_classes));
    tree.nodes[index].n_samples = 1;
    tree.nodes[index].class_counts[cls] = 1;
  }
  return index;
}

Tree random_tree(Rng& rng, int max_nodes, int n_features, int n_classes) {
  Tree tree;
  tree.n_classes = n_classes;
  random_topology(tree, max_nodes, n_features, n_classes, rng);
  return tree;
}

CompactForest wrap(CompactTree tree) {
  CompactForest forest;
  forest.n_features = 8;
  forest.outputs = {{std::move(tree)}};
  return forest;
}

}  // namespace

TEST_CASE("pack encodes a single leaf with the injection rule") {
  const CompactTree c = pack(leaf_tree(3, 13));
  REQUIRE(c.node_count() == 1);
  CHECK(c.feature[0] == 0);
  CHECK(c.threshold[0] == 0.0f);
  CHECK(c.left[0] == kLeafSentinel);
  CHECK(c.right[0] == 3);
}

TEST_CASE("a depth-1 tree packs to 3 nodes / 27 payload bytes") {
  const CompactTree c = pack(full_tree(1, 2));
  CHECK(c.node_count() == 3);
  CHECK(payload_size_bytes(wrap(c)) == 27);
}

TEST_CASE("pack rejects trees beyond the 16-bit capacity") {
  const Tree big = full_tree(16, 2);  // 2^17 - 1 = 131071 nodes
  CHECK(big.node_count() == 131071);
  CHECK_THROWS_AS(pack(big), CapacityError);

  Tree wide = leaf_tree(0, 2);
  wide.nodes[0].left = 1;
  wide.nodes[0].right = 2;
  wide.nodes[0].feature = 300;  // feature index over the u8 limit
  wide.nodes.push_back(leaf_tree(0, 2).nodes[0]);
  wide.nodes.push_back(leaf_tree(1, 2).nodes[0]);
  CHECK_THROWS_AS(pack(wide), CapacityError);
}

TEST_CASE("pack/unpack round trip is byte-identical (1000 random trees)") {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const Tree tree = random_tree(rng, 2 + static_cast<int>(rng.below(60)), 8, 13);
    const CompactTree packed = pack(tree);
    const Tree reconstructed = unpack(packed, 13);
    const CompactTree repacked = pack(reconstructed);
    CHECK(packed.feature == repacked.feature);
    CHECK(packed.threshold == repacked.threshold);
    CHECK(packed.left == repacked.left);
    CHECK(packed.right == repacked.right);
  }
}

TEST_CASE("pointer and compact predictions agree") {
  Rng rng(57);
  for (int trial = 0; trial < 50; ++trial) {
    const Tree tree = random_tree(rng, 40, 8, 5);
    const CompactTree packed = pack(tree);
    for (int i = 0; i < 200; ++i) {
      std::vector<double> features(8);
      for (auto& v : features) v = rng.uniform(-12.0, 12.0);
      const auto result = traverse(packed, features);
      CHECK(result.class_id == predict_tree(tree, features));
      CHECK(result.nodes_visited >= 1);
    }
  }
}

TEST_CASE("traverse boundary: feature equal to threshold goes left") {
  Tree tree;
  tree.n_classes = 2;
  tree.nodes.resize(3);
  tree.nodes[0] = {1, 2, 0, 1.5f, 2, {1, 1}};
  tree.nodes[1] = {-1, -1, 0, 0.0f, 1, {1, 0}};  // left leaf -> class 0
  tree.nodes[2] = {-1, -1, 0, 0.0f, 1, {0, 1}};  // right leaf -> class 1
  const CompactTree packed = pack(tree);
  CHECK(traverse(packed, std::vector<double>{1.5}).class_id == 0);
  CHECK(traverse(packed, std::vector<double>{std::nextafter(1.5, 2.0)}).class_id == 1);
  CHECK(traverse(packed, std::vector<double>{1.5}).nodes_visited == 2);
}

TEST_CASE("traverse of a single leaf visits exactly one node") {
  const CompactTree c = pack(leaf_tree(7, 13));
  const auto result = traverse(c, std::vector<double>{0.0});
  CHECK(result.class_id == 7);
  CHECK(result.nodes_visited == 1);
}

TEST_CASE("traverse never reads leaf feature/threshold slots") {
  // Poison the leaf thresholds; predictions must not change.
  Rng rng(5);
  const Tree tree = random_tree(rng, 31, 4, 3);
  const CompactTree packed = pack(tree);
  CompactTree poisoned = packed;
  for (std::size_t i = 0; i < poisoned.node_count(); ++i) {
    if (poisoned.left[i] == kLeafSentinel) {
      poisoned.threshold[i] = std::numeric_limits<float>::quiet_NaN();
      poisoned.feature[i] = 0xFF;
    }
  }
  for (int i = 0; i < 100; ++i) {
    std::vector<double> features(4);
    for (auto& v : features) v = rng.uniform(-12.0, 12.0);
    CHECK(traverse(poisoned, features).class_id == traverse(packed, features).class_id);
  }
}

TEST_CASE("depth-20 traversals visit at most 21 nodes") {
  Tree chain;  // a left-leaning chain of depth 20
  chain.n_classes = 2;
  for (int depth = 0; depth < 20; ++depth) {
    TreeNode node;
    node.feature = 0;
    node.threshold = static_cast<float>(depth);
    node.n_samples = 2;
    node.class_counts = {1, 1};
    node.left = static_cast<std::int32_t>(chain.nodes.size()) + 1;
    chain.nodes.push_back(node);
  }
  TreeNode tail;
  tail.n_samples = 1;
  tail.class_counts = {1, 0};
  chain.nodes.push_back(tail);
  // Hook right children to fresh leaves.
  for (int depth = 0; depth < 20; ++depth) {
    TreeNode leaf;
    leaf.n_samples = 1;
    leaf.class_counts = {0, 1};
    chain.nodes[depth].right = static_cast<std::int32_t>(chain.nodes.size());
    chain.nodes.push_back(leaf);
  }
  const CompactTree packed = pack(chain);
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const std::vector<double> features = {rng.uniform(-5.0, 25.0)};
    CHECK(traverse(packed, features).nodes_visited <= 21);
  }
}

TEST_CASE("traverse raises corruption errors mid-walk") {
  CompactTree bad;  // internal node pointing past the array
  bad.feature = {0, 0};
  bad.threshold = {0.5f, 0.0f};
  bad.left = {1, 9};
  bad.right = {9, 9};
  CHECK_THROWS_AS(traverse(bad, std::vector<double>{0.0}), CorruptionError);

  CompactTree cycle;  // self-loop never reaches a leaf
  cycle.feature = {0};
  cycle.threshold = {0.5f};
  cycle.left = {0};
  cycle.right = {0};
  CHECK_THROWS_AS(traverse(cycle, std::vector<double>{0.0}), CorruptionError);
}

TEST_CASE("distinct tree structures pack to distinct bytes") {
  Tree tree;
  tree.n_classes = 2;
  tree.nodes.resize(3);
  tree.nodes[0] = {1, 2, 0, 1.5f, 2, {1, 1}};
  tree.nodes[1] = {-1, -1, 0, 0.0f, 1, {1, 0}};
  tree.nodes[2] = {-1, -1, 0, 0.0f, 1, {0, 1}};
  Tree other = tree;
  other.nodes[0].threshold = 2.5f;
  CHECK(pack(tree).threshold != pack(other).threshold);
  CHECK(pack(tree).threshold == pack(tree).threshold);
}

TEST_CASE("unpack rejects corrupt structures") {
  CompactTree c;
  c.feature = {1, 0};
  c.threshold = {0.5f, 0.0f};
  c.left = {1, kLeafSentinel};
  c.right = {5, 0};  // right child out of range
  CHECK_THROWS_AS(unpack(c, 2), CorruptionError);

  CompactTree cycle;
  cycle.feature = {1, 2};
  cycle.threshold = {0.5f, 0.5f};
  cycle.left = {1, 0};  // points back at the root
  cycle.right = {1, 1};
  CHECK_THROWS_AS(unpack(cycle, 2), CorruptionError);

  CompactTree orphan;  // node 2 unreachable
  orphan.feature = {0, 0, 0};
  orphan.threshold = {0, 0, 0};
  orphan.left = {kLeafSentinel, kLeafSentinel, kLeafSentinel};
  orphan.right = {1, 0, 0};
  CHECK_THROWS_AS(unpack(orphan, 2), CorruptionError);

  const CompactTree single = pack(leaf_tree(1, 2));
  CHECK(unpack(single, 2).node_count() == 1);
}

TEST_CASE("serialize/deserialize identity and error variants") {
  Rng rng(91);
  ForestModel forest;
  forest.scheme = LabelScheme::MC;
  forest.n_classes = 2;
  forest.n_outputs = 2;
  forest.n_features = 10;
  forest.outputs.resize(2);
  for (int o = 0; o < 2; ++o) {
    for (int t = 0; t < 8; ++t) {
      Tree tree = random_tree(rng, 25, 10, 2);
      forest.outputs[o].push_back(std::move(tree));
    }
  }
  const CompactForest packed = pack_forest(forest);
  const auto bytes = serialize(packed);
  CHECK(bytes.size() == packed_size_bytes(packed));

  const CompactForest loaded = deserialize(bytes);
  CHECK(serialize(loaded) == bytes);
  CHECK(loaded.scheme == LabelScheme::MC);
  CHECK(loaded.n_outputs == 2);
  CHECK(loaded.total_trees() == 16);

  SUBCASE("truncation") {
    auto cut = bytes;
    cut.pop_back();
    try {
      deserialize(cut);
      FAIL("expected truncation error");
    } catch (const SerializeError& e) {
      CHECK(e.kind() == SerializeError::Kind::Truncated);
    }
  }
  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    try {
      deserialize(bad);
      FAIL("expected magic error");
    } catch (const SerializeError& e) {
      CHECK(e.kind() == SerializeError::Kind::BadMagic);
    }
  }
  SUBCASE("version mismatch") {
    auto bad = bytes;
    bad[4] = 9;
    try {
      deserialize(bad);
      FAIL("expected version error");
    } catch (const SerializeError& e) {
      CHECK(e.kind() == SerializeError::Kind::BadVersion);
    }
  }
  SUBCASE("trailing bytes") {
    auto padded = bytes;
    padded.push_back(0);
    try {
      deserialize(padded);
      FAIL("expected size mismatch");
    } catch (const SerializeError& e) {
      CHECK(e.kind() == SerializeError::Kind::SizeMismatch);
    }
  }
}

TEST_CASE("an empty forest serializes to a header-only file") {
  CompactForest empty;
  empty.n_outputs = 0;
  empty.n_features = 0;
  const auto bytes = serialize(empty);
  CHECK(bytes.size() == 18);  // header only, no tree table
  const CompactForest loaded = deserialize(bytes);
  CHECK(loaded.total_trees() == 0);
  CHECK(serialize(loaded) == bytes);
}

TEST_CASE("serialized layout is bit-exact little-endian") {
  Tree tree;
  tree.n_classes = 2;
  tree.nodes.resize(3);
  tree.nodes[0] = {1, 2, 5, 1.0f, 2, {1, 1}};
  tree.nodes[1] = {-1, -1, 0, 0.0f, 1, {1, 0}};
  tree.nodes[2] = {-1, -1, 0, 0.0f, 1, {0, 1}};
  ForestModel forest;
  forest.scheme = LabelScheme::BC;
  forest.n_classes = 2;
  forest.n_outputs = 1;
  forest.n_features = 6;
  forest.lane_width = 8;
  forest.outputs = {{tree}};

  const auto bytes = serialize(pack_forest(forest));
  const std::vector<std::uint8_t> expected = {
      'C', 'T', 'F', '1',          // magic
      1, 0,                        // version u16
      0,                           // scheme BC
      1,                           // n_outputs
      2, 0,                        // n_classes u16
      6, 0,                        // n_features u16
      8,                           // lane width
      0,                           // pad
      1, 0, 0, 0,                  // tree count u32
      3, 0, 0, 0,                  // node count u32
      5, 0, 0,                     // feature array (u8 x3)
      0x00, 0x00, 0x80, 0x3F,      // threshold[0] = 1.0f
      0x00, 0x00, 0x00, 0x00,      // threshold[1] = 0.0f
      0x00, 0x00, 0x00, 0x00,      // threshold[2] = 0.0f
      1, 0, 0xFF, 0xFF, 0xFF, 0xFF,  // left u16 x3: 1, sentinel, sentinel
      2, 0, 0, 0, 1, 0,            // right u16 x3: 2, class 0, class 1
  };
  CHECK(bytes == expected);
}

TEST_CASE("packed_size_bytes matches the layout arithmetic") {
  const CompactForest one = wrap(pack(leaf_tree(0, 2)));
  CHECK(packed_size_bytes(one) == 18 + 4 + 9);
  CHECK(payload_size_bytes(one) == 9);
}
