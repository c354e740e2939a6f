#include "artree/compact.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "artree/errors.hpp"

namespace artree {

namespace {

int leaf_class(const TreeNode& node) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(node.class_counts.size()); ++c) {
    if (node.class_counts[c] > node.class_counts[best]) best = c;
  }
  return best;
}

std::uint16_t pack_node(const Tree& tree, std::size_t from, CompactTree& out) {
  const auto index = static_cast<std::uint16_t>(out.feature.size());
  out.feature.push_back(0);
  out.threshold.push_back(0.0f);
  out.left.push_back(kLeafSentinel);
  out.right.push_back(0);

  const TreeNode& node = tree.nodes[from];
  if (node.is_leaf()) {
    const int cls = leaf_class(node);
    out.right[index] = static_cast<std::uint16_t>(cls);
    return index;
  }
  out.feature[index] = static_cast<std::uint8_t>(node.feature);
  out.threshold[index] = node.threshold;
  const std::uint16_t left = pack_node(tree, static_cast<std::size_t>(node.left), out);
  const std::uint16_t right = pack_node(tree, static_cast<std::size_t>(node.right), out);
  out.left[index] = left;
  out.right[index] = right;
  return index;
}

}  // namespace

CompactTree pack(const Tree& tree) {
  if (tree.node_count() > kMaxCompactNodes) {
    throw CapacityError("pack: tree has " + std::to_string(tree.node_count()) +
                        " nodes; the 16-bit index format holds at most " +
                        std::to_string(kMaxCompactNodes));
  }
  for (const auto& node : tree.nodes) {
    if (!node.is_leaf() && node.feature > 0xFF) {
      throw CapacityError("pack: feature index " + std::to_string(node.feature) +
                          " exceeds the 8-bit limit of 255");
    }
  }
  if (tree.n_classes > 0x10000) {
    throw CapacityError("pack: class ids exceed the 16-bit limit of 65535");
  }
  CompactTree out;
  out.feature.reserve(tree.node_count());
  out.threshold.reserve(tree.node_count());
  out.left.reserve(tree.node_count());
  out.right.reserve(tree.node_count());
  pack_node(tree, 0, out);
  return out;
}

// Iterative preorder reconstruction; an explicit stack keeps hostile
// chain-shaped files from exhausting the call stack.
Tree unpack(const CompactTree& compact, int n_classes, std::uint32_t n_samples_hint) {
  const std::size_t count = compact.node_count();
  if (count == 0) {
    throw CorruptionError("unpack: empty tree");
  }
  if (compact.threshold.size() != count || compact.left.size() != count ||
      compact.right.size() != count) {
    throw CorruptionError("unpack: array lengths differ");
  }
  Tree out;
  out.n_classes = n_classes;
  out.nodes.reserve(count);
  std::vector<char> seen(count, 0);

  struct Pending {
    std::uint16_t old_index;
    std::int32_t parent;  // -1 for the root
    bool is_left;
  };
  std::vector<Pending> stack = {{0, -1, false}};
  while (!stack.empty()) {
    const auto [from, parent, is_left] = stack.back();
    stack.pop_back();
    if (from >= count) {
      throw CorruptionError("unpack: node index " + std::to_string(from) +
                            " out of range");
    }
    if (seen[from]) {
      throw CorruptionError("unpack: node " + std::to_string(from) +
                            " reachable twice (cycle or shared subtree)");
    }
    seen[from] = 1;
    const auto index = static_cast<std::int32_t>(out.nodes.size());
    out.nodes.emplace_back();
    if (parent >= 0) {
      (is_left ? out.nodes[parent].left : out.nodes[parent].right) = index;
    }
    if (compact.left[from] == kLeafSentinel) {
      if (compact.feature[from] != 0 || compact.threshold[from] != 0.0f) {
        throw CorruptionError("unpack: leaf " + std::to_string(from) +
                              " has nonzero feature/threshold");
      }
      const std::uint16_t cls = compact.right[from];
      if (cls >= n_classes) {
        throw CorruptionError("unpack: leaf class " + std::to_string(cls) +
                              " out of range");
      }
      TreeNode& node = out.nodes[index];
      node.n_samples = n_samples_hint;
      node.class_counts.assign(n_classes, 0);
      node.class_counts[cls] = n_samples_hint;
    } else {
      out.nodes[index].feature = compact.feature[from];
      out.nodes[index].threshold = compact.threshold[from];
      // Right below left so the left subtree is emitted first (preorder).
      stack.push_back({compact.right[from], index, false});
      stack.push_back({compact.left[from], index, true});
    }
  }
  if (out.node_count() != count) {
    throw CorruptionError("unpack: " + std::to_string(count - out.node_count()) +
                          " orphan node(s) unreachable from the root");
  }
  // Children follow parents in preorder, so a reverse sweep aggregates counts.
  for (std::size_t r = out.node_count(); r-- > 0;) {
    TreeNode& node = out.nodes[r];
    if (node.is_leaf()) continue;
    const TreeNode& left = out.nodes[node.left];
    const TreeNode& right = out.nodes[node.right];
    node.n_samples = left.n_samples + right.n_samples;
    node.class_counts.assign(n_classes, 0);
    for (int c = 0; c < n_classes; ++c) {
      node.class_counts[c] = left.class_counts[c] + right.class_counts[c];
    }
  }
  return out;
}

TraverseResult traverse(const CompactTree& tree, std::span<const double> features) {
  const std::size_t count = tree.node_count();
  TraverseResult result;
  std::size_t i = 0;
  while (true) {
    if (i >= count) {
      throw CorruptionError("traverse: node index out of range");
    }
    ++result.nodes_visited;
    if (result.nodes_visited > static_cast<int>(count)) {
      throw CorruptionError("traverse: cycle detected");
    }
    if (tree.left[i] == kLeafSentinel) {
      result.class_id = tree.right[i];
      return result;
    }
    if (tree.feature[i] >= features.size()) {
      throw CorruptionError("traverse: feature index out of range");
    }
    // Threshold widened to double; <= goes left.
    if (features[tree.feature[i]] <= static_cast<double>(tree.threshold[i])) {
      i = tree.left[i];
    } else {
      i = tree.right[i];
    }
  }
}

int predict_compact(const CompactForest& forest, std::span<const double> features,
                    int output, std::uint64_t* visited) {
  std::uint32_t votes[16] = {};  // n_classes <= 13 for every scheme
  std::vector<std::uint32_t> big_votes;
  std::uint32_t* slot = votes;
  if (forest.n_classes > 16) {
    big_votes.assign(forest.n_classes, 0);
    slot = big_votes.data();
  }
  for (const auto& tree : forest.outputs[output]) {
    const auto r = traverse(tree, features);
    ++slot[r.class_id];
    if (visited) *visited += static_cast<std::uint64_t>(r.nodes_visited);
  }
  int best = 0;
  for (int c = 1; c < forest.n_classes; ++c) {
    if (slot[c] > slot[best]) best = c;
  }
  return best;
}

std::uint32_t CompactForest::total_trees() const {
  std::uint32_t total = 0;
  for (const auto& trees : outputs) total += static_cast<std::uint32_t>(trees.size());
  return total;
}

std::uint64_t CompactForest::total_nodes() const {
  std::uint64_t total = 0;
  for (const auto& trees : outputs) {
    for (const auto& tree : trees) total += tree.node_count();
  }
  return total;
}

CompactForest pack_forest(const ForestModel& forest) {
  CompactForest out;
  out.scheme = forest.scheme;
  out.n_outputs = static_cast<std::uint8_t>(forest.n_outputs);
  out.n_classes = static_cast<std::uint16_t>(forest.n_classes);
  out.n_features = static_cast<std::uint16_t>(forest.n_features);
  out.lane_width = static_cast<std::uint8_t>(forest.lane_width);
  out.outputs.resize(forest.outputs.size());
  for (std::size_t o = 0; o < forest.outputs.size(); ++o) {
    out.outputs[o].reserve(forest.outputs[o].size());
    for (const auto& tree : forest.outputs[o]) out.outputs[o].push_back(pack(tree));
  }
  return out;
}

ForestModel unpack_forest(const CompactForest& forest) {
  ForestModel out;
  out.scheme = forest.scheme;
  out.n_classes = forest.n_classes;
  out.n_outputs = forest.n_outputs;
  out.n_features = forest.n_features;
  out.lane_width = forest.lane_width;
  out.outputs.resize(forest.outputs.size());
  for (std::size_t o = 0; o < forest.outputs.size(); ++o) {
    out.outputs[o].reserve(forest.outputs[o].size());
    for (const auto& tree : forest.outputs[o]) {
      out.outputs[o].push_back(unpack(tree, forest.n_classes));
    }
  }
  return out;
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32(out, bits);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return take(1)[0]; }

  std::uint16_t u16() {
    const auto* p = take(2);
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }

  std::uint32_t u32() {
    const auto* p = take(4);
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
  }

  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw SerializeError(SerializeError::Kind::Truncated,
                           "model file truncated at byte " + std::to_string(pos_));
    }
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'C', 'T', 'F', '1'};
constexpr std::uint64_t kHeaderBytes = 18;

}  // namespace

std::vector<std::uint8_t> serialize(const CompactForest& forest) {
  std::vector<std::uint8_t> out;
  out.reserve(packed_size_bytes(forest));
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u16(out, forest.version);
  out.push_back(static_cast<std::uint8_t>(forest.scheme));
  out.push_back(forest.n_outputs);
  put_u16(out, forest.n_classes);
  put_u16(out, forest.n_features);
  out.push_back(forest.lane_width);
  out.push_back(0);  // pad
  put_u32(out, forest.total_trees());
  for (const auto& trees : forest.outputs) {
    for (const auto& tree : trees) {
      put_u32(out, static_cast<std::uint32_t>(tree.node_count()));
    }
  }
  for (const auto& trees : forest.outputs) {
    for (const auto& tree : trees) {
      out.insert(out.end(), tree.feature.begin(), tree.feature.end());
      for (const float t : tree.threshold) put_f32(out, t);
      for (const std::uint16_t l : tree.left) put_u16(out, l);
      for (const std::uint16_t r : tree.right) put_u16(out, r);
    }
  }
  return out;
}

CompactForest deserialize(std::span<const std::uint8_t> bytes) {
  Reader reader(bytes);
  char magic[4];
  for (char& c : magic) c = static_cast<char>(reader.u8());
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw SerializeError(SerializeError::Kind::BadMagic, "not a CTF1 model file");
  }
  CompactForest forest;
  forest.version = reader.u16();
  if (forest.version != kFormatVersion) {
    throw SerializeError(SerializeError::Kind::BadVersion,
                         "unsupported model version " + std::to_string(forest.version));
  }
  const std::uint8_t scheme = reader.u8();
  if (scheme > 2) {
    throw SerializeError(SerializeError::Kind::SizeMismatch,
                         "unknown scheme id " + std::to_string(scheme));
  }
  forest.scheme = static_cast<LabelScheme>(scheme);
  forest.n_outputs = reader.u8();
  forest.n_classes = reader.u16();
  forest.n_features = reader.u16();
  forest.lane_width = reader.u8();
  reader.u8();  // pad
  const std::uint32_t tree_count = reader.u32();
  if (forest.n_outputs == 0) {
    if (tree_count != 0) {
      throw SerializeError(SerializeError::Kind::SizeMismatch,
                           "tree count nonzero with zero outputs");
    }
  } else if (tree_count % forest.n_outputs != 0) {
    throw SerializeError(SerializeError::Kind::SizeMismatch,
                         "tree count " + std::to_string(tree_count) +
                             " not divisible by " + std::to_string(forest.n_outputs) +
                             " outputs");
  }
  std::vector<std::uint32_t> node_counts(tree_count);
  for (auto& count : node_counts) {
    count = reader.u32();
    if (count == 0 || count > kMaxCompactNodes) {
      throw SerializeError(SerializeError::Kind::SizeMismatch,
                           "node count " + std::to_string(count) + " out of range");
    }
  }
  const std::uint32_t per_output = forest.n_outputs ? tree_count / forest.n_outputs : 0;
  forest.outputs.resize(forest.n_outputs);
  std::size_t flat = 0;
  for (auto& trees : forest.outputs) {
    trees.resize(per_output);
    for (auto& tree : trees) {
      const std::uint32_t count = node_counts[flat++];
      tree.feature.resize(count);
      tree.threshold.resize(count);
      tree.left.resize(count);
      tree.right.resize(count);
      for (auto& v : tree.feature) v = reader.u8();
      for (auto& v : tree.threshold) v = reader.f32();
      for (auto& v : tree.left) v = reader.u16();
      for (auto& v : tree.right) v = reader.u16();
    }
  }
  if (reader.remaining() != 0) {
    throw SerializeError(SerializeError::Kind::SizeMismatch,
                         std::to_string(reader.remaining()) +
                             " trailing byte(s) after the node arrays");
  }
  return forest;
}

std::uint64_t packed_size_bytes(const CompactForest& forest) {
  return kHeaderBytes + 4ull * forest.total_trees() + kNodeBytes * forest.total_nodes();
}

std::uint64_t payload_size_bytes(const CompactForest& forest) {
  return kNodeBytes * forest.total_nodes();
}

void write_model_file(const CompactForest& forest, const std::filesystem::path& path) {
  const auto bytes = serialize(forest);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

CompactForest read_model_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace artree
