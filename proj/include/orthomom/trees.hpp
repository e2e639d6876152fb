#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "orthomom/rational.hpp"

namespace orthomom {

inline constexpr int kDefaultEnumerationCap = 10;

// Rooted tree held by its canonical parenthesis encoding: a node is "(" followed
// by its children's encodings in nondecreasing lexicographic order, then ")".
// Two trees are isomorphic iff their encodings are equal.
class RootedTree {
 public:
  RootedTree() : enc_("()") {}
  explicit RootedTree(std::vector<RootedTree> children);

  // Accepts any well-formed parenthesis string and canonicalizes it.
  static RootedTree from_encoding(std::string_view text);

  const std::string& encoding() const { return enc_; }
  std::vector<RootedTree> children() const;
  std::size_t child_count() const;
  std::size_t node_count() const { return enc_.size() / 2; }

  friend bool operator==(const RootedTree& a, const RootedTree& b) { return a.enc_ == b.enc_; }
  friend std::strong_ordering operator<=>(const RootedTree& a, const RootedTree& b) {
    return a.enc_ <=> b.enc_;
  }

 private:
  struct Canonical {};
  RootedTree(Canonical, std::string enc) : enc_(std::move(enc)) {}

  std::string enc_;
  friend std::vector<RootedTree> enumerate_trees(int, int);
};

struct TreeInvariants {
  int size = 0;
  int d = 0;
  std::uint64_t aut = 1;
};

// Every rooted tree with d <= q, sorted by (size, encoding).
std::vector<RootedTree> enumerate_trees(int q, int cap = kDefaultEnumerationCap);

TreeInvariants invariants(const RootedTree& tree);

// (-1)^|t| C(q + |t| - d, |t|) / |Aut t|.
Rational coefficient(int q, const RootedTree& tree);

bool is_affine_tree(const RootedTree& tree);

// Nodes listed in postorder (children before parents, children in canonical
// order). The root is the last entry.
struct FlatNode {
  std::vector<int> children;
};
std::vector<FlatNode> postorder_nodes(const RootedTree& tree);

// Top-level child encodings of a canonical encoding, as views into it.
std::vector<std::string_view> child_encodings(std::string_view enc);

}  // namespace orthomom
