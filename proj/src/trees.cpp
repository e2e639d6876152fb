#include "orthomom/trees.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

namespace orthomom {

namespace {

std::string canonicalize(std::string_view enc) {
  std::vector<std::string> kids;
  for (auto c : child_encodings(enc)) kids.push_back(canonicalize(c));
  std::sort(kids.begin(), kids.end());
  std::string out = "(";
  for (auto& k : kids) out += k;
  out += ')';
  return out;
}

void validate(std::string_view text) {
  if (text.size() < 2 || text.front() != '(') throw std::invalid_argument("bad tree encoding");
  int depth = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '(') {
      ++depth;
    } else if (c == ')') {
      if (--depth < 0) throw std::invalid_argument("bad tree encoding");
      if (depth == 0 && i + 1 != text.size()) throw std::invalid_argument("bad tree encoding");
    } else {
      throw std::invalid_argument("bad tree encoding");
    }
  }
  if (depth != 0) throw std::invalid_argument("bad tree encoding");
}

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r;
  if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("automorphism count overflow");
  return r;
}

int count_d(std::string_view enc, bool root) {
  auto kids = child_encodings(enc);
  int d = (!root && kids.size() <= 1) ? 1 : 0;
  for (auto k : kids) d += count_d(k, false);
  return d;
}

std::uint64_t count_aut(std::string_view enc) {
  auto kids = child_encodings(enc);
  std::uint64_t aut = 1;
  std::size_t i = 0;
  while (i < kids.size()) {
    std::size_t j = i;
    while (j < kids.size() && kids[j] == kids[i]) ++j;
    std::uint64_t sub = count_aut(kids[i]);
    for (std::size_t n = 1; n <= j - i; ++n) aut = checked_mul(checked_mul(aut, n), sub);
    i = j;
  }
  return aut;
}

std::string wrap(const std::vector<const std::string*>& kids) {
  std::vector<const std::string*> sorted = kids;
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return *a < *b; });
  std::string out = "(";
  for (auto* k : sorted) out += *k;
  out += ')';
  return out;
}

// Multisets drawn from by_d (keyed by (d, index) in nondecreasing order) whose
// d-values sum to at most `budget`.
void multisets(const std::vector<std::vector<std::string>>& by_d, int budget, int last_d,
               std::size_t last_i, std::vector<const std::string*>& cur, int used,
               const std::function<void(const std::vector<const std::string*>&, int)>& emit) {
  emit(cur, used);
  for (int d = last_d; d <= budget - used && d < static_cast<int>(by_d.size()); ++d) {
    std::size_t start = d == last_d ? last_i : 0;
    for (std::size_t i = start; i < by_d[d].size(); ++i) {
      cur.push_back(&by_d[d][i]);
      multisets(by_d, budget, d, i, cur, used + d, emit);
      cur.pop_back();
    }
  }
}

}  // namespace

std::vector<std::string_view> child_encodings(std::string_view enc) {
  std::vector<std::string_view> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 1; i + 1 < enc.size(); ++i) {
    if (enc[i] == '(') {
      if (depth == 0) start = i;
      ++depth;
    } else {
      --depth;
      if (depth == 0) out.push_back(enc.substr(start, i - start + 1));
    }
  }
  return out;
}

RootedTree::RootedTree(std::vector<RootedTree> children) {
  std::sort(children.begin(), children.end());
  enc_ = "(";
  for (auto& c : children) enc_ += c.enc_;
  enc_ += ')';
}

RootedTree RootedTree::from_encoding(std::string_view text) {
  validate(text);
  return RootedTree(Canonical{}, canonicalize(text));
}

std::vector<RootedTree> RootedTree::children() const {
  std::vector<RootedTree> out;
  for (auto c : child_encodings(enc_)) out.push_back(RootedTree(Canonical{}, std::string(c)));
  return out;
}

std::size_t RootedTree::child_count() const { return child_encodings(enc_).size(); }

std::vector<RootedTree> enumerate_trees(int q, int cap) {
  if (q < 0) throw std::invalid_argument("q must be nonnegative");
  if (q > cap) throw std::invalid_argument("q exceeds the enumeration cap");

  // by_d[k]: planted subtrees (hanging below some parent) whose non-root-style
  // d count is exactly k.
  std::vector<std::vector<std::string>> by_d(q + 1);
  if (q >= 1) by_d[1].push_back("()");
  for (int k = 2; k <= q; ++k) {
    auto& level = by_d[k];
    for (auto& c : by_d[k - 1]) level.push_back("(" + c + ")");
    std::vector<std::vector<std::string>> smaller(by_d.begin(), by_d.begin() + k);
    std::vector<const std::string*> cur;
    multisets(smaller, k, 1, 0, cur, 0, [&](const std::vector<const std::string*>& kids, int used) {
      if (used == k && kids.size() >= 2) level.push_back(wrap(kids));
    });
    std::sort(level.begin(), level.end());
  }

  std::vector<RootedTree> out;
  std::vector<const std::string*> cur;
  multisets(by_d, q, 1, 0, cur, 0, [&](const std::vector<const std::string*>& kids, int) {
    out.push_back(RootedTree(RootedTree::Canonical{}, wrap(kids)));
  });
  std::sort(out.begin(), out.end(), [](const RootedTree& a, const RootedTree& b) {
    if (a.node_count() != b.node_count()) return a.node_count() < b.node_count();
    return a.encoding() < b.encoding();
  });
  return out;
}

TreeInvariants invariants(const RootedTree& tree) {
  TreeInvariants inv;
  inv.size = static_cast<int>(tree.node_count()) - 1;
  inv.d = count_d(tree.encoding(), true);
  inv.aut = count_aut(tree.encoding());
  return inv;
}

Rational coefficient(int q, const RootedTree& tree) {
  auto inv = invariants(tree);
  if (inv.d > q) throw std::invalid_argument("tree has d > q");
  BigInt num = binomial(q + inv.size - inv.d, inv.size);
  if (inv.size % 2) num = -num;
  return Rational(num, BigInt(inv.aut));
}

bool is_affine_tree(const RootedTree& tree) {
  auto inv = invariants(tree);
  return inv.size == inv.d;
}

std::vector<FlatNode> postorder_nodes(const RootedTree& tree) {
  std::vector<FlatNode> nodes;
  std::function<int(std::string_view)> visit = [&](std::string_view enc) {
    FlatNode node;
    for (auto c : child_encodings(enc)) node.children.push_back(visit(c));
    nodes.push_back(std::move(node));
    return static_cast<int>(nodes.size()) - 1;
  };
  visit(tree.encoding());
  return nodes;
}

}  // namespace orthomom
