#pragma once

#include <span>
#include <string>
#include <vector>

#include "orthomom/model.hpp"
#include "orthomom/trees.hpp"

namespace orthomom {

using ObsView = std::span<const double>;

// First base copy (0-based) used by each postorder node; -1 for a root whose m
// ignores the data. A non-root node reads model.block_size consecutive copies.
struct CopyAssignment {
  std::vector<int> node_copy;
};

// Root is copy 0 when m reads the data; non-root nodes follow in postorder.
CopyAssignment canonical_assignment(const std::vector<FlatNode>& nodes, const ModelSpec& model);
int copies_for_tree(const RootedTree& tree, const ModelSpec& model);

struct PsiTerm {
  Rational coeff;
  double weight = 0.0;
  RootedTree tree;
  std::vector<FlatNode> nodes;
  CopyAssignment assignment;
};

class MomentFunction {
 public:
  MomentFunction(int q, ModelSpec model, std::vector<PsiTerm> terms, bool affine_path);

  int q() const { return q_; }
  const ModelSpec& model() const { return model_; }
  const std::vector<PsiTerm>& terms() const { return terms_; }
  int copies_required() const { return copies_; }
  bool affine_path() const { return affine_path_; }
  // Highest g and m derivative orders any term requests.
  int max_g_order() const { return max_g_order_; }
  int max_m_order() const { return max_m_order_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  double evaluate(std::span<const ObsView> copies, const Vec& theta, const Vec& eta, const Vec& lambda) const;
  std::vector<double> term_values(std::span<const ObsView> copies, const Vec& theta, const Vec& eta,
                                  const Vec& lambda) const;

 private:
  int q_;
  ModelSpec model_;
  std::vector<PsiTerm> terms_;
  bool affine_path_;
  int copies_ = 0;
  int max_g_order_ = 0;
  int max_m_order_ = 0;
  std::vector<std::string> warnings_;
};

MomentFunction assemble_psi(int q, const ModelSpec& model, int cap = kDefaultEnumerationCap);
MomentFunction assemble_psi_affine(int q, const ModelSpec& model, int cap = kDefaultEnumerationCap);

// Bottom-up contraction of one kernel. nodes must be in postorder with the root last.
double evaluate_kernel(const std::vector<FlatNode>& nodes, std::span<const ObsView> copies,
                       const CopyAssignment& assignment, const Vec& theta, const Vec& eta,
                       const Mat& Lambda, const ModelSpec& model);
double evaluate_kernel(const RootedTree& tree, std::span<const ObsView> copies, const Vec& theta,
                       const Vec& eta, const Vec& lambda, const ModelSpec& model);

// Hand-written psi for q = 1, 2, 3, using the same copy labels as assemble_psi.
class ExplicitPsi {
 public:
  ExplicitPsi(int q, ModelSpec model);
  int copies_required() const;
  double evaluate(std::span<const ObsView> copies, const Vec& theta, const Vec& eta, const Vec& lambda) const;

 private:
  int q_;
  ModelSpec model_;
};

// g~_r = det[..., g(W_r) in column r, d_{eta_j} g(W_j) in column j != r, ...].
ModelSpec det_transform_exact(const ModelSpec& base);
// Columns (d_eta g(W_{2j-1}))' v_j with v_j = d_{eta_j} g(W_{2j}) or g(W_{2r}) for j = r.
ModelSpec det_transform_overid(const ModelSpec& base);

}  // namespace orthomom
