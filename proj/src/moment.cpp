#include "orthomom/moment.hpp"

#include <algorithm>
#include <optional>
#include <stdexcept>

namespace orthomom {

namespace {

class SampleCache {
 public:
  SampleCache(const ModelSpec& model, std::span<const ObsView> copies, const Vec& theta, const Vec& eta)
      : model_(model), copies_(copies), theta_(theta), eta_(eta), g_(copies.size()), blocks_(copies.size()) {}

  const DerivativeTensor& g(int c, int p) {
    if (c < 0 || c + model_.block_size > static_cast<int>(copies_.size()))
      throw std::out_of_range("copy index not supplied");
    auto& slot = g_[c];
    if (static_cast<int>(slot.size()) <= p) slot.resize(p + 1);
    if (!slot[p]) slot[p] = derivative(model_, Which::g, block(c), theta_, eta_, p);
    return *slot[p];
  }

  const DerivativeTensor& m(int c, int p) {
    if (c >= static_cast<int>(copies_.size())) throw std::out_of_range("copy index not supplied");
    if (static_cast<int>(m_.size()) <= p) m_.resize(p + 1);
    if (!m_[p]) m_[p] = derivative(model_, Which::m, c < 0 ? ObsView{} : copies_[c], theta_, eta_, p);
    return *m_[p];
  }

 private:
  ObsView block(int c) {
    if (model_.block_size == 1) return copies_[c];
    auto& buf = blocks_[c];
    if (buf.empty())
      for (int b = 0; b < model_.block_size; ++b) buf.insert(buf.end(), copies_[c + b].begin(), copies_[c + b].end());
    return buf;
  }

  const ModelSpec& model_;
  std::span<const ObsView> copies_;
  const Vec& theta_;
  const Vec& eta_;
  std::vector<std::vector<std::optional<DerivativeTensor>>> g_;
  std::vector<std::optional<DerivativeTensor>> m_;
  std::vector<std::vector<double>> blocks_;
};

double kernel_with_cache(const std::vector<FlatNode>& nodes, const CopyAssignment& assignment,
                         const Mat& Lambda, SampleCache& cache) {
  std::vector<Vec> vals(nodes.size());
  std::vector<Vec> kids;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    kids.clear();
    for (int c : nodes[i].children) kids.push_back(vals[c]);
    int p = static_cast<int>(kids.size());
    if (i + 1 < nodes.size()) {
      vals[i] = Lambda * cache.g(assignment.node_copy[i], p).contract(kids);
    } else {
      return cache.m(assignment.node_copy[i], p).contract(kids)[0];
    }
  }
  throw std::logic_error("empty tree");
}

std::pair<int, int> orders_needed(const std::vector<FlatNode>& nodes) {
  int g = 0;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) g = std::max<int>(g, nodes[i].children.size());
  return {g, static_cast<int>(nodes.back().children.size())};
}

}  // namespace

CopyAssignment canonical_assignment(const std::vector<FlatNode>& nodes, const ModelSpec& model) {
  CopyAssignment a;
  a.node_copy.resize(nodes.size());
  int root = model.m_uses_observation ? 1 : 0;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
    a.node_copy[i] = root + static_cast<int>(i) * model.block_size;
  a.node_copy.back() = model.m_uses_observation ? 0 : -1;
  return a;
}

int copies_for_tree(const RootedTree& tree, const ModelSpec& model) {
  return (model.m_uses_observation ? 1 : 0) + static_cast<int>(tree.node_count() - 1) * model.block_size;
}

MomentFunction::MomentFunction(int q, ModelSpec model, std::vector<PsiTerm> terms, bool affine_path)
    : q_(q), model_(std::move(model)), terms_(std::move(terms)), affine_path_(affine_path) {
  for (auto& t : terms_) {
    copies_ = std::max(copies_, copies_for_tree(t.tree, model_));
    auto [g, m] = orders_needed(t.nodes);
    max_g_order_ = std::max(max_g_order_, g);
    max_m_order_ = std::max(max_m_order_, m);
  }
  if (max_g_order_ > model_.max_order || max_m_order_ > model_.max_order)
    warnings_.push_back("model " + model_.name + " supplies analytic derivatives up to order " +
                        std::to_string(model_.max_order) + "; higher orders use finite differences");
  if (affine_path_ && !model_.g_affine)
    warnings_.push_back("affine moment function assembled for model " + model_.name +
                        " whose g is not declared affine in eta");
}

double MomentFunction::evaluate(std::span<const ObsView> copies, const Vec& theta, const Vec& eta,
                                const Vec& lambda) const {
  if (static_cast<int>(copies.size()) < copies_) throw std::invalid_argument("too few copies for psi");
  Mat Lambda = model_.lambda_map(lambda);
  SampleCache cache(model_, copies, theta, eta);
  long double acc = 0;
  for (auto& t : terms_) acc += static_cast<long double>(t.weight) * kernel_with_cache(t.nodes, t.assignment, Lambda, cache);
  return static_cast<double>(acc);
}

std::vector<double> MomentFunction::term_values(std::span<const ObsView> copies, const Vec& theta,
                                                const Vec& eta, const Vec& lambda) const {
  if (static_cast<int>(copies.size()) < copies_) throw std::invalid_argument("too few copies for psi");
  Mat Lambda = model_.lambda_map(lambda);
  SampleCache cache(model_, copies, theta, eta);
  std::vector<double> out;
  for (auto& t : terms_) out.push_back(kernel_with_cache(t.nodes, t.assignment, Lambda, cache));
  return out;
}

namespace {

MomentFunction assemble(int q, const ModelSpec& model, int cap, bool affine_only) {
  model.validate();
  std::vector<PsiTerm> terms;
  for (auto& tree : enumerate_trees(q, cap)) {
    if (affine_only && !is_affine_tree(tree)) continue;
    PsiTerm t;
    t.coeff = coefficient(q, tree);
    t.weight = t.coeff.to_double();
    t.nodes = postorder_nodes(tree);
    t.assignment = canonical_assignment(t.nodes, model);
    t.tree = tree;
    terms.push_back(std::move(t));
  }
  return MomentFunction(q, model, std::move(terms), affine_only);
}

}  // namespace

MomentFunction assemble_psi(int q, const ModelSpec& model, int cap) { return assemble(q, model, cap, false); }

MomentFunction assemble_psi_affine(int q, const ModelSpec& model, int cap) {
  return assemble(q, model, cap, true);
}

double evaluate_kernel(const std::vector<FlatNode>& nodes, std::span<const ObsView> copies,
                       const CopyAssignment& assignment, const Vec& theta, const Vec& eta, const Mat& Lambda,
                       const ModelSpec& model) {
  if (assignment.node_copy.size() != nodes.size()) throw std::invalid_argument("assignment size mismatch");
  SampleCache cache(model, copies, theta, eta);
  return kernel_with_cache(nodes, assignment, Lambda, cache);
}

double evaluate_kernel(const RootedTree& tree, std::span<const ObsView> copies, const Vec& theta,
                       const Vec& eta, const Vec& lambda, const ModelSpec& model) {
  auto nodes = postorder_nodes(tree);
  return evaluate_kernel(nodes, copies, canonical_assignment(nodes, model), theta, eta,
                         model.lambda_map(lambda), model);
}

// ---------------------------------------------------------------------------

namespace {

struct Pieces {
  const ModelSpec& model;
  std::span<const ObsView> copies;
  const Vec& theta;
  const Vec& eta;
  Mat Lambda;
  int d;

  std::vector<double> block(int label) const {
    int root = model.m_uses_observation ? 1 : 0;
    int start = root + (label - 2) * model.block_size;
    std::vector<double> buf;
    for (int b = 0; b < model.block_size; ++b)
      buf.insert(buf.end(), copies[start + b].begin(), copies[start + b].end());
    return buf;
  }
  DerivativeTensor gt(int label, int p) const {
    auto w = block(label);
    return derivative(model, Which::g, w, theta, eta, p);
  }
  DerivativeTensor mt(int p) const {
    return derivative(model, Which::m, model.m_uses_observation ? copies[0] : ObsView{}, theta, eta, p);
  }

  // Lambda g(W_label)
  Vec G(int label) const {
    auto t = gt(label, 0);
    Vec v(model.d_g);
    for (int k = 0; k < model.d_g; ++k) v[k] = t.flat(k);
    return Lambda * v;
  }
  // Lambda dg(W_label) as a d x d matrix
  Mat DG(int label) const {
    auto t = gt(label, 1);
    Mat J(model.d_g, d);
    for (int k = 0; k < model.d_g; ++k)
      for (int a = 0; a < d; ++a) J(k, a) = t.flat(k * d + a);
    return Lambda * J;
  }
  Vec D2G(int label, const Vec& u, const Vec& v) const {
    auto t = gt(label, 2);
    Vec out = Vec::Zero(model.d_g);
    for (int k = 0; k < model.d_g; ++k)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) out[k] += t.flat((k * d + a) * d + b) * u[a] * v[b];
    return Lambda * out;
  }
  Vec D3G(int label, const Vec& u, const Vec& v, const Vec& w) const {
    auto t = gt(label, 3);
    Vec out = Vec::Zero(model.d_g);
    for (int k = 0; k < model.d_g; ++k)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          for (int c = 0; c < d; ++c) out[k] += t.flat(((k * d + a) * d + b) * d + c) * u[a] * v[b] * w[c];
    return Lambda * out;
  }
  double M() const { return mt(0).flat(0); }
  Vec Mg() const {
    auto t = mt(1);
    Vec v(d);
    for (int a = 0; a < d; ++a) v[a] = t.flat(a);
    return v;
  }
  double M2(const Vec& u, const Vec& v) const {
    auto t = mt(2);
    double s = 0;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) s += t.flat(a * d + b) * u[a] * v[b];
    return s;
  }
  double M3(const Vec& u, const Vec& v, const Vec& w) const {
    auto t = mt(3);
    double s = 0;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        for (int c = 0; c < d; ++c) s += t.flat((a * d + b) * d + c) * u[a] * v[b] * w[c];
    return s;
  }
};

}  // namespace

ExplicitPsi::ExplicitPsi(int q, ModelSpec model) : q_(q), model_(std::move(model)) {
  if (q < 1 || q > 3) throw std::invalid_argument("explicit psi is available for q = 1, 2, 3");
}

int ExplicitPsi::copies_required() const {
  int nonroot = q_ == 1 ? 1 : (q_ == 2 ? 3 : 5);
  return (model_.m_uses_observation ? 1 : 0) + nonroot * model_.block_size;
}

double ExplicitPsi::evaluate(std::span<const ObsView> copies, const Vec& theta, const Vec& eta,
                             const Vec& lambda) const {
  if (static_cast<int>(copies.size()) < copies_required()) throw std::invalid_argument("too few copies");
  Pieces P{model_, copies, theta, eta, model_.lambda_map(lambda), model_.d_eta};
  double m = P.M();
  Vec mg = P.Mg();
  Vec g2 = P.G(2);
  if (q_ == 1) return m - mg.dot(g2);

  Vec g3 = P.G(3);
  Vec chain32 = P.DG(3) * g2;
  double corr2 = mg.dot(P.D2G(4, g2, g3));
  if (q_ == 2) return m - 2 * mg.dot(g2) + mg.dot(chain32) + 0.5 * P.M2(g2, g3) - 0.5 * corr2;

  Vec g4 = P.G(4);
  Vec g5 = P.G(5);
  Vec b423 = P.D2G(4, g2, g3);
  double psi = m - 3 * mg.dot(g2) + 3 * mg.dot(chain32) + 1.5 * P.M2(g2, g3);
  psi -= mg.dot(P.DG(4) * chain32);
  psi -= P.M2(chain32, g4);
  psi -= P.M3(g2, g3, g4) / 6.0;
  psi -= 2 * corr2;
  psi += 0.5 * mg.dot(P.DG(5) * b423);
  psi += mg.dot(P.D2G(5, chain32, g4));
  psi += mg.dot(P.D3G(5, g2, g3, g4)) / 6.0;
  psi -= 0.5 * mg.dot(P.D2G(6, b423, g5));
  psi += 0.5 * P.M2(b423, g5);
  return psi;
}

}  // namespace orthomom
