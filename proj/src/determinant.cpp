#include <stdexcept>

#include "orthomom/moment.hpp"

namespace orthomom {

namespace {

using Tables = std::vector<std::vector<DerivativeTensor>>;

Tables base_tensors(const ModelSpec& base, ObsView obs, const Vec& theta, const Vec& eta, int copies, int top) {
  Tables t(copies);
  for (int c = 0; c < copies; ++c) {
    ObsView sub = obs.subspan(static_cast<std::size_t>(c) * base.obs_dim, base.obs_dim);
    for (int k = 0; k <= top; ++k) t[c].push_back(derivative(base, Which::g, sub, theta, eta, k));
  }
  return t;
}

// Entry of a base tensor with an optional leading direction.
double entry(const DerivativeTensor& t, int k, int lead, const std::vector<int>& dirs) {
  std::vector<int> idx;
  if (lead >= 0) idx.push_back(lead);
  idx.insert(idx.end(), dirs.begin(), dirs.end());
  return t.at(k, idx);
}

int saturating_minus_one(int order) { return order == kUnlimitedOrder ? order : order - 1; }

ModelSpec transformed_shell(const ModelSpec& base, const std::string& suffix, int block) {
  if (base.block_size != 1) throw std::invalid_argument("determinant transforms need an unblocked base model");
  ModelSpec s = base;
  s.name = base.name + suffix;
  s.d_g = base.d_eta;
  s.block_size = block;
  s.max_order = saturating_minus_one(base.max_order);
  s.lambda_map = LambdaMap::scalar(base.d_eta);
  return s;
}

}  // namespace

ModelSpec det_transform_exact(const ModelSpec& base) {
  if (base.d_g != base.d_eta) throw std::invalid_argument("exact determinant transform needs d_g = d_eta");
  int n = base.d_eta;
  ModelSpec s = transformed_shell(base, "-det", n);
  s.g_deriv = [base, n](ObsView obs, const Vec& theta, const Vec& eta, int p) {
    Tables T = base_tensors(base, obs, theta, eta, n, p + 1);
    DerivativeTensor out(n, p, n);
    Mat M(n, n);
    std::vector<std::vector<int>> dirs(n);
    for (int r = 0; r < n; ++r) {
      for_each_index(p, n, [&](std::span<const int> J) {
        long double acc = 0;
        for_each_index(p, n, [&](std::span<const int> a) {
          for (auto& d : dirs) d.clear();
          for (int s = 0; s < p; ++s) dirs[a[s]].push_back(J[s]);
          for (int c = 0; c < n; ++c) {
            int k = static_cast<int>(dirs[c].size());
            for (int i = 0; i < n; ++i)
              M(i, c) = c == r ? entry(T[c][k], i, -1, dirs[c]) : entry(T[c][k + 1], i, c, dirs[c]);
          }
          acc += M.determinant();
        });
        out.at(r, J) = static_cast<double>(acc);
      });
    }
    return out;
  };
  return s;
}

ModelSpec det_transform_overid(const ModelSpec& base) {
  if (base.d_g <= base.d_eta) throw std::invalid_argument("overidentified determinant transform needs d_g > d_eta");
  int n = base.d_eta;
  int dg = base.d_g;
  ModelSpec s = transformed_shell(base, "-det-overid", 2 * n);
  s.g_deriv = [base, n, dg](ObsView obs, const Vec& theta, const Vec& eta, int p) {
    Tables T = base_tensors(base, obs, theta, eta, 2 * n, p + 1);
    DerivativeTensor out(n, p, n);
    Mat M(n, n);
    Mat A(dg, n);
    Vec B(dg);
    std::vector<std::vector<int>> left(n), right(n);
    for (int r = 0; r < n; ++r) {
      for_each_index(p, n, [&](std::span<const int> J) {
        long double acc = 0;
        for_each_index(p, 2 * n, [&](std::span<const int> a) {
          for (int c = 0; c < n; ++c) {
            left[c].clear();
            right[c].clear();
          }
          for (int s = 0; s < p; ++s) (a[s] % 2 == 0 ? left : right)[a[s] / 2].push_back(J[s]);
          for (int c = 0; c < n; ++c) {
            int kl = static_cast<int>(left[c].size());
            int kr = static_cast<int>(right[c].size());
            const auto& P = T[2 * c];
            const auto& V = T[2 * c + 1];
            for (int k = 0; k < dg; ++k) {
              for (int i = 0; i < n; ++i) A(k, i) = entry(P[kl + 1], k, i, left[c]);
              B[k] = c == r ? entry(V[kr], k, -1, right[c]) : entry(V[kr + 1], k, c, right[c]);
            }
            M.col(c) = A.transpose() * B;
          }
          acc += M.determinant();
        });
        out.at(r, J) = static_cast<double>(acc);
      });
    }
    return out;
  };
  return s;
}

}  // namespace orthomom
