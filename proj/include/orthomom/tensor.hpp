#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace orthomom {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Dense array of shape output_dim x dim^order. Entry (k, j_1..j_p) lives at
// k * dim^p + ((j_1 * dim + j_2) * dim + ...) + j_p.
class DerivativeTensor {
 public:
  DerivativeTensor() = default;
  DerivativeTensor(int output_dim, int order, int dim);

  int output_dim() const { return output_dim_; }
  int order() const { return order_; }
  int dim() const { return dim_; }
  std::size_t slots() const { return slots_; }

  double& at(int k, std::span<const int> idx);
  double at(int k, std::span<const int> idx) const;
  double& flat(std::size_t i) { return data_[i]; }
  double flat(std::size_t i) const { return data_[i]; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  // Contract slot s with vs[s] for every slot; returns the output_dim vector.
  Vec contract(std::span<const Vec> vs) const;
  // Contract only the last slot, yielding a tensor of order p-1.
  DerivativeTensor contract_last(const Vec& v) const;

  bool is_symmetric(double tol) const;
  void symmetrize();
  double max_abs() const;

 private:
  int output_dim_ = 0;
  int order_ = 0;
  int dim_ = 0;
  std::size_t slots_ = 1;
  std::vector<double> data_;
};

// Calls fn(idx) for every multi-index in {0..dim-1}^order, last index fastest.
template <class Fn>
void for_each_index(int order, int dim, Fn&& fn) {
  std::vector<int> idx(order, 0);
  if (dim == 0 && order > 0) return;
  while (true) {
    fn(std::span<const int>(idx));
    int s = order - 1;
    while (s >= 0 && ++idx[s] == dim) idx[s--] = 0;
    if (s < 0) return;
  }
}

}  // namespace orthomom
