#include "orthomom/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace orthomom {

DerivativeTensor::DerivativeTensor(int output_dim, int order, int dim)
    : output_dim_(output_dim), order_(order), dim_(dim) {
  if (output_dim < 1 || order < 0 || dim < 0) throw std::invalid_argument("bad tensor shape");
  for (int i = 0; i < order; ++i) slots_ *= static_cast<std::size_t>(dim);
  data_.assign(static_cast<std::size_t>(output_dim) * slots_, 0.0);
}

double& DerivativeTensor::at(int k, std::span<const int> idx) {
  std::size_t off = 0;
  for (int j : idx) off = off * dim_ + j;
  return data_[k * slots_ + off];
}

double DerivativeTensor::at(int k, std::span<const int> idx) const {
  return const_cast<DerivativeTensor*>(this)->at(k, idx);
}

Vec DerivativeTensor::contract(std::span<const Vec> vs) const {
  if (static_cast<int>(vs.size()) != order_) throw std::invalid_argument("contract arity mismatch");
  std::vector<long double> buf(data_.begin(), data_.end());
  std::size_t len = buf.size();
  for (int s = order_ - 1; s >= 0; --s) {
    const Vec& v = vs[s];
    std::size_t next = len / dim_;
    for (std::size_t i = 0; i < next; ++i) {
      long double acc = 0;
      for (int j = 0; j < dim_; ++j) acc += buf[i * dim_ + j] * v[j];
      buf[i] = acc;
    }
    len = next;
  }
  Vec out(output_dim_);
  for (int k = 0; k < output_dim_; ++k) out[k] = static_cast<double>(buf[k]);
  return out;
}

DerivativeTensor DerivativeTensor::contract_last(const Vec& v) const {
  if (order_ == 0) throw std::invalid_argument("cannot contract an order-0 tensor");
  DerivativeTensor out(output_dim_, order_ - 1, dim_);
  for (std::size_t i = 0; i < out.data_.size(); ++i) {
    long double acc = 0;
    for (int j = 0; j < dim_; ++j) acc += data_[i * dim_ + j] * v[j];
    out.data_[i] = static_cast<double>(acc);
  }
  return out;
}

namespace {

std::size_t sorted_offset(std::span<const int> idx, int dim) {
  std::vector<int> s(idx.begin(), idx.end());
  std::sort(s.begin(), s.end());
  std::size_t off = 0;
  for (int j : s) off = off * dim + j;
  return off;
}

}  // namespace

bool DerivativeTensor::is_symmetric(double tol) const {
  bool ok = true;
  for (int k = 0; k < output_dim_ && ok; ++k) {
    for_each_index(order_, dim_, [&](std::span<const int> idx) {
      std::size_t off = 0;
      for (int j : idx) off = off * dim_ + j;
      double a = data_[k * slots_ + off];
      double b = data_[k * slots_ + sorted_offset(idx, dim_)];
      if (std::abs(a - b) > tol * std::max(1.0, std::abs(b))) ok = false;
    });
  }
  return ok;
}

void DerivativeTensor::symmetrize() {
  if (order_ < 2) return;
  for (int k = 0; k < output_dim_; ++k) {
    std::vector<long double> sum(slots_, 0.0L);
    std::vector<int> count(slots_, 0);
    for_each_index(order_, dim_, [&](std::span<const int> idx) {
      std::size_t off = 0;
      for (int j : idx) off = off * dim_ + j;
      std::size_t rep = sorted_offset(idx, dim_);
      sum[rep] += data_[k * slots_ + off];
      ++count[rep];
    });
    for_each_index(order_, dim_, [&](std::span<const int> idx) {
      std::size_t off = 0;
      for (int j : idx) off = off * dim_ + j;
      std::size_t rep = sorted_offset(idx, dim_);
      data_[k * slots_ + off] = static_cast<double>(sum[rep] / count[rep]);
    });
  }
}

double DerivativeTensor::max_abs() const {
  double m = 0;
  for (double x : data_) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace orthomom
