#pragma once

#include <cstdint>
#include <memory>
#include <vector>

namespace orthomom {

// Monomials of total degree <= order in nvars variables, with a product table.
class JetSpace {
 public:
  JetSpace(int nvars, int order);

  int nvars() const { return nvars_; }
  int order() const { return order_; }
  std::size_t size() const { return monomials_.size(); }
  const std::vector<int>& exponents(std::size_t i) const { return monomials_[i]; }
  int degree(std::size_t i) const { return degrees_[i]; }
  // Index of the monomial with these exponents, or -1 when its degree exceeds order.
  long index_of(const std::vector<int>& exps) const;

  struct Product {
    std::uint32_t a, b, out;
  };
  const std::vector<Product>& products() const { return products_; }

 private:
  int nvars_;
  int order_;
  std::vector<std::vector<int>> monomials_;
  std::vector<int> degrees_;
  std::vector<Product> products_;
};

// Truncated multivariate Taylor polynomial: sum_i c_i x^{e_i}.
class Jet {
 public:
  Jet() = default;
  explicit Jet(std::shared_ptr<const JetSpace> space, long double value = 0.0L);

  static Jet variable(std::shared_ptr<const JetSpace> space, int var, long double value);

  const JetSpace& space() const { return *space_; }
  const std::shared_ptr<const JetSpace>& space_ptr() const { return space_; }
  long double& operator[](std::size_t i) { return c_[i]; }
  long double operator[](std::size_t i) const { return c_[i]; }
  long double value() const { return c_.empty() ? 0.0L : c_[0]; }

  Jet& operator+=(const Jet& o);
  Jet& operator-=(const Jet& o);
  Jet& operator*=(long double s);
  // this += a * b
  void add_product(const Jet& a, const Jet& b);
  void add_scaled(const Jet& a, long double s);

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(const Jet& a, const Jet& b);
  friend Jet operator*(Jet a, long double s) { return a *= s; }

 private:
  std::shared_ptr<const JetSpace> space_;
  std::vector<long double> c_;
};

}  // namespace orthomom
