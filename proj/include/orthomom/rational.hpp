#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <string>

namespace orthomom {

using BigInt = boost::multiprecision::cpp_int;

// Exact rational in lowest terms with a positive denominator.
class Rational {
 public:
  Rational() = default;
  Rational(long long n) : num_(n) {}
  Rational(BigInt num, BigInt den);

  const BigInt& numerator() const { return num_; }
  const BigInt& denominator() const { return den_; }

  double to_double() const;
  std::string to_string() const;

  Rational operator-() const;
  Rational& operator+=(const Rational& o);
  Rational& operator-=(const Rational& o);
  Rational& operator*=(const Rational& o);
  Rational& operator/=(const Rational& o);

  friend Rational operator+(Rational a, const Rational& b) { return a += b; }
  friend Rational operator-(Rational a, const Rational& b) { return a -= b; }
  friend Rational operator*(Rational a, const Rational& b) { return a *= b; }
  friend Rational operator/(Rational a, const Rational& b) { return a /= b; }
  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend bool operator<(const Rational& a, const Rational& b) {
    return a.num_ * b.den_ < b.num_ * a.den_;
  }

 private:
  void normalize();

  BigInt num_{0};
  BigInt den_{1};
};

BigInt factorial(long n);
// Zero when k < 0 or k > n.
BigInt binomial(long n, long k);

}  // namespace orthomom
