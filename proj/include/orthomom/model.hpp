#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "orthomom/tensor.hpp"

namespace orthomom {

using Observation = std::vector<double>;

inline constexpr int kUnlimitedOrder = std::numeric_limits<int>::max();

// Parametrization lambda -> Lambda (d_eta x d_g).
class LambdaMap {
 public:
  enum class Kind { full, scalar, fixed, weighted_left_inverse };

  static LambdaMap full(int d_eta, int d_g);
  static LambdaMap scalar(int d_eta);
  static LambdaMap fixed(Mat value);
  // lambda = vec(J) (column-major, d_g x d_eta); Lambda = (J' W J)^{-1} J' W with W = omega^{-1}.
  static LambdaMap weighted_left_inverse(int d_eta, Mat omega);

  Kind kind() const { return kind_; }
  int d_eta() const { return d_eta_; }
  int d_g() const { return d_g_; }
  int d_lambda() const;

  Mat operator()(std::span<const double> lambda) const;
  Mat operator()(const Vec& lambda) const { return (*this)(std::span<const double>(lambda.data(), lambda.size())); }

  // lambda such that Lambda(lambda) is the (weighted) left inverse of J.
  Vec from_jacobian(const Mat& jacobian) const;

  // Affine maps satisfy Lambda(lambda) = offset + sum_l lambda_l * basis(l).
  bool affine() const { return kind_ != Kind::weighted_left_inverse; }
  Mat offset() const;
  Mat basis(int l) const;

 private:
  Kind kind_ = Kind::full;
  int d_eta_ = 0;
  int d_g_ = 0;
  Mat value_;
  Mat weight_;
};

using DerivFn = std::function<DerivativeTensor(std::span<const double> obs, const Vec& theta,
                                               const Vec& eta, int order)>;

struct ModelSpec {
  std::string name;
  int d_eta = 1;
  int d_g = 1;
  int d_theta = 1;
  int obs_dim = 1;
  // Base observations consumed by one g evaluation; g_deriv receives their concatenation.
  int block_size = 1;
  // False when m depends on (theta, eta) only; the root then consumes no copy.
  bool m_uses_observation = true;
  bool g_affine = false;
  // m(W, theta, eta) = f(W, eta) - theta with scalar theta.
  bool m_linear_shift = false;
  int max_order = kUnlimitedOrder;
  DerivFn g_deriv;
  DerivFn m_deriv;
  LambdaMap lambda_map;

  int d_lambda() const { return lambda_map.d_lambda(); }
  void validate() const;
};

enum class Which { g, m };

struct FdOptions {
  int max_depth = 4;
  // Highest analytic order used as the differencing base; -1 picks min(max_order, p - 1).
  int base_order = -1;
};

DerivativeTensor fd_derivative(const ModelSpec& model, Which which, std::span<const double> obs,
                               const Vec& theta, const Vec& eta, int order, const FdOptions& opt = {});

// Analytic tensor when order <= max_order, finite differences otherwise.
DerivativeTensor derivative(const ModelSpec& model, Which which, std::span<const double> obs,
                            const Vec& theta, const Vec& eta, int order);

// Smooth scalar function with derivatives f^(r)(u).
struct ScalarFunction {
  std::string name;
  std::function<double(double u, int r)> eval;
  int max_order = kUnlimitedOrder;
};

ScalarFunction scalar_identity();
ScalarFunction scalar_square();
ScalarFunction scalar_cube();
ScalarFunction scalar_exp(double scale = 1.0);
ScalarFunction scalar_logistic();
ScalarFunction scalar_function(const std::string& name);

// Observation layout (Y, D, Z, X_1..X_k).
ModelSpec builtin_linear_iv(int k);
// Observation layout (R, X_1..X_k).
ModelSpec builtin_generated_regressor(ScalarFunction f, int k);

struct HeterocoefTarget {
  enum class Kind { mean, second_moment, quadratic };
  Kind kind = Kind::mean;
  int component = 0;
  Mat D;  // quadratic only

  static HeterocoefTarget mean(int j) { return {Kind::mean, j, {}}; }
  static HeterocoefTarget second_moment(int j) { return {Kind::second_moment, j, {}}; }
  static HeterocoefTarget quadratic(Mat D) { return {Kind::quadratic, 0, std::move(D)}; }
};

// Observation layout (Y, X_1..X_d); g = X(Y - X'eta), m = target(eta) - theta.
ModelSpec builtin_heterocoef(int d_eta, HeterocoefTarget target = HeterocoefTarget::mean(0));
// Observation layout (Y); g = Y - eta, Lambda = -1 fixed, m = f(eta) - theta.
ModelSpec builtin_neyman_scott(ScalarFunction f);

struct BuiltinOptions {
  int dim = 2;
  std::string function = "exp";
  std::string target = "mean";
  int component = 0;
};

// Names: linear-iv, generated-regressor, heterocoef, neyman-scott.
ModelSpec builtin_model(const std::string& name, const BuiltinOptions& opt = {});

}  // namespace orthomom
