#include "orthomom/fixtures.hpp"

#include <cmath>
#include <stdexcept>

#include "orthomom/random.hpp"

namespace orthomom {

ModelSpec fixture_scalar_model(double c) {
  ModelSpec s;
  s.name = c == 0.0 ? "scalar-affine" : "scalar-nonlinear";
  s.obs_dim = 3;
  s.g_affine = c == 0.0;
  s.m_linear_shift = true;
  s.lambda_map = LambdaMap::full(1, 1);
  s.g_deriv = [c](ObsView w, const Vec&, const Vec& eta, int p) {
    DerivativeTensor t(1, p, 1);
    double e = eta[0];
    switch (p) {
      case 0: t.flat(0) = w[0] * (w[1] - e - c * e * e); break;
      case 1: t.flat(0) = w[0] * (-1.0 - 2 * c * e); break;
      case 2: t.flat(0) = -2 * c * w[0]; break;
      default: break;
    }
    return t;
  };
  s.m_deriv = [](ObsView w, const Vec& th, const Vec& eta, int p) {
    DerivativeTensor t(1, p, 1);
    t.flat(0) = w[2] * std::exp(eta[0]) - (p == 0 ? th[0] : 0.0);
    return t;
  };
  return s;
}

ModelSpec fixture_scalar_cubic_model() {
  ModelSpec s;
  s.name = "scalar-cubic";
  s.obs_dim = 3;
  s.m_linear_shift = true;
  s.lambda_map = LambdaMap::full(1, 1);
  s.g_deriv = [](ObsView w, const Vec&, const Vec& eta, int p) {
    DerivativeTensor t(1, p, 1);
    double e = eta[0];
    switch (p) {
      case 0: t.flat(0) = w[0] * (w[1] - e) - 0.2 * w[2] * e * e * e; break;
      case 1: t.flat(0) = -w[0] - 0.6 * w[2] * e * e; break;
      case 2: t.flat(0) = -1.2 * w[2] * e; break;
      case 3: t.flat(0) = -1.2 * w[2]; break;
      default: break;
    }
    return t;
  };
  s.m_deriv = [](ObsView w, const Vec& th, const Vec& eta, int p) {
    DerivativeTensor t(1, p, 1);
    t.flat(0) = w[2] * std::pow(0.7, p) * std::exp(0.7 * eta[0]) - (p == 0 ? th[0] : 0.0);
    return t;
  };
  return s;
}

ModelSpec fixture_bivariate_model(double c) {
  ModelSpec s;
  s.name = c == 0.0 ? "bivariate-affine" : "bivariate-nonlinear";
  s.d_eta = 2;
  s.d_g = 2;
  s.obs_dim = 4;
  s.g_affine = c == 0.0;
  s.m_linear_shift = true;
  s.lambda_map = LambdaMap::full(2, 2);
  s.g_deriv = [c](ObsView w, const Vec&, const Vec& eta, int p) {
    DerivativeTensor t(2, p, 2);
    double x[2] = {w[0], w[1]};
    double cs = c * w[3];
    if (p == 0) {
      double r = w[2] - x[0] * eta[0] - x[1] * eta[1];
      t.flat(0) = x[0] * r - cs * eta[0] * eta[0];
      t.flat(1) = x[1] * r - cs * eta[0] * eta[1];
    } else if (p == 1) {
      for (int k = 0; k < 2; ++k)
        for (int a = 0; a < 2; ++a) t.flat(k * 2 + a) = -x[k] * x[a];
      t.flat(0) -= 2 * cs * eta[0];
      t.flat(2) -= cs * eta[1];
      t.flat(3) -= cs * eta[0];
    } else if (p == 2) {
      t.flat(0) = -2 * cs;        // (0; 0, 0)
      t.flat(4 + 1) = -cs;        // (1; 0, 1)
      t.flat(4 + 2) = -cs;        // (1; 1, 0)
    }
    return t;
  };
  s.m_deriv = [](ObsView w, const Vec& th, const Vec& eta, int p) {
    const double a[2] = {0.5, -0.3};
    double base = (1.0 + w[3]) * std::exp(a[0] * eta[0] + a[1] * eta[1]);
    DerivativeTensor t(1, p, 2);
    for_each_index(p, 2, [&](std::span<const int> idx) {
      double v = base;
      for (int j : idx) v *= a[j];
      t.at(0, idx) = v;
    });
    if (p == 0) t.flat(0) -= th[0];
    return t;
  };
  return s;
}

ModelSpec fixture_overid_model() {
  ModelSpec s;
  s.name = "overid-affine";
  s.d_eta = 2;
  s.d_g = 3;
  s.obs_dim = 6;
  s.g_affine = true;
  s.m_linear_shift = true;
  s.lambda_map = LambdaMap::full(2, 3);
  s.g_deriv = [](ObsView w, const Vec&, const Vec& eta, int p) {
    DerivativeTensor t(3, p, 2);
    if (p == 0) {
      double r = w[5] - w[3] * eta[0] - w[4] * eta[1];
      for (int k = 0; k < 3; ++k) t.flat(k) = w[k] * r;
    } else if (p == 1) {
      for (int k = 0; k < 3; ++k)
        for (int a = 0; a < 2; ++a) t.flat(k * 2 + a) = -w[k] * w[3 + a];
    }
    return t;
  };
  s.m_deriv = [](ObsView w, const Vec& th, const Vec& eta, int p) {
    const double a[2] = {0.4, 0.2};
    double base = (1.0 + 0.5 * w[3]) * std::exp(a[0] * eta[0] + a[1] * eta[1]);
    DerivativeTensor t(1, p, 2);
    for_each_index(p, 2, [&](std::span<const int> idx) {
      double v = base;
      for (int j : idx) v *= a[j];
      t.at(0, idx) = v;
    });
    if (p == 0) t.flat(0) -= th[0];
    return t;
  };
  return s;
}

namespace {

const std::vector<Observation> kScalarAtoms = {{0.8, -0.5, 1.0}, {1.2, 0.9, 0.5}, {1.0, 0.4, 1.5}};
const std::vector<double> kScalarProbs = {0.3, 0.45, 0.25};

const std::vector<Observation> kBivariateAtoms = {
    {1.0, 0.2, 0.5, 0.3}, {0.4, 1.1, -0.2, 0.8}, {-0.6, 0.7, 0.9, 0.5}, {0.9, -0.8, 0.1, 1.2}};
const std::vector<double> kBivariateProbs = {0.25, 0.3, 0.2, 0.25};

Fixture make(ModelSpec model, const std::vector<Observation>& atoms, const std::vector<double>& probs) {
  Vec eta0 = Vec::Zero(model.d_eta);
  Vec theta0 = Vec::Zero(1);
  DiscreteDGP dgp = solve_truth(model, atoms, probs, eta0, theta0);
  std::string name = model.name;
  return {name, std::move(model), std::move(dgp)};
}

}  // namespace

Fixture fixture_scalar_affine() { return make(fixture_scalar_model(0.0), kScalarAtoms, kScalarProbs); }
Fixture fixture_scalar_nonlinear() { return make(fixture_scalar_model(0.3), kScalarAtoms, kScalarProbs); }
Fixture fixture_scalar_cubic() { return make(fixture_scalar_cubic_model(), kScalarAtoms, kScalarProbs); }
Fixture fixture_bivariate_affine() { return make(fixture_bivariate_model(0.0), kBivariateAtoms, kBivariateProbs); }
Fixture fixture_bivariate_nonlinear() {
  return make(fixture_bivariate_model(0.4), kBivariateAtoms, kBivariateProbs);
}

Fixture fixture_overid_affine() {
  // Residuals are projected so that E[z (y - x'eta0)] = 0 holds exactly.
  Stream rng(20240611, {7});
  const int s = 5;
  std::vector<double> probs(s);
  double total = 0;
  for (auto& p : probs) total += (p = rng.uniform(0.5, 1.5));
  for (auto& p : probs) p /= total;
  Mat Z(3, s), X(2, s);
  for (int i = 0; i < s; ++i) {
    for (int k = 0; k < 3; ++k) Z(k, i) = rng.uniform(-1.0, 1.0);
    for (int k = 0; k < 2; ++k) X(k, i) = rng.uniform(-1.0, 1.0);
  }
  Vec u(s);
  for (int i = 0; i < s; ++i) u[i] = rng.uniform(-1.0, 1.0);
  Mat A(3, s);
  for (int i = 0; i < s; ++i) A.col(i) = probs[i] * Z.col(i);
  u -= A.transpose() * (A * A.transpose()).ldlt().solve(A * u);
  Vec eta0(2);
  eta0 << 0.3, -0.2;
  std::vector<Observation> atoms;
  for (int i = 0; i < s; ++i)
    atoms.push_back({Z(0, i), Z(1, i), Z(2, i), X(0, i), X(1, i), X.col(i).dot(eta0) + u[i]});
  return make(fixture_overid_model(), atoms, probs);
}

std::vector<std::string> fixture_names() {
  return {"scalar-affine", "scalar-nonlinear", "scalar-cubic", "bivariate-affine", "bivariate-nonlinear",
          "overid-affine"};
}

Fixture fixture_by_name(const std::string& name) {
  if (name == "scalar-affine") return fixture_scalar_affine();
  if (name == "scalar-nonlinear") return fixture_scalar_nonlinear();
  if (name == "scalar-cubic") return fixture_scalar_cubic();
  if (name == "bivariate-affine") return fixture_bivariate_affine();
  if (name == "bivariate-nonlinear") return fixture_bivariate_nonlinear();
  if (name == "overid-affine") return fixture_overid_affine();
  throw std::invalid_argument("unknown fixture: " + name);
}

DiscreteDGP random_dgp(const ModelSpec& model, std::uint64_t seed, int s) {
  if (model.block_size != 1) throw std::invalid_argument("random_dgp expects an unblocked model");
  Stream rng(seed, {0x44475000});
  std::vector<double> probs(s);
  double total = 0;
  for (auto& p : probs) total += (p = rng.uniform(0.5, 1.5));
  for (auto& p : probs) p /= total;
  std::vector<Observation> atoms(s, Observation(model.obs_dim));
  for (auto& a : atoms)
    for (auto& x : a) x = rng.uniform(-1.0, 1.0);
  return solve_truth(model, atoms, probs, Vec::Zero(model.d_eta), Vec::Zero(model.d_theta));
}

DiscreteDGP neyman_scott_dgp(const ModelSpec& model, double eta0, const std::vector<double>& u,
                             const std::vector<double>& probs) {
  std::vector<Observation> atoms;
  for (double x : u) atoms.push_back({eta0 + x});
  return solve_truth(model, atoms, probs, Vec::Constant(1, eta0), Vec::Zero(1));
}

}  // namespace orthomom
