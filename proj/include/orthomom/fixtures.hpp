#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "orthomom/verification.hpp"

namespace orthomom {

struct Fixture {
  std::string name;
  ModelSpec model;
  DiscreteDGP dgp;
};

// Scalar g(w, eta) = w1 (w2 - eta - c eta^2), m = w3 exp(eta) - theta; 3 atoms.
ModelSpec fixture_scalar_model(double c);
// Scalar g(w, eta) = w1 (w2 - eta) - 0.2 w3 eta^3, m = w3 exp(0.7 eta) - theta; 3 atoms.
ModelSpec fixture_scalar_cubic_model();
// Bivariate g_k = x_k (y - x'eta) - c s h_k(eta) with h = (eta1^2, eta1 eta2),
// m = (1 + s) exp(0.5 eta1 - 0.3 eta2) - theta. Observation (x1, x2, y, s).
ModelSpec fixture_bivariate_model(double c);
// Overidentified g = z (y - x'eta) with z in R^3, x in R^2,
// m = (1 + 0.5 x1) exp(0.4 eta1 + 0.2 eta2) - theta. Observation (z1, z2, z3, x1, x2, y).
ModelSpec fixture_overid_model();

Fixture fixture_scalar_affine();
Fixture fixture_scalar_nonlinear();
Fixture fixture_scalar_cubic();
Fixture fixture_bivariate_affine();
Fixture fixture_bivariate_nonlinear();
Fixture fixture_overid_affine();

std::vector<std::string> fixture_names();
Fixture fixture_by_name(const std::string& name);

// Random finite-support DGP for a built-in model with the truth solved exactly.
DiscreteDGP random_dgp(const ModelSpec& model, std::uint64_t seed, int atoms);

// Neyman-Scott DGP: Y = eta0 + U with U on the given centered atoms.
DiscreteDGP neyman_scott_dgp(const ModelSpec& model, double eta0, const std::vector<double>& u,
                             const std::vector<double>& probs);

}  // namespace orthomom
