#pragma once

#include <json.hpp>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "orthomom/jet.hpp"
#include "orthomom/moment.hpp"

namespace orthomom {

// Finite-support distribution over base observations. Block models draw their
// blocks as independent products of these atoms.
struct DiscreteDGP {
  std::vector<Observation> atoms;
  std::vector<double> probs;
  Vec theta0;
  Vec eta0;
  Vec lambda0;
};

struct DgpResiduals {
  double prob_sum = 0;     // |sum p - 1|
  double g = 0;            // max |E g(theta0, eta0)|
  double m = 0;            // |E m(theta0, eta0)|
  double left_inverse = 0; // max |Lambda(lambda0) J0 - I|
};
DgpResiduals dgp_residuals(const ModelSpec& model, const DiscreteDGP& dgp);

// Joint Newton solve of E g = 0, E m = 0 for (eta0, theta0); lambda0 from J0.
DiscreteDGP solve_truth(const ModelSpec& model, std::vector<Observation> atoms, std::vector<double> probs,
                        Vec eta_start, Vec theta_start);

DerivativeTensor expected_g(const ModelSpec& model, const DiscreteDGP& dgp, const Vec& theta, const Vec& eta,
                            int order);
DerivativeTensor expected_m(const ModelSpec& model, const DiscreteDGP& dgp, const Vec& theta, const Vec& eta,
                            int order);
Mat expected_jacobian(const ModelSpec& model, const DiscreteDGP& dgp, const Vec& theta, const Vec& eta);

struct PopulationOptions {
  double cap = 1e7;  // maximum number of weighted atom tuples
};

// Exact expectation by summing psi over every L-tuple of atoms.
double population_moment(const MomentFunction& psi, const DiscreteDGP& dgp, const Vec& theta, const Vec& eta,
                         const Vec& lambda, const PopulationOptions& opt = {});
// Same expectation computed from expected derivative tensors (each node reads its own copy).
double population_moment_factorized(const MomentFunction& psi, const DiscreteDGP& dgp, const Vec& theta,
                                    const Vec& eta, const Vec& lambda);
// Taylor jet of the population moment in (delta eta, delta lambda) around (eta, lambda).
Jet population_moment_jet(const MomentFunction& psi, const DiscreteDGP& dgp, const Vec& theta, const Vec& eta,
                          const Vec& lambda, int order);

enum class DerivativeMethod { automatic, taylor, finite_difference };

struct OrthoOptions {
  int check_order = -1;  // -1 means q + 1
  double threshold = 1e-7;
  DerivativeMethod method = DerivativeMethod::automatic;
  std::vector<double> steps = {1e-2, 5e-3, 2.5e-3};
};

struct OrthoEntry {
  std::vector<int> alpha;
  std::vector<int> beta;
  int order = 0;
  double value = 0;
};

struct OrthoReport {
  std::string model;
  int q = 0;
  int check_order = 0;
  std::string method;
  double threshold = 0;
  std::vector<OrthoEntry> entries;
  double value_at_truth = 0;
  std::vector<double> max_abs_by_order;  // index = order, entry 0 unused
  double max_abs_upto_q = 0;
  int first_nonvanishing_order = 0;  // 0 when every checked order vanishes
  bool passed = false;

  nlohmann::json to_json() const;
};

// Mixed partials of f at 0 for every multi-index of order 1..max_order over nvars
// variables, by central differences with two Richardson steps over the ladder.
// The first d_eta variables are reported as alpha, the rest as beta.
std::vector<OrthoEntry> richardson_derivatives(const std::function<double(const std::vector<double>&)>& f,
                                               int d_eta, int nvars, int max_order,
                                               const std::vector<double>& steps);

OrthoReport orthogonality_check(const MomentFunction& psi, const DiscreteDGP& dgp, const OrthoOptions& opt = {});
OrthoReport orthogonality_check(const ModelSpec& model, const DiscreteDGP& dgp, int q, int check_order = -1);

// Brute-force weighted composition sum S(c_1..c_r) for a given q.
BigInt composition_sum_oracle(const std::vector<int>& c, int q);
// Value claimed by the composition-sum lemma, when one of its cases applies.
std::optional<BigInt> composition_sum_claim(const std::vector<int>& c, int q);
// (brute-force sum, closed form C(M + n + sum a, n + sum a)).
std::pair<BigInt, BigInt> hockey_stick_oracle(const std::vector<int>& a, int M);

struct LemmaReport {
  int cases = 0;
  std::uint64_t seed = 0;
  int composition_zero = 0;  // cases where the claim is 0
  int composition_sign = 0;  // cases where the claim is (-1)^r
  int composition_failures = 0;
  int hockey_checked = 0;
  int hockey_failures = 0;
  bool passed = false;

  nlohmann::json to_json() const;
};

// `cases` random instances of each lemma; composition cases alternate between
// the two claims.
LemmaReport lemma_suite(int cases, std::uint64_t seed);

}  // namespace orthomom
