#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "orthomom/moment.hpp"

namespace orthomom {

struct Unit {
  std::vector<Observation> obs;
  std::optional<double> covariate;
};

struct Panel {
  std::vector<Unit> units;

  // Common T; throws when units differ in length or the panel is empty.
  int T() const;
};

enum class UStatMode {
  exhaustive,    // every ordered tuple of distinct indices
  combinations,  // every increasing tuple i_1 < ... < i_L
  subsample,     // max_tuples ordered tuples drawn uniformly with the seed
  automatic      // exhaustive up to max_tuples tuples, subsample beyond
};

struct UStatConfig {
  UStatMode mode = UStatMode::automatic;
  std::uint64_t max_tuples = 1'000'000;
  std::uint64_t seed = 0;
};

// Number of tuples the configuration visits for n observations and L copies.
std::uint64_t ustat_tuple_count(int n, int L, const UStatConfig& cfg);
// Average of kernel(idx) over index tuples of length L drawn from {0..n-1}.
double u_statistic(int n, int L, const std::function<double(std::span<const int>)>& kernel,
                   const UStatConfig& cfg = {});
double u_statistic(const MomentFunction& psi, std::span<const Observation> obs, const Vec& theta, const Vec& eta,
                   const Vec& lambda, const UStatConfig& cfg = {});

struct NuisanceOptions {
  Mat omega;  // GMM weight for overidentified g; empty means identity
  // Replaces the sample Jacobian (mean of d_eta g over n observations) before
  // eta and Lambda are solved; used for shrinkage of the design.
  std::function<Mat(const Mat& jacobian, int n)> jacobian_override;
  Vec eta_start;  // nonlinear g only; zeros when empty
  double singular_tol = 1e-10;
};

struct NuisanceFit {
  Vec eta;
  Vec lambda;
  Mat Lambda;
  Mat jacobian;
  bool singular = false;
};

// eta by the normal equations (affine g) or Gauss-Newton on the sample mean of
// g; Lambda as the left inverse of the sample Jacobian.
NuisanceFit nuisance_fit(const ModelSpec& model, std::span<const Observation> obs, const Vec& theta,
                         const NuisanceOptions& opt = {});

struct SplitPlan {
  std::vector<int> holdout;     // nuisance sample
  std::vector<int> evaluation;  // U-statistic sample
  bool cross_fit = false;       // also run with the roles swapped and average
  bool leave_tuple_out = false; // nuisances refit on everything outside each tuple

  static SplitPlan halves(int T, bool cross_fit = false);
  static SplitPlan leave_out(int T);
  void validate(int T, int L) const;
};

struct OrthOptions {
  UStatConfig ustat;
  NuisanceOptions nuisance;
  Vec theta_start;  // general targets only
  double tol = 1e-10;
  int max_iter = 100;
};

struct OrthResult {
  Vec theta;
  // Per-unit averaged moment evaluated at theta = theta_start (or 0); for
  // targets m(eta) - theta this is the unit's contribution to theta.
  std::vector<double> unit_values;
  std::vector<bool> excluded;
  int n_excluded = 0;
  int iterations = 0;
  std::vector<std::string> warnings;
};

// Moment used for estimation: the affine tree set when g is affine.
MomentFunction estimation_moment(int q, const ModelSpec& model);

// Per-unit moment average for one unit at a fixed theta; nullopt when a
// nuisance fit is singular.
std::optional<double> unit_moment(const MomentFunction& psi, std::span<const Observation> obs, const SplitPlan& split,
                                  const Vec& theta, const OrthOptions& opt = {});

OrthResult orth_estimate(const Panel& panel, const ModelSpec& model, int q, const SplitPlan& split,
                         const OrthOptions& opt = {});

// Dirichlet empirical-Bayes shrinkage for the binary two-regressor design with
// observations (Y, 1, X1, X2); cells ordered (0,0), (0,1), (1,0), (1,1).
struct DirichletEB {
  double alpha = 0;
  std::vector<double> pi;  // pooled cell shares after flooring
  Mat Pi;                  // E_pi[X X']
  std::vector<std::pair<double, double>> trace;  // (alpha, objective) visited

  // -(T/(T+a)) S/T - (a/(T+a)) Pi for a sample Jacobian J = -S/T.
  Mat shrink(const Mat& jacobian, int T) const;
  std::function<Mat(const Mat&, int)> as_override() const;
};

struct AlphaSearch {
  double lo = 1e-3;
  double hi = 1e4;
  int grid = 81;
  double rel_tol = 1e-10;
};

int binary_cell(const Observation& w);
Mat cell_second_moment(const std::vector<double>& pi);
// Log marginal likelihood N[lnG(a) - lnG(a+T)] + sum_i sum_c [lnG(pi_c a + n_ic) - lnG(pi_c a)].
double dirichlet_objective(double alpha, const std::vector<double>& pi, const std::vector<std::array<int, 4>>& counts,
                           int T);
DirichletEB regularize_lambda(const Panel& panel, const AlphaSearch& search = {});
DirichletEB regularize_lambda(const std::vector<std::array<int, 4>>& counts, int T, const AlphaSearch& search = {});

}  // namespace orthomom
