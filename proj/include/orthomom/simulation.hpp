#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "orthomom/estimation.hpp"

namespace orthomom {

// Callback design: firm type Z in {1, 2}, beta_j = Z + V_j, cells of (X1, X2)
// with type-dependent probabilities, Y = 1{eps >= beta'x} with logistic eps.
struct SimConfig {
  int N = 1000;
  std::vector<int> T_grid = {20, 40, 60, 80, 100};
  int reps = 200;
  std::uint64_t seed = 20240611;
  bool ols = true;
  bool orth2 = true;
  bool unregularized = true;
  bool regularized = true;
  int threads = 1;
  long truth_units = 10'000'000;
  AlphaSearch alpha;

  void validate() const;
};

struct Firm {
  int type = 1;
  std::array<double, 3> beta{};
};

Firm draw_firm(std::uint64_t seed, std::uint64_t rep, std::uint64_t unit);
// Cell probabilities for (0,0), (0,1), (1,0), (1,1).
std::array<double, 4> cell_probs(int type);
// First T observations (Y, 1, X1, X2) of the firm's application sequence;
// longer T extends the same sequence.
std::vector<Observation> draw_applications(const Firm& firm, std::uint64_t seed, std::uint64_t rep,
                                           std::uint64_t unit, int T);
Panel generate_panel(const SimConfig& cfg, int rep, int T);
// Population projection coefficients E[XX']^{-1} E[XY] for one firm.
Vec firm_truth(const Firm& firm);

struct PopulationTruth {
  long units = 0;
  double theta1 = 0;
  double theta2 = 0;
  double sd = 0;  // sqrt(theta2 - theta1^2)
};
PopulationTruth population_truth(std::uint64_t seed, long units, int threads = 1);

// Observation types 4 Y + cell, with pair counts over s1 < s2.
struct TypeCounts {
  int T = 0;
  std::array<int, 8> n{};
  std::array<std::array<long, 8>, 8> pairs{};
};
TypeCounts count_types(std::span<const Observation> obs);

struct UnitEstimate {
  bool ok = false;
  double theta1 = 0;  // estimate of eta_1
  double theta2 = 0;  // estimate of eta_1^2
};
// eb == nullptr means unregularized.
UnitEstimate ols_unit(const TypeCounts& c, const DirichletEB* eb);
UnitEstimate orth2_unit(const TypeCounts& c, const DirichletEB* eb);
// Direct loop over pairs s1 < s2 with leave-two-out refits.
UnitEstimate orth2_unit_direct(std::span<const Observation> obs, const DirichletEB* eb);

struct StudyRow {
  int rep = 0;
  std::string estimator;  // ols | orth2
  bool regularized = false;
  int T = 0;
  std::string target;  // theta1 | theta2
  double estimate = 0;
  double truth_subset = 0;
  int n_excluded = 0;
};

struct StudyResult {
  std::vector<StudyRow> rows;
  std::vector<double> alpha;  // per (rep, T) in row-major order
  PopulationTruth truth;
};

StudyResult run_study(const SimConfig& cfg);
void write_results_csv(std::ostream& out, const std::vector<StudyRow>& rows);
nlohmann::json summarize_study(const SimConfig& cfg, const StudyResult& res);

// Type-7 sample quantile.
double quantile(std::vector<double> v, double p);

struct NsConfig {
  std::string function = "exp";
  int q_max = 4;
  int N = 200;
  int T = 8;
  int reps = 200;
  std::uint64_t seed = 7;
  bool cross_fit = true;
  int threads = 1;
};

struct NsRow {
  int q = 0;
  std::string estimator;  // plug-in | orth
  double mean = 0;
  double truth = 0;
  double bias = 0;
  double variance = 0;
};

// Order-q estimator of m(eta0) from a preliminary eta_hat and an evaluation
// sample, averaged over all subsets (elementary symmetric means).
double ns_unit_estimate(const ScalarFunction& f, int q, double eta_hat, std::span<const double> y);
std::vector<NsRow> neyman_scott_demo(const NsConfig& cfg);
void write_ns_csv(std::ostream& out, const std::vector<NsRow>& rows);

}  // namespace orthomom
