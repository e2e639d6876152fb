#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "orthomom/fixtures.hpp"
#include "orthomom/random.hpp"
#include "orthomom/verification.hpp"

using namespace orthomom;

namespace {

std::vector<ModelSpec> affine_builtins() {
  Mat D = Mat::Zero(2, 2);
  D(0, 0) = 1.0;
  D(0, 1) = D(1, 0) = -0.5;
  return {builtin_linear_iv(1),
          builtin_linear_iv(2),
          builtin_generated_regressor(scalar_exp(0.5), 2),
          builtin_generated_regressor(scalar_logistic(), 1),
          builtin_heterocoef(2, HeterocoefTarget::mean(1)),
          builtin_heterocoef(2, HeterocoefTarget::quadratic(D)),
          builtin_neyman_scott(scalar_exp())};
}

bool has_mixed(const OrthoReport& rep) {
  for (auto& e : rep.entries) {
    int a = 0, b = 0;
    for (int x : e.alpha) a += x;
    for (int x : e.beta) b += x;
    if (a > 0 && b > 0) return true;
  }
  return false;
}

double ns_closed_form(const ScalarFunction& f, int q, double eta, double eta0, double theta) {
  double s = 0, fact = 1;
  for (int k = 0; k <= q; ++k) {
    if (k > 0) fact *= k;
    s += f.eval(eta, k) / fact * std::pow(eta0 - eta, k);
  }
  return s - theta;
}

}  // namespace

TEST_CASE("fixtures solve the truth exactly") {
  for (auto& name : fixture_names()) {
    CAPTURE(name);
    auto fx = fixture_by_name(name);
    auto r = dgp_residuals(fx.model, fx.dgp);
    CHECK(r.prob_sum <= 1e-14);
    CHECK(r.g <= 1e-14);
    CHECK(r.m <= 1e-14);
    CHECK(r.left_inverse <= 1e-12);
    for (double p : fx.dgp.probs) CHECK(p > 0);
  }
  for (auto& model : affine_builtins()) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto dgp = random_dgp(model, seed, 5);
      auto r = dgp_residuals(model, dgp);
      CHECK(r.g <= 1e-12);
      CHECK(r.m <= 1e-12);
      CHECK(r.left_inverse <= 1e-12);
    }
  }
  CHECK(fixture_by_name("scalar-affine").dgp.eta0[0] != 0.0);
  CHECK_THROWS(fixture_by_name("nope"));
}

TEST_CASE("population moment three ways") {
  Stream rng(99, {0});
  for (auto& fx : {fixture_scalar_nonlinear(), fixture_bivariate_nonlinear(), fixture_scalar_cubic()}) {
    CAPTURE(fx.name);
    int qmax = fx.model.d_eta == 1 ? 3 : 2;
    for (int q = 0; q <= qmax; ++q) {
      auto psi = assemble_psi(q, fx.model);
      for (int draw = 0; draw < 3; ++draw) {
        Vec eta = fx.dgp.eta0, lam = fx.dgp.lambda0;
        for (auto& x : eta) x += rng.uniform(-0.2, 0.2);
        for (auto& x : lam) x += rng.uniform(-0.2, 0.2);
        double brute = population_moment(psi, fx.dgp, fx.dgp.theta0, eta, lam);
        double fact = population_moment_factorized(psi, fx.dgp, fx.dgp.theta0, eta, lam);
        double jet = static_cast<double>(population_moment_jet(psi, fx.dgp, fx.dgp.theta0, eta, lam, 2).value());
        CHECK(std::abs(brute - fact) <= 1e-12 * std::max(1.0, std::abs(fact)));
        CHECK(std::abs(jet - fact) <= 1e-12 * std::max(1.0, std::abs(fact)));
        CHECK(population_moment(psi, fx.dgp, fx.dgp.theta0, eta, lam) == brute);
      }
      CHECK(std::abs(population_moment(psi, fx.dgp, fx.dgp.theta0, fx.dgp.eta0, fx.dgp.lambda0)) <= 1e-12);
    }
  }
  SUBCASE("q = 0 is the average of m") {
    auto fx = fixture_scalar_nonlinear();
    auto psi = assemble_psi(0, fx.model);
    Vec eta = Vec::Constant(1, 0.4);
    double s = 0;
    for (std::size_t i = 0; i < fx.dgp.atoms.size(); ++i)
      s += fx.dgp.probs[i] * (fx.dgp.atoms[i][2] * std::exp(0.4) - fx.dgp.theta0[0]);
    CHECK(population_moment(psi, fx.dgp, fx.dgp.theta0, eta, fx.dgp.lambda0) == doctest::Approx(s).epsilon(1e-14));
  }
  SUBCASE("cap") {
    auto fx = fixture_bivariate_nonlinear();
    auto psi = assemble_psi(4, fx.model);
    PopulationOptions opt;
    opt.cap = 1000;
    CHECK_THROWS_AS(population_moment(psi, fx.dgp, fx.dgp.theta0, fx.dgp.eta0, fx.dgp.lambda0, opt),
                    std::length_error);
  }
}

TEST_CASE("affine orthogonality on built-in models") {
  for (auto& model : affine_builtins()) {
    CAPTURE(model.name);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto dgp = random_dgp(model, seed, 5);
      for (int q = 1; q <= 5; ++q) {
        CAPTURE(q);
        auto psi = assemble_psi_affine(q, model);
        auto rep = orthogonality_check(psi, dgp);
        CHECK(rep.method == "taylor");
        CHECK(rep.passed);
        CHECK(rep.max_abs_upto_q <= 1e-7);
        CHECK(std::abs(rep.value_at_truth) <= 1e-12);
      }
    }
  }
}

TEST_CASE("affine fixtures: vanishing through q, nonvanishing at q + 1") {
  for (auto name : {"scalar-affine", "bivariate-affine", "overid-affine"}) {
    CAPTURE(name);
    auto fx = fixture_by_name(name);
    int qmax = fx.model.d_eta == 1 ? 5 : 3;
    for (int q = 1; q <= qmax; ++q) {
      CAPTURE(q);
      auto rep = orthogonality_check(assemble_psi(q, fx.model), fx.dgp);
      CHECK(rep.passed);
      CHECK(rep.max_abs_by_order[q + 1] > 1e-3);
      CHECK(rep.first_nonvanishing_order == q + 1);
      CHECK(has_mixed(rep));
    }
  }
}

TEST_CASE("nonlinear fixtures") {
  for (auto name : {"scalar-nonlinear", "scalar-cubic", "bivariate-nonlinear"}) {
    CAPTURE(name);
    auto fx = fixture_by_name(name);
    int qmax = fx.model.d_eta == 1 ? 5 : 3;
    for (int q = 1; q <= qmax; ++q) {
      CAPTURE(q);
      auto rep = orthogonality_check(assemble_psi(q, fx.model), fx.dgp);
      CHECK(rep.method == "taylor");
      CHECK(rep.passed);
      CHECK(rep.first_nonvanishing_order == q + 1);
      CHECK(has_mixed(rep));
    }
    for (int q = 2; q <= 3; ++q) {
      OrthoOptions opt;
      opt.check_order = 2;
      auto rep = orthogonality_check(assemble_psi_affine(q, fx.model), fx.dgp, opt);
      CHECK_FALSE(rep.passed);
      CHECK(rep.max_abs_by_order[2] > 1e-3);
      CHECK(rep.max_abs_by_order[1] <= 1e-7);
    }
  }
}

TEST_CASE("finite differences agree with the Taylor route") {
  for (auto name : {"scalar-nonlinear", "bivariate-nonlinear"}) {
    CAPTURE(name);
    auto fx = fixture_by_name(name);
    for (int q = 1; q <= 2; ++q) {
      OrthoOptions t, f;
      t.method = DerivativeMethod::taylor;
      f.method = DerivativeMethod::finite_difference;
      t.check_order = f.check_order = q + 1;
      auto psi = assemble_psi(q, fx.model);
      auto rt = orthogonality_check(psi, fx.dgp, t);
      auto rf = orthogonality_check(psi, fx.dgp, f);
      CHECK(rf.method == "finite-difference");
      REQUIRE(rt.entries.size() == rf.entries.size());
      for (std::size_t i = 0; i < rt.entries.size(); ++i) {
        CHECK(rt.entries[i].alpha == rf.entries[i].alpha);
        CHECK(rt.entries[i].beta == rf.entries[i].beta);
        CHECK(std::abs(rt.entries[i].value - rf.entries[i].value) <= 1e-6 * std::max(1.0, std::abs(rt.entries[i].value)));
      }
      CHECK(rf.passed);
    }
  }
  SUBCASE("non-affine Lambda map falls back to differences") {
    auto fx = fixture_overid_affine();
    ModelSpec model = fx.model;
    model.lambda_map = LambdaMap::weighted_left_inverse(2, Mat::Identity(3, 3));
    auto dgp = solve_truth(model, fx.dgp.atoms, fx.dgp.probs, fx.dgp.eta0, fx.dgp.theta0);
    OrthoOptions opt;
    opt.check_order = 1;
    auto rep = orthogonality_check(assemble_psi(1, model), dgp, opt);
    CHECK(rep.method == "finite-difference");
    CHECK(rep.passed);
  }
}

TEST_CASE("report layout") {
  auto fx = fixture_bivariate_nonlinear();
  auto rep = orthogonality_check(assemble_psi(1, fx.model), fx.dgp);
  // 6 variables: 6 first-order and 21 second-order multi-indices.
  CHECK(rep.entries.size() == 27);
  CHECK(rep.max_abs_by_order.size() == 3);
  auto j = rep.to_json();
  CHECK(j["derivatives"].size() == 27);
  CHECK(j["passed"].get<bool>() == rep.passed);
  CHECK(j["first_nonvanishing_order"].get<int>() == 2);
}

TEST_CASE("Neyman-Scott closed form") {
  Stream rng(13, {1});
  const std::vector<double> u = {-0.6, 0.1, 0.8};
  std::vector<double> p = {0.3, 0.5, 0.2};
  double mean = 0;
  for (int i = 0; i < 3; ++i) mean += p[i] * u[i];
  std::vector<double> uc;
  for (double x : u) uc.push_back(x - mean);
  for (auto f : {scalar_exp(), scalar_cube(), scalar_logistic()}) {
    CAPTURE(f.name);
    auto model = builtin_neyman_scott(f);
    auto dgp = neyman_scott_dgp(model, 0.35, uc, p);
    CHECK(dgp.eta0[0] == doctest::Approx(0.35).epsilon(1e-15));
    for (int q = 0; q <= 6; ++q) {
      CAPTURE(q);
      auto psi = assemble_psi_affine(q, model);
      auto general = assemble_psi(q, model);
      for (int k = 0; k < 20; ++k) {
        double eta = rng.uniform(-0.5, 1.2);
        double closed = ns_closed_form(f, q, eta, dgp.eta0[0], dgp.theta0[0]);
        Vec e = Vec::Constant(1, eta);
        CHECK(std::abs(population_moment(psi, dgp, dgp.theta0, e, Vec()) - closed) <= 1e-12);
        CHECK(std::abs(population_moment_factorized(general, dgp, dgp.theta0, e, Vec()) - closed) <= 1e-12);
      }
      auto rep = orthogonality_check(general, dgp);
      CHECK(rep.passed);
      double telescope = (q % 2 ? -1.0 : 1.0) * f.eval(dgp.eta0[0], q + 1);
      CHECK(rep.entries.back().value == doctest::Approx(telescope).epsilon(1e-10));
    }
  }
}

TEST_CASE("composition-sum lemma") {
  CHECK(composition_sum_oracle({0, 0}, 4) == 1);
  CHECK(composition_sum_oracle({1, 0}, 3) == 0);
  CHECK(composition_sum_oracle({}, 5) == 1);
  Stream rng(2718, {2});
  int zero_cases = 0, sign_cases = 0;
  for (int i = 0; i < 200; ++i) {
    int q = static_cast<int>(rng.below(9));
    int r = static_cast<int>(rng.below(5));
    std::vector<int> c(r);
    bool zeros = rng.uniform() < 0.3;
    for (auto& x : c) x = zeros ? 0 : static_cast<int>(rng.below(4));
    auto claim = composition_sum_claim(c, q);
    if (!claim) continue;
    CHECK(composition_sum_oracle(c, q) == *claim);
    if (*claim == 0) ++zero_cases;
    else ++sign_cases;
  }
  CHECK(zero_cases >= 20);
  CHECK(sign_cases >= 20);
}

TEST_CASE("hockey-stick lemma") {
  auto [b1, c1] = hockey_stick_oracle({0}, 3);
  CHECK(b1 == 4);
  CHECK(c1 == 4);
  auto [b2, c2] = hockey_stick_oracle({1, 2}, 2);
  CHECK(b2 == c2);
  CHECK(c2 == binomial(7, 5));
  auto [b3, c3] = hockey_stick_oracle({2, 1, 0}, 0);
  CHECK(b3 == 1);
  CHECK(c3 == 1);
  Stream rng(31415, {3});
  for (int i = 0; i < 200; ++i) {
    int n = 1 + static_cast<int>(rng.below(4));
    std::vector<int> a(n);
    for (auto& x : a) x = static_cast<int>(rng.below(4));
    int M = static_cast<int>(rng.below(13));
    auto [brute, closed] = hockey_stick_oracle(a, M);
    CHECK(brute == closed);
  }
}

TEST_CASE("lemma suite") {
  auto rep = lemma_suite(200, 9);
  CHECK(rep.passed);
  CHECK(rep.composition_zero == 100);
  CHECK(rep.composition_sign == 100);
  CHECK(rep.hockey_checked == 200);
  CHECK(lemma_suite(200, 9).to_json().dump() == rep.to_json().dump());
}


TEST_CASE("determinant transforms keep second-order orthogonality") {
  for (auto name : {"scalar-nonlinear", "bivariate-nonlinear", "bivariate-affine"}) {
    CAPTURE(name);
    auto fx = fixture_by_name(name);
    auto det = det_transform_exact(fx.model);
    auto dgp = solve_truth(det, fx.dgp.atoms, fx.dgp.probs, fx.dgp.eta0, fx.dgp.theta0);
    CHECK((dgp.eta0 - fx.dgp.eta0).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(det.d_lambda() == 1);
    auto rep = orthogonality_check(assemble_psi(2, det), dgp);
    CHECK(rep.passed);
    CHECK(rep.max_abs_by_order[3] > 1e-3);
  }
}
