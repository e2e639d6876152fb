#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "orthomom/random.hpp"
#include "orthomom/simulation.hpp"

using namespace orthomom;

namespace {

std::string csv(const std::vector<StudyRow>& rows) {
  std::ostringstream out;
  write_results_csv(out, rows);
  return out.str();
}

Panel small_panel(std::uint64_t seed, int N, int T) {
  SimConfig cfg;
  cfg.seed = seed;
  cfg.N = N;
  return generate_panel(cfg, 0, T);
}

}  // namespace

TEST_CASE("callback design") {
  for (int type : {1, 2}) {
    auto p = cell_probs(type);
    CHECK(p[0] + p[1] + p[2] + p[3] == 1.0);
  }
  auto a = cell_probs(1), b = cell_probs(2);
  for (int c = 0; c < 4; ++c) CHECK(0.5 * (a[c] + b[c]) == 0.25);
  CHECK_THROWS(cell_probs(3));

  long double beta = 0, type2 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    Firm f = draw_firm(3, 0, i);
    beta += f.beta[1];
    type2 += f.type == 2;
  }
  CHECK(std::abs(static_cast<double>(beta / n) - 1.5) < 0.02);
  CHECK(std::abs(static_cast<double>(type2 / n) - 0.5) < 0.01);

  SUBCASE("longer panels extend the same sequence") {
    Firm f = draw_firm(5, 2, 9);
    auto s = draw_applications(f, 5, 2, 9, 10);
    auto l = draw_applications(f, 5, 2, 9, 30);
    for (int t = 0; t < 10; ++t) CHECK(s[t] == l[t]);
    for (auto& w : l) {
      CHECK(w[1] == 1.0);
      CHECK((w[0] == 0.0 || w[0] == 1.0));
    }
  }
  SUBCASE("pinned draws") {
    Firm f = draw_firm(20240611, 0, 0);
    auto obs = draw_applications(f, 20240611, 0, 0, 4);
    std::ostringstream out;
    out.precision(17);
    out << f.type << ' ' << f.beta[0] << ' ' << f.beta[1] << ' ' << f.beta[2];
    for (auto& w : obs) out << ' ' << w[0] << w[2] << w[3];
    CHECK(out.str() == "2 2.6494239885836581 2.2751169270064304 2.4940574826122459 001 001 010 010");
  }
}

TEST_CASE("firm truth is the population projection") {
  for (int i = 0; i < 20; ++i) {
    Firm f = draw_firm(11, 0, i);
    auto p = cell_probs(f.type);
    Vec eta = firm_truth(f);
    // Normal equations E[x (P(Y=1|x) - x'eta)] = 0.
    Vec r = Vec::Zero(3);
    for (int c = 0; c < 4; ++c) {
      Vec x(3);
      x << 1.0, c / 2, c % 2;
      double py = 1.0 / (1.0 + std::exp(f.beta[0] + f.beta[1] * x[1] + f.beta[2] * x[2]));
      r += p[c] * x * (py - x.dot(eta));
    }
    CHECK(r.cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("population truth from a smaller draw") {
  auto t = population_truth(20240611, 200000);
  CHECK(std::abs(t.theta1 - (-0.0844)) < 0.003);
  CHECK(std::abs(t.theta2 - 0.0177) < 0.002);
  CHECK(t.sd == doctest::Approx(std::sqrt(t.theta2 - t.theta1 * t.theta1)));
  auto t3 = population_truth(20240611, 200000, 3);
  CHECK(t3.theta1 == t.theta1);
  CHECK(t3.theta2 == t.theta2);
}

TEST_CASE("type counts") {
  auto panel = small_panel(2, 5, 9);
  for (auto& u : panel.units) {
    auto c = count_types(u.obs);
    int n = 0;
    long pairs = 0;
    for (int a = 0; a < 8; ++a) {
      n += c.n[a];
      for (int b = 0; b < 8; ++b) pairs += c.pairs[a][b];
    }
    CHECK(n == 9);
    CHECK(pairs == 36);
  }
}

TEST_CASE("closed-form unit estimators match the direct loop and the generic engine") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    for (int T : {4, 6, 10}) {
      CAPTURE(seed);
      CAPTURE(T);
      auto panel = small_panel(seed, 25, T);
      auto eb = regularize_lambda(panel);
      auto m1 = builtin_heterocoef(3, HeterocoefTarget::mean(1));
      auto m2 = builtin_heterocoef(3, HeterocoefTarget::second_moment(1));
      for (bool reg : {false, true}) {
        CAPTURE(reg);
        OrthOptions opt;
        opt.ustat.mode = UStatMode::combinations;
        if (reg) opt.nuisance.jacobian_override = eb.as_override();
        auto g1 = orth_estimate(panel, m1, 2, SplitPlan::leave_out(T), opt);
        auto g2 = orth_estimate(panel, m2, 2, SplitPlan::leave_out(T), opt);
        auto p1 = orth_estimate(panel, m1, 0, SplitPlan::leave_out(T), opt);
        auto p2 = orth_estimate(panel, m2, 0, SplitPlan::leave_out(T), opt);
        for (std::size_t i = 0; i < panel.units.size(); ++i) {
          const auto& obs = panel.units[i].obs;
          auto c = count_types(obs);
          const DirichletEB* p = reg ? &eb : nullptr;
          auto fast = orth2_unit(c, p);
          auto direct = orth2_unit_direct(obs, p);
          auto ols = ols_unit(c, p);
          REQUIRE(fast.ok == direct.ok);
          REQUIRE(fast.ok == !g1.excluded[i]);
          REQUIRE(ols.ok == !p1.excluded[i]);
          if (fast.ok) {
            CHECK(fast.theta1 == doctest::Approx(direct.theta1).epsilon(1e-12));
            CHECK(fast.theta2 == doctest::Approx(direct.theta2).epsilon(1e-12));
            CHECK(fast.theta1 == doctest::Approx(g1.unit_values[i]).epsilon(1e-12));
            CHECK(fast.theta2 == doctest::Approx(g2.unit_values[i]).epsilon(1e-12));
          }
          if (ols.ok) {
            CHECK(ols.theta1 == doctest::Approx(p1.unit_values[i]).epsilon(1e-12));
            CHECK(ols.theta2 == doctest::Approx(p2.unit_values[i]).epsilon(1e-12));
          }
        }
      }
    }
  }
}

TEST_CASE("study output") {
  SimConfig cfg;
  cfg.N = 60;
  cfg.reps = 3;
  cfg.T_grid = {6, 12, 24};
  cfg.truth_units = 5000;
  auto a = run_study(cfg);
  cfg.threads = 3;
  auto b = run_study(cfg);
  CHECK(csv(a.rows) == csv(b.rows));
  CHECK(summarize_study(cfg, a).dump() == summarize_study(cfg, b).dump());
  CHECK(a.rows.size() == 3 * 3 * 4 * 2);

  SUBCASE("exclusions do not grow with T") {
    for (int rep = 0; rep < 3; ++rep)
      for (auto est : {"ols", "orth2"})
        for (bool reg : {false, true}) {
          int prev = cfg.N + 1;
          for (auto& r : a.rows)
            if (r.rep == rep && r.estimator == est && r.regularized == reg && r.target == "theta1") {
              CHECK(r.n_excluded <= prev);
              prev = r.n_excluded;
              if (reg) CHECK(r.n_excluded == 0);
            }
        }
  }
  SUBCASE("summary layout") {
    auto j = summarize_study(cfg, a);
    int regularized = 0;
    for (auto& c : j["cells"]) regularized += c["regularized"].get<bool>();
    CHECK(regularized == 2 * 3 * 2);
    CHECK(j["cells"].size() <= 4 * 3 * 2);
    CHECK(j["mean_alpha_by_T"].size() == 3);
    CHECK(j.contains("population_truth"));
  }
  SUBCASE("configuration errors") {
    SimConfig bad = cfg;
    bad.ols = bad.orth2 = false;
    CHECK_THROWS(run_study(bad));
    bad = cfg;
    bad.T_grid = {};
    CHECK_THROWS(run_study(bad));
  }
}

TEST_CASE("OLS bias in the second moment falls with T") {
  SimConfig cfg;
  cfg.N = 300;
  cfg.reps = 5;
  cfg.T_grid = {20, 100};
  cfg.orth2 = false;
  cfg.unregularized = false;
  cfg.truth_units = 0;
  auto res = run_study(cfg);
  double bias[2] = {0, 0};
  for (auto& r : res.rows)
    if (r.target == "theta2") bias[r.T == 100] += (r.estimate - r.truth_subset) / cfg.reps;
  CHECK(bias[0] > 0);
  CHECK(bias[1] < bias[0]);
}

TEST_CASE("unregularized OLS is close to unbiased for the mean at large T") {
  SimConfig cfg;
  cfg.N = 300;
  cfg.reps = 5;
  cfg.T_grid = {200};
  cfg.orth2 = false;
  cfg.regularized = false;
  cfg.truth_units = 0;
  double bias = 0;
  for (auto& r : run_study(cfg).rows)
    if (r.target == "theta1") bias += (r.estimate - r.truth_subset) / cfg.reps;
  CHECK(std::abs(bias) < 0.005);
}

TEST_CASE("quantiles") {
  CHECK(quantile({3, 1, 2, 4}, 0.5) == 2.5);
  CHECK(quantile({1, 2, 3, 4, 5}, 0.05) == doctest::Approx(1.2));
  CHECK(quantile({1, 2, 3, 4, 5}, 1.0) == 5);
  CHECK(quantile({7}, 0.3) == 7);
}

TEST_CASE("Neyman-Scott estimators") {
  SUBCASE("identity target reproduces the evaluation mean") {
    std::vector<double> y = {0.3, 1.7, -0.4, 2.2};
    for (int q = 1; q <= 4; ++q)
      CHECK(ns_unit_estimate(scalar_identity(), q, 9.0, y) == doctest::Approx(0.95).epsilon(1e-14));
    CHECK(ns_unit_estimate(scalar_identity(), 0, 9.0, y) == 9.0);
  }
  SUBCASE("exact moments on a two-point distribution") {
    // Y = eta0 + U with U in {-1, 2} at probabilities {2/3, 1/3}; T = 4 split in halves.
    const double eta0 = 0.4, var = 2.0;
    double e1 = 0, e2 = 0, e2q1 = 0;
    for (int mask = 0; mask < 16; ++mask) {
      double y[4], p = 1;
      for (int t = 0; t < 4; ++t) {
        bool hi = mask >> t & 1;
        y[t] = eta0 + (hi ? 2.0 : -1.0);
        p *= hi ? 1.0 / 3 : 2.0 / 3;
      }
      double eta_hat = 0.5 * (y[0] + y[1]);
      std::span<const double> eval(y + 2, 2);
      e1 += p * ns_unit_estimate(scalar_identity(), 1, eta_hat, eval);
      e2 += p * ns_unit_estimate(scalar_square(), 2, eta_hat, eval);
      e2q1 += p * ns_unit_estimate(scalar_square(), 1, eta_hat, eval);
    }
    CHECK(e1 == doctest::Approx(eta0).epsilon(1e-14));
    CHECK(e2 == doctest::Approx(eta0 * eta0).epsilon(1e-14));
    CHECK(e2q1 == doctest::Approx(eta0 * eta0 - var / 2).epsilon(1e-14));
  }
  SUBCASE("formula matches the generic engine") {
    Panel panel;
    Stream rng(17, {1});
    for (int i = 0; i < 6; ++i) {
      Unit u;
      for (int t = 0; t < 8; ++t) u.obs.push_back({0.3 * i + rng.normal()});
      panel.units.push_back(u);
    }
    for (auto name : {"exp", "logistic", "cube"}) {
      auto f = scalar_function(name);
      auto model = builtin_neyman_scott(f);
      for (int q = 0; q <= 4; ++q) {
        CAPTURE(name);
        CAPTURE(q);
        OrthOptions opt;
        opt.ustat.mode = UStatMode::exhaustive;
        auto res = orth_estimate(panel, model, q, SplitPlan::halves(8, true), opt);
        for (int i = 0; i < 6; ++i) {
          std::vector<double> y;
          for (auto& w : panel.units[i].obs) y.push_back(w[0]);
          std::span<const double> a(y.data(), 4), b(y.data() + 4, 4);
          auto mean = [](std::span<const double> v) { return (v[0] + v[1] + v[2] + v[3]) / 4; };
          double expect = 0.5 * (ns_unit_estimate(f, q, mean(a), b) + ns_unit_estimate(f, q, mean(b), a));
          CHECK(res.unit_values[i] == doctest::Approx(expect).epsilon(1e-11));
        }
      }
    }
  }
  SUBCASE("demo is deterministic and reduces bias") {
    NsConfig cfg;
    cfg.N = 100;
    cfg.reps = 40;
    cfg.T = 20;
    cfg.q_max = 3;
    auto a = neyman_scott_demo(cfg);
    cfg.threads = 3;
    auto b = neyman_scott_demo(cfg);
    std::ostringstream sa, sb;
    write_ns_csv(sa, a);
    write_ns_csv(sb, b);
    CHECK(sa.str() == sb.str());
    REQUIRE(a.size() == 5);
    CHECK(a[0].estimator == "plug-in");
    for (int k = 2; k <= 4; ++k) CHECK(std::abs(a[k].bias) < std::abs(a[k - 1].bias));
    CHECK(std::abs(a[4].bias) < std::abs(a[0].bias));
    cfg.T = 5;
    CHECK_THROWS(neyman_scott_demo(cfg));
  }
}
