// End-to-end acceptance run: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "cli.hpp"
#include "orthomom/estimation.hpp"
#include "orthomom/fixtures.hpp"
#include "orthomom/random.hpp"
#include "orthomom/simulation.hpp"
#include "tree_tables.hpp"

using namespace orthomom;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
  auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char buf[64];
  std::snprintf(buf, sizeof buf, " (%.1f s)", secs);
  std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << buf
            << std::endl;
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Outcome tree_counts() {
  const long expected[] = {1, 2, 5, 13, 40, 130};
  std::string counts;
  bool ok = true;
  for (int q = 0; q <= 5; ++q) {
    long n = static_cast<long>(enumerate_trees(q).size());
    ok &= n == expected[q];
    counts += std::to_string(n) + (q < 5 ? "," : "");
  }
  auto t0 = std::chrono::steady_clock::now();
  long n10 = static_cast<long>(enumerate_trees(10).size());
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ok &= n10 == 110135 && secs < 60;
  return {ok, "q=0..5 -> " + counts + "; q=10 -> " + std::to_string(n10) + fmt(" in %.2f s", secs)};
}

Outcome coefficient_table() {
  auto t0 = std::chrono::steady_clock::now();
  auto rows = test::table_q4();
  auto trees = enumerate_trees(4);
  int matched = 0;
  bool corr15 = false, aff12 = false;
  for (auto& row : rows) {
    auto inv = invariants(row.tree);
    auto c = coefficient(4, row.tree);
    bool found = std::find(trees.begin(), trees.end(), row.tree) != trees.end();
    if (found && inv.size == row.size && inv.d == row.d && inv.aut == row.aut && c == row.coeff) ++matched;
    if (std::string(row.name) == "corr15") corr15 = c == Rational(BigInt(-1), BigInt(8));
    if (std::string(row.name) == "aff12") aff12 = c == Rational(BigInt(1), BigInt(24));
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool ok = rows.size() == 40 && trees.size() == 40 && matched == 40 && corr15 && aff12 && secs < 1.0;
  return {ok, std::to_string(matched) + "/40 rows equal, c(corr15) = -1/8 " + (corr15 ? "yes" : "no") +
                  ", c(aff12) = 1/24 " + (aff12 ? "yes" : "no")};
}

Outcome d3_table() {
  auto rows = test::table_d3();
  auto trees = enumerate_trees(3);
  int matched = 0;
  for (auto& row : rows) {
    auto inv = invariants(row.tree);
    bool found = std::find(trees.begin(), trees.end(), row.tree) != trees.end();
    if (found && inv.size == row.size && inv.d == row.d && inv.aut == row.aut) ++matched;
  }
  return {rows.size() == 13 && trees.size() == 13 && matched == 13,
          std::to_string(matched) + "/13 trees match (|t|, d, |Aut|)"};
}

std::vector<ModelSpec> oracle_models() {
  Mat D = Mat::Zero(2, 2);
  D(0, 1) = D(1, 0) = 0.5;
  return {builtin_linear_iv(2),
          builtin_generated_regressor(scalar_exp(0.5), 2),
          builtin_generated_regressor(scalar_logistic(), 1),
          builtin_heterocoef(2, HeterocoefTarget::quadratic(D)),
          builtin_neyman_scott(scalar_exp()),
          fixture_scalar_model(0.3),
          fixture_scalar_cubic_model(),
          fixture_bivariate_model(0.4),
          fixture_overid_model(),
          det_transform_exact(fixture_bivariate_model(0.4)),
          det_transform_overid(fixture_overid_model())};
}

Outcome explicit_oracle() {
  Stream rng(4, {0xacc});
  double worst = 0;
  int checks = 0;
  for (auto& model : oracle_models()) {
    for (int q = 1; q <= 3; ++q) {
      auto psi = assemble_psi(q, model);
      ExplicitPsi ex(q, model);
      if (ex.copies_required() != psi.copies_required()) return {false, model.name + ": copy counts differ"};
      for (int draw = 0; draw < 100; ++draw) {
        std::vector<Observation> obs(psi.copies_required(), Observation(model.obs_dim));
        for (auto& o : obs)
          for (auto& x : o) x = rng.uniform(-1.0, 1.0);
        std::vector<ObsView> views(obs.begin(), obs.end());
        Vec theta = Vec::Constant(model.d_theta, rng.uniform(-1.0, 1.0));
        Vec eta(model.d_eta), lambda(model.d_lambda());
        for (auto& x : eta) x = rng.uniform(-0.8, 0.8);
        for (auto& x : lambda) x = rng.uniform(-1.0, 1.0);
        if (model.d_lambda() == 1) lambda[0] = rng.uniform(0.5, 1.5);
        double a = psi.evaluate(views, theta, eta, lambda);
        double b = ex.evaluate(views, theta, eta, lambda);
        worst = std::max(worst, std::abs(a - b) / std::max(std::abs(b), 1e-300));
        ++checks;
      }
    }
  }
  return {worst <= 1e-12, std::to_string(oracle_models().size()) + " models x q=1..3 x 100 draws, max rel error " +
                              fmt("%.2e", worst)};
}

Outcome ortho_affine() {
  bool ok = true;
  double worst_low = 0, min_next = 1e300;
  for (auto name : {"scalar-affine", "bivariate-affine"}) {
    auto fx = fixture_by_name(name);
    int qmax = fx.model.d_eta == 1 ? 5 : 3;
    for (int q = 1; q <= qmax; ++q) {
      auto rep = orthogonality_check(assemble_psi(q, fx.model), fx.dgp);
      ok &= rep.passed && rep.max_abs_by_order[q + 1] > 1e-3;
      worst_low = std::max(worst_low, rep.max_abs_upto_q);
      min_next = std::min(min_next, rep.max_abs_by_order[q + 1]);
    }
  }
  return {ok, "scalar q<=5, bivariate q<=3: max through q " + fmt("%.2e", worst_low) + ", min at q+1 " +
                  fmt("%.2e", min_next)};
}

Outcome ortho_nonlinear() {
  bool ok = true;
  double worst_low = 0, min_aff = 1e300;
  for (auto name : {"scalar-nonlinear", "scalar-cubic", "bivariate-nonlinear"}) {
    auto fx = fixture_by_name(name);
    for (int q = 1; q <= 3; ++q) {
      auto rep = orthogonality_check(assemble_psi(q, fx.model), fx.dgp);
      ok &= rep.passed && rep.max_abs_by_order[q + 1] > 1e-3;
      worst_low = std::max(worst_low, rep.max_abs_upto_q);
    }
    for (int q = 2; q <= 3; ++q) {
      OrthoOptions opt;
      opt.check_order = 2;
      auto rep = orthogonality_check(assemble_psi_affine(q, fx.model), fx.dgp, opt);
      ok &= !rep.passed && rep.max_abs_by_order[2] > 1e-3;
      min_aff = std::min(min_aff, rep.max_abs_by_order[2]);
    }
  }
  return {ok, "full psi max through q " + fmt("%.2e", worst_low) + "; affine-only psi order-2 min " +
                  fmt("%.2e", min_aff) + " (fails as required)"};
}

Outcome neyman_scott() {
  Stream rng(13, {0xacc});
  const std::vector<double> u = {-0.6, 0.1, 0.8};
  const std::vector<double> p = {0.3, 0.5, 0.2};
  double mean = 0;
  for (int i = 0; i < 3; ++i) mean += p[i] * u[i];
  std::vector<double> uc;
  for (double x : u) uc.push_back(x - mean);
  double worst = 0;
  for (auto f : {scalar_exp(), scalar_cube(), scalar_logistic()}) {
    auto model = builtin_neyman_scott(f);
    auto dgp = neyman_scott_dgp(model, 0.35, uc, p);
    for (int q = 0; q <= 6; ++q) {
      auto affine = assemble_psi_affine(q, model);
      auto general = assemble_psi(q, model);
      for (int k = 0; k < 20; ++k) {
        double eta = rng.uniform(-0.5, 1.2);
        double closed = 0, fact = 1;
        for (int r = 0; r <= q; ++r) {
          if (r > 0) fact *= r;
          closed += f.eval(eta, r) / fact * std::pow(dgp.eta0[0] - eta, r);
        }
        closed -= dgp.theta0[0];
        Vec e = Vec::Constant(1, eta);
        worst = std::max(worst, std::abs(population_moment(affine, dgp, dgp.theta0, e, Vec()) - closed));
        worst = std::max(worst, std::abs(population_moment_factorized(general, dgp, dgp.theta0, e, Vec()) - closed));
      }
    }
  }
  return {worst <= 1e-12, "exp, cube, logistic; q<=6; 20 points each; max error " + fmt("%.2e", worst)};
}

Outcome determinant() {
  bool ok = true;
  double worst = 0, worst_ortho = 0;
  for (auto name : {"bivariate-nonlinear", "overid-affine"}) {
    auto fx = fixture_by_name(name);
    bool overid = fx.model.d_g > fx.model.d_eta;
    auto det = overid ? det_transform_overid(fx.model) : det_transform_exact(fx.model);
    Mat J0 = expected_jacobian(fx.model, fx.dgp, fx.dgp.theta0, fx.dgp.eta0);
    double scale = overid ? (J0.transpose() * J0).determinant() : J0.determinant();
    Mat Jt = expected_jacobian(det, fx.dgp, fx.dgp.theta0, fx.dgp.eta0);
    int d = fx.model.d_eta;
    worst = std::max(worst, expected_g(det, fx.dgp, fx.dgp.theta0, fx.dgp.eta0, 0).max_abs());
    worst = std::max(worst, (Jt - scale * Mat::Identity(d, d)).cwiseAbs().maxCoeff());
    auto dgp = solve_truth(det, fx.dgp.atoms, fx.dgp.probs, fx.dgp.eta0, fx.dgp.theta0);
    OrthoOptions opt;
    opt.check_order = 2;
    auto rep = orthogonality_check(assemble_psi(2, det), dgp, opt);
    ok &= rep.passed && det.d_lambda() == 1;
    worst_ortho = std::max(worst_ortho, rep.max_abs_upto_q);
  }
  ok &= worst <= 1e-12;
  return {ok, "exact and overidentified: moment/Jacobian error " + fmt("%.2e", worst) +
                  ", q=2 derivatives with scalar lambda " + fmt("%.2e", worst_ortho)};
}

Outcome lemmas() {
  auto rep = lemma_suite(200, 2718);
  return {rep.passed && rep.composition_zero + rep.composition_sign == 200 && rep.hockey_checked == 200,
          "composition sum " + std::to_string(rep.composition_zero) + " zero + " +
              std::to_string(rep.composition_sign) + " sign cases, hockey stick " +
              std::to_string(rep.hockey_checked) + " cases, failures " +
              std::to_string(rep.composition_failures + rep.hockey_failures)};
}

Outcome replication() {
  SimConfig cfg;
  cfg.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  auto res = run_study(cfg);
  auto summary = summarize_study(cfg, res);
  auto bias = [&](const std::string& est, bool reg, int T) {
    for (auto& c : summary["cells"])
      if (c["estimator"] == est && c["regularized"] == reg && c["T"] == T && c["target"] == "theta2")
        return c["bias"].get<double>();
    throw std::runtime_error("missing summary cell");
  };
  bool a = std::abs(res.truth.theta1 + 0.0844) <= 0.003 && std::abs(res.truth.theta2 - 0.0177) <= 0.002;
  bool b = true, c = true;
  std::string cdetail;
  for (int T : cfg.T_grid) {
    b &= std::abs(bias("orth2", true, T)) < std::abs(bias("ols", true, T));
    bool below = std::abs(bias("orth2", false, T)) < std::abs(bias("ols", false, T));
    if (T >= 60) c &= below;
    cdetail += (below ? "<" : ">");
  }
  std::string detail = fmt("(a) theta1 %.4f theta2 %.4f", res.truth.theta1, res.truth.theta2) +
                       (a ? " ok" : " out of band") + "; (b) " + (b ? "ok" : "violated") +
                       "; (c) unregularized ORTH vs OLS by T=20..100: " + cdetail + (c ? " ok" : " violated");
  return {a && b && c, detail};
}

std::string run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return std::to_string(code) + "\n" + out.str() + err.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  fs::path dir = fs::temp_directory_path() / "orthomom_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    SimConfig sc;
    sc.N = 40;
    auto panel = generate_panel(sc, 0, 8);
    std::ofstream csv(dir / "panel.csv");
    csv << "unit,t,y,x1,x2,x3\n";
    for (std::size_t i = 0; i < panel.units.size(); ++i)
      for (std::size_t t = 0; t < panel.units[i].obs.size(); ++t) {
        auto& w = panel.units[i].obs[t];
        csv << "u" << i << ',' << t << ',' << w[0] << ',' << w[1] << ',' << w[2] << ',' << w[3] << '\n';
      }
    std::ofstream(dir / "copies.json")
        << R"({"copies": [[0.3, 1.0, 0.5], [0.1, 0.7, 0.2], [0.9, 0.4, 0.8], [0.2, 0.6, 0.1]],)"
        << R"( "theta": [0.2], "eta": [0.1, -0.3], "lambda": [0.5, 0.1, -0.2, 0.7]})";
  }
  std::string panel = (dir / "panel.csv").string(), copies = (dir / "copies.json").string();
  std::vector<std::vector<std::string>> commands = {
      {"trees", "enumerate", "--q", "6"},
      {"trees", "coeffs", "--q", "4", "--affine"},
      {"psi", "show", "--q", "3", "--model", "heterocoef"},
      {"psi", "eval", "--q", "2", "--model", "generated-regressor", "--input", copies},
      {"verify", "ortho", "--dgp", "bivariate-nonlinear", "--q", "2"},
      {"verify", "ortho", "--model", "neyman-scott", "--function", "logistic", "--dgp", "random", "--q", "3",
       "--seed", "4"},
      {"verify", "lemmas", "--cases", "50", "--seed", "3"},
      {"estimate", "--model", "heterocoef", "--dim", "3", "--q", "2", "--input", panel, "--ustat", "subsample",
       "--max-tuples", "30", "--seed", "9", "--cross-fit"},
      {"estimate", "--model", "heterocoef", "--target", "second-moment", "--component", "1", "--q", "2", "--input",
       panel, "--split", "leave-out", "--regularize"},
  };
  int checked = 0;
  for (auto& cmd : commands) {
    std::string a = run(cmd), b = run(cmd);
    if (a != b || a[0] == '2') return {false, "differs or errors: " + cmd[0] + " " + cmd[1]};
    ++checked;
  }
  std::string outputs[3];
  int threads[3] = {1, 1, 4};
  for (int k = 0; k < 3; ++k) {
    fs::path out = dir / ("study" + std::to_string(k));
    std::string text = run({"simulate", "klinerose", "--N", "150", "--T-grid", "8,20", "--reps", "6",
                            "--truth-units", "20000", "--seed", "11", "--threads", std::to_string(threads[k]),
                            "--out", out.string()});
    outputs[k] = text + slurp(out / "results.csv") + slurp(out / "summary.json");
    std::string ns = run({"simulate", "neyman-scott", "--q", "3", "--N", "40", "--reps", "12", "--T", "8",
                          "--threads", std::to_string(threads[k])});
    outputs[k] += ns;
  }
  ++checked;
  ++checked;
  bool ok = outputs[0] == outputs[1] && outputs[0] == outputs[2];
  fs::remove_all(dir);
  return {ok, std::to_string(checked) + " commands byte-identical across two runs" +
                  (ok ? ", simulations also across 1 and 4 workers" : "; simulation outputs differ")};
}

}  // namespace

int main() {
  report(1, "tree counts", tree_counts);
  report(2, "q=4 coefficient tables", coefficient_table);
  report(3, "trees with d <= 3", d3_table);
  report(4, "explicit psi oracle", explicit_oracle);
  report(5, "orthogonality, affine fixtures", ortho_affine);
  report(6, "orthogonality, nonlinear fixtures", ortho_nonlinear);
  report(7, "Neyman-Scott closed form", neyman_scott);
  report(8, "determinant constructions", determinant);
  report(9, "combinatorial lemmas", lemmas);
  report(10, "callback study replication", replication);
  report(11, "CLI determinism", determinism);
  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criteria failed" : "acceptance: all passed")
            << std::endl;
  return failures ? 1 : 0;
}
