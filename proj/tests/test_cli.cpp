#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"

using namespace orthomom;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

int lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("trees") {
  auto r = run({"trees", "enumerate", "--q", "3"});
  CHECK(r.code == 0);
  CHECK(lines(r.out) == 14);
  CHECK(r.out.rfind("canonical_encoding,size,d,aut,coeff_num,coeff_den\n(),0,0,1,1,1\n", 0) == 0);
  CHECK(lines(run({"trees", "coeffs", "--q", "4", "--affine"}).out) == 13);
  CHECK(run({"trees", "enumerate", "--q", "11"}).code == 2);
  CHECK(run({"trees"}).code == 2);
}

TEST_CASE("psi") {
  auto r = run({"psi", "show", "--q", "2", "--model", "neyman-scott"});
  CHECK(r.code == 0);
  CHECK(r.out.find("((())),1,1,1,2\n") != std::string::npos);
  CHECK(run({"psi", "show", "--q", "2", "--model", "probit"}).code == 2);
  auto dir = std::filesystem::temp_directory_path();
  auto file = (dir / "orthomom_test_copies.csv").string();
  std::ofstream(file) << "y\n1.5\n0.5\n";
  auto e = run({"psi", "eval", "--q", "1", "--model", "neyman-scott", "--function", "identity", "--input", file,
                "--theta", "0.25", "--eta", "0.75"});
  REQUIRE(e.code == 0);
  // m(eta) - theta - (y - eta) with the leaf on the first copy.
  CHECK(nlohmann::json::parse(e.out)["value"].get<double>() == doctest::Approx(0.75 - 0.25 + (1.5 - 0.75)));
  CHECK(run({"psi", "eval", "--q", "1", "--model", "neyman-scott", "--input", file}).code == 2);
  std::filesystem::remove(file);
}

TEST_CASE("verify") {
  auto ok = run({"verify", "ortho", "--dgp", "scalar-cubic", "--q", "2"});
  CHECK(ok.code == 0);
  auto j = nlohmann::json::parse(ok.out);
  CHECK(j["passed"] == true);
  CHECK(j["q"] == 2);
  CHECK(run({"verify", "ortho", "--dgp", "scalar-cubic", "--q", "2", "--affine"}).code == 1);
  CHECK(run({"verify", "ortho", "--dgp", "random", "--q", "2"}).code == 2);
  CHECK(run({"verify", "ortho", "--model", "heterocoef", "--dgp", "scalar-cubic", "--q", "2"}).code == 2);
  CHECK(run({"verify", "ortho", "--model", "linear-iv", "--dim", "1", "--dgp", "random", "--atoms", "6", "--q", "2"})
            .code == 0);
  auto l = run({"verify", "lemmas", "--cases", "20"});
  CHECK(l.code == 0);
  CHECK(nlohmann::json::parse(l.out)["hockey_stick"]["checked"] == 20);
}

TEST_CASE("estimate") {
  auto dir = std::filesystem::temp_directory_path();
  auto file = (dir / "orthomom_test_panel.csv").string();
  {
    std::ofstream f(file);
    f << "unit,t,y\n";
    const double y[2][4] = {{1.0, 2.0, 0.0, 3.0}, {0.5, 0.5, 1.5, 1.5}};
    for (int i = 0; i < 2; ++i)
      for (int t = 3; t >= 0; --t) f << (i ? "b" : "a") << ',' << t << ',' << y[i][t] << '\n';
  }
  auto r = run({"estimate", "--model", "neyman-scott", "--function", "identity", "--q", "1", "--input", file,
                "--cross-fit"});
  REQUIRE(r.code == 0);
  auto j = nlohmann::json::parse(r.out);
  CHECK(j["theta"][0].get<double>() == doctest::Approx((1.5 + 1.0) / 2));
  CHECK(j["units"][0]["unit"] == "a");
  CHECK(j["n_excluded"] == 0);
  CHECK(run({"estimate", "--model", "heterocoef", "--q", "1", "--input", file}).code == 2);
  CHECK(run({"estimate", "--model", "neyman-scott", "--q", "1", "--input", file, "--regularize"}).code == 2);
  std::ofstream(file) << "unit,y\n";
  CHECK(run({"estimate", "--model", "neyman-scott", "--q", "1", "--input", file}).code == 2);
  std::filesystem::remove(file);
}

TEST_CASE("simulate") {
  auto dir = std::filesystem::temp_directory_path() / "orthomom_test_sim";
  std::filesystem::remove_all(dir);
  auto r = run({"simulate", "klinerose", "--N", "20", "--T-grid", "6", "--reps", "2", "--truth-units", "100",
                "--estimators", "ols", "--regularization", "none", "--out", dir.string()});
  REQUIRE(r.code == 0);
  std::ifstream in(dir / "results.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "rep,estimator,regularized,T,target,estimate,truth_subset,n_excluded");
  CHECK(std::filesystem::exists(dir / "summary.json"));
  CHECK(run({"simulate", "klinerose", "--N", "0", "--out", dir.string()}).code == 2);
  CHECK(run({"simulate", "klinerose", "--T-grid", "3", "--out", dir.string()}).code == 2);
  std::filesystem::remove_all(dir);
  auto ns = run({"simulate", "neyman-scott", "--q", "2", "--N", "10", "--reps", "3", "--T", "6"});
  CHECK(ns.code == 0);
  CHECK(lines(ns.out) == 5);
}
