#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "orthomom/estimation.hpp"
#include "orthomom/fixtures.hpp"
#include "orthomom/simulation.hpp"
#include "orthomom/verification.hpp"

namespace orthomom {
namespace {

using nlohmann::json;

struct ModelArgs {
  std::string name = "heterocoef";
  int dim = 2;
  std::string function = "exp";
  std::string target = "mean";
  int component = 0;

  void add_to(CLI::App* cmd, bool with_name = true) {
    if (with_name)
      cmd->add_option("--model", name, "linear-iv | generated-regressor | heterocoef | neyman-scott")
          ->capture_default_str();
    cmd->add_option("--dim", dim, "model dimension (k or d_eta)")->capture_default_str();
    cmd->add_option("--function", function, "identity | square | cube | exp | logistic")->capture_default_str();
    cmd->add_option("--target", target, "heterocoef target: mean | second-moment")->capture_default_str();
    cmd->add_option("--component", component, "heterocoef coefficient index")->capture_default_str();
  }
  ModelSpec build() const { return builtin_model(name, {dim, function, target, component}); }
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) v.push_back(std::stod(item));
  return v;
}

Vec to_vec(const std::vector<double>& v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  for (std::string c; std::getline(ss, c, ',');) {
    c.erase(0, c.find_first_not_of(" \t\r"));
    c.erase(c.find_last_not_of(" \t\r") + 1);
    cells.push_back(c);
  }
  return cells;
}

bool numeric(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return *end == '\0';
}

std::string csv_rational(const Rational& r) {
  return r.numerator().str() + "," + r.denominator().str();
}

// trees -------------------------------------------------------------------

void add_trees(CLI::App& app, std::ostream& out, int& code) {
  struct Opts {
    int q = 0;
    int cap = kDefaultEnumerationCap;
    bool affine = false;
  };
  auto o = std::make_shared<Opts>();
  auto* trees = app.add_subcommand("trees", "rooted-tree enumeration and coefficients");
  trees->require_subcommand(1);
  auto emit = [&out, &code, o](bool affine_only) {
    auto list = enumerate_trees(o->q, o->cap);
    out << "canonical_encoding,size,d,aut,coeff_num,coeff_den\n";
    for (auto& t : list) {
      if (affine_only && !is_affine_tree(t)) continue;
      auto inv = invariants(t);
      out << t.encoding() << ',' << inv.size << ',' << inv.d << ',' << inv.aut << ','
          << csv_rational(coefficient(o->q, t)) << '\n';
    }
    code = 0;
  };
  auto* en = trees->add_subcommand("enumerate", "all trees with d <= q");
  en->add_option("--q", o->q, "order")->required();
  en->add_option("--cap", o->cap, "largest q allowed")->capture_default_str();
  en->callback([emit, o] { emit(false); });
  auto* co = trees->add_subcommand("coeffs", "coefficient table c_{q,t}");
  co->add_option("--q", o->q, "order")->required();
  co->add_option("--cap", o->cap, "largest q allowed")->capture_default_str();
  co->add_flag("--affine", o->affine, "affine trees only");
  co->callback([emit, o] { emit(o->affine); });
}

// psi ---------------------------------------------------------------------

void add_psi(CLI::App& app, std::ostream& out, int& code) {
  struct Opts {
    ModelArgs margs;
    int q = 1;
    bool affine = false;
    std::string input, theta, eta;
    std::string lambda;
  };
  auto o = std::make_shared<Opts>();
  auto* psi = app.add_subcommand("psi", "assembled moment functions");
  psi->require_subcommand(1);

  auto* show = psi->add_subcommand("show", "term list as CSV");
  o->margs.add_to(show);
  show->add_option("--q", o->q, "order")->required();
  show->add_flag("--affine", o->affine, "affine tree set only");
  show->callback([&out, &code, o] {
    auto model = o->margs.build();
    auto m = o->affine ? assemble_psi_affine(o->q, model) : assemble_psi(o->q, model);
    out << "tree,coeff_num,coeff_den,weight,copies\n";
    char buf[64];
    for (auto& t : m.terms()) {
      std::snprintf(buf, sizeof buf, "%.17g", t.weight);
      out << t.tree.encoding() << ',' << csv_rational(t.coeff) << ',' << buf << ','
          << copies_for_tree(t.tree, model) << '\n';
    }
    code = 0;
  });

  auto* ev = psi->add_subcommand("eval", "evaluate psi on one tuple of observations");
  o->margs.add_to(ev);
  ev->add_option("--q", o->q, "order")->required();
  ev->add_flag("--affine", o->affine, "affine tree set only");
  ev->add_option("--input", o->input, "JSON {copies, theta, eta, lambda} or CSV with one copy per row")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--theta", o->theta, "comma-separated theta (CSV input)");
  ev->add_option("--eta", o->eta, "comma-separated eta (CSV input)");
  ev->add_option("--lambda", o->lambda, "comma-separated lambda (CSV input)");
  ev->callback([&out, &code, o] {
    auto model = o->margs.build();
    auto m = o->affine ? assemble_psi_affine(o->q, model) : assemble_psi(o->q, model);
    std::vector<Observation> rows;
    std::vector<double> th = parse_list(o->theta), et = parse_list(o->eta), la = parse_list(o->lambda);
    if (o->input.size() > 5 && o->input.substr(o->input.size() - 5) == ".json") {
      auto j = json::parse(read_file(o->input));
      rows = j.at("copies").get<std::vector<Observation>>();
      if (j.contains("theta")) th = j["theta"].get<std::vector<double>>();
      if (j.contains("eta")) et = j["eta"].get<std::vector<double>>();
      if (j.contains("lambda")) la = j["lambda"].get<std::vector<double>>();
    } else {
      std::stringstream ss(read_file(o->input));
      for (std::string line; std::getline(ss, line);) {
        auto cells = split_csv_line(line);
        if (cells.empty() || !numeric(cells[0])) continue;
        Observation w;
        for (auto& c : cells) w.push_back(std::stod(c));
        rows.push_back(w);
      }
    }
    if (static_cast<int>(th.size()) != model.d_theta || static_cast<int>(et.size()) != model.d_eta ||
        static_cast<int>(la.size()) != model.d_lambda())
      throw std::invalid_argument("theta, eta and lambda must have lengths " + std::to_string(model.d_theta) + ", " +
                                  std::to_string(model.d_eta) + ", " + std::to_string(model.d_lambda()));
    if (static_cast<int>(rows.size()) < m.copies_required())
      throw std::invalid_argument("psi needs " + std::to_string(m.copies_required()) + " copies");
    std::vector<ObsView> copies(rows.begin(), rows.end());
    Vec vt = to_vec(th), ve = to_vec(et), vl = to_vec(la);
    auto values = m.term_values(copies, vt, ve, vl);
    json j;
    j["model"] = model.name;
    j["q"] = o->q;
    j["copies_required"] = m.copies_required();
    j["value"] = m.evaluate(copies, vt, ve, vl);
    auto& terms = j["terms"] = json::array();
    for (std::size_t k = 0; k < values.size(); ++k)
      terms.push_back({{"tree", m.terms()[k].tree.encoding()}, {"value", values[k]}});
    j["warnings"] = m.warnings();
    out << j.dump(2) << '\n';
    code = 0;
  });
}

// verify ------------------------------------------------------------------

DiscreteDGP dgp_from_json(const ModelSpec& model, const json& j) {
  auto atoms = j.at("atoms").get<std::vector<Observation>>();
  auto probs = j.at("probs").get<std::vector<double>>();
  Vec eta = j.contains("eta0") ? to_vec(j["eta0"].get<std::vector<double>>()) : Vec::Zero(model.d_eta);
  Vec th = j.contains("theta0") ? to_vec(j["theta0"].get<std::vector<double>>()) : Vec::Zero(model.d_theta);
  return solve_truth(model, std::move(atoms), std::move(probs), eta, th);
}

void add_verify(CLI::App& app, std::ostream& out, int& code) {
  struct Opts {
    ModelArgs margs;
    std::string model_name, dgp_arg;
    std::string method = "auto";
    int q = 1;
    int check_order = -1;
    int atoms = 3;
    int cases = 200;
    bool affine = false;
    std::uint64_t seed = 1;
    double threshold = 1e-7;
  };
  auto o = std::make_shared<Opts>();
  auto* verify = app.add_subcommand("verify", "orthogonality and lemma checks");
  verify->require_subcommand(1);

  auto* ortho = verify->add_subcommand("ortho", "derivatives of the population moment at the truth");
  ortho->add_option("--model", o->model_name, "built-in model; omitted for fixtures");
  o->margs.add_to(ortho, false);
  ortho->add_option("--dgp", o->dgp_arg, "fixture name, DGP JSON file, or 'random'")->required();
  ortho->add_option("--q", o->q, "order")->required();
  ortho->add_option("--check-order", o->check_order, "highest derivative order (default q + 1)");
  ortho->add_flag("--affine", o->affine, "use the affine tree set");
  ortho->add_option("--method", o->method, "auto | taylor | fd")->capture_default_str();
  ortho->add_option("--threshold", o->threshold, "vanishing threshold")->capture_default_str();
  ortho->add_option("--atoms", o->atoms, "support size for --dgp random")->capture_default_str();
  ortho->add_option("--seed", o->seed, "seed for --dgp random")->capture_default_str();
  ortho->callback([&out, &code, o] {
    ModelSpec model;
    DiscreteDGP dgp;
    auto names = fixture_names();
    if (std::find(names.begin(), names.end(), o->dgp_arg) != names.end()) {
      if (!o->model_name.empty() && o->model_name != o->dgp_arg)
        throw std::invalid_argument("fixture " + o->dgp_arg + " carries its own model; omit --model");
      auto fx = fixture_by_name(o->dgp_arg);
      model = fx.model;
      dgp = fx.dgp;
    } else {
      if (o->model_name.empty()) throw std::invalid_argument("--model is required unless --dgp names a fixture");
      o->margs.name = o->model_name;
      model = o->margs.build();
      dgp = o->dgp_arg == "random" ? random_dgp(model, o->seed, o->atoms) : dgp_from_json(model, json::parse(read_file(o->dgp_arg)));
    }
    OrthoOptions opt;
    opt.check_order = o->check_order;
    opt.threshold = o->threshold;
    if (o->method == "auto") opt.method = DerivativeMethod::automatic;
    else if (o->method == "taylor") opt.method = DerivativeMethod::taylor;
    else if (o->method == "fd") opt.method = DerivativeMethod::finite_difference;
    else throw std::invalid_argument("unknown method: " + o->method);
    auto psi = o->affine ? assemble_psi_affine(o->q, model) : assemble_psi(o->q, model);
    auto rep = orthogonality_check(psi, dgp, opt);
    auto j = rep.to_json();
    j["dgp"] = o->dgp_arg;
    j["affine"] = o->affine;
    out << j.dump(2) << '\n';
    code = rep.passed ? 0 : 1;
  });

  auto* lemmas = verify->add_subcommand("lemmas", "randomized combinatorial identities");
  lemmas->add_option("--cases", o->cases, "cases per lemma")->capture_default_str();
  lemmas->add_option("--seed", o->seed, "seed")->capture_default_str();
  lemmas->callback([&out, &code, o] {
    auto rep = lemma_suite(o->cases, o->seed);
    out << rep.to_json().dump(2) << '\n';
    code = rep.passed ? 0 : 1;
  });
}

// estimate ----------------------------------------------------------------

Panel read_panel(const std::string& path, std::vector<std::string>& ids, int& k) {
  std::stringstream ss(read_file(path));
  std::string line;
  if (!std::getline(ss, line)) throw std::invalid_argument("empty input");
  auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "unit" || header[1] != "t" || header[2] != "y")
    throw std::invalid_argument("input columns must be unit,t,y,x1..xk");
  k = static_cast<int>(header.size()) - 3;
  for (int i = 0; i < k; ++i)
    if (header[3 + i] != "x" + std::to_string(i + 1))
      throw std::invalid_argument("expected column x" + std::to_string(i + 1));
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<std::pair<double, Observation>>> rows;
  for (int lineno = 2; std::getline(ss, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::invalid_argument("line " + std::to_string(lineno) + ": wrong number of columns");
    auto [it, fresh] = index.emplace(cells[0], rows.size());
    if (fresh) {
      ids.push_back(cells[0]);
      rows.emplace_back();
    }
    Observation w;
    for (std::size_t c = 2; c < cells.size(); ++c) {
      if (!numeric(cells[c])) throw std::invalid_argument("line " + std::to_string(lineno) + ": non-numeric value");
      w.push_back(std::stod(cells[c]));
    }
    rows[it->second].emplace_back(std::stod(cells[1]), std::move(w));
  }
  Panel panel;
  for (auto& r : rows) {
    std::stable_sort(r.begin(), r.end(), [](auto& a, auto& b) { return a.first < b.first; });
    Unit u;
    for (auto& [t, w] : r) u.obs.push_back(std::move(w));
    panel.units.push_back(std::move(u));
  }
  panel.T();
  return panel;
}

void add_estimate(CLI::App& app, std::ostream& out, int& code) {
  struct Opts {
    ModelArgs margs;
    int q = 2;
    std::string input;
    std::string split = "halves";
    std::string ustat = "auto";
    bool cross_fit = false;
    bool regularize = false;
    std::uint64_t max_tuples = 1'000'000;
    std::uint64_t seed = 0;
  };
  auto o = std::make_shared<Opts>();
  auto* est = app.add_subcommand("estimate", "orthogonalized panel estimator");
  est->add_option("--model", o->margs.name, "built-in model")->required();
  o->margs.add_to(est, false);
  est->add_option("--q", o->q, "order")->required();
  est->add_option("--input", o->input, "CSV with columns unit,t,y,x1..xk")->required()->check(CLI::ExistingFile);
  est->add_flag("--cross-fit", o->cross_fit, "swap the halves and average");
  est->add_flag("--regularize", o->regularize, "Dirichlet shrinkage of the design (binary heterocoef)");
  est->add_option("--split", o->split, "halves | leave-out")->capture_default_str();
  est->add_option("--ustat", o->ustat, "auto | exhaustive | combinations | subsample")->capture_default_str();
  est->add_option("--max-tuples", o->max_tuples, "tuple budget")->capture_default_str();
  est->add_option("--seed", o->seed, "subsampling seed")->capture_default_str();
  est->callback([&out, &code, o] {
    std::vector<std::string> ids;
    int k = 0;
    Panel panel = read_panel(o->input, ids, k);
    ModelArgs ma = o->margs;
    if (ma.name == "heterocoef" || ma.name == "generated-regressor") ma.dim = k;
    else if (ma.name == "linear-iv") ma.dim = k - 2;
    else if (ma.name == "neyman-scott" && k != 0) throw std::invalid_argument("neyman-scott takes no x columns");
    ModelSpec model = ma.build();
    int T = panel.T();
    SplitPlan plan;
    if (o->split == "halves") plan = SplitPlan::halves(T, o->cross_fit);
    else if (o->split == "leave-out") plan = SplitPlan::leave_out(T);
    else throw std::invalid_argument("unknown split: " + o->split);
    OrthOptions opt;
    opt.ustat.max_tuples = o->max_tuples;
    opt.ustat.seed = o->seed;
    if (o->ustat == "auto") opt.ustat.mode = UStatMode::automatic;
    else if (o->ustat == "exhaustive") opt.ustat.mode = UStatMode::exhaustive;
    else if (o->ustat == "combinations") opt.ustat.mode = UStatMode::combinations;
    else if (o->ustat == "subsample") opt.ustat.mode = UStatMode::subsample;
    else throw std::invalid_argument("unknown ustat mode: " + o->ustat);
    json j;
    j["model"] = model.name;
    j["q"] = o->q;
    j["split"] = o->split;
    j["cross_fit"] = o->cross_fit && o->split == "halves";
    if (o->regularize) {
      if (ma.name != "heterocoef" || k != 3)
        throw std::invalid_argument("--regularize needs heterocoef with columns x1 = 1, x2, x3 binary");
      auto eb = regularize_lambda(panel);
      opt.nuisance.jacobian_override = eb.as_override();
      j["regularization"] = {{"alpha", eb.alpha}, {"pi", eb.pi}};
    }
    auto res = orth_estimate(panel, model, o->q, plan, opt);
    j["theta"] = to_std(res.theta);
    j["n_units"] = panel.units.size();
    j["n_excluded"] = res.n_excluded;
    auto& units = j["units"] = json::array();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      json u = {{"unit", ids[i]}, {"excluded", static_cast<bool>(res.excluded[i])}};
      u["moment"] = res.excluded[i] ? json(nullptr) : json(res.unit_values[i]);
      units.push_back(u);
    }
    j["warnings"] = res.warnings;
    out << j.dump(2) << '\n';
    code = 0;
  });
}

// simulate ----------------------------------------------------------------

void add_simulate(CLI::App& app, std::ostream& out, int& code) {
  struct Opts {
    SimConfig cfg;
    bool full_scale = false;
    NsConfig ns;
    bool no_cross_fit = false;
    std::string ns_out;
    std::string T_grid = "20,40,60,80,100";
    std::string out_dir = "out";
    std::string estimators = "ols,orth2";
    std::string regularization = "none,dirichlet-eb";
  };
  auto o = std::make_shared<Opts>();
  auto* sim = app.add_subcommand("simulate", "Monte Carlo studies");
  sim->require_subcommand(1);
  auto* kr = sim->add_subcommand("klinerose", "heterogeneous-coefficient callback design");
  kr->add_option("--N", o->cfg.N, "firms")->capture_default_str();
  kr->add_option("--T-grid", o->T_grid, "applications per firm")->capture_default_str();
  kr->add_option("--reps", o->cfg.reps, "replications")->capture_default_str();
  kr->add_option("--seed", o->cfg.seed, "root seed")->capture_default_str();
  kr->add_option("--out", o->out_dir, "output directory")->capture_default_str();
  kr->add_option("--threads", o->cfg.threads, "worker threads")->capture_default_str();
  kr->add_option("--truth-units", o->cfg.truth_units, "population draw size")->capture_default_str();
  kr->add_option("--estimators", o->estimators, "subset of ols,orth2")->capture_default_str();
  kr->add_option("--regularization", o->regularization, "subset of none,dirichlet-eb")->capture_default_str();
  kr->add_flag("--full-scale", o->full_scale, "N = 1000, reps = 1000, T in 20..100");
  kr->callback([&out, &code, o] {
    SimConfig c = o->cfg;
    c.T_grid.clear();
    for (double t : parse_list(o->T_grid)) c.T_grid.push_back(static_cast<int>(t));
    if (o->full_scale) {
      c.N = 1000;
      c.reps = 1000;
      c.T_grid = {20, 40, 60, 80, 100};
    }
    auto has = [](const std::string& list, const std::string& item) {
      std::stringstream ss(list);
      for (std::string s; std::getline(ss, s, ',');)
        if (s == item) return true;
      return false;
    };
    c.ols = has(o->estimators, "ols");
    c.orth2 = has(o->estimators, "orth2");
    c.unregularized = has(o->regularization, "none");
    c.regularized = has(o->regularization, "dirichlet-eb");
    auto res = run_study(c);
    std::filesystem::create_directories(o->out_dir);
    std::ofstream csv(std::filesystem::path(o->out_dir) / "results.csv");
    write_results_csv(csv, res.rows);
    auto summary = summarize_study(c, res);
    std::ofstream(std::filesystem::path(o->out_dir) / "summary.json") << summary.dump(2) << '\n';
    char buf[160];
    if (c.truth_units > 0) {
      std::snprintf(buf, sizeof buf, "truth theta1 %.6f theta2 %.6f sd %.6f (%ld units)\n", res.truth.theta1,
                    res.truth.theta2, res.truth.sd, res.truth.units);
      out << buf;
    }
    out << "estimator regularized T target bias mean_excluded\n";
    for (auto& cell : summary["cells"]) {
      std::snprintf(buf, sizeof buf, "%s %d %d %s %.6f %.2f\n", cell["estimator"].get<std::string>().c_str(),
                    cell["regularized"].get<bool>() ? 1 : 0, cell["T"].get<int>(),
                    cell["target"].get<std::string>().c_str(), cell["bias"].get<double>(),
                    cell["mean_excluded"].get<double>());
      out << buf;
    }
    code = 0;
  });

  auto* nsc = sim->add_subcommand("neyman-scott", "plug-in versus order-q estimators of the mean of m(eta)");
  nsc->add_option("--function", o->ns.function, "identity | square | cube | exp | logistic")->capture_default_str();
  nsc->add_option("--q", o->ns.q_max, "largest order")->capture_default_str();
  nsc->add_option("--N", o->ns.N, "units")->capture_default_str();
  nsc->add_option("--T", o->ns.T, "observations per unit")->capture_default_str();
  nsc->add_option("--reps", o->ns.reps, "replications")->capture_default_str();
  nsc->add_option("--seed", o->ns.seed, "root seed")->capture_default_str();
  nsc->add_option("--threads", o->ns.threads, "worker threads")->capture_default_str();
  nsc->add_flag("--no-cross-fit", o->no_cross_fit, "single split only");
  nsc->add_option("--out", o->ns_out, "CSV file (default stdout)");
  nsc->callback([&out, &code, o] {
    NsConfig c = o->ns;
    c.cross_fit = !o->no_cross_fit;
    auto rows = neyman_scott_demo(c);
    if (o->ns_out.empty()) {
      write_ns_csv(out, rows);
    } else {
      std::ofstream f(o->ns_out);
      write_ns_csv(f, rows);
    }
    code = 0;
  });
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Higher-order orthogonal moments: trees, moment functions, checks, estimation and simulation"};
  app.name("orthomom");
  app.require_subcommand(1);
  int code = 0;
  add_trees(app, out, code);
  add_psi(app, out, code);
  add_verify(app, out, code);
  add_estimate(app, out, code);
  add_simulate(app, out, code);
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return code;
}

}  // namespace orthomom
