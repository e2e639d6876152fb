#include "orthomom/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <Eigen/Dense>

#include "orthomom/parallel.hpp"
#include "orthomom/random.hpp"

namespace orthomom {

namespace {

using M3 = Eigen::Matrix3d;
using V3 = Eigen::Vector3d;

constexpr std::uint64_t kTruthRep = 1ULL << 40;

V3 cell_x(int cell) { return V3(1.0, cell / 2, cell % 2); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void SimConfig::validate() const {
  if (N < 1 || reps < 1 || T_grid.empty()) throw std::invalid_argument("N, reps and the T grid must be positive");
  for (int T : T_grid) {
    if (T < 1) throw std::invalid_argument("T must be positive");
    if (orth2 && T < 4) throw std::invalid_argument("orth2 needs T >= 4");
  }
  if (!ols && !orth2) throw std::invalid_argument("no estimator selected");
  if (!regularized && !unregularized) throw std::invalid_argument("no regularization setting selected");
}

std::array<double, 4> cell_probs(int type) {
  if (type == 1) return {3.0 / 8, 1.0 / 8, 1.0 / 8, 3.0 / 8};
  if (type == 2) return {1.0 / 8, 3.0 / 8, 3.0 / 8, 1.0 / 8};
  throw std::invalid_argument("firm type must be 1 or 2");
}

Firm draw_firm(std::uint64_t seed, std::uint64_t rep, std::uint64_t unit) {
  Stream s(seed, {rep, unit, 0});
  Firm f;
  f.type = s.uniform() < 0.5 ? 1 : 2;
  for (auto& b : f.beta) b = f.type + s.normal();
  return f;
}

std::vector<Observation> draw_applications(const Firm& firm, std::uint64_t seed, std::uint64_t rep,
                                           std::uint64_t unit, int T) {
  Stream s(seed, {rep, unit, 1});
  auto p = cell_probs(firm.type);
  std::vector<Observation> out;
  out.reserve(T);
  for (int t = 0; t < T; ++t) {
    double u = s.uniform();
    int cell = 0;
    for (double acc = p[0]; cell < 3 && u >= acc; acc += p[++cell]) {
    }
    double x1 = cell / 2, x2 = cell % 2;
    double eps = s.logistic();
    double y = eps >= firm.beta[0] + firm.beta[1] * x1 + firm.beta[2] * x2 ? 1.0 : 0.0;
    out.push_back({y, 1.0, x1, x2});
  }
  return out;
}

Panel generate_panel(const SimConfig& cfg, int rep, int T) {
  Panel panel;
  panel.units.resize(cfg.N);
  for (int i = 0; i < cfg.N; ++i) {
    Firm f = draw_firm(cfg.seed, rep, i);
    panel.units[i].obs = draw_applications(f, cfg.seed, rep, i, T);
    panel.units[i].covariate = f.type;
  }
  return panel;
}

Vec firm_truth(const Firm& firm) {
  auto p = cell_probs(firm.type);
  M3 Exx = M3::Zero();
  V3 Exy = V3::Zero();
  for (int c = 0; c < 4; ++c) {
    V3 x = cell_x(c);
    double index = firm.beta[0] * x[0] + firm.beta[1] * x[1] + firm.beta[2] * x[2];
    double py = 1.0 / (1.0 + std::exp(index));
    Exx += p[c] * x * x.transpose();
    Exy += p[c] * py * x;
  }
  V3 eta = Exx.inverse() * Exy;
  return Vec(eta);
}

PopulationTruth population_truth(std::uint64_t seed, long units, int threads) {
  if (units < 1) throw std::invalid_argument("population draw needs at least one unit");
  const long chunk = 1 << 16;
  std::size_t chunks = static_cast<std::size_t>((units + chunk - 1) / chunk);
  std::vector<long double> s1(chunks), s2(chunks);
  parallel_for(chunks, threads, [&](std::size_t k) {
    long double a = 0, b = 0;
    long end = std::min<long>(units, (static_cast<long>(k) + 1) * chunk);
    for (long i = static_cast<long>(k) * chunk; i < end; ++i) {
      double e = firm_truth(draw_firm(seed, kTruthRep, i))[1];
      a += e;
      b += e * e;
    }
    s1[k] = a;
    s2[k] = b;
  });
  long double a = 0, b = 0;
  for (std::size_t k = 0; k < chunks; ++k) {
    a += s1[k];
    b += s2[k];
  }
  PopulationTruth t;
  t.units = units;
  t.theta1 = static_cast<double>(a / units);
  t.theta2 = static_cast<double>(b / units);
  t.sd = std::sqrt(std::max(0.0, t.theta2 - t.theta1 * t.theta1));
  return t;
}

TypeCounts count_types(std::span<const Observation> obs) {
  TypeCounts c;
  c.T = static_cast<int>(obs.size());
  for (auto& w : obs) {
    int type = 4 * static_cast<int>(w[0] != 0.0) + binary_cell(w);
    for (int a = 0; a < 8; ++a) c.pairs[a][type] += c.n[a];
    ++c.n[type];
  }
  return c;
}

namespace {

struct Design {
  M3 S = M3::Zero();
  V3 b = V3::Zero();
  std::array<int, 4> cells{};
};

Design design(const TypeCounts& c) {
  Design d;
  for (int t = 0; t < 8; ++t) {
    if (c.n[t] == 0) continue;
    V3 x = cell_x(t % 4);
    d.S += c.n[t] * x * x.transpose();
    d.b += c.n[t] * (t / 4) * x;
    d.cells[t % 4] += c.n[t];
  }
  return d;
}

void remove(Design& d, int type) {
  V3 x = cell_x(type % 4);
  d.S -= x * x.transpose();
  d.b -= (type / 4) * x;
  --d.cells[type % 4];
}

bool full_rank(const Design& d) {
  int k = 0;
  for (int n : d.cells) k += n > 0;
  return k >= 3;
}

// eta and Lambda from a design over n observations, shrunk when eb is set.
bool solve(const Design& d, int n, const DirichletEB* eb, V3& eta, M3& Lambda) {
  double a = 0;
  M3 M = d.S;
  if (eb) {
    a = eb->alpha;
    M += a * eb->Pi;
  } else if (!full_rank(d)) {
    return false;
  }
  M3 inv = M.inverse();
  eta = (n + a) / n * (inv * d.b);
  Lambda = -(n + a) * inv;
  return true;
}

// The pair kernel for (s1, s2) with s1 < s2: s1 is the leaf, s2 the middle node.
std::pair<double, double> pair_values(const V3& eta, const M3& L, const V3& x1, double y1, const V3& x2, double y2) {
  V3 u1 = L * x1 * (y1 - x1.dot(eta));
  V3 u2 = L * x2 * (y2 - x2.dot(eta));
  V3 v = 2.0 * u1 + L * x2 * x2.dot(u1);
  double t1 = eta[1] - v[1];
  double t2 = eta[1] * eta[1] - 2.0 * eta[1] * v[1] + u2[1] * u1[1];
  return {t1, t2};
}

}  // namespace

UnitEstimate ols_unit(const TypeCounts& c, const DirichletEB* eb) {
  UnitEstimate e;
  V3 eta;
  M3 L;
  if (!solve(design(c), c.T, eb, eta, L)) return e;
  e.ok = true;
  e.theta1 = eta[1];
  e.theta2 = eta[1] * eta[1];
  return e;
}

UnitEstimate orth2_unit(const TypeCounts& c, const DirichletEB* eb) {
  UnitEstimate e;
  if (c.T < 4) return e;
  Design full = design(c);
  long double s1 = 0, s2 = 0;
  for (int a = 0; a < 8; ++a) {
    for (int b = 0; b < 8; ++b) {
      long n = c.pairs[a][b];
      if (n == 0) continue;
      Design d = full;
      remove(d, a);
      remove(d, b);
      V3 eta;
      M3 L;
      if (!solve(d, c.T - 2, eb, eta, L)) return e;
      auto [v1, v2] = pair_values(eta, L, cell_x(a % 4), a / 4, cell_x(b % 4), b / 4);
      s1 += n * static_cast<long double>(v1);
      s2 += n * static_cast<long double>(v2);
    }
  }
  long double pairs = 0.5L * c.T * (c.T - 1);
  e.ok = true;
  e.theta1 = static_cast<double>(s1 / pairs);
  e.theta2 = static_cast<double>(s2 / pairs);
  return e;
}

UnitEstimate orth2_unit_direct(std::span<const Observation> obs, const DirichletEB* eb) {
  UnitEstimate e;
  int T = static_cast<int>(obs.size());
  if (T < 4) return e;
  long double s1 = 0, s2 = 0;
  const M3 D = (M3() << 0, 0, 0, 0, 1, 0, 0, 0, 0).finished();
  for (int i = 0; i < T; ++i) {
    for (int j = i + 1; j < T; ++j) {
      M3 S = M3::Zero();
      V3 b = V3::Zero();
      std::array<int, 4> cells{};
      for (int t = 0; t < T; ++t) {
        if (t == i || t == j) continue;
        V3 x(obs[t][1], obs[t][2], obs[t][3]);
        S += x * x.transpose();
        b += x * obs[t][0];
        ++cells[binary_cell(obs[t])];
      }
      int n = T - 2;
      M3 Lambda;
      V3 eta;
      if (eb) {
        double w = n / (n + eb->alpha);
        M3 second = w * S / n + (1 - w) * eb->Pi;
        Lambda = -second.inverse();
        eta = second.inverse() * b / n;
      } else {
        int k = 0;
        for (int x : cells) k += x > 0;
        if (k < 3) return e;
        Lambda = -(S / n).inverse();
        eta = S.inverse() * b;
      }
      V3 x1(obs[i][1], obs[i][2], obs[i][3]), x2(obs[j][1], obs[j][2], obs[j][3]);
      double r1 = obs[i][0] - x1.dot(eta), r2 = obs[j][0] - x2.dot(eta);
      V3 corr = (2.0 * M3::Identity() + Lambda * x2 * x2.transpose()) * Lambda * x1 * r1;
      V3 first = eta - corr;
      s1 += first[1];
      double second_term = eta.dot(D * eta) - 2.0 * eta.dot(D * corr) + (Lambda * x2 * r2).dot(D * (Lambda * x1 * r1));
      s2 += second_term;
    }
  }
  long double pairs = 0.5L * T * (T - 1);
  e.ok = true;
  e.theta1 = static_cast<double>(s1 / pairs);
  e.theta2 = static_cast<double>(s2 / pairs);
  return e;
}

namespace {

struct Cell {
  std::string estimator;
  bool regularized;
};

}  // namespace

StudyResult run_study(const SimConfig& cfg) {
  cfg.validate();
  std::vector<Cell> cells;
  for (auto est : {"ols", "orth2"}) {
    if ((std::string(est) == "ols" && !cfg.ols) || (std::string(est) == "orth2" && !cfg.orth2)) continue;
    if (cfg.unregularized) cells.push_back({est, false});
    if (cfg.regularized) cells.push_back({est, true});
  }
  std::size_t nT = cfg.T_grid.size();
  std::size_t tasks = static_cast<std::size_t>(cfg.reps) * nT;
  std::vector<std::vector<StudyRow>> out(tasks);
  StudyResult res;
  res.alpha.assign(tasks, std::numeric_limits<double>::quiet_NaN());
  parallel_for(tasks, cfg.threads, [&](std::size_t task) {
    int rep = static_cast<int>(task / nT);
    int T = cfg.T_grid[task % nT];
    std::vector<TypeCounts> counts(cfg.N);
    std::vector<double> truth(cfg.N);
    std::vector<std::array<int, 4>> cell_counts(cfg.N);
    for (int i = 0; i < cfg.N; ++i) {
      Firm f = draw_firm(cfg.seed, rep, i);
      auto obs = draw_applications(f, cfg.seed, rep, i, T);
      counts[i] = count_types(obs);
      truth[i] = firm_truth(f)[1];
      for (int t = 0; t < 8; ++t) cell_counts[i][t % 4] += counts[i].n[t];
    }
    DirichletEB eb;
    if (cfg.regularized) {
      eb = regularize_lambda(cell_counts, T, cfg.alpha);
      res.alpha[task] = eb.alpha;
    }
    for (auto& cell : cells) {
      long double e1 = 0, e2 = 0, t1 = 0, t2 = 0;
      int kept = 0;
      for (int i = 0; i < cfg.N; ++i) {
        const DirichletEB* p = cell.regularized ? &eb : nullptr;
        UnitEstimate u = cell.estimator == "ols" ? ols_unit(counts[i], p) : orth2_unit(counts[i], p);
        if (!u.ok) continue;
        ++kept;
        e1 += u.theta1;
        e2 += u.theta2;
        t1 += truth[i];
        t2 += truth[i] * truth[i];
      }
      int excluded = cfg.N - kept;
      auto avg = [&](long double s) {
        return kept ? static_cast<double>(s / kept) : std::numeric_limits<double>::quiet_NaN();
      };
      out[task].push_back({rep, cell.estimator, cell.regularized, T, "theta1", avg(e1), avg(t1), excluded});
      out[task].push_back({rep, cell.estimator, cell.regularized, T, "theta2", avg(e2), avg(t2), excluded});
    }
  });
  for (auto& v : out) res.rows.insert(res.rows.end(), v.begin(), v.end());
  if (cfg.truth_units > 0) res.truth = population_truth(cfg.seed, cfg.truth_units, cfg.threads);
  return res;
}

void write_results_csv(std::ostream& out, const std::vector<StudyRow>& rows) {
  out << "rep,estimator,regularized,T,target,estimate,truth_subset,n_excluded\n";
  for (auto& r : rows)
    out << r.rep << ',' << r.estimator << ',' << (r.regularized ? 1 : 0) << ',' << r.T << ',' << r.target << ','
        << fmt(r.estimate) << ',' << fmt(r.truth_subset) << ',' << r.n_excluded << '\n';
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  double h = (v.size() - 1) * p;
  std::size_t lo = static_cast<std::size_t>(std::floor(h));
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

nlohmann::json summarize_study(const SimConfig& cfg, const StudyResult& res) {
  nlohmann::json j;
  j["config"] = {{"N", cfg.N},           {"T_grid", cfg.T_grid},       {"reps", cfg.reps},
                 {"seed", cfg.seed},     {"truth_units", cfg.truth_units}, {"alpha_grid", cfg.alpha.grid},
                 {"alpha_lo", cfg.alpha.lo}, {"alpha_hi", cfg.alpha.hi}};
  j["population_truth"] = {{"units", res.truth.units},
                           {"theta1", res.truth.theta1},
                           {"theta2", res.truth.theta2},
                           {"sd", res.truth.sd}};
  auto& cells = j["cells"] = nlohmann::json::array();
  std::vector<std::string> keys;
  for (auto& r : res.rows) {
    std::string key = r.estimator + (r.regularized ? "/1/" : "/0/") + std::to_string(r.T) + "/" + r.target;
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  for (auto& key : keys) {
    std::vector<double> est, gap;
    long double truth = 0, excl = 0;
    const StudyRow* first = nullptr;
    for (auto& r : res.rows) {
      std::string k = r.estimator + (r.regularized ? "/1/" : "/0/") + std::to_string(r.T) + "/" + r.target;
      if (k != key || std::isnan(r.estimate)) continue;
      if (!first) first = &r;
      est.push_back(r.estimate);
      gap.push_back(r.estimate - r.truth_subset);
      truth += r.truth_subset;
      excl += r.n_excluded;
    }
    if (!first) continue;
    long double m = 0, b = 0;
    for (double x : est) m += x;
    for (double x : gap) b += x;
    double n = static_cast<double>(est.size());
    cells.push_back({{"estimator", first->estimator},
                     {"regularized", first->regularized},
                     {"T", first->T},
                     {"target", first->target},
                     {"reps", est.size()},
                     {"mean_estimate", static_cast<double>(m / n)},
                     {"q05", quantile(est, 0.05)},
                     {"q95", quantile(est, 0.95)},
                     {"mean_truth_subset", static_cast<double>(truth / n)},
                     {"bias", static_cast<double>(b / n)},
                     {"mean_excluded", static_cast<double>(excl / n)}});
  }
  auto& alpha = j["mean_alpha_by_T"] = nlohmann::json::array();
  if (cfg.regularized) {
    std::size_t nT = cfg.T_grid.size();
    for (std::size_t k = 0; k < nT; ++k) {
      long double s = 0;
      for (int r = 0; r < cfg.reps; ++r) s += res.alpha[r * nT + k];
      alpha.push_back({{"T", cfg.T_grid[k]}, {"alpha", static_cast<double>(s / cfg.reps)}});
    }
  }
  return j;
}

double ns_unit_estimate(const ScalarFunction& f, int q, double eta_hat, std::span<const double> y) {
  int n = static_cast<int>(y.size());
  if (q < 0) throw std::invalid_argument("q must be nonnegative");
  if (n < q) throw std::invalid_argument("evaluation sample smaller than q");
  // e[j] = elementary symmetric polynomial of degree j, then divided by C(n, j).
  std::vector<long double> e(q + 1, 0.0L);
  e[0] = 1;
  for (double v : y)
    for (int j = q; j >= 1; --j) e[j] += e[j - 1] * v;
  long double binom = 1;
  for (int j = 1; j <= q; ++j) {
    binom = binom * (n - j + 1) / j;
    e[j] /= binom;
  }
  long double est = 0;
  for (int j = 0; j <= q; ++j) {
    long double c = 0, fact = 1;
    for (int k = 0; k <= q; ++k) {
      if (k > 0) fact *= k;
      if (k < j) continue;
      long double choose = 1;
      for (int i = 0; i < j; ++i) choose = choose * (k - i) / (i + 1);
      c += f.eval(eta_hat, k) / fact * choose * std::pow(-static_cast<long double>(eta_hat), k - j);
    }
    est += c * e[j];
  }
  return static_cast<double>(est);
}

std::vector<NsRow> neyman_scott_demo(const NsConfig& cfg) {
  if (cfg.N < 1 || cfg.reps < 1 || cfg.q_max < 0) throw std::invalid_argument("invalid Neyman-Scott configuration");
  if (cfg.T / 2 < cfg.q_max || cfg.T - cfg.T / 2 < cfg.q_max)
    throw std::invalid_argument("each half of the sample needs at least q_max observations");
  ScalarFunction f = scalar_function(cfg.function);
  int Q = cfg.q_max + 1;
  // Per replication: plug-in, then orth for q = 0..q_max, and the truth.
  std::vector<std::vector<double>> est(cfg.reps, std::vector<double>(Q + 1));
  std::vector<double> truth(cfg.reps);
  parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
    std::vector<long double> acc(Q + 1, 0.0L);
    long double tr = 0;
    int h = cfg.T / 2;
    for (int i = 0; i < cfg.N; ++i) {
      Stream s(cfg.seed, {r, static_cast<std::uint64_t>(i)});
      double eta0 = 0.5 + 0.5 * s.normal();
      std::vector<double> y(cfg.T);
      // Skewed, centered noise: Exp(1) - 1.
      for (auto& v : y) v = eta0 - std::log(s.uniform()) - 1.0;
      tr += f.eval(eta0, 0);
      long double mean = 0;
      for (double v : y) mean += v;
      acc[0] += f.eval(static_cast<double>(mean / cfg.T), 0);
      std::span<const double> a(y.data(), h), b(y.data() + h, cfg.T - h);
      auto avg = [](std::span<const double> v) {
        long double m = 0;
        for (double x : v) m += x;
        return static_cast<double>(m / v.size());
      };
      for (int q = 0; q <= cfg.q_max; ++q) {
        double v = ns_unit_estimate(f, q, avg(a), b);
        if (cfg.cross_fit) v = 0.5 * (v + ns_unit_estimate(f, q, avg(b), a));
        acc[1 + q] += v;
      }
    }
    for (int k = 0; k <= Q; ++k) est[r][k] = static_cast<double>(acc[k] / cfg.N);
    truth[r] = static_cast<double>(tr / cfg.N);
  });
  std::vector<NsRow> rows;
  for (int k = 0; k <= Q; ++k) {
    NsRow row;
    row.q = k == 0 ? 0 : k - 1;
    row.estimator = k == 0 ? "plug-in" : "orth";
    long double m = 0, t = 0, b = 0;
    for (int r = 0; r < cfg.reps; ++r) {
      m += est[r][k];
      t += truth[r];
      b += est[r][k] - truth[r];
    }
    row.mean = static_cast<double>(m / cfg.reps);
    row.truth = static_cast<double>(t / cfg.reps);
    row.bias = static_cast<double>(b / cfg.reps);
    long double v = 0;
    for (int r = 0; r < cfg.reps; ++r) v += (est[r][k] - row.mean) * (est[r][k] - row.mean);
    row.variance = cfg.reps > 1 ? static_cast<double>(v / (cfg.reps - 1)) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

void write_ns_csv(std::ostream& out, const std::vector<NsRow>& rows) {
  out << "q,estimator,mean,truth,bias,variance\n";
  for (auto& r : rows)
    out << r.q << ',' << r.estimator << ',' << fmt(r.mean) << ',' << fmt(r.truth) << ',' << fmt(r.bias) << ','
        << fmt(r.variance) << '\n';
}

}  // namespace orthomom
