#include "orthomom/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/SVD>

#include "orthomom/random.hpp"

namespace orthomom {

int Panel::T() const {
  if (units.empty()) throw std::invalid_argument("empty panel");
  std::size_t T = units.front().obs.size();
  for (auto& u : units)
    if (u.obs.size() != T) throw std::invalid_argument("units have different numbers of observations");
  return static_cast<int>(T);
}

namespace {

std::uint64_t saturating_falling(int n, int L) {
  long double c = 1;
  for (int i = 0; i < L; ++i) c *= n - i;
  return c > 1.8e19L ? UINT64_MAX : static_cast<std::uint64_t>(c);
}

std::uint64_t saturating_binomial(int n, int L) {
  long double c = 1;
  for (int i = 0; i < L; ++i) c = c * (n - i) / (i + 1);
  return c > 1.8e19L ? UINT64_MAX : static_cast<std::uint64_t>(std::llround(c));
}

UStatMode resolve(int n, int L, const UStatConfig& cfg) {
  if (cfg.mode != UStatMode::automatic) return cfg.mode;
  return saturating_falling(n, L) <= cfg.max_tuples ? UStatMode::exhaustive : UStatMode::subsample;
}

}  // namespace

std::uint64_t ustat_tuple_count(int n, int L, const UStatConfig& cfg) {
  switch (resolve(n, L, cfg)) {
    case UStatMode::exhaustive: return saturating_falling(n, L);
    case UStatMode::combinations: return saturating_binomial(n, L);
    default: return cfg.max_tuples;
  }
}

double u_statistic(int n, int L, const std::function<double(std::span<const int>)>& kernel, const UStatConfig& cfg) {
  if (L < 0) throw std::invalid_argument("negative tuple length");
  if (n < L) throw std::invalid_argument("U-statistic needs at least L observations");
  std::vector<int> idx(L);
  long double acc = 0;
  std::uint64_t count = 0;
  UStatMode mode = resolve(n, L, cfg);
  if (mode == UStatMode::subsample) {
    if (cfg.max_tuples == 0) throw std::invalid_argument("max_tuples must be positive");
    Stream rng(cfg.seed, {0x75737461ULL});
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::uint64_t k = 0; k < cfg.max_tuples; ++k) {
      for (int j = 0; j < L; ++j) {
        int pick = j + static_cast<int>(rng.below(n - j));
        std::swap(pool[j], pool[pick]);
        idx[j] = pool[j];
      }
      acc += kernel(idx);
    }
    return static_cast<double>(acc / cfg.max_tuples);
  }
  bool ordered = mode == UStatMode::exhaustive;
  std::vector<char> used(n, 0);
  std::function<void(int)> rec = [&](int pos) {
    if (pos == L) {
      acc += kernel(idx);
      ++count;
      return;
    }
    int start = ordered || pos == 0 ? 0 : idx[pos - 1] + 1;
    for (int i = start; i < n; ++i) {
      if (used[i]) continue;
      used[i] = 1;
      idx[pos] = i;
      rec(pos + 1);
      used[i] = 0;
    }
  };
  rec(0);
  return static_cast<double>(acc / count);
}

double u_statistic(const MomentFunction& psi, std::span<const Observation> obs, const Vec& theta, const Vec& eta,
                   const Vec& lambda, const UStatConfig& cfg) {
  std::vector<ObsView> views(psi.copies_required());
  return u_statistic(
      static_cast<int>(obs.size()), psi.copies_required(),
      [&](std::span<const int> idx) {
        for (std::size_t c = 0; c < idx.size(); ++c) views[c] = obs[idx[c]];
        return psi.evaluate(views, theta, eta, lambda);
      },
      cfg);
}

namespace {

bool is_singular(const Mat& J, double tol) {
  Eigen::JacobiSVD<Mat> svd(J);
  const Vec& s = svd.singularValues();
  if (s.size() == 0) return true;
  return !(s[s.size() - 1] >= tol * s[0]) || s[0] == 0.0;
}

Mat weight(const ModelSpec& model, const NuisanceOptions& opt) {
  return opt.omega.size() == 0 ? Mat(Mat::Identity(model.d_g, model.d_g)) : opt.omega;
}

// One Gauss-Newton step from eta with mean g value gbar and mean Jacobian J.
Vec gn_step(const Mat& J, const Vec& gbar, const Mat& W) {
  if (J.rows() == J.cols()) return -J.partialPivLu().solve(gbar);
  Mat JtW = J.transpose() * W;
  return -(JtW * J).ldlt().solve(JtW * gbar);
}

NuisanceFit finish(const ModelSpec& model, NuisanceFit fit, const NuisanceOptions& opt) {
  fit.singular = is_singular(fit.jacobian, opt.singular_tol);
  if (fit.singular) return fit;
  fit.lambda = model.lambda_map.from_jacobian(fit.jacobian);
  fit.Lambda = model.lambda_map(fit.lambda);
  return fit;
}

Vec start_eta(const ModelSpec& model, const NuisanceOptions& opt) {
  return opt.eta_start.size() == model.d_eta ? opt.eta_start : Vec(Vec::Zero(model.d_eta));
}

// Affine g: fit from sums of g(W, start) and d_eta g(W) over n observations.
NuisanceFit fit_from_sums(const ModelSpec& model, const Vec& gsum, const Mat& Gsum, int n, const NuisanceOptions& opt) {
  NuisanceFit fit;
  Mat J = Gsum / n;
  if (opt.jacobian_override) J = opt.jacobian_override(J, n);
  fit.jacobian = J;
  fit = finish(model, fit, opt);
  if (fit.singular) return fit;
  fit.eta = start_eta(model, opt) + gn_step(J, gsum / n, weight(model, opt));
  return fit;
}

Mat as_matrix(const DerivativeTensor& t, int rows, int cols) {
  Mat M(rows, cols);
  for (int k = 0; k < rows; ++k)
    for (int a = 0; a < cols; ++a) M(k, a) = t.flat(k * cols + a);
  return M;
}

struct Sums {
  std::vector<Vec> g;
  std::vector<Mat> G;
  Vec gsum;
  Mat Gsum;
};

Sums affine_sums(const ModelSpec& model, std::span<const Observation> obs, const Vec& theta, const Vec& eta) {
  if (model.block_size != 1) throw std::invalid_argument("nuisance fitting expects an unblocked model");
  Sums s;
  s.gsum = Vec::Zero(model.d_g);
  s.Gsum = Mat::Zero(model.d_g, model.d_eta);
  for (auto& w : obs) {
    Vec g = model.g_deriv(w, theta, eta, 0).contract(std::vector<Vec>{});
    Mat G = as_matrix(model.g_deriv(w, theta, eta, 1), model.d_g, model.d_eta);
    s.gsum += g;
    s.Gsum += G;
    s.g.push_back(std::move(g));
    s.G.push_back(std::move(G));
  }
  return s;
}

}  // namespace

NuisanceFit nuisance_fit(const ModelSpec& model, std::span<const Observation> obs, const Vec& theta,
                         const NuisanceOptions& opt) {
  if (obs.empty()) throw std::invalid_argument("no observations for the nuisance fit");
  int n = static_cast<int>(obs.size());
  Vec eta = start_eta(model, opt);
  if (model.g_affine) {
    Sums s = affine_sums(model, obs, theta, eta);
    return fit_from_sums(model, s.gsum, s.Gsum, n, opt);
  }
  Mat W = weight(model, opt);
  NuisanceFit fit;
  for (int it = 0; it < 100; ++it) {
    Sums s = affine_sums(model, obs, theta, eta);
    Mat J = s.Gsum / n;
    if (opt.jacobian_override) J = opt.jacobian_override(J, n);
    if (is_singular(J, opt.singular_tol)) {
      fit.jacobian = J;
      fit.singular = true;
      return fit;
    }
    Vec step = gn_step(J, s.gsum / n, W);
    eta += step;
    if (step.norm() <= 1e-14 * (1.0 + eta.norm())) break;
  }
  Sums s = affine_sums(model, obs, theta, eta);
  fit.jacobian = s.Gsum / n;
  if (opt.jacobian_override) fit.jacobian = opt.jacobian_override(fit.jacobian, n);
  fit.eta = eta;
  return finish(model, fit, opt);
}

SplitPlan SplitPlan::halves(int T, bool cross_fit) {
  SplitPlan p;
  for (int t = 0; t < T; ++t) (t < T / 2 ? p.holdout : p.evaluation).push_back(t);
  p.cross_fit = cross_fit;
  return p;
}

SplitPlan SplitPlan::leave_out(int T) {
  SplitPlan p;
  p.evaluation.resize(T);
  std::iota(p.evaluation.begin(), p.evaluation.end(), 0);
  p.leave_tuple_out = true;
  return p;
}

void SplitPlan::validate(int T, int L) const {
  std::vector<char> seen(T, 0);
  for (auto* set : {&holdout, &evaluation}) {
    for (int t : *set) {
      if (t < 0 || t >= T) throw std::invalid_argument("split index out of range");
      if (seen[t]++) throw std::invalid_argument("split sets overlap or repeat an index");
    }
  }
  if (leave_tuple_out) {
    if (!holdout.empty()) throw std::invalid_argument("leave-tuple-out plans refit on the complement of each tuple");
    if (static_cast<int>(evaluation.size()) < L + 1) throw std::invalid_argument("too few observations for leave-tuple-out");
    return;
  }
  if (holdout.empty()) throw std::invalid_argument("empty nuisance sample");
  if (static_cast<int>(evaluation.size()) < L) throw std::invalid_argument("evaluation sample smaller than L");
  if (cross_fit && static_cast<int>(holdout.size()) < L) throw std::invalid_argument("cross-fit needs |S1| >= L");
}

MomentFunction estimation_moment(int q, const ModelSpec& model) {
  return model.g_affine ? assemble_psi_affine(q, model) : assemble_psi(q, model);
}

namespace {

std::vector<Observation> pick(std::span<const Observation> obs, const std::vector<int>& idx) {
  std::vector<Observation> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(obs[i]);
  return out;
}

std::optional<double> one_split(const MomentFunction& psi, std::span<const Observation> obs, const std::vector<int>& s1,
                                const std::vector<int>& s2, const Vec& theta, const OrthOptions& opt) {
  auto fit = nuisance_fit(psi.model(), pick(obs, s1), theta, opt.nuisance);
  if (fit.singular) return std::nullopt;
  return u_statistic(psi, pick(obs, s2), theta, fit.eta, fit.lambda, opt.ustat);
}

std::optional<double> leave_tuple_out(const MomentFunction& psi, std::span<const Observation> obs,
                                      const std::vector<int>& eval, const Vec& theta, const OrthOptions& opt) {
  const ModelSpec& model = psi.model();
  if (!model.g_affine) throw std::invalid_argument("leave-tuple-out refits need an affine g");
  auto sample = pick(obs, eval);
  Vec start = start_eta(model, opt.nuisance);
  Sums s = affine_sums(model, sample, theta, start);
  int n = static_cast<int>(sample.size());
  int L = psi.copies_required();
  bool singular = false;
  std::vector<ObsView> views(L);
  double value = u_statistic(
      n, L,
      [&](std::span<const int> idx) {
        if (singular) return 0.0;
        Vec gsum = s.gsum;
        Mat Gsum = s.Gsum;
        for (int i : idx) {
          gsum -= s.g[i];
          Gsum -= s.G[i];
        }
        auto fit = fit_from_sums(model, gsum, Gsum, n - L, opt.nuisance);
        if (fit.singular) {
          singular = true;
          return 0.0;
        }
        for (int c = 0; c < L; ++c) views[c] = sample[idx[c]];
        return psi.evaluate(views, theta, fit.eta, fit.lambda);
      },
      opt.ustat);
  if (singular) return std::nullopt;
  return value;
}

}  // namespace

std::optional<double> unit_moment(const MomentFunction& psi, std::span<const Observation> obs, const SplitPlan& split,
                                  const Vec& theta, const OrthOptions& opt) {
  split.validate(static_cast<int>(obs.size()), psi.copies_required());
  if (split.leave_tuple_out) return leave_tuple_out(psi, obs, split.evaluation, theta, opt);
  auto a = one_split(psi, obs, split.holdout, split.evaluation, theta, opt);
  if (!a || !split.cross_fit) return a;
  auto b = one_split(psi, obs, split.evaluation, split.holdout, theta, opt);
  if (!b) return std::nullopt;
  return 0.5 * (*a + *b);
}

OrthResult orth_estimate(const Panel& panel, const ModelSpec& model, int q, const SplitPlan& split,
                         const OrthOptions& opt) {
  if (model.d_theta != 1) throw std::invalid_argument("a scalar moment identifies a scalar theta only");
  panel.T();
  auto psi = estimation_moment(q, model);
  OrthResult res;
  res.warnings = psi.warnings();
  Vec theta = opt.theta_start.size() == 1 ? opt.theta_start : Vec(Vec::Zero(1));
  std::size_t N = panel.units.size();
  res.unit_values.assign(N, std::numeric_limits<double>::quiet_NaN());
  res.excluded.assign(N, false);
  for (std::size_t i = 0; i < N; ++i) {
    auto v = unit_moment(psi, panel.units[i].obs, split, theta, opt);
    if (v)
      res.unit_values[i] = *v;
    else
      res.excluded[i] = true;
  }
  res.n_excluded = static_cast<int>(std::count(res.excluded.begin(), res.excluded.end(), true));
  if (res.n_excluded == static_cast<int>(N)) {
    res.theta = Vec::Constant(1, std::numeric_limits<double>::quiet_NaN());
    res.warnings.push_back("every unit has a singular nuisance design");
    return res;
  }
  auto mean_at = [&](const Vec& th) {
    long double acc = 0;
    for (std::size_t i = 0; i < N; ++i) {
      if (res.excluded[i]) continue;
      auto v = unit_moment(psi, panel.units[i].obs, split, th, opt);
      acc += v ? *v : 0.0;
    }
    return static_cast<double>(acc / (N - res.n_excluded));
  };
  long double acc = 0;
  for (std::size_t i = 0; i < N; ++i)
    if (!res.excluded[i]) acc += res.unit_values[i];
  double F = static_cast<double>(acc / (N - res.n_excluded));
  if (model.m_linear_shift) {
    // psi(theta) = psi(theta_start) - (theta - theta_start).
    res.theta = theta + Vec::Constant(1, F);
    return res;
  }
  for (res.iterations = 0; res.iterations < opt.max_iter && std::abs(F) > opt.tol; ++res.iterations) {
    double h = 1e-6 * std::max(1.0, std::abs(theta[0]));
    double dF = (mean_at(theta + Vec::Constant(1, h)) - mean_at(theta - Vec::Constant(1, h))) / (2 * h);
    if (dF == 0.0 || !std::isfinite(dF)) {
      res.warnings.push_back("moment is flat in theta");
      break;
    }
    double step = -F / dF;
    double t = 1.0;
    Vec next = theta + Vec::Constant(1, step);
    double Fn = mean_at(next);
    for (int k = 0; k < 30 && !(std::abs(Fn) < std::abs(F)); ++k) {
      t *= 0.5;
      next = theta + Vec::Constant(1, t * step);
      Fn = mean_at(next);
    }
    theta = next;
    F = Fn;
    if (std::abs(t * step) <= opt.tol * (1.0 + std::abs(theta[0]))) break;
  }
  if (std::abs(F) > opt.tol * 1e3) res.warnings.push_back("theta solver stopped before convergence");
  res.theta = theta;
  return res;
}

int binary_cell(const Observation& w) {
  if (w.size() != 4) throw std::invalid_argument("expected observations (Y, 1, X1, X2)");
  return 2 * static_cast<int>(w[2] != 0.0) + static_cast<int>(w[3] != 0.0);
}

Mat cell_second_moment(const std::vector<double>& pi) {
  Mat P = Mat::Zero(3, 3);
  for (int c = 0; c < 4; ++c) {
    Vec x(3);
    x << 1.0, c / 2, c % 2;
    P += pi[c] * x * x.transpose();
  }
  return P;
}

double dirichlet_objective(double alpha, const std::vector<double>& pi, const std::vector<std::array<int, 4>>& counts,
                           int T) {
  long double v = static_cast<long double>(counts.size()) * (std::lgamma(alpha) - std::lgamma(alpha + T));
  for (auto& n : counts)
    for (int c = 0; c < 4; ++c) v += std::lgamma(pi[c] * alpha + n[c]) - std::lgamma(pi[c] * alpha);
  return static_cast<double>(v);
}

Mat DirichletEB::shrink(const Mat& jacobian, int T) const {
  double w = T / (T + alpha);
  return w * jacobian - (1.0 - w) * Pi;
}

std::function<Mat(const Mat&, int)> DirichletEB::as_override() const {
  DirichletEB self = *this;
  self.trace.clear();
  return [self](const Mat& J, int n) { return self.shrink(J, n); };
}

DirichletEB regularize_lambda(const std::vector<std::array<int, 4>>& counts, int T, const AlphaSearch& search) {
  if (counts.empty() || T < 1) throw std::invalid_argument("empty panel");
  DirichletEB eb;
  double NT = static_cast<double>(counts.size()) * T;
  eb.pi.assign(4, 0.0);
  for (auto& n : counts)
    for (int c = 0; c < 4; ++c) eb.pi[c] += n[c] / NT;
  double floor = 1.0 / (2.0 * NT);
  double total = 0;
  for (auto& p : eb.pi) total += (p = std::max(p, floor));
  for (auto& p : eb.pi) p /= total;
  eb.Pi = cell_second_moment(eb.pi);

  auto f = [&](double log_a) {
    double a = std::exp(log_a);
    double v = dirichlet_objective(a, eb.pi, counts, T);
    eb.trace.emplace_back(a, v);
    return v;
  };
  double lo = std::log(search.lo), hi = std::log(search.hi);
  int best = 0;
  std::vector<double> grid(search.grid), vals(search.grid);
  for (int k = 0; k < search.grid; ++k) {
    grid[k] = lo + (hi - lo) * k / (search.grid - 1);
    vals[k] = f(grid[k]);
    if (vals[k] > vals[best]) best = k;
  }
  double x = grid[best], fx = vals[best];
  if (best > 0 && best + 1 < search.grid) {
    // Golden-section search inside the bracketing grid cell pair.
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = grid[best - 1], b = grid[best + 1];
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > search.rel_tol) {
      if (fc >= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - r * (b - a);
        fc = f(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + r * (b - a);
        fd = f(d);
      }
    }
    double m = fc >= fd ? c : d;
    double fm = std::max(fc, fd);
    if (fm > fx) {
      x = m;
      fx = fm;
    }
  }
  eb.alpha = std::exp(x);
  return eb;
}

DirichletEB regularize_lambda(const Panel& panel, const AlphaSearch& search) {
  int T = panel.T();
  std::vector<std::array<int, 4>> counts;
  for (auto& u : panel.units) {
    std::array<int, 4> n{};
    for (auto& w : u.obs) ++n[binary_cell(w)];
    counts.push_back(n);
  }
  return regularize_lambda(counts, T, search);
}

}  // namespace orthomom
