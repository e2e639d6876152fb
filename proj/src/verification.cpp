#include "orthomom/verification.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

#include "orthomom/random.hpp"

namespace orthomom {

namespace {

template <class Fn>
void for_each_block(const ModelSpec& model, const DiscreteDGP& dgp, Fn&& fn) {
  int b = model.block_size;
  int s = static_cast<int>(dgp.atoms.size());
  std::vector<int> idx(b, 0);
  std::vector<double> buf;
  while (true) {
    buf.clear();
    double w = 1.0;
    for (int i : idx) {
      buf.insert(buf.end(), dgp.atoms[i].begin(), dgp.atoms[i].end());
      w *= dgp.probs[i];
    }
    fn(ObsView(buf), w);
    int k = b - 1;
    while (k >= 0 && ++idx[k] == s) idx[k--] = 0;
    if (k < 0) return;
  }
}

DerivativeTensor weighted_sum(int out_dim, int order, int d, const std::function<void(
                                  const std::function<void(const DerivativeTensor&, double)>&)>& visit) {
  DerivativeTensor out(out_dim, order, d);
  std::vector<long double> acc(out.data().size(), 0.0L);
  visit([&](const DerivativeTensor& t, double w) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<long double>(w) * t.flat(i);
  });
  for (std::size_t i = 0; i < acc.size(); ++i) out.flat(i) = static_cast<double>(acc[i]);
  return out;
}

}  // namespace

DerivativeTensor expected_g(const ModelSpec& model, const DiscreteDGP& dgp, const Vec& theta, const Vec& eta,
                            int order) {
  return weighted_sum(model.d_g, order, model.d_eta, [&](const auto& add) {
    for_each_block(model, dgp, [&](ObsView w, double p) { add(derivative(model, Which::g, w, theta, eta, order), p); });
  });
}

DerivativeTensor expected_m(const ModelSpec& model, const DiscreteDGP& dgp, const Vec& theta, const Vec& eta,
                            int order) {
  if (!model.m_uses_observation) return derivative(model, Which::m, ObsView{}, theta, eta, order);
  return weighted_sum(1, order, model.d_eta, [&](const auto& add) {
    for (std::size_t i = 0; i < dgp.atoms.size(); ++i)
      add(derivative(model, Which::m, dgp.atoms[i], theta, eta, order), dgp.probs[i]);
  });
}

Mat expected_jacobian(const ModelSpec& model, const DiscreteDGP& dgp, const Vec& theta, const Vec& eta) {
  auto t = expected_g(model, dgp, theta, eta, 1);
  Mat J(model.d_g, model.d_eta);
  for (int k = 0; k < model.d_g; ++k)
    for (int a = 0; a < model.d_eta; ++a) J(k, a) = t.flat(k * model.d_eta + a);
  return J;
}

DgpResiduals dgp_residuals(const ModelSpec& model, const DiscreteDGP& dgp) {
  DgpResiduals r;
  long double s = 0;
  for (double p : dgp.probs) s += p;
  r.prob_sum = std::abs(static_cast<double>(s - 1.0L));
  r.g = expected_g(model, dgp, dgp.theta0, dgp.eta0, 0).max_abs();
  r.m = expected_m(model, dgp, dgp.theta0, dgp.eta0, 0).max_abs();
  Mat J = expected_jacobian(model, dgp, dgp.theta0, dgp.eta0);
  Mat L = model.lambda_map(dgp.lambda0);
  r.left_inverse = (L * J - Mat::Identity(model.d_eta, model.d_eta)).cwiseAbs().maxCoeff();
  return r;
}

DiscreteDGP solve_truth(const ModelSpec& model, std::vector<Observation> atoms, std::vector<double> probs,
                        Vec eta_start, Vec theta_start) {
  model.validate();
  if (atoms.size() != probs.size() || atoms.empty()) throw std::invalid_argument("atoms and probabilities differ");
  for (auto& a : atoms)
    if (static_cast<int>(a.size()) != model.obs_dim) throw std::invalid_argument("atom has wrong dimension");
  DiscreteDGP dgp{std::move(atoms), std::move(probs), std::move(theta_start), std::move(eta_start), Vec()};
  int d = model.d_eta;
  int dt = model.d_theta;
  auto residual = [&](const Vec& th, const Vec& eta) {
    Vec F(model.d_g + 1);
    auto g = expected_g(model, dgp, th, eta, 0);
    for (int k = 0; k < model.d_g; ++k) F[k] = g.flat(k);
    F[model.d_g] = expected_m(model, dgp, th, eta, 0).flat(0);
    return F;
  };
  for (int it = 0; it < 100; ++it) {
    Vec F = residual(dgp.theta0, dgp.eta0);
    Mat Jf(model.d_g + 1, d + dt);
    Jf.topLeftCorner(model.d_g, d) = expected_jacobian(model, dgp, dgp.theta0, dgp.eta0);
    auto dm = expected_m(model, dgp, dgp.theta0, dgp.eta0, 1);
    for (int a = 0; a < d; ++a) Jf(model.d_g, a) = dm.flat(a);
    for (int t = 0; t < dt; ++t) {
      double h = 1e-6 * std::max(1.0, std::abs(dgp.theta0[t]));
      Vec tp = dgp.theta0, tm = dgp.theta0;
      tp[t] += h;
      tm[t] -= h;
      Jf.col(d + t) = (residual(tp, dgp.eta0) - residual(tm, dgp.eta0)) / (tp[t] - tm[t]);
    }
    Vec step = Jf.colPivHouseholderQr().solve(-F);
    dgp.eta0 += step.head(d);
    dgp.theta0 += step.tail(dt);
    if (step.norm() <= 1e-15 * (1.0 + dgp.eta0.norm() + dgp.theta0.norm())) break;
  }
  dgp.lambda0 = model.lambda_map.from_jacobian(expected_jacobian(model, dgp, dgp.theta0, dgp.eta0));
  return dgp;
}

double population_moment(const MomentFunction& psi, const DiscreteDGP& dgp, const Vec& theta, const Vec& eta,
                         const Vec& lambda, const PopulationOptions& opt) {
  int L = psi.copies_required();
  int s = static_cast<int>(dgp.atoms.size());
  if (std::pow(static_cast<double>(s), L) > opt.cap)
    throw std::length_error("support^L exceeds the exact-summation cap; use a subsampled Monte Carlo estimate");
  std::vector<int> idx(L, 0);
  std::vector<ObsView> copies(L);
  long double acc = 0;
  while (true) {
    double w = 1.0;
    for (int c = 0; c < L; ++c) {
      copies[c] = dgp.atoms[idx[c]];
      w *= dgp.probs[idx[c]];
    }
    acc += static_cast<long double>(w) * psi.evaluate(copies, theta, eta, lambda);
    int k = L - 1;
    while (k >= 0 && ++idx[k] == s) idx[k--] = 0;
    if (k < 0) break;
  }
  return static_cast<double>(acc);
}

double population_moment_factorized(const MomentFunction& psi, const DiscreteDGP& dgp, const Vec& theta,
                                    const Vec& eta, const Vec& lambda) {
  const ModelSpec& model = psi.model();
  std::vector<DerivativeTensor> Eg, Em;
  for (int p = 0; p <= psi.max_g_order(); ++p) Eg.push_back(expected_g(model, dgp, theta, eta, p));
  for (int p = 0; p <= psi.max_m_order(); ++p) Em.push_back(expected_m(model, dgp, theta, eta, p));
  Mat Lambda = model.lambda_map(lambda);
  long double acc = 0;
  std::vector<Vec> kids;
  for (auto& term : psi.terms()) {
    std::vector<Vec> vals(term.nodes.size());
    double kappa = 0;
    for (std::size_t i = 0; i < term.nodes.size(); ++i) {
      kids.clear();
      for (int c : term.nodes[i].children) kids.push_back(vals[c]);
      if (i + 1 < term.nodes.size())
        vals[i] = Lambda * Eg[kids.size()].contract(kids);
      else
        kappa = Em[kids.size()].contract(kids)[0];
    }
    acc += static_cast<long double>(term.weight) * kappa;
  }
  return static_cast<double>(acc);
}

namespace {

// Jet-valued tensor E d^p(.)(eta + delta) from expected tensors of orders p..p+K.
std::vector<Jet> jet_tensor(const std::vector<DerivativeTensor>& E, int p, int out_dim, int d,
                            const std::shared_ptr<const JetSpace>& space) {
  std::size_t slots = 1;
  for (int i = 0; i < p; ++i) slots *= d;
  std::vector<Jet> out(out_dim * slots, Jet(space, 0.0L));
  for (std::size_t mono = 0; mono < space->size(); ++mono) {
    const auto& e = space->exponents(mono);
    bool eta_only = true;
    for (std::size_t v = d; v < e.size(); ++v) eta_only &= e[v] == 0;
    if (!eta_only) continue;
    std::vector<int> extra;
    long double fact = 1.0L;
    for (int v = 0; v < d; ++v) {
      for (int k = 1; k <= e[v]; ++k) {
        extra.push_back(v);
        fact *= k;
      }
    }
    const DerivativeTensor& T = E.at(p + extra.size());
    std::vector<int> idx(p + extra.size());
    std::copy(extra.begin(), extra.end(), idx.begin() + p);
    for (int k = 0; k < out_dim; ++k) {
      std::size_t j = 0;
      for_each_index(p, d, [&](std::span<const int> J) {
        std::copy(J.begin(), J.end(), idx.begin());
        out[k * slots + j][mono] = T.at(k, idx) / fact;
        ++j;
      });
    }
  }
  return out;
}

std::vector<Jet> contract_jets(std::vector<Jet> cur, int d, const std::vector<const std::vector<Jet>*>& kids) {
  for (int s = static_cast<int>(kids.size()) - 1; s >= 0; --s) {
    std::size_t next = cur.size() / d;
    std::vector<Jet> reduced(next, Jet(cur[0].space_ptr(), 0.0L));
    for (std::size_t i = 0; i < next; ++i)
      for (int j = 0; j < d; ++j) reduced[i].add_product(cur[i * d + j], (*kids[s])[j]);
    cur = std::move(reduced);
  }
  return cur;
}

}  // namespace

Jet population_moment_jet(const MomentFunction& psi, const DiscreteDGP& dgp, const Vec& theta, const Vec& eta,
                          const Vec& lambda, int order) {
  const ModelSpec& model = psi.model();
  if (!model.lambda_map.affine()) throw std::invalid_argument("Taylor jets need an affine lambda map");
  int d = model.d_eta;
  int dl = model.d_lambda();
  int dg = model.d_g;
  auto space = std::make_shared<const JetSpace>(d + dl, order);

  // Lambda(lambda + eps) entries.
  std::vector<Jet> Lam(d * dg, Jet(space, 0.0L));
  Mat off = model.lambda_map.offset();
  for (int a = 0; a < d; ++a)
    for (int k = 0; k < dg; ++k) Lam[a * dg + k][0] = off(a, k);
  for (int l = 0; l < dl; ++l) {
    Mat B = model.lambda_map.basis(l);
    Jet coord = Jet::variable(space, d + l, lambda[l]);
    for (int a = 0; a < d; ++a)
      for (int k = 0; k < dg; ++k)
        if (B(a, k) != 0.0) Lam[a * dg + k].add_scaled(coord, B(a, k));
  }

  std::vector<DerivativeTensor> Eg, Em;
  for (int p = 0; p <= psi.max_g_order() + order; ++p) Eg.push_back(expected_g(model, dgp, theta, eta, p));
  for (int p = 0; p <= psi.max_m_order() + order; ++p) Em.push_back(expected_m(model, dgp, theta, eta, p));
  std::vector<std::vector<Jet>> Gj, Mj;
  for (int p = 0; p <= psi.max_g_order(); ++p) Gj.push_back(jet_tensor(Eg, p, dg, d, space));
  for (int p = 0; p <= psi.max_m_order(); ++p) Mj.push_back(jet_tensor(Em, p, 1, d, space));

  Jet total(space, 0.0L);
  for (auto& term : psi.terms()) {
    std::vector<std::vector<Jet>> vals(term.nodes.size());
    std::vector<const std::vector<Jet>*> kids;
    for (std::size_t i = 0; i < term.nodes.size(); ++i) {
      kids.clear();
      for (int c : term.nodes[i].children) kids.push_back(&vals[c]);
      if (i + 1 < term.nodes.size()) {
        auto w = contract_jets(Gj[kids.size()], d, kids);
        std::vector<Jet> v(d, Jet(space, 0.0L));
        for (int a = 0; a < d; ++a)
          for (int k = 0; k < dg; ++k) v[a].add_product(Lam[a * dg + k], w[k]);
        vals[i] = std::move(v);
      } else {
        auto r = contract_jets(Mj[kids.size()], d, kids);
        total.add_scaled(r[0], static_cast<long double>(term.weight));
      }
    }
  }
  return total;
}

namespace {

void finalize(OrthoReport& rep, int q) {
  rep.max_abs_by_order.assign(rep.check_order + 1, 0.0);
  for (auto& e : rep.entries)
    rep.max_abs_by_order[e.order] = std::max(rep.max_abs_by_order[e.order], std::abs(e.value));
  rep.max_abs_upto_q = 0;
  for (int o = 1; o <= std::min(q, rep.check_order); ++o)
    rep.max_abs_upto_q = std::max(rep.max_abs_upto_q, rep.max_abs_by_order[o]);
  rep.first_nonvanishing_order = 0;
  for (int o = 1; o <= rep.check_order; ++o) {
    if (rep.max_abs_by_order[o] > rep.threshold) {
      rep.first_nonvanishing_order = o;
      break;
    }
  }
  rep.passed = rep.max_abs_upto_q <= rep.threshold && std::abs(rep.value_at_truth) <= rep.threshold;
}

int needed_order(const MomentFunction& psi, int K) { return std::max(psi.max_g_order(), psi.max_m_order()) + K; }

}  // namespace

std::vector<OrthoEntry> richardson_derivatives(const std::function<double(const std::vector<double>&)>& f,
                                               int d_eta, int nv, int max_order,
                                               const std::vector<double>& steps) {
  if (steps.size() != 3) throw std::invalid_argument("the Richardson ladder needs three steps");
  JetSpace space(nv, max_order);
  std::vector<OrthoEntry> out;
  for (std::size_t i = 1; i < space.size(); ++i) {
    const auto& e = space.exponents(i);
    auto stencil = [&](double h) {
      // Tensor product of central n-th differences with node spacing h.
      std::vector<int> k(nv, 0);
      long double acc = 0;
      while (true) {
        std::vector<double> x(nv, 0.0);
        long double w = 1.0L;
        for (int v = 0; v < nv; ++v) {
          x[v] = (0.5 * e[v] - k[v]) * h;
          w *= binomial(e[v], k[v]).convert_to<long double>() * ((k[v] % 2) ? -1 : 1);
          w /= std::pow(static_cast<long double>(h), e[v]);
        }
        acc += w * f(x);
        int v = nv - 1;
        while (v >= 0 && ++k[v] > e[v]) k[v--] = 0;
        if (v < 0) break;
      }
      return static_cast<double>(acc);
    };
    double d0 = stencil(steps[0]);
    double d1 = stencil(steps[1]);
    double d2 = stencil(steps[2]);
    auto rich = [](double coarse, double fine, double ratio, int power) {
      double r = std::pow(ratio, power);
      return (r * fine - coarse) / (r - 1.0);
    };
    double r01 = rich(d0, d1, steps[0] / steps[1], 2);
    double r12 = rich(d1, d2, steps[1] / steps[2], 2);
    OrthoEntry entry;
    entry.alpha.assign(e.begin(), e.begin() + d_eta);
    entry.beta.assign(e.begin() + d_eta, e.end());
    entry.order = space.degree(i);
    entry.value = rich(r01, r12, steps[0] / steps[1], 4);
    out.push_back(std::move(entry));
  }
  return out;
}

OrthoReport orthogonality_check(const MomentFunction& psi, const DiscreteDGP& dgp, const OrthoOptions& opt) {
  const ModelSpec& model = psi.model();
  OrthoReport rep;
  rep.model = model.name;
  rep.q = psi.q();
  rep.check_order = opt.check_order < 0 ? psi.q() + 1 : opt.check_order;
  if (rep.check_order < 1) throw std::invalid_argument("check order must be at least 1");
  rep.threshold = opt.threshold;
  int d = model.d_eta;
  int nv = d + model.d_lambda();
  auto space = std::make_shared<const JetSpace>(nv, rep.check_order);

  DerivativeMethod method = opt.method;
  if (method == DerivativeMethod::automatic)
    method = model.lambda_map.affine() && model.max_order >= needed_order(psi, rep.check_order)
                 ? DerivativeMethod::taylor
                 : DerivativeMethod::finite_difference;

  auto push = [&](std::size_t mono, double value) {
    const auto& e = space->exponents(mono);
    OrthoEntry entry;
    entry.alpha.assign(e.begin(), e.begin() + d);
    entry.beta.assign(e.begin() + d, e.end());
    entry.order = space->degree(mono);
    entry.value = value;
    rep.entries.push_back(std::move(entry));
  };

  if (method == DerivativeMethod::taylor) {
    rep.method = "taylor";
    Jet psi_jet = population_moment_jet(psi, dgp, dgp.theta0, dgp.eta0, dgp.lambda0, rep.check_order);
    rep.value_at_truth = static_cast<double>(psi_jet.value());
    for (std::size_t i = 1; i < space->size(); ++i) {
      long double scale = 1.0L;
      for (int e : space->exponents(i))
        for (int k = 2; k <= e; ++k) scale *= k;
      push(i, static_cast<double>(psi_jet[i] * scale));
    }
  } else {
    rep.method = "finite-difference";
    auto f = [&](const std::vector<double>& x) {
      Vec eta = dgp.eta0, lam = dgp.lambda0;
      for (int v = 0; v < d; ++v) eta[v] += x[v];
      for (int v = d; v < nv; ++v) lam[v - d] += x[v];
      return population_moment_factorized(psi, dgp, dgp.theta0, eta, lam);
    };
    rep.value_at_truth = f(std::vector<double>(nv, 0.0));
    rep.entries = richardson_derivatives(f, d, nv, rep.check_order, opt.steps);
  }
  finalize(rep, psi.q());
  return rep;
}

OrthoReport orthogonality_check(const ModelSpec& model, const DiscreteDGP& dgp, int q, int check_order) {
  OrthoOptions opt;
  opt.check_order = check_order;
  return orthogonality_check(assemble_psi(q, model), dgp, opt);
}

nlohmann::json OrthoReport::to_json() const {
  nlohmann::json j;
  j["model"] = model;
  j["q"] = q;
  j["check_order"] = check_order;
  j["method"] = method;
  j["threshold"] = threshold;
  j["value_at_truth"] = value_at_truth;
  j["max_abs_by_order"] = nlohmann::json::array();
  for (int o = 1; o < static_cast<int>(max_abs_by_order.size()); ++o)
    j["max_abs_by_order"].push_back({{"order", o}, {"max_abs", max_abs_by_order[o]}});
  j["max_abs_upto_q"] = max_abs_upto_q;
  j["first_nonvanishing_order"] = first_nonvanishing_order;
  j["passed"] = passed;
  auto& arr = j["derivatives"] = nlohmann::json::array();
  for (auto& e : entries) arr.push_back({{"alpha", e.alpha}, {"beta", e.beta}, {"order", e.order}, {"value", e.value}});
  return j;
}

BigInt composition_sum_oracle(const std::vector<int>& c, int q) {
  int r = static_cast<int>(c.size());
  BigInt S = 0;
  std::vector<int> k(r);
  for (int K = r; K <= q; ++K) {
    BigInt inner = 0;
    std::function<void(int, int)> rec = [&](int s, int left) {
      if (s == r) {
        if (left != 0) return;
        BigInt prod = 1;
        for (int t = 0; t < r; ++t) prod *= binomial(k[t], c[t]) * ((c[t] % 2) ? -1 : 1);
        inner += prod;
        return;
      }
      for (int v = 1; v <= left - (r - s - 1); ++v) {
        k[s] = v;
        rec(s + 1, left - v);
      }
    };
    rec(0, K);
    S += binomial(q, K) * ((K % 2) ? -1 : 1) * inner;
  }
  return S;
}

std::optional<BigInt> composition_sum_claim(const std::vector<int>& c, int q) {
  int r = static_cast<int>(c.size());
  if (r == 0) return BigInt(1);
  int sum = 0;
  bool any_positive = false;
  for (int x : c) {
    sum += x;
    any_positive |= x >= 1;
  }
  if (any_positive && sum + r <= q) return BigInt(0);
  if (!any_positive && r <= q) return BigInt(r % 2 ? -1 : 1);
  return std::nullopt;
}

std::pair<BigInt, BigInt> hockey_stick_oracle(const std::vector<int>& a, int M) {
  int n = static_cast<int>(a.size());
  if (n < 1 || M < 0) throw std::invalid_argument("hockey-stick needs n >= 1 and M >= 0");
  if (binomial(M + n, n) > 10000000) throw std::length_error("hockey-stick brute force exceeds its bound");
  BigInt brute = 0;
  std::vector<int> x(n, 0);
  std::function<void(int, int)> rec = [&](int i, int left) {
    if (i == n) {
      BigInt prod = 1;
      for (int t = 0; t < n; ++t) prod *= binomial(x[t] + a[t], a[t]);
      brute += prod;
      return;
    }
    for (int v = 0; v <= left; ++v) {
      x[i] = v;
      rec(i + 1, left - v);
    }
  };
  rec(0, M);
  int sa = 0;
  for (int v : a) sa += v;
  return {brute, binomial(M + n + sa, n + sa)};
}

LemmaReport lemma_suite(int cases, std::uint64_t seed) {
  if (cases < 0) throw std::invalid_argument("number of cases must be nonnegative");
  LemmaReport rep;
  rep.cases = cases;
  rep.seed = seed;
  Stream rng(seed, {0x4c454d});
  for (int i = 0; i < cases; ++i) {
    std::vector<int> c;
    int q = 0;
    if (i % 2 == 0) {
      int r = 1 + static_cast<int>(rng.below(3));
      c.resize(r);
      int sum = 0;
      for (auto& x : c) sum += (x = static_cast<int>(rng.below(3)));
      if (sum == 0) sum += (c[rng.below(r)] = 1);
      q = sum + r + static_cast<int>(rng.below(3));
    } else {
      c.assign(1 + rng.below(4), 0);
      q = static_cast<int>(c.size() + rng.below(5));
    }
    auto claim = composition_sum_claim(c, q);
    if (!claim || composition_sum_oracle(c, q) != *claim) ++rep.composition_failures;
    else if (*claim == 0) ++rep.composition_zero;
    else ++rep.composition_sign;

    std::vector<int> a(1 + rng.below(4));
    for (auto& x : a) x = static_cast<int>(rng.below(4));
    int M = static_cast<int>(rng.below(13));
    auto [brute, closed] = hockey_stick_oracle(a, M);
    ++rep.hockey_checked;
    if (brute != closed) ++rep.hockey_failures;
  }
  rep.passed = rep.composition_failures == 0 && rep.hockey_failures == 0;
  return rep;
}

nlohmann::json LemmaReport::to_json() const {
  return {{"cases", cases},
          {"seed", seed},
          {"composition_sum", {{"zero_claims", composition_zero},
                               {"sign_claims", composition_sign},
                               {"failures", composition_failures}}},
          {"hockey_stick", {{"checked", hockey_checked}, {"failures", hockey_failures}}},
          {"passed", passed}};
}

}  // namespace orthomom
