#include "orthomom/model.hpp"

#include <cmath>
#include <stdexcept>

namespace orthomom {

LambdaMap LambdaMap::full(int d_eta, int d_g) {
  LambdaMap m;
  m.kind_ = Kind::full;
  m.d_eta_ = d_eta;
  m.d_g_ = d_g;
  return m;
}

LambdaMap LambdaMap::scalar(int d_eta) {
  LambdaMap m;
  m.kind_ = Kind::scalar;
  m.d_eta_ = d_eta;
  m.d_g_ = d_eta;
  return m;
}

LambdaMap LambdaMap::fixed(Mat value) {
  LambdaMap m;
  m.kind_ = Kind::fixed;
  m.d_eta_ = static_cast<int>(value.rows());
  m.d_g_ = static_cast<int>(value.cols());
  m.value_ = std::move(value);
  return m;
}

LambdaMap LambdaMap::weighted_left_inverse(int d_eta, Mat omega) {
  if (omega.rows() != omega.cols()) throw std::invalid_argument("omega must be square");
  LambdaMap m;
  m.kind_ = Kind::weighted_left_inverse;
  m.d_eta_ = d_eta;
  m.d_g_ = static_cast<int>(omega.rows());
  m.weight_ = omega.inverse();
  return m;
}

int LambdaMap::d_lambda() const {
  switch (kind_) {
    case Kind::full:
    case Kind::weighted_left_inverse:
      return d_eta_ * d_g_;
    case Kind::scalar:
      return 1;
    case Kind::fixed:
      return 0;
  }
  return 0;
}

Mat LambdaMap::operator()(std::span<const double> lambda) const {
  if (static_cast<int>(lambda.size()) != d_lambda()) throw std::invalid_argument("lambda has wrong length");
  switch (kind_) {
    case Kind::full:
      return Eigen::Map<const Mat>(lambda.data(), d_eta_, d_g_);
    case Kind::scalar:
      return lambda[0] * Mat::Identity(d_eta_, d_eta_);
    case Kind::fixed:
      return value_;
    case Kind::weighted_left_inverse: {
      Mat J = Eigen::Map<const Mat>(lambda.data(), d_g_, d_eta_);
      Mat JW = J.transpose() * weight_;
      return (JW * J).inverse() * JW;
    }
  }
  return {};
}

Vec LambdaMap::from_jacobian(const Mat& J) const {
  switch (kind_) {
    case Kind::full: {
      Mat inv = J.rows() == J.cols() ? Mat(J.inverse())
                                     : Mat((J.transpose() * J).inverse() * J.transpose());
      return Eigen::Map<const Vec>(inv.data(), inv.size());
    }
    case Kind::scalar:
      return Vec::Constant(1, d_eta_ / J.trace());
    case Kind::fixed:
      return Vec(0);
    case Kind::weighted_left_inverse:
      return Eigen::Map<const Vec>(J.data(), J.size());
  }
  return {};
}

Mat LambdaMap::offset() const {
  if (kind_ == Kind::fixed) return value_;
  return Mat::Zero(d_eta_, d_g_);
}

Mat LambdaMap::basis(int l) const {
  Mat b = Mat::Zero(d_eta_, d_g_);
  switch (kind_) {
    case Kind::full:
      b(l % d_eta_, l / d_eta_) = 1.0;
      break;
    case Kind::scalar:
      b.setIdentity();
      break;
    default:
      throw std::logic_error("lambda map has no affine basis");
  }
  return b;
}

void ModelSpec::validate() const {
  if (d_eta < 1 || d_g < d_eta || d_theta < 1 || obs_dim < 1 || block_size < 1)
    throw std::invalid_argument("model " + name + ": invalid dimensions");
  if (!g_deriv || !m_deriv) throw std::invalid_argument("model " + name + ": missing derivative suppliers");
  if (lambda_map.d_eta() != d_eta || lambda_map.d_g() != d_g)
    throw std::invalid_argument("model " + name + ": lambda map shape mismatch");
}

DerivativeTensor fd_derivative(const ModelSpec& model, Which which, std::span<const double> obs,
                               const Vec& theta, const Vec& eta, int order, const FdOptions& opt) {
  if (order < 1) throw std::invalid_argument("finite differences need order >= 1");
  int base = opt.base_order >= 0 ? std::min(opt.base_order, order - 1)
                                 : std::min(model.max_order, order - 1);
  int levels = order - base;
  if (levels > opt.max_depth) throw std::invalid_argument("finite-difference depth exceeded");
  const DerivFn& fn = which == Which::g ? model.g_deriv : model.m_deriv;
  int out_dim = which == Which::g ? model.d_g : 1;
  int d = model.d_eta;
  double h = std::pow(std::numeric_limits<double>::epsilon(), 1.0 / (levels + 2)) *
             std::max(1.0, eta.norm());

  auto rec = [&](auto&& self, int lvl, const Vec& e) -> DerivativeTensor {
    if (lvl == 0) return fn(obs, theta, e, base);
    DerivativeTensor out(out_dim, base + lvl, d);
    std::size_t s_in = out.slots() / d;
    for (int j = 0; j < d; ++j) {
      Vec ep = e, em = e;
      ep[j] += h;
      em[j] -= h;
      double step = ep[j] - em[j];
      DerivativeTensor tp = self(self, lvl - 1, ep);
      DerivativeTensor tm = self(self, lvl - 1, em);
      for (int k = 0; k < out_dim; ++k)
        for (std::size_t i = 0; i < s_in; ++i)
          out.flat(k * out.slots() + i * d + j) = (tp.flat(k * s_in + i) - tm.flat(k * s_in + i)) / step;
    }
    return out;
  };
  DerivativeTensor t = rec(rec, levels, eta);
  t.symmetrize();
  return t;
}

DerivativeTensor derivative(const ModelSpec& model, Which which, std::span<const double> obs,
                            const Vec& theta, const Vec& eta, int order) {
  if (order <= model.max_order)
    return which == Which::g ? model.g_deriv(obs, theta, eta, order) : model.m_deriv(obs, theta, eta, order);
  return fd_derivative(model, which, obs, theta, eta, order);
}

ScalarFunction scalar_identity() {
  return {"identity", [](double u, int r) { return r == 0 ? u : (r == 1 ? 1.0 : 0.0); }};
}

ScalarFunction scalar_square() {
  return {"square", [](double u, int r) { return r == 0 ? u * u : (r == 1 ? 2 * u : (r == 2 ? 2.0 : 0.0)); }};
}

ScalarFunction scalar_cube() {
  return {"cube", [](double u, int r) {
            switch (r) {
              case 0: return u * u * u;
              case 1: return 3 * u * u;
              case 2: return 6 * u;
              case 3: return 6.0;
              default: return 0.0;
            }
          }};
}

ScalarFunction scalar_exp(double scale) {
  return {"exp", [scale](double u, int r) { return std::pow(scale, r) * std::exp(scale * u); }};
}

ScalarFunction scalar_logistic() {
  return {"logistic", [](double u, int r) {
            // d^r/du^r sigma = P_r(sigma) with P_{r+1}(s) = P_r'(s) s (1 - s).
            std::vector<double> p = {0.0, 1.0};
            for (int k = 0; k < r; ++k) {
              std::vector<double> next(p.size() + 1, 0.0);
              for (std::size_t i = 1; i < p.size(); ++i) {
                double c = i * p[i];
                next[i] += c;
                next[i + 1] -= c;
              }
              p = std::move(next);
            }
            double s = 1.0 / (1.0 + std::exp(-u));
            double v = 0.0;
            for (std::size_t i = p.size(); i-- > 0;) v = v * s + p[i];
            return v;
          }};
}

ScalarFunction scalar_function(const std::string& name) {
  if (name == "identity") return scalar_identity();
  if (name == "square") return scalar_square();
  if (name == "cube") return scalar_cube();
  if (name == "exp") return scalar_exp();
  if (name == "logistic") return scalar_logistic();
  throw std::invalid_argument("unknown scalar function: " + name);
}

ModelSpec builtin_linear_iv(int k) {
  ModelSpec s;
  s.name = "linear-iv";
  s.d_eta = k;
  s.d_g = k;
  s.obs_dim = 3 + k;
  s.g_affine = true;
  s.lambda_map = LambdaMap::full(k, k);
  auto resid = [k](std::span<const double> w, const Vec& th, const Vec& eta) {
    double r = w[0] - w[1] * th[0];
    for (int j = 0; j < k; ++j) r -= w[3 + j] * eta[j];
    return r;
  };
  s.g_deriv = [k, resid](std::span<const double> w, const Vec& th, const Vec& eta, int p) {
    DerivativeTensor t(k, p, k);
    if (p == 0) {
      double r = resid(w, th, eta);
      for (int a = 0; a < k; ++a) t.flat(a) = w[3 + a] * r;
    } else if (p == 1) {
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) t.flat(a * k + b) = -w[3 + a] * w[3 + b];
    }
    return t;
  };
  s.m_deriv = [k, resid](std::span<const double> w, const Vec& th, const Vec& eta, int p) {
    DerivativeTensor t(1, p, k);
    if (p == 0) {
      t.flat(0) = w[2] * resid(w, th, eta);
    } else if (p == 1) {
      for (int b = 0; b < k; ++b) t.flat(b) = -w[2] * w[3 + b];
    }
    return t;
  };
  return s;
}

ModelSpec builtin_generated_regressor(ScalarFunction f, int k) {
  ModelSpec s;
  s.name = "generated-regressor";
  s.d_eta = k;
  s.d_g = k;
  s.obs_dim = 1 + k;
  s.g_affine = true;
  s.m_linear_shift = true;
  s.max_order = f.max_order;
  s.lambda_map = LambdaMap::full(k, k);
  s.g_deriv = [k](std::span<const double> w, const Vec&, const Vec& eta, int p) {
    DerivativeTensor t(k, p, k);
    if (p == 0) {
      double r = w[0];
      for (int j = 0; j < k; ++j) r -= w[1 + j] * eta[j];
      for (int a = 0; a < k; ++a) t.flat(a) = w[1 + a] * r;
    } else if (p == 1) {
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) t.flat(a * k + b) = -w[1 + a] * w[1 + b];
    }
    return t;
  };
  s.m_deriv = [k, f](std::span<const double> w, const Vec& th, const Vec& eta, int p) {
    double u = 0;
    for (int j = 0; j < k; ++j) u += w[1 + j] * eta[j];
    double fr = f.eval(u, p);
    DerivativeTensor t(1, p, k);
    for_each_index(p, k, [&](std::span<const int> idx) {
      double v = fr;
      for (int j : idx) v *= w[1 + j];
      t.at(0, idx) = v;
    });
    if (p == 0) t.flat(0) -= th[0];
    return t;
  };
  return s;
}

ModelSpec builtin_heterocoef(int d, HeterocoefTarget target) {
  if (d < 1) throw std::invalid_argument("heterocoef needs d_eta >= 1");
  if (target.kind != HeterocoefTarget::Kind::quadratic && (target.component < 0 || target.component >= d))
    throw std::invalid_argument("heterocoef target component out of range");
  if (target.kind == HeterocoefTarget::Kind::quadratic && (target.D.rows() != d || target.D.cols() != d))
    throw std::invalid_argument("heterocoef quadratic target must be d x d");
  ModelSpec s;
  s.name = "heterocoef";
  s.d_eta = d;
  s.d_g = d;
  s.obs_dim = 1 + d;
  s.g_affine = true;
  s.m_linear_shift = true;
  s.m_uses_observation = false;
  s.lambda_map = LambdaMap::full(d, d);
  s.g_deriv = [d](std::span<const double> w, const Vec&, const Vec& eta, int p) {
    DerivativeTensor t(d, p, d);
    if (p == 0) {
      double r = w[0];
      for (int j = 0; j < d; ++j) r -= w[1 + j] * eta[j];
      for (int a = 0; a < d; ++a) t.flat(a) = w[1 + a] * r;
    } else if (p == 1) {
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) t.flat(a * d + b) = -w[1 + a] * w[1 + b];
    }
    return t;
  };
  Mat D;
  switch (target.kind) {
    case HeterocoefTarget::Kind::mean:
    case HeterocoefTarget::Kind::second_moment:
      D = Mat::Zero(d, d);
      D(target.component, target.component) = 1.0;
      break;
    case HeterocoefTarget::Kind::quadratic:
      D = target.D;
      break;
  }
  bool linear = target.kind == HeterocoefTarget::Kind::mean;
  int j0 = target.component;
  Mat S = D + D.transpose();
  s.m_deriv = [d, linear, j0, D, S](std::span<const double>, const Vec& th, const Vec& eta, int p) {
    DerivativeTensor t(1, p, d);
    if (linear) {
      if (p == 0) t.flat(0) = eta[j0] - th[0];
      if (p == 1) t.flat(j0) = 1.0;
    } else {
      if (p == 0) t.flat(0) = eta.dot(D * eta) - th[0];
      if (p == 1) {
        Vec gr = S * eta;
        for (int a = 0; a < d; ++a) t.flat(a) = gr[a];
      }
      if (p == 2)
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) t.flat(a * d + b) = S(a, b);
    }
    return t;
  };
  return s;
}

ModelSpec builtin_neyman_scott(ScalarFunction f) {
  ModelSpec s;
  s.name = "neyman-scott";
  s.d_eta = 1;
  s.d_g = 1;
  s.obs_dim = 1;
  s.g_affine = true;
  s.m_linear_shift = true;
  s.m_uses_observation = false;
  s.max_order = f.max_order;
  s.lambda_map = LambdaMap::fixed(Mat::Constant(1, 1, -1.0));
  s.g_deriv = [](std::span<const double> w, const Vec&, const Vec& eta, int p) {
    DerivativeTensor t(1, p, 1);
    if (p == 0) t.flat(0) = w[0] - eta[0];
    if (p == 1) t.flat(0) = -1.0;
    return t;
  };
  s.m_deriv = [f](std::span<const double>, const Vec& th, const Vec& eta, int p) {
    DerivativeTensor t(1, p, 1);
    t.flat(0) = f.eval(eta[0], p) - (p == 0 ? th[0] : 0.0);
    return t;
  };
  return s;
}

ModelSpec builtin_model(const std::string& name, const BuiltinOptions& opt) {
  if (name == "linear-iv") return builtin_linear_iv(opt.dim);
  if (name == "generated-regressor") return builtin_generated_regressor(scalar_function(opt.function), opt.dim);
  if (name == "heterocoef") {
    if (opt.target == "mean") return builtin_heterocoef(opt.dim, HeterocoefTarget::mean(opt.component));
    if (opt.target == "second-moment")
      return builtin_heterocoef(opt.dim, HeterocoefTarget::second_moment(opt.component));
    throw std::invalid_argument("unknown heterocoef target: " + opt.target);
  }
  if (name == "neyman-scott") return builtin_neyman_scott(scalar_function(opt.function));
  throw std::invalid_argument("unknown model: " + name);
}

}  // namespace orthomom
