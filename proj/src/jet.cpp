#include "orthomom/jet.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace orthomom {

JetSpace::JetSpace(int nvars, int order) : nvars_(nvars), order_(order) {
  if (nvars < 0 || order < 0) throw std::invalid_argument("bad jet space");
  // Degree-major, then lexicographically descending exponents.
  for (int deg = 0; deg <= order; ++deg) {
    std::vector<int> e(nvars, 0);
    auto rec = [&](auto&& self, int var, int left) -> void {
      if (var == nvars - 1 || nvars == 0) {
        if (nvars > 0) e[var] = left;
        if (nvars > 0 || left == 0) {
          monomials_.push_back(e);
          degrees_.push_back(deg);
        }
        return;
      }
      for (int k = left; k >= 0; --k) {
        e[var] = k;
        self(self, var + 1, left - k);
      }
      e[var] = 0;
    };
    rec(rec, 0, deg);
  }
  std::map<std::vector<int>, std::uint32_t> lookup;
  for (std::size_t i = 0; i < monomials_.size(); ++i) lookup[monomials_[i]] = static_cast<std::uint32_t>(i);
  for (std::size_t a = 0; a < monomials_.size(); ++a) {
    for (std::size_t b = 0; b < monomials_.size(); ++b) {
      if (degrees_[a] + degrees_[b] > order) continue;
      std::vector<int> s(nvars);
      for (int v = 0; v < nvars; ++v) s[v] = monomials_[a][v] + monomials_[b][v];
      products_.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), lookup.at(s)});
    }
  }
}

long JetSpace::index_of(const std::vector<int>& exps) const {
  int deg = 0;
  for (int e : exps) deg += e;
  if (deg > order_) return -1;
  auto it = std::find(monomials_.begin(), monomials_.end(), exps);
  return it == monomials_.end() ? -1 : it - monomials_.begin();
}

Jet::Jet(std::shared_ptr<const JetSpace> space, long double value) : space_(std::move(space)) {
  c_.assign(space_->size(), 0.0L);
  c_[0] = value;
}

Jet Jet::variable(std::shared_ptr<const JetSpace> space, int var, long double value) {
  Jet j(space, value);
  if (space->order() >= 1) {
    std::vector<int> e(space->nvars(), 0);
    e[var] = 1;
    j.c_[space->index_of(e)] = 1.0L;
  }
  return j;
}

Jet& Jet::operator+=(const Jet& o) {
  for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
  return *this;
}

Jet& Jet::operator-=(const Jet& o) {
  for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
  return *this;
}

Jet& Jet::operator*=(long double s) {
  for (auto& x : c_) x *= s;
  return *this;
}

void Jet::add_product(const Jet& a, const Jet& b) {
  for (const auto& p : space_->products()) c_[p.out] += a.c_[p.a] * b.c_[p.b];
}

void Jet::add_scaled(const Jet& a, long double s) {
  for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += s * a.c_[i];
}

Jet operator*(const Jet& a, const Jet& b) {
  Jet out(a.space_, 0.0L);
  out.add_product(a, b);
  return out;
}

}  // namespace orthomom
