#include "cyclelab/poly2.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cyclelab {

namespace {

// Row k holds C(k, 0..k) as exact doubles (exact up to k = 56).
const std::vector<std::vector<double>>& binomials(int n) {
  static thread_local std::vector<std::vector<double>> table;
  while (static_cast<int>(table.size()) <= n) {
    const auto k = table.size();
    std::vector<double> drow(k + 1, 1.0);
    for (std::size_t j = 1; j < k; ++j) {
      drow[j] = table[k - 1][j - 1] + table[k - 1][j];
    }
    table.push_back(std::move(drow));
  }
  return table;
}

}  // namespace

Poly2::Poly2(Terms terms) {
  for (const auto& [key, c] : terms) {
    if (c != 0.0) terms_.emplace(key, c);
  }
}

Poly2 Poly2::constant(double c) { return monomial(0, 0, c); }

Poly2 Poly2::monomial(int i, int j, double c) {
  Poly2 p;
  p.add_term(i, j, c);
  return p;
}

double Poly2::coeff(int i, int j) const {
  auto it = terms_.find({i, j});
  return it == terms_.end() ? 0.0 : it->second;
}

void Poly2::add_term(int i, int j, double c) {
  if (c == 0.0) return;
  auto [it, inserted] = terms_.try_emplace({i, j}, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0.0) terms_.erase(it);
  }
}

void Poly2::set_coeff(int i, int j, double c) {
  if (c == 0.0) {
    terms_.erase({i, j});
  } else {
    terms_[{i, j}] = c;
  }
}

int Poly2::degree() const {
  int d = -1;
  for (const auto& [key, c] : terms_) d = std::max(d, key.first + key.second);
  return d;
}

double Poly2::operator()(double x, double y) const {
  if (terms_.empty()) return 0.0;
  int max_j = 0;
  for (const auto& [key, c] : terms_) max_j = std::max(max_j, key.second);
  // Collect each y-row's coefficients (ascending i), then Horner both ways.
  std::vector<std::vector<std::pair<int, double>>> rows(max_j + 1);
  for (const auto& [key, c] : terms_) rows[key.second].emplace_back(key.first, c);
  double acc = 0.0;
  for (int j = max_j; j >= 0; --j) {
    double row = 0.0;
    const auto& r = rows[j];
    if (!r.empty()) {
      int i = r.back().first;
      std::size_t k = r.size();
      for (; i >= 0; --i) {
        double c = 0.0;
        if (k > 0 && r[k - 1].first == i) c = r[--k].second;
        row = row * x + c;
      }
    }
    acc = acc * y + row;
  }
  return acc;
}

Poly2 Poly2::homogeneous_part(int d) const {
  Poly2 out;
  for (const auto& [key, c] : terms_) {
    if (key.first + key.second == d) out.terms_.emplace(key, c);
  }
  return out;
}

Poly2 Poly2::dx() const {
  Poly2 out;
  for (const auto& [key, c] : terms_) {
    if (key.first > 0) out.add_term(key.first - 1, key.second, key.first * c);
  }
  return out;
}

Poly2 Poly2::dy() const {
  Poly2 out;
  for (const auto& [key, c] : terms_) {
    if (key.second > 0) out.add_term(key.first, key.second - 1, key.second * c);
  }
  return out;
}

Poly2 operator+(const Poly2& a, const Poly2& b) {
  Poly2 out = a;
  for (const auto& [key, c] : b.terms_) out.add_term(key.first, key.second, c);
  return out;
}

Poly2 operator-(const Poly2& a) {
  Poly2 out;
  for (const auto& [key, c] : a.terms_) out.terms_.emplace(key, -c);
  return out;
}

Poly2 operator-(const Poly2& a, const Poly2& b) { return a + (-b); }

Poly2 operator*(const Poly2& a, const Poly2& b) {
  Poly2 out;
  for (const auto& [ka, ca] : a.terms_) {
    for (const auto& [kb, cb] : b.terms_) {
      out.add_term(ka.first + kb.first, ka.second + kb.second, ca * cb);
    }
  }
  return out;
}

Poly2 operator*(double s, const Poly2& a) {
  Poly2 out;
  if (s == 0.0) return out;
  for (const auto& [key, c] : a.terms_) out.add_term(key.first, key.second, s * c);
  return out;
}

Poly2 Poly2::pow(int k) const {
  Poly2 out = constant(1.0);
  for (int i = 0; i < k; ++i) out = out * *this;
  return out;
}

std::string Poly2::to_string() const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  os.precision(17);
  bool first = true;
  for (auto it = terms_.rbegin(); it != terms_.rend(); ++it) {
    const auto& [key, c] = *it;
    if (!first) os << (c < 0 ? " - " : " + ");
    else if (c < 0) os << "-";
    first = false;
    const double m = c < 0 ? -c : c;
    const bool bare = key.first + key.second > 0;
    if (!bare || m != 1.0) os << m;
    if (key.first > 0) os << "x" << (key.first > 1 ? "^" + std::to_string(key.first) : "");
    if (key.second > 0) os << "y" << (key.second > 1 ? "^" + std::to_string(key.second) : "");
  }
  return os.str();
}

Poly2 translate(const Poly2& f, double px, double py) {
  const int d = std::max(f.degree(), 0);
  const auto& binom = binomials(d);
  Poly2 out;
  for (const auto& [key, c] : f.terms()) {
    const auto [i, j] = key;
    for (int k = 0; k <= i; ++k) {
      const double xi = binom[i][k] * std::pow(px, i - k);
      if (xi == 0.0) continue;
      for (int l = 0; l <= j; ++l) {
        const double yl = binom[j][l] * std::pow(py, j - l);
        out.add_term(k, l, c * xi * yl);
      }
    }
  }
  return out;
}

Poly2 substitute(const Poly2& f, const Poly2& xs, const Poly2& ys) {
  int max_i = 0;
  int max_j = 0;
  for (const auto& [key, c] : f.terms()) {
    max_i = std::max(max_i, key.first);
    max_j = std::max(max_j, key.second);
  }
  std::vector<Poly2> xp{Poly2::constant(1.0)};
  std::vector<Poly2> yp{Poly2::constant(1.0)};
  for (int i = 1; i <= max_i; ++i) xp.push_back(xp.back() * xs);
  for (int j = 1; j <= max_j; ++j) yp.push_back(yp.back() * ys);
  Poly2 out;
  for (const auto& [key, c] : f.terms()) {
    out = out + c * (xp[key.first] * yp[key.second]);
  }
  return out;
}

CompiledPoly::CompiledPoly(const Poly2& p) {
  int max_j = -1;
  for (const auto& [key, c] : p.terms()) max_j = std::max(max_j, key.second);
  rows_.assign(max_j + 1, {});
  for (const auto& [key, c] : p.terms()) {
    auto& row = rows_[key.second];
    if (static_cast<int>(row.size()) <= key.first) row.resize(key.first + 1, 0.0);
    row[key.first] = c;
  }
}

double CompiledPoly::operator()(double x, double y) const {
  double acc = 0.0;
  for (auto j = rows_.size(); j-- > 0;) {
    const auto& row = rows_[j];
    double r = 0.0;
    for (auto i = row.size(); i-- > 0;) r = r * x + row[i];
    acc = acc * y + r;
  }
  return acc;
}

}  // namespace cyclelab
