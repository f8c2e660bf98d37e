#pragma once

// Polynomials whose coefficients are affine in scalar decision variables.
// These carry unknown certificate/multiplier coefficients through composition
// and expectation so the SOS compiler can emit linear SDP constraints.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "reachcert/poly.hpp"

namespace reachcert {

/// Column index into an SdpProblem's decision-variable space.
using DecisionId = std::int64_t;

/// constant + sum coeff_j * decision_j. Affine by construction: there is no
/// AffineForm*AffineForm operation anywhere in the API.
class AffineForm {
 public:
  AffineForm() = default;
  /* implicit */ AffineForm(double c) : constant_(c) {}
  static AffineForm decision(DecisionId id, double coeff = 1.0) {
    AffineForm f;
    if (std::abs(coeff) >= kCoeffEps) f.linear_.emplace_back(id, coeff);
    return f;
  }

  double constant() const { return constant_; }
  const std::vector<std::pair<DecisionId, double>>& linear() const { return linear_; }
  bool is_constant() const { return linear_.empty(); }
  bool is_zero() const { return linear_.empty() && std::abs(constant_) < kCoeffEps; }

  AffineForm& operator+=(const AffineForm& o) {
    constant_ += o.constant_;
    if (!o.linear_.empty()) {
      std::vector<std::pair<DecisionId, double>> merged;
      merged.reserve(linear_.size() + o.linear_.size());
      auto a = linear_.begin();
      auto b = o.linear_.begin();
      while (a != linear_.end() || b != o.linear_.end()) {
        if (b == o.linear_.end() || (a != linear_.end() && a->first < b->first))
          merged.push_back(*a++);
        else if (a == linear_.end() || b->first < a->first)
          merged.push_back(*b++);
        else {
          const double c = a->second + b->second;
          if (std::abs(c) >= kCoeffEps) merged.emplace_back(a->first, c);
          ++a, ++b;
        }
      }
      linear_ = std::move(merged);
    }
    return *this;
  }

  AffineForm operator+(const AffineForm& o) const {
    AffineForm r = *this;
    r += o;
    return r;
  }
  AffineForm operator-(const AffineForm& o) const { return *this + (o * -1.0); }
  AffineForm operator*(double s) const {
    AffineForm r;
    if (std::abs(s) < kCoeffEps) return r;
    r.constant_ = constant_ * s;
    r.linear_.reserve(linear_.size());
    for (const auto& [id, c] : linear_) {
      const double v = c * s;
      if (std::abs(v) >= kCoeffEps) r.linear_.emplace_back(id, v);
    }
    return r;
  }

  /// Numeric value once every referenced decision has a value.
  double value(const std::vector<double>& decision_values) const {
    double v = constant_;
    for (const auto& [id, c] : linear_) {
      if (id < 0 || static_cast<std::size_t>(id) >= decision_values.size())
        throw std::out_of_range("AffineForm::value: decision id out of range");
      v += c * decision_values[static_cast<std::size_t>(id)];
    }
    return v;
  }

 private:
  double constant_ = 0.0;
  std::vector<std::pair<DecisionId, double>> linear_;  // sorted by id
};

inline AffineForm operator*(double s, const AffineForm& f) { return f * s; }

/// Polynomial with AffineForm coefficients. Substituting numeric values for
/// all decision scalars yields a Polynomial.
class ParametricPolynomial {
 public:
  using TermMap = std::map<Monomial, AffineForm, GrlexLess>;

  ParametricPolynomial() = default;
  /* implicit */ ParametricPolynomial(const Polynomial& p) {
    for (const auto& [m, c] : p.terms()) terms_[m] = AffineForm(c);
  }
  /* implicit */ ParametricPolynomial(double c) : ParametricPolynomial(Polynomial(c)) {}
  /// Constant-monomial polynomial whose coefficient is an affine form.
  /* implicit */ ParametricPolynomial(const AffineForm& f) {
    if (!f.is_zero()) terms_[Monomial::one()] = f;
  }

  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  std::uint32_t degree() const {
    std::uint32_t d = 0;
    for (const auto& [m, c] : terms_) d = std::max(d, m.degree());
    return d;
  }

  std::vector<VarId> variables() const {
    std::vector<VarId> vars;
    for (const auto& [m, c] : terms_)
      for (const auto& [v, e] : m.factors()) vars.push_back(v);
    std::sort(vars.begin(), vars.end());
    vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
    return vars;
  }

  void add_term(const Monomial& m, const AffineForm& f) {
    auto it = terms_.find(m);
    if (it == terms_.end()) {
      if (!f.is_zero()) terms_[m] = f;
    } else {
      it->second += f;
      if (it->second.is_zero()) terms_.erase(it);
    }
  }

  ParametricPolynomial operator+(const ParametricPolynomial& o) const {
    ParametricPolynomial r = *this;
    for (const auto& [m, f] : o.terms_) r.add_term(m, f);
    return r;
  }
  ParametricPolynomial operator-(const ParametricPolynomial& o) const {
    return *this + (o * -1.0);
  }
  ParametricPolynomial operator*(double s) const {
    ParametricPolynomial r;
    for (const auto& [m, f] : terms_) {
      AffineForm g = f * s;
      if (!g.is_zero()) r.terms_[m] = g;
    }
    return r;
  }

  /// Product with a *numeric* polynomial (keeps coefficients affine).
  ParametricPolynomial operator*(const Polynomial& p) const {
    ParametricPolynomial r;
    for (const auto& [ma, f] : terms_)
      for (const auto& [mb, c] : p.terms()) r.add_term(ma.times(mb), f * c);
    return r;
  }

  /// Substitutes variables by numeric polynomials; affine structure is
  /// preserved because each term's coefficient multiplies a numeric expansion.
  ParametricPolynomial compose(const std::map<VarId, Polynomial>& substitution) const {
    ParametricPolynomial r;
    for (const auto& [m, f] : terms_) {
      Polynomial expansion = 1.0;
      for (const auto& [v, e] : m.factors()) {
        auto it = substitution.find(v);
        if (it == substitution.end())
          throw std::invalid_argument("compose: no substitution for variable " + var_name(v));
        expansion = expansion * it->second.pow(e);
      }
      for (const auto& [mm, c] : expansion.terms()) r.add_term(mm, f * c);
    }
    return r;
  }

  /// Instantiates all decision scalars.
  Polynomial substitute(const std::vector<double>& decision_values) const {
    Polynomial p;
    for (const auto& [m, f] : terms_) p.add_term(m, f.value(decision_values));
    return p;
  }

  /// Evaluates the variables at a numeric point, leaving the decision scalars
  /// symbolic: the result is affine in the decisions.
  AffineForm evaluate_at(const std::map<VarId, double>& point) const {
    AffineForm out;
    for (const auto& [m, f] : terms_) {
      double mono = 1.0;
      for (const auto& [v, e] : m.factors()) {
        auto it = point.find(v);
        if (it == point.end())
          throw std::invalid_argument("evaluate_at: no value for variable " + var_name(v));
        for (std::uint32_t k = 0; k < e; ++k) mono *= it->second;
      }
      out += f * mono;
    }
    return out;
  }

 private:
  TermMap terms_;
};

inline ParametricPolynomial operator*(const Polynomial& p, const ParametricPolynomial& q) {
  return q * p;
}

}  // namespace reachcert
