#pragma once

// Sparse multivariate polynomials over named variables (x1..xn, u1..um, w1..ww),
// with a fixed global graded-lexicographic monomial order so downstream Gram
// bases and SDP layouts are reproducible across runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace reachcert {

/// Coefficients with magnitude below this are pruned after arithmetic.
inline constexpr double kCoeffEps = 1e-14;

enum class VarKind : std::uint32_t { State = 0, Input = 1, Noise = 2 };

/// Variable id. Kind lives in the high bits so the natural integer order is
/// x1 < x2 < ... < u1 < ... < w1 < ...
using VarId = std::uint32_t;

inline VarId make_var(VarKind kind, std::uint32_t index1) {
  if (index1 == 0) throw std::invalid_argument("variable indices are 1-based");
  return (static_cast<std::uint32_t>(kind) << 24) | index1;
}

inline VarId state_var(std::uint32_t i) { return make_var(VarKind::State, i); }
inline VarId input_var(std::uint32_t i) { return make_var(VarKind::Input, i); }
inline VarId noise_var(std::uint32_t i) { return make_var(VarKind::Noise, i); }

inline VarKind var_kind(VarId v) { return static_cast<VarKind>(v >> 24); }
inline std::uint32_t var_index(VarId v) { return v & 0xffffff; }

inline std::string var_name(VarId v) {
  static const char* prefix[] = {"x", "u", "w"};
  return prefix[static_cast<std::uint32_t>(var_kind(v))] + std::to_string(var_index(v));
}

/// Parses "x3"/"u1"/"w2"; throws on anything else.
inline VarId parse_var(const std::string& name) {
  if (name.size() < 2) throw std::invalid_argument("bad variable name: '" + name + "'");
  VarKind kind;
  switch (name[0]) {
    case 'x': kind = VarKind::State; break;
    case 'u': kind = VarKind::Input; break;
    case 'w': kind = VarKind::Noise; break;
    default: throw std::invalid_argument("bad variable name: '" + name + "'");
  }
  std::uint32_t idx = 0;
  for (std::size_t i = 1; i < name.size(); ++i) {
    if (name[i] < '0' || name[i] > '9')
      throw std::invalid_argument("bad variable name: '" + name + "'");
    idx = idx * 10 + static_cast<std::uint32_t>(name[i] - '0');
  }
  return make_var(kind, idx);
}

/// Power product with positive exponents only (canonical form).
class Monomial {
 public:
  Monomial() = default;

  explicit Monomial(std::vector<std::pair<VarId, std::uint32_t>> factors) {
    std::sort(factors.begin(), factors.end());
    for (const auto& [v, e] : factors) {
      if (e == 0) continue;
      if (!factors_.empty() && factors_.back().first == v)
        factors_.back().second += e;
      else
        factors_.emplace_back(v, e);
    }
  }

  static Monomial one() { return Monomial(); }

  static Monomial var(VarId v, std::uint32_t e = 1) {
    Monomial m;
    if (e > 0) m.factors_.emplace_back(v, e);
    return m;
  }

  const std::vector<std::pair<VarId, std::uint32_t>>& factors() const { return factors_; }
  bool is_one() const { return factors_.empty(); }

  std::uint32_t degree() const {
    std::uint32_t d = 0;
    for (const auto& [v, e] : factors_) d += e;
    return d;
  }

  std::uint32_t degree_in(VarId v) const {
    for (const auto& [var, e] : factors_)
      if (var == v) return e;
    return 0;
  }

  Monomial times(const Monomial& o) const {
    Monomial r;
    auto a = factors_.begin(), b = o.factors_.begin();
    while (a != factors_.end() || b != o.factors_.end()) {
      if (b == o.factors_.end() || (a != factors_.end() && a->first < b->first))
        r.factors_.push_back(*a++);
      else if (a == factors_.end() || b->first < a->first)
        r.factors_.push_back(*b++);
      else {
        r.factors_.emplace_back(a->first, a->second + b->second);
        ++a, ++b;
      }
    }
    return r;
  }

  bool operator==(const Monomial& o) const { return factors_ == o.factors_; }
  bool operator!=(const Monomial& o) const { return !(*this == o); }

 private:
  std::vector<std::pair<VarId, std::uint32_t>> factors_;
};

/// Graded-lexicographic order: lower total degree first; within a degree,
/// higher power of the earliest variable first (1 < x1 < x2 < x1^2 < x1*x2 < x2^2).
struct GrlexLess {
  bool operator()(const Monomial& a, const Monomial& b) const {
    const std::uint32_t da = a.degree(), db = b.degree();
    if (da != db) return da < db;
    auto ia = a.factors().begin(), ib = b.factors().begin();
    while (ia != a.factors().end() && ib != b.factors().end()) {
      if (ia->first != ib->first) return ia->first < ib->first;
      if (ia->second != ib->second) return ia->second > ib->second;
      ++ia, ++ib;
    }
    return false;  // equal
  }
};

/// Point assignment for evaluation.
using VarValues = std::map<VarId, double>;

/// Sparse polynomial with real coefficients in canonical (pruned, ordered) form.
class Polynomial {
 public:
  using TermMap = std::map<Monomial, double, GrlexLess>;

  Polynomial() = default;
  /* implicit */ Polynomial(double c) {
    if (std::abs(c) >= kCoeffEps) terms_[Monomial::one()] = c;
  }
  static Polynomial var(VarId v) { return monomial(Monomial::var(v), 1.0); }

  static Polynomial monomial(const Monomial& m, double c) {
    Polynomial p;
    if (std::abs(c) >= kCoeffEps) p.terms_[m] = c;
    return p;
  }

  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  std::size_t term_count() const { return terms_.size(); }

  std::uint32_t degree() const {
    std::uint32_t d = 0;
    for (const auto& [m, c] : terms_) d = std::max(d, m.degree());
    return d;
  }

  double coeff(const Monomial& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? 0.0 : it->second;
  }

  std::vector<VarId> variables() const {
    std::vector<VarId> vars;
    for (const auto& [m, c] : terms_)
      for (const auto& [v, e] : m.factors()) vars.push_back(v);
    std::sort(vars.begin(), vars.end());
    vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
    return vars;
  }

  void add_term(const Monomial& m, double c) {
    auto it = terms_.find(m);
    if (it == terms_.end()) {
      if (std::abs(c) >= kCoeffEps) terms_[m] = c;
    } else {
      it->second += c;
      if (std::abs(it->second) < kCoeffEps) terms_.erase(it);
    }
  }

  Polynomial operator+(const Polynomial& o) const {
    Polynomial r = *this;
    for (const auto& [m, c] : o.terms_) r.add_term(m, c);
    return r;
  }
  Polynomial operator-(const Polynomial& o) const {
    Polynomial r = *this;
    for (const auto& [m, c] : o.terms_) r.add_term(m, -c);
    return r;
  }
  Polynomial operator-() const { return *this * -1.0; }

  Polynomial operator*(double s) const {
    Polynomial r;
    if (std::abs(s) < kCoeffEps) return r;
    for (const auto& [m, c] : terms_) {
      const double v = c * s;
      if (std::abs(v) >= kCoeffEps) r.terms_[m] = v;
    }
    return r;
  }

  Polynomial operator*(const Polynomial& o) const {
    Polynomial r;
    for (const auto& [ma, ca] : terms_)
      for (const auto& [mb, cb] : o.terms_) r.add_term(ma.times(mb), ca * cb);
    return r;
  }

  Polynomial pow(std::uint32_t e) const {
    Polynomial r = 1.0;
    Polynomial base = *this;
    while (e > 0) {
      if (e & 1u) r = r * base;
      e >>= 1u;
      if (e > 0) base = base * base;
    }
    return r;
  }

  /// Value at a point; every variable of the polynomial must be assigned.
  double evaluate(const VarValues& point) const {
    double total = 0.0;
    for (const auto& [m, c] : terms_) {
      double t = c;
      for (const auto& [v, e] : m.factors()) {
        auto it = point.find(v);
        if (it == point.end())
          throw std::invalid_argument("evaluate: no value for variable " + var_name(v));
        t *= std::pow(it->second, static_cast<int>(e));
      }
      total += t;
    }
    return total;
  }

  /// Substitutes every variable by its image polynomial, fully expanded.
  /// Every variable of *this must have an entry (identity images allowed).
  Polynomial compose(const std::map<VarId, Polynomial>& substitution) const {
    Polynomial r;
    for (const auto& [m, c] : terms_) {
      Polynomial t = c;
      for (const auto& [v, e] : m.factors()) {
        auto it = substitution.find(v);
        if (it == substitution.end())
          throw std::invalid_argument("compose: no substitution for variable " + var_name(v));
        t = t * it->second.pow(e);
      }
      r = r + t;
    }
    return r;
  }

  bool operator==(const Polynomial& o) const { return terms_ == o.terms_; }

 private:
  TermMap terms_;
};

inline Polynomial operator*(double s, const Polynomial& p) { return p * s; }
inline Polynomial operator+(double s, const Polynomial& p) { return Polynomial(s) + p; }
inline Polynomial operator-(double s, const Polynomial& p) { return Polynomial(s) - p; }

/// All monomials of total degree <= max_degree over `vars`, in graded-lex
/// order; the count is C(n + d, d).
inline std::vector<Monomial> monomial_basis(const std::vector<VarId>& vars,
                                            std::uint32_t max_degree) {
  std::vector<VarId> sorted = vars;
  std::sort(sorted.begin(), sorted.end());
  std::vector<Monomial> out;
  std::vector<std::uint32_t> expo(sorted.size(), 0);

  // Enumerates exponent vectors of total degree exactly d in lex order
  // (first variable's exponent descending), which is grlex within a degree.
  auto emit_degree = [&](auto&& self, std::size_t pos, std::uint32_t remaining) -> void {
    if (pos + 1 == sorted.size()) {
      expo[pos] = remaining;
      std::vector<std::pair<VarId, std::uint32_t>> f;
      for (std::size_t i = 0; i < sorted.size(); ++i)
        if (expo[i] > 0) f.emplace_back(sorted[i], expo[i]);
      out.push_back(Monomial(std::move(f)));
      return;
    }
    for (std::uint32_t e = remaining; e != static_cast<std::uint32_t>(-1); --e) {
      expo[pos] = e;
      self(self, pos + 1, remaining - e);
    }
  };

  if (sorted.empty()) {
    out.push_back(Monomial::one());
    return out;
  }
  for (std::uint32_t d = 0; d <= max_degree; ++d) emit_degree(emit_degree, 0, d);
  return out;
}

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// ---------------------------------------------------------------------------
// Text grammar: terms joined by '+'/'-'; term = coefficient '*' product of
// var^k. Print->parse round-trips to the identical polynomial.
// ---------------------------------------------------------------------------

inline std::string to_string(const Polynomial& p) {
  if (p.is_zero()) return "0";
  std::ostringstream os;
  // Highest-degree terms first reads naturally.
  std::vector<std::pair<Monomial, double>> terms(p.terms().begin(), p.terms().end());
  std::reverse(terms.begin(), terms.end());
  bool first = true;
  for (const auto& [m, c] : terms) {
    const double mag = std::abs(c);
    if (first) {
      if (c < 0) os << "-";
      first = false;
    } else {
      os << (c < 0 ? " - " : " + ");
    }
    const bool unit = std::abs(mag - 1.0) < 1e-15;
    if (!unit || m.is_one()) {
      std::ostringstream num;
      num.precision(17);
      num << mag;
      os << num.str();
      if (!m.is_one()) os << "*";
    }
    bool firstf = true;
    for (const auto& [v, e] : m.factors()) {
      if (!firstf) os << "*";
      firstf = false;
      os << var_name(v);
      if (e > 1) os << "^" << e;
    }
  }
  return os.str();
}

namespace detail {

struct PolyLexer {
  const std::string& s;
  std::size_t i = 0;

  void skip_ws() {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }
  bool eof() {
    skip_ws();
    return i >= s.size();
  }
  char peek() {
    skip_ws();
    return i < s.size() ? s[i] : '\0';
  }
  [[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument("polynomial parse error at position " + std::to_string(i) +
                                " in '" + s + "': " + msg);
  }
  double number() {
    skip_ws();
    std::size_t end = i;
    while (end < s.size() &&
           (std::isdigit(static_cast<unsigned char>(s[end])) || s[end] == '.' || s[end] == 'e' ||
            s[end] == 'E' || ((s[end] == '+' || s[end] == '-') && end > i &&
                              (s[end - 1] == 'e' || s[end - 1] == 'E'))))
      ++end;
    if (end == i) fail("expected a number");
    const std::string tok = s.substr(i, end - i);
    double v = 0;
    std::size_t used = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      fail("bad numeric literal '" + tok + "'");
    }
    if (used != tok.size()) fail("bad numeric literal '" + tok + "'");
    i = end;
    return v;
  }
  std::string varname() {
    skip_ws();
    std::size_t end = i;
    if (end < s.size() && (s[end] == 'x' || s[end] == 'u' || s[end] == 'w')) {
      ++end;
      while (end < s.size() && std::isdigit(static_cast<unsigned char>(s[end]))) ++end;
    }
    if (end == i || end == i + 1) fail("expected a variable like x1, u2, w1");
    std::string name = s.substr(i, end - i);
    i = end;
    return name;
  }
};

}  // namespace detail

inline Polynomial parse_polynomial(const std::string& text) {
  detail::PolyLexer lex{text};
  Polynomial result;
  bool first = true;
  while (!lex.eof()) {
    double sign = 1.0;
    char c = lex.peek();
    if (c == '+' || c == '-') {
      sign = (c == '-') ? -1.0 : 1.0;
      ++lex.i;
    } else if (!first) {
      lex.fail("expected '+' or '-' between terms");
    }
    if (lex.eof()) lex.fail("dangling sign");
    first = false;

    double coeff = 1.0;
    std::vector<std::pair<VarId, std::uint32_t>> factors;
    bool any = false;
    bool expect_factor = true;
    while (expect_factor) {
      char p = lex.peek();
      if (std::isdigit(static_cast<unsigned char>(p)) || p == '.') {
        coeff *= lex.number();
        any = true;
      } else if (p == 'x' || p == 'u' || p == 'w') {
        VarId v = parse_var(lex.varname());
        std::uint32_t e = 1;
        if (lex.peek() == '^') {
          ++lex.i;
          double ev = lex.number();
          if (ev < 0 || ev != std::floor(ev)) lex.fail("exponent must be a nonnegative integer");
          e = static_cast<std::uint32_t>(ev);
        }
        factors.emplace_back(v, e);
        any = true;
      } else {
        lex.fail("expected a coefficient or variable");
      }
      if (lex.peek() == '*') {
        ++lex.i;
      } else {
        expect_factor = false;
      }
    }
    if (!any) lex.fail("empty term");
    result.add_term(Monomial(std::move(factors)), sign * coeff);
  }
  if (first) return Polynomial();  // empty string = zero polynomial
  return result;
}

inline std::ostream& operator<<(std::ostream& os, const Polynomial& p) {
  return os << to_string(p);
}

}  // namespace reachcert
