#pragma once

// Translates SOS membership and nonnegativity-on-set assertions over
// parametric polynomials into PSD blocks plus linear equalities of an SDP.
//
// assert_sos(p, 2d) adds one Gram block Q over the degree-d basis z and the
// coefficient-matching equalities p_mu = sum_{z_i z_j = mu} Q_ij; feasibility
// of the block is equivalent to an SOS decomposition of p in that basis.
// assert_nonneg_on_set adds fresh SOS multipliers lambda_i per constraint and
// asserts p - sum lambda_i h_i in SOS (Putinar form).

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "reachcert/model.hpp"
#include "reachcert/parametric.hpp"
#include "reachcert/sdp.hpp"

namespace reachcert {

/// One compiled Gram assertion; kept for post-solve reconstruction checks.
struct SosRecord {
  std::string name;
  int block = -1;
  std::vector<Monomial> basis;
  ParametricPolynomial subject;  // the polynomial asserted SOS
};

/// SOS multipliers attached to one nonnegativity-on-set assertion.
struct MultiplierFamily {
  std::vector<ParametricPolynomial> multipliers;  // lambda_i per constraint h_i
  std::vector<int> multiplier_records;            // indices into SosCompiler records
  int head_record = -1;                           // record of p - sum lambda_i h_i
};

class SosCompiler {
 public:
  explicit SosCompiler(SdpBuilder& builder) : builder_(builder) {}

  /// Fresh SOS polynomial z' Q z over `vars` up to (even) `degree`; its
  /// coefficients are affine in the Gram entries so it can flow through
  /// composition/expectation before being constrained.
  ParametricPolynomial fresh_sos(const std::vector<VarId>& vars, std::uint32_t degree,
                                 const std::string& name) {
    if (degree % 2 != 0) throw std::invalid_argument("fresh_sos: degree must be even");
    const auto basis = monomial_basis(vars, degree / 2);
    const int block = builder_.add_psd_block(name, static_cast<int>(basis.size()));
    records_.push_back({name, block, basis, gram_poly(block, basis)});
    return records_.back().subject;
  }

  /// Fresh polynomial with one free coefficient per basis monomial (used by
  /// the relaxed certificate mode where R is only required nonnegative on X).
  ParametricPolynomial fresh_free_poly(const std::vector<VarId>& vars, std::uint32_t degree,
                                       const std::string& name) {
    ParametricPolynomial p;
    const auto basis = monomial_basis(vars, degree);
    for (std::size_t i = 0; i < basis.size(); ++i) {
      const DecisionId id =
          builder_.add_scalar(name + "_c" + std::to_string(i), /*nonneg=*/false);
      p.add_term(basis[i], AffineForm::decision(id));
    }
    return p;
  }

  /// Asserts p is SOS at the given even degree budget; returns the record
  /// index of the fresh Gram block.
  int assert_sos(const ParametricPolynomial& p, std::uint32_t degree, const std::string& name) {
    if (degree % 2 != 0) throw std::invalid_argument("assert_sos: degree must be even");
    if (p.degree() > degree)
      throw std::invalid_argument("assert_sos: polynomial degree " + std::to_string(p.degree()) +
                                  " exceeds budget " + std::to_string(degree));
    const auto vars = p.variables();
    const auto basis = monomial_basis(vars, degree / 2);
    const int block = builder_.add_psd_block(name, static_cast<int>(basis.size()));
    records_.push_back({name, block, basis, p});
    const int record = static_cast<int>(records_.size()) - 1;

    // product table: monomial -> Gram pairs
    std::map<Monomial, std::vector<std::pair<int, int>>, GrlexLess> products;
    for (std::size_t i = 0; i < basis.size(); ++i)
      for (std::size_t j = i; j < basis.size(); ++j)
        products[basis[i].times(basis[j])].emplace_back(static_cast<int>(i),
                                                        static_cast<int>(j));

    // one equality per monomial of the budget-universe
    for (const auto& [mu, pairs] : products) {
      AffineForm eq;
      auto it = p.terms().find(mu);
      if (it != p.terms().end()) eq += it->second;
      for (const auto& [i, j] : pairs)
        eq += AffineForm::decision(builder_.gram_entry(block, i, j), i == j ? -1.0 : -2.0);
      builder_.add_equality(eq);
    }
    // monomials of p outside the product span would make the system silently
    // unrepresentable; guard (can only happen for exotic variable sets)
    for (const auto& [mu, coeff] : p.terms())
      if (products.find(mu) == products.end())
        throw std::invalid_argument("assert_sos: monomial outside Gram span");
    return record;
  }

  /// Putinar assertion: p - sum_i lambda_i h_i in SOS with fresh SOS
  /// multipliers; multiplier degrees are degree - deg(h_i) rounded down to
  /// even. Boxes use their quadratic per-dimension description when
  /// `quadratic_boxes` (keeps multiplier products at the full budget).
  MultiplierFamily assert_nonneg_on_set(const ParametricPolynomial& p,
                                        const SemialgebraicSet& set, std::uint32_t degree,
                                        const std::string& name, bool quadratic_boxes = true) {
    if (degree < p.degree())
      throw std::invalid_argument("assert_nonneg_on_set: degree below deg(p)");
    check_nonempty(set, name);
    const std::vector<Polynomial> constraints = compilation_constraints(set, quadratic_boxes);

    std::vector<VarId> vars = p.variables();
    for (const auto& h : constraints)
      for (VarId v : h.variables()) vars.push_back(v);
    std::sort(vars.begin(), vars.end());
    vars.erase(std::unique(vars.begin(), vars.end()), vars.end());

    MultiplierFamily fam;
    ParametricPolynomial residual = p;
    for (std::size_t i = 0; i < constraints.size(); ++i) {
      const auto hdeg = constraints[i].degree();
      if (degree < hdeg)
        throw std::invalid_argument("assert_nonneg_on_set: budget " + std::to_string(degree) +
                                    " below constraint degree " + std::to_string(hdeg) +
                                    "; need at least " + std::to_string(hdeg));
      const std::uint32_t mult_deg = (degree - hdeg) & ~1u;
      ParametricPolynomial lambda =
          fresh_sos(vars, mult_deg, name + "_L" + std::to_string(i));
      fam.multiplier_records.push_back(static_cast<int>(records_.size()) - 1);
      fam.multipliers.push_back(lambda);
      residual = residual - lambda * constraints[i];
    }
    const std::uint32_t budget = std::max(degree, residual.degree());
    fam.head_record = assert_sos(residual, (budget + 1u) & ~1u, name + "_sos");
    return fam;
  }

  std::vector<MultiplierFamily> assert_nonneg_on_union(const ParametricPolynomial& p,
                                                       const RegionUnion& region,
                                                       std::uint32_t degree,
                                                       const std::string& name,
                                                       bool quadratic_boxes = true) {
    if (region.empty())
      throw std::invalid_argument("assert_nonneg_on_union: empty region union");
    std::vector<MultiplierFamily> fams;
    for (std::size_t i = 0; i < region.pieces.size(); ++i)
      fams.push_back(assert_nonneg_on_set(p, region.pieces[i], degree,
                                          name + "_p" + std::to_string(i), quadratic_boxes));
    return fams;
  }

  const std::vector<SosRecord>& records() const { return records_; }
  SdpBuilder& builder() { return builder_; }

  /// Debug dump of the compiled problem: block sizes, equality count, objective.
  std::string dump() const {
    std::ostringstream os;
    os << describe(builder_.peek());
    os << "sos records: " << records_.size() << "\n";
    for (const auto& r : records_)
      os << "  " << r.name << ": basis " << r.basis.size() << ", block " << r.block << "\n";
    return os.str();
  }

  /// Constraint polynomials used for compilation: quadratic face description
  /// for boxes when enabled, the stored description otherwise. Each constraint
  /// is normalized to unit max-coefficient (the set is unchanged, the
  /// multiplier Gram scale becomes O(1), which matters for narrow sets).
  static std::vector<Polynomial> compilation_constraints(const SemialgebraicSet& set,
                                                         bool quadratic_boxes) {
    std::vector<Polynomial> out;
    if (quadratic_boxes && set.is_box()) {
      const auto& lo = *set.box_lo;
      const auto& hi = *set.box_hi;
      for (std::size_t i = 0; i < lo.size(); ++i) {
        const Polynomial xi = Polynomial::var(state_var(static_cast<std::uint32_t>(i) + 1));
        out.push_back((xi - lo[i]) * (hi[i] - xi));
      }
    } else {
      out = set.constraints;
    }
    for (auto& h : out) {
      double scale = 0.0;
      for (const auto& [m, c] : h.terms()) scale = std::max(scale, std::abs(c));
      if (scale > 0) h = h * (1.0 / scale);
    }
    return out;
  }

 private:
  ParametricPolynomial gram_poly(int block, const std::vector<Monomial>& basis) const {
    ParametricPolynomial p;
    for (std::size_t i = 0; i < basis.size(); ++i)
      for (std::size_t j = i; j < basis.size(); ++j)
        p.add_term(basis[i].times(basis[j]),
                   AffineForm::decision(builder_.gram_entry(block, static_cast<int>(i),
                                                            static_cast<int>(j)),
                                        i == j ? 1.0 : 2.0));
    return p;
  }

  void check_nonempty(const SemialgebraicSet& set, const std::string& name) const {
    if (!set.is_box()) return;  // nothing to sample from without a box
    auto [lo, hi] = set.bounding_box();
    for (const auto& pt : detail::lattice_points(lo, hi, 64))
      if (set.contains(pt)) return;
    throw std::invalid_argument("assert_nonneg_on_set(" + name + "): set appears empty");
  }

  SdpBuilder& builder_;
  std::vector<SosRecord> records_;
};

/// Post-solve check: sum_ij Q_ij b_i b_j reproduces the asserted polynomial
/// coefficient-wise; returns the worst absolute coefficient mismatch.
inline double gram_reconstruction_error(const SosRecord& record,
                                        const Eigen::MatrixXd& gram_value,
                                        const std::vector<double>& decision_values) {
  Polynomial reconstructed;
  for (std::size_t i = 0; i < record.basis.size(); ++i)
    for (std::size_t j = 0; j < record.basis.size(); ++j)
      reconstructed.add_term(record.basis[i].times(record.basis[j]),
                             gram_value(static_cast<Eigen::Index>(i),
                                        static_cast<Eigen::Index>(j)));
  const Polynomial target = record.subject.substitute(decision_values);
  double worst = 0.0;
  const Polynomial diff = reconstructed - target;
  for (const auto& [m, c] : diff.terms()) worst = std::max(worst, std::abs(c));
  return worst;
}

}  // namespace reachcert
