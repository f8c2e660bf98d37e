#pragma once

// Linear SDP container and builder: minimize/maximize a linear objective over
// PSD cone blocks and scalars subject to linear equalities. Solver backends
// plug in behind SdpBackend; the embedded interior-point method lives in
// ipm.hpp. Text interchange uses the SDPA sparse format, whose dual
// (max tr(F0 Y) s.t. tr(Fi Y) = c_i, Y >= 0) is exactly this problem class.

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "reachcert/parametric.hpp"

namespace reachcert {

enum class SdpStatus { Optimal, Infeasible, Unbounded, NumericalTrouble };

inline const char* to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::Optimal: return "Optimal";
    case SdpStatus::Infeasible: return "Infeasible";
    case SdpStatus::Unbounded: return "Unbounded";
    default: return "NumericalTrouble";
  }
}

struct SdpSettings {
  double feas_tol = 1e-8;
  double gap_tol = 1e-8;
  /// Secondary tolerance for dual residual/gap when the iteration stalls at
  /// its attainable accuracy (degenerate optima); the primal point must still
  /// meet feas_tol for the run to count as Optimal.
  double accept_tol = 1e-6;
  int max_iter = 200;
  bool verbose = false;
};

/// Equality-form SDP. Decision columns are laid out as declared: for a PSD
/// block of size s, columns are the upper-triangle entries Q_ij (i <= j,
/// column-major), valued as actual matrix entries; scalars follow.
struct SdpProblem {
  struct Block {
    std::string name;
    int size = 0;
    DecisionId first_col = 0;
  };
  struct Scalar {
    std::string name;
    bool nonneg = true;
    DecisionId col = 0;
  };
  struct Row {
    std::vector<std::pair<DecisionId, double>> entries;
    double rhs = 0.0;
  };

  std::vector<Block> blocks;
  std::vector<Scalar> scalars;
  std::vector<Row> rows;
  std::vector<std::pair<DecisionId, double>> objective;
  bool maximize = true;
  DecisionId num_cols = 0;

  static std::int64_t tri_size(int s) { return static_cast<std::int64_t>(s) * (s + 1) / 2; }

  std::size_t psd_var_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += static_cast<std::size_t>(tri_size(b.size));
    return n;
  }
};

struct SdpSolution {
  SdpStatus status = SdpStatus::NumericalTrouble;
  double objective = 0.0;  // in the problem's own sense
  std::vector<Eigen::MatrixXd> block_values;
  std::vector<double> scalar_values;
  /// Flat decision vector aligned with builder columns (Q_ij actual entries,
  /// then scalars); feeds ParametricPolynomial::substitute directly.
  std::vector<double> decision_values;
  double max_equality_residual = 0.0;
  double min_block_eigenvalue = 0.0;
  int iterations = 0;
  double solve_seconds = 0.0;
  std::string message;
};

/// Single-writer builder; assertions are appended sequentially and the
/// compiled problem is immutable afterwards.
class SdpBuilder {
 public:
  DecisionId add_scalar(const std::string& name, bool nonneg = true) {
    SdpProblem::Scalar s;
    s.name = name;
    s.nonneg = nonneg;
    s.col = next_col_++;
    problem_.scalars.push_back(s);
    return s.col;
  }

  int add_psd_block(const std::string& name, int size) {
    if (size <= 0) throw std::invalid_argument("add_psd_block: size must be positive");
    SdpProblem::Block b;
    b.name = name;
    b.size = size;
    b.first_col = next_col_;
    next_col_ += SdpProblem::tri_size(size);
    problem_.blocks.push_back(b);
    return static_cast<int>(problem_.blocks.size()) - 1;
  }

  /// Column of entry Q_ij (i <= j) of a PSD block.
  DecisionId gram_entry(int block, int i, int j) const {
    const auto& b = problem_.blocks.at(static_cast<std::size_t>(block));
    if (i > j) std::swap(i, j);
    if (j >= b.size) throw std::out_of_range("gram_entry: index out of range");
    return b.first_col + static_cast<DecisionId>(j) * (j + 1) / 2 + i;
  }

  /// Asserts expr == 0.
  void add_equality(const AffineForm& expr) {
    SdpProblem::Row row;
    row.entries.assign(expr.linear().begin(), expr.linear().end());
    row.rhs = -expr.constant();
    problem_.rows.push_back(std::move(row));
  }

  void set_objective(const AffineForm& obj, bool maximize) {
    problem_.objective.assign(obj.linear().begin(), obj.linear().end());
    problem_.maximize = maximize;
    objective_offset_ = obj.constant();
  }

  double objective_offset() const { return objective_offset_; }

  SdpProblem build() {
    problem_.num_cols = next_col_;
    return problem_;
  }

  const SdpProblem& peek() const { return problem_; }
  std::size_t row_count() const { return problem_.rows.size(); }

 private:
  SdpProblem problem_;
  DecisionId next_col_ = 0;
  double objective_offset_ = 0.0;
};

/// Solver backend interface; one solve call is single-threaded per problem,
/// distinct problems may be solved concurrently.
class SdpBackend {
 public:
  virtual ~SdpBackend() = default;
  virtual std::string name() const = 0;
  virtual SdpSolution solve(const SdpProblem& problem, const SdpSettings& settings) const = 0;
};

namespace detail {
inline std::map<std::string, std::function<std::shared_ptr<SdpBackend>()>>& backend_registry() {
  static std::map<std::string, std::function<std::shared_ptr<SdpBackend>()>> reg;
  return reg;
}
}  // namespace detail

inline void register_backend(const std::string& name,
                             std::function<std::shared_ptr<SdpBackend>()> factory) {
  detail::backend_registry()[name] = std::move(factory);
}

std::shared_ptr<SdpBackend> make_embedded_backend();  // defined in ipm.hpp

inline std::shared_ptr<SdpBackend> get_backend(const std::string& name) {
  if (name == "embedded") return make_embedded_backend();
  auto& reg = detail::backend_registry();
  auto it = reg.find(name);
  if (it == reg.end())
    throw std::invalid_argument("solver backend '" + name +
                                "' is not available in this build (available: embedded)");
  return it->second();
}

// ---------------------------------------------------------------------------
// SDPA sparse (.dat-s) export/import. Mapping: our maximize problem is the
// SDPA dual with Y = diag(blocks..., scalar diag block); c = equality rhs;
// F0 = objective; Fi = equality rows. Off-diagonal entries are written once
// (upper triangle) with the convention coeff*(Q_ij + Q_ji).
// ---------------------------------------------------------------------------

inline void export_sdpa(const SdpProblem& p, std::ostream& os) {
  os << "\"reachcert SDP export\"\n";
  os << p.rows.size() << " = mDIM\n";
  const std::size_t nblocks = p.blocks.size() + (p.scalars.empty() ? 0 : 1);
  os << nblocks << " = nBLOCK\n";
  for (const auto& b : p.blocks) os << b.size << " ";
  if (!p.scalars.empty()) os << "-" << p.scalars.size();
  os << " = bLOCKsTRUCT\n";
  os.precision(17);
  for (const auto& r : p.rows) os << r.rhs << " ";
  os << "\n";

  // Locate a column: returns (block index 1-based, i, j) or scalar position.
  auto emit_entry = [&](std::size_t matno, DecisionId col, double coeff) {
    for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
      const auto& b = p.blocks[bi];
      const auto tri = SdpProblem::tri_size(b.size);
      if (col >= b.first_col && col < b.first_col + tri) {
        const auto off = col - b.first_col;
        int j = 0;
        while (static_cast<DecisionId>(j + 1) * (j + 2) / 2 <= off) ++j;
        const int i = static_cast<int>(off - static_cast<DecisionId>(j) * (j + 1) / 2);
        // our row coeff multiplies Q_ij (+ Q_ji implicitly via symmetry): SDPA
        // convention tr(F Y) counts off-diagonal twice, so halve it there.
        const double v = (i == j) ? coeff : coeff / 2.0;
        os << matno << " " << (bi + 1) << " " << (i + 1) << " " << (j + 1) << " " << v << "\n";
        return;
      }
    }
    for (std::size_t si = 0; si < p.scalars.size(); ++si) {
      if (p.scalars[si].col == col) {
        if (!p.scalars[si].nonneg)
          throw std::invalid_argument("export_sdpa: free scalars are not representable");
        os << matno << " " << p.blocks.size() + 1 << " " << (si + 1) << " " << (si + 1) << " "
           << coeff << "\n";
        return;
      }
    }
    throw std::out_of_range("export_sdpa: bad column id");
  };

  const double sign = p.maximize ? 1.0 : -1.0;
  for (const auto& [col, coeff] : p.objective) emit_entry(0, col, sign * coeff);
  for (std::size_t k = 0; k < p.rows.size(); ++k)
    for (const auto& [col, coeff] : p.rows[k].entries) emit_entry(k + 1, col, coeff);
}

inline void export_sdpa_file(const SdpProblem& p, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  export_sdpa(p, f);
}

/// Reads back the subset of SDPA sparse files that export_sdpa writes
/// (comments, mDIM/nBLOCK/bLOCKsTRUCT lines, rhs, entry lines).
inline SdpProblem import_sdpa(std::istream& is) {
  auto next_data_line = [&](std::string& line) {
    while (std::getline(is, line)) {
      std::size_t i = line.find_first_not_of(" \t\r");
      if (i == std::string::npos) continue;
      if (line[i] == '"' || line[i] == '*') continue;
      return true;
    }
    return false;
  };
  std::string line;
  if (!next_data_line(line)) throw std::runtime_error("import_sdpa: missing mDIM");
  const std::size_t m = std::stoul(line);
  if (!next_data_line(line)) throw std::runtime_error("import_sdpa: missing nBLOCK");
  const std::size_t nblock = std::stoul(line);
  if (!next_data_line(line)) throw std::runtime_error("import_sdpa: missing bLOCKsTRUCT");

  SdpBuilder builder;
  std::vector<int> bstruct;
  {
    std::istringstream ss(line);
    int v;
    while (ss >> v) bstruct.push_back(v);
    if (bstruct.size() < nblock) throw std::runtime_error("import_sdpa: bad bLOCKsTRUCT");
  }
  std::vector<int> block_index(nblock, -1);
  std::vector<DecisionId> scalar_cols;  // for negative (diagonal) blocks
  std::vector<std::size_t> scalar_base(nblock, 0);
  for (std::size_t b = 0; b < nblock; ++b) {
    if (bstruct[b] > 0) {
      block_index[b] = builder.add_psd_block("B" + std::to_string(b + 1), bstruct[b]);
    } else {
      scalar_base[b] = scalar_cols.size();
      for (int k = 0; k < -bstruct[b]; ++k)
        scalar_cols.push_back(
            builder.add_scalar("s" + std::to_string(b + 1) + "_" + std::to_string(k + 1)));
    }
  }

  if (!next_data_line(line)) throw std::runtime_error("import_sdpa: missing rhs");
  std::vector<double> rhs;
  {
    std::istringstream ss(line);
    double v;
    while (ss >> v) rhs.push_back(v);
    if (rhs.size() != m) throw std::runtime_error("import_sdpa: rhs length mismatch");
  }

  std::vector<SdpProblem::Row> rows(m);
  for (std::size_t k = 0; k < m; ++k) rows[k].rhs = rhs[k];
  AffineForm objective;
  std::size_t matno, blk;
  int i, j;
  double v;
  while (is >> matno >> blk >> i >> j >> v) {
    if (blk < 1 || blk > nblock) throw std::runtime_error("import_sdpa: bad block number");
    DecisionId col;
    double coeff;
    if (bstruct[blk - 1] > 0) {
      col = builder.gram_entry(block_index[blk - 1], i - 1, j - 1);
      coeff = (i == j) ? v : 2.0 * v;
    } else {
      if (i != j) throw std::runtime_error("import_sdpa: off-diagonal entry in diagonal block");
      col = scalar_cols[scalar_base[blk - 1] + static_cast<std::size_t>(i - 1)];
      coeff = v;
    }
    if (matno == 0)
      objective += AffineForm::decision(col, coeff);
    else
      rows[matno - 1].entries.emplace_back(col, coeff);
  }

  builder.set_objective(objective, /*maximize=*/true);
  SdpProblem p = builder.build();
  p.rows = std::move(rows);
  return p;
}

inline SdpProblem import_sdpa_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return import_sdpa(f);
}

/// One-line-per-item summary of a compiled problem for cross-checking.
inline std::string describe(const SdpProblem& p) {
  std::ostringstream os;
  os << "sdp: " << (p.maximize ? "maximize" : "minimize") << ", " << p.rows.size()
     << " equalities, " << p.num_cols << " columns\n";
  for (const auto& b : p.blocks) os << "  psd block " << b.name << " size " << b.size << "\n";
  for (const auto& s : p.scalars)
    os << "  scalar " << s.name << (s.nonneg ? " >= 0" : " free") << "\n";
  os << "  objective terms: " << p.objective.size() << "\n";
  return os.str();
}

}  // namespace reachcert
