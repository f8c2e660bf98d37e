#pragma once

// Embedded primal-dual interior-point method for linear SDPs in equality form:
//
//   min c'x   s.t.  A x = b,   x in K = (PSD blocks) x (nonnegative scalars).
//
// Homogeneous self-dual embedding (x, y, s, tau, kappa) with Nesterov-Todd
// scaling and a Mehrotra predictor-corrector, so infeasible and unbounded
// problems terminate with certificates instead of diverging. Free scalars are
// split into differences of nonnegative pairs at conversion.
//
// Per iteration the reduced system is a dense Schur complement M = A H A'
// (H the NT scaling operator), factored once by Cholesky and reused for the
// predictor and corrector solves.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <tuple>
#include <vector>

#include "reachcert/sdp.hpp"

#if defined(REACHCERT_HAVE_LAPACKE)
#include <lapacke.h>
#endif

namespace reachcert {
namespace ipm {

struct ConeLayout {
  struct Block {
    int size = 0;
    std::int64_t svec_offset = 0;
  };
  std::vector<Block> blocks;
  std::int64_t scalar_offset = 0;
  std::int64_t scalar_count = 0;
  std::int64_t dim = 0;     // flat svec dimension
  double cone_degree = 0;   // sum of block sizes + scalar count

  static std::int64_t tri(int s) { return static_cast<std::int64_t>(s) * (s + 1) / 2; }
};

inline constexpr double kSqrt2 = 1.4142135623730951;

/// Row slice of the constraint matrix restricted to one PSD block, in matrix
/// coefficient form: entry (i <= j, a) contributes a*X_ij (+ a*X_ji if i < j)
/// to <A_row, X>.
struct BlockSlice {
  int row = 0;
  std::vector<std::tuple<int, int, double>> ent;
};

struct InternalProblem {
  ConeLayout layout;
  // per PSD block: slices of rows touching it, sorted by row
  std::vector<std::vector<BlockSlice>> block_rows;
  // per scalar column: (row, coeff)
  std::vector<std::vector<std::pair<int, double>>> scalar_cols;
  Eigen::VectorXd b;     // rhs (row-scaled)
  Eigen::VectorXd cvec;  // objective in flat svec coords (min sense)
  std::int64_t m = 0;
  double sign = 1.0;  // +1 if original problem was minimize, -1 if maximize
  // mapping back to builder columns
  std::vector<std::pair<DecisionId, DecisionId>> free_splits;  // (pos col, neg col) internal
  std::vector<double> row_scale;
  // cone-compatible equilibration: internal X_b = block_scale * original,
  // internal scalar = scalar_scale * original (uniform per block = congruence)
  std::vector<double> block_scale;
  std::vector<double> scalar_scale;
};

inline void unpack_block(const Eigen::VectorXd& flat, const ConeLayout::Block& b,
                         Eigen::MatrixXd& out) {
  out.resize(b.size, b.size);
  std::int64_t k = b.svec_offset;
  for (int j = 0; j < b.size; ++j)
    for (int i = 0; i <= j; ++i, ++k) {
      const double v = (i == j) ? flat[k] : flat[k] / kSqrt2;
      out(i, j) = v;
      out(j, i) = v;
    }
}

inline void pack_block(const Eigen::MatrixXd& mat, const ConeLayout::Block& b,
                       Eigen::VectorXd& flat) {
  std::int64_t k = b.svec_offset;
  for (int j = 0; j < b.size; ++j)
    for (int i = 0; i <= j; ++i, ++k) flat[k] = (i == j) ? mat(i, j) : mat(i, j) * kSqrt2;
}

/// Builder-column -> internal svec column/value transform and the reverse.
class Conversion {
 public:
  explicit Conversion(const SdpProblem& p) : problem_(p) {
    std::int64_t off = 0;
    for (const auto& blk : p.blocks) {
      internal_.layout.blocks.push_back({blk.size, off});
      off += ConeLayout::tri(blk.size);
      internal_.layout.cone_degree += blk.size;
    }
    internal_.layout.scalar_offset = off;
    // nonneg scalars map 1:1; free scalars become (plus, minus) pairs
    for (const auto& sc : p.scalars) {
      if (sc.nonneg) {
        scalar_map_[sc.col] = {internal_.layout.scalar_count, -1};
        internal_.layout.scalar_count += 1;
      } else {
        scalar_map_[sc.col] = {internal_.layout.scalar_count, internal_.layout.scalar_count + 1};
        internal_.layout.scalar_count += 2;
      }
    }
    internal_.layout.dim = off + internal_.layout.scalar_count;
    internal_.layout.cone_degree += static_cast<double>(internal_.layout.scalar_count);
  }

  /// Expands one builder-column term into internal (flat index, coeff) terms.
  void expand(DecisionId col, double coeff,
              std::vector<std::pair<std::int64_t, double>>& out) const {
    for (std::size_t bi = 0; bi < problem_.blocks.size(); ++bi) {
      const auto& blk = problem_.blocks[bi];
      const auto tri = ConeLayout::tri(blk.size);
      if (col >= blk.first_col && col < blk.first_col + tri) {
        const std::int64_t off = col - blk.first_col;
        // coeff multiplies Q_ij; svec entry for i<j stores sqrt(2) Q_ij.
        int j = 0;
        while (static_cast<std::int64_t>(j + 1) * (j + 2) / 2 <= off) ++j;
        const int i = static_cast<int>(off - static_cast<std::int64_t>(j) * (j + 1) / 2);
        const double f = (i == j) ? coeff : coeff / kSqrt2;
        out.emplace_back(internal_.layout.blocks[bi].svec_offset + off, f);
        return;
      }
    }
    auto it = scalar_map_.find(col);
    if (it == scalar_map_.end()) throw std::out_of_range("sdp: entry references unknown column");
    out.emplace_back(internal_.layout.scalar_offset + it->second.first, coeff);
    if (it->second.second >= 0)
      out.emplace_back(internal_.layout.scalar_offset + it->second.second, -coeff);
  }

  InternalProblem convert() const {
    InternalProblem ip;
    ip.layout = internal_.layout;
    ip.sign = problem_.maximize ? -1.0 : 1.0;
    ip.m = static_cast<std::int64_t>(problem_.rows.size());
    ip.block_rows.resize(problem_.blocks.size());
    ip.scalar_cols.resize(static_cast<std::size_t>(ip.layout.scalar_count));
    ip.b.resize(ip.m);
    ip.cvec = Eigen::VectorXd::Zero(ip.layout.dim);
    ip.row_scale.assign(static_cast<std::size_t>(ip.m), 1.0);

    std::vector<std::pair<std::int64_t, double>> expanded;
    for (const auto& [col, coeff] : problem_.objective) {
      expanded.clear();
      expand(col, coeff, expanded);
      for (auto [k, v] : expanded) ip.cvec[k] += ip.sign * v;
    }

    // raw rows in svec coordinates
    std::vector<std::vector<std::pair<std::int64_t, double>>> rows(problem_.rows.size());
    for (std::size_t r = 0; r < problem_.rows.size(); ++r) {
      expanded.clear();
      for (const auto& [col, coeff] : problem_.rows[r].entries) expand(col, coeff, expanded);
      std::map<std::int64_t, double> acc;
      for (auto [k, v] : expanded) acc[k] += v;
      rows[r].assign(acc.begin(), acc.end());
    }

    // Cone-compatible Ruiz equilibration: alternating row scaling and a
    // uniform column scale per PSD block (a congruence) / per scalar column.
    // Narrow-set multiplier blocks otherwise sit orders of magnitude away
    // from the rest and stall the interior point iteration.
    ip.block_scale.assign(ip.layout.blocks.size(), 1.0);
    ip.scalar_scale.assign(static_cast<std::size_t>(ip.layout.scalar_count), 1.0);
    auto owner_block = [&](std::int64_t k) -> std::int64_t {
      if (k >= ip.layout.scalar_offset) return -1;
      std::size_t bi = 0;
      while (bi + 1 < ip.layout.blocks.size() && ip.layout.blocks[bi + 1].svec_offset <= k) ++bi;
      return static_cast<std::int64_t>(bi);
    };
    std::vector<double> rrow(rows.size(), 1.0);
    for (int pass = 0; pass < 4; ++pass) {
      // row pass: scale rows toward unit inf-norm
      for (std::size_t r = 0; r < rows.size(); ++r) {
        double rn = 0.0;
        for (auto [k, v] : rows[r]) rn = std::max(rn, std::abs(v));
        if (rn <= 0) continue;
        const double s = 1.0 / std::sqrt(rn);
        for (auto& [k, v] : rows[r]) v *= s;
        rrow[r] *= s;
      }
      // column pass: per-block / per-scalar max entry toward 1
      std::vector<double> bmax(ip.layout.blocks.size(), 0.0);
      std::vector<double> smax(static_cast<std::size_t>(ip.layout.scalar_count), 0.0);
      for (const auto& row : rows)
        for (auto [k, v] : row) {
          const std::int64_t ob = owner_block(k);
          if (ob >= 0)
            bmax[static_cast<std::size_t>(ob)] =
                std::max(bmax[static_cast<std::size_t>(ob)], std::abs(v));
          else
            smax[static_cast<std::size_t>(k - ip.layout.scalar_offset)] = std::max(
                smax[static_cast<std::size_t>(k - ip.layout.scalar_offset)], std::abs(v));
        }
      std::vector<double> bscale(ip.layout.blocks.size(), 1.0);
      std::vector<double> sscale(static_cast<std::size_t>(ip.layout.scalar_count), 1.0);
      for (std::size_t bi = 0; bi < bmax.size(); ++bi)
        if (bmax[bi] > 0) bscale[bi] = 1.0 / std::sqrt(bmax[bi]);
      for (std::size_t si = 0; si < smax.size(); ++si)
        if (smax[si] > 0) sscale[si] = 1.0 / std::sqrt(smax[si]);
      for (auto& row : rows)
        for (auto& [k, v] : row) {
          const std::int64_t ob = owner_block(k);
          v *= (ob >= 0) ? bscale[static_cast<std::size_t>(ob)]
                         : sscale[static_cast<std::size_t>(k - ip.layout.scalar_offset)];
        }
      for (std::size_t bi = 0; bi < bscale.size(); ++bi) ip.block_scale[bi] *= bscale[bi];
      for (std::size_t si = 0; si < sscale.size(); ++si) ip.scalar_scale[si] *= sscale[si];
    }
    for (std::int64_t k = 0; k < ip.layout.dim; ++k) {
      const std::int64_t ob = owner_block(k);
      ip.cvec[k] *= (ob >= 0) ? ip.block_scale[static_cast<std::size_t>(ob)]
                              : ip.scalar_scale[static_cast<std::size_t>(k - ip.layout.scalar_offset)];
    }
    // final row 2-norm normalization (rhs carries both the Ruiz row scale and
    // this one)
    std::vector<std::map<int, std::map<std::pair<int, int>, double>>> block_acc(
        problem_.blocks.size());
    for (std::size_t r = 0; r < problem_.rows.size(); ++r) {
      double norm2 = 0.0;
      for (auto [k, v] : rows[r]) norm2 += v * v;
      const double scale = norm2 > 0 ? 1.0 / std::sqrt(norm2) : 1.0;
      ip.row_scale[r] = rrow[r] * scale;
      ip.b[static_cast<std::int64_t>(r)] = problem_.rows[r].rhs * rrow[r] * scale;

      for (auto [k, v] : rows[r]) {
        const double sv = v * scale;
        if (k >= ip.layout.scalar_offset) {
          ip.scalar_cols[static_cast<std::size_t>(k - ip.layout.scalar_offset)].emplace_back(
              static_cast<int>(r), sv);
        } else {
          const std::size_t bi = static_cast<std::size_t>(owner_block(k));
          const auto& blk = ip.layout.blocks[bi];
          const std::int64_t off = k - blk.svec_offset;
          int j = 0;
          while (static_cast<std::int64_t>(j + 1) * (j + 2) / 2 <= off) ++j;
          const int i = static_cast<int>(off - static_cast<std::int64_t>(j) * (j + 1) / 2);
          // svec coeff sv on entry (i<j) means matrix coefficient sv/sqrt(2)
          // on both (i,j) and (j,i); diagonal is 1:1.
          const double a = (i == j) ? sv : sv / kSqrt2;
          block_acc[bi][static_cast<int>(r)][{i, j}] += a;
        }
      }
    }
    for (std::size_t bi = 0; bi < block_acc.size(); ++bi) {
      for (auto& [r, entmap] : block_acc[bi]) {
        BlockSlice s;
        s.row = r;
        s.ent.reserve(entmap.size());
        for (const auto& [ij, a] : entmap) s.ent.emplace_back(ij.first, ij.second, a);
        ip.block_rows[bi].push_back(std::move(s));
      }
    }
    return ip;
  }

  /// Internal flat point (already divided by tau) -> builder decision values,
  /// undoing the equilibration scales.
  std::vector<double> to_decision_values(const Eigen::VectorXd& x,
                                         const InternalProblem& ip) const {
    std::vector<double> vals(static_cast<std::size_t>(problem_.num_cols), 0.0);
    for (std::size_t bi = 0; bi < problem_.blocks.size(); ++bi) {
      const auto& blk = problem_.blocks[bi];
      const auto& lb = internal_.layout.blocks[bi];
      const double bs = ip.block_scale[bi];
      std::int64_t k = 0;
      for (int j = 0; j < blk.size; ++j)
        for (int i = 0; i <= j; ++i, ++k) {
          const double v = (i == j) ? x[lb.svec_offset + k] : x[lb.svec_offset + k] / kSqrt2;
          vals[static_cast<std::size_t>(blk.first_col + k)] = v * bs;
        }
    }
    for (const auto& sc : problem_.scalars) {
      const auto& mp = scalar_map_.at(sc.col);
      double v = x[internal_.layout.scalar_offset + mp.first] *
                 ip.scalar_scale[static_cast<std::size_t>(mp.first)];
      if (mp.second >= 0)
        v -= x[internal_.layout.scalar_offset + mp.second] *
             ip.scalar_scale[static_cast<std::size_t>(mp.second)];
      vals[static_cast<std::size_t>(sc.col)] = v;
    }
    return vals;
  }

 private:
  const SdpProblem& problem_;
  InternalProblem internal_;
  std::map<DecisionId, std::pair<std::int64_t, std::int64_t>> scalar_map_;
};

/// Cholesky solve for the Schur system, LAPACKE when available.
class SchurSolver {
 public:
  bool factor(Eigen::MatrixXd& M) {
#if defined(REACHCERT_HAVE_LAPACKE)
    const auto n = static_cast<lapack_int>(M.rows());
    if (n == 0) return true;
    lapack_int info = LAPACKE_dpotrf(LAPACK_COL_MAJOR, 'U', n, M.data(), n);
    factored_ = &M;
    return info == 0;
#else
    llt_.compute(M);
    factored_ = &M;
    return llt_.info() == Eigen::Success;
#endif
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    if (rhs.size() == 0) return rhs;
#if defined(REACHCERT_HAVE_LAPACKE)
    Eigen::VectorXd x = rhs;
    const auto n = static_cast<lapack_int>(rhs.size());
    LAPACKE_dpotrs(LAPACK_COL_MAJOR, 'U', n, 1, factored_->data(), n, x.data(), n);
    return x;
#else
    return llt_.solve(rhs);
#endif
  }


 private:
  Eigen::MatrixXd* factored_ = nullptr;
#if !defined(REACHCERT_HAVE_LAPACKE)
  Eigen::LLT<Eigen::MatrixXd> llt_;
#endif
};

class Solver {
 public:
  Solver(const SdpProblem& problem, const SdpSettings& settings)
      : problem_(problem), settings_(settings), conv_(problem), ip_(conv_.convert()) {}

  SdpSolution run() {
    const auto t0 = std::chrono::steady_clock::now();
    SdpSolution sol = iterate();
    sol.solve_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return sol;
  }

 private:
  using Mat = Eigen::MatrixXd;
  using Vec = Eigen::VectorXd;

  const SdpProblem& problem_;
  SdpSettings settings_;
  Conversion conv_;
  InternalProblem ip_;

  // iterate state
  Vec x_, s_, y_;
  double tau_ = 1.0, kappa_ = 1.0;

  // per-iteration scaling data
  std::vector<Mat> G_;        // R R' per block
  std::vector<Vec> lambda_;   // NT scaled point per block (diagonal)
  std::vector<Mat> Rmat_, Rinv_;
  Vec scalar_g_, scalar_lambda_;

  std::size_t nblocks() const { return ip_.layout.blocks.size(); }

  // ---- basic linear maps -------------------------------------------------

  Vec apply_A(const Vec& x) const {
    Vec out = Vec::Zero(ip_.m);
    for (std::size_t bi = 0; bi < nblocks(); ++bi) {
      const auto& lb = ip_.layout.blocks[bi];
      for (const auto& slice : ip_.block_rows[bi]) {
        double acc = 0.0;
        for (const auto& [i, j, a] : slice.ent) {
          const std::int64_t k = lb.svec_offset + static_cast<std::int64_t>(j) * (j + 1) / 2 + i;
          acc += (i == j) ? a * x[k] : kSqrt2 * a * x[k];
        }
        out[slice.row] += acc;
      }
    }
    for (std::int64_t sc = 0; sc < ip_.layout.scalar_count; ++sc)
      for (const auto& [r, a] : ip_.scalar_cols[static_cast<std::size_t>(sc)])
        out[r] += a * x[ip_.layout.scalar_offset + sc];
    return out;
  }

  Vec apply_At(const Vec& y) const {
    Vec out = Vec::Zero(ip_.layout.dim);
    for (std::size_t bi = 0; bi < nblocks(); ++bi) {
      const auto& lb = ip_.layout.blocks[bi];
      for (const auto& slice : ip_.block_rows[bi]) {
        const double yv = y[slice.row];
        if (yv == 0.0) continue;
        for (const auto& [i, j, a] : slice.ent) {
          const std::int64_t k = lb.svec_offset + static_cast<std::int64_t>(j) * (j + 1) / 2 + i;
          out[k] += (i == j) ? a * yv : kSqrt2 * a * yv;
        }
      }
    }
    for (std::int64_t sc = 0; sc < ip_.layout.scalar_count; ++sc)
      for (const auto& [r, a] : ip_.scalar_cols[static_cast<std::size_t>(sc)])
        out[ip_.layout.scalar_offset + sc] += a * y[r];
    return out;
  }

  // ---- NT scaling ----------------------------------------------------------

  bool compute_scaling() {
    G_.assign(nblocks(), Mat());
    lambda_.assign(nblocks(), Vec());
    Rmat_.assign(nblocks(), Mat());
    Rinv_.assign(nblocks(), Mat());
    for (std::size_t bi = 0; bi < nblocks(); ++bi) {
      const auto& lb = ip_.layout.blocks[bi];
      Mat X, S;
      unpack_block(x_, lb, X);
      unpack_block(s_, lb, S);
      Eigen::LLT<Mat> lx(X), ls(S);
      if (lx.info() != Eigen::Success || ls.info() != Eigen::Success) return false;
      const Mat Lx = lx.matrixL();
      const Mat Ls = ls.matrixL();
      Eigen::JacobiSVD<Mat> svd(Ls.transpose() * Lx,
                                Eigen::ComputeFullU | Eigen::ComputeFullV);
      const Vec sig = svd.singularValues();
      if (sig.minCoeff() <= 0) return false;
      const Vec isqrt = sig.cwiseSqrt().cwiseInverse();
      Rmat_[bi] = Lx * svd.matrixV() * isqrt.asDiagonal();
      Rinv_[bi] = isqrt.asDiagonal() * svd.matrixU().transpose() * Ls.transpose();
      lambda_[bi] = sig;
      G_[bi] = Rmat_[bi] * Rmat_[bi].transpose();
    }
    const std::int64_t ns = ip_.layout.scalar_count;
    scalar_g_.resize(ns);
    scalar_lambda_.resize(ns);
    for (std::int64_t k = 0; k < ns; ++k) {
      const double xv = x_[ip_.layout.scalar_offset + k], sv = s_[ip_.layout.scalar_offset + k];
      if (xv <= 0 || sv <= 0) return false;
      scalar_g_[k] = xv / sv;
      scalar_lambda_[k] = std::sqrt(xv * sv);
    }
    return true;
  }

  /// H = (W'W)^{-1}: per block U -> G U G; per scalar u -> (x/s) u.
  Vec apply_H(const Vec& v) const {
    Vec out(ip_.layout.dim);
    for (std::size_t bi = 0; bi < nblocks(); ++bi) {
      const auto& lb = ip_.layout.blocks[bi];
      Mat U;
      unpack_block(v, lb, U);
      Mat T = G_[bi] * U * G_[bi];
      pack_block(T, lb, out);
    }
    for (std::int64_t k = 0; k < ip_.layout.scalar_count; ++k)
      out[ip_.layout.scalar_offset + k] = scalar_g_[k] * v[ip_.layout.scalar_offset + k];
    return out;
  }

  /// W x: per block R^{-1} X R^{-T}; scalar x -> x sqrt(s/x) = lambda-consistent.
  Vec apply_W(const Vec& v) const {
    Vec out(ip_.layout.dim);
    for (std::size_t bi = 0; bi < nblocks(); ++bi) {
      const auto& lb = ip_.layout.blocks[bi];
      Mat U;
      unpack_block(v, lb, U);
      Mat T = Rinv_[bi] * U * Rinv_[bi].transpose();
      pack_block(T, lb, out);
    }
    for (std::int64_t k = 0; k < ip_.layout.scalar_count; ++k) {
      const double w = std::sqrt(1.0 / scalar_g_[k]);  // sqrt(s/x)
      out[ip_.layout.scalar_offset + k] = w * v[ip_.layout.scalar_offset + k];
    }
    return out;
  }

  /// W^T u: per block R^{-T} U R^{-1}; used to map scaled dual steps back.
  Vec apply_Wt(const Vec& v) const {
    Vec out(ip_.layout.dim);
    for (std::size_t bi = 0; bi < nblocks(); ++bi) {
      const auto& lb = ip_.layout.blocks[bi];
      Mat U;
      unpack_block(v, lb, U);
      Mat T = Rinv_[bi].transpose() * U * Rinv_[bi];
      pack_block(T, lb, out);
    }
    for (std::int64_t k = 0; k < ip_.layout.scalar_count; ++k) {
      const double w = std::sqrt(1.0 / scalar_g_[k]);
      out[ip_.layout.scalar_offset + k] = w * v[ip_.layout.scalar_offset + k];
    }
    return out;
  }

  /// W^{-T} u: per block R' U R; maps dual-space steps into scaled space.
  Vec apply_Winv_t(const Vec& v) const {
    Vec out(ip_.layout.dim);
    for (std::size_t bi = 0; bi < nblocks(); ++bi) {
      const auto& lb = ip_.layout.blocks[bi];
      Mat U;
      unpack_block(v, lb, U);
      Mat T = Rmat_[bi].transpose() * U * Rmat_[bi];
      pack_block(T, lb, out);
    }
    for (std::int64_t k = 0; k < ip_.layout.scalar_count; ++k)
      out[ip_.layout.scalar_offset + k] =
          std::sqrt(scalar_g_[k]) * v[ip_.layout.scalar_offset + k];
    return out;
  }

  // ---- Schur complement ----------------------------------------------------

  void form_schur(Eigen::MatrixXd& M) const {
    M.setZero(ip_.m, ip_.m);
    std::vector<Mat> T;  // G A_j G per slice of a block
    for (std::size_t bi = 0; bi < nblocks(); ++bi) {
      const auto& slices = ip_.block_rows[bi];
      if (slices.empty()) continue;
      const Mat& G = G_[bi];
      const int s = ip_.layout.blocks[bi].size;
      T.assign(slices.size(), Mat());
      for (std::size_t sj = 0; sj < slices.size(); ++sj) {
        Mat Aj = Mat::Zero(s, s);
        for (const auto& [i, j, a] : slices[sj].ent) {
          Aj(i, j) += a;
          if (i != j) Aj(j, i) += a;
        }
        T[sj].noalias() = G * Aj * G;
      }
      for (std::size_t sj = 0; sj < slices.size(); ++sj) {
        const int rj = slices[sj].row;
        for (std::size_t si = 0; si <= sj; ++si) {
          const int ri = slices[si].row;
          double acc = 0.0;
          const Mat& Tj = T[sj];
          for (const auto& [i, j, a] : slices[si].ent)
            acc += (i == j) ? a * Tj(i, i) : 2.0 * a * Tj(i, j);
          if (ri <= rj)
            M(ri, rj) += acc;
          else
            M(rj, ri) += acc;
        }
      }
    }
    for (std::int64_t k = 0; k < ip_.layout.scalar_count; ++k) {
      const auto& col = ip_.scalar_cols[static_cast<std::size_t>(k)];
      const double g = scalar_g_[k];
      for (std::size_t a = 0; a < col.size(); ++a)
        for (std::size_t b = 0; b <= a; ++b) {
          const int ri = std::min(col[a].first, col[b].first);
          const int rj = std::max(col[a].first, col[b].first);
          M(ri, rj) += g * col[a].second * col[b].second;
        }
    }
    M.triangularView<Eigen::StrictlyLower>() = M.transpose();
  }

  // ---- complementarity helpers ----------------------------------------------

  /// Solves lambda o z = RHS blockwise (lambda diagonal): z_ij = 2 r_ij/(l_i+l_j).
  Vec lyapunov_solve(const Vec& rhs) const {
    Vec out(ip_.layout.dim);
    for (std::size_t bi = 0; bi < nblocks(); ++bi) {
      const auto& lb = ip_.layout.blocks[bi];
      Mat R;
      unpack_block(rhs, lb, R);
      const Vec& l = lambda_[bi];
      Mat Z(lb.size, lb.size);
      for (int j = 0; j < lb.size; ++j)
        for (int i = 0; i <= j; ++i) {
          const double v = 2.0 * R(i, j) / (l[i] + l[j]);
          Z(i, j) = v;
          Z(j, i) = v;
        }
      pack_block(Z, lb, out);
    }
    for (std::int64_t k = 0; k < ip_.layout.scalar_count; ++k)
      out[ip_.layout.scalar_offset + k] =
          rhs[ip_.layout.scalar_offset + k] / scalar_lambda_[k];
    return out;
  }

  /// Symmetrized product (U V + V U)/2 blockwise, elementwise for scalars.
  Vec jordan_product(const Vec& u, const Vec& v) const {
    Vec out(ip_.layout.dim);
    for (std::size_t bi = 0; bi < nblocks(); ++bi) {
      const auto& lb = ip_.layout.blocks[bi];
      Mat U, V;
      unpack_block(u, lb, U);
      unpack_block(v, lb, V);
      Mat P = 0.5 * (U * V + V * U);
      pack_block(P, lb, out);
    }
    for (std::int64_t k = 0; k < ip_.layout.scalar_count; ++k)
      out[ip_.layout.scalar_offset + k] =
          u[ip_.layout.scalar_offset + k] * v[ip_.layout.scalar_offset + k];
    return out;
  }

  /// lambda o lambda - sigma*mu*e in flat form (for the complementarity rhs).
  Vec lambda_sq_minus(double sigma_mu) const {
    Vec out = Vec::Zero(ip_.layout.dim);
    for (std::size_t bi = 0; bi < nblocks(); ++bi) {
      const auto& lb = ip_.layout.blocks[bi];
      Mat Z = Mat::Zero(lb.size, lb.size);
      for (int i = 0; i < lb.size; ++i) Z(i, i) = lambda_[bi][i] * lambda_[bi][i] - sigma_mu;
      pack_block(Z, lb, out);
    }
    for (std::int64_t k = 0; k < ip_.layout.scalar_count; ++k)
      out[ip_.layout.scalar_offset + k] = scalar_lambda_[k] * scalar_lambda_[k] - sigma_mu;
    return out;
  }

  /// Max alpha in [0, cap] with lambda + alpha*D staying in the cone
  /// (D given in NT-scaled coordinates where the current point is diag(lambda)).
  double max_step_scaled(const Vec& D) const {
    double alpha = std::numeric_limits<double>::infinity();
    for (std::size_t bi = 0; bi < nblocks(); ++bi) {
      const auto& lb = ip_.layout.blocks[bi];
      Mat U;
      unpack_block(D, lb, U);
      const Vec& l = lambda_[bi];
      Mat N(lb.size, lb.size);
      for (int i = 0; i < lb.size; ++i)
        for (int j = 0; j < lb.size; ++j) N(i, j) = U(i, j) / std::sqrt(l[i] * l[j]);
      Eigen::SelfAdjointEigenSolver<Mat> es(N, Eigen::EigenvaluesOnly);
      const double emin = es.eigenvalues().minCoeff();
      if (emin < 0) alpha = std::min(alpha, -1.0 / emin);
    }
    for (std::int64_t k = 0; k < ip_.layout.scalar_count; ++k) {
      const double d = D[ip_.layout.scalar_offset + k] / scalar_lambda_[k];
      if (d < 0) alpha = std::min(alpha, -1.0 / d);
    }
    return alpha;
  }

  // ---- main loop -------------------------------------------------------------

  SdpSolution iterate() {
    SdpSolution sol;
    const std::int64_t n = ip_.layout.dim;
    const std::int64_t m = ip_.m;

    // quick pre-checks: empty rows with nonzero rhs
    for (std::size_t r = 0; r < problem_.rows.size(); ++r)
      if (problem_.rows[r].entries.empty() && std::abs(problem_.rows[r].rhs) > settings_.feas_tol) {
        sol.status = SdpStatus::Infeasible;
        sol.message = "empty equality row with nonzero right-hand side";
        return sol;
      }

    // identity start
    x_ = Vec::Zero(n);
    s_ = Vec::Zero(n);
    for (const auto& lb : ip_.layout.blocks) {
      Mat I = Mat::Identity(lb.size, lb.size);
      pack_block(I, lb, x_);
      pack_block(I, lb, s_);
    }
    for (std::int64_t k = 0; k < ip_.layout.scalar_count; ++k) {
      x_[ip_.layout.scalar_offset + k] = 1.0;
      s_[ip_.layout.scalar_offset + k] = 1.0;
    }
    y_ = Vec::Zero(m);
    tau_ = 1.0;
    kappa_ = 1.0;

    const double nu = ip_.layout.cone_degree + 1.0;
    const double bnorm = std::max(1.0, ip_.b.norm());
    const double cnorm = std::max(1.0, ip_.cvec.norm());

    Eigen::MatrixXd M;
    SchurSolver schur;
    double best_metric = std::numeric_limits<double>::infinity();
    double best_pres = 0, best_dres = 0, best_relgap = 0;
    Vec best_x = x_, best_y = y_, best_s = s_;
    double best_tau = 1.0;
    int it = 0;
    int stall = 0;
    double best_pinf = std::numeric_limits<double>::infinity();
    double best_dinf = std::numeric_limits<double>::infinity();
    double last_inf = std::numeric_limits<double>::infinity();
    double last_mu_mark = std::numeric_limits<double>::infinity();

    for (it = 0; it < settings_.max_iter; ++it) {
      // residuals
      const Vec Ax = apply_A(x_);
      const Vec Aty = apply_At(y_);
      const double cx = ip_.cvec.dot(x_);
      const double by = ip_.b.dot(y_);
      const Vec r_p = ip_.b * tau_ - Ax;
      const Vec r_d = ip_.cvec * tau_ - Aty - s_;
      const double r_g = kappa_ + cx - by;
      const double mu = (x_.dot(s_) + tau_ * kappa_) / nu;

      // convergence metrics on the de-homogenized point
      const double pcost = cx / tau_;
      const double dcost = by / tau_;
      const double pres = (Ax / tau_ - ip_.b).norm() / bnorm;
      const double dres = (Aty / tau_ + s_ / tau_ - ip_.cvec).norm() / cnorm;
      const double gap = x_.dot(s_) / (tau_ * tau_);
      const double relgap = gap / std::max(1.0, std::abs(pcost));

      if (settings_.verbose)
        std::cerr << "ipm it " << it << " pres " << pres << " dres " << dres << " relgap "
                  << relgap << " tau " << tau_ << " kappa " << kappa_ << " mu " << mu << "\n";

      if (pres <= settings_.feas_tol && dres <= settings_.feas_tol &&
          (relgap <= settings_.gap_tol ||
           std::abs(pcost - dcost) <= settings_.gap_tol * std::max(1.0, std::abs(pcost)))) {
        return extract(SdpStatus::Optimal, x_, y_, s_, tau_, it, "optimal");
      }

      // Farkas certificates: (y, s) with A'y + s ~ 0, b'y > 0 proves primal
      // infeasibility; x with Ax ~ 0, c'x < 0 proves dual infeasibility.
      double pinf = std::numeric_limits<double>::infinity();
      double dinf = std::numeric_limits<double>::infinity();
      if (by > settings_.feas_tol * bnorm) pinf = (Aty + s_).norm() / by;
      if (cx < -settings_.feas_tol * cnorm) dinf = Ax.norm() / (-cx);
      if (pinf <= settings_.feas_tol * 1e2)
        return extract(SdpStatus::Infeasible, x_, y_, s_, 1.0, it, "primal infeasible");
      if (dinf <= settings_.feas_tol * 1e2)
        return extract(SdpStatus::Unbounded, x_, y_, s_, 1.0, it, "dual infeasible");
      best_pinf = std::min(best_pinf, pinf);
      best_dinf = std::min(best_dinf, dinf);

      // Stall handling: progress on either the optimality or infeasibility
      // front counts; without it degenerate problems regress after hitting
      // their attainable accuracy, so stop before the iterates blow up.
      const double metric = pres + dres + relgap;
      bool progressed = false;
      if (metric < best_metric) {
        best_metric = metric;
        best_pres = pres;
        best_dres = dres;
        best_relgap = relgap;
        best_x = x_;
        best_y = y_;
        best_s = s_;
        best_tau = tau_;
        progressed = true;
      }
      if (std::min(pinf, dinf) < 0.5 * last_inf) {
        last_inf = std::min(pinf, dinf);
        progressed = true;
      }
      if (mu < 0.5 * last_mu_mark) {
        last_mu_mark = mu;
        progressed = true;
      }
      if (progressed) {
        stall = 0;
      } else {
        ++stall;
        if (stall >= 8 || metric > 1e6 * best_metric) break;
      }
      if (mu < 1e-14 || tau_ < 1e-12) {
        break;  // numerical exhaustion
      }

      if (!compute_scaling()) break;

      form_schur(M);
      // deterministic ridge escalation if the factorization stalls
      double ridge = 0.0;
      bool ok = schur.factor(M);
      while (!ok && ridge < 1e-6) {
        ridge = (ridge == 0.0) ? 1e-12 : ridge * 100;
        form_schur(M);
        M.diagonal().array() += ridge * (1.0 + M.diagonal().maxCoeff());
        ok = schur.factor(M);
      }
      if (!ok) break;

      auto kkt_solve = [&](const Vec& rhs) {
        Vec v = schur.solve(rhs);
        if (ip_.m > 0) {
          const Vec resid = rhs - apply_A(apply_H(apply_At(v)));
          v += schur.solve(resid);
        }
        return v;
      };

      const Vec hc = apply_H(ip_.cvec);
      const Vec Ahc = apply_A(hc);
      const Vec u1 = kkt_solve(Ahc + ip_.b);
      const double chc = ip_.cvec.dot(hc);

      auto direction = [&](double sigma_mu, const Vec& corr, double corr_tau, Vec& dx, Vec& dy,
                           Vec& ds, double& dtau, double& dkappa, Vec& dxs, Vec& dss) {
        // d = Lyap(sigma*mu*e - lambda o lambda - corr)
        Vec rhs = -lambda_sq_minus(sigma_mu);
        if (corr.size() > 0) rhs -= corr;
        const Vec d = lyapunov_solve(rhs);
        const Vec Wtd = apply_Wt(d);
        const Vec g = apply_H(r_d - Wtd);  // note: eta = 1
        const Vec Ag = apply_A(g);
        const Vec u2 = kkt_solve(r_p + Ag);
        const double denom = Ahc.dot(u1) - chc - ip_.b.dot(u1) - kappa_ / tau_;
        const double numer = -r_g - Ahc.dot(u2) + ip_.cvec.dot(g) + ip_.b.dot(u2) -
                             (sigma_mu - tau_ * kappa_ - corr_tau) / tau_;
        dtau = (std::abs(denom) > 1e-300) ? numer / denom : 0.0;
        dy = u2 + dtau * u1;
        dx = apply_H(apply_At(dy)) - hc * dtau - g;
        dxs = apply_W(dx);
        // ds from the dual equation directly (rather than W'(d - dxs)): the
        // dual residual then contracts exactly instead of absorbing the
        // cancellation error of the scaling maps near the boundary.
        ds = r_d - apply_At(dy) + ip_.cvec * dtau;
        dss = apply_Winv_t(ds);
        dkappa = (sigma_mu - tau_ * kappa_ - corr_tau) / tau_ - (kappa_ / tau_) * dtau;
      };

      // predictor
      Vec dx_a, dy_a, ds_a, dxs_a, dss_a;
      double dtau_a, dkappa_a;
      direction(0.0, Vec(), 0.0, dx_a, dy_a, ds_a, dtau_a, dkappa_a, dxs_a, dss_a);

      double alpha_a = std::min(max_step_scaled(dxs_a), max_step_scaled(dss_a));
      if (dtau_a < 0) alpha_a = std::min(alpha_a, -tau_ / dtau_a);
      if (dkappa_a < 0) alpha_a = std::min(alpha_a, -kappa_ / dkappa_a);
      alpha_a = std::min(alpha_a, 1.0);

      const double mu_aff = ((x_ + alpha_a * dx_a).dot(s_ + alpha_a * ds_a) +
                             (tau_ + alpha_a * dtau_a) * (kappa_ + alpha_a * dkappa_a)) /
                            nu;
      double sigma = std::pow(std::max(0.0, mu_aff / mu), 3.0);
      sigma = std::min(1.0, sigma);

      // corrector
      const Vec corr = jordan_product(dxs_a, dss_a);
      Vec dx, dy, ds, dxs, dss;
      double dtau, dkappa;
      direction(sigma * mu, corr, dtau_a * dkappa_a, dx, dy, ds, dtau, dkappa, dxs, dss);

      double alpha = std::min(max_step_scaled(dxs), max_step_scaled(dss));
      if (dtau < 0) alpha = std::min(alpha, -tau_ / dtau);
      if (dkappa < 0) alpha = std::min(alpha, -kappa_ / dkappa);
      alpha = std::min(0.99 * alpha, 1.0);
      if (!(alpha > 1e-13)) break;

      // mu-safeguard: halve the step while it would grow the complementarity
      // measure (the corrector can overshoot on badly conditioned instances)
      {
        const double xs_dot = x_.dot(s_);
        const double xds = x_.dot(ds) + s_.dot(dx);
        const double dxds = dx.dot(ds);
        for (int back = 0; back < 4; ++back) {
          const double tk = (tau_ + alpha * dtau) * (kappa_ + alpha * dkappa);
          const double mu_new = (xs_dot + alpha * xds + alpha * alpha * dxds + tk) / nu;
          if (mu_new <= std::max((1.0 - 0.01 * alpha) * mu, 0.0)) break;
          alpha *= 0.5;
        }
      }

      x_ += alpha * dx;
      y_ += alpha * dy;
      s_ += alpha * ds;
      tau_ += alpha * dtau;
      kappa_ += alpha * dkappa;

      // The homogeneous model is invariant under positive scaling of
      // (x, y, s, tau, kappa); renormalizing tau to 1 keeps the iterate from
      // sliding down the cone when the solution scale is large.
      if (tau_ > 0 && std::isfinite(tau_)) {
        const double inv = 1.0 / tau_;
        x_ *= inv;
        y_ *= inv;
        s_ *= inv;
        kappa_ *= inv;
        tau_ = 1.0;
      }
    }

    // Accept the best iterate at the relaxed secondary tolerance. Problems
    // without a strictly feasible point (common for exact-SOS feasibility
    // queries, whose Gram is pinned to a singular matrix) stall near sqrt(eps)
    // accuracy by nature; the validation layer re-checks residuals and shaves
    // bounds, so classification at accept_tol is the honest choice there.
    const double accept = std::max(settings_.accept_tol, settings_.feas_tol);
    if (best_pres <= accept && best_dres <= accept && best_relgap <= 10 * accept &&
        best_metric < std::numeric_limits<double>::infinity())
      return extract(SdpStatus::Optimal, best_x, best_y, best_s, best_tau, it,
                     "optimal (stalled at reduced accuracy)");
    if (best_pinf <= accept)
      return extract(SdpStatus::Infeasible, best_x, best_y, best_s, 1.0, it,
                     "primal infeasible (certificate at reduced accuracy)");
    if (best_dinf <= accept)
      return extract(SdpStatus::Unbounded, best_x, best_y, best_s, 1.0, it,
                     "dual infeasible (certificate at reduced accuracy)");
    return extract(SdpStatus::NumericalTrouble, best_x, best_y, best_s, best_tau, it,
                   "iteration cap or numerical exhaustion; best iterate attached");
  }

  SdpSolution extract(SdpStatus status, const Vec& x, const Vec& y, const Vec& s, double tau,
                      int iters, const std::string& message) {
    SdpSolution sol;
    sol.status = status;
    sol.iterations = iters;
    sol.message = message;
    const double inv_tau = (status == SdpStatus::Optimal || status == SdpStatus::NumericalTrouble)
                               ? 1.0 / tau
                               : 1.0;
    const Vec xs = x * inv_tau;
    sol.decision_values = conv_.to_decision_values(xs, ip_);

    sol.block_values.reserve(nblocks());
    double min_eig = std::numeric_limits<double>::infinity();
    for (std::size_t bi = 0; bi < nblocks(); ++bi) {
      Mat X;
      unpack_block(xs, ip_.layout.blocks[bi], X);
      X *= ip_.block_scale[bi];  // undo equilibration
      if (X.rows() > 0) {
        Eigen::SelfAdjointEigenSolver<Mat> es(X, Eigen::EigenvaluesOnly);
        min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
      }
      sol.block_values.push_back(std::move(X));
    }
    if (nblocks() == 0 && ip_.layout.scalar_count == 0) min_eig = 0.0;
    for (const auto& sc : problem_.scalars)
      sol.scalar_values.push_back(sol.decision_values[static_cast<std::size_t>(sc.col)]);
    for (std::int64_t k = 0; k < ip_.layout.scalar_count; ++k)
      min_eig = std::min(min_eig, xs[ip_.layout.scalar_offset + k]);
    sol.min_block_eigenvalue = min_eig;

    // residuals against the original (unscaled) rows
    double max_res = 0.0;
    for (const auto& row : problem_.rows) {
      double acc = -row.rhs;
      for (const auto& [col, coeff] : row.entries)
        acc += coeff * sol.decision_values[static_cast<std::size_t>(col)];
      max_res = std::max(max_res, std::abs(acc));
    }
    sol.max_equality_residual = max_res;

    double obj = 0.0;
    for (const auto& [col, coeff] : problem_.objective)
      obj += coeff * sol.decision_values[static_cast<std::size_t>(col)];
    sol.objective = obj;
    return sol;
  }
};

}  // namespace ipm

class EmbeddedIpmBackend final : public SdpBackend {
 public:
  std::string name() const override { return "embedded"; }
  SdpSolution solve(const SdpProblem& problem, const SdpSettings& settings) const override {
    ipm::Solver solver(problem, settings);
    return solver.run();
  }
};

inline std::shared_ptr<SdpBackend> make_embedded_backend() {
  return std::make_shared<EmbeddedIpmBackend>();
}

/// Convenience: solve with a named backend (default embedded).
inline SdpSolution solve_sdp(const SdpProblem& problem, const SdpSettings& settings = {},
                             const std::string& backend = "embedded") {
  return get_backend(backend)->solve(problem, settings);
}

}  // namespace reachcert
