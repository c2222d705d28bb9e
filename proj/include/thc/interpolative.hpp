#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "thc/error.hpp"
#include "thc/fft.hpp"
#include "thc/model.hpp"
#include "thc/parallel.hpp"
#include "thc/rng.hpp"
#include "thc/types.hpp"

namespace thc {

/// Oversampling factor r: the sketch keeps r * N of the N^2 projected rows.
inline constexpr int kDefaultOversampling = 20;

/// Imaginary-part ratio of the interpolation matrix above which callers
/// should warn.
inline constexpr double kImagWarningThreshold = 1e-8;

using StageTimings = std::map<std::string, double>;

// ---------------------------------------------------------------------------
// Pair densities

/// Flat pair index I = i * N + j (0-based) of the N^2 x n pair-density matrix.
inline Index pair_index(Index i, Index j, Index n_orbitals) { return i * n_orbitals + j; }

/// rho_ij(x) = psi_i(x) psi_j(x) on every grid point.
inline Eigen::VectorXd pair_density_row(const OrbitalSet& orbitals, Index i, Index j) {
  const Index N = orbitals.count();
  detail::require(i >= 0 && i < N && j >= 0 && j < N, "pair_density_row: orbital index out of range");
  return orbitals.values.row(i).cwiseProduct(orbitals.values.row(j)).transpose();
}

/// Rows rho_ij for j = 0..N-1 at fixed i, as an N x n block.
inline Eigen::MatrixXd pair_density_block(const OrbitalSet& orbitals, Index i) {
  return orbitals.values.array().rowwise() * orbitals.values.row(i).array();
}

/// The full N^2 x n pair-density matrix. Only for small test problems.
inline Eigen::MatrixXd pair_density_matrix(const OrbitalSet& orbitals) {
  const Index N = orbitals.count();
  Eigen::MatrixXd A(N * N, orbitals.grid.n);
  for (Index i = 0; i < N; ++i) A.middleRows(i * N, N) = pair_density_block(orbitals, i);
  return A;
}

// ---------------------------------------------------------------------------
// Random Fourier projection

struct SketchMatrix {
  /// rows x n; row q is row retained_rows[q] of the projected N^2 x n matrix.
  Eigen::MatrixXcd values;
  int r = kDefaultOversampling;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> retained_rows;
};

/// eta_I = exp(2 pi i theta_I), theta_I uniform on [0,1).
inline Eigen::VectorXcd random_phases(Index count, std::uint64_t seed) {
  CounterRng rng(seed, Stream::phases);
  Eigen::VectorXcd eta(count);
  for (Index I = 0; I < count; ++I) eta[I] = std::polar(1.0, 2.0 * std::numbers::pi * rng.uniform());
  return eta;
}

/// For every grid column x, the length-N^2 DFT over the pair index of
/// eta_I * rho_I(x), keeping min(r N, N^2) rows drawn without replacement.
///
/// Columns are independent, so they are split across threads; every random
/// draw happens before the parallel loop.
inline SketchMatrix sketch(const OrbitalSet& orbitals, int r, std::uint64_t seed) {
  detail::require(r >= 1, "sketch: oversampling r must be >= 1");
  const Index N = orbitals.count();
  const Index pairs = N * N;
  const Index n = orbitals.grid.n;
  const Index rows = std::min<Index>(static_cast<Index>(r) * N, pairs);

  SketchMatrix out;
  out.r = r;
  out.seed = seed;
  const Eigen::VectorXcd eta = random_phases(pairs, seed);
  if (rows == pairs) {
    out.retained_rows.resize(static_cast<std::size_t>(pairs));
    std::iota(out.retained_rows.begin(), out.retained_rows.end(), std::int64_t{0});
  } else {
    CounterRng row_rng(seed, Stream::rows);
    out.retained_rows = sample_without_replacement(row_rng, pairs, rows);
  }

  const FftPlan plan({static_cast<int>(pairs)});
  out.values.resize(rows, n);
  const Eigen::MatrixXd& psi = orbitals.values;
  const auto* kept = out.retained_rows.data();

#pragma omp parallel
  {
    FftBuffer buffer(static_cast<std::size_t>(pairs));
#pragma omp for schedule(static)
    for (Index x = 0; x < n; ++x) {
      const double* column = psi.col(x).data();
      for (Index i = 0; i < N; ++i) {
        const double psi_i = column[i];
        for (Index j = 0; j < N; ++j) {
          const Index I = i * N + j;
          buffer[static_cast<std::size_t>(I)] = eta[I] * (psi_i * column[j]);
        }
      }
      plan.forward(buffer);
      for (Index q = 0; q < rows; ++q) out.values(q, x) = buffer[static_cast<std::size_t>(kept[q])];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Column-pivoted Householder QR

struct QrOptions {
  /// Stop after the first step whose |R_kk| drops below stop_tolerance * |R_00|
  /// (that row is kept). Zero runs the factorization to min(rows, cols).
  double stop_tolerance = 0.0;
  /// Keep the Householder vectors so Q can be applied afterwards.
  bool keep_reflectors = false;
};

struct PivotedQRResult {
  /// K x n upper-trapezoidal factor of M E; columns are in pivot order.
  Eigen::MatrixXcd R;
  /// Column k of M E is column pivots[k] of M.
  std::vector<Index> pivots;
  Index input_rows = 0;
  /// H_k = I - 2 u_k u_k^H / |u_k|^2 acting on rows k.. ; Q = H_0 H_1 ... H_{K-1} D,
  /// where D = diag(phases) makes the diagonal of R real and nonnegative.
  std::vector<Eigen::VectorXcd> reflectors;
  Eigen::VectorXcd phases;

  Index computed_rows() const { return R.rows(); }

  Eigen::VectorXd diagonal_magnitudes() const {
    const Index k = std::min(R.rows(), R.cols());
    Eigen::VectorXd d(k);
    for (Index i = 0; i < k; ++i) d[i] = std::abs(R(i, i));
    return d;
  }

  /// Q * X for X with input_rows rows. Requires keep_reflectors.
  Eigen::MatrixXcd apply_q(Eigen::MatrixXcd X) const {
    detail::require(X.rows() == input_rows, "apply_q: row count mismatch");
    detail::require(reflectors.size() == static_cast<std::size_t>(computed_rows()),
                    "apply_q: reflectors were not kept");
    X.topRows(computed_rows()) = phases.asDiagonal() * X.topRows(computed_rows());
    for (Index k = computed_rows() - 1; k >= 0; --k) {
      const Eigen::VectorXcd& u = reflectors[static_cast<std::size_t>(k)];
      const double unorm2 = u.squaredNorm();
      if (unorm2 == 0.0) continue;
      auto block = X.bottomRows(input_rows - k);
      const Eigen::RowVectorXcd s = u.adjoint() * block;
      block.noalias() -= (2.0 / unorm2) * u * s;
    }
    return X;
  }
};

namespace detail {

/// Reflectors are grouped in blocks of this many for compact-WY application.
inline constexpr Index kQrBlock = 32;
/// Column chunk width for parallel refreshes. Fixed, so the arithmetic done
/// on a column does not depend on how chunks land on threads.
inline constexpr Index kQrChunk = 64;
/// Stale columns whose norm bound is within this factor of the leading bound
/// are refreshed together. The bounds cluster tightly, so wider batches mostly
/// add column traffic.
inline constexpr double kQrBatchRatio = 0.995;

/// Compact-WY form of H_r0 ... H_{r1-1}: that product is I - Y T Y^H, with
/// Y holding u_r in rows r - r0.. of column r - r0.
struct ReflectorBlock {
  Index first = 0;
  Eigen::MatrixXcd Y;
  Eigen::MatrixXcd T;
};

inline ReflectorBlock make_block(const std::vector<Eigen::VectorXcd>& u, const std::vector<double>& tau, Index first,
                                 Index m) {
  const Index w = kQrBlock;
  ReflectorBlock b;
  b.first = first;
  b.Y = Eigen::MatrixXcd::Zero(m - first, w);
  b.T = Eigen::MatrixXcd::Zero(w, w);
  for (Index i = 0; i < w; ++i) {
    const Index r = first + i;
    b.Y.col(i).tail(m - r) = u[static_cast<std::size_t>(r)];
    const double t = tau[static_cast<std::size_t>(r)];
    if (i > 0) {
      const Eigen::VectorXcd yy = b.Y.leftCols(i).adjoint() * b.Y.col(i);
      const Eigen::VectorXcd ty = b.T.topLeftCorner(i, i).triangularView<Eigen::Upper>() * yy;
      b.T.col(i).head(i) = -t * ty;
    }
    b.T(i, i) = t;
  }
  return b;
}

}  // namespace detail

/// Householder QR with greedy column pivoting: step k takes the remaining
/// column of largest 2-norm (ties go to the smallest column index).
///
/// Left-looking and lazy. Each column carries an upper bound on its trailing
/// norm and the number of reflectors already applied to it; a column is only
/// brought up to date when its bound could make it the next pivot, so the
/// pivots are exactly the greedy ones while most steps touch few columns.
/// Refreshes apply whole reflector blocks with GEMMs.
inline PivotedQRResult pivoted_qr(Eigen::MatrixXcd A, const QrOptions& options = {}) {
  const Index m = A.rows();
  const Index n = A.cols();
  detail::require(m > 0 && n > 0, "pivoted_qr: empty matrix");
  const Index kmax = std::min(m, n);

  std::vector<Eigen::VectorXcd> u;
  std::vector<double> tau;
  std::vector<detail::ReflectorBlock> blocks;
  std::vector<Index> applied(static_cast<std::size_t>(n), 0);
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd bound(n);
#pragma omp parallel for schedule(static)
  for (Index j = 0; j < n; ++j) bound[j] = A.col(j).norm();

  // Brings the given columns up to step k, then sets their exact trailing norms.
  const auto refresh = [&](std::vector<Index> cols, Index k) {
    std::sort(cols.begin(), cols.end(), [&](Index a, Index b) {
      const auto sa = applied[static_cast<std::size_t>(a)], sb = applied[static_cast<std::size_t>(b)];
      return sa != sb ? sa < sb : a < b;
    });
    const Index count = static_cast<Index>(cols.size());
    const Index nchunks = (count + detail::kQrChunk - 1) / detail::kQrChunk;
#pragma omp parallel for schedule(dynamic, 1)
    for (Index c = 0; c < nchunks; ++c) {
      const Index c0 = c * detail::kQrChunk;
      const Index w = std::min(detail::kQrChunk, count - c0);
      Eigen::MatrixXcd C(m, w);
      std::vector<Index> start(static_cast<std::size_t>(w));
      for (Index q = 0; q < w; ++q) {
        const Index j = cols[static_cast<std::size_t>(c0 + q)];
        C.col(q) = A.col(j);
        start[static_cast<std::size_t>(q)] = applied[static_cast<std::size_t>(j)];
      }
      // Columns are sorted by start, so those needing reflector r form a prefix.
      const auto prefix = [&](Index r) {
        return static_cast<Index>(std::upper_bound(start.begin(), start.end(), r) - start.begin());
      };
      Index r = start.front();
      while (r < k) {
        // Whole block for the columns that need all of it, single reflectors
        // for the ones that start inside it.
        Index lo = 0;
        Index stop = r + 1;
        const std::size_t b = static_cast<std::size_t>(r / detail::kQrBlock);
        if (r % detail::kQrBlock == 0 && b < blocks.size()) {
          const auto& blk = blocks[b];
          lo = prefix(r);
          auto Cb = C.block(r, 0, m - r, lo);
          Eigen::MatrixXcd W = blk.Y.adjoint() * Cb;
          W = blk.T.adjoint().triangularView<Eigen::Lower>() * W;
          Cb.noalias() -= blk.Y * W;
          stop = r + detail::kQrBlock;
        }
        for (Index s = r; s < stop; ++s) {
          const Index hi = prefix(s);
          if (hi <= lo) continue;
          const auto& us = u[static_cast<std::size_t>(s)];
          auto Cb = C.block(s, lo, m - s, hi - lo);
          const Eigen::RowVectorXcd dots = us.adjoint() * Cb;
          Cb.noalias() -= (tau[static_cast<std::size_t>(s)] * us) * dots;
        }
        r = stop;
      }
      for (Index q = 0; q < w; ++q) {
        const Index j = cols[static_cast<std::size_t>(c0 + q)];
        A.col(j) = C.col(q);
        applied[static_cast<std::size_t>(j)] = k;
        bound[j] = C.col(q).tail(m - k).norm();
      }
    }
  };

  PivotedQRResult result;
  result.input_rows = m;
  double r00 = 0.0;
  Index computed = kmax;
  for (Index k = 0; k < kmax; ++k) {
    Index p = -1;
    while (p < 0) {
      Index best = -1;
      for (Index j = 0; j < n; ++j)
        if (!taken[static_cast<std::size_t>(j)] && (best < 0 || bound[j] > bound[best])) best = j;
      if (applied[static_cast<std::size_t>(best)] == k) {
        p = best;
        break;
      }
      std::vector<Index> batch;
      const double cut = detail::kQrBatchRatio * bound[best];
      for (Index j = 0; j < n; ++j)
        if (!taken[static_cast<std::size_t>(j)] && applied[static_cast<std::size_t>(j)] < k && bound[j] >= cut)
          batch.push_back(j);
      refresh(std::move(batch), k);
    }

    taken[static_cast<std::size_t>(p)] = 1;
    result.pivots.push_back(p);
    auto x = A.col(p).tail(m - k);
    const double xnorm = x.norm();
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(m - k);
    double t = 0.0;
    if (xnorm > 0.0) {
      const cplx alpha = x[0];
      const double alpha_abs = std::abs(alpha);
      const cplx phase = alpha_abs > 0.0 ? alpha / alpha_abs : cplx(1.0, 0.0);
      const cplx beta = -phase * xnorm;
      v = x;
      v[0] -= beta;
      t = 1.0 / (xnorm * (xnorm + alpha_abs));  // 2 / |v|^2
      x.setZero();
      x[0] = beta;
    }
    applied[static_cast<std::size_t>(p)] = k + 1;
    if (options.keep_reflectors) result.reflectors.push_back(v);
    u.push_back(std::move(v));
    tau.push_back(t);
    if ((k + 1) % detail::kQrBlock == 0) blocks.push_back(detail::make_block(u, tau, k + 1 - detail::kQrBlock, m));

    if (k == 0) r00 = xnorm;
    if (options.stop_tolerance > 0.0 && xnorm < options.stop_tolerance * r00) {
      computed = k + 1;
      break;
    }
  }

  std::vector<Index> rest;
  for (Index j = 0; j < n; ++j)
    if (!taken[static_cast<std::size_t>(j)]) rest.push_back(j);
  std::vector<Index> stale;
  for (const Index j : rest)
    if (applied[static_cast<std::size_t>(j)] < computed) stale.push_back(j);
  if (!stale.empty()) refresh(std::move(stale), computed);
  result.pivots.insert(result.pivots.end(), rest.begin(), rest.end());

  result.R.resize(computed, n);
  for (Index c = 0; c < n; ++c) result.R.col(c) = A.col(result.pivots[static_cast<std::size_t>(c)]).head(computed);
  result.R = result.R.triangularView<Eigen::Upper>();
  result.phases = Eigen::VectorXcd::Ones(computed);
  for (Index k = 0; k < std::min(computed, n); ++k) {
    const double magnitude = std::abs(result.R(k, k));
    if (magnitude == 0.0) continue;
    result.phases[k] = result.R(k, k) / magnitude;
    result.R.row(k) *= std::conj(result.phases[k]);
    result.R(k, k) = magnitude;
  }
  return result;
}

inline PivotedQRResult pivoted_qr(const SketchMatrix& sketched, const QrOptions& options = {}) {
  return pivoted_qr(sketched.values, options);
}

// ---------------------------------------------------------------------------
// Rank selection and the interpolation matrix

/// Number of leading diagonal entries with |R_kk| >= epsilon |R_00|
/// (all computed entries when none falls below).
inline Index select_rank(const PivotedQRResult& qr, double epsilon) {
  detail::require(epsilon > 0.0 && epsilon < 1.0, "select_rank: epsilon must lie in (0, 1)");
  const Eigen::VectorXd d = qr.diagonal_magnitudes();
  if (d.size() == 0 || d[0] == 0.0) throw NumericalError("select_rank: R has a zero leading diagonal (degenerate input)");
  const double cutoff = epsilon * d[0];
  Index k = 0;
  while (k < d.size() && d[k] >= cutoff) ++k;
  return k;
}

struct InterpolativeBasis {
  PeriodicGrid grid;
  /// Grid indices x_mu in pivot order.
  std::vector<Index> selected_points;
  /// N_aux x n; row mu is the auxiliary function P_mu on the grid.
  Eigen::MatrixXd P;
  double epsilon = std::numeric_limits<double>::quiet_NaN();
  Index n_aux = 0;
  /// |Im P|_F / |P|_F of the complex interpolation matrix before the real part was taken.
  double imag_relative = 0.0;
  StageTimings timings;

  bool imag_warning() const { return imag_relative > kImagWarningThreshold; }
};

/// P = R11^{-1} [R11 R12] E^{-1} by back substitution, real part kept.
inline InterpolativeBasis interpolation_basis(const PivotedQRResult& qr, Index n_aux, const PeriodicGrid& grid) {
  const Index n = static_cast<Index>(qr.pivots.size());
  detail::require(n == grid.n, "interpolation_basis: column count differs from the grid size");
  detail::require(n_aux >= 1 && n_aux <= qr.computed_rows() && n_aux <= n,
                  "interpolation_basis: N_aux out of range");
  const Eigen::VectorXd d = qr.diagonal_magnitudes();
  if (d[n_aux - 1] < 1e3 * std::numeric_limits<double>::epsilon() * d[0])
    throw NumericalError("interpolation_basis: R11 is numerically singular; threshold too small");

  const Index rest = n - n_aux;
  Eigen::MatrixXcd T;
  if (rest > 0)
    T = qr.R.topLeftCorner(n_aux, n_aux).triangularView<Eigen::Upper>().solve(qr.R.block(0, n_aux, n_aux, rest));

  InterpolativeBasis basis;
  basis.grid = grid;
  basis.n_aux = n_aux;
  basis.selected_points.assign(qr.pivots.begin(), qr.pivots.begin() + n_aux);
  basis.P.resize(n_aux, n);
  for (Index c = 0; c < n_aux; ++c) {
    basis.P.col(qr.pivots[static_cast<std::size_t>(c)]).setZero();
    basis.P(c, qr.pivots[static_cast<std::size_t>(c)]) = 1.0;
  }
  for (Index c = 0; c < rest; ++c) basis.P.col(qr.pivots[static_cast<std::size_t>(n_aux + c)]) = T.col(c).real();

  if (rest > 0) {
    const double total = std::sqrt(T.squaredNorm() + static_cast<double>(n_aux));
    basis.imag_relative = T.imag().norm() / total;
  }
  return basis;
}

/// Randomized column selection: sketch -> pivoted QR -> rank -> basis.
inline InterpolativeBasis compress(const OrbitalSet& orbitals, double epsilon, int r = kDefaultOversampling,
                                   std::uint64_t seed = 0) {
  detail::require(epsilon > 0.0 && epsilon < 1.0, "compress: epsilon must lie in (0, 1)");
  StageTimings timings;
  Stopwatch clock;
  SketchMatrix sketched = sketch(orbitals, r, seed);
  timings["sketch"] = clock.seconds();

  clock.reset();
  const PivotedQRResult qr = pivoted_qr(std::move(sketched.values), QrOptions{epsilon, false});
  timings["qr"] = clock.seconds();

  clock.reset();
  const Index n_aux = select_rank(qr, epsilon);
  InterpolativeBasis basis = interpolation_basis(qr, n_aux, orbitals.grid);
  timings["basis"] = clock.seconds();

  basis.epsilon = epsilon;
  basis.timings = std::move(timings);
  return basis;
}

/// Sum of the compress stage times.
inline double compress_seconds(const InterpolativeBasis& basis) {
  double total = 0.0;
  for (const char* stage : {"sketch", "qr", "basis"}) {
    const auto it = basis.timings.find(stage);
    if (it != basis.timings.end()) total += it->second;
  }
  return total;
}

}  // namespace thc
