#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "thc/coulomb.hpp"
#include "thc/error.hpp"
#include "thc/interpolative.hpp"
#include "thc/model.hpp"
#include "thc/parallel.hpp"
#include "thc/rng.hpp"
#include "thc/types.hpp"

namespace thc {

/// <ij|kl> ~= sum_{mu nu} X_i^mu X_j^mu V_{mu nu} X_k^nu X_l^nu.
struct THCFactor {
  /// N x N_aux collocation matrix, X(i, mu) = psi_i(x_mu).
  Eigen::MatrixXd X;
  THCCore core;
  std::vector<Index> selected_points;
};

inline THCFactor assemble_thc(const OrbitalSet& orbitals, const InterpolativeBasis& basis, const KernelSpec& kernel) {
  detail::require(orbitals.grid == basis.grid, "assemble_thc: orbitals and basis live on different grids");
  THCFactor factor;
  factor.selected_points = basis.selected_points;
  factor.X.resize(orbitals.count(), basis.n_aux);
  for (Index mu = 0; mu < basis.n_aux; ++mu)
    factor.X.col(mu) = orbitals.values.col(basis.selected_points[static_cast<std::size_t>(mu)]);
  factor.core = thc_core_matrix(kernel, basis);
  return factor;
}

inline double eri_thc(const THCFactor& factor, Index i, Index j, Index k, Index l) {
  const Index N = factor.X.rows();
  detail::require(i >= 0 && i < N && j >= 0 && j < N && k >= 0 && k < N && l >= 0 && l < N,
                  "eri_thc: orbital index out of range");
  const Eigen::VectorXd u = factor.X.row(i).cwiseProduct(factor.X.row(j)).transpose();
  const Eigen::VectorXd w = factor.X.row(k).cwiseProduct(factor.X.row(l)).transpose();
  return u.dot(factor.core.V * w);
}

/// All N^4 compressed integrals, row (i N + j), column (k N + l). N <= 12.
inline Eigen::MatrixXd eri_thc_tensor(const THCFactor& factor) {
  const Index N = factor.X.rows();
  detail::require(N <= kMaxDenseEriOrbitals, "eri_thc_tensor: N too large to materialize N^4 entries");
  Eigen::MatrixXd U(N * N, factor.X.cols());
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j < N; ++j) U.row(i * N + j) = factor.X.row(i).cwiseProduct(factor.X.row(j));
  return U * factor.core.V * U.transpose();
}

/// Interpolated pair density sum_mu psi_i(x_mu) psi_j(x_mu) P_mu.
inline Eigen::VectorXd fitted_pair_density(const InterpolativeBasis& basis, const OrbitalSet& orbitals, Index i,
                                           Index j) {
  const Index N = orbitals.count();
  detail::require(i >= 0 && i < N && j >= 0 && j < N, "fitted_pair_density: orbital index out of range");
  Eigen::VectorXd c(basis.n_aux);
  for (Index mu = 0; mu < basis.n_aux; ++mu) {
    const Index x = basis.selected_points[static_cast<std::size_t>(mu)];
    c[mu] = orbitals.values(i, x) * orbitals.values(j, x);
  }
  return basis.P.transpose() * c;
}

// ---------------------------------------------------------------------------
// Error metrics

struct OrbitalPair {
  Index i = 0;
  Index j = 0;
};

/// Per-pair fit errors and norms, all h-weighted.
struct PairErrors {
  std::vector<OrbitalPair> pairs;
  Eigen::VectorXd e2;            // |rho - rho~|_2
  Eigen::VectorXd ec;            // |rho - rho~|_C
  Eigen::VectorXd norm2;         // |rho|_2
  Eigen::VectorXd normc;         // |rho|_C
  Eigen::VectorXd fitted_normc;  // |rho~|_C
};

inline PairErrors pair_errors(const OrbitalSet& orbitals, const InterpolativeBasis& basis, const KernelSpec& kernel,
                              std::vector<OrbitalPair> pairs) {
  detail::require(orbitals.grid == basis.grid && basis.grid == kernel.grid, "pair_errors: grid mismatch");
  const Index N = orbitals.count();
  for (const auto& p : pairs)
    detail::require(p.i >= 0 && p.i < N && p.j >= 0 && p.j < N, "pair_errors: orbital index out of range");

  PairErrors out;
  const Index count = static_cast<Index>(pairs.size());
  out.e2.resize(count);
  out.ec.resize(count);
  out.norm2.resize(count);
  out.normc.resize(count);
  out.fitted_normc.resize(count);

  // Group pairs by their first orbital so each group is one GEMM.
  std::map<Index, std::vector<Index>> groups;
  for (Index q = 0; q < count; ++q) groups[pairs[static_cast<std::size_t>(q)].i].push_back(q);
  std::vector<std::pair<Index, std::vector<Index>>> work(groups.begin(), groups.end());

  Eigen::MatrixXd Xsel(N, basis.n_aux);
  for (Index mu = 0; mu < basis.n_aux; ++mu)
    Xsel.col(mu) = orbitals.values.col(basis.selected_points[static_cast<std::size_t>(mu)]);
  const double h = orbitals.grid.h;
  const Index n = orbitals.grid.n;

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t w = 0; w < work.size(); ++w) {
    const Index i = work[w].first;
    const auto& members = work[w].second;
    const Index rows = static_cast<Index>(members.size());
    Eigen::MatrixXd rho(rows, n);
    Eigen::MatrixXd coeff(rows, basis.n_aux);
    for (Index r = 0; r < rows; ++r) {
      const Index j = pairs[static_cast<std::size_t>(members[static_cast<std::size_t>(r)])].j;
      rho.row(r) = orbitals.values.row(i).cwiseProduct(orbitals.values.row(j));
      coeff.row(r) = Xsel.row(i).cwiseProduct(Xsel.row(j));
    }
    Eigen::MatrixXd fitted(rows, n);
    fitted.noalias() = coeff * basis.P;
    const Eigen::MatrixXd residual = rho - fitted;
    const Eigen::VectorXd ec = coulomb_norms_rows(kernel, residual);
    const Eigen::VectorXd nc = coulomb_norms_rows(kernel, rho);
    const Eigen::VectorXd fc = coulomb_norms_rows(kernel, fitted);
    for (Index r = 0; r < rows; ++r) {
      const Index q = members[static_cast<std::size_t>(r)];
      out.e2[q] = std::sqrt(h * residual.row(r).squaredNorm());
      out.norm2[q] = std::sqrt(h * rho.row(r).squaredNorm());
      out.ec[q] = ec[r];
      out.normc[q] = nc[r];
      out.fitted_normc[q] = fc[r];
    }
  }
  out.pairs = std::move(pairs);
  return out;
}

struct ErrorMode {
  enum class Kind { full, sampled };
  Kind kind = Kind::full;
  Index count = 0;
  std::uint64_t seed = 0;

  static ErrorMode full() { return {}; }
  static ErrorMode sampled(Index count, std::uint64_t seed) { return {Kind::sampled, count, seed}; }
};

struct ErrorReport {
  Index N = 0;
  Index n = 0;
  Index n_aux = 0;
  double epsilon = 0.0;
  double max_e2 = 0.0;
  double max_ec = 0.0;
  double rel_2_error = 0.0;
  double rel_c_error = 0.0;
  StageTimings stage_timings;
  Index pairs_evaluated = 0;
};

/// Uniformly sampled ordered pairs (without replacement), seeded.
inline std::vector<OrbitalPair> sample_pairs(Index n_orbitals, Index count, std::uint64_t seed) {
  CounterRng rng(seed, Stream::pairs);
  std::vector<OrbitalPair> pairs;
  for (const auto I : sample_without_replacement(rng, n_orbitals * n_orbitals, count))
    pairs.push_back({I / n_orbitals, I % n_orbitals});
  return pairs;
}

/// Means over pairs of the L2 and Coulomb fit errors, divided by the mean
/// norms of the pair densities.
///
/// Full mode averages over all N^2 ordered pairs; since rho~_ij = rho~_ji it
/// evaluates i <= j and counts off-diagonal pairs twice.
inline ErrorReport error_metrics(const OrbitalSet& orbitals, const InterpolativeBasis& basis, const KernelSpec& kernel,
                                 const ErrorMode& mode = ErrorMode::full()) {
  Stopwatch clock;
  const Index N = orbitals.count();
  std::vector<OrbitalPair> pairs;
  std::vector<double> weights;
  if (mode.kind == ErrorMode::Kind::full) {
    for (Index i = 0; i < N; ++i)
      for (Index j = i; j < N; ++j) {
        pairs.push_back({i, j});
        weights.push_back(i == j ? 1.0 : 2.0);
      }
  } else {
    detail::require(mode.count >= 1 && mode.count <= N * N, "error_metrics: sample count must lie in [1, N^2]");
    pairs = sample_pairs(N, mode.count, mode.seed);
    weights.assign(pairs.size(), 1.0);
  }
  const PairErrors errors = pair_errors(orbitals, basis, kernel, pairs);

  double sum_w = 0.0, sum_e2 = 0.0, sum_ec = 0.0, sum_n2 = 0.0, sum_nc = 0.0;
  ErrorReport report;
  for (std::size_t q = 0; q < weights.size(); ++q) {
    const double w = weights[q];
    const auto qi = static_cast<Index>(q);
    sum_w += w;
    sum_e2 += w * errors.e2[qi];
    sum_ec += w * errors.ec[qi];
    sum_n2 += w * errors.norm2[qi];
    sum_nc += w * errors.normc[qi];
    report.max_e2 = std::max(report.max_e2, errors.e2[qi]);
    report.max_ec = std::max(report.max_ec, errors.ec[qi]);
  }
  // Constants have zero Coulomb norm, so that mean is judged relative to the L2 mean.
  constexpr double kDegenerateNorm = 1e-14;
  constexpr double kDegenerateCoulombRatio = 1e-10;
  if (sum_n2 / sum_w < kDegenerateNorm || sum_nc < kDegenerateCoulombRatio * sum_n2)
    throw NumericalError("error_metrics: mean pair-density norm is zero (degenerate input)");

  report.N = N;
  report.n = orbitals.grid.n;
  report.n_aux = basis.n_aux;
  report.epsilon = basis.epsilon;
  report.rel_2_error = sum_e2 / sum_n2;
  report.rel_c_error = sum_ec / sum_nc;
  report.pairs_evaluated = mode.kind == ErrorMode::Kind::full ? N * N : static_cast<Index>(pairs.size());
  report.stage_timings = basis.timings;
  report.stage_timings["metrics"] = clock.seconds();
  return report;
}

// ---------------------------------------------------------------------------
// Cauchy-Schwarz control of the ERI error

struct Quadruple {
  Index i = 0, j = 0, k = 0, l = 0;
};

inline std::vector<Quadruple> random_quadruples(Index n_orbitals, Index count, std::uint64_t seed) {
  CounterRng rng(seed, Stream::test);
  std::vector<Quadruple> out;
  const auto pick = [&] { return static_cast<Index>(rng.below(static_cast<std::uint64_t>(n_orbitals))); };
  for (Index q = 0; q < count; ++q) {
    Quadruple t;
    t.i = pick();
    t.j = pick();
    t.k = pick();
    t.l = pick();
    out.push_back(t);
  }
  return out;
}

struct BoundCheckReport {
  Index checked = 0;
  std::vector<Quadruple> violations;
  /// min over quadruples of (bound - |error|); negative means a violation.
  double min_margin = std::numeric_limits<double>::infinity();
  double max_margin = -std::numeric_limits<double>::infinity();
  double max_abs_error = 0.0;
};

inline constexpr double kBoundSlack = 1e-12;

/// Checks |<ij|kl> - <ij|kl>_THC| <= |rho_ij|_C e_kl + e_ij |rho~_kl|_C + slack.
inline BoundCheckReport error_bound_check(const OrbitalSet& orbitals, const InterpolativeBasis& basis,
                                          const KernelSpec& kernel, const std::vector<Quadruple>& quadruples) {
  const Index N = orbitals.count();
  std::map<std::pair<Index, Index>, Index> slot;
  std::vector<OrbitalPair> pairs;
  const auto intern = [&](Index a, Index b) {
    detail::require(a >= 0 && a < N && b >= 0 && b < N, "error_bound_check: orbital index out of range");
    const auto [it, inserted] = slot.try_emplace({a, b}, static_cast<Index>(pairs.size()));
    if (inserted) pairs.push_back({a, b});
    return it->second;
  };
  std::vector<std::pair<Index, Index>> slots;
  for (const auto& t : quadruples) slots.emplace_back(intern(t.i, t.j), intern(t.k, t.l));

  const PairErrors errors = pair_errors(orbitals, basis, kernel, pairs);
  const THCFactor factor = assemble_thc(orbitals, basis, kernel);

  BoundCheckReport report;
  for (std::size_t q = 0; q < quadruples.size(); ++q) {
    const auto& t = quadruples[q];
    const auto [left, right] = slots[q];
    const double exact = eri_exact(kernel, orbitals, t.i, t.j, t.k, t.l);
    const double compressed = eri_thc(factor, t.i, t.j, t.k, t.l);
    const double error = std::abs(exact - compressed);
    const double bound = errors.normc[left] * errors.ec[right] + errors.ec[left] * errors.fitted_normc[right];
    const double margin = bound + kBoundSlack - error;
    report.min_margin = std::min(report.min_margin, margin);
    report.max_margin = std::max(report.max_margin, margin);
    report.max_abs_error = std::max(report.max_abs_error, error);
    if (margin < 0.0) report.violations.push_back(t);
    ++report.checked;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Conventional L2 least-squares density fitting on the same auxiliary basis

struct DfResult {
  /// N^2 x N_aux, row i N + j holds C_ij (empty unless kept).
  Eigen::MatrixXd coefficients;
  double seconds = 0.0;
  /// Sum of all coefficients; keeps the work observable when they are dropped.
  double checksum = 0.0;
  bool regularized = false;
};

/// C_ij = S^{-1} (h P rho_ij) with S = h P P^T, one Cholesky reused for all
/// pairs. Set keep_coefficients = false for large N to stream the pairs.
inline DfResult df_least_squares(const OrbitalSet& orbitals, const InterpolativeBasis& basis,
                                 bool keep_coefficients = true) {
  detail::require(orbitals.grid == basis.grid, "df_least_squares: grid mismatch");
  Stopwatch clock;
  const Index N = orbitals.count();
  const Index n_aux = basis.n_aux;
  const double h = orbitals.grid.h;

  DfResult result;
  Eigen::MatrixXd S(n_aux, n_aux);
  S.noalias() = h * basis.P * basis.P.transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    S.diagonal().array() += 1e-12 * S.trace() / static_cast<double>(n_aux);
    llt.compute(S);
    result.regularized = true;
    if (llt.info() != Eigen::Success) throw NumericalError("df_least_squares: overlap matrix is singular");
  }

  if (keep_coefficients) result.coefficients.resize(N * N, n_aux);
  std::vector<double> partial(static_cast<std::size_t>(N), 0.0);
#pragma omp parallel for schedule(dynamic, 1)
  for (Index i = 0; i < N; ++i) {
    const Eigen::MatrixXd rho = pair_density_block(orbitals, i);
    Eigen::MatrixXd rhs(n_aux, N);
    rhs.noalias() = h * basis.P * rho.transpose();
    llt.solveInPlace(rhs);
    partial[static_cast<std::size_t>(i)] = rhs.sum();
    if (keep_coefficients) result.coefficients.middleRows(i * N, N) = rhs.transpose();
  }
  for (const double p : partial) result.checksum += p;
  result.seconds = clock.seconds();
  return result;
}

}  // namespace thc
