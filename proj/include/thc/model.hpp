#pragma once

#include <lapacke.h>

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "thc/error.hpp"
#include "thc/rng.hpp"
#include "thc/types.hpp"

namespace thc {

/// Uniform periodic grid on the unit torus [0,1)^dim, m points per axis.
///
/// Flat point index g = (i0 * m + i1) * m + i2 (last axis fastest), which is
/// also the row-major layout FFTW expects for the 3D transforms.
struct PeriodicGrid {
  int dim = 1;
  int points_per_axis = 2;
  Index n = 2;
  double h = 0.5;

  std::array<int, 3> axis_indices(Index g) const {
    std::array<int, 3> a{0, 0, 0};
    for (int axis = dim - 1; axis >= 0; --axis) {
      a[static_cast<std::size_t>(axis)] = static_cast<int>(g % points_per_axis);
      g /= points_per_axis;
    }
    return a;
  }

  double coordinate(Index g, int axis) const {
    return static_cast<double>(axis_indices(g)[static_cast<std::size_t>(axis)]) / points_per_axis;
  }

  /// Signed wave number in [-m/2, m/2) for FFT bin `a` along one axis.
  int wave_number(int a) const { return a < points_per_axis / 2 ? a : a - points_per_axis; }

  std::vector<int> extents() const { return std::vector<int>(static_cast<std::size_t>(dim), points_per_axis); }

  friend bool operator==(const PeriodicGrid&, const PeriodicGrid&) = default;
};

inline PeriodicGrid build_grid(int dim, int points_per_axis) {
  detail::require(dim == 1 || dim == 3, "build_grid: dim must be 1 or 3");
  detail::require(points_per_axis >= 2 && points_per_axis % 2 == 0,
                  "build_grid: points_per_axis must be even and >= 2");
  PeriodicGrid grid;
  grid.dim = dim;
  grid.points_per_axis = points_per_axis;
  grid.n = 1;
  for (int d = 0; d < dim; ++d) grid.n *= points_per_axis;
  grid.h = 1.0 / static_cast<double>(grid.n);
  return grid;
}

struct Potential {
  PeriodicGrid grid;
  Eigen::VectorXd values;
  int num_modes = 0;
  double amplitude = 0.0;
  std::uint64_t seed = 0;
};

struct OrbitalSet {
  PeriodicGrid grid;
  /// N x n; row i holds psi_i on the grid. Column-major, so the N orbital
  /// values at one grid point are contiguous.
  Eigen::MatrixXd values;
  Eigen::VectorXd eigenvalues;

  Index count() const { return values.rows(); }

  /// The lowest `n_orbitals` orbitals of this set.
  OrbitalSet leading(Index n_orbitals) const {
    detail::require(n_orbitals >= 1 && n_orbitals <= count(), "OrbitalSet::leading: count out of range");
    return OrbitalSet{grid, values.topRows(n_orbitals), eigenvalues.head(n_orbitals)};
  }
};

using WaveVector = std::array<int, 3>;

/// Number of conjugate pairs {k, -k} of nonzero wave vectors with no Nyquist
/// component, i.e. the modes random_potential can populate.
inline Index available_modes(const PeriodicGrid& grid) {
  Index total = 1;
  for (int d = 0; d < grid.dim; ++d) total *= grid.points_per_axis - 1;
  return (total - 1) / 2;
}

/// One representative per conjugate pair (first nonzero component positive),
/// ordered by |k|^2, ties lexicographically by the integer components.
inline std::vector<WaveVector> lowest_modes(const PeriodicGrid& grid, Index count) {
  detail::require(count >= 0 && count <= available_modes(grid),
                  "lowest_modes: requested more modes than the grid resolves");
  const int kmax = grid.points_per_axis / 2 - 1;
  const int lo1 = grid.dim == 3 ? -kmax : 0;
  std::vector<WaveVector> reps;
  for (int k0 = -kmax; k0 <= kmax; ++k0)
    for (int k1 = lo1; k1 <= (grid.dim == 3 ? kmax : 0); ++k1)
      for (int k2 = lo1; k2 <= (grid.dim == 3 ? kmax : 0); ++k2) {
        const WaveVector k{k0, k1, k2};
        const auto first = std::find_if(k.begin(), k.end(), [](int c) { return c != 0; });
        if (first != k.end() && *first > 0) reps.push_back(k);
      }
  const auto norm2 = [](const WaveVector& k) { return k[0] * k[0] + k[1] * k[1] + k[2] * k[2]; };
  std::sort(reps.begin(), reps.end(), [&](const WaveVector& a, const WaveVector& b) {
    const int na = norm2(a), nb = norm2(b);
    return na != nb ? na < nb : a < b;
  });
  reps.resize(static_cast<std::size_t>(count));
  return reps;
}

/// Real random potential with i.i.d. N(0,1) complex Fourier coefficients
/// (scaled by `amplitude`) on the `num_modes` lowest conjugate pairs.
inline Potential random_potential(const PeriodicGrid& grid, int num_modes, double amplitude,
                                  std::uint64_t seed) {
  detail::require(num_modes >= 0, "random_potential: num_modes must be nonnegative");
  detail::require(num_modes <= available_modes(grid),
                  "random_potential: num_modes exceeds the modes available on this grid");
  const auto modes = lowest_modes(grid, num_modes);
  CounterRng rng(seed, Stream::potential);
  std::vector<cplx> coeffs;
  coeffs.reserve(modes.size());
  for (std::size_t q = 0; q < modes.size(); ++q) {
    const double re = rng.normal();
    const double im = rng.normal();
    coeffs.emplace_back(amplitude * re, amplitude * im);
  }

  const int m = grid.points_per_axis;
  Eigen::VectorXd values = Eigen::VectorXd::Zero(grid.n);
  for (Index g = 0; g < grid.n; ++g) {
    const auto a = grid.axis_indices(g);
    double v = 0.0;
    for (std::size_t q = 0; q < modes.size(); ++q) {
      // Reduce k.x modulo the period in integers so the phase is exact.
      long phase = 0;
      for (int d = 0; d < grid.dim; ++d) phase += static_cast<long>(modes[q][d]) * a[static_cast<std::size_t>(d)];
      phase = ((phase % m) + m) % m;
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(phase) / m;
      v += 2.0 * (coeffs[q].real() * std::cos(theta) - coeffs[q].imag() * std::sin(theta));
    }
    values[g] = v;
  }
  if (num_modes > 0) values.array() -= values.mean();
  return Potential{grid, std::move(values), num_modes, amplitude, seed};
}

/// First column of the circulant -1/2 * L for one axis, where L is the
/// Fourier-spectral Laplacian with symbol -(2 pi k)^2, k in [-m/2, m/2).
inline Eigen::VectorXd kinetic_stencil(int m) {
  Eigen::VectorXd column(m);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int d = 0; d < m; ++d) {
    double s = 0.0;
    for (int k = -m / 2; k < m / 2; ++k) {
      const long phase = ((static_cast<long>(k) * d) % m + m) % m;
      s += (two_pi * k) * (two_pi * k) * std::cos(two_pi * static_cast<double>(phase) / m);
    }
    column[d] = 0.5 * s / m;
  }
  return column;
}

/// Dense H = -1/2 Laplacian + diag(V).
inline Eigen::MatrixXd hamiltonian_matrix(const PeriodicGrid& grid, const Potential& potential) {
  detail::require(potential.grid == grid, "hamiltonian_matrix: potential lives on a different grid");
  const int m = grid.points_per_axis;
  const Eigen::VectorXd t = kinetic_stencil(m);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(grid.n, grid.n);
  for (Index g = 0; g < grid.n; ++g) {
    const auto a = grid.axis_indices(g);
    for (int axis = 0; axis < grid.dim; ++axis) {
      auto b = a;
      for (int c = 0; c < m; ++c) {
        b[static_cast<std::size_t>(axis)] = c;
        Index g2 = 0;
        for (int d = 0; d < grid.dim; ++d) g2 = g2 * m + b[static_cast<std::size_t>(d)];
        const int offset = ((c - a[static_cast<std::size_t>(axis)]) % m + m) % m;
        H(g2, g) += t[offset];
      }
    }
    H(g, g) += potential.values[g];
  }
  return H;
}

/// Lowest N eigenpairs of the dense Hamiltonian (LAPACK dsyevr), scaled so
/// that h * sum_g psi_i(g) psi_j(g) = delta_ij. Each orbital's first
/// largest-magnitude entry is made positive.
inline OrbitalSet solve_orbitals(const PeriodicGrid& grid, const Potential& potential, Index n_orbitals) {
  detail::require(n_orbitals >= 1 && n_orbitals <= grid.n, "solve_orbitals: need 1 <= N <= n");
  Eigen::MatrixXd H = hamiltonian_matrix(grid, potential);
  const auto n = static_cast<lapack_int>(grid.n);
  const auto count = static_cast<lapack_int>(n_orbitals);
  Eigen::VectorXd w(grid.n);
  Eigen::MatrixXd Z(grid.n, n_orbitals);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(n_orbitals));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'I', 'U', n, H.data(), n, 0.0, 0.0, 1, count,
                                         0.0, &found, w.data(), Z.data(), n, support.data());
  if (info != 0 || found != count)
    throw NumericalError("solve_orbitals: dsyevr failed (info=" + std::to_string(info) + ")");

  for (Index i = 0; i < n_orbitals; ++i) {
    Index arg = 0;
    Z.col(i).cwiseAbs().maxCoeff(&arg);
    if (Z(arg, i) < 0) Z.col(i) = -Z.col(i);
  }
  OrbitalSet orbitals;
  orbitals.grid = grid;
  orbitals.values = Z.transpose() / std::sqrt(grid.h);
  orbitals.eigenvalues = w.head(n_orbitals);
  return orbitals;
}

}  // namespace thc
