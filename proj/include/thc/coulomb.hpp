#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "thc/error.hpp"
#include "thc/fft.hpp"
#include "thc/interpolative.hpp"
#include "thc/model.hpp"
#include "thc/types.hpp"

namespace thc {

/// Periodic Coulomb kernel as a Fourier multiplier on the grid.
///
/// multiplier[g] belongs to the FFT bin with per-axis indices of g, i.e. to
/// the wave vector k with components wave_number(a) in [-m/2, m/2); its value
/// is 4 pi / |2 pi k|^2, and 0 at k = 0.
struct KernelSpec {
  PeriodicGrid grid;
  Eigen::VectorXd multiplier;
  std::shared_ptr<const FftPlan> plan;
};

inline KernelSpec kernel_multiplier(const PeriodicGrid& grid) {
  KernelSpec kernel;
  kernel.grid = grid;
  kernel.multiplier.resize(grid.n);
  const double two_pi = 2.0 * std::numbers::pi;
  for (Index g = 0; g < grid.n; ++g) {
    const auto a = grid.axis_indices(g);
    double k2 = 0.0;
    for (int d = 0; d < grid.dim; ++d) {
      const double k = grid.wave_number(a[static_cast<std::size_t>(d)]);
      k2 += k * k;
    }
    kernel.multiplier[g] = k2 == 0.0 ? 0.0 : 4.0 * std::numbers::pi / (two_pi * two_pi * k2);
  }
  kernel.plan = std::make_shared<const FftPlan>(grid.extents());
  return kernel;
}

namespace detail {

inline void check_on_grid(const KernelSpec& kernel, Index size, const char* who) {
  require(size == kernel.grid.n, std::string(who) + ": vector length differs from the grid size");
}

inline void load_real(FftBuffer& buffer, const Eigen::Ref<const Eigen::VectorXd>& f) {
  for (Index g = 0; g < f.size(); ++g) buffer[static_cast<std::size_t>(g)] = cplx(f[g], 0.0);
}

/// h^2 * sum_k multiplier_k |f^_k|^2 for an already-transformed buffer.
inline double spectral_energy(const KernelSpec& kernel, const FftBuffer& transformed) {
  double s = 0.0;
  for (Index g = 0; g < kernel.grid.n; ++g) s += kernel.multiplier[g] * std::norm(transformed[static_cast<std::size_t>(g)]);
  return kernel.grid.h * kernel.grid.h * s;
}

}  // namespace detail

/// (K f)(x) = IFFT(multiplier * FFT(f)) / n.
inline Eigen::VectorXd apply_kernel(const KernelSpec& kernel, const Eigen::Ref<const Eigen::VectorXd>& f) {
  detail::check_on_grid(kernel, f.size(), "apply_kernel");
  FftBuffer buffer(static_cast<std::size_t>(kernel.grid.n));
  detail::load_real(buffer, f);
  kernel.plan->forward(buffer);
  for (Index g = 0; g < kernel.grid.n; ++g) buffer[static_cast<std::size_t>(g)] *= kernel.multiplier[g];
  kernel.plan->backward(buffer);
  Eigen::VectorXd out(kernel.grid.n);
  const double inv_n = 1.0 / static_cast<double>(kernel.grid.n);
  for (Index g = 0; g < kernel.grid.n; ++g) out[g] = buffer[static_cast<std::size_t>(g)].real() * inv_n;
  return out;
}

/// Coulomb inner product (f, g)_C = h * sum_x f(x) (K g)(x).
inline double coulomb_inner(const KernelSpec& kernel, const Eigen::Ref<const Eigen::VectorXd>& f,
                            const Eigen::Ref<const Eigen::VectorXd>& g) {
  detail::check_on_grid(kernel, f.size(), "coulomb_inner");
  return kernel.grid.h * f.dot(apply_kernel(kernel, g));
}

/// The same quadratic form evaluated on the Fourier side (Plancherel).
inline double coulomb_energy_spectral(const KernelSpec& kernel, const Eigen::Ref<const Eigen::VectorXd>& f) {
  detail::check_on_grid(kernel, f.size(), "coulomb_energy_spectral");
  FftBuffer buffer(static_cast<std::size_t>(kernel.grid.n));
  detail::load_real(buffer, f);
  kernel.plan->forward(buffer);
  return detail::spectral_energy(kernel, buffer);
}

inline constexpr double kIndefiniteTolerance = 1e-12;

/// Coulomb seminorm; constants have norm zero.
inline double coulomb_norm(const KernelSpec& kernel, const Eigen::Ref<const Eigen::VectorXd>& f) {
  const double v = coulomb_inner(kernel, f, f);
  if (v < -kIndefiniteTolerance) throw NumericalError("coulomb_norm: negative Coulomb energy (indefinite kernel)");
  return v > 0.0 ? std::sqrt(v) : 0.0;
}

/// Coulomb norm of every row of F via one FFT per row.
inline Eigen::VectorXd coulomb_norms_rows(const KernelSpec& kernel, const Eigen::Ref<const Eigen::MatrixXd>& F) {
  detail::check_on_grid(kernel, F.cols(), "coulomb_norms_rows");
  Eigen::VectorXd norms(F.rows());
  FftBuffer buffer(static_cast<std::size_t>(kernel.grid.n));
  for (Index row = 0; row < F.rows(); ++row) {
    for (Index g = 0; g < F.cols(); ++g) buffer[static_cast<std::size_t>(g)] = cplx(F(row, g), 0.0);
    kernel.plan->forward(buffer);
    norms[row] = std::sqrt(detail::spectral_energy(kernel, buffer));
  }
  return norms;
}

/// Symmetric core V_{mu nu} = (P_mu, P_nu)_C.
struct THCCore {
  Eigen::MatrixXd V;
};

inline THCCore thc_core_matrix(const KernelSpec& kernel, const InterpolativeBasis& basis) {
  detail::require(basis.grid == kernel.grid, "thc_core_matrix: basis and kernel live on different grids");
  const Index n_aux = basis.P.rows();
  Eigen::MatrixXd KP(n_aux, kernel.grid.n);
#pragma omp parallel for schedule(static)
  for (Index mu = 0; mu < n_aux; ++mu) KP.row(mu) = apply_kernel(kernel, basis.P.row(mu).transpose()).transpose();
  THCCore core;
  core.V.noalias() = kernel.grid.h * basis.P * KP.transpose();
  core.V = 0.5 * (core.V + core.V.transpose()).eval();
  return core;
}

/// <ij|kl> = (rho_ij, rho_kl)_C evaluated directly on the grid.
inline double eri_exact(const KernelSpec& kernel, const OrbitalSet& orbitals, Index i, Index j, Index k, Index l) {
  const Eigen::VectorXd left = pair_density_row(orbitals, i, j);
  const Eigen::VectorXd right = pair_density_row(orbitals, k, l);
  return coulomb_inner(kernel, left, right);
}

inline constexpr Index kMaxDenseEriOrbitals = 12;

/// Full N^2 x N^2 ERI tensor, row (i N + j), column (k N + l). N <= 12.
inline Eigen::MatrixXd eri_exact_tensor(const KernelSpec& kernel, const OrbitalSet& orbitals) {
  const Index N = orbitals.count();
  detail::require(N <= kMaxDenseEriOrbitals, "eri_exact_tensor: N too large to materialize N^4 entries");
  const Eigen::MatrixXd A = pair_density_matrix(orbitals);
  Eigen::MatrixXd KA(A.rows(), A.cols());
  for (Index I = 0; I < A.rows(); ++I) KA.row(I) = apply_kernel(kernel, A.row(I).transpose()).transpose();
  Eigen::MatrixXd T = kernel.grid.h * A * KA.transpose();
  return 0.5 * (T + T.transpose());
}

}  // namespace thc
