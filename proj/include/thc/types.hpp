#pragma once

#include <Eigen/Core>
#include <complex>

namespace thc {

using Index = Eigen::Index;
using cplx = std::complex<double>;

}  // namespace thc
