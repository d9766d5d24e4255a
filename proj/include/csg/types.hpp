// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <vector>

namespace csg {

// Sample-major storage: one sample per row, contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CVector = Eigen::VectorXcd;

using Labels = std::vector<std::uint32_t>;

/// Default floor applied before dB conversion: 1e-12 mW, i.e. -120 dBm.
inline constexpr double kDefaultFloorMw = 1e-12;

}  // namespace csg
