// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include "farm/numerics/tensor.hpp"

namespace farm::num::detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

inline ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.raw(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

inline MatMap as_matrix(Tensor& t) {
  return MatMap(t.raw(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

// Row-wise stable softmax in place. Row by row so exp runs on contiguous
// memory and stays vectorized.
template <typename Derived>
void softmax_rows_inplace(Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r).array();
    row = (row - row.maxCoeff()).exp();
    row /= row.sum();
  }
}

}  // namespace farm::num::detail
