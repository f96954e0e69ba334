#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstddef>
#include <utility>
#include <vector>

namespace grembed {

using Index = Eigen::Index;
using NodeIndex = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

using NodePair = std::pair<NodeIndex, NodeIndex>;

/// Dense |V|x|V| objects are refused above this node count unless the caller raises it.
inline constexpr Index kDefaultDenseCap = 5000;

}  // namespace grembed
