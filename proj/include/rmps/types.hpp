#pragma once

#include <Eigen/Dense>

namespace rmps {

// State and control dimensions are runtime values bounded at compile time so
// that every small vector/matrix lives on the stack.
inline constexpr int kMaxStateDim = 8;
inline constexpr int kMaxControlDim = 4;

using StateVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxStateDim, 1>;
using ControlVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxControlDim, 1>;

using StateMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxStateDim, kMaxStateDim>;
using InputMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxStateDim, kMaxControlDim>;
using GainMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxControlDim, kMaxStateDim>;
using ControlMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxControlDim, kMaxControlDim>;

}  // namespace rmps
