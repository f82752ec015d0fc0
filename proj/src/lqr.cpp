#include "rmps/lqr.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace rmps {

namespace {

constexpr double kSymmetryTolerance = 1e-12;

}  // namespace

CostWeights::CostWeights(StateMat q, ControlMat r) : Q(std::move(q)), R(std::move(r)) {
  if (Q.rows() != Q.cols() || R.rows() != R.cols()) throw std::invalid_argument("CostWeights: non-square weights");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance ||
      (R - R.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance) {
    throw std::invalid_argument("CostWeights: weights must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<StateMat> qe(Q, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<ControlMat> re(R, Eigen::EigenvaluesOnly);
  if (qe.eigenvalues().minCoeff() < -kSymmetryTolerance) throw std::invalid_argument("CostWeights: Q must be PSD");
  if (re.eigenvalues().minCoeff() <= 0.0) throw std::invalid_argument("CostWeights: R must be PD");
}

CostWeights CostWeights::identity(int state_dim, int control_dim, double q, double r) {
  return CostWeights(StateMat::Identity(state_dim, state_dim) * q, ControlMat::Identity(control_dim, control_dim) * r);
}

LqrSolution solve_dare(const StateMat& A, const InputMat& B, const StateMat& Q, const ControlMat& R) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != B.cols() ||
      R.cols() != B.cols()) {
    throw DimensionError("solve_dare: dimension mismatch");
  }
  LqrSolution sol;
  StateMat P = Q;
  for (int it = 1; it <= kRiccatiMaxIterations; ++it) {
    const ControlMat S = R + B.transpose() * P * B;
    const Eigen::LDLT<ControlMat> ldlt(S);
    const GainMat BtP = B.transpose() * P;
    StateMat next = Q + A.transpose() * (P - BtP.transpose() * ldlt.solve(BtP)) * A;
    next = 0.5 * (next + next.transpose()).eval();
    if (!next.allFinite()) throw StabilizabilityError("solve_dare: iteration diverged");
    const double change = (next - P).cwiseAbs().maxCoeff();
    P = next;
    if (change <= kRiccatiTolerance) {
      sol.iterations = it;
      sol.P = P;
      const ControlMat S2 = R + B.transpose() * P * B;
      sol.K = S2.ldlt().solve(GainMat(B.transpose() * P * A));
      return sol;
    }
  }
  throw StabilizabilityError("solve_dare: no convergence within the iteration cap");
}

double riccati_residual(const LqrSolution& lqr, const StateMat& A, const InputMat& B, const StateMat& Q,
                        const ControlMat& R) {
  const StateMat& P = lqr.P;
  const ControlMat S = R + B.transpose() * P * B;
  const GainMat BtP = B.transpose() * P;
  const StateMat rhs = Q + A.transpose() * (P - BtP.transpose() * S.ldlt().solve(BtP)) * A;
  return (rhs - P).cwiseAbs().maxCoeff();
}

StateMat controllable_projector(const StateMat& A, const InputMat& B) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  Eigen::MatrixXd C(n, n * m);
  Eigen::MatrixXd block = B;
  for (Eigen::Index i = 0; i < n; ++i) {
    C.middleCols(i * m, m) = block;
    block = A * block;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeFullU);
  const auto& s = svd.singularValues();
  const double tol = std::max(1.0, s(0)) * 1e-9;
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > tol) ++rank;
  const Eigen::MatrixXd U = svd.matrixU().leftCols(rank);
  return StateMat(U * U.transpose());
}

LqrSolution lqr_at(const DynamicsModel& model, const Equilibrium& eq, const CostWeights& weights) {
  const Linearization lin = linearize(model, eq);
  const StateMat proj = controllable_projector(lin.A, lin.B);
  const bool full_rank = (proj - StateMat::Identity(proj.rows(), proj.cols())).cwiseAbs().maxCoeff() < 1e-9;
  const StateMat Q = full_rank ? weights.Q : StateMat(proj * weights.Q * proj);
  return solve_dare(lin.A, lin.B, Q, weights.R);
}

ControlVec stabilizing_control(const DynamicsModel& model, const LqrSolution& lqr, const Equilibrium& eq,
                               const StateVec& x) {
  return model.clamp_control(eq.u - lqr.K * (x - eq.x));
}

double terminal_cost(const LqrSolution& lqr, const Equilibrium& eq, const StateVec& x) {
  const StateVec d = x - eq.x;
  return d.dot(lqr.P * d);
}

double spectral_radius(const StateMat& M) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(M), false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace rmps
