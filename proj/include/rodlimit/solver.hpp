#pragma once

// The two one-dimensional limit problems on a clamped skeleton.
//
// Extensional: find U_E in the K-orthogonal complement of ker B with
//   E * sum_arcs int (U_E'.T)(V'.T) = ell_E(V)  for all V.
// The operator is E * M_T; it is consistent-singular (its kernel is ker B),
// so the solve runs CG on the semidefinite system and projects the result
// back onto the complement. Because stiffness and constraint share
// quadrature points the projection removes a pure kernel component and the
// Galerkin residual survives untouched.
//
// Inextensional/torsion: find a kinematic pair (U_I, R) with U_I' = R x T
// and, for all test pairs (V, A),
//   (E/3) sum int [(R'.N)(A'.N) + (R'.B)(A'.B)] + (mu/3) sum int (R'.T)(A'.T)
//     = ell_I(V).
// The second-derivative form of the bending term has been reduced to first
// derivatives of R through the pair constraint; the equivalence of the two
// forms is exercised in the test suite. The constraint is enforced by
// 3-vector multipliers collocated at the stiffness quadrature points
// (discontinuous P1; piecewise-constant multipliers leave quadratic bubbles
// unconstrained and render the saddle system singular).

#include <rodlimit/loads.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/IterativeLinearSolvers>

#include <iomanip>
#include <limits>
#include <sstream>

namespace rodlimit {

struct Material {
  double lambda = 1.0;
  double mu = 1.0;

  Material() = default;
  Material(double l, double m) : lambda(l), mu(m) {
    if (l <= 0 || m <= 0) throw OutOfRange("Lame parameters must be positive");
  }
  // Young modulus of the isotropic tensor a(g) = lambda tr(g) I + 2 mu g.
  double youngs() const { return mu * (3 * lambda + 2 * mu) / (lambda + mu); }
  // Full tensor contraction (documentation and energy checks).
  double strain_energy_density(const Mat3& sym_grad) const {
    double tr = sym_grad.trace();
    return 0.5 * lambda * tr * tr + mu * sym_grad.squaredNorm();
  }
};

struct SolveDiagnostics {
  int iterations = 0;
  double galerkin_residual = 0;    // relative
  double constraint_residual = 0;  // enforced rows: weighted norm at the
                                   // collocation points, relative
  double kinematic_gap = 0;        // fine-rule L2 of U_I' - R x T; O(h^2)
                                   // interpolation accuracy indicator
  bool regularized = false;
  double energy = 0;  // 1/2 ell(u)
};

// ---------------------------------------------------------------------------

inline SkeletonField solve_extensional(const SpaceOperators& ops,
                                       const Material& mat,
                                       const AssembledLoads& loads,
                                       SolveDiagnostics* diag = nullptr) {
  const VecX& f = rhs_extensional(loads);
  SpMat A = ops.tangential_gram() * mat.youngs();
  const double fn = f.norm();
  if (fn == 0) {
    if (diag) {
      diag->iterations = 0;
      diag->galerkin_residual = 0;
      diag->energy = 0;
      diag->regularized = false;
    }
    return SkeletonField::zero(ops.mesh());
  }

  // The operator is singular (its kernel is ker B) but the enforced right
  // side is orthogonal to that kernel, so CG applies: the Krylov space stays
  // inside the range. In floating point the iterate still drifts along the
  // kernel, and that drift raises the smallest residual CG can reach. Two
  // measures keep the solve robust: a warm start from a direct solve of the
  // mildly shifted definite operator A + sigma K, and restarts of CG from the
  // projected (kernel-free) iterate until the projected residual is small.
  VecX x = VecX::Zero(A.rows());
  {
    const double sigma = 1e-10 * mat.youngs();
    Eigen::SimplicialLDLT<SpMat> shifted;
    SpMat S = A + sigma * ops.gram();
    shifted.compute(S);
    if (shifted.info() == Eigen::Success) x = shifted.solve(f);
    if (!x.allFinite()) x.setZero();
  }

  Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper,
                           Eigen::IdentityPreconditioner>
      cg;
  cg.setMaxIterations(4 * A.rows() + 100);
  cg.setTolerance(1e-14);
  cg.compute(A);

  SkeletonField best = SkeletonField::zero(ops.mesh());
  double best_rel = std::numeric_limits<double>::infinity();
  long iters = 0;
  bool reg = false;
  for (int sweep = 0; sweep < 6 && best_rel > 1e-11; ++sweep) {
    if (sweep > 0) {
      x = cg.solveWithGuess(f, x);
      iters += static_cast<long>(cg.iterations());
      if (!x.allFinite()) throw NoConvergence("extensional CG diverged");
    }
    auto sp = ops.split(SkeletonField(ops.mesh(), x));
    x = sp.extensional.dofs();
    double denom = std::max({fn, (A * x).norm(), 1e-300});
    double rel = (A * x - f).norm() / denom;
    if (rel < best_rel) {
      best_rel = rel;
      best = sp.extensional;
      reg = sp.regularized;
    }
  }
  if (best_rel > 1e-9) {
    std::ostringstream msg;
    msg << "extensional solve residual " << std::scientific
        << std::setprecision(3) << best_rel;
    throw NoConvergence(msg.str());
  }
  if (diag) {
    diag->iterations = static_cast<int>(iters);
    diag->galerkin_residual = best_rel;
    diag->energy = 0.5 * f.dot(best.dofs());
    diag->regularized = reg;
  }
  return best;
}

// ---------------------------------------------------------------------------

namespace detail {

// Stiffness of the reduced bending/torsion form on the rotation dofs.
inline SpMat assemble_rotation_stiffness(const MeshPtr& mesh, double E,
                                         double mu) {
  std::vector<Triplet> trip;
  const double kb = E / 3.0, kt = mu / 3.0;
  for (const auto& el : mesh->elements())
    for (const auto& qp : el.cq) {
      Mat3 M = kb * Mat3::Identity() + (kt - kb) * (qp.T * qp.T.transpose());
      for (int a = 0; a < 3; ++a) {
        int da = mesh->dof(el.nodes[a], 0);
        if (da < 0) continue;
        for (int b = 0; b < 3; ++b) {
          int db = mesh->dof(el.nodes[b], 0);
          if (db < 0) continue;
          double v = qp.w * qp.dshp[a] * qp.dshp[b];
          for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
              if (M(r, c) != 0) trip.emplace_back(da + r, db + c, v * M(r, c));
        }
      }
    }
  SpMat A(mesh->n_dofs(), mesh->n_dofs());
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

// Vector-valued pair constraint rows: for each (element, point q, comp k)
//   V'(q)_k - (A(q) x T(q))_k = V'(q)_k + (skew(T) A(q))_k.
// Unknown layout: x = [U dofs; R dofs].
inline SpMat assemble_pair_constraint(const MeshPtr& mesh) {
  std::vector<Triplet> trip;
  const auto& els = mesh->elements();
  int n = mesh->n_dofs();
  for (std::size_t e = 0; e < els.size(); ++e)
    for (int q = 0; q < 2; ++q) {
      const QuadPoint& qp = els[e].cq[q];
      int row0 = 3 * (2 * static_cast<int>(e) + q);
      Mat3 S = skew(qp.T);
      for (int a = 0; a < 3; ++a) {
        int d = mesh->dof(els[e].nodes[a], 0);
        if (d < 0) continue;
        for (int k = 0; k < 3; ++k) {
          trip.emplace_back(row0 + k, d + k, qp.dshp[a]);
          for (int m = 0; m < 3; ++m)
            if (S(k, m) != 0)
              trip.emplace_back(row0 + k, n + d + m, qp.shp[a] * S(k, m));
        }
      }
    }
  SpMat C(6 * static_cast<int>(els.size()), 2 * n);
  C.setFromTriplets(trip.begin(), trip.end());
  return C;
}

}  // namespace detail

inline KinematicPair solve_inextensional(const SpaceOperators& ops,
                                         const Material& mat,
                                         const AssembledLoads& loads,
                                         SolveDiagnostics* diag = nullptr) {
  const MeshPtr& mesh = ops.mesh();
  const int n = mesh->n_dofs();
  SpMat Ar = detail::assemble_rotation_stiffness(mesh, mat.youngs(), mat.mu);
  // block diagonal [0, Ar] on (U, R)
  std::vector<Triplet> trip;
  for (int k = 0; k < Ar.outerSize(); ++k)
    for (SpMat::InnerIterator it(Ar, k); it; ++it)
      trip.emplace_back(n + static_cast<int>(it.row()),
                        n + static_cast<int>(it.col()), it.value());
  SpMat A(2 * n, 2 * n);
  A.setFromTriplets(trip.begin(), trip.end());
  SpMat C = detail::assemble_pair_constraint(mesh);

  VecX f = VecX::Zero(2 * n);
  f.head(n) = rhs_inextensional(loads);
  KKTInfo info;
  auto [x, lambda] = solve_kkt(A, C, f, VecX::Zero(C.rows()), &info);
  (void)lambda;

  KinematicPair pair{SkeletonField(mesh, x.head(n)),
                     SkeletonField(mesh, x.tail(n))};
  if (diag) {
    diag->regularized = info.regularized;
    diag->galerkin_residual = info.residual;
    // enforced constraint rows, weighted and scaled by the solution size
    VecX cx = C * x;
    double acc = 0;
    int row = 0;
    for (const auto& el : mesh->elements())
      for (int q = 0; q < 2; ++q, row += 3)
        acc += el.cq[q].w * cx.segment<3>(row).squaredNorm();
    double scale = std::max(h1_seminorm(pair.V), 1e-300);
    diag->constraint_residual = std::sqrt(acc) / scale;
    diag->kinematic_gap = pair_constraint_residual(pair);
    diag->energy = 0.5 * f.head(n).dot(x.head(n));
  }
  return pair;
}

// ---------------------------------------------------------------------------

struct LimitSolution {
  Material material;
  SkeletonField U_E;
  KinematicPair pair;  // (U_I, R); torsion angle is pair.torsion(arc, s)
  SolveDiagnostics ext, inext;
};

inline LimitSolution solve_limit(const SpaceOperators& ops, const Material& mat,
                                 const AssembledLoads& loads) {
  LimitSolution sol;
  sol.material = mat;
  sol.U_E = solve_extensional(ops, mat, loads, &sol.ext);
  sol.pair = solve_inextensional(ops, mat, loads, &sol.inext);
  return sol;
}

// ---------------------------------------------------------------------------
// Stability diagnostics: smallest generalized eigenvalues of the two energy
// forms against their natural norms, computed densely.
//
//  * extensional: restrict (E M_T, K) to the K-orthogonal complement of
//    ker B, spanned by K^{-1} range(B^T);
//  * inextensional: restrict (blockdiag(0, Ar), blockdiag(0, K)) to the
//    kernel of the pair constraint. On a clamped structure the rotation gram
//    is definite there; otherwise near-null directions are counted as rigid
//    modes and reported.

struct CoercivityReport {
  bool clamped = true;
  double ext_min = 0;
  double inext_min = 0;
  int rigid_modes = 0;
};

inline CoercivityReport coercivity_check(const MeshPtr& mesh,
                                         const Material& mat) {
  CoercivityReport rep;
  rep.clamped = mesh->clamped();
  const int n = mesh->n_dofs();

  MatX K = MatX(assemble_gram(mesh));
  VecX w;
  MatX B = MatX(assemble_constraint(mesh, &w));
  MatX MT = B.transpose() * w.asDiagonal() * B;
  MatX Ar = MatX(detail::assemble_rotation_stiffness(mesh, mat.youngs(), mat.mu));
  MatX C = MatX(detail::assemble_pair_constraint(mesh));

  if (!rep.clamped) {
    // rigid candidates: kernel of K (componentwise constants and anything
    // the constraint cannot see)
    Eigen::SelfAdjointEigenSolver<MatX> ek(K);
    double kmax = ek.eigenvalues().cwiseAbs().maxCoeff();
    for (int i = 0; i < n; ++i)
      if (ek.eigenvalues()[i] < 1e-10 * std::max(kmax, 1e-300)) ++rep.rigid_modes;
    rep.ext_min = 0;
    rep.inext_min = 0;
    return rep;
  }

  // extensional pencil on the complement of ker B
  {
    Eigen::JacobiSVD<MatX> svd(B, Eigen::ComputeFullV);
    double smax = svd.singularValues().size() ? svd.singularValues()[0] : 0;
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
      if (svd.singularValues()[i] > 1e-12 * std::max(smax, 1e-300)) ++rank;
    if (rank > 0) {
      MatX V1 = svd.matrixV().leftCols(rank);  // range(B^T)
      MatX X = K.ldlt().solve(V1);             // D_E basis
      MatX Fred = X.transpose() * (mat.youngs() * MT) * X;
      MatX Gred = X.transpose() * K * X;
      Eigen::GeneralizedSelfAdjointEigenSolver<MatX> ge(Fred, Gred);
      rep.ext_min = ge.eigenvalues().minCoeff();
    }
  }

  // inextensional pencil on ker C
  {
    Eigen::JacobiSVD<MatX> svd(C, Eigen::ComputeFullV);
    double smax = svd.singularValues().size() ? svd.singularValues()[0] : 0;
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
      if (svd.singularValues()[i] > 1e-12 * std::max(smax, 1e-300)) ++rank;
    int kdim = 2 * n - rank;
    if (kdim > 0) {
      MatX Z = svd.matrixV().rightCols(kdim);
      MatX F = MatX::Zero(2 * n, 2 * n), G = MatX::Zero(2 * n, 2 * n);
      F.bottomRightCorner(n, n) = Ar;
      G.bottomRightCorner(n, n) = K;
      MatX Fred = Z.transpose() * F * Z;
      MatX Gred = Z.transpose() * G * Z;
      Eigen::GeneralizedSelfAdjointEigenSolver<MatX> ge(Fred, Gred);
      rep.inext_min = ge.eigenvalues().minCoeff();
    }
  }
  return rep;
}

}  // namespace rodlimit
