#pragma once

// Discrete function-space operators on a skeleton mesh:
//
//  * K    gram matrix of the first-derivative inner product (clamped dofs
//         eliminated), assembled on the 2-point rule where the integrand is
//         a polynomial of degree 2, hence exact;
//  * B    tangential constraint rows, one per (element, quadrature point):
//         row value is U'(q) . T(q). The inextensional subspace is ker B;
//  * M_T  = B^T diag(w) B, the tangential derivative gram. Because B and the
//         stiffness share quadrature points, ker M_T = ker B exactly.
//
// The kinematic split U = U_I + U_E takes U_I in ker B and U_E in the
// K-orthogonal complement; it is computed from the projection saddle system
//   [K B^T; B 0] [Z; mu] = [K U; 0],  U_I = Z.
// Rank-deficient constraint blocks (statically indeterminate cases such as a
// straight arc clamped at both ends) get a tiny multiplier regularization;
// the primal block row is untouched, so K-orthogonality of the split stays
// exact.

#include <rodlimit/field.hpp>

#include <Eigen/SparseLU>

namespace rodlimit {

inline SpMat assemble_gram(const MeshPtr& mesh) {
  std::vector<Triplet> trip;
  for (const auto& el : mesh->elements())
    for (const auto& qp : el.cq)
      for (int a = 0; a < 3; ++a) {
        int da = mesh->dof(el.nodes[a], 0);
        if (da < 0) continue;
        for (int b = 0; b < 3; ++b) {
          int db = mesh->dof(el.nodes[b], 0);
          if (db < 0) continue;
          double v = qp.w * qp.dshp[a] * qp.dshp[b];
          for (int k = 0; k < 3; ++k) trip.emplace_back(da + k, db + k, v);
        }
      }
  SpMat K(mesh->n_dofs(), mesh->n_dofs());
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

// Constraint rows are unweighted point values; weights returned separately.
inline SpMat assemble_constraint(const MeshPtr& mesh, VecX* weights = nullptr) {
  std::vector<Triplet> trip;
  const auto& els = mesh->elements();
  int m = 2 * static_cast<int>(els.size());
  if (weights) weights->resize(m);
  for (std::size_t e = 0; e < els.size(); ++e)
    for (int q = 0; q < 2; ++q) {
      const QuadPoint& qp = els[e].cq[q];
      int row = 2 * static_cast<int>(e) + q;
      if (weights) (*weights)[row] = qp.w;
      for (int a = 0; a < 3; ++a) {
        int da = mesh->dof(els[e].nodes[a], 0);
        if (da < 0) continue;
        for (int k = 0; k < 3; ++k)
          trip.emplace_back(row, da + k, qp.dshp[a] * qp.T[k]);
      }
    }
  SpMat B(m, mesh->n_dofs());
  B.setFromTriplets(trip.begin(), trip.end());
  return B;
}

inline SpMat assemble_tangential_gram(const MeshPtr& mesh) {
  VecX w;
  SpMat B = assemble_constraint(mesh, &w);
  SpMat Bt = B.transpose();
  return SpMat(Bt * w.asDiagonal() * B);
}

// Spec-level accessors: these require a clamped structure because the
// variational problems do.
inline SpMat gram_matrix(const MeshPtr& mesh) {
  if (!mesh->clamped())
    throw NotClamped("gram matrix requested on an unclamped skeleton");
  return assemble_gram(mesh);
}
inline SpMat tangential_constraint(const MeshPtr& mesh) {
  return assemble_constraint(mesh);
}

// ---------------------------------------------------------------------------
// Sparse KKT solve [A C^T; C -eps I][x; y] = [f; g] with automatic fallback
// regularization when C is rank deficient. Returns (x, y).

struct KKTInfo {
  bool regularized = false;
  double residual = 0;  // relative residual of the unregularized system
};

inline std::pair<VecX, VecX> solve_kkt(const SpMat& A, const SpMat& C,
                                       const VecX& f, const VecX& g,
                                       KKTInfo* info = nullptr) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(C.rows());
  double alpha = 0, gamma = 0;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      alpha = std::max(alpha, std::abs(it.value()));
  for (int k = 0; k < C.outerSize(); ++k)
    for (SpMat::InnerIterator it(C, k); it; ++it)
      gamma = std::max(gamma, std::abs(it.value()));
  if (alpha == 0) alpha = 1;
  if (gamma == 0) gamma = 1;

  auto assemble = [&](double eps) {
    std::vector<Triplet> trip;
    trip.reserve(A.nonZeros() + 2 * C.nonZeros() + m);
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator it(A, k); it; ++it)
        trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                          it.value());
    for (int k = 0; k < C.outerSize(); ++k)
      for (SpMat::InnerIterator it(C, k); it; ++it) {
        trip.emplace_back(n + static_cast<int>(it.row()),
                          static_cast<int>(it.col()), it.value());
        trip.emplace_back(static_cast<int>(it.col()),
                          n + static_cast<int>(it.row()), it.value());
      }
    for (int i = 0; i < m; ++i) trip.emplace_back(n + i, n + i, -eps);
    SpMat M(n + m, n + m);
    M.setFromTriplets(trip.begin(), trip.end());
    return M;
  };

  VecX rhs(n + m);
  rhs.head(n) = f;
  rhs.tail(m) = g;
  double rhs_scale = std::max(rhs.norm(), 1e-300);

  auto attempt = [&](double eps, VecX* out) {
    SpMat M = assemble(eps);
    Eigen::SparseLU<SpMat> lu;
    lu.compute(M);
    if (lu.info() != Eigen::Success) return false;
    *out = lu.solve(rhs);
    if (!out->allFinite()) return false;
    // iterative refinement against the factored matrix; keeps the multiplier
    // regularization intact while removing the elimination roundoff
    for (int pass = 0; pass < 2; ++pass) {
      VecX resid = rhs - M * (*out);
      VecX dx = lu.solve(resid);
      if (!dx.allFinite()) break;
      *out += dx;
    }
    // residual of the clean (eps = 0) system
    VecX r(n + m);
    r.head(n) = A * out->head(n) + SpMat(C.transpose()) * out->tail(m) - f;
    r.tail(m) = C * out->head(n) - g;
    double rel = r.norm() / rhs_scale;
    if (info) info->residual = rel;
    return rel < 1e-7;
  };

  VecX x;
  if (attempt(0.0, &x)) {
    if (info) info->regularized = false;
    return {x.head(n), x.tail(m)};
  }
  double eps = 1e-10 * gamma * gamma / alpha;
  if (attempt(eps, &x)) {
    if (info) info->regularized = true;
    return {x.head(n), x.tail(m)};
  }
  throw SaddleSingular(
      "KKT system singular even after multiplier regularization; structure "
      "is likely missing clamps or has rigid modes");
}

// ---------------------------------------------------------------------------

struct KinematicSplit {
  SkeletonField inextensional;  // in ker B
  SkeletonField extensional;    // K-orthogonal to ker B
  bool regularized = false;
};

class SpaceOperators {
 public:
  explicit SpaceOperators(MeshPtr mesh) : mesh_(std::move(mesh)) {
    if (!mesh_->clamped())
      throw NotClamped("space operators require at least one clamped endpoint");
    K_ = assemble_gram(mesh_);
    B_ = assemble_constraint(mesh_, &w_);
    SpMat Bt = B_.transpose();
    MT_ = SpMat(Bt * w_.asDiagonal() * B_);
    K_ldlt_.compute(K_);
    if (K_ldlt_.info() != Eigen::Success)
      throw SolverFailure("gram matrix factorization failed");
  }

  const MeshPtr& mesh() const { return mesh_; }
  const SpMat& gram() const { return K_; }
  const SpMat& constraint() const { return B_; }
  const VecX& constraint_weights() const { return w_; }
  const SpMat& tangential_gram() const { return MT_; }

  // K-Riesz representer of a covector.
  VecX riesz(const VecX& ell) const {
    VecX r = K_ldlt_.solve(ell);
    if (K_ldlt_.info() != Eigen::Success)
      throw SolverFailure("gram solve failed");
    return r;
  }

  double k_norm(const VecX& u) const { return std::sqrt(u.dot(K_ * u)); }
  // Weighted norm of B u rather than the quadratic form of the assembled
  // product B^T W B: the latter cancels catastrophically for vectors near
  // the constraint kernel, where this norm is most often consulted.
  double extensional_norm(const VecX& u) const {
    VecX bu = B_ * u;
    return std::sqrt(bu.dot(w_.asDiagonal() * bu));
  }

  KinematicSplit split(const SkeletonField& U) const {
    KKTInfo info;
    auto [z, mu] =
        solve_kkt(K_, B_, K_ * U.dofs(), VecX::Zero(B_.rows()), &info);
    (void)mu;
    KinematicSplit out{SkeletonField(mesh_, z),
                       SkeletonField(mesh_, U.dofs() - z), info.regularized};
    return out;
  }

 private:
  MeshPtr mesh_;
  SpMat K_, B_, MT_;
  VecX w_;
  Eigen::SimplicialLDLT<SpMat> K_ldlt_;
};

inline KinematicSplit project_DI(const SpaceOperators& ops,
                                 const SkeletonField& U) {
  return ops.split(U);
}

// ---------------------------------------------------------------------------
// Kinematic pairs (displacement, rotation) tied by V' = A x T.

struct KinematicPair {
  SkeletonField V;  // displacement
  SkeletonField A;  // infinitesimal rotation
  double torsion(int arc, double s) const {
    return A.value(arc, s).dot(V.mesh()->skeleton().arcs[arc].tangent(s));
  }
};

// L2 norm of V' - A x T over the skeleton (fine rule).
inline double pair_constraint_residual(const KinematicPair& p) {
  double acc = 0;
  const auto& mesh = *p.V.mesh();
  for (const auto& el : mesh.elements())
    for (const auto& qp : el.fq) {
      Vec3 dv = Vec3::Zero(), av = Vec3::Zero();
      for (int j = 0; j < 3; ++j) {
        dv += qp.dshp[j] * p.V.node_value(el.nodes[j]);
        av += qp.shp[j] * p.A.node_value(el.nodes[j]);
      }
      acc += qp.w * (dv - av.cross(qp.T)).squaredNorm();
    }
  return std::sqrt(acc);
}

// Triplet text export (row col value per line) for operator inspection.
inline void write_triplets(std::ostream& os, const SpMat& M) {
  char buf[96];
  for (int k = 0; k < M.outerSize(); ++k)
    for (SpMat::InnerIterator it(M, k); it; ++it) {
      std::snprintf(buf, sizeof buf, "%ld %ld %.17g\n",
                    static_cast<long>(it.row()), static_cast<long>(it.col()),
                    it.value());
      os << buf;
    }
}

}  // namespace rodlimit
