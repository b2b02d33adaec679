#pragma once

// Vector fields over a skeleton mesh: one 3-vector per free scalar node,
// clamped nodes implicitly zero. Evaluation works through the quadratic
// shape functions of the owning element.

#include <rodlimit/mesh.hpp>

#include <cstdio>
#include <ostream>

namespace rodlimit {

class SkeletonField {
 public:
  SkeletonField() = default;
  SkeletonField(MeshPtr mesh, VecX dofs) : mesh_(std::move(mesh)), dofs_(std::move(dofs)) {
    if (dofs_.size() != mesh_->n_dofs())
      throw OutOfRange("dof vector size does not match mesh");
  }
  static SkeletonField zero(MeshPtr mesh) {
    VecX d = VecX::Zero(mesh->n_dofs());
    return SkeletonField(std::move(mesh), std::move(d));
  }
  // Nodal interpolation of an ambient function x -> R^3. Clamped nodes keep
  // zero, so interpolate only fields compatible with the clamping.
  static SkeletonField interpolate(MeshPtr mesh,
                                   const std::function<Vec3(int, double)>& f) {
    VecX d = VecX::Zero(mesh->n_dofs());
    const auto& locs = mesh->node_locations();
    for (int n = 0; n < mesh->n_nodes(); ++n) {
      int fi = mesh->free_index(n);
      if (fi < 0) continue;
      d.segment<3>(3 * fi) = f(locs[n].arc, locs[n].s);
    }
    return SkeletonField(std::move(mesh), std::move(d));
  }

  const MeshPtr& mesh() const { return mesh_; }
  const VecX& dofs() const { return dofs_; }
  VecX& dofs() { return dofs_; }

  Vec3 node_value(int node) const {
    int fi = mesh_->free_index(node);
    return fi < 0 ? Vec3::Zero() : Vec3(dofs_.segment<3>(3 * fi));
  }

  Vec3 value(int arc, double s) const {
    double xi;
    const MeshElement& el = mesh_->elements()[mesh_->element_at(arc, s, &xi)];
    auto shp = shape_values(xi);
    Vec3 v = Vec3::Zero();
    for (int j = 0; j < 3; ++j) v += shp[j] * node_value(el.nodes[j]);
    return v;
  }

  Vec3 derivative(int arc, double s) const {
    double xi;
    const MeshElement& el = mesh_->elements()[mesh_->element_at(arc, s, &xi)];
    auto dshp = shape_derivs(xi, el.h);
    Vec3 v = Vec3::Zero();
    for (int j = 0; j < 3; ++j) v += dshp[j] * node_value(el.nodes[j]);
    return v;
  }

  // One-sided derivative at a knot end of an arc: end = 0 takes s -> 0+,
  // end = 1 takes s -> L-.
  Vec3 one_sided_derivative(int arc, int end) const {
    auto [lo, hi] = mesh_->arc_elem_range(arc);
    const MeshElement& el = mesh_->elements()[end == 0 ? lo : hi - 1];
    auto dshp = shape_derivs(end == 0 ? 0.0 : 1.0, el.h);
    Vec3 v = Vec3::Zero();
    for (int j = 0; j < 3; ++j) v += dshp[j] * node_value(el.nodes[j]);
    return v;
  }

  SkeletonField operator+(const SkeletonField& o) const {
    return SkeletonField(mesh_, dofs_ + o.dofs_);
  }
  SkeletonField operator-(const SkeletonField& o) const {
    return SkeletonField(mesh_, dofs_ - o.dofs_);
  }
  SkeletonField operator*(double a) const {
    return SkeletonField(mesh_, a * dofs_);
  }

 private:
  MeshPtr mesh_;
  VecX dofs_;
};

// L2 norms over the skeleton via the fine quadrature rule.
inline double l2_norm(const SkeletonField& f) {
  double acc = 0;
  for (const auto& el : f.mesh()->elements())
    for (const auto& qp : el.fq) {
      Vec3 v = Vec3::Zero();
      for (int j = 0; j < 3; ++j) v += qp.shp[j] * f.node_value(el.nodes[j]);
      acc += qp.w * v.squaredNorm();
    }
  return std::sqrt(acc);
}

inline double h1_seminorm(const SkeletonField& f) {
  double acc = 0;
  for (const auto& el : f.mesh()->elements())
    for (const auto& qp : el.fq) {
      Vec3 v = Vec3::Zero();
      for (int j = 0; j < 3; ++j) v += qp.dshp[j] * f.node_value(el.nodes[j]);
      acc += qp.w * v.squaredNorm();
    }
  return std::sqrt(acc);
}

// Per-arc CSV rows (s, V1, V2, V3) at the nodal abscissae. %.17g keeps the
// round trip bit exact.
inline void write_field_csv(std::ostream& os, const SkeletonField& f, int arc) {
  os << "s,V1,V2,V3\n";
  auto [lo, hi] = f.mesh()->arc_elem_range(arc);
  char buf[160];
  auto row = [&](double s, const Vec3& v) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", s, v.x(), v.y(),
                  v.z());
    os << buf;
  };
  for (int e = lo; e < hi; ++e) {
    const MeshElement& el = f.mesh()->elements()[e];
    row(el.s0, f.node_value(el.nodes[0]));
    row(el.s0 + 0.5 * el.h, f.node_value(el.nodes[1]));
    if (e + 1 == hi) row(el.s0 + el.h, f.node_value(el.nodes[2]));
  }
}

}  // namespace rodlimit
