#pragma once

// Load cases: sampled per-arc force densities (linear interpolation in s),
// concentrated knot forces, and concentrated point forces at arbitrary
// abscissae. Each contribution carries a class tag:
//   E  drives the extensional problem,
//   I  drives the inextensional/torsion problem.
//
// The extensional right-hand side must annihilate the inextensional space.
// enforce/check work through the K-Riesz representer of the assembled
// covector: its kernel component measures the violation, and projection
// subtracts that component, which is exactly the correction with the
// smallest dual norm.

#include <rodlimit/spaces.hpp>

namespace rodlimit {

struct LoadTable {
  std::vector<double> s;
  std::vector<Vec3> F;

  bool empty() const { return s.empty(); }
  void validate(double arc_length) const {
    if (s.size() != F.size())
      throw ParseError("load table abscissae and values differ in length");
    for (std::size_t i = 0; i + 1 < s.size(); ++i)
      if (!(s[i] < s[i + 1]))
        throw ParseError("load table abscissae must be strictly increasing");
    if (!s.empty() && (s.front() < -1e-12 || s.back() > arc_length * (1 + 1e-12)))
      throw OutOfRange("load table abscissa outside the arc");
  }
  // Linear interpolation inside the covered range, zero outside.
  Vec3 eval(double at) const {
    if (s.empty() || at < s.front() || at > s.back()) return Vec3::Zero();
    auto it = std::upper_bound(s.begin(), s.end(), at);
    std::size_t k = static_cast<std::size_t>(it - s.begin());
    if (k == 0) return F.front();
    if (k >= s.size()) return F.back();
    double t = (at - s[k - 1]) / (s[k] - s[k - 1]);
    return (1 - t) * F[k - 1] + t * F[k];
  }
};

struct KnotLoad {
  int knot = -1;
  Vec3 f_I = Vec3::Zero();
  Vec3 f_E = Vec3::Zero();
};

struct PointLoad {
  int arc = -1;
  double s = 0;
  Vec3 f = Vec3::Zero();
  char cls = 'I';  // 'I' or 'E'
};

struct LoadCase {
  std::vector<LoadTable> F_I;  // per arc; may be shorter than arcs (rest zero)
  std::vector<LoadTable> F_E;
  std::vector<KnotLoad> knot_loads;
  std::vector<PointLoad> point_loads;

  void validate(const Skeleton& skel) const {
    if (F_I.size() > skel.arcs.size() || F_E.size() > skel.arcs.size())
      throw ParseError("more load tables than arcs");
    for (std::size_t a = 0; a < F_I.size(); ++a)
      F_I[a].validate(skel.arcs[a].length());
    for (std::size_t a = 0; a < F_E.size(); ++a)
      F_E[a].validate(skel.arcs[a].length());
    for (const auto& kl : knot_loads)
      if (kl.knot < 0 || kl.knot >= static_cast<int>(skel.knots.size()))
        throw OutOfRange("knot load references unknown knot");
    for (const auto& pl : point_loads) {
      if (pl.arc < 0 || pl.arc >= static_cast<int>(skel.arcs.size()))
        throw OutOfRange("point load references unknown arc");
      if (pl.s < -1e-12 || pl.s > skel.arcs[pl.arc].length() * (1 + 1e-12))
        throw OutOfRange("point load abscissa outside the arc");
      if (pl.cls != 'I' && pl.cls != 'E')
        throw ParseError("point load class must be I or E");
    }
  }
};

namespace detail {

// Integrate shape * density over one element, splitting at table breakpoints
// so the integrand stays polynomial on every Gauss panel.
inline void accumulate_table(const MeshPtr& mesh, const MeshElement& el,
                             const LoadTable& table, VecX& ell) {
  if (table.empty()) return;
  std::vector<double> cuts{el.s0, el.s0 + el.h};
  for (double bp : table.s)
    if (bp > cuts.front() + 1e-14 && bp < cuts.back() - 1e-14)
      cuts.push_back(bp);
  std::sort(cuts.begin(), cuts.end());
  const QuadRule& rule = gauss_rule(3);
  for (std::size_t seg = 0; seg + 1 < cuts.size(); ++seg) {
    double a = cuts[seg], b = cuts[seg + 1], len = b - a;
    if (len <= 1e-15) continue;
    for (std::size_t q = 0; q < rule.x.size(); ++q) {
      double s = a + rule.x[q] * len;
      double w = rule.w[q] * len;
      Vec3 f = table.eval(s);
      double xi = (s - el.s0) / el.h;
      auto shp = shape_values(xi);
      for (int j = 0; j < 3; ++j) {
        int d = mesh->dof(el.nodes[j], 0);
        if (d < 0) continue;
        for (int k = 0; k < 3; ++k) ell[d + k] += w * shp[j] * f[k];
      }
    }
  }
}

inline void accumulate_point(const MeshPtr& mesh, int arc, double s,
                             const Vec3& f, VecX& ell) {
  double xi;
  const MeshElement& el = mesh->elements()[mesh->element_at(arc, s, &xi)];
  auto shp = shape_values(xi);
  for (int j = 0; j < 3; ++j) {
    int d = mesh->dof(el.nodes[j], 0);
    if (d < 0) continue;
    for (int k = 0; k < 3; ++k) ell[d + k] += shp[j] * f[k];
  }
}

}  // namespace detail

struct AssembledLoads {
  VecX ell_I, ell_E;
  bool orthogonality_ok = false;
  bool projected = false;
  double defect = 0;  // relative kernel component of the raw extensional rhs
};

inline AssembledLoads assemble_loads(const MeshPtr& mesh, const LoadCase& lc) {
  lc.validate(mesh->skeleton());
  AssembledLoads out;
  out.ell_I = VecX::Zero(mesh->n_dofs());
  out.ell_E = VecX::Zero(mesh->n_dofs());
  for (const auto& el : mesh->elements()) {
    if (el.arc < static_cast<int>(lc.F_I.size()))
      detail::accumulate_table(mesh, el, lc.F_I[el.arc], out.ell_I);
    if (el.arc < static_cast<int>(lc.F_E.size()))
      detail::accumulate_table(mesh, el, lc.F_E[el.arc], out.ell_E);
  }
  for (const auto& kl : lc.knot_loads) {
    int node = mesh->knot_node(kl.knot);
    int d = mesh->dof(node, 0);
    if (d < 0) continue;  // clamped knot absorbs the load as a reaction
    for (int k = 0; k < 3; ++k) {
      out.ell_I[d + k] += kl.f_I[k];
      out.ell_E[d + k] += kl.f_E[k];
    }
  }
  for (const auto& pl : lc.point_loads)
    detail::accumulate_point(mesh, pl.arc, pl.s, pl.f,
                             pl.cls == 'I' ? out.ell_I : out.ell_E);
  return out;
}

// Relative size of the extensional covector's component acting on ker B.
inline double orthogonality_defect(const SpaceOperators& ops,
                                   const AssembledLoads& loads) {
  if (loads.ell_E.norm() == 0) return 0;
  VecX r = ops.riesz(loads.ell_E);
  auto sp = ops.split(SkeletonField(ops.mesh(), r));
  double total = ops.k_norm(r);
  if (total == 0) return 0;
  return ops.k_norm(sp.inextensional.dofs()) / total;
}

// mode "check": verify and stamp; mode "project": replace the extensional
// covector by its component vanishing on ker B.
inline AssembledLoads enforce_orthogonality(const SpaceOperators& ops,
                                            AssembledLoads loads,
                                            const std::string& mode,
                                            double tolerance = tol::orthogonality) {
  if (mode != "check" && mode != "project")
    throw ParseError("orthogonality mode must be 'check' or 'project'");
  loads.defect = orthogonality_defect(ops, loads);
  if (mode == "check") {
    if (loads.defect > tolerance)
      throw OrthogonalityViolation(
          "extensional load acts on the inextensional space (defect " +
          std::to_string(loads.defect) + ")");
    loads.orthogonality_ok = true;
    return loads;
  }
  if (loads.ell_E.norm() > 0) {
    VecX r = ops.riesz(loads.ell_E);
    auto sp = ops.split(SkeletonField(ops.mesh(), r));
    VecX projected = ops.gram() * sp.extensional.dofs();
    // a load acting purely on the inextensional space projects to roundoff
    // noise; snap that to exact zero so the solve sees a consistent rhs
    if (projected.norm() <= 1e-12 * loads.ell_E.norm()) projected.setZero();
    loads.ell_E = std::move(projected);
  }
  loads.orthogonality_ok = true;
  loads.projected = true;
  return loads;
}

inline const VecX& rhs_extensional(const AssembledLoads& loads) {
  if (!loads.orthogonality_ok)
    throw OrthogonalityNotEnforced(
        "call enforce_orthogonality before using the extensional rhs");
  return loads.ell_E;
}

inline const VecX& rhs_inextensional(const AssembledLoads& loads) {
  return loads.ell_I;
}

}  // namespace rodlimit
