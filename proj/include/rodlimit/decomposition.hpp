#pragma once

// Decomposition of tube displacement fields into elementary rod
// displacements plus a residual, rigid-body fitting near knots, the cutoff
// blend that makes the per-arc decompositions agree on junctions, and the
// empirical ratio report for the decomposition estimates.
//
// An elementary displacement is the pair (U, R) of fields on the centerline
// acting on the cross-section through
//   U_e(s, y2, y3) = U(s) + R(s) x (y2 N(s) + y3 B(s)).
// Per cross-section it is the least-squares projection of u onto that
// 6-parameter family; the closed form reads off the mean and the first
// moments of u using the disc moment matrix
//   M = integral (|rho|^2 I - rho rho^T) dy = pi delta^4 / 4 (I + T T^T),
// assembled here from the discrete quadrature so the fitted residual is
// orthogonal to the family with respect to the same weights.

#include <rodlimit/spaces.hpp>
#include <rodlimit/tube.hpp>

#include <json.hpp>

#include <algorithm>
#include <string>
#include <vector>

namespace rodlimit {

struct RigidInterval {
  int knot = -1;
  double s_lo = 0, s_hi = 0;
  Vec3 a = Vec3::Zero(), b = Vec3::Zero();
};

struct ElementaryDisplacement {
  ArcGeometry geom;
  int arc = 0;
  std::vector<double> s;
  std::vector<Vec3> U, R;
  std::vector<RigidInterval> rigid;  // intervals where (U, R) is the fitted
                                     // rigid displacement of a knot

  Vec3 U_at(double at) const { return interp(U, at); }
  Vec3 R_at(double at) const { return interp(R, at); }
  Vec3 evaluate(double at, double y2, double y3) const {
    FrameData fr = geom.frame(at);
    return U_at(at) + R_at(at).cross(y2 * fr.N + y3 * fr.B);
  }

 private:
  Vec3 interp(const std::vector<Vec3>& v, double at) const {
    if (s.empty()) throw OutOfRange("empty elementary displacement");
    auto it = std::upper_bound(s.begin(), s.end(), at);
    std::size_t k = static_cast<std::size_t>(it - s.begin());
    if (k == 0) return v.front();
    if (k >= s.size()) return v.back();
    double t = (at - s[k - 1]) / (s[k] - s[k - 1]);
    return (1 - t) * v[k - 1] + t * v[k];
  }
};

// ---------------------------------------------------------------------------
// Per-section least squares. Discrete moments replace the analytic
// pi delta^4 / 4 constants, so the result matches a dense normal-equations
// solve on the same quadrature to rounding.

inline ElementaryDisplacement elementary_decompose(const TubeField& f) {
  f.validate();
  ElementaryDisplacement ed;
  ed.geom = f.geometry();
  ed.arc = f.arc();
  ed.s = f.abscissae();
  const int ns = f.ns(), nr = f.nr(), na = f.na();
  ed.U.resize(ns);
  ed.R.resize(ns);
  std::vector<char> degenerate(ns, 0);
  parallel_for(ns, [&](std::size_t js) {
    int j = static_cast<int>(js);
    FrameData fr = f.geometry().frame(f.abscissae()[j]);
    double area = 0;
    Vec3 mean = Vec3::Zero();
    for (int k = 0; k < nr; ++k)
      for (int l = 0; l < na; ++l) {
        double w = f.section_weight(k);
        area += w;
        mean += w * f.at(j, k, l);
      }
    if (!(area > 0)) {
      degenerate[j] = 1;
      return;
    }
    mean /= area;
    Mat3 M = Mat3::Zero();
    Vec3 m = Vec3::Zero();
    for (int k = 0; k < nr; ++k)
      for (int l = 0; l < na; ++l) {
        auto [Y2, Y3] = f.section_point(k, l);
        Vec3 rho = f.delta() * (Y2 * fr.N + Y3 * fr.B);
        double w = f.section_weight(k);
        M += w * (rho.squaredNorm() * Mat3::Identity() -
                  rho * rho.transpose());
        m += w * rho.cross(f.at(j, k, l) - mean);
      }
    Eigen::SelfAdjointEigenSolver<Mat3> es(M);
    if (es.eigenvalues()(0) <= 1e-12 * es.eigenvalues()(2)) {
      degenerate[j] = 1;
      return;
    }
    ed.U[j] = mean;
    ed.R[j] = es.eigenvectors() *
              (es.eigenvalues().cwiseInverse().asDiagonal() *
               (es.eigenvectors().transpose() * m));
  });
  for (int j = 0; j < ns; ++j)
    if (degenerate[j])
      throw RankDeficient("degenerate cross-section sampling at node " +
                          std::to_string(j));
  return ed;
}

// Evaluate the elementary field at every grid node of `like`, as a TubeField.
inline TubeField elementary_as_tube(const ElementaryDisplacement& ed,
                                    const TubeField& like) {
  std::vector<Vec3> vals(like.samples().size());
  const int ns = like.ns(), nr = like.nr(), na = like.na();
  parallel_for(ns, [&](std::size_t js) {
    int j = static_cast<int>(js);
    double s = like.abscissae()[j];
    FrameData fr = like.geometry().frame(s);
    Vec3 Uj = ed.U_at(s), Rj = ed.R_at(s);
    for (int k = 0; k < nr; ++k)
      for (int l = 0; l < na; ++l) {
        auto [Y2, Y3] = like.section_point(k, l);
        Vec3 rho = like.delta() * (Y2 * fr.N + Y3 * fr.B);
        vals[like.idx(j, k, l)] = Uj + Rj.cross(rho);
      }
  });
  return TubeField(like.geometry(), like.arc(), like.delta(),
                   like.abscissae(), like.radii(), like.radial_weights(), na,
                   std::move(vals));
}

// ---------------------------------------------------------------------------
// Rigid-body fit over scattered samples near a point: least squares of
// u ~ a + b x (x - A) through the 6x6 normal equations.

struct RigidFit {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  Vec3 evaluate(const Vec3& x, const Vec3& A) const {
    return a + b.cross(x - A);
  }
};

inline RigidFit rigid_fit_ball(const std::vector<Vec3>& points,
                               const std::vector<Vec3>& values,
                               const Vec3& center) {
  if (points.size() != values.size())
    throw OutOfRange("rigid fit: points and values differ in count");
  if (points.size() < 20)
    throw RankDeficient("rigid fit needs at least 20 samples, got " +
                        std::to_string(points.size()));
  Eigen::Matrix<double, 6, 6> N = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> rhs = Eigen::Matrix<double, 6, 1>::Zero();
  for (std::size_t i = 0; i < points.size(); ++i) {
    Eigen::Matrix<double, 3, 6> G;
    G.block<3, 3>(0, 0) = Mat3::Identity();
    G.block<3, 3>(0, 3) = -skew(points[i] - center);
    N += G.transpose() * G;
    rhs += G.transpose() * values[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(N);
  if (es.eigenvalues()(0) <= 1e-10 * es.eigenvalues()(5))
    throw RankDeficient("rigid fit sampling does not span the ball");
  Eigen::Matrix<double, 6, 1> p =
      es.eigenvectors() * (es.eigenvalues().cwiseInverse().asDiagonal() *
                           (es.eigenvectors().transpose() * rhs));
  RigidFit fit;
  fit.a = p.head<3>();
  fit.b = p.tail<3>();
  return fit;
}

// ---------------------------------------------------------------------------
// Cutoff: even, 0 on [0, rho], 1 on [rho + 1, inf), C2 quintic smoothstep in
// between. Only first derivatives of the cutoff enter any estimate, so C2
// regularity is enough in place of a smooth bump.

inline double cutoff_m(double t, double rho) {
  if (rho < 1.0) throw OutOfRange("cutoff width parameter must be >= 1");
  double x = std::abs(t) - rho;
  if (x <= 0) return 0.0;
  if (x >= 1) return 1.0;
  return x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
}

// ---------------------------------------------------------------------------
// Junction rigidification. For every knot, fit one rigid displacement to the
// tube samples inside the ball B(A; delta/5) collected from all incident
// arcs, then blend each incident elementary displacement into that rigid
// field over ]a - (rho+1) delta, a + (rho+1) delta[ so that the rigid form
// holds exactly on ]a - rho delta, a + rho delta[. The common fitted (a, b)
// makes the result agree across all arcs at the knot.

inline std::vector<ElementaryDisplacement> rigidify_junctions(
    const std::vector<ElementaryDisplacement>& per_arc,
    const std::vector<TubeField>& fields, const Skeleton& skel, double delta,
    double rho) {
  if (rho < 1.0) throw OutOfRange("cutoff width parameter must be >= 1");
  if (per_arc.size() != skel.arcs.size() || fields.size() != skel.arcs.size())
    throw OutOfRange("one elementary displacement and tube field per arc");

  // fitted rigid displacement per knot
  std::vector<RigidFit> fits(skel.knots.size());
  for (std::size_t kn = 0; kn < skel.knots.size(); ++kn) {
    const Vec3& A = skel.knots[kn].position;
    std::vector<Vec3> pts, vals;
    for (const ArcEnd& e : skel.knots[kn].incidences) {
      const TubeField& tf = fields[e.arc];
      for (int j = 0; j < tf.ns(); ++j)
        for (int k = 0; k < tf.nr(); ++k)
          for (int l = 0; l < tf.na(); ++l) {
            auto [Y2, Y3] = tf.section_point(k, l);
            Vec3 x = tf.geometry().tube_point(
                tf.abscissae()[j], delta * Y2, delta * Y3);
            if ((x - A).norm() <= delta / 5.0) {
              pts.push_back(x);
              vals.push_back(tf.at(j, k, l));
            }
          }
    }
    fits[kn] = rigid_fit_ball(pts, vals, A);
  }

  // blend zones per arc, with overlap detection
  struct Zone {
    int knot;
    double a;
  };
  std::vector<std::vector<Zone>> zones(skel.arcs.size());
  for (std::size_t kn = 0; kn < skel.knots.size(); ++kn)
    for (const ArcEnd& e : skel.knots[kn].incidences)
      zones[e.arc].push_back({static_cast<int>(kn), skel.arc_abscissa(e)});
  double half = (rho + 1.0) * delta;
  for (std::size_t a = 0; a < zones.size(); ++a) {
    auto& z = zones[a];
    std::sort(z.begin(), z.end(),
              [](const Zone& l, const Zone& r) { return l.a < r.a; });
    for (std::size_t i = 0; i + 1 < z.size(); ++i)
      if (z[i].a + half > z[i + 1].a - half)
        throw OverlappingJunctions(
            "junction blend zones intersect on arc " + std::to_string(a) +
            "; decrease delta or rho");
  }

  std::vector<ElementaryDisplacement> out = per_arc;
  for (std::size_t a = 0; a < out.size(); ++a) {
    ElementaryDisplacement& ed = out[a];
    ed.rigid.clear();
    double L = skel.arcs[a].length();
    for (const Zone& z : zones[a]) {
      const RigidFit& fit = fits[z.knot];
      const Vec3& A = skel.knots[z.knot].position;
      for (std::size_t j = 0; j < ed.s.size(); ++j) {
        double t = (ed.s[j] - z.a) / delta;
        double m = cutoff_m(t, rho);
        if (m >= 1.0) continue;
        Vec3 rigU = fit.a + fit.b.cross(ed.geom.point(ed.s[j]) - A);
        ed.U[j] = m * ed.U[j] + (1.0 - m) * rigU;
        ed.R[j] = m * ed.R[j] + (1.0 - m) * fit.b;
      }
      RigidInterval ri;
      ri.knot = z.knot;
      ri.s_lo = std::max(0.0, z.a - rho * delta);
      ri.s_hi = std::min(L, z.a + rho * delta);
      ri.a = fit.a;
      ri.b = fit.b;
      ed.rigid.push_back(ri);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Empirical ratio report for the decomposition estimates. Each row evaluates
// one delta of the same ambient displacement family:
//   r_grad       D(u - U_e) / E(u)
//   r_l2         |u - U_e|^2_L2 / (delta^2 E(u))
//   r_kinematic  delta^2 [ delta^2 |dR/ds|^2 + |dU/ds - R x T|^2 ] / E(u)
//   r_split      delta^2 [ |U_ext|^2_H1 + delta^2 |U_inext|^2_H1
//                          + |dU_inext/ds - R x T|^2 ] / E(u)
// where (U_inext, U_ext) is the orthogonal split of the centerline field on
// the skeleton mesh. Boundedness of every column as delta shrinks is what
// the theory asserts; the constants themselves are measured, never pinned.

struct EstimateRow {
  double delta = 0;
  double energy_E = 0, energy_D = 0;
  double r_grad = 0, r_l2 = 0, r_kinematic = 0, r_split = 0;
};

struct EstimateReport {
  std::vector<EstimateRow> rows;  // one per delta, in input order
  bool grad_growth = false, l2_growth = false, kinematic_growth = false,
       split_growth = false;
};

struct EstimateOptions {
  int ns = 121, nr = 4, na = 12;
  double rho = 1.0;
  double mesh_h = 0.05;
  double growth_factor = 3.0;  // flag if the smallest-delta ratio exceeds
                               // this multiple of the largest-delta ratio
};

// One report row from already sampled tube fields and their elementary
// decompositions (one entry per arc, junction rigidification applied by the
// caller when the skeleton has knots).
inline EstimateRow estimate_row(const std::vector<TubeField>& fields,
                                const std::vector<ElementaryDisplacement>& eds,
                                const SpaceOperators& ops, double delta) {
  EstimateRow row;
  row.delta = delta;
  const MeshPtr& mesh = ops.mesh();

  double sumE = 0, sumD = 0, diffD = 0, diffL2 = 0, kin = 0;
  for (std::size_t a = 0; a < fields.size(); ++a) {
    TubeEnergies en = energy_functionals(fields[a]);
    sumE += en.E;
    sumD += en.D;
    TubeField diff = fields[a];
    TubeField el = elementary_as_tube(eds[a], fields[a]);
    for (std::size_t i = 0; i < diff.samples().size(); ++i)
      diff.samples()[i] -= el.samples()[i];
    TubeEnergies den = energy_functionals(diff);
    diffD += den.D;
    diffL2 += tube_l2_squared(diff);

    // piecewise-linear derivative of (U, R) between abscissa nodes
    const auto& ed = eds[a];
    for (std::size_t j = 0; j + 1 < ed.s.size(); ++j) {
      double hseg = ed.s[j + 1] - ed.s[j];
      double smid = 0.5 * (ed.s[j] + ed.s[j + 1]);
      Vec3 dR = (ed.R[j + 1] - ed.R[j]) / hseg;
      Vec3 dU = (ed.U[j + 1] - ed.U[j]) / hseg;
      Vec3 Rmid = 0.5 * (ed.R[j] + ed.R[j + 1]);
      Vec3 T = ed.geom.tangent(smid);
      kin += hseg * (delta * delta * dR.squaredNorm() +
                     (dU - Rmid.cross(T)).squaredNorm());
    }
  }
  row.energy_E = sumE;
  row.energy_D = sumD;
  double E = std::max(sumE, 1e-300);
  row.r_grad = diffD / E;
  row.r_l2 = diffL2 / (delta * delta * E);
  row.r_kinematic = kin * delta * delta / E;

  // split of the centerline field on the skeleton mesh
  SkeletonField Uc = SkeletonField::interpolate(
      mesh, [&](int arc, double s) { return eds[arc].U_at(s); });
  KinematicSplit sp = project_DI(ops, Uc);
  double h1x = h1_seminorm(sp.extensional), l2x = l2_norm(sp.extensional);
  double h1k = h1_seminorm(sp.inextensional), l2k = l2_norm(sp.inextensional);
  double gap = 0;
  for (const auto& el : mesh->elements())
    for (const auto& qp : el.fq) {
      Vec3 du = Vec3::Zero();
      for (int q = 0; q < 3; ++q)
        du += qp.dshp[q] * sp.inextensional.node_value(el.nodes[q]);
      Vec3 Rq = eds[el.arc].R_at(qp.s);
      gap += qp.w * (du - Rq.cross(qp.T)).squaredNorm();
    }
  row.r_split = delta * delta *
                (h1x * h1x + l2x * l2x +
                 delta * delta * (h1k * h1k + l2k * l2k) + gap) /
                E;
  return row;
}

inline EstimateReport estimate_report(
    const std::function<Vec3(const Vec3&)>& displacement,
    const Skeleton& skel, const std::vector<double>& deltas,
    const EstimateOptions& opt = {}) {
  EstimateReport rep;
  auto mesh = SkeletonMesh::build(skel, opt.mesh_h);
  SpaceOperators ops(mesh);

  for (double delta : deltas) {
    std::vector<TubeField> fields;
    std::vector<ElementaryDisplacement> eds;
    for (std::size_t a = 0; a < skel.arcs.size(); ++a) {
      fields.push_back(TubeField::sample(skel.arcs[a], static_cast<int>(a),
                                         delta, opt.ns, opt.nr, opt.na,
                                         displacement));
      eds.push_back(elementary_decompose(fields.back()));
    }
    if (!skel.knots.empty())
      eds = rigidify_junctions(eds, fields, skel, delta, opt.rho);

    rep.rows.push_back(estimate_row(fields, eds, ops, delta));
  }

  if (rep.rows.size() >= 2) {
    const EstimateRow& first = rep.rows.front();
    const EstimateRow& last = rep.rows.back();
    auto grows = [&](double r0, double r1) {
      return r1 > opt.growth_factor * std::max(r0, 1e-12);
    };
    rep.grad_growth = grows(first.r_grad, last.r_grad);
    rep.l2_growth = grows(first.r_l2, last.r_l2);
    rep.kinematic_growth = grows(first.r_kinematic, last.r_kinematic);
    rep.split_growth = grows(first.r_split, last.r_split);
  }
  return rep;
}

inline nlohmann::ordered_json estimate_report_json(const EstimateReport& rep) {
  nlohmann::ordered_json tables;
  for (const EstimateRow& row : rep.rows) {
    char key[32];
    std::snprintf(key, sizeof key, "%g", row.delta);
    tables[key] = {{"energy_E", row.energy_E}, {"energy_D", row.energy_D},
                   {"r_grad", row.r_grad},     {"r_l2", row.r_l2},
                   {"r_kinematic", row.r_kinematic},
                   {"r_split", row.r_split}};
  }
  nlohmann::ordered_json j;
  j["tables"] = tables;
  j["growth_flags"] = {{"grad", rep.grad_growth},
                       {"l2", rep.l2_growth},
                       {"kinematic", rep.kinematic_growth},
                       {"split", rep.split_growth}};
  return j;
}

}  // namespace rodlimit
