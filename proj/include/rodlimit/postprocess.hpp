#pragma once

// Stress recovery from the solved one-dimensional fields, the knot
// equilibrium law satisfied by the extensional solution, and file export.
//
// The recovered stress lives on the unit cross-section disc with in-plane
// coordinates (Y2, Y3) along the frame directions N and B. Only the first
// row/column of the tensor survives the limit:
//   sigma_11 = E [ U_E'.T - Y2 (U_I''.N) - Y3 (U_I''.B - c Theta) ]
//   sigma_12 = -(mu Y3 / 2) [ c (U_I'.B) + Theta' ]
//   sigma_13 =  (mu Y2 / 2) [ same bracket ]
// Second derivatives of U_I never get formed directly; the reduction
// identities trade them for first derivatives of the rotation field R:
//   U_I''.N = R'.B,   U_I''.B - c Theta = -R'.N,   c (U_I'.B) + Theta' = R'.T.

#include <rodlimit/solver.hpp>

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace rodlimit {

inline Mat3 limit_stress(const LimitSolution& sol, int arc, double s,
                         double Y2, double Y3) {
  if (Y2 * Y2 + Y3 * Y3 > 1.0 + 1e-12)
    throw OutOfRange("cross-section point outside the unit disc");
  const auto& mesh = *sol.U_E.mesh();
  if (arc < 0 || arc >= mesh.arc_count()) throw OutOfRange("arc id");
  const ArcGeometry& g = mesh.skeleton().arcs[arc];
  FrameData fr = g.frame(s);

  const double E = sol.material.youngs();
  const double mu = sol.material.mu;
  const double eps = sol.U_E.derivative(arc, s).dot(fr.T);
  const Vec3 dR = sol.pair.A.derivative(arc, s);
  const double bend_n = dR.dot(fr.B);   // U_I''.N
  const double bend_b = -dR.dot(fr.N);  // U_I''.B - c Theta
  const double twist = dR.dot(fr.T);    // c (U_I'.B) + Theta'

  Mat3 sig = Mat3::Zero();
  sig(0, 0) = E * (eps - Y2 * bend_n - Y3 * bend_b);
  sig(0, 1) = sig(1, 0) = -0.5 * mu * Y3 * twist;
  sig(0, 2) = sig(2, 0) = 0.5 * mu * Y2 * twist;
  return sig;
}

// Closed-form cross-section resultants of the recovered stress. The affine
// part of sigma_11 integrates to zero over the disc, and the shear pair has
// the polar moment pi/4 in each coordinate.
struct StressResultants {
  double axial = 0;  // integral of sigma_11
  double twist = 0;  // integral of Y2 sigma_13 - Y3 sigma_12
};

inline StressResultants stress_resultants(const LimitSolution& sol, int arc,
                                          double s) {
  const auto& mesh = *sol.U_E.mesh();
  if (arc < 0 || arc >= mesh.arc_count()) throw OutOfRange("arc id");
  const ArcGeometry& g = mesh.skeleton().arcs[arc];
  FrameData fr = g.frame(s);
  StressResultants r;
  r.axial = M_PI * sol.material.youngs() * sol.U_E.derivative(arc, s).dot(fr.T);
  r.twist =
      0.25 * M_PI * sol.material.mu * sol.pair.A.derivative(arc, s).dot(fr.T);
  return r;
}

// ---------------------------------------------------------------------------
// Knot equilibrium. Integration by parts of the extensional form turns the
// variational identity into a jump law at every knot A:
//   E * sum over incident arcs of [one-sided traces of (U_E'.T)] T  =  f_AE,
// where an end at s = L contributes its trace with + sign, an end at s = 0
// with - sign, and a side the arc does not cover contributes nothing. The
// returned vector is the left side minus the applied extensional knot force;
// a near-zero value certifies equilibrium. At a clamped knot the applied
// load was absorbed by the reaction during assembly, so the returned value
// reports the reaction imbalance rather than an equilibrium defect.

inline Vec3 knot_equilibrium_residual(const SkeletonField& U_E,
                                      const Skeleton& skel,
                                      const Material& mat, int knot,
                                      const LoadCase& loads = {}) {
  if (knot < 0 || knot >= static_cast<int>(skel.knots.size()))
    throw OutOfRange("knot id");
  const auto& mesh = *U_E.mesh();
  const Skeleton& ms = mesh.skeleton();
  if (knot >= static_cast<int>(ms.knots.size()) ||
      (ms.knots[knot].position - skel.knots[knot].position).norm() >
          tol::knot_rel * (1.0 + skel.knots[knot].position.norm()))
    throw KnotNotMeshNode("field mesh does not carry this knot as a node");

  Vec3 r = Vec3::Zero();
  for (const ArcEnd& e : ms.knots[knot].incidences) {
    const ArcGeometry& g = ms.arcs[e.arc];
    FrameData fr = g.frame(ms.arc_abscissa(e));
    double trace = U_E.one_sided_derivative(e.arc, e.end).dot(fr.T);
    r += mat.youngs() * (e.end == 1 ? trace : -trace) * fr.T;
  }
  for (const auto& kl : loads.knot_loads)
    if (kl.knot == knot) r -= kl.f_E;
  return r;
}

// ---------------------------------------------------------------------------
// Export. Writes, under `dir`:
//   arc_<id>.csv    per-arc solved fields at element vertices and midpoints
//   stress.csv      sigma samples on a radial x angular x abscissa lattice
//   polyline.txt    one sample per line: arc, s, x, y, z, u1, u2, u3
//   summary.json    energies, solver diagnostics, knot equilibrium table
// Numbers are printed with %.17g so a read-back reproduces them bit-exactly.

struct ExportOptions {
  int stress_radial = 3;
  int stress_angular = 8;
};

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IOError("cannot open " + path + " for writing");
  return os;
}

// Element vertices and midpoints of one arc in ascending abscissa order.
inline std::vector<double> arc_samples(const SkeletonMesh& mesh, int arc) {
  std::vector<double> s;
  auto [lo, hi] = mesh.arc_elem_range(arc);
  for (int e = lo; e < hi; ++e) {
    const auto& el = mesh.elements()[e];
    s.push_back(el.s0);
    s.push_back(el.s0 + 0.5 * el.h);
  }
  if (hi > lo) {
    const auto& last = mesh.elements()[hi - 1];
    s.push_back(last.s0 + last.h);
  }
  return s;
}

}  // namespace detail

inline std::vector<std::string> export_solution(const LimitSolution& sol,
                                                const LoadCase& loads,
                                                const std::string& dir,
                                                const ExportOptions& opt = {}) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IOError("cannot create directory " + dir);

  std::vector<std::string> written;
  const MeshPtr mesh = sol.U_E.mesh();
  const int n_arcs = mesh ? mesh->arc_count() : 0;

  for (int a = 0; a < n_arcs; ++a) {
    char name[32];
    std::snprintf(name, sizeof name, "arc_%03d.csv", a);
    std::string path = (fs::path(dir) / name).string();
    auto os = detail::open_out(path);
    os << "s,UEt,UEn,UEb,UI1,UI2,UI3,R1,R2,R3,theta\n";
    for (double s : detail::arc_samples(*mesh, a)) {
      // extensional displacement in the local frame, the rest in ambient
      // coordinates; theta is the tangential component of the rotation
      FrameData fr = mesh->skeleton().arcs[a].frame(s);
      Vec3 ue_c = sol.U_E.value(a, s);
      Vec3 ue(ue_c.dot(fr.T), ue_c.dot(fr.N), ue_c.dot(fr.B));
      Vec3 ui = sol.pair.V.value(a, s);
      Vec3 rr = sol.pair.A.value(a, s);
      double th = rr.dot(fr.T);
      os << detail::fmt17(s);
      for (int k = 0; k < 3; ++k) os << ',' << detail::fmt17(ue[k]);
      for (int k = 0; k < 3; ++k) os << ',' << detail::fmt17(ui[k]);
      for (int k = 0; k < 3; ++k) os << ',' << detail::fmt17(rr[k]);
      os << ',' << detail::fmt17(th) << '\n';
    }
    written.push_back(path);
  }

  {
    std::string path = (fs::path(dir) / "stress.csv").string();
    auto os = detail::open_out(path);
    os << "arc,s,Y2,Y3,sig11,sig12,sig13\n";
    for (int a = 0; a < n_arcs; ++a)
      for (double s : detail::arc_samples(*mesh, a))
        for (int ir = 1; ir <= opt.stress_radial; ++ir)
          for (int ia = 0; ia < opt.stress_angular; ++ia) {
            double rad = static_cast<double>(ir) / opt.stress_radial;
            double ang = 2.0 * M_PI * ia / opt.stress_angular;
            double y2 = rad * std::cos(ang), y3 = rad * std::sin(ang);
            Mat3 sig = limit_stress(sol, a, s, y2, y3);
            os << a << ',' << detail::fmt17(s) << ',' << detail::fmt17(y2)
               << ',' << detail::fmt17(y3) << ',' << detail::fmt17(sig(0, 0))
               << ',' << detail::fmt17(sig(0, 1)) << ','
               << detail::fmt17(sig(0, 2)) << '\n';
          }
    written.push_back(path);
  }

  {
    std::string path = (fs::path(dir) / "polyline.txt").string();
    auto os = detail::open_out(path);
    os << "# arc s x y z u1 u2 u3\n";
    for (int a = 0; a < n_arcs; ++a)
      for (double s : detail::arc_samples(*mesh, a)) {
        Vec3 x = mesh->skeleton().arcs[a].point(s);
        Vec3 u = sol.U_E.value(a, s) + sol.pair.V.value(a, s);
        os << a << ' ' << detail::fmt17(s);
        for (int k = 0; k < 3; ++k) os << ' ' << detail::fmt17(x[k]);
        for (int k = 0; k < 3; ++k) os << ' ' << detail::fmt17(u[k]);
        os << '\n';
      }
    written.push_back(path);
  }

  {
    nlohmann::ordered_json j;
    j["material"] = {{"lambda", sol.material.lambda},
                     {"mu", sol.material.mu},
                     {"youngs", sol.material.youngs()}};
    j["mesh"] = {{"arcs", n_arcs},
                 {"elements", mesh ? static_cast<int>(mesh->elements().size())
                                   : 0},
                 {"dofs", mesh ? mesh->n_dofs() : 0}};
    j["energies"] = {{"extensional", sol.ext.energy},
                     {"inextensional", sol.inext.energy},
                     {"total", sol.ext.energy + sol.inext.energy}};
    j["diagnostics"] = {
        {"extensional",
         {{"iterations", sol.ext.iterations},
          {"galerkin_residual", sol.ext.galerkin_residual},
          {"regularized", sol.ext.regularized}}},
        {"inextensional",
         {{"iterations", sol.inext.iterations},
          {"galerkin_residual", sol.inext.galerkin_residual},
          {"constraint_residual", sol.inext.constraint_residual},
          {"kinematic_gap", sol.inext.kinematic_gap},
          {"regularized", sol.inext.regularized}}}};
    auto table = nlohmann::ordered_json::array();
    if (mesh) {
      const Skeleton& skel = mesh->skeleton();
      for (int k = 0; k < static_cast<int>(skel.knots.size()); ++k) {
        Vec3 r = knot_equilibrium_residual(sol.U_E, skel, sol.material, k,
                                           loads);
        table.push_back({{"knot", k},
                         {"residual", {r.x(), r.y(), r.z()}},
                         {"norm", r.norm()}});
      }
    }
    j["knot_equilibrium"] = table;
    std::string path = (fs::path(dir) / "summary.json").string();
    auto os = detail::open_out(path);
    os << j.dump(2) << '\n';
    written.push_back(path);
  }

  return written;
}

}  // namespace rodlimit
