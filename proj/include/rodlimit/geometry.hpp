#pragma once

// Skeleton geometry: arclength-parametrized arcs with Frenet frames, knots
// joining arc endpoints, clamped endpoints, hypothesis validation and the
// admissible tube-radius bound delta0.
//
// Frame convention: T = phi', T' = c N with c = |phi''| >= 0, B = T x N.
// Where c falls below curvature_min the Frenet normal is undefined and an
// override frame must be supplied (constant or evaluator); the solver treats
// c = 0 there. Frame derivatives follow the full Frenet relations
//   N' = -c T + tau B,   B' = -tau N.

#include <rodlimit/curves.hpp>

#include <algorithm>
#include <limits>
#include <optional>
#include <utility>

namespace rodlimit {

struct FrameData {
  Vec3 T, N, B;
  double c = 0.0;    // curvature (0 where override active)
  double tau = 0.0;  // torsion
  Vec3 dN = Vec3::Zero(), dB = Vec3::Zero();
  bool from_override = false;
};

class ArcGeometry {
 public:
  ArcGeometry() = default;
  ArcGeometry(std::shared_ptr<const Curve> curve,
              std::function<Vec3(double)> override_normal = nullptr,
              double curvature_min = tol::curvature_min)
      : curve_(std::move(curve)),
        override_normal_(std::move(override_normal)),
        cmin_(curvature_min) {
    length_ = curve_->length();
  }

  double length() const { return length_; }
  bool closed() const { return curve_->closed(); }
  const Curve& curve() const { return *curve_; }
  bool has_override() const { return static_cast<bool>(override_normal_); }

  Vec3 point(double s) const {
    check_range(s);
    return curve_->point(clamp_s(s));
  }
  Vec3 tangent(double s) const {
    check_range(s);
    return curve_->d1(clamp_s(s));
  }
  // Curvature as the solver sees it: exact |phi''| when resolvable, else 0.
  double curvature(double s) const {
    check_range(s);
    double c = curve_->d2(clamp_s(s)).norm();
    return c >= cmin_ ? c : 0.0;
  }

  FrameData frame(double s) const {
    check_range(s);
    s = clamp_s(s);
    FrameData f;
    f.T = curve_->d1(s);
    Vec3 dd = curve_->d2(s);
    double c = dd.norm();
    if (c >= cmin_) {
      f.c = c;
      f.N = dd / c;
      f.tau = curve_->torsion(s);
    } else {
      if (!override_normal_)
        throw FrameUndefined("curvature below threshold at s=" +
                             std::to_string(s) + " and no frame override");
      f.c = 0.0;
      f.tau = 0.0;
      Vec3 n = override_normal_(s);
      n -= n.dot(f.T) * f.T;
      double nn = n.norm();
      if (nn < 1e-12) throw FrameUndefined("override normal parallel to tangent");
      f.N = n / nn;
      f.from_override = true;
    }
    f.B = f.T.cross(f.N);
    f.dN = -f.c * f.T + f.tau * f.B;
    f.dB = -f.tau * f.N;
    return f;
  }

  // Map of the unit-thickness reference tube; (y2, y3) in physical units.
  Vec3 tube_point(double s, double y2, double y3) const {
    FrameData f = frame(s);
    return point(s) + y2 * f.N + y3 * f.B;
  }

  // Columns: d/ds, d/dy2, d/dy3 of the tube map.
  Mat3 tube_jacobian(double s, double y2, double y3) const {
    FrameData f = frame(s);
    Mat3 J;
    // d/ds = T + y2 N' + y3 B' = (1 - c y2) T - tau y3 N + tau y2 B
    J.col(0) = f.T + y2 * f.dN + y3 * f.dB;
    J.col(1) = f.N;
    J.col(2) = f.B;
    return J;
  }

 private:
  void check_range(double s) const {
    if (s < -1e-9 * length_ || s > length_ * (1.0 + 1e-9))
      throw OutOfRange("abscissa " + std::to_string(s) + " outside [0," +
                       std::to_string(length_) + "]");
  }
  double clamp_s(double s) const { return std::min(length_, std::max(0.0, s)); }

  std::shared_ptr<const Curve> curve_;
  std::function<Vec3(double)> override_normal_;
  double cmin_ = tol::curvature_min;
  double length_ = 0.0;
};

// Convenience factories.
inline ArcGeometry make_segment(const Vec3& a, const Vec3& b, const Vec3& normal) {
  Vec3 n = normal;
  return ArcGeometry(std::make_shared<Segment>(a, b),
                     [n](double) { return n; });
}
inline ArcGeometry make_circular_arc(const Vec3& center, const Vec3& u,
                                     const Vec3& v, double R, double a0,
                                     double a1) {
  return ArcGeometry(std::make_shared<CircularArc>(center, u, v, R, a0, a1));
}
inline ArcGeometry make_helix(const Vec3& p0, const Vec3& e, const Vec3& u,
                              double a, double b, double t0, double t1) {
  return ArcGeometry(std::make_shared<Helix>(p0, e, u, a, b, t0, t1));
}
inline ArcGeometry make_spline(const std::vector<Vec3>& pts, int resample_n,
                               std::function<Vec3(double)> override_normal = nullptr) {
  return ArcGeometry(std::make_shared<SplineCurve>(pts, resample_n),
                     std::move(override_normal));
}

// ---------------------------------------------------------------------------

struct ArcEnd {
  int arc = -1;
  int end = 0;  // 0 = abscissa 0, 1 = abscissa length()
  bool operator==(const ArcEnd& o) const { return arc == o.arc && end == o.end; }
};

struct Knot {
  Vec3 position = Vec3::Zero();
  std::vector<ArcEnd> incidences;  // >= 2 for a structural joint
};

struct Skeleton {
  std::vector<ArcGeometry> arcs;
  std::vector<Knot> knots;
  std::vector<ArcEnd> clamps;  // clamped endpoints (displacement and rotation zero)

  double arc_abscissa(const ArcEnd& e) const {
    return e.end == 0 ? 0.0 : arcs[e.arc].length();
  }
  double total_length() const {
    double L = 0;
    for (const auto& a : arcs) L += a.length();
    return L;
  }
  bool endpoint_clamped(int arc, int end) const {
    for (const auto& c : clamps)
      if (c.arc == arc && c.end == end) return true;
    return false;
  }
  // Knot index at an endpoint, or -1.
  int knot_at(int arc, int end) const {
    for (std::size_t k = 0; k < knots.size(); ++k)
      for (const auto& e : knots[k].incidences)
        if (e.arc == arc && e.end == end) return static_cast<int>(k);
    return -1;
  }
};

// ---------------------------------------------------------------------------
// Validation. Every hypothesis gets one report entry; `usable` is the AND of
// the hard checks. delta0 is computed whether or not all checks pass.

struct CheckEntry {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<CheckEntry> entries;
  double delta0 = 0.0;
  bool usable = false;
};

namespace detail {

inline double arc_max_curvature(const ArcGeometry& arc, int n = 512) {
  double cmax = 0;
  for (int i = 0; i <= n; ++i)
    cmax = std::max(cmax, arc.curvature(arc.length() * i / n));
  return cmax;
}

// Minimal distance from a point to an arc centerline (sampled + parabolic refine).
inline double point_arc_distance(const Vec3& p, const ArcGeometry& arc,
                                 int n = 512) {
  double best = std::numeric_limits<double>::infinity();
  double sbest = 0;
  for (int i = 0; i <= n; ++i) {
    double s = arc.length() * i / n;
    double d = (arc.point(s) - p).norm();
    if (d < best) {
      best = d;
      sbest = s;
    }
  }
  double h = arc.length() / n;
  double lo = std::max(0.0, sbest - h), hi = std::min(arc.length(), sbest + h);
  for (int it = 0; it < 40; ++it) {
    double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
    if ((arc.point(m1) - p).norm() < (arc.point(m2) - p).norm())
      hi = m2;
    else
      lo = m1;
  }
  return std::min(best, (arc.point(0.5 * (lo + hi)) - p).norm());
}

}  // namespace detail

// Admissible tube radius bound: minimum of per-arc curvature radii, same-arc
// clearance beyond the circle-limit geodesic threshold, and half the minimal
// distance between arcs that do not share a knot.
inline double compute_delta0(const Skeleton& skel, int n_samples = 512) {
  // Cap at a quarter of the shortest arc so junction balls stay local and
  // the bound is finite for all-straight skeletons.
  double d0 = std::numeric_limits<double>::infinity();
  for (const auto& a : skel.arcs) d0 = std::min(d0, 0.25 * a.length());
  std::vector<std::vector<Vec3>> pts(skel.arcs.size());
  std::vector<std::vector<double>> ss(skel.arcs.size());
  std::vector<double> cmax(skel.arcs.size());
  for (std::size_t i = 0; i < skel.arcs.size(); ++i) {
    const auto& arc = skel.arcs[i];
    cmax[i] = detail::arc_max_curvature(arc, n_samples);
    if (cmax[i] > 0) d0 = std::min(d0, 1.0 / cmax[i]);
    int n = n_samples;
    pts[i].resize(n + 1);
    ss[i].resize(n + 1);
    for (int k = 0; k <= n; ++k) {
      ss[i][k] = arc.length() * k / n;
      pts[i][k] = arc.point(ss[i][k]);
    }
  }
  // same-arc clearance beyond geodesic threshold pi / c_max
  for (std::size_t i = 0; i < skel.arcs.size(); ++i) {
    if (cmax[i] <= 0) continue;
    double thresh = M_PI / cmax[i];
    double L = skel.arcs[i].length();
    for (std::size_t a = 0; a < pts[i].size(); ++a)
      for (std::size_t b = a + 1; b < pts[i].size(); ++b) {
        double ds = ss[i][b] - ss[i][a];
        if (skel.arcs[i].closed()) ds = std::min(ds, L - ds);
        if (ds < thresh) continue;
        d0 = std::min(d0, 0.5 * (pts[i][a] - pts[i][b]).norm());
      }
  }
  // cross-arc clearance for pairs without a common knot
  auto share_knot = [&](int i, int j) {
    for (const auto& kn : skel.knots) {
      bool hi = false, hj = false;
      for (const auto& e : kn.incidences) {
        hi |= e.arc == i;
        hj |= e.arc == j;
      }
      if (hi && hj) return true;
    }
    return false;
  };
  for (std::size_t i = 0; i < skel.arcs.size(); ++i)
    for (std::size_t j = i + 1; j < skel.arcs.size(); ++j) {
      if (share_knot(static_cast<int>(i), static_cast<int>(j))) continue;
      double dmin = std::numeric_limits<double>::infinity();
      for (const auto& p : pts[i])
        for (const auto& q : pts[j]) dmin = std::min(dmin, (p - q).norm());
      d0 = std::min(d0, 0.5 * dmin);
    }
  return d0;
}

inline ValidationReport validate(const Skeleton& skel) {
  ValidationReport rep;
  auto add = [&rep](const std::string& name, bool pass, double measured,
                    const std::string& detail = "") {
    rep.entries.push_back({name, pass, measured, detail});
  };

  // unit speed, sampled
  {
    double worst = 0;
    for (const auto& arc : skel.arcs) {
      int n = 256;
      for (int k = 0; k <= n; ++k) {
        double s = arc.length() * k / n;
        worst = std::max(worst, std::abs(arc.tangent(s).norm() - 1.0));
      }
    }
    add("unit_speed", worst <= tol::arclen, worst);
  }

  // Frenet consistency: dT/ds vs c N by central differences where c > 0
  {
    double worst = 0;
    for (const auto& arc : skel.arcs) {
      double L = arc.length();
      double h = 1e-5 * L;
      int n = 128;
      for (int k = 1; k < n; ++k) {
        double s = L * k / n;
        if (arc.curvature(s) <= 0) continue;
        FrameData f = arc.frame(s);
        Vec3 dT = (arc.tangent(s + h) - arc.tangent(s - h)) / (2 * h);
        worst = std::max(worst, (dT - f.c * f.N).norm() /
                                    std::max(1.0, f.c));
      }
    }
    // FD truncation ~ h^2 |T'''| dominates; accept up to 1e-6 relative
    add("frenet_consistency", worst <= 1e-6, worst);
  }

  // frame orthonormality
  {
    double worst = 0;
    for (const auto& arc : skel.arcs) {
      int n = 128;
      for (int k = 0; k <= n; ++k) {
        double s = arc.length() * k / n;
        FrameData f = arc.frame(s);
        Mat3 Q;
        Q.col(0) = f.T;
        Q.col(1) = f.N;
        Q.col(2) = f.B;
        worst = std::max(worst, (Q.transpose() * Q - Mat3::Identity()).norm());
      }
    }
    add("frame_orthonormal", worst <= tol::frame, worst);
  }

  // override transition continuity: jump of N across the curvature threshold
  {
    double worst = 0;
    for (const auto& arc : skel.arcs) {
      if (!arc.has_override()) continue;
      int n = 512;
      FrameData prev = arc.frame(0.0);
      for (int k = 1; k <= n; ++k) {
        double s = arc.length() * k / n;
        FrameData f = arc.frame(s);
        if (f.from_override != prev.from_override)
          worst = std::max(worst, (f.N - prev.N).norm());
        prev = f;
      }
    }
    add("override_continuity", worst <= 1e-3, worst,
        "normal jump across curvature threshold transitions");
  }

  // knot positions and incidence sanity
  {
    double worst = 0;
    bool ok = true;
    for (const auto& kn : skel.knots) {
      if (kn.incidences.size() < 2) ok = false;
      for (const auto& e : kn.incidences) {
        if (e.arc < 0 || e.arc >= static_cast<int>(skel.arcs.size())) {
          ok = false;
          continue;
        }
        const auto& arc = skel.arcs[e.arc];
        double res = (arc.point(skel.arc_abscissa(e)) - kn.position).norm() /
                     std::max(arc.length(), 1e-30);
        worst = std::max(worst, res);
      }
    }
    add("knot_positions", ok && worst <= tol::knot_rel, worst);
  }

  // pairwise non-tangency at knots (angle between tangent lines)
  {
    double worst_sin = 1.0;
    for (const auto& kn : skel.knots) {
      for (std::size_t a = 0; a < kn.incidences.size(); ++a)
        for (std::size_t b = a + 1; b < kn.incidences.size(); ++b) {
          const auto& ea = kn.incidences[a];
          const auto& eb = kn.incidences[b];
          Vec3 Ta = skel.arcs[ea.arc].tangent(skel.arc_abscissa(ea));
          Vec3 Tb = skel.arcs[eb.arc].tangent(skel.arc_abscissa(eb));
          worst_sin = std::min(worst_sin, Ta.cross(Tb).norm());
        }
    }
    add("knot_nontangency", worst_sin >= tol::tangency, worst_sin);
  }

  // closed arcs: endpoint match and frame periodicity
  {
    double worst_pos = 0, worst_frame = 0;
    for (const auto& arc : skel.arcs) {
      if (!arc.closed()) continue;
      worst_pos = std::max(worst_pos,
                           (arc.point(0.0) - arc.point(arc.length())).norm() /
                               std::max(arc.length(), 1e-30));
      FrameData f0 = arc.frame(0.0), f1 = arc.frame(arc.length());
      worst_frame = std::max(
          worst_frame, std::max((f0.N - f1.N).norm(), (f0.B - f1.B).norm()));
    }
    add("closed_arc_periodicity",
        worst_pos <= tol::knot_rel && worst_frame <= 1e-8,
        std::max(worst_pos, worst_frame));
  }

  rep.delta0 = compute_delta0(skel);
  add("positive_delta0", rep.delta0 > 0, rep.delta0);

  rep.usable = true;
  for (const auto& e : rep.entries) rep.usable = rep.usable && e.pass;
  return rep;
}

// ---------------------------------------------------------------------------
// Junction regions. For tube radius delta the junction at knot A is the part
// of the structure inside the ball B(A, rho*delta). minimal_junction_rho
// finds the smallest rho such that each incident centerline has left every
// other incident tube once outside that ball.

struct JunctionInterval {
  int arc = -1;
  double s_lo = 0, s_hi = 0;  // abscissa range inside the junction ball
};

struct JunctionExtent {
  int knot = -1;
  double rho = 0;
  std::vector<JunctionInterval> intervals;
};

inline double minimal_junction_rho(const Skeleton& skel, int knot_id,
                                   double delta, int n_samples = 800) {
  const Knot& kn = skel.knots.at(knot_id);
  double worst = 0.0;
  for (const auto& ei : kn.incidences) {
    const ArcGeometry& ai = skel.arcs[ei.arc];
    double a_i = skel.arc_abscissa(ei);
    double Li = ai.length();
    // probe geodesic window around the knot end (capped at the arc length)
    double window = std::min(Li, std::max(10.0 * delta, 0.25 * Li));
    for (const auto& ej : kn.incidences) {
      // distance of a point to its own arc is zero; self pairs carry no
      // coverage information
      if (ej.arc == ei.arc) continue;
      const ArcGeometry& aj = skel.arcs[ej.arc];
      double far = 0.0;
      for (int k = 0; k <= n_samples; ++k) {
        double d = window * k / n_samples;
        double s = ei.end == 0 ? a_i + d : a_i - d;
        if (s < 0 || s > Li) break;
        if (detail::point_arc_distance(ai.point(s), aj) <= delta)
          far = std::max(far, (ai.point(s) - kn.position).norm());
      }
      worst = std::max(worst, far);
    }
  }
  return worst / delta;
}

inline JunctionExtent junction_extent(const Skeleton& skel, int knot_id,
                                      double delta, double rho,
                                      int n_samples = 800) {
  if (delta <= 0 || delta >= compute_delta0(skel))
    throw DeltaTooLarge("delta must lie in (0, delta0)");
  const Knot& kn = skel.knots.at(knot_id);
  JunctionExtent ext;
  ext.knot = knot_id;
  ext.rho = rho;
  double r = rho * delta;
  for (std::size_t i = 0; i < skel.arcs.size(); ++i) {
    const auto& arc = skel.arcs[i];
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int k = 0; k <= n_samples; ++k) {
      double s = arc.length() * k / n_samples;
      if ((arc.point(s) - kn.position).norm() <= r) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
      }
    }
    if (lo <= hi) ext.intervals.push_back({static_cast<int>(i), lo, hi});
  }
  // junction balls must not collide with each other
  for (std::size_t k = 0; k < skel.knots.size(); ++k) {
    if (static_cast<int>(k) == knot_id) continue;
    if ((skel.knots[k].position - kn.position).norm() <= 2.0 * r)
      throw OverlappingJunctions("junction balls at knots " +
                                 std::to_string(knot_id) + " and " +
                                 std::to_string(k) + " intersect");
  }
  return ext;
}

}  // namespace rodlimit
