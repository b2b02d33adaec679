#pragma once

// Sampled displacement fields on thin tubes around skeleton arcs.
//
// A tube field stores u at the nodes of a polar grid over the scaled
// cross-section: abscissae s_j along the arc, Gauss radii r_k in (0,1) and
// uniform angles theta_l. The physical sample point is
//   Phi(s, delta r cos theta, delta r sin theta)
// and the stored coordinates (Y2, Y3) = r (cos theta, sin theta) live on the
// unit disc, so rescaling delta never moves the grid indices. Radial Gauss
// nodes exclude r = 0, which keeps polar derivative formulas regular, and
// the radial rule integrates the disc moments needed downstream exactly.

#include <rodlimit/mesh.hpp>

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace rodlimit {

class TubeField {
 public:
  TubeField() = default;
  TubeField(ArcGeometry geom, int arc, double delta, std::vector<double> s,
            std::vector<double> rad, std::vector<double> rad_w, int na,
            std::vector<Vec3> samples)
      : geom_(std::move(geom)),
        arc_(arc),
        delta_(delta),
        s_(std::move(s)),
        rad_(std::move(rad)),
        rad_w_(std::move(rad_w)),
        na_(na),
        u_(std::move(samples)) {
    validate();
  }

  // Sample an ambient displacement x -> u(x) on a fresh grid.
  static TubeField sample(const ArcGeometry& geom, int arc, double delta,
                          int ns, int nr, int na,
                          const std::function<Vec3(const Vec3&)>& f) {
    if (delta <= 0) throw OutOfRange("tube radius must be positive");
    TubeField tf;
    tf.geom_ = geom;
    tf.arc_ = arc;
    tf.delta_ = delta;
    tf.na_ = na;
    double L = geom.length();
    tf.s_.resize(ns);
    for (int j = 0; j < ns; ++j) tf.s_[j] = L * j / double(ns - 1);
    const QuadRule& rq = gauss_rule(nr);
    tf.rad_ = rq.x;
    tf.rad_w_ = rq.w;
    tf.u_.resize(static_cast<std::size_t>(ns) * nr * na);
    tf.validate();
    parallel_for(ns, [&](std::size_t j) {
      for (int k = 0; k < nr; ++k)
        for (int l = 0; l < na; ++l) {
          auto [y2, y3] = tf.section_point(k, l);
          Vec3 x = geom.tube_point(tf.s_[j], delta * y2, delta * y3);
          tf.u_[tf.idx(static_cast<int>(j), k, l)] = f(x);
        }
    });
    return tf;
  }

  const ArcGeometry& geometry() const { return geom_; }
  int arc() const { return arc_; }
  double delta() const { return delta_; }
  int ns() const { return static_cast<int>(s_.size()); }
  int nr() const { return static_cast<int>(rad_.size()); }
  int na() const { return na_; }
  const std::vector<double>& abscissae() const { return s_; }
  const std::vector<double>& radii() const { return rad_; }
  const std::vector<double>& radial_weights() const { return rad_w_; }

  int idx(int j, int k, int l) const { return (j * nr() + k) * na_ + l; }
  const Vec3& at(int j, int k, int l) const { return u_[idx(j, k, l)]; }
  Vec3& at(int j, int k, int l) { return u_[idx(j, k, l)]; }
  const std::vector<Vec3>& samples() const { return u_; }
  std::vector<Vec3>& samples() { return u_; }

  // unit-disc coordinates (Y2, Y3) of a radial/angular node
  std::pair<double, double> section_point(int k, int l) const {
    double th = 2.0 * M_PI * l / na_;
    return {rad_[k] * std::cos(th), rad_[k] * std::sin(th)};
  }
  // quadrature weight for the scaled cross-section integral over D(O, delta)
  double section_weight(int k) const {
    return rad_w_[k] * rad_[k] * (2.0 * M_PI / na_) * delta_ * delta_;
  }
  // trapezoid weight for abscissa integrals
  double abscissa_weight(int j) const {
    double w = 0;
    if (j > 0) w += 0.5 * (s_[j] - s_[j - 1]);
    if (j + 1 < ns()) w += 0.5 * (s_[j + 1] - s_[j]);
    return w;
  }

  void validate() const {
    if (ns() < 3)
      throw GridTooCoarse("need at least 3 abscissa nodes, got " +
                          std::to_string(ns()));
    if (nr() < 2 || na_ < 4 || nr() * na_ < 12)
      throw GridTooCoarse("cross-section sampling below 12 points (" +
                          std::to_string(nr()) + " x " + std::to_string(na_) +
                          ")");
    if (rad_w_.size() != rad_.size())
      throw GridTooCoarse("radial weights do not match radial nodes");
    for (std::size_t k = 0; k < rad_.size(); ++k)
      if (rad_[k] <= 0.0 || rad_[k] >= 1.0)
        throw GridTooCoarse("radial nodes must lie strictly inside (0,1)");
    for (int j = 0; j + 1 < ns(); ++j)
      if (!(s_[j] < s_[j + 1]))
        throw GridTooCoarse("abscissae must be strictly increasing");
    if (u_.size() != static_cast<std::size_t>(ns()) * nr() * na_)
      throw GridTooCoarse("sample count does not match grid shape");
  }

 private:
  ArcGeometry geom_;
  int arc_ = 0;
  double delta_ = 1.0;
  std::vector<double> s_;
  std::vector<double> rad_, rad_w_;
  int na_ = 0;
  std::vector<Vec3> u_;
};

// ---------------------------------------------------------------------------
// Unfolding: reinterpret samples over the unit disc. Values never change;
// only the radius bookkeeping does, so unfold(refold(f)) is the identity.

inline TubeField unfold(const TubeField& f) {
  return TubeField(f.geometry(), f.arc(), 1.0, f.abscissae(), f.radii(),
                   f.radial_weights(), f.na(), f.samples());
}

inline TubeField refold(const TubeField& f, double delta) {
  return TubeField(f.geometry(), f.arc(), delta, f.abscissae(), f.radii(),
                   f.radial_weights(), f.na(), f.samples());
}

// ---------------------------------------------------------------------------
// Derivatives of the sampled field with respect to the curvilinear
// coordinates (s, y2, y3). Second-order finite differences along the arc
// (central inside, one-sided at the ends), a 3-point Lagrange formula on the
// non-uniform radii, and spectral differentiation in the angle. The angular
// grid is uniform and periodic, so the trigonometric derivative matrix is
// exact for every harmonic below na / 2; elementary fields are harmonic one,
// which keeps rigid and linear test fields exact instead of second order.

namespace detail {

struct TubeGradient {
  Vec3 du_ds, du_dy2, du_dy3;
};

// coefficients of the periodic spectral derivative: the derivative at node l
// is the sum over m of coef[m] * u(node l + m mod na)
inline std::vector<double> angular_diff_coeffs(int na) {
  std::vector<double> c(na, 0.0);
  for (int m = 1; m < na; ++m) {
    double ang = M_PI * m / na;
    double sgn = (m % 2 == 1) ? 0.5 : -0.5;
    c[m] = (na % 2 == 0) ? sgn / std::tan(ang) : sgn / std::sin(ang);
  }
  return c;
}

inline Vec3 radial_derivative(const TubeField& f, int j, int k, int l) {
  int nr = f.nr();
  if (nr == 2) {
    return (f.at(j, 1, l) - f.at(j, 0, l)) / (f.radii()[1] - f.radii()[0]);
  }
  int k0 = std::min(std::max(k - 1, 0), nr - 3);
  double x0 = f.radii()[k0], x1 = f.radii()[k0 + 1], x2 = f.radii()[k0 + 2];
  double x = f.radii()[k];
  // derivative of the quadratic through (x0,x1,x2) evaluated at x
  double d0 = (2 * x - x1 - x2) / ((x0 - x1) * (x0 - x2));
  double d1 = (2 * x - x0 - x2) / ((x1 - x0) * (x1 - x2));
  double d2 = (2 * x - x0 - x1) / ((x2 - x0) * (x2 - x1));
  return d0 * f.at(j, k0, l) + d1 * f.at(j, k0 + 1, l) + d2 * f.at(j, k0 + 2, l);
}

inline TubeGradient tube_gradient(const TubeField& f, int j, int k, int l,
                                  const std::vector<double>& dth_coef) {
  TubeGradient g;
  const auto& s = f.abscissae();
  int ns = f.ns(), na = f.na();

  if (j == 0) {
    double h = s[1] - s[0];
    g.du_ds = (-3.0 * f.at(0, k, l) + 4.0 * f.at(1, k, l) - f.at(2, k, l)) /
              (2.0 * h);
  } else if (j == ns - 1) {
    double h = s[ns - 1] - s[ns - 2];
    g.du_ds = (3.0 * f.at(ns - 1, k, l) - 4.0 * f.at(ns - 2, k, l) +
               f.at(ns - 3, k, l)) /
              (2.0 * h);
  } else {
    g.du_ds = (f.at(j + 1, k, l) - f.at(j - 1, k, l)) / (s[j + 1] - s[j - 1]);
  }

  Vec3 du_dr = radial_derivative(f, j, k, l);
  Vec3 du_dth = Vec3::Zero();
  for (int m = 1; m < na; ++m)
    du_dth += dth_coef[m] * f.at(j, k, (l + m) % na);

  // polar chain rule in the physical cross-section: R = delta r
  double th = 2.0 * M_PI * l / na;
  double R = f.delta() * f.radii()[k];
  Vec3 du_dR = du_dr / f.delta();
  g.du_dy2 = std::cos(th) * du_dR - std::sin(th) / R * du_dth;
  g.du_dy3 = std::sin(th) * du_dR + std::cos(th) / R * du_dth;
  return g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Energy functionals over the physical tube:
//   E = integral of gamma_kl gamma_kl   (symmetrized gradient contraction)
//   D = integral of (du_k/dx_l)^2      (full gradient contraction)
// Cartesian gradients come from the curvilinear ones through the inverse
// tube Jacobian; the volume element is det J = 1 - c y2 times ds dy2 dy3.

struct TubeEnergies {
  double E = 0;
  double D = 0;
};

inline TubeEnergies energy_functionals(const TubeField& f) {
  f.validate();
  const int ns = f.ns(), nr = f.nr(), na = f.na();
  const std::vector<double> dth_coef = detail::angular_diff_coeffs(na);
  std::vector<double> accE(ns, 0.0), accD(ns, 0.0);
  parallel_for(ns, [&](std::size_t js) {
    int j = static_cast<int>(js);
    double s = f.abscissae()[j];
    double ws = f.abscissa_weight(j);
    double eacc = 0, dacc = 0;
    for (int k = 0; k < nr; ++k)
      for (int l = 0; l < na; ++l) {
        auto [Y2, Y3] = f.section_point(k, l);
        double y2 = f.delta() * Y2, y3 = f.delta() * Y3;
        Mat3 J = f.geometry().tube_jacobian(s, y2, y3);
        auto grad = detail::tube_gradient(f, j, k, l, dth_coef);
        Mat3 Gq;
        Gq.col(0) = grad.du_ds;
        Gq.col(1) = grad.du_dy2;
        Gq.col(2) = grad.du_dy3;
        Mat3 G = Gq * J.inverse();
        Mat3 sym = 0.5 * (G + G.transpose());
        double w = ws * f.section_weight(k) * J.determinant();
        eacc += w * sym.squaredNorm();
        dacc += w * G.squaredNorm();
      }
    accE[j] = eacc;
    accD[j] = dacc;
  });
  TubeEnergies out;
  out.E = std::accumulate(accE.begin(), accE.end(), 0.0);
  out.D = std::accumulate(accD.begin(), accD.end(), 0.0);
  return out;
}

// Volume L2 norm squared of the sampled field over the physical tube.
inline double tube_l2_squared(const TubeField& f) {
  double acc = 0;
  for (int j = 0; j < f.ns(); ++j) {
    double ws = f.abscissa_weight(j);
    for (int k = 0; k < f.nr(); ++k)
      for (int l = 0; l < f.na(); ++l) {
        auto [Y2, Y3] = f.section_point(k, l);
        double c = f.geometry().frame(f.abscissae()[j]).c;
        double det = 1.0 - c * f.delta() * Y2;
        acc += ws * f.section_weight(k) * det * f.at(j, k, l).squaredNorm();
      }
  }
  return acc;
}

// Cross-section L2 norm squared at one abscissa node, over D(O, delta).
inline double cross_section_l2_squared(const TubeField& f, int j) {
  double acc = 0;
  for (int k = 0; k < f.nr(); ++k)
    for (int l = 0; l < f.na(); ++l)
      acc += f.section_weight(k) * f.at(j, k, l).squaredNorm();
  return acc;
}

// ---------------------------------------------------------------------------
// File round trip: CSV samples (s, Y2, Y3, u1, u2, u3) in grid index order
// plus a JSON header carrying the grid so a read-back reproduces the field
// bit-exactly. The geometry itself is not serialized; the reader supplies it.

inline void write_tube_field(const TubeField& f, const std::string& csv_path,
                             const std::string& json_path) {
  std::ofstream cs(csv_path);
  if (!cs) throw IOError("cannot open " + csv_path + " for writing");
  cs << "s,Y2,Y3,u1,u2,u3\n";
  char buf[128];
  for (int j = 0; j < f.ns(); ++j)
    for (int k = 0; k < f.nr(); ++k)
      for (int l = 0; l < f.na(); ++l) {
        auto [Y2, Y3] = f.section_point(k, l);
        const Vec3& u = f.at(j, k, l);
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,", f.abscissae()[j],
                      Y2, Y3);
        cs << buf;
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", u.x(), u.y(),
                      u.z());
        cs << buf;
      }

  nlohmann::ordered_json j;
  j["arc"] = f.arc();
  j["delta"] = f.delta();
  j["shape"] = {{"ns", f.ns()}, {"nr", f.nr()}, {"na", f.na()}};
  j["s"] = f.abscissae();
  j["rad"] = f.radii();
  j["rad_w"] = f.radial_weights();
  std::ofstream js(json_path);
  if (!js) throw IOError("cannot open " + json_path + " for writing");
  js << j.dump(2) << '\n';
}

inline TubeField read_tube_field(const ArcGeometry& geom,
                                 const std::string& csv_path,
                                 const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw IOError("cannot open " + json_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("tube header: ") + e.what());
  }
  int arc = j.at("arc").get<int>();
  double delta = j.at("delta").get<double>();
  int ns = j.at("shape").at("ns").get<int>();
  int nr = j.at("shape").at("nr").get<int>();
  int na = j.at("shape").at("na").get<int>();
  auto s = j.at("s").get<std::vector<double>>();
  auto rad = j.at("rad").get<std::vector<double>>();
  auto rad_w = j.at("rad_w").get<std::vector<double>>();
  if (static_cast<int>(s.size()) != ns || static_cast<int>(rad.size()) != nr)
    throw ParseError("tube header shape does not match node arrays");

  std::ifstream cs(csv_path);
  if (!cs) throw IOError("cannot open " + csv_path);
  std::string line;
  if (!std::getline(cs, line)) throw ParseError("tube csv is empty");
  std::vector<Vec3> u;
  u.reserve(static_cast<std::size_t>(ns) * nr * na);
  while (std::getline(cs, line)) {
    if (line.empty()) continue;
    double v[6];
    int consumed = std::sscanf(line.c_str(), "%lg,%lg,%lg,%lg,%lg,%lg", &v[0],
                               &v[1], &v[2], &v[3], &v[4], &v[5]);
    if (consumed != 6) throw ParseError("bad tube csv row: " + line);
    u.emplace_back(v[3], v[4], v[5]);
  }
  if (u.size() != static_cast<std::size_t>(ns) * nr * na)
    throw ParseError("tube csv row count does not match header shape");
  return TubeField(geom, arc, delta, std::move(s), std::move(rad),
                   std::move(rad_w), na, std::move(u));
}

}  // namespace rodlimit
