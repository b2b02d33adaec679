#pragma once

// Arclength-parametrized curve primitives: segments, circular arcs, helices
// and resampled cubic splines. Every curve exposed here evaluates with unit
// speed; the spline achieves this through an arclength table plus Newton
// inversion built at construction time.

#include <rodlimit/types.hpp>

#include <cmath>
#include <memory>

namespace rodlimit {

class Curve {
 public:
  virtual ~Curve() = default;
  virtual double length() const = 0;
  virtual Vec3 point(double s) const = 0;
  // First derivative in s (unit tangent).
  virtual Vec3 d1(double s) const = 0;
  // Second derivative in s (curvature vector).
  virtual Vec3 d2(double s) const = 0;
  virtual double torsion(double s) const { return torsion_fd(s); }
  virtual bool closed() const { return false; }

 protected:
  // Fallback: torsion from a central difference of the binormal. Only valid
  // where curvature is bounded away from zero.
  double torsion_fd(double s) const {
    const double L = length();
    const double h = 1e-5 * std::max(1.0, L);
    double sm = std::max(0.0, s - h), sp = std::min(L, s + h);
    auto binormal = [this](double t) -> Vec3 {
      Vec3 dd = d2(t);
      double c = dd.norm();
      if (c < 1e-12) throw FrameUndefined("torsion_fd in flat region");
      return Vec3(d1(t).cross(dd / c));
    };
    Vec3 dB = (binormal(sp) - binormal(sm)) / (sp - sm);
    Vec3 dd = d2(s);
    double c = dd.norm();
    if (c < 1e-12) return 0.0;
    return -dB.dot(dd / c);
  }
};

// ---------------------------------------------------------------------------

class Segment final : public Curve {
 public:
  Segment(const Vec3& a, const Vec3& b) : a_(a), dir_(b - a) {
    len_ = dir_.norm();
    if (len_ <= 0) throw OutOfRange("Segment endpoints coincide");
    dir_ /= len_;
  }
  double length() const override { return len_; }
  Vec3 point(double s) const override { return a_ + s * dir_; }
  Vec3 d1(double) const override { return dir_; }
  Vec3 d2(double) const override { return Vec3::Zero(); }
  double torsion(double) const override { return 0.0; }

 private:
  Vec3 a_, dir_;
  double len_;
};

// Circle arc of radius R in the plane spanned by the orthonormal pair (u,v)
// around `center`, from angle0 to angle1 (radians, angle1 > angle0).
class CircularArc final : public Curve {
 public:
  CircularArc(const Vec3& center, const Vec3& u, const Vec3& v, double R,
              double angle0, double angle1)
      : c_(center), u_(u.normalized()), R_(R), a0_(angle0), a1_(angle1) {
    if (R <= 0) throw OutOfRange("CircularArc radius must be positive");
    if (angle1 <= angle0) throw OutOfRange("CircularArc needs angle1 > angle0");
    v_ = (v - v.dot(u_) * u_).normalized();
  }
  double length() const override { return R_ * (a1_ - a0_); }
  Vec3 point(double s) const override {
    double t = a0_ + s / R_;
    return c_ + R_ * (std::cos(t) * u_ + std::sin(t) * v_);
  }
  Vec3 d1(double s) const override {
    double t = a0_ + s / R_;
    return -std::sin(t) * u_ + std::cos(t) * v_;
  }
  Vec3 d2(double s) const override {
    double t = a0_ + s / R_;
    return (-std::cos(t) * u_ - std::sin(t) * v_) / R_;
  }
  double torsion(double) const override { return 0.0; }
  bool closed() const override {
    return std::abs((a1_ - a0_) - 2.0 * M_PI) < 1e-12;
  }
  double radius() const { return R_; }

 private:
  Vec3 c_, u_, v_;
  double R_, a0_, a1_;
};

// Circular helix around the axis through p0 with direction e: radius a,
// pitch slope b per unit angle, angle range [t0, t1].
class Helix final : public Curve {
 public:
  Helix(const Vec3& p0, const Vec3& e, const Vec3& u, double a, double b,
        double t0, double t1)
      : p0_(p0), e_(e.normalized()), a_(a), b_(b), t0_(t0), t1_(t1) {
    if (a <= 0) throw OutOfRange("Helix radius must be positive");
    if (t1 <= t0) throw OutOfRange("Helix needs t1 > t0");
    u_ = (u - u.dot(e_) * e_).normalized();
    v_ = e_.cross(u_);
    speed_ = std::sqrt(a_ * a_ + b_ * b_);
  }
  double length() const override { return (t1_ - t0_) * speed_; }
  Vec3 point(double s) const override {
    double t = t0_ + s / speed_;
    return p0_ + a_ * (std::cos(t) * u_ + std::sin(t) * v_) + b_ * t * e_;
  }
  Vec3 d1(double s) const override {
    double t = t0_ + s / speed_;
    return (a_ * (-std::sin(t) * u_ + std::cos(t) * v_) + b_ * e_) / speed_;
  }
  Vec3 d2(double s) const override {
    double t = t0_ + s / speed_;
    return -a_ * (std::cos(t) * u_ + std::sin(t) * v_) / (speed_ * speed_);
  }
  double torsion(double) const override { return b_ / (speed_ * speed_); }

 private:
  Vec3 p0_, e_, u_, v_;
  double a_, b_, t0_, t1_;
  double speed_;
};

// ---------------------------------------------------------------------------
// Natural cubic spline through control points, reparametrized by arclength.
// The parameter grid is u = 0..m-1; arclength s(u) is tabulated on resample_n
// nodes with 5-point Gauss per gap and inverted by safeguarded Newton.

class SplineCurve final : public Curve {
 public:
  SplineCurve(const std::vector<Vec3>& points, int resample_n)
      : pts_(points) {
    if (pts_.size() < 3) throw OutOfRange("SplineCurve needs >= 3 control points");
    if (resample_n < 8) throw OutOfRange("SplineCurve needs resample_n >= 8");
    build_moments();
    build_arclength_table(resample_n);
  }

  double length() const override { return stab_.back(); }
  Vec3 point(double s) const override { return eval(u_of_s(s)).x; }
  Vec3 d1(double s) const override {
    auto e = eval(u_of_s(s));
    return e.xu / e.xu.norm();
  }
  Vec3 d2(double s) const override {
    auto e = eval(u_of_s(s));
    double v2 = e.xu.squaredNorm();
    // chain rule with du/ds = 1/|x_u| and d2u/ds2 = -(x_u . x_uu)/|x_u|^4
    return e.xuu / v2 - e.xu * (e.xu.dot(e.xuu)) / (v2 * v2);
  }
  bool closed() const override {
    return (pts_.front() - pts_.back()).norm() < 1e-12;
  }

 private:
  struct Eval {
    Vec3 x, xu, xuu;
  };

  Eval eval(double u) const {
    int m = static_cast<int>(pts_.size());
    int i = std::min(m - 2, std::max(0, static_cast<int>(std::floor(u))));
    double t = u - i;
    // standard moment form on [i, i+1] with unit knot spacing
    Vec3 Mi = mom_[i], Mi1 = mom_[i + 1];
    Vec3 a = pts_[i], b = pts_[i + 1];
    Eval e;
    e.x = Mi * ((1 - t) * (1 - t) * (1 - t)) / 6.0 + Mi1 * (t * t * t) / 6.0 +
          (b - Mi1 / 6.0) * t + (a - Mi / 6.0) * (1 - t);
    e.xu = -Mi * ((1 - t) * (1 - t)) / 2.0 + Mi1 * (t * t) / 2.0 +
           (b - a) - (Mi1 - Mi) / 6.0;
    e.xuu = Mi * (1 - t) + Mi1 * t;
    return e;
  }

  double speed(double u) const {
    double v = eval(u).xu.norm();
    if (v < 1e-12 * std::max(1.0, stab_.empty() ? 1.0 : stab_.back()))
      throw NonUnitSpeedUnfixable("spline speed vanishes at u=" + std::to_string(u));
    return v;
  }

  void build_moments() {
    // natural BC: second derivatives vanish at both ends
    int m = static_cast<int>(pts_.size());
    mom_.assign(m, Vec3::Zero());
    int n = m - 2;
    if (n <= 0) return;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd rhs(n, 3);
    for (int i = 0; i < n; ++i) {
      A(i, i) = 4.0;
      if (i > 0) A(i, i - 1) = 1.0;
      if (i + 1 < n) A(i, i + 1) = 1.0;
      Vec3 r = 6.0 * (pts_[i] - 2.0 * pts_[i + 1] + pts_[i + 2]);
      rhs.row(i) = r.transpose();
    }
    Eigen::MatrixXd sol = A.ldlt().solve(rhs);
    for (int i = 0; i < n; ++i) mom_[i + 1] = sol.row(i).transpose();
  }

  void build_arclength_table(int resample_n) {
    int m = static_cast<int>(pts_.size());
    double umax = m - 1.0;
    utab_.resize(resample_n);
    stab_.resize(resample_n);
    const QuadRule& q = gauss_rule(5);
    utab_[0] = 0.0;
    stab_[0] = 0.0;
    for (int k = 1; k < resample_n; ++k) {
      utab_[k] = umax * k / (resample_n - 1.0);
      double du = utab_[k] - utab_[k - 1];
      double seg = 0.0;
      for (std::size_t j = 0; j < q.x.size(); ++j)
        seg += q.w[j] * speed(utab_[k - 1] + q.x[j] * du);
      stab_[k] = stab_[k - 1] + seg * du;
    }
  }

  double arclen_from(double u_lo, double s_lo, double u) const {
    const QuadRule& q = gauss_rule(5);
    double acc = s_lo, du = u - u_lo;
    for (std::size_t j = 0; j < q.x.size(); ++j)
      acc += q.w[j] * speed(u_lo + q.x[j] * du) * du;
    return acc;
  }

  double u_of_s(double s) const {
    const double L = stab_.back();
    if (s < -1e-9 * L || s > L * (1.0 + 1e-9))
      throw OutOfRange("spline abscissa outside [0,L]");
    s = std::min(L, std::max(0.0, s));
    auto it = std::upper_bound(stab_.begin(), stab_.end(), s);
    int k = std::max(1, static_cast<int>(it - stab_.begin()));
    k = std::min(k, static_cast<int>(stab_.size()) - 1);
    double u = utab_[k - 1] + (utab_[k] - utab_[k - 1]) *
                                  (s - stab_[k - 1]) /
                                  std::max(1e-300, stab_[k] - stab_[k - 1]);
    double lo = utab_[k - 1], hi = utab_[k];
    for (int it2 = 0; it2 < 60; ++it2) {
      double f = arclen_from(utab_[k - 1], stab_[k - 1], u) - s;
      if (std::abs(f) < 1e-13 * std::max(1.0, L)) return u;
      if (f > 0)
        hi = u;
      else
        lo = u;
      double step = f / speed(u);
      double un = u - step;
      u = (un > lo && un < hi) ? un : 0.5 * (lo + hi);
    }
    throw NonUnitSpeedUnfixable("arclength inversion failed to converge");
  }

  std::vector<Vec3> pts_;
  std::vector<Vec3> mom_;
  std::vector<double> utab_, stab_;
};

}  // namespace rodlimit
