#pragma once

// Shared scalar/vector aliases, error hierarchy and small numeric helpers
// used across the rodlimit headers.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rodlimit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// ---------------------------------------------------------------------------
// Errors. Each condition the library can reject gets its own type so callers
// can discriminate without string matching.

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define RODLIMIT_DEFINE_ERROR(NAME)                                  \
  struct NAME : Error {                                              \
    explicit NAME(const std::string& what) : Error(#NAME ": " + what) {} \
  }

RODLIMIT_DEFINE_ERROR(OutOfRange);
RODLIMIT_DEFINE_ERROR(FrameUndefined);
RODLIMIT_DEFINE_ERROR(NonUnitSpeedUnfixable);
RODLIMIT_DEFINE_ERROR(DeltaTooLarge);
RODLIMIT_DEFINE_ERROR(OverlappingJunctions);
RODLIMIT_DEFINE_ERROR(NotClamped);
RODLIMIT_DEFINE_ERROR(KnotNotMeshNode);
RODLIMIT_DEFINE_ERROR(SaddleSingular);
RODLIMIT_DEFINE_ERROR(SingularInconsistent);
RODLIMIT_DEFINE_ERROR(NoConvergence);
RODLIMIT_DEFINE_ERROR(SolverFailure);
RODLIMIT_DEFINE_ERROR(OrthogonalityViolation);
RODLIMIT_DEFINE_ERROR(OrthogonalityNotEnforced);
RODLIMIT_DEFINE_ERROR(GridTooCoarse);
RODLIMIT_DEFINE_ERROR(RankDeficient);
RODLIMIT_DEFINE_ERROR(ParseError);
RODLIMIT_DEFINE_ERROR(IOError);

#undef RODLIMIT_DEFINE_ERROR

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(what);
}

// ---------------------------------------------------------------------------
// Default tolerances. These are interface constants; operations take them as
// defaulted parameters so tests can tighten or relax individual checks.

namespace tol {
constexpr double arclen = 1e-8;       // relative unit-speed defect
constexpr double frame = 1e-10;       // frame orthonormality defect
constexpr double knot_rel = 1e-9;     // knot position residual, relative to arc length
constexpr double tangency = 1e-6;     // min angle (radians) between tangents at a knot
constexpr double curvature_min = 1e-8;  // below this the Frenet normal is undefined
constexpr double constraint = 1e-8;   // relative kinematic-pair residual
constexpr double orthogonality = 1e-10;  // load orthogonality defect
}  // namespace tol

// ---------------------------------------------------------------------------
// Gauss-Legendre rules mapped to [0,1]. Nodes symmetric, weights sum to 1.

struct QuadRule {
  std::vector<double> x;  // nodes in (0,1)
  std::vector<double> w;  // weights, sum = 1
};

inline const QuadRule& gauss_rule(int n) {
  static const QuadRule g2{{0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)},
                           {0.5, 0.5}};
  static const QuadRule g3{
      {0.5 - 0.5 * std::sqrt(0.6), 0.5, 0.5 + 0.5 * std::sqrt(0.6)},
      {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0}};
  static const QuadRule g4{
      {0.5 - 0.5 * 0.8611363115940526, 0.5 - 0.5 * 0.3399810435848563,
       0.5 + 0.5 * 0.3399810435848563, 0.5 + 0.5 * 0.8611363115940526},
      {0.5 * 0.3478548451374538, 0.5 * 0.6521451548625461,
       0.5 * 0.6521451548625461, 0.5 * 0.3478548451374538}};
  static const QuadRule g5{
      {0.5 - 0.5 * 0.9061798459386640, 0.5 - 0.5 * 0.5384693101056831, 0.5,
       0.5 + 0.5 * 0.5384693101056831, 0.5 + 0.5 * 0.9061798459386640},
      {0.5 * 0.2369268850561891, 0.5 * 0.4786286704993665,
       0.5 * 0.5688888888888889, 0.5 * 0.4786286704993665,
       0.5 * 0.2369268850561891}};
  switch (n) {
    case 2: return g2;
    case 3: return g3;
    case 4: return g4;
    case 5: return g5;
    default: throw OutOfRange("gauss_rule supports 2..5 points, got " + std::to_string(n));
  }
}

// ---------------------------------------------------------------------------
// Misc numeric helpers.

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Quadratic C0 shape functions on the reference element [0,1].
// Node order: left vertex, midpoint, right vertex.
inline std::array<double, 3> shape_values(double xi) {
  return {2.0 * (xi - 0.5) * (xi - 1.0), 4.0 * xi * (1.0 - xi),
          2.0 * xi * (xi - 0.5)};
}

inline std::array<double, 3> shape_derivs(double xi, double h) {
  // d/ds with s = s0 + xi*h
  return {(4.0 * xi - 3.0) / h, (4.0 - 8.0 * xi) / h, (4.0 * xi - 1.0) / h};
}

// ---------------------------------------------------------------------------
// Deterministic parallel map. Results land at fixed indices; any reduction
// afterwards runs in index order, so thread count never changes output.

inline int worker_count() {
  if (const char* env = std::getenv("ROD_NUM_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  int workers = worker_count();
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::size_t chunk = (n + workers - 1) / static_cast<std::size_t>(workers);
  for (int t = 0; t < workers; ++t) {
    std::size_t lo = static_cast<std::size_t>(t) * chunk;
    if (lo >= n) break;
    std::size_t hi = std::min(n, lo + chunk);
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace rodlimit
