#include <catch2/catch_amalgamated.hpp>

#include <rodlimit/field.hpp>

#include <sstream>

using namespace rodlimit;

namespace {

Skeleton lframe() {
  Skeleton sk;
  sk.arcs.push_back(make_segment({0, 0, 0}, {1, 0, 0}, {0, 1, 0}));
  sk.arcs.push_back(make_segment({1, 0, 0}, {1, 1, 0}, {1, 0, 0}));
  Knot kn;
  kn.position = {1, 0, 0};
  kn.incidences = {{0, 1}, {1, 0}};
  sk.knots.push_back(kn);
  sk.clamps = {{0, 0}, {1, 1}};
  return sk;
}

}  // namespace

TEST_CASE("mesh identifies knot nodes and eliminates clamps") {
  auto mesh = SkeletonMesh::build(lframe(), 0.1);
  // 10 elements per arc: 21 scalar nodes each, one shared at the knot
  CHECK(mesh->n_nodes() == 41);
  CHECK(mesh->n_free() == 39);
  CHECK(mesh->n_dofs() == 117);
  CHECK(mesh->endpoint_node(0, 1) == mesh->endpoint_node(1, 0));
  CHECK(mesh->knot_node(0) == mesh->endpoint_node(0, 1));
  CHECK(mesh->free_index(mesh->endpoint_node(0, 0)) == -1);
  CHECK(mesh->free_index(mesh->endpoint_node(1, 1)) == -1);
  CHECK(mesh->elements().size() == 20);
  CHECK(mesh->h_max() == Catch::Approx(0.1));
}

TEST_CASE("closed arcs share the seam node") {
  Skeleton sk;
  sk.arcs.push_back(make_circular_arc({0, 0, 0}, {1, 0, 0}, {0, 1, 0}, 1.0,
                                      0.0, 2.0 * M_PI));
  auto mesh = SkeletonMesh::build(sk, 0.5);
  int ne = static_cast<int>(mesh->elements().size());
  // 2*ne+1 provisional nodes minus the identified seam
  CHECK(mesh->n_nodes() == 2 * ne);
  CHECK(mesh->endpoint_node(0, 0) == mesh->endpoint_node(0, 1));
}

TEST_CASE("quadratic fields are reproduced exactly") {
  // ambient quadratic, continuous across the knot; per arc it restricts to
  // a quadratic in s, so nodal interpolation reproduces it exactly
  Skeleton sk = lframe();
  sk.clamps.clear();  // interpolation zeroes clamped nodes
  auto mesh = SkeletonMesh::build(sk, 0.23);
  auto position = [&](int arc, double s) { return sk.arcs[arc].point(s); };
  auto f = [&](int arc, double s) {
    Vec3 x = position(arc, s);
    return Vec3(x.squaredNorm(), x.x() - x.y(), x.x() * x.y());
  };
  SkeletonField F = SkeletonField::interpolate(mesh, f);
  for (double s : {0.0, 0.11, 0.5, 0.77, 1.0}) {
    for (int arc = 0; arc < 2; ++arc) {
      CHECK((F.value(arc, s) - f(arc, s)).norm() < 1e-13);
      Vec3 d = arc == 0 ? Vec3(2 * s, 1, 0) : Vec3(2 * s, -1, 1);
      CHECK((F.derivative(arc, s) - d).norm() < 1e-12);
    }
  }
  CHECK((F.one_sided_derivative(0, 1) - Vec3(2, 1, 0)).norm() < 1e-12);
  CHECK((F.one_sided_derivative(1, 0) - Vec3(0, -1, 1)).norm() < 1e-12);
}

TEST_CASE("norms match closed forms on a single segment") {
  Skeleton sk;
  sk.arcs.push_back(make_segment({0, 0, 0}, {1, 0, 0}, {0, 1, 0}));
  auto mesh = SkeletonMesh::build(sk, 0.1);
  SkeletonField F = SkeletonField::interpolate(
      mesh, [](int, double s) { return Vec3(s * s, 0, 0); });
  // int s^4 = 1/5, int (2s)^2 = 4/3
  CHECK(l2_norm(F) == Catch::Approx(std::sqrt(0.2)).epsilon(1e-12));
  CHECK(h1_seminorm(F) == Catch::Approx(std::sqrt(4.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("field csv export") {
  Skeleton sk;
  sk.arcs.push_back(make_segment({0, 0, 0}, {1, 0, 0}, {0, 1, 0}));
  auto mesh = SkeletonMesh::build(sk, 0.25);
  SkeletonField F = SkeletonField::interpolate(
      mesh, [](int, double s) { return Vec3(s, -s, 2 * s); });
  std::ostringstream os;
  write_field_csv(os, F, 0);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header == "s,V1,V2,V3");
  int rows = 0;
  double s, v1, v2, v3;
  char comma;
  std::string line;
  double worst = 0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    ls >> s >> comma >> v1 >> comma >> v2 >> comma >> v3;
    worst = std::max(worst, std::abs(v1 - s) + std::abs(v2 + s) +
                                std::abs(v3 - 2 * s));
    ++rows;
  }
  CHECK(rows == 9);  // 4 elements: 5 vertices + 4 midpoints
  CHECK(worst == 0.0);  // %.17g round trips doubles exactly
}
