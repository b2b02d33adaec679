#pragma once

// Quadratic C0 discretization of a skeleton. Scalar nodes are shared across
// knots (and across the seam of closed arcs), clamped endpoints are
// eliminated, and every element caches frames at two quadrature rules:
//
//  * a fixed 2-point Gauss rule driving stiffness and the tangential
//    constraint rows, so both operators see exactly the same points and the
//    discrete constraint kernel matches the stiffness kernel;
//  * a finer rule (3..5 points) for load integration and norms.

#include <rodlimit/geometry.hpp>

#include <map>
#include <memory>
#include <numeric>

namespace rodlimit {

struct QuadPoint {
  double s = 0, w = 0;  // abscissa on the arc, weight including jacobian
  Vec3 T, N, B;
  double c = 0;
  std::array<double, 3> shp{}, dshp{};
};

struct MeshElement {
  int arc = -1;
  double s0 = 0, h = 0;
  std::array<int, 3> nodes{};           // scalar node ids: left, mid, right
  std::array<QuadPoint, 2> cq;          // constraint / stiffness rule
  std::vector<QuadPoint> fq;            // fine rule
};

class SkeletonMesh {
 public:
  struct NodeLoc {
    int arc = -1;
    double s = 0;
  };

  static std::shared_ptr<const SkeletonMesh> build(const Skeleton& skel,
                                                   double target_h,
                                                   int fine_quad = 5) {
    if (target_h <= 0) throw OutOfRange("mesh size must be positive");
    if (fine_quad < 3 || fine_quad > 5)
      throw OutOfRange("fine quadrature rule supports 3..5 points");
    auto mesh = std::make_shared<SkeletonMesh>();
    mesh->skel_ = skel;
    mesh->build_impl(target_h, fine_quad);
    return mesh;
  }

  const Skeleton& skeleton() const { return skel_; }
  int n_nodes() const { return n_nodes_; }
  int n_free() const { return n_free_; }
  int n_dofs() const { return 3 * n_free_; }
  int free_index(int node) const { return free_index_[node]; }
  // dof id of (node, component), or -1 when clamped
  int dof(int node, int comp) const {
    int f = free_index_[node];
    return f < 0 ? -1 : 3 * f + comp;
  }
  const std::vector<MeshElement>& elements() const { return elements_; }
  const std::vector<NodeLoc>& node_locations() const { return node_loc_; }
  double h_max() const { return h_max_; }

  int arc_count() const { return static_cast<int>(skel_.arcs.size()); }
  std::pair<int, int> arc_elem_range(int arc) const { return arc_range_[arc]; }
  const std::vector<double>& arc_vertex_s(int arc) const {
    return arc_vertex_s_[arc];
  }
  int endpoint_node(int arc, int end) const {
    auto [lo, hi] = arc_range_[arc];
    return end == 0 ? elements_[lo].nodes[0] : elements_[hi - 1].nodes[2];
  }
  int knot_node(int knot) const { return knot_node_[knot]; }

  // Element containing abscissa s on an arc; xi gets the local coordinate.
  int element_at(int arc, double s, double* xi = nullptr) const {
    const auto& vs = arc_vertex_s_[arc];
    double L = skel_.arcs[arc].length();
    if (s < -1e-9 * L || s > L * (1 + 1e-9))
      throw OutOfRange("abscissa outside arc in element_at");
    s = std::min(L, std::max(0.0, s));
    auto it = std::upper_bound(vs.begin(), vs.end(), s);
    int k = static_cast<int>(it - vs.begin()) - 1;
    k = std::max(0, std::min(k, static_cast<int>(vs.size()) - 2));
    int e = arc_range_[arc].first + k;
    if (xi) *xi = (s - elements_[e].s0) / elements_[e].h;
    return e;
  }

  bool clamped() const { return n_free_ < n_nodes_; }

 private:
  void build_impl(double target_h, int fine_quad) {
    const int n_arcs = static_cast<int>(skel_.arcs.size());
    arc_range_.resize(n_arcs);
    arc_vertex_s_.resize(n_arcs);

    // provisional per-arc node ids, then union endpoints across knots
    std::vector<int> first_node(n_arcs);
    int next = 0;
    for (int a = 0; a < n_arcs; ++a) {
      double L = skel_.arcs[a].length();
      int ne = std::max(1, static_cast<int>(std::lround(L / target_h)));
      first_node[a] = next;
      next += 2 * ne + 1;
      auto& vs = arc_vertex_s_[a];
      vs.resize(ne + 1);
      for (int k = 0; k <= ne; ++k) vs[k] = L * k / ne;
    }

    // union-find over provisional ids
    std::vector<int> parent(next);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    auto unite = [&](int x, int y) { parent[find(x)] = find(y); };

    auto endpoint_prov = [&](int arc, int end) {
      int ne = static_cast<int>(arc_vertex_s_[arc].size()) - 1;
      return end == 0 ? first_node[arc] : first_node[arc] + 2 * ne;
    };
    for (const auto& kn : skel_.knots) {
      if (kn.incidences.empty()) continue;
      int head = endpoint_prov(kn.incidences[0].arc, kn.incidences[0].end);
      for (const auto& e : kn.incidences)
        unite(endpoint_prov(e.arc, e.end), head);
    }
    for (int a = 0; a < n_arcs; ++a)
      if (skel_.arcs[a].closed()) unite(endpoint_prov(a, 0), endpoint_prov(a, 1));

    // compact ids in provisional order
    std::map<int, int> compact;
    std::vector<int> node_of(next);
    for (int i = 0; i < next; ++i) {
      int r = find(i);
      auto it = compact.find(r);
      if (it == compact.end()) {
        int id = static_cast<int>(compact.size());
        compact.emplace(r, id);
        node_of[i] = id;
      } else {
        node_of[i] = it->second;
      }
    }
    n_nodes_ = static_cast<int>(compact.size());

    node_loc_.assign(n_nodes_, NodeLoc{});
    std::vector<bool> seen(n_nodes_, false);

    const QuadRule& crule = gauss_rule(2);
    const QuadRule& frule = gauss_rule(fine_quad);
    h_max_ = 0;
    for (int a = 0; a < n_arcs; ++a) {
      const auto& vs = arc_vertex_s_[a];
      int ne = static_cast<int>(vs.size()) - 1;
      arc_range_[a] = {static_cast<int>(elements_.size()),
                       static_cast<int>(elements_.size()) + ne};
      for (int k = 0; k < ne; ++k) {
        MeshElement el;
        el.arc = a;
        el.s0 = vs[k];
        el.h = vs[k + 1] - vs[k];
        h_max_ = std::max(h_max_, el.h);
        el.nodes = {node_of[first_node[a] + 2 * k],
                    node_of[first_node[a] + 2 * k + 1],
                    node_of[first_node[a] + 2 * k + 2]};
        for (int q = 0; q < 2; ++q)
          el.cq[q] = make_qp(a, el, crule.x[q], crule.w[q]);
        el.fq.resize(frule.x.size());
        for (std::size_t q = 0; q < frule.x.size(); ++q)
          el.fq[q] = make_qp(a, el, frule.x[q], frule.w[q]);
        for (int j = 0; j < 3; ++j) {
          int n = el.nodes[j];
          if (!seen[n]) {
            seen[n] = true;
            node_loc_[n] = {a, el.s0 + 0.5 * j * el.h};
          }
        }
        elements_.push_back(std::move(el));
      }
    }

    // clamped endpoints
    std::vector<bool> is_clamped(n_nodes_, false);
    for (const auto& c : skel_.clamps) {
      int prov = endpoint_prov(c.arc, c.end);
      is_clamped[node_of[prov]] = true;
    }
    free_index_.assign(n_nodes_, -1);
    n_free_ = 0;
    for (int i = 0; i < n_nodes_; ++i)
      if (!is_clamped[i]) free_index_[i] = n_free_++;

    knot_node_.resize(skel_.knots.size());
    for (std::size_t k = 0; k < skel_.knots.size(); ++k) {
      const auto& inc = skel_.knots[k].incidences;
      knot_node_[k] =
          inc.empty() ? -1 : node_of[endpoint_prov(inc[0].arc, inc[0].end)];
    }
  }

  QuadPoint make_qp(int arc, const MeshElement& el, double xi, double w) const {
    QuadPoint qp;
    qp.s = el.s0 + xi * el.h;
    qp.w = w * el.h;
    FrameData f = skel_.arcs[arc].frame(qp.s);
    qp.T = f.T;
    qp.N = f.N;
    qp.B = f.B;
    qp.c = f.c;
    qp.shp = shape_values(xi);
    qp.dshp = shape_derivs(xi, el.h);
    return qp;
  }

 public:
  SkeletonMesh() = default;

 private:
  Skeleton skel_;
  std::vector<MeshElement> elements_;
  std::vector<std::pair<int, int>> arc_range_;
  std::vector<std::vector<double>> arc_vertex_s_;
  std::vector<NodeLoc> node_loc_;
  std::vector<int> free_index_;
  std::vector<int> knot_node_;
  int n_nodes_ = 0, n_free_ = 0;
  double h_max_ = 0;
};

using MeshPtr = std::shared_ptr<const SkeletonMesh>;

}  // namespace rodlimit
