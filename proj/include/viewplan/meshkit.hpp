#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "viewplan/geom3d.hpp"

namespace viewplan {

/// Indexed triangle soup. Indices are 0-based into `vertices`.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  void validate() const {
    const int n = static_cast<int>(vertices.size());
    for (const auto& t : triangles) {
      for (int idx : t) {
        if (idx < 0 || idx >= n) {
          throw std::invalid_argument("TriMesh: triangle index out of range");
        }
      }
    }
  }

  TriMesh transformed(const Pose& pose) const {
    TriMesh out;
    out.vertices.reserve(vertices.size());
    for (const auto& v : vertices) out.vertices.push_back(pose.to_world(v));
    out.triangles = triangles;
    return out;
  }

  void append(const TriMesh& other) {
    const int base = static_cast<int>(vertices.size());
    vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
    for (const auto& t : other.triangles) {
      triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
    }
  }
};

struct Segment {
  Vec3 a, b;
};

struct Aabb {
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};

  void grow(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void grow(const Aabb& o) {
    lo = lo.cwiseMin(o.lo);
    hi = hi.cwiseMax(o.hi);
  }
};

// Both-sided segment/triangle intersection with the hit parameter restricted
// to [tmin, tmax] along the segment. Zero-area triangles never hit.
inline bool segment_triangle_hit(const Vec3& a, const Vec3& b, const Vec3& v0, const Vec3& v1,
                                 const Vec3& v2, double tmin, double tmax) {
  const Vec3 dir = b - a;
  const Vec3 e1 = v1 - v0;
  const Vec3 e2 = v2 - v0;
  const Vec3 pvec = dir.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < 1e-300) return false;
  const double inv_det = 1.0 / det;
  const Vec3 tvec = a - v0;
  const double u = tvec.dot(pvec) * inv_det;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 qvec = tvec.cross(e1);
  const double v = dir.dot(qvec) * inv_det;
  if (v < 0.0 || u + v > 1.0) return false;
  const double t = e2.dot(qvec) * inv_det;
  return t >= tmin && t <= tmax;
}

namespace detail {

// Slab test for the segment parameter window [tmin, tmax].
inline bool segment_aabb_overlap(const Vec3& a, const Vec3& dir, const Aabb& box, double tmin,
                                 double tmax) {
  double t0 = tmin, t1 = tmax;
  for (int i = 0; i < 3; ++i) {
    const double d = dir[i];
    if (std::abs(d) < 1e-300) {
      if (a[i] < box.lo[i] || a[i] > box.hi[i]) return false;
      continue;
    }
    const double inv = 1.0 / d;
    double near = (box.lo[i] - a[i]) * inv;
    double far = (box.hi[i] - a[i]) * inv;
    if (near > far) std::swap(near, far);
    t0 = std::max(t0, near);
    t1 = std::min(t1, far);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace detail

/// Bounding volume hierarchy for any-hit segment queries.
/// Median split on the largest centroid axis, at most 4 triangles per leaf.
/// Immutable after build; holds its own copy of the triangle geometry.
class Bvh {
 public:
  Bvh() = default;

  explicit Bvh(const TriMesh& mesh) {
    mesh.validate();
    const std::size_t n = mesh.triangles.size();
    tris_.reserve(n);
    for (const auto& t : mesh.triangles) {
      tris_.push_back({mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]});
    }
    if (n == 0) return;
    order_.resize(n);
    for (std::size_t i = 0; i < n; ++i) order_[i] = static_cast<int>(i);
    nodes_.reserve(2 * n);
    build_node(0, static_cast<int>(n));
  }

  std::size_t triangle_count() const { return tris_.size(); }
  bool empty() const { return tris_.empty(); }

  // True when any triangle intersects the segment with hit parameter in
  // [eps, 1-eps] of the segment length. eps in [0, 0.5).
  bool segment_hits(const Segment& seg, double eps = 1e-4) const {
    check_eps(eps);
    if (nodes_.empty()) return false;
    const Vec3 dir = seg.b - seg.a;
    if (dir.squaredNorm() < 1e-300) return false;
    const double tmin = eps, tmax = 1.0 - eps;

    int stack[64];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      const Node& node = nodes_[stack[--sp]];
      if (!detail::segment_aabb_overlap(seg.a, dir, node.bounds, tmin, tmax)) continue;
      if (node.count > 0) {
        for (int i = node.first; i < node.first + node.count; ++i) {
          const Tri& t = tris_[order_[i]];
          if (segment_triangle_hit(seg.a, seg.b, t.v0, t.v1, t.v2, tmin, tmax)) return true;
        }
      } else {
        stack[sp++] = node.right;
        stack[sp++] = node.left;
      }
    }
    return false;
  }

  static void check_eps(double eps) {
    if (!(eps >= 0.0) || !(eps < 0.5)) {
      throw std::invalid_argument("segment_hits: eps must lie in [0, 0.5)");
    }
  }

  // Leaf partition audit support: leaf ranges index into the permuted order.
  template <typename Fn>
  void for_each_leaf(Fn&& fn) const {
    for (const Node& node : nodes_) {
      if (node.count > 0) fn(&order_[node.first], node.count);
    }
  }

 private:
  struct Tri {
    Vec3 v0, v1, v2;
  };
  struct Node {
    Aabb bounds;
    int left = -1, right = -1;
    int first = 0, count = 0;  // count > 0 marks a leaf
  };

  int build_node(int first, int count) {
    Node node;
    for (int i = first; i < first + count; ++i) {
      const Tri& t = tris_[order_[i]];
      node.bounds.grow(t.v0);
      node.bounds.grow(t.v1);
      node.bounds.grow(t.v2);
    }
    const int index = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (count <= 4) {
      nodes_[index].first = first;
      nodes_[index].count = count;
      return index;
    }
    Aabb cbounds;
    for (int i = first; i < first + count; ++i) cbounds.grow(centroid(order_[i]));
    int axis = 0;
    const Vec3 ext = cbounds.hi - cbounds.lo;
    if (ext.y() > ext.x()) axis = 1;
    if (ext.z() > ext[axis]) axis = 2;
    const int mid = first + count / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                     [&](int lhs, int rhs) { return centroid(lhs)[axis] < centroid(rhs)[axis]; });
    const int left = build_node(first, mid - first);
    const int right = build_node(mid, first + count - mid);
    nodes_[index].left = left;
    nodes_[index].right = right;
    return index;
  }

  Vec3 centroid(int tri) const {
    const Tri& t = tris_[tri];
    return (t.v0 + t.v1 + t.v2) / 3.0;
  }

  std::vector<Tri> tris_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

inline Bvh build_bvh(const TriMesh& mesh) { return Bvh(mesh); }

inline bool segment_hits(const Bvh& bvh, const Segment& seg, double eps = 1e-4) {
  return bvh.segment_hits(seg, eps);
}

// Reference oracle: test every triangle directly.
inline bool segment_hits_bruteforce(const TriMesh& mesh, const Segment& seg, double eps = 1e-4) {
  Bvh::check_eps(eps);
  const Vec3 dir = seg.b - seg.a;
  if (dir.squaredNorm() < 1e-300) return false;
  for (const auto& t : mesh.triangles) {
    if (segment_triangle_hit(seg.a, seg.b, mesh.vertices[t[0]], mesh.vertices[t[1]],
                             mesh.vertices[t[2]], eps, 1.0 - eps)) {
      return true;
    }
  }
  return false;
}

// ---- Primitive builders ----

// Rectangle spanned by corner + edge_u + edge_v, two triangles.
inline TriMesh make_quad(const Vec3& corner, const Vec3& edge_u, const Vec3& edge_v) {
  TriMesh m;
  m.vertices = {corner, corner + edge_u, corner + edge_u + edge_v, corner + edge_v};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

inline TriMesh make_box(const Vec3& center, const Vec3& half_extents) {
  TriMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.push_back(center + Vec3((i & 1) ? half_extents.x() : -half_extents.x(),
                                       (i & 2) ? half_extents.y() : -half_extents.y(),
                                       (i & 4) ? half_extents.z() : -half_extents.z()));
  }
  m.triangles = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
                 {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  return m;
}

namespace detail {

// Orthonormal frame with w as the third axis.
inline void axis_frame(const Vec3& w, Vec3* u, Vec3* v) {
  const Vec3 pick = std::abs(w.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
  *u = w.cross(pick).normalized();
  *v = w.cross(*u);
}

}  // namespace detail

inline TriMesh make_cylinder(const Vec3& base, const Vec3& axis, double radius, int segments = 24) {
  if (!(radius > 0.0)) throw std::invalid_argument("make_cylinder: radius must be > 0");
  if (segments < 3) throw std::invalid_argument("make_cylinder: segments must be >= 3");
  const double h = axis.norm();
  if (!(h > 0.0)) throw std::invalid_argument("make_cylinder: axis must be nonzero");
  const Vec3 w = axis / h;
  Vec3 u, v;
  detail::axis_frame(w, &u, &v);
  TriMesh m;
  for (int i = 0; i < segments; ++i) {
    const double phi = 2.0 * 3.14159265358979323846 * i / segments;
    const Vec3 rim = radius * (std::cos(phi) * u + std::sin(phi) * v);
    m.vertices.push_back(base + rim);
    m.vertices.push_back(base + axis + rim);
  }
  const int bc = static_cast<int>(m.vertices.size());
  m.vertices.push_back(base);
  m.vertices.push_back(base + axis);
  for (int i = 0; i < segments; ++i) {
    const int j = (i + 1) % segments;
    const int b0 = 2 * i, t0 = 2 * i + 1, b1 = 2 * j, t1 = 2 * j + 1;
    m.triangles.push_back({b0, b1, t1});
    m.triangles.push_back({b0, t1, t0});
    m.triangles.push_back({bc, b1, b0});
    m.triangles.push_back({bc + 1, t0, t1});
  }
  return m;
}

// Closed capsule around segment p0..p1. Collapses to a sphere when p0 == p1.
// `segments` is the count around the axis; it should be divisible by 4 so the
// equator touches the axis-aligned extremes exactly.
inline TriMesh make_capsule(const Vec3& p0, const Vec3& p1, double radius, int segments = 24) {
  if (!(radius > 0.0)) throw std::invalid_argument("make_capsule: radius must be > 0");
  if (segments < 4) throw std::invalid_argument("make_capsule: segments must be >= 4");
  const int rings = std::max(2, segments / 4);  // latitude rings per cap
  Vec3 w = p1 - p0;
  const double h = w.norm();
  w = h > 1e-12 ? Vec3(w / h) : Vec3(0, 0, 1);
  Vec3 u, v;
  detail::axis_frame(w, &u, &v);

  TriMesh m;
  const double pi = 3.14159265358979323846;
  // Latitude sweep: bottom pole, bottom cap rings up to the p0 equator, top
  // cap rings from the p1 equator, top pole. Ring r=rings sits at p0, the
  // next `rings` sit at p1; the gap between them is the cylindrical side.
  m.vertices.push_back(p0 - radius * w);
  std::vector<int> ring_start;
  for (int half = 0; half < 2; ++half) {
    for (int r = 1; r <= rings; ++r) {
      const double lat = half == 0 ? (-pi / 2 + (pi / 2) * r / rings)
                                   : ((pi / 2) * (r - 1) / rings);
      const Vec3 center = half == 0 ? p0 : p1;
      ring_start.push_back(static_cast<int>(m.vertices.size()));
      for (int i = 0; i < segments; ++i) {
        const double phi = 2.0 * pi * i / segments;
        const Vec3 rim = radius * std::cos(lat) * (std::cos(phi) * u + std::sin(phi) * v);
        m.vertices.push_back(center + rim + radius * std::sin(lat) * w);
      }
    }
  }
  const int top_pole = static_cast<int>(m.vertices.size());
  m.vertices.push_back(p1 + radius * w);

  auto ring = [&](int r, int i) { return ring_start[r] + (i % segments); };
  for (int i = 0; i < segments; ++i) {
    m.triangles.push_back({0, ring(0, i + 1), ring(0, i)});
  }
  const int nrings = static_cast<int>(ring_start.size());
  for (int r = 0; r + 1 < nrings; ++r) {
    for (int i = 0; i < segments; ++i) {
      m.triangles.push_back({ring(r, i), ring(r, i + 1), ring(r + 1, i + 1)});
      m.triangles.push_back({ring(r, i), ring(r + 1, i + 1), ring(r + 1, i)});
    }
  }
  for (int i = 0; i < segments; ++i) {
    m.triangles.push_back({top_pole, ring(nrings - 1, i), ring(nrings - 1, i + 1)});
  }
  return m;
}

// ---- Wavefront OBJ (ASCII subset: v and f records) ----

class ObjParseError : public std::runtime_error {
 public:
  ObjParseError(const std::string& path, int line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

inline TriMesh parse_obj(std::istream& in, const std::string& path) {
  TriMesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) {
        throw ObjParseError(path, lineno, "malformed vertex record");
      }
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        // Accept i, i/j, i//k, i/j/k; only the vertex index is used.
        const std::size_t slash = tok.find('/');
        const std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
        int value = 0;
        try {
          std::size_t used = 0;
          value = std::stoi(head, &used);
          if (used != head.size()) throw std::invalid_argument(head);
        } catch (const std::exception&) {
          throw ObjParseError(path, lineno, "malformed face index '" + tok + "'");
        }
        if (value < 1 || value > static_cast<int>(mesh.vertices.size())) {
          throw ObjParseError(path, lineno, "face index out of range: " + head);
        }
        idx.push_back(value - 1);
      }
      if (idx.size() < 3) {
        throw ObjParseError(path, lineno, "face needs at least 3 vertices");
      }
      for (std::size_t i = 1; i + 1 < idx.size(); ++i) {
        mesh.triangles.push_back({idx[0], idx[i], idx[i + 1]});
      }
    }
    // Other record types (vn, vt, g, o, s, usemtl, mtllib, ...) are ignored.
  }
  return mesh;
}

inline TriMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_obj: cannot open " + path);
  return parse_obj(in, path);
}

}  // namespace viewplan
