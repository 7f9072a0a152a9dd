#include "radimpute/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace radimpute::geom {

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool in_box(const Point2& p, const Point2& a, const Point2& b) {
  return std::min(a.x, b.x) - kSnap <= p.x && p.x <= std::max(a.x, b.x) + kSnap &&
         std::min(a.y, b.y) - kSnap <= p.y && p.y <= std::max(a.y, b.y) + kSnap;
}

bool on_segment(const Point2& p, const Point2& a, const Point2& b) {
  return orient(a, b, p) == 0 && in_box(p, a, b);
}

}  // namespace

int orient(const Point2& o, const Point2& a, const Point2& b) {
  const double c = cross(o, a, b);
  if (c > kSnap) return 1;
  if (c < -kSnap) return -1;
  return 0;
}

bool segments_intersect(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const int o1 = orient(a, b, c);
  const int o2 = orient(a, b, d);
  const int o3 = orient(c, d, a);
  const int o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && in_box(c, a, b)) return true;
  if (o2 == 0 && in_box(d, a, b)) return true;
  if (o3 == 0 && in_box(a, c, d)) return true;
  if (o4 == 0 && in_box(b, c, d)) return true;
  return false;
}

bool point_in_ring(const Point2& p, const Ring& ring) {
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (on_segment(p, ring[i], ring[(i + 1) % n])) return true;
  }
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2& a = ring[i];
    const Point2& b = ring[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_at = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (p.x < x_at) inside = !inside;
    }
  }
  return inside;
}

double ring_area(const Ring& ring) {
  double s = 0.0;
  for (std::size_t i = 0, n = ring.size(); i < n; ++i) {
    const Point2& a = ring[i];
    const Point2& b = ring[(i + 1) % n];
    s += a.x * b.y - b.x * a.y;
  }
  return s / 2.0;
}

Hull convex_hull(std::vector<Point2> pts) {
  if (pts.empty()) throw std::invalid_argument("convex hull of an empty point set");
  std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Point2& a, const Point2& b) {
                          return std::abs(a.x - b.x) <= kSnap && std::abs(a.y - b.y) <= kSnap;
                        }),
            pts.end());

  Hull h;
  if (pts.size() == 1) {
    h.kind = Hull::Kind::kPoint;
    h.points = {pts[0]};
    return h;
  }

  // Monotone chain; strict turns only, so collinear boundary points drop out.
  const std::size_t n = pts.size();
  Ring ring(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 && orient(ring[k - 2], ring[k - 1], pts[i]) <= 0) --k;
    ring[k++] = pts[i];
  }
  for (std::size_t i = n - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && orient(ring[k - 2], ring[k - 1], pts[i]) <= 0) --k;
    ring[k++] = pts[i];
  }
  ring.resize(k - 1);

  if (ring.size() == 2) {
    h.kind = Hull::Kind::kSegment;
    h.points = {ring[0], ring[1]};
    return h;
  }
  h.kind = Hull::Kind::kPolygon;
  h.points = std::move(ring);
  return h;
}

namespace {

bool ring_touches_ring(const Ring& a, const Ring& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Point2& p = a[i];
    const Point2& q = a[(i + 1) % a.size()];
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (segments_intersect(p, q, b[j], b[(j + 1) % b.size()])) return true;
    }
  }
  // No edge crossings: either disjoint or one contains the other.
  return point_in_ring(a[0], b) || point_in_ring(b[0], a);
}

bool segment_touches_ring(const Point2& a, const Point2& b, const Ring& ring) {
  for (std::size_t j = 0; j < ring.size(); ++j) {
    if (segments_intersect(a, b, ring[j], ring[(j + 1) % ring.size()])) return true;
  }
  return point_in_ring(a, ring);
}

}  // namespace

bool hull_intersects(const Hull& hull, const MultiPolygon& topology) {
  for (const Ring& ring : topology.polygons) {
    if (ring.size() < 3) continue;
    switch (hull.kind) {
      case Hull::Kind::kPoint:
        if (point_in_ring(hull.points[0], ring)) return true;
        break;
      case Hull::Kind::kSegment:
        if (segment_touches_ring(hull.points[0], hull.points[1], ring)) return true;
        break;
      case Hull::Kind::kPolygon:
        if (ring_touches_ring(hull.points, ring)) return true;
        break;
    }
  }
  return false;
}

bool entity_exist(const std::vector<Point2>& cluster_points, const MultiPolygon& topology) {
  return hull_intersects(convex_hull(cluster_points), topology);
}

namespace {

Ring parse_ring(const nlohmann::json& arr) {
  Ring ring;
  for (const auto& pt : arr) {
    ring.push_back(Point2{pt.at(0).get<double>(), pt.at(1).get<double>()});
  }
  // GeoJSON rings repeat the first vertex at the end.
  if (ring.size() >= 2 && ring.front() == ring.back()) ring.pop_back();
  if (ring.size() < 3) throw std::runtime_error("polygon ring needs at least 3 vertices");
  if (ring_area(ring) < 0) std::reverse(ring.begin(), ring.end());
  return ring;
}

}  // namespace

MultiPolygon parse_multipolygon(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  MultiPolygon mp;
  if (j.contains("coordinates")) {
    for (const auto& poly : j.at("coordinates")) {
      mp.polygons.push_back(parse_ring(poly.at(0)));  // outer ring only
    }
  } else if (j.contains("polygons")) {
    for (const auto& poly : j.at("polygons")) {
      mp.polygons.push_back(parse_ring(poly));
    }
  } else {
    throw std::runtime_error("topology json needs 'coordinates' or 'polygons'");
  }
  return mp;
}

MultiPolygon load_multipolygon(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open topology file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_multipolygon(ss.str());
}

std::string to_json(const MultiPolygon& mp) {
  nlohmann::ordered_json j;
  j["type"] = "MultiPolygon";
  auto coords = nlohmann::ordered_json::array();
  for (const Ring& ring : mp.polygons) {
    auto outer = nlohmann::ordered_json::array();
    for (const Point2& p : ring) outer.push_back({p.x, p.y});
    if (!ring.empty()) outer.push_back({ring.front().x, ring.front().y});
    coords.push_back(nlohmann::ordered_json::array({outer}));
  }
  j["coordinates"] = std::move(coords);
  return j.dump();
}

}  // namespace radimpute::geom
