#pragma once

#include <string>
#include <vector>

#include "radimpute/survey.hpp"

namespace radimpute::geom {

// Coordinates are venue-local meters; orientation tests snap values within
// this tolerance to zero so boundary cases resolve the same way every run.
inline constexpr double kSnap = 1e-9;

using Ring = std::vector<Point2>;  // simple polygon, counter-clockwise

struct MultiPolygon {
  std::vector<Ring> polygons;
};

// Convex hull with the degenerate shapes kept explicit.
struct Hull {
  enum class Kind { kPoint, kSegment, kPolygon };
  Kind kind = Kind::kPoint;
  Ring points;  // 1 vertex, 2 endpoints, or >=3 CCW strictly convex vertices
};

// Sign of the turn o->a->b: +1 left, -1 right, 0 straight (within snap).
int orient(const Point2& o, const Point2& a, const Point2& b);

// Closed point-in-polygon test; boundary points count as inside.
bool point_in_ring(const Point2& p, const Ring& ring);

// Closed segment intersection; touching endpoints count.
bool segments_intersect(const Point2& a, const Point2& b, const Point2& c, const Point2& d);

// Smallest convex set covering the points; collinear input degrades to a
// segment, coincident input to a point. Throws on an empty input.
Hull convex_hull(std::vector<Point2> points);

// True iff the hull of the cluster's locations touches or overlaps any
// polygon of the topology.
bool entity_exist(const std::vector<Point2>& cluster_points, const MultiPolygon& topology);
bool hull_intersects(const Hull& hull, const MultiPolygon& topology);

// GeoJSON-style multipolygon, accepting either
//   {"type":"MultiPolygon","coordinates":[[[[x,y],...]],...]} or
//   {"polygons":[[[x,y],...],...]}.
// Only outer rings are read; rings are normalized to CCW.
MultiPolygon load_multipolygon(const std::string& path);
MultiPolygon parse_multipolygon(const std::string& json_text);
std::string to_json(const MultiPolygon& mp);

double ring_area(const Ring& ring);  // signed, CCW positive

}  // namespace radimpute::geom
