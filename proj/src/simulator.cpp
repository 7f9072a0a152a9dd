#include "radimpute/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "radimpute/util.hpp"

namespace radimpute {

namespace {

using json = nlohmann::ordered_json;

bool inside_box(const Point2& p, const Point2& lo, const Point2& hi) {
  return lo.x <= p.x && p.x <= hi.x && lo.y <= p.y && p.y <= hi.y;
}

}  // namespace

VenueSpec VenueSpec::parse(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  VenueSpec v;
  const auto& bb = j.at("bbox");
  v.bb_min = {bb.at(0).get<double>(), bb.at(1).get<double>()};
  v.bb_max = {bb.at(2).get<double>(), bb.at(3).get<double>()};
  if (j.contains("walls")) v.walls = geom::parse_multipolygon(j.at("walls").dump());
  for (const auto& a : j.at("aps")) {
    ApSpec ap;
    ap.location = {a.at("x").get<double>(), a.at("y").get<double>()};
    ap.tx_power = a.at("tx_power").get<double>();
    ap.path_loss_exp = a.at("path_loss_exp").get<double>();
    ap.cutoff = a.at("cutoff").get<double>();
    v.aps.push_back(ap);
  }
  for (const auto& p : j.at("paths")) {
    std::vector<Point2> line;
    for (const auto& pt : p) line.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
    v.paths.push_back(std::move(line));
  }
  if (j.contains("walk_speed")) v.walk_speed = j.at("walk_speed").get<double>();
  if (j.contains("rp_spacing")) v.rp_spacing = j.at("rp_spacing").get<double>();
  if (j.contains("rssi_period")) v.rssi_period = j.at("rssi_period").get<double>();
  if (j.contains("noise_sigma")) v.noise_sigma = j.at("noise_sigma").get<double>();
  if (j.contains("wall_penalty")) v.wall_penalty = j.at("wall_penalty").get<double>();
  v.validate();
  return v;
}

VenueSpec VenueSpec::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open venue file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string VenueSpec::to_json() const {
  json j;
  j["bbox"] = {bb_min.x, bb_min.y, bb_max.x, bb_max.y};
  j["walls"] = nlohmann::json::parse(geom::to_json(walls));
  auto aps_json = json::array();
  for (const ApSpec& a : aps) {
    json e;
    e["x"] = a.location.x;
    e["y"] = a.location.y;
    e["tx_power"] = a.tx_power;
    e["path_loss_exp"] = a.path_loss_exp;
    e["cutoff"] = a.cutoff;
    aps_json.push_back(std::move(e));
  }
  j["aps"] = std::move(aps_json);
  auto paths_json = json::array();
  for (const auto& line : paths) {
    auto pl = json::array();
    for (const Point2& p : line) pl.push_back({p.x, p.y});
    paths_json.push_back(std::move(pl));
  }
  j["paths"] = std::move(paths_json);
  j["walk_speed"] = walk_speed;
  j["rp_spacing"] = rp_spacing;
  j["rssi_period"] = rssi_period;
  j["noise_sigma"] = noise_sigma;
  j["wall_penalty"] = wall_penalty;
  return j.dump(2);
}

void VenueSpec::validate() const {
  if (!(bb_max.x > bb_min.x) || !(bb_max.y > bb_min.y)) {
    throw std::invalid_argument("venue bounding box is empty");
  }
  if (rp_spacing <= 0) throw std::invalid_argument("rp_spacing must be positive");
  if (walk_speed <= 0) throw std::invalid_argument("walk_speed must be positive");
  if (rssi_period <= 0) throw std::invalid_argument("rssi_period must be positive");
  if (noise_sigma < 0) throw std::invalid_argument("noise_sigma must be non-negative");
  for (const ApSpec& a : aps) {
    if (!inside_box(a.location, bb_min, bb_max)) {
      throw std::invalid_argument("AP outside the venue bounding box");
    }
  }
  for (const auto& line : paths) {
    if (line.size() < 2) throw std::invalid_argument("survey path needs at least two waypoints");
    for (const Point2& p : line) {
      if (!inside_box(p, bb_min, bb_max)) {
        throw std::invalid_argument("waypoint outside the venue bounding box");
      }
    }
  }
}

namespace {

// Number of wall polygons the sight line clips (each polygon attenuates once).
int wall_crossings(const Point2& a, const Point2& b, const geom::MultiPolygon& walls) {
  int hits = 0;
  for (const geom::Ring& ring : walls.polygons) {
    bool hit = false;
    for (std::size_t i = 0; i < ring.size() && !hit; ++i) {
      hit = geom::segments_intersect(a, b, ring[i], ring[(i + 1) % ring.size()]);
    }
    hits += hit || geom::point_in_ring(a, ring) || geom::point_in_ring(b, ring);
  }
  return hits;
}

}  // namespace

double mean_rssi(const ApSpec& ap, const Point2& point, const VenueSpec& venue) {
  const double dist = std::max(1.0, std::hypot(point.x - ap.location.x, point.y - ap.location.y));
  return ap.tx_power - 10.0 * ap.path_loss_exp * std::log10(dist) -
         venue.wall_penalty * wall_crossings(point, ap.location, venue.walls);
}

std::optional<int> true_rssi(const ApSpec& ap, const Point2& point, const VenueSpec& venue,
                             std::mt19937_64& rng) {
  double r = mean_rssi(ap, point, venue);
  if (venue.noise_sigma > 0) {
    std::normal_distribution<double> noise(0.0, venue.noise_sigma);
    r += noise(rng);
  }
  const long rounded = std::lround(r);
  if (static_cast<double>(rounded) < ap.cutoff) return std::nullopt;
  return static_cast<int>(std::clamp<long>(rounded, kRssiMin, kRssiMax));
}

namespace {

struct Polyline {
  std::vector<Point2> pts;
  std::vector<double> cum;  // cumulative arc length per vertex

  explicit Polyline(const std::vector<Point2>& p) : pts(p), cum(p.size(), 0.0) {
    for (std::size_t i = 1; i < pts.size(); ++i) {
      cum[i] = cum[i - 1] + std::hypot(pts[i].x - pts[i - 1].x, pts[i].y - pts[i - 1].y);
    }
  }
  double length() const { return cum.back(); }
  Point2 at(double s) const {
    s = std::clamp(s, 0.0, length());
    auto it = std::upper_bound(cum.begin(), cum.end(), s);
    const std::size_t hi = std::min<std::size_t>(cum.size() - 1, it - cum.begin());
    const std::size_t lo = hi == 0 ? 0 : hi - 1;
    const double span = cum[hi] - cum[lo];
    const double w = span > 0 ? (s - cum[lo]) / span : 0.0;
    return {pts[lo].x + w * (pts[hi].x - pts[lo].x), pts[lo].y + w * (pts[hi].y - pts[lo].y)};
  }
};

constexpr double kInterPathGap = 30.0;  // seconds between consecutive walks

}  // namespace

SimulationResult generate_survey(const VenueSpec& venue, std::uint64_t seed, double p_mar) {
  if (p_mar < 0.0 || p_mar >= 1.0) throw std::invalid_argument("p_mar must lie in [0, 1)");
  venue.validate();
  std::mt19937_64 rng(mix_seed(seed, "simulate"));
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  SimulationResult out;
  double clock = 0.0;

  for (std::size_t path_idx = 0; path_idx < venue.paths.size(); ++path_idx) {
    const Polyline line(venue.paths[path_idx]);
    const double duration = line.length() / venue.walk_speed;

    struct Event {
      double t;
      bool is_rp;
    };
    std::vector<Event> events;
    for (double s = 0.0; s <= line.length() + 1e-9; s += venue.rp_spacing) {
      events.push_back({s / venue.walk_speed, true});
    }
    // Scans sit half a period off the walk start so RP fixes land between
    // two scans instead of on the gap edge.
    for (double t = venue.rssi_period / 2.0; t <= duration + 1e-9; t += venue.rssi_period) {
      events.push_back({t, false});
    }
    std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
      if (a.t != b.t) return a.t < b.t;
      return a.is_rp && !b.is_rp;  // RP fixes log first on simultaneous events
    });

    for (const Event& ev : events) {
      const Point2 pos = line.at(ev.t * venue.walk_speed);
      if (ev.is_rp) {
        SurveyRecord rec;
        rec.time = clock + ev.t;
        rec.kind = RecordKind::kRp;
        rec.rp = pos;
        rec.path = static_cast<int>(path_idx);
        out.table.push_back(std::move(rec));
        out.truth.positions.push_back(pos);
        continue;
      }

      SurveyRecord rec;
      rec.time = clock + ev.t;
      rec.kind = RecordKind::kRssi;
      rec.path = static_cast<int>(path_idx);
      std::vector<SurveyCellTruth> pending;
      for (std::size_t a = 0; a < venue.aps.size(); ++a) {
        const std::optional<int> reading = true_rssi(venue.aps[a], pos, venue, rng);
        if (!reading) {
          pending.push_back({0, static_cast<int>(a), -1, std::nullopt});
          continue;
        }
        if (coin(rng) < p_mar) {
          pending.push_back({0, static_cast<int>(a), 0, reading});
        } else {
          rec.rssi[static_cast<int>(a)] = *reading;
        }
      }
      if (rec.rssi.empty()) continue;  // nothing observed, nothing logged

      const std::size_t rec_idx = out.table.size();
      out.table.push_back(std::move(rec));
      out.truth.positions.push_back(pos);
      for (SurveyCellTruth& cell : pending) {
        cell.record = rec_idx;
        out.truth.cells.push_back(cell);
      }
    }
    clock += duration + kInterPathGap;
  }
  return out;
}

GroundTruthSample radio_map_truth(const BuildResult& build, const SurveyTable& table,
                                  const SurveyTruth& truth) {
  std::map<std::pair<std::size_t, int>, const SurveyCellTruth*> lookup;
  for (const SurveyCellTruth& c : truth.cells) lookup[{c.record, c.ap}] = &c;

  GroundTruthSample out;
  std::size_t mar = 0, mnar = 0;
  for (std::size_t i = 0; i < build.map.records.size(); ++i) {
    for (std::size_t j = 0; j < build.map.num_aps; ++j) {
      if (build.map.records[i].fingerprint[j]) continue;
      bool any_mar = false;
      bool any_truth = false;
      for (std::size_t src : build.sources[i]) {
        if (table[src].kind != RecordKind::kRssi) continue;
        auto it = lookup.find({src, static_cast<int>(j)});
        if (it == lookup.end()) continue;
        any_truth = true;
        if (it->second->label == 0) any_mar = true;
      }
      if (!any_truth) continue;  // no scan touched this cell
      out.cells.push_back({i, j});
      out.labels.push_back(any_mar ? 0 : -1);
      (any_mar ? mar : mnar)++;
    }
  }
  out.gamma = mar > 0 ? static_cast<double>(mnar) / static_cast<double>(mar)
                      : std::numeric_limits<double>::infinity();
  return out;
}

std::pair<RadioMap, HeldOutCells> remove_cells(const RadioMap& map, double beta, CellKind kind,
                                               std::uint64_t seed,
                                               const std::vector<std::size_t>& protect) {
  if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("beta must lie in [0, 1)");
  RadioMap reduced = map;
  HeldOutCells held;
  if (beta == 0.0) return {std::move(reduced), std::move(held)};
  std::mt19937_64 rng(mix_seed(seed, "remove-cells", static_cast<std::uint64_t>(kind)));

  if (kind == CellKind::kRssi) {
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t i = 0; i < map.records.size(); ++i) {
      for (std::size_t j = 0; j < map.num_aps; ++j) {
        if (map.records[i].fingerprint[j]) cells.push_back({i, j});
      }
    }
    std::shuffle(cells.begin(), cells.end(), rng);
    const std::size_t n = static_cast<std::size_t>(std::llround(beta * cells.size()));
    for (std::size_t c = 0; c < n; ++c) {
      const auto [i, j] = cells[c];
      held.rssi.push_back({i, j, *map.records[i].fingerprint[j]});
      reduced.records[i].fingerprint[j] = std::nullopt;
    }
  } else {
    std::vector<std::size_t> recs;
    for (std::size_t i = 0; i < map.records.size(); ++i) {
      if (map.records[i].rp &&
          std::find(protect.begin(), protect.end(), i) == protect.end()) {
        recs.push_back(i);
      }
    }
    std::shuffle(recs.begin(), recs.end(), rng);
    const std::size_t n = static_cast<std::size_t>(std::llround(beta * recs.size()));
    for (std::size_t c = 0; c < n; ++c) {
      held.rps.push_back({recs[c], *map.records[recs[c]].rp});
      reduced.records[recs[c]].rp = std::nullopt;
    }
  }
  return {std::move(reduced), std::move(held)};
}

}  // namespace radimpute
