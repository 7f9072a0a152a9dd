#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "radimpute/differentiator.hpp"
#include "radimpute/geometry.hpp"
#include "radimpute/map_builder.hpp"
#include "radimpute/survey.hpp"

namespace radimpute {

struct ApSpec {
  Point2 location;
  double tx_power = -30.0;      // dBm at 1 m
  double path_loss_exp = 2.5;
  double cutoff = -85.0;        // readings below this never reach the device
};

// Synthetic venue: log-distance path loss with a per-wall penalty, a walker
// tracing waypoint polylines at constant speed, RP fixes every rp_spacing
// meters and scans every rssi_period seconds.
struct VenueSpec {
  Point2 bb_min{0, 0}, bb_max{40, 40};
  geom::MultiPolygon walls;
  std::vector<ApSpec> aps;
  std::vector<std::vector<Point2>> paths;  // waypoint polylines
  double walk_speed = 1.0;     // m/s
  double rp_spacing = 5.0;     // m
  double rssi_period = 1.0;    // s
  double noise_sigma = 2.0;    // dBm
  double wall_penalty = 8.0;   // dBm per crossed wall polygon

  static VenueSpec load(const std::string& path);
  static VenueSpec parse(const std::string& json_text);
  std::string to_json() const;
  void validate() const;  // throws std::invalid_argument on bad geometry
};

// Noisy reading of one AP at a point, or nullopt when the signal falls below
// the AP's cutoff (the generative unobservable case). Deterministic given
// the rng state.
std::optional<int> true_rssi(const ApSpec& ap, const Point2& point, const VenueSpec& venue,
                             std::mt19937_64& rng);

// Noise-free signal mean; the building block of true_rssi, exposed for
// closed-form checks.
double mean_rssi(const ApSpec& ap, const Point2& point, const VenueSpec& venue);

struct SurveyCellTruth {
  std::size_t record = 0;  // index into the emitted survey table
  int ap = 0;
  std::int8_t label = 0;             // 0 dropped-but-observable, -1 out of range
  std::optional<int> value;          // the reading, for label 0
};

struct SurveyTruth {
  std::vector<SurveyCellTruth> cells;
  std::vector<Point2> positions;  // true walker position per survey record
};

struct SimulationResult {
  SurveyTable table;
  SurveyTruth truth;
};

// Walks every path, interleaving RP and scan records on a global clock, and
// labels every missing cell it creates. Each observable reading is dropped
// with probability p_mar (the drop recorded as recoverable truth).
SimulationResult generate_survey(const VenueSpec& venue, std::uint64_t seed, double p_mar);

// Projects the survey truth onto a built radio map: every null cell whose
// source scans include a dropped reading is recoverable, every null cell all
// of whose source scans were out of range is unobservable. Null cells with
// no scan sources carry no truth and are skipped.
GroundTruthSample radio_map_truth(const BuildResult& build, const SurveyTable& table,
                                  const SurveyTruth& truth);

enum class CellKind { kRssi, kRp };

struct HeldOutCells {
  std::vector<std::tuple<std::size_t, std::size_t, int>> rssi;  // record, ap, value
  std::vector<std::pair<std::size_t, Point2>> rps;
};

// Uniformly removes a fraction beta of the observed cells of one kind,
// returning the removed values as evaluation truth. `protect` records are
// exempt from RP removal.
std::pair<RadioMap, HeldOutCells> remove_cells(const RadioMap& map, double beta, CellKind kind,
                                               std::uint64_t seed,
                                               const std::vector<std::size_t>& protect = {});

}  // namespace radimpute
