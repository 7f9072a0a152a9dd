#pragma once

#include <optional>

#include "radimpute/survey.hpp"

namespace radimpute::testing {

// The worked 8-row survey: two RPs bracketing three RSSI scans, a second
// scan pair that fuses, and a trailing bare RP. Five APs.
inline SurveyTable demo_survey() {
  SurveyTable t;
  auto rp = [](double time, double x, double y) {
    SurveyRecord r;
    r.time = time;
    r.kind = RecordKind::kRp;
    r.rp = Point2{x, y};
    return r;
  };
  auto scan = [](double time, std::map<int, int> rssi) {
    SurveyRecord r;
    r.time = time;
    r.kind = RecordKind::kRssi;
    r.rssi = std::move(rssi);
    return r;
  };
  t.push_back(rp(0, 1.0, 2.0));
  t.push_back(scan(1, {{0, -70}, {1, -83}, {2, -76}}));
  t.push_back(scan(3, {{0, -71}, {2, -78}}));
  t.push_back(scan(8, {{2, -80}, {3, -68}}));
  t.push_back(rp(9, 5.0, 9.0));
  t.push_back(scan(12, {{0, -74}, {4, -80}}));
  t.push_back(scan(13, {{1, -77}, {4, -82}}));
  t.push_back(rp(16, 8.0, 3.0));
  return t;
}

// The radio map the demo survey merges into at epsilon = 1.
inline RadioMap demo_radio_map() {
  RadioMap map;
  map.num_aps = 5;
  auto rec = [](std::vector<std::optional<int>> fp, std::optional<Point2> rp, double time) {
    RadioMapRecord r;
    r.fingerprint = std::move(fp);
    r.rp = rp;
    r.time = time;
    r.path_id = 0;
    return r;
  };
  const auto none = std::nullopt;
  map.records.push_back(rec({-70, -83, -76, none, none}, Point2{1.0, 2.0}, 0));
  map.records.push_back(rec({-71, none, -78, none, none}, std::nullopt, 3));
  map.records.push_back(rec({none, none, -80, -68, none}, Point2{5.0, 9.0}, 8));
  map.records.push_back(rec({-74, -77, none, none, -81}, std::nullopt, 12));
  map.records.push_back(rec({none, none, none, none, none}, Point2{8.0, 3.0}, 16));
  return map;
}

}  // namespace radimpute::testing
