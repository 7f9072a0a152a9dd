#include "radimpute/survey.hpp"

#include <cmath>
#include <map>

namespace radimpute {

std::vector<Violation> validate_radio_map(const RadioMap& map) {
  std::vector<Violation> out;
  std::map<int, std::pair<double, bool>> last_time_by_path;  // path -> (time, seen)

  for (std::size_t i = 0; i < map.records.size(); ++i) {
    const RadioMapRecord& r = map.records[i];
    if (r.fingerprint.size() != map.num_aps) {
      out.push_back({i, "fingerprint", "length must equal the map's AP dimension"});
    }
    for (std::size_t d = 0; d < r.fingerprint.size(); ++d) {
      const auto& v = r.fingerprint[d];
      if (v && (*v < kMnarFill || *v > kRssiMax)) {
        out.push_back({i, "fingerprint[" + std::to_string(d) + "]",
                       "RSSI outside [" + std::to_string(kMnarFill) + ", " +
                           std::to_string(kRssiMax) + "]"});
      }
    }
    if (r.rp && (!std::isfinite(r.rp->x) || !std::isfinite(r.rp->y))) {
      out.push_back({i, "rp", "coordinates must be finite"});
    }
    if (!std::isfinite(r.time)) {
      out.push_back({i, "time", "must be finite"});
    }
    auto it = last_time_by_path.find(r.path_id);
    if (it != last_time_by_path.end() && it->second.second && r.time <= it->second.first) {
      out.push_back({i, "time", "must strictly increase within a path"});
    }
    last_time_by_path[r.path_id] = {r.time, true};
  }
  return out;
}

MaskMatrix observation_mask(const RadioMap& map) {
  MaskMatrix m(map.records.size(), map.num_aps, 1);
  for (std::size_t i = 0; i < map.records.size(); ++i) {
    for (std::size_t j = 0; j < map.num_aps; ++j) {
      if (!map.records[i].fingerprint[j]) m.set(i, j, 0);
    }
  }
  return m;
}

}  // namespace radimpute
