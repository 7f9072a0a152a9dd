#include "radimpute/positioning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "radimpute/differentiator.hpp"

namespace radimpute {

namespace {

std::vector<std::pair<double, std::size_t>> ranked_distances(const RadioMap& dense,
                                                             const std::vector<int>& query, int k) {
  const std::size_t n = dense.records.size();
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (static_cast<std::size_t>(k) > n) throw std::invalid_argument("k exceeds the record count");
  if (query.size() != dense.num_aps) throw std::invalid_argument("query dimension mismatch");

  std::vector<std::pair<double, std::size_t>> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const auto& fp = dense.records[i].fingerprint;
    for (std::size_t j = 0; j < query.size(); ++j) {
      if (!fp[j] || !dense.records[i].rp) {
        throw std::invalid_argument("radio map must be dense for location estimation");
      }
      const double diff = *fp[j] - query[j];
      acc += diff * diff;
    }
    d[i] = {std::sqrt(acc), i};
  }
  std::partial_sort(d.begin(), d.begin() + k, d.end());
  d.resize(k);
  return d;
}

}  // namespace

Point2 knn_locate(const RadioMap& dense, const std::vector<int>& query_fp, int k) {
  const auto top = ranked_distances(dense, query_fp, k);
  Point2 mean{0, 0};
  for (const auto& [dist, idx] : top) {
    mean.x += dense.records[idx].rp->x;
    mean.y += dense.records[idx].rp->y;
  }
  mean.x /= k;
  mean.y /= k;
  return mean;
}

Point2 wknn_locate(const RadioMap& dense, const std::vector<int>& query_fp, int k) {
  const auto top = ranked_distances(dense, query_fp, k);
  if (top.front().first == 0.0) return *dense.records[top.front().second].rp;
  double total = 0.0;
  Point2 est{0, 0};
  for (const auto& [dist, idx] : top) {
    const double w = 1.0 / (dist + 1e-6);
    est.x += w * dense.records[idx].rp->x;
    est.y += w * dense.records[idx].rp->y;
    total += w;
  }
  est.x /= total;
  est.y /= total;
  return est;
}

RadioMap baseline_cd(const RadioMap& map) {
  RadioMap out;
  out.num_aps = map.num_aps;
  for (const RadioMapRecord& r : map.records) {
    if (!r.rp) continue;
    RadioMapRecord kept = r;
    for (auto& v : kept.fingerprint) {
      if (!v) v = kMnarFill;
    }
    out.records.push_back(std::move(kept));
  }
  if (out.records.empty()) throw std::runtime_error("case deletion removed every record");
  return out;
}

RadioMap baseline_li(const RadioMap& map) {
  const std::vector<Point2> locations = interpolated_locations(map);
  RadioMap out = map;
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    if (!out.records[i].rp) out.records[i].rp = locations[i];
    for (auto& v : out.records[i].fingerprint) {
      if (!v) v = kMnarFill;
    }
  }
  return out;
}

}  // namespace radimpute
