#pragma once

#include <vector>

#include "radimpute/survey.hpp"

namespace radimpute {

// Nearest-fingerprint location estimation over a dense radio map. Distances
// are Euclidean over all AP dimensions (floor fills included); ties break on
// record index.
Point2 knn_locate(const RadioMap& dense, const std::vector<int>& query_fp, int k);

// Weights inversely proportional to distance (1/(d+1e-6), normalized); an
// exact fingerprint match returns that record's RP outright.
Point2 wknn_locate(const RadioMap& dense, const std::vector<int>& query_fp, int k);

// Drops records without an RP and floors every remaining null RSSI.
// Throws std::runtime_error when nothing survives.
RadioMap baseline_cd(const RadioMap& map);

// Interpolates null RPs along each path (time-weighted, same rule the
// differentiator uses) and floors null RSSIs.
RadioMap baseline_li(const RadioMap& map);

}  // namespace radimpute
