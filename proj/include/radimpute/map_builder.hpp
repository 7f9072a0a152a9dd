#pragma once

#include <cstddef>
#include <vector>

#include "radimpute/survey.hpp"

namespace radimpute {

// Radio map plus, per output record, the indices of the survey rows that were
// folded into it. Provenance is what lets synthetic ground truth follow the
// merge.
struct BuildResult {
  RadioMap map;
  std::vector<std::vector<std::size_t>> sources;
};

// Step 1 of the merge: fuse RSSI rows whose times are within epsilon of the
// running (earlier) anchor time, left to right, separately per path. The
// merged row keeps the anchor time; a shared AP takes the rounded average of
// the two values. RP rows pass through untouched.
// Throws std::invalid_argument if the table is not time-sorted per path or
// epsilon <= 0.
SurveyTable merge_rssi_records(const SurveyTable& table, double epsilon);

// Step 2: pair each RP row with its nearest unclaimed RSSI row within epsilon
// (earlier row wins ties); unpaired rows become records on their own. The
// fused record keeps the RSSI row's time and fingerprint and copies the RP.
// Expects the output of merge_rssi_records.
BuildResult merge_rp_rssi(const SurveyTable& merged, double epsilon, std::size_t num_aps = 0);

// Both steps. num_aps = 0 infers the dimension from the largest AP index.
BuildResult build_radio_map(const SurveyTable& table, double epsilon, std::size_t num_aps = 0);

}  // namespace radimpute
