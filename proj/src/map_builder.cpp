#include "radimpute/map_builder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace radimpute {

namespace {

struct Annotated {
  SurveyRecord rec;
  std::vector<std::size_t> sources;
};

void check_sorted(const SurveyTable& table) {
  std::map<int, double> last;
  for (const SurveyRecord& r : table) {
    auto it = last.find(r.path);
    if (it != last.end() && r.time < it->second) {
      throw std::invalid_argument("survey table is not time-sorted within a path");
    }
    last[r.path] = r.time;
  }
}

// Average of two integer readings, rounded half away from zero.
int average_rssi(int a, int b) { return static_cast<int>(std::llround((a + b) / 2.0)); }

// Step 1 on the rows of a single path, preserving row order. The anchor of a
// run of merges keeps its (earlier) time, so a chain of closely spaced rows
// self-limits instead of collapsing into one record.
std::vector<Annotated> step1_path(std::vector<Annotated> rows, double epsilon) {
  std::vector<Annotated> out;
  bool has_pending = false;
  std::size_t pending_idx = 0;
  for (Annotated& row : rows) {
    if (row.rec.kind != RecordKind::kRssi) {
      out.push_back(std::move(row));
      continue;
    }
    if (has_pending && row.rec.time - out[pending_idx].rec.time <= epsilon) {
      Annotated& anchor = out[pending_idx];
      for (const auto& [ap, v] : row.rec.rssi) {
        auto it = anchor.rec.rssi.find(ap);
        if (it == anchor.rec.rssi.end()) {
          anchor.rec.rssi[ap] = v;
        } else {
          it->second = average_rssi(it->second, v);
        }
      }
      anchor.sources.insert(anchor.sources.end(), row.sources.begin(), row.sources.end());
    } else {
      out.push_back(std::move(row));
      pending_idx = out.size() - 1;
      has_pending = true;
    }
  }
  return out;
}

std::vector<int> path_order(const SurveyTable& table) {
  std::vector<int> order;
  for (const SurveyRecord& r : table) {
    if (std::find(order.begin(), order.end(), r.path) == order.end()) order.push_back(r.path);
  }
  return order;
}

std::vector<Annotated> run_step1(const SurveyTable& table, double epsilon) {
  if (epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
  check_sorted(table);
  std::vector<Annotated> merged;
  for (int path : path_order(table)) {
    std::vector<Annotated> rows;
    for (std::size_t i = 0; i < table.size(); ++i) {
      if (table[i].path == path) rows.push_back({table[i], {i}});
    }
    auto done = step1_path(std::move(rows), epsilon);
    merged.insert(merged.end(), std::make_move_iterator(done.begin()),
                  std::make_move_iterator(done.end()));
  }
  std::stable_sort(merged.begin(), merged.end(),
                   [](const Annotated& a, const Annotated& b) { return a.rec.time < b.rec.time; });
  return merged;
}

std::size_t infer_num_aps(const SurveyTable& table) {
  int max_ap = -1;
  for (const SurveyRecord& r : table) {
    for (const auto& [ap, v] : r.rssi) {
      (void)v;
      if (ap < 0) throw std::invalid_argument("negative AP index in survey table");
      max_ap = std::max(max_ap, ap);
    }
  }
  return static_cast<std::size_t>(max_ap + 1);
}

std::vector<std::optional<int>> to_fingerprint(const std::map<int, int>& rssi,
                                               std::size_t num_aps) {
  std::vector<std::optional<int>> fp(num_aps);
  for (const auto& [ap, v] : rssi) {
    if (static_cast<std::size_t>(ap) >= num_aps) {
      throw std::invalid_argument("AP index exceeds the requested fingerprint width");
    }
    fp[ap] = v;
  }
  return fp;
}

BuildResult run_step2(std::vector<Annotated> merged, double epsilon, std::size_t num_aps) {
  struct OutRecord {
    RadioMapRecord rec;
    std::vector<std::size_t> sources;
  };
  std::vector<OutRecord> out;

  std::vector<int> paths;
  for (const Annotated& a : merged) {
    if (std::find(paths.begin(), paths.end(), a.rec.path) == paths.end()) {
      paths.push_back(a.rec.path);
    }
  }

  for (int path : paths) {
    std::vector<const Annotated*> rssi_rows;
    std::vector<const Annotated*> rp_rows;
    for (const Annotated& a : merged) {
      if (a.rec.path != path) continue;
      (a.rec.kind == RecordKind::kRssi ? rssi_rows : rp_rows).push_back(&a);
    }

    // Each RP claims its nearest unclaimed fingerprint within epsilon; the
    // earlier row wins ties so one RP never labels two fingerprints.
    std::vector<bool> claimed(rssi_rows.size(), false);
    std::vector<int> partner_of_rp(rp_rows.size(), -1);
    for (std::size_t k = 0; k < rp_rows.size(); ++k) {
      double best_gap = epsilon;
      int best = -1;
      for (std::size_t r = 0; r < rssi_rows.size(); ++r) {
        if (claimed[r]) continue;
        const double gap = std::abs(rssi_rows[r]->rec.time - rp_rows[k]->rec.time);
        if (gap < best_gap || (gap <= best_gap && best == -1)) {
          best_gap = gap;
          best = static_cast<int>(r);
        }
      }
      if (best >= 0) {
        claimed[best] = true;
        partner_of_rp[k] = best;
      }
    }

    const std::size_t rssi_base = out.size();
    for (const Annotated* row : rssi_rows) {
      OutRecord o;
      o.rec.fingerprint = to_fingerprint(row->rec.rssi, num_aps);
      o.rec.time = row->rec.time;
      o.rec.path_id = path;
      o.sources = row->sources;
      out.push_back(std::move(o));
    }
    for (std::size_t k = 0; k < rp_rows.size(); ++k) {
      if (partner_of_rp[k] >= 0) {
        OutRecord& o = out[rssi_base + partner_of_rp[k]];
        o.rec.rp = rp_rows[k]->rec.rp;
        // The fused record anchors at the earlier of the two times, the same
        // convention the scan-scan merge uses.
        o.rec.time = std::min(o.rec.time, rp_rows[k]->rec.time);
        o.sources.insert(o.sources.end(), rp_rows[k]->sources.begin(), rp_rows[k]->sources.end());
      } else {
        OutRecord o;
        o.rec.fingerprint.assign(num_aps, std::nullopt);
        o.rec.rp = rp_rows[k]->rec.rp;
        o.rec.time = rp_rows[k]->rec.time;
        o.rec.path_id = path;
        o.sources = rp_rows[k]->sources;
        out.push_back(std::move(o));
      }
    }
  }

  std::stable_sort(out.begin(), out.end(), [](const OutRecord& a, const OutRecord& b) {
    if (a.rec.path_id != b.rec.path_id) return a.rec.path_id < b.rec.path_id;
    return a.rec.time < b.rec.time;
  });

  BuildResult result;
  result.map.num_aps = num_aps;
  for (OutRecord& o : out) {
    std::sort(o.sources.begin(), o.sources.end());
    result.map.records.push_back(std::move(o.rec));
    result.sources.push_back(std::move(o.sources));
  }
  return result;
}

}  // namespace

SurveyTable merge_rssi_records(const SurveyTable& table, double epsilon) {
  auto merged = run_step1(table, epsilon);
  SurveyTable out;
  out.reserve(merged.size());
  for (Annotated& a : merged) out.push_back(std::move(a.rec));
  return out;
}

BuildResult merge_rp_rssi(const SurveyTable& merged, double epsilon, std::size_t num_aps) {
  if (epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
  check_sorted(merged);
  if (num_aps == 0) num_aps = infer_num_aps(merged);
  std::vector<Annotated> rows;
  rows.reserve(merged.size());
  for (std::size_t i = 0; i < merged.size(); ++i) rows.push_back({merged[i], {i}});
  return run_step2(std::move(rows), epsilon, num_aps);
}

BuildResult build_radio_map(const SurveyTable& table, double epsilon, std::size_t num_aps) {
  if (num_aps == 0) num_aps = infer_num_aps(table);
  return run_step2(run_step1(table, epsilon), epsilon, num_aps);
}

}  // namespace radimpute
