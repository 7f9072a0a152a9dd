#include "radimpute/differentiator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

#include "radimpute/util.hpp"

namespace radimpute {

namespace {

double sq(double v) { return v * v; }

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += sq(a[i] - b[i]);
  return s;
}

std::vector<std::vector<std::size_t>> records_by_path(const RadioMap& map) {
  std::vector<int> order;
  std::map<int, std::size_t> slot;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < map.records.size(); ++i) {
    const int p = map.records[i].path_id;
    auto it = slot.find(p);
    if (it == slot.end()) {
      slot[p] = groups.size();
      groups.emplace_back();
      it = slot.find(p);
    }
    groups[it->second].push_back(i);
  }
  return groups;
}

}  // namespace

std::vector<std::uint8_t> binarize(const std::vector<std::optional<int>>& fingerprint) {
  std::vector<std::uint8_t> b(fingerprint.size());
  for (std::size_t i = 0; i < fingerprint.size(); ++i) b[i] = fingerprint[i] ? 1 : 0;
  return b;
}

std::vector<Point2> interpolated_locations(const RadioMap& map) {
  std::vector<Point2> out(map.records.size());
  for (const auto& group : records_by_path(map)) {
    std::vector<std::size_t> observed;
    for (std::size_t idx : group) {
      if (map.records[idx].rp) observed.push_back(idx);
    }
    if (observed.empty()) {
      throw UnplaceablePathError(map.records[group.front()].path_id);
    }
    std::size_t next_pos = 0;  // index into `observed` of the next observed RP
    for (std::size_t gi = 0; gi < group.size(); ++gi) {
      const std::size_t idx = group[gi];
      const RadioMapRecord& rec = map.records[idx];
      if (rec.rp) {
        out[idx] = *rec.rp;
        if (next_pos < observed.size() && observed[next_pos] == idx) ++next_pos;
        continue;
      }
      const bool has_prev = next_pos > 0;
      const bool has_next = next_pos < observed.size();
      if (has_prev && has_next) {
        const RadioMapRecord& a = map.records[observed[next_pos - 1]];
        const RadioMapRecord& b = map.records[observed[next_pos]];
        const double span = b.time - a.time;
        const double w = span > 0 ? (rec.time - a.time) / span : 0.5;
        out[idx] = Point2{a.rp->x + w * (b.rp->x - a.rp->x), a.rp->y + w * (b.rp->y - a.rp->y)};
      } else if (has_prev) {
        out[idx] = *map.records[observed[next_pos - 1]].rp;
      } else {
        out[idx] = *map.records[observed[next_pos]].rp;
      }
    }
  }
  return out;
}

std::vector<ApProfile> build_samples(const RadioMap& map) {
  const std::vector<Point2> locations = interpolated_locations(map);
  std::vector<ApProfile> samples(map.records.size());
  for (std::size_t i = 0; i < map.records.size(); ++i) {
    samples[i].binary = binarize(map.records[i].fingerprint);
    samples[i].location = locations[i];
  }
  return samples;
}

std::vector<std::vector<double>> clustering_features(const std::vector<ApProfile>& samples) {
  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_x;
  for (const ApProfile& s : samples) {
    min_x = std::min(min_x, s.location.x);
    max_x = std::max(max_x, s.location.x);
    min_y = std::min(min_y, s.location.y);
    max_y = std::max(max_y, s.location.y);
  }
  double diag = std::hypot(max_x - min_x, max_y - min_y);
  if (!(diag > 0.0)) diag = 1.0;

  std::vector<std::vector<double>> features;
  features.reserve(samples.size());
  for (const ApProfile& s : samples) {
    std::vector<double> f;
    f.reserve(s.binary.size() + 2);
    for (std::uint8_t b : s.binary) f.push_back(b);
    f.push_back(s.location.x / diag);
    f.push_back(s.location.y / diag);
    features.push_back(std::move(f));
  }
  return features;
}

MaskMatrix differentiate(const RadioMap& map, const Clustering& clustering, double eta) {
  const std::size_t n = map.records.size();
  const std::size_t d = map.num_aps;
  if (clustering.assignments.size() != n) {
    throw std::invalid_argument("clustering does not cover all records");
  }
  const int k = clustering.num_clusters() > 0
                    ? clustering.num_clusters()
                    : 1 + *std::max_element(clustering.assignments.begin(),
                                            clustering.assignments.end());

  std::vector<std::size_t> cluster_size(k, 0);
  std::vector<std::vector<std::size_t>> observed(k, std::vector<std::size_t>(d, 0));
  for (std::size_t i = 0; i < n; ++i) {
    const int c = clustering.assignments[i];
    if (c < 0 || c >= k) throw std::logic_error("cluster id out of range");
    cluster_size[c]++;
    for (std::size_t j = 0; j < d; ++j) {
      if (map.records[i].fingerprint[j]) observed[c][j]++;
    }
  }
  for (int c = 0; c < k; ++c) {
    if (cluster_size[c] == 0) throw std::logic_error("empty cluster");
  }

  MaskMatrix mask(n, d, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = clustering.assignments[i];
    for (std::size_t j = 0; j < d; ++j) {
      if (map.records[i].fingerprint[j]) continue;
      const double eta_j = static_cast<double>(observed[c][j]) / cluster_size[c];
      mask.set(i, j, eta_j > eta ? 0 : -1);
    }
  }
  return mask;
}

MaskMatrix mar_only_mask(const RadioMap& map) {
  return observation_mask(map);  // nulls already read 0
}

MaskMatrix mnar_only_mask(const RadioMap& map) {
  MaskMatrix m = observation_mask(map);
  MaskMatrix out(m.rows(), m.cols(), 1);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (m.at(i, j) == 0) out.set(i, j, -1);
    }
  }
  return out;
}

KmeansResult kmeans_features(const std::vector<std::vector<double>>& features, int k,
                             std::uint64_t seed, int max_iter, int restarts) {
  if (restarts > 1) {
    KmeansResult best;
    bool first = true;
    for (int r = 0; r < restarts; ++r) {
      KmeansResult run = kmeans_features(features, k, mix_seed(seed, "restart", r), max_iter, 1);
      if (first || run.wcss < best.wcss) {
        best = std::move(run);
        first = false;
      }
    }
    return best;
  }
  const std::size_t n = features.size();
  if (k < 1 || static_cast<std::size_t>(k) > n) {
    throw std::invalid_argument("k must be in [1, #samples]");
  }
  const std::size_t dim = features.front().size();
  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  std::vector<std::vector<double>> centers;
  centers.reserve(k);
  {
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    centers.push_back(features[first(rng)]);
    std::vector<double> d2(n);
    while (centers.size() < static_cast<std::size_t>(k)) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : centers) best = std::min(best, sq_dist(features[i], c));
        d2[i] = best;
        total += best;
      }
      std::size_t pick = 0;
      if (total > 0.0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double r = u(rng);
        for (std::size_t i = 0; i < n; ++i) {
          r -= d2[i];
          if (r <= 0.0) {
            pick = i;
            break;
          }
          pick = i;
        }
      } else {
        std::uniform_int_distribution<std::size_t> any(0, n - 1);
        pick = any(rng);
      }
      centers.push_back(features[pick]);
    }
  }

  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(features[i], centers[0]);
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(features[i], centers[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      counts[assign[i]]++;
      for (std::size_t f = 0; f < dim; ++f) sums[assign[i]][f] += features[i][f];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Re-seed an empty cluster at the point farthest from its center.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = sq_dist(features[i], centers[assign[i]]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers[c] = features[far];
        assign[far] = c;
        changed = true;
        continue;
      }
      for (std::size_t f = 0; f < dim; ++f) centers[c][f] = sums[c][f] / counts[c];
    }
    if (!changed) break;
  }

  // Densify ids: empty clusters (possible only at the last iteration) drop out.
  std::vector<int> remap(k, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (remap[assign[i]] == -1) remap[assign[i]] = next++;
  }
  KmeansResult result;
  result.clustering.assignments.resize(n);
  result.clustering.centers.resize(next);
  for (int c = 0; c < k; ++c) {
    if (remap[c] >= 0) result.clustering.centers[remap[c]] = centers[c];
  }
  double wcss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    result.clustering.assignments[i] = remap[assign[i]];
    wcss += sq_dist(features[i], centers[assign[i]]);
  }
  result.wcss = wcss;
  return result;
}

Clustering kmeans(const std::vector<ApProfile>& samples, int k, std::uint64_t seed) {
  return kmeans_features(clustering_features(samples), k, seed, 300, kKmeansRestarts).clustering;
}

Clustering elkm(const std::vector<ApProfile>& samples, int k_max, std::uint64_t seed) {
  if (k_max < 2) throw std::invalid_argument("k_max must be at least 2");
  k_max = std::min<int>(k_max, static_cast<int>(samples.size()));
  const auto features = clustering_features(samples);

  std::vector<KmeansResult> runs;
  runs.reserve(k_max);
  for (int k = 1; k <= k_max; ++k) {
    runs.push_back(kmeans_features(features, k, mix_seed(seed, "elkm", k), 300, kKmeansRestarts));
  }

  // Elbow: the k whose normalized (k, wcss) point lies farthest from the
  // chord between the curve's endpoints.
  const double w0 = runs.front().wcss;
  const double w1 = runs.back().wcss;
  const double span = std::abs(w0 - w1) > 0 ? w0 - w1 : 1.0;
  const double kspan = k_max > 1 ? k_max - 1 : 1;
  int best_k = 1;
  double best_d = -1.0;
  for (int k = 1; k <= k_max; ++k) {
    const double x = (k - 1) / kspan;
    const double y = (runs[k - 1].wcss - w1) / span;
    // Chord runs (0, y_first) -> (1, y_last) in normalized space, i.e. (0,1)->(1,0).
    const double d = std::abs(x + y - 1.0) / std::sqrt(2.0);
    if (d > best_d) {
      best_d = d;
      best_k = k;
    }
  }
  return runs[best_k - 1].clustering;
}

GroundTruthDraw sample_ground_truth(const RadioMap& map, double gamma, std::size_t mnar_count,
                                    std::uint64_t seed) {
  if (gamma <= 0.0) throw std::invalid_argument("gamma must be positive");
  if (mnar_count == 0) throw std::invalid_argument("mnar_count must be positive");
  const std::size_t n = map.records.size();
  const std::size_t d = map.num_aps;
  constexpr std::size_t kGroupSize = 6;
  if (n < kGroupSize) {
    throw SamplingExhaustedError("not enough records for adjacency groups", 0);
  }

  const std::vector<Point2> locations = interpolated_locations(map);
  std::mt19937_64 rng(seed);

  // Unobservable cells: per record, its group of six nearest locations; any
  // dimension the whole group misses qualifies.
  std::vector<std::size_t> record_order(n);
  std::iota(record_order.begin(), record_order.end(), 0);
  std::shuffle(record_order.begin(), record_order.end(), rng);

  std::set<std::pair<std::size_t, std::size_t>> mnar_cells;
  for (std::size_t anchor : record_order) {
    if (mnar_cells.size() >= mnar_count) break;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::nth_element(idx.begin(), idx.begin() + kGroupSize - 1, idx.end(),
                     [&](std::size_t a, std::size_t b) {
                       const double da = a == anchor ? -1.0
                                                     : sq(locations[a].x - locations[anchor].x) +
                                                           sq(locations[a].y - locations[anchor].y);
                       const double db = b == anchor ? -1.0
                                                     : sq(locations[b].x - locations[anchor].x) +
                                                           sq(locations[b].y - locations[anchor].y);
                       return da < db || (da == db && a < b);
                     });
    const std::vector<std::size_t> group(idx.begin(), idx.begin() + kGroupSize);
    for (std::size_t j = 0; j < d && mnar_cells.size() < mnar_count; ++j) {
      bool all_missing = true;
      for (std::size_t r : group) {
        if (map.records[r].fingerprint[j]) {
          all_missing = false;
          break;
        }
      }
      if (!all_missing) continue;
      for (std::size_t r : group) {
        if (mnar_cells.size() >= mnar_count) break;
        mnar_cells.insert({r, j});
      }
    }
  }
  if (mnar_cells.size() < mnar_count) {
    throw SamplingExhaustedError("too few jointly-missing adjacency groups", mnar_cells.size());
  }

  // Recoverable cells: nullify observed readings uniformly at random.
  const std::size_t mar_count =
      static_cast<std::size_t>(std::llround(static_cast<double>(mnar_count) / gamma));
  if (mar_count == 0) throw std::invalid_argument("gamma too large for the requested mnar_count");
  std::vector<std::pair<std::size_t, std::size_t>> observed_cells;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (map.records[i].fingerprint[j]) observed_cells.push_back({i, j});
    }
  }
  if (observed_cells.size() < mar_count) {
    throw SamplingExhaustedError("too few observed cells to nullify", observed_cells.size());
  }
  std::shuffle(observed_cells.begin(), observed_cells.end(), rng);
  observed_cells.resize(mar_count);

  GroundTruthDraw draw;
  draw.reduced = map;
  for (const auto& cell : observed_cells) {
    draw.reduced.records[cell.first].fingerprint[cell.second] = std::nullopt;
    draw.truth.cells.push_back(cell);
    draw.truth.labels.push_back(0);
  }
  for (const auto& cell : mnar_cells) {
    draw.truth.cells.push_back(cell);
    draw.truth.labels.push_back(-1);
  }
  draw.truth.gamma = static_cast<double>(mnar_cells.size()) / mar_count;
  return draw;
}

double differentiation_accuracy(const MaskMatrix& predicted, const GroundTruthSample& truth) {
  std::size_t mar_total = 0, mar_hit = 0, mnar_total = 0, mnar_hit = 0;
  for (std::size_t i = 0; i < truth.cells.size(); ++i) {
    const auto [r, c] = truth.cells[i];
    const std::int8_t pred = predicted.at(r, c);
    if (pred == 1) {
      throw std::invalid_argument("truth cell is not null in the predicted mask");
    }
    if (truth.labels[i] == 0) {
      mar_total++;
      mar_hit += pred == 0;
    } else {
      mnar_total++;
      mnar_hit += pred == -1;
    }
  }
  if (mar_total == 0 || mnar_total == 0) {
    throw std::invalid_argument("differentiation accuracy needs both truth classes");
  }
  const double tpr = static_cast<double>(mar_hit) / mar_total;
  const double tnr = static_cast<double>(mnar_hit) / mnar_total;
  return (tpr + tnr) / 2.0;
}

std::vector<double> default_gammas() {
  std::vector<double> g;
  for (int i = 1; i <= 20; ++i) g.push_back(i);
  return g;
}

Clustering akm(const RadioMap& map, const AkmOptions& options, std::uint64_t seed) {
  if (options.gammas.empty()) throw std::invalid_argument("gamma list must not be empty");
  if (options.k_upper < 1) throw std::invalid_argument("k_upper must be at least 1");
  const std::size_t n = map.records.size();
  const int k_upper = std::min<int>(options.k_upper, static_cast<int>(n));

  std::size_t mnar_count = options.mnar_count;
  if (mnar_count == 0) {
    // Desk-scale default: grow with the map but keep enough recoverable
    // samples for the largest gamma.
    mnar_count = std::max<std::size_t>(
        static_cast<std::size_t>(std::llround(*std::max_element(options.gammas.begin(),
                                                                options.gammas.end()))),
        std::max<std::size_t>(20, n * map.num_aps / 50));
  }

  struct PerGamma {
    GroundTruthSample truth;
    RadioMap reduced;
    std::vector<std::vector<double>> features;
  };
  std::vector<PerGamma> sets;
  for (std::size_t gi = 0; gi < options.gammas.size(); ++gi) {
    GroundTruthDraw draw =
        sample_ground_truth(map, options.gammas[gi], mnar_count, mix_seed(seed, "akm-gs", gi));
    PerGamma pg;
    pg.truth = std::move(draw.truth);
    pg.features = clustering_features(build_samples(draw.reduced));
    pg.reduced = std::move(draw.reduced);
    sets.push_back(std::move(pg));
  }

  double best_da = -1.0;
  int best_k = 1;
  for (int k = 1; k <= k_upper; ++k) {
    double sum = 0.0;
    for (std::size_t gi = 0; gi < sets.size(); ++gi) {
      const KmeansResult run = kmeans_features(sets[gi].features, k,
                                               mix_seed(seed, "akm-run", k, gi), 300,
                                               kKmeansRestarts);
      const MaskMatrix mask = differentiate(sets[gi].reduced, run.clustering, options.eta);
      sum += differentiation_accuracy(mask, sets[gi].truth);
    }
    const double avg = sum / sets.size();
    if (avg > best_da) {
      best_da = avg;
      best_k = k;
    }
  }

  return kmeans(build_samples(map), best_k, mix_seed(seed, "akm-final", best_k));
}

Clustering tac(const std::vector<ApProfile>& samples, const geom::MultiPolygon& topology) {
  const std::size_t n = samples.size();
  struct Cluster {
    std::vector<std::size_t> members;
    double sum_x = 0.0, sum_y = 0.0;
    std::uint32_t uid = 0;
    bool alive = true;
    Point2 center() const {
      return {sum_x / members.size(), sum_y / members.size()};
    }
  };
  std::vector<Cluster> clusters(n);
  std::uint32_t next_uid = 0;
  for (std::size_t i = 0; i < n; ++i) {
    clusters[i].members = {i};
    clusters[i].sum_x = samples[i].location.x;
    clusters[i].sum_y = samples[i].location.y;
    clusters[i].uid = next_uid++;
  }

  // A pair that failed the topology test stays blocked until one side merges
  // (growing a cluster can only keep the hull overlapping).
  std::unordered_set<std::uint64_t> blocked;
  auto pair_key = [](std::uint32_t a, std::uint32_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
  };

  std::vector<Point2> points;
  while (true) {
    struct Candidate {
      double dist;
      std::size_t a, b;
    };
    std::vector<Candidate> cands;
    std::vector<std::size_t> alive;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      if (clusters[i].alive) alive.push_back(i);
    }
    if (alive.size() < 2) break;
    for (std::size_t x = 0; x < alive.size(); ++x) {
      const Point2 cx = clusters[alive[x]].center();
      for (std::size_t y = x + 1; y < alive.size(); ++y) {
        const Point2 cy = clusters[alive[y]].center();
        cands.push_back({std::hypot(cx.x - cy.x, cx.y - cy.y), alive[x], alive[y]});
      }
    }
    std::sort(cands.begin(), cands.end(), [&](const Candidate& p, const Candidate& q) {
      if (p.dist != q.dist) return p.dist < q.dist;
      if (clusters[p.a].uid != clusters[q.a].uid) return clusters[p.a].uid < clusters[q.a].uid;
      return clusters[p.b].uid < clusters[q.b].uid;
    });

    bool merged = false;
    for (const Candidate& c : cands) {
      const std::uint64_t key = pair_key(clusters[c.a].uid, clusters[c.b].uid);
      if (blocked.count(key)) continue;
      points.clear();
      for (std::size_t m : clusters[c.a].members) points.push_back(samples[m].location);
      for (std::size_t m : clusters[c.b].members) points.push_back(samples[m].location);
      if (geom::entity_exist(points, topology)) {
        blocked.insert(key);
        continue;
      }
      Cluster& dst = clusters[c.a];
      Cluster& src = clusters[c.b];
      dst.members.insert(dst.members.end(), src.members.begin(), src.members.end());
      dst.sum_x += src.sum_x;
      dst.sum_y += src.sum_y;
      dst.uid = next_uid++;
      src.alive = false;
      src.members.clear();
      merged = true;
      break;
    }
    if (!merged) break;
  }

  // Dense ids ordered by each cluster's smallest member index.
  std::vector<std::pair<std::size_t, std::size_t>> order;  // (min member, cluster slot)
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    if (!clusters[i].alive) continue;
    order.push_back({*std::min_element(clusters[i].members.begin(), clusters[i].members.end()), i});
  }
  std::sort(order.begin(), order.end());

  Clustering result;
  result.assignments.assign(n, -1);
  for (std::size_t id = 0; id < order.size(); ++id) {
    const Cluster& c = clusters[order[id].second];
    const Point2 center = c.center();
    result.centers.push_back({center.x, center.y});
    for (std::size_t m : c.members) result.assignments[m] = static_cast<int>(id);
  }
  return result;
}

}  // namespace radimpute
