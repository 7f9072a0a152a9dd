#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "radimpute/geometry.hpp"
#include "radimpute/survey.hpp"

namespace radimpute {

struct Clustering {
  std::vector<int> assignments;               // record index -> dense cluster id
  std::vector<std::vector<double>> centers;   // per-cluster mean vectors (feature space)
  int num_clusters() const { return static_cast<int>(centers.size()); }
};

struct UnplaceablePathError : std::runtime_error {
  explicit UnplaceablePathError(int path)
      : std::runtime_error("path " + std::to_string(path) + " has no observed reference point"),
        path_id(path) {}
  int path_id;
};

struct SamplingExhaustedError : std::runtime_error {
  SamplingExhaustedError(const std::string& what, std::size_t got)
      : std::runtime_error(what + " (achieved " + std::to_string(got) + ")"), achieved(got) {}
  std::size_t achieved;
};

// 1 where a reading is present, 0 where the cell is null.
std::vector<std::uint8_t> binarize(const std::vector<std::optional<int>>& fingerprint);

// Per-record location, observed or time-weighted between the neighbouring
// observed RPs of the same path; boundary nulls copy the nearest observed RP.
// Throws UnplaceablePathError for a path with no observed RP at all.
std::vector<Point2> interpolated_locations(const RadioMap& map);

// One profile per record: binarized fingerprint plus its (possibly
// interpolated) location.
std::vector<ApProfile> build_samples(const RadioMap& map);

// Feature vectors for clustering: binary dimensions as-is, coordinates
// divided by the diagonal of the samples' bounding box so neither part
// dominates the Euclidean metric.
std::vector<std::vector<double>> clustering_features(const std::vector<ApProfile>& samples);

// Per cluster and AP dimension, nulls are recoverable (0) iff the observed
// fraction of that dimension within the cluster exceeds eta, else
// unobservable (-1). Observed cells are 1.
MaskMatrix differentiate(const RadioMap& map, const Clustering& clustering, double eta);

// All nulls recoverable / all nulls unobservable.
MaskMatrix mar_only_mask(const RadioMap& map);
MaskMatrix mnar_only_mask(const RadioMap& map);

struct KmeansResult {
  Clustering clustering;
  double wcss = 0.0;
};

// Lloyd iterations from k-means++ seeding until the assignment fixpoint or
// max_iter; deterministic for a fixed seed. restarts > 1 reruns with derived
// seeds and keeps the lowest within-cluster sum of squares.
KmeansResult kmeans_features(const std::vector<std::vector<double>>& features, int k,
                             std::uint64_t seed, int max_iter = 300, int restarts = 1);
Clustering kmeans(const std::vector<ApProfile>& samples, int k, std::uint64_t seed);

inline constexpr int kKmeansRestarts = 10;  // restart budget inside elkm/akm

// K-means with k chosen at the elbow of the within-cluster-sum-of-squares
// curve (largest distance to the chord between the curve's endpoints, both
// axes normalized; smallest k on ties).
Clustering elkm(const std::vector<ApProfile>& samples, int k_max, std::uint64_t seed);

struct GroundTruthSample {
  std::vector<std::pair<std::size_t, std::size_t>> cells;  // (record, ap)
  std::vector<std::int8_t> labels;                         // 0 recoverable, -1 unobservable
  double gamma = 0.0;                                      // #(-1) / #(0)
};

struct GroundTruthDraw {
  GroundTruthSample truth;
  RadioMap reduced;  // the map with the sampled recoverable cells nullified
};

// Synthesizes labelled missing cells: groups of six location-adjacent records
// that all miss a common AP contribute unobservable cells (up to mnar_count);
// mnar_count/gamma observed cells are nullified as recoverable ones.
GroundTruthDraw sample_ground_truth(const RadioMap& map, double gamma, std::size_t mnar_count,
                                    std::uint64_t seed);

// Balanced accuracy (TPR + TNR) / 2 of the predicted mask against sampled
// truth. Throws if either truth class is empty.
double differentiation_accuracy(const MaskMatrix& predicted, const GroundTruthSample& truth);

struct AkmOptions {
  std::vector<double> gammas;  // #unobservable / #recoverable proportions to try
  int k_upper = 200;
  double eta = 0.1;
  std::size_t mnar_count = 0;  // 0: scale with the map size
};

// Picks the cluster count with the best average differentiation accuracy over
// the sampled ground-truth sets, then clusters the full sample set with it.
Clustering akm(const RadioMap& map, const AkmOptions& options, std::uint64_t seed);

// Agglomerative merging from singletons: always merge the closest pair of
// cluster centers whose joint hull avoids the topology; stops when nothing
// can merge. No hyperparameters.
Clustering tac(const std::vector<ApProfile>& samples, const geom::MultiPolygon& topology);

std::vector<double> default_gammas();  // 1, 2, ..., 20

}  // namespace radimpute
