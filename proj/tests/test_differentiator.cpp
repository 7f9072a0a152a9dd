#include <random>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "radimpute/differentiator.hpp"

using namespace radimpute;

namespace {

RadioMapRecord rec(std::vector<std::optional<int>> fp, std::optional<Point2> rp, double t,
                   int path = 0) {
  RadioMapRecord r;
  r.fingerprint = std::move(fp);
  r.rp = rp;
  r.time = t;
  r.path_id = path;
  return r;
}

// A blob of `count` records around (cx, cy) observing exactly the APs in
// `visible` out of `d` dimensions.
void add_blob(RadioMap& map, int count, double cx, double cy, std::set<int> visible, int path,
              double t0) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(cx * 31 + cy));
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  for (int i = 0; i < count; ++i) {
    std::vector<std::optional<int>> fp(map.num_aps);
    for (int j = 0; j < static_cast<int>(map.num_aps); ++j) {
      if (visible.count(j)) fp[j] = -50 - i % 5;
    }
    map.records.push_back(
        rec(std::move(fp), Point2{cx + jitter(rng), cy + jitter(rng)}, t0 + i, path));
  }
}

}  // namespace

TEST_CASE("binarize marks observed dimensions") {
  using ov = std::optional<int>;
  CHECK(binarize({ov{-70}, ov{-83}, ov{-76}, std::nullopt, std::nullopt}) ==
        std::vector<std::uint8_t>{1, 1, 1, 0, 0});
  CHECK(binarize({std::nullopt, std::nullopt}) == std::vector<std::uint8_t>{0, 0});
  CHECK(binarize({ov{0}, ov{-99}}) == std::vector<std::uint8_t>{1, 1});
}

TEST_CASE("interpolation is time-weighted between the bracketing RPs") {
  RadioMap map;
  map.num_aps = 1;
  map.records.push_back(rec({-50}, Point2{0, 0}, 0));
  map.records.push_back(rec({-51}, std::nullopt, 3));
  map.records.push_back(rec({-52}, Point2{10, 0}, 9));
  auto locs = interpolated_locations(map);
  CHECK(locs[1].x == doctest::Approx(10.0 / 3.0));
  CHECK(locs[1].y == doctest::Approx(0.0));
  CHECK(locs[0] == Point2{0, 0});  // observed RPs pass through
}

TEST_CASE("boundary nulls copy the nearest observed RP") {
  RadioMap map;
  map.num_aps = 1;
  map.records.push_back(rec({-50}, std::nullopt, 0));
  map.records.push_back(rec({-51}, Point2{4, 4}, 1));
  map.records.push_back(rec({-52}, std::nullopt, 2));
  auto locs = interpolated_locations(map);
  CHECK(locs[0] == Point2{4, 4});
  CHECK(locs[2] == Point2{4, 4});
}

TEST_CASE("a path without any observed RP is unplaceable") {
  RadioMap map;
  map.num_aps = 1;
  map.records.push_back(rec({-50}, std::nullopt, 0, 7));
  CHECK_THROWS_AS(interpolated_locations(map), UnplaceablePathError);
}

TEST_CASE("differentiate splits nulls by the in-cluster observed fraction") {
  RadioMap map;
  map.num_aps = 2;
  // 10 records; AP 0 observed in 9 of them, AP 1 never observed.
  for (int i = 0; i < 10; ++i) {
    std::vector<std::optional<int>> fp(2);
    if (i != 4) fp[0] = -60;
    map.records.push_back(rec(std::move(fp), Point2{0, 0}, i));
  }
  Clustering single;
  single.assignments.assign(10, 0);
  single.centers = {{0.0}};

  MaskMatrix m = differentiate(map, single, 0.1);
  CHECK(m.at(4, 0) == 0);   // 0.9 > 0.1: recoverable
  for (int i = 0; i < 10; ++i) CHECK(m.at(i, 1) == -1);  // never observed
  CHECK(m.at(0, 0) == 1);

  // eta = 0 turns every null of a partially observed dimension recoverable.
  MaskMatrix zero = differentiate(map, single, 0.0);
  CHECK(zero.at(4, 0) == 0);
  CHECK(zero.at(0, 1) == -1);  // still unobservable: fraction 0 is not > 0
}

TEST_CASE("raising eta never flips an unobservable verdict back") {
  std::mt19937_64 rng(5);
  RadioMap map;
  map.num_aps = 4;
  std::uniform_int_distribution<int> coin(0, 2);
  for (int i = 0; i < 40; ++i) {
    std::vector<std::optional<int>> fp(4);
    for (int j = 0; j < 4; ++j) {
      if (coin(rng) != 0) fp[j] = -70;
    }
    map.records.push_back(rec(std::move(fp), Point2{double(i % 5), double(i / 5)}, i));
  }
  Clustering c;
  c.assignments.resize(40);
  for (int i = 0; i < 40; ++i) c.assignments[i] = i % 3;
  c.centers = {{0}, {1}, {2}};

  const double etas[] = {0.0, 0.1, 0.3, 0.6, 0.9};
  MaskMatrix prev = differentiate(map, c, etas[0]);
  for (std::size_t e = 1; e < 5; ++e) {
    MaskMatrix cur = differentiate(map, c, etas[e]);
    for (std::size_t i = 0; i < cur.rows(); ++i) {
      for (std::size_t j = 0; j < cur.cols(); ++j) {
        if (prev.at(i, j) == -1) CHECK(cur.at(i, j) == -1);
      }
    }
    prev = cur;
  }
}

TEST_CASE("kmeans recovers well-separated blobs") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<std::vector<double>> feats;
  for (int i = 0; i < 20; ++i) feats.push_back({noise(rng), noise(rng)});
  for (int i = 0; i < 20; ++i) feats.push_back({10 + noise(rng), 10 + noise(rng)});
  KmeansResult r = kmeans_features(feats, 2, 99);
  for (int i = 1; i < 20; ++i) CHECK(r.clustering.assignments[i] == r.clustering.assignments[0]);
  for (int i = 21; i < 40; ++i) CHECK(r.clustering.assignments[i] == r.clustering.assignments[20]);
  CHECK(r.clustering.assignments[0] != r.clustering.assignments[20]);
}

TEST_CASE("kmeans edge cases: k equal to sample count, k = 1") {
  std::vector<std::vector<double>> feats = {{0, 0}, {1, 0}, {2, 0}, {5, 5}};
  KmeansResult singletons = kmeans_features(feats, 4, 1);
  std::set<int> ids(singletons.clustering.assignments.begin(),
                    singletons.clustering.assignments.end());
  CHECK(ids.size() == 4);
  CHECK(singletons.wcss == doctest::Approx(0.0));

  KmeansResult one = kmeans_features(feats, 1, 1);
  CHECK(one.clustering.num_clusters() == 1);
  CHECK(one.clustering.centers[0][0] == doctest::Approx(2.0));
  CHECK(one.clustering.centers[0][1] == doctest::Approx(1.25));

  CHECK_THROWS_AS(kmeans_features(feats, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(kmeans_features(feats, 5, 1), std::invalid_argument);
}

TEST_CASE("kmeans is deterministic for a fixed seed") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::vector<double>> feats;
  for (int i = 0; i < 50; ++i) feats.push_back({u(rng), u(rng), u(rng)});
  KmeansResult a = kmeans_features(feats, 5, 12345);
  KmeansResult b = kmeans_features(feats, 5, 12345);
  CHECK(a.clustering.assignments == b.clustering.assignments);
  CHECK(a.wcss == b.wcss);
  KmeansResult c = kmeans_features(feats, 5, 54321);
  (void)c;  // different seed must still be valid, possibly different
}

TEST_CASE("elkm lands on the blob count") {
  std::vector<ApProfile> samples;
  auto blob = [&](double cx, double cy, std::vector<std::uint8_t> sig) {
    std::mt19937_64 rng(size_t(cx) * 7 + 1);
    std::uniform_real_distribution<double> j(-0.5, 0.5);
    for (int i = 0; i < 15; ++i) {
      samples.push_back({sig, Point2{cx + j(rng), cy + j(rng)}});
    }
  };
  blob(0, 0, {1, 0, 0});
  blob(30, 0, {0, 1, 0});
  blob(0, 30, {0, 0, 1});
  Clustering c = elkm(samples, 8, 42);
  CHECK(c.num_clusters() == 3);
}

TEST_CASE("elkm respects the k_max bound") {
  std::vector<ApProfile> samples;
  for (int i = 0; i < 10; ++i) samples.push_back({{1}, Point2{double(i), 0}});
  Clustering c = elkm(samples, 2, 3);
  CHECK(c.num_clusters() >= 1);
  CHECK(c.num_clusters() <= 2);
  CHECK_THROWS_AS(elkm(samples, 1, 3), std::invalid_argument);
}

TEST_CASE("differentiation accuracy is the balanced mean of the two rates") {
  MaskMatrix pred(4, 2, 1);
  pred.set(0, 0, 0);
  pred.set(1, 0, 0);
  pred.set(2, 0, -1);
  pred.set(3, 0, -1);
  GroundTruthSample truth;
  truth.cells = {{0, 0}, {1, 0}, {2, 0}, {3, 0}};

  truth.labels = {0, 0, -1, -1};
  CHECK(differentiation_accuracy(pred, truth) == doctest::Approx(1.0));

  truth.labels = {0, 0, 0, 0};
  CHECK_THROWS_AS(differentiation_accuracy(pred, truth), std::invalid_argument);

  // All recoverable right, all unobservable wrong: balanced accuracy 0.5.
  MaskMatrix all_mar(4, 2, 1);
  for (int i = 0; i < 4; ++i) all_mar.set(i, 0, 0);
  truth.labels = {0, 0, -1, -1};
  CHECK(differentiation_accuracy(all_mar, truth) == doctest::Approx(0.5));
}

TEST_CASE("predict-everything-recoverable scores 0.5 at any class imbalance") {
  // 10 recoverable vs 90 unobservable truth cells, prediction all 0.
  MaskMatrix pred(100, 1, 1);
  GroundTruthSample truth;
  for (int i = 0; i < 100; ++i) {
    pred.set(i, 0, 0);
    truth.cells.push_back({static_cast<std::size_t>(i), 0});
    truth.labels.push_back(i < 10 ? 0 : -1);
  }
  CHECK(differentiation_accuracy(pred, truth) == doctest::Approx(0.5));
}

TEST_CASE("ground truth sampling honours gamma and removes what it labels") {
  RadioMap map;
  map.num_aps = 4;
  add_blob(map, 12, 0, 0, {0, 1}, 0, 0);
  add_blob(map, 12, 50, 0, {2, 3}, 1, 100);

  GroundTruthDraw draw = sample_ground_truth(map, 1.0, 12, 7);
  std::size_t mar = 0, mnar = 0;
  for (std::size_t i = 0; i < draw.truth.cells.size(); ++i) {
    const auto [r, c] = draw.truth.cells[i];
    if (draw.truth.labels[i] == 0) {
      ++mar;
      CHECK(map.records[r].fingerprint[c].has_value());       // was observed
      CHECK(!draw.reduced.records[r].fingerprint[c].has_value());  // now removed
    } else {
      ++mnar;
      CHECK(!map.records[r].fingerprint[c].has_value());
    }
  }
  CHECK(mnar == 12);
  CHECK(mar == 12);
  CHECK(draw.truth.gamma == doctest::Approx(1.0));

  GroundTruthDraw few_mar = sample_ground_truth(map, 6.0, 12, 7);
  std::size_t mar2 = 0;
  for (auto l : few_mar.truth.labels) mar2 += l == 0;
  CHECK(mar2 == 2);
}

TEST_CASE("ground truth sampling reports exhaustion") {
  RadioMap map;
  map.num_aps = 2;
  add_blob(map, 8, 0, 0, {0, 1}, 0, 0);  // nothing jointly missing
  CHECK_THROWS_AS(sample_ground_truth(map, 1.0, 5, 3), SamplingExhaustedError);
}

TEST_CASE("akm with a single candidate k reduces to kmeans") {
  RadioMap map;
  map.num_aps = 4;
  add_blob(map, 12, 0, 0, {0, 1}, 0, 0);
  add_blob(map, 12, 50, 0, {2, 3}, 1, 100);
  AkmOptions opt;
  opt.gammas = {1.0, 2.0};
  opt.k_upper = 1;
  opt.mnar_count = 8;
  Clustering c = akm(map, opt, 3);
  CHECK(c.num_clusters() == 1);
}

TEST_CASE("akm separates distinct visibility regions") {
  RadioMap map;
  map.num_aps = 4;
  add_blob(map, 14, 0, 0, {0}, 0, 0);
  add_blob(map, 14, 60, 0, {1}, 1, 100);
  add_blob(map, 14, 0, 60, {2}, 2, 200);
  add_blob(map, 14, 60, 60, {3}, 3, 300);
  AkmOptions opt;
  opt.gammas = {1.0, 3.0};
  opt.k_upper = 8;
  opt.mnar_count = 12;
  Clustering c = akm(map, opt, 11);
  CHECK(c.num_clusters() >= 4);
}

TEST_CASE("tac never merges across a wall") {
  geom::MultiPolygon wall{{{{5, -1}, {6, -1}, {6, 11}, {5, 11}}}};
  std::vector<ApProfile> samples = {
      {{1, 0}, Point2{1, 5}},
      {{1, 0}, Point2{2, 5}},
      {{0, 1}, Point2{9, 5}},
      {{0, 1}, Point2{10, 5}},
  };
  Clustering c = tac(samples, wall);
  CHECK(c.num_clusters() == 2);
  CHECK(c.assignments[0] == c.assignments[1]);
  CHECK(c.assignments[2] == c.assignments[3]);
  CHECK(c.assignments[0] != c.assignments[2]);
}

TEST_CASE("tac collapses an open room into one cluster") {
  geom::MultiPolygon empty;
  std::vector<ApProfile> samples;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 10);
  for (int i = 0; i < 25; ++i) samples.push_back({{1}, Point2{u(rng), u(rng)}});
  Clustering c = tac(samples, empty);
  CHECK(c.num_clusters() == 1);
}

TEST_CASE("every tac cluster hull avoids the topology") {
  geom::MultiPolygon walls{{{{4, 2}, {6, 2}, {6, 8}, {4, 8}}}};
  std::vector<ApProfile> samples;
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0, 10);
  int made = 0;
  while (made < 40) {
    Point2 p{u(rng), u(rng)};
    if (geom::entity_exist({p}, walls)) continue;  // keep samples out of the wall
    samples.push_back({{1}, p});
    ++made;
  }
  Clustering c = tac(samples, walls);
  std::vector<std::vector<Point2>> members(c.num_clusters());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    members[c.assignments[i]].push_back(samples[i].location);
  }
  for (const auto& pts : members) {
    REQUIRE(!pts.empty());
    CHECK(!geom::entity_exist(pts, walls));
  }
}

TEST_CASE("two points separated by a wall stay singletons") {
  geom::MultiPolygon wall{{{{5, -100}, {5.5, -100}, {5.5, 100}, {5, 100}}}};
  std::vector<ApProfile> samples = {{{1}, Point2{0, 0}}, {{1}, Point2{10, 0}}};
  Clustering c = tac(samples, wall);
  CHECK(c.num_clusters() == 2);
}
