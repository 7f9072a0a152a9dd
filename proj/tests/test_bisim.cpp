#include <cmath>
#include <cstdio>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "radimpute/bisim.hpp"

using namespace radimpute;

namespace {

std::vector<std::size_t> all_indices(const RadioMap& map) {
  std::vector<std::size_t> idx(map.records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

RadioMap dense_line_map(int n, int d, int path = 0, double t0 = 0.0) {
  RadioMap map;
  map.num_aps = d;
  for (int i = 0; i < n; ++i) {
    RadioMapRecord r;
    r.time = t0 + i;
    r.path_id = path;
    r.rp = Point2{double(i), 0.5 * i};
    for (int j = 0; j < d; ++j) r.fingerprint.push_back(-40 - ((i + j) % 30));
    map.records.push_back(std::move(r));
  }
  return map;
}

}  // namespace

TEST_CASE("feature masks and time lags match the worked example") {
  RadioMap map = testing::demo_radio_map();
  MaskMatrix amended = observation_mask(map).amended();
  FeatureSequence seq =
      prepare_features(map, amended, all_indices(map), Scaling::from_map(map));

  REQUIRE(seq.length() == 5);
  CHECK(seq.steps[0].mask == std::vector<double>{1, 1, 1, 0, 0});
  CHECK(seq.steps[1].mask == std::vector<double>{1, 0, 1, 0, 0});
  CHECK(seq.steps[2].mask == std::vector<double>{0, 0, 1, 1, 0});
  CHECK(seq.steps[3].mask == std::vector<double>{1, 1, 0, 0, 1});
  CHECK(seq.steps[4].mask == std::vector<double>{0, 0, 0, 0, 0});

  CHECK(seq.steps[0].rp_mask == std::array<double, 2>{1, 1});
  CHECK(seq.steps[1].rp_mask == std::array<double, 2>{0, 0});
  CHECK(seq.steps[2].rp_mask == std::array<double, 2>{1, 1});
  CHECK(seq.steps[3].rp_mask == std::array<double, 2>{0, 0});
  CHECK(seq.steps[4].rp_mask == std::array<double, 2>{1, 1});

  CHECK(seq.steps[0].time_lag == std::vector<double>{0, 0, 0, 0, 0});
  CHECK(seq.steps[2].time_lag == std::vector<double>{5, 8, 5, 8, 8});
  CHECK(seq.steps[3].time_lag == std::vector<double>{9, 12, 4, 4, 12});
  CHECK(seq.steps[4].time_lag == std::vector<double>{4, 4, 8, 8, 4});
}

TEST_CASE("fully observed unit-gap sequence has all-ones lags after step one") {
  std::vector<double> times = {0, 1, 2, 3};
  std::vector<std::vector<double>> masks(4, std::vector<double>{1, 1});
  auto lags = time_lags(times, masks);
  CHECK(lags[0] == std::vector<double>{0, 0});
  for (int i = 1; i < 4; ++i) CHECK(lags[i] == std::vector<double>{1, 1});
}

TEST_CASE("time lags equal time since the last observation (oracle)") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> gap(0.1, 5.0);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int round = 0; round < 200; ++round) {
    const int n = 2 + static_cast<int>(rng() % 12);
    const int d = 1 + static_cast<int>(rng() % 4);
    std::vector<double> times(n);
    std::vector<std::vector<double>> masks(n, std::vector<double>(d));
    double t = 0;
    for (int i = 0; i < n; ++i) {
      t += gap(rng);
      times[i] = t;
      for (int j = 0; j < d; ++j) masks[i][j] = coin(rng);
    }
    auto lags = time_lags(times, masks);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) {
        double expected;
        if (i == 0) {
          expected = 0.0;
        } else {
          int last = -1;
          for (int p = i - 1; p >= 0; --p) {
            if (masks[p][j] != 0.0) {
              last = p;
              break;
            }
          }
          expected = last >= 0 ? times[i] - times[last] : times[i] - times[0];
        }
        CHECK(lags[i][j] == doctest::Approx(expected).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("windows slice into 5,5,2") {
  RadioMap map = dense_line_map(12, 2);
  MaskMatrix amended = observation_mask(map).amended();
  auto seqs = sequences_by_path(map, amended, Scaling::from_map(map));
  REQUIRE(seqs.size() == 1);
  auto windows = slice_windows(seqs[0], 5);
  REQUIRE(windows.size() == 3);
  CHECK(windows[0].length() == 5);
  CHECK(windows[1].length() == 5);
  CHECK(windows[2].length() == 2);
  CHECK(windows[1].steps[0].time_lag == std::vector<double>{0, 0});  // lags restart
}

TEST_CASE("fill_mnars writes the floor value and amends the mask") {
  RadioMap map = testing::demo_radio_map();
  MaskMatrix mask = observation_mask(map);
  mask.set(1, 1, -1);
  mask.set(4, 0, -1);
  auto [filled, amended] = fill_mnars(map, mask);
  CHECK(filled.records[1].fingerprint[1] == kMnarFill);
  CHECK(filled.records[4].fingerprint[0] == kMnarFill);
  CHECK(!filled.records[1].fingerprint[3].has_value());  // recoverable cells stay null
  CHECK(amended.at(1, 1) == 1);
  CHECK(amended.at(1, 3) == 0);
}

TEST_CASE("attention weights sum to one and stay positive") {
  RadioMap map = dense_line_map(5, 3);
  map.records[2].fingerprint[1] = std::nullopt;  // a hole to make masks non-trivial
  MaskMatrix amended = observation_mask(map).amended();
  const Scaling sc = Scaling::from_map(map);
  FeatureSequence seq = prepare_features(map, amended, all_indices(map), sc);
  BiSimModel model = BiSimModel::init(3, 8, 5, 7, sc);
  WindowDetail detail = inspect_window(seq, model);
  for (const auto& alpha : detail.attention_fwd) {
    REQUIRE(alpha.size() == 5);
    double sum = 0;
    for (double a : alpha) {
      CHECK(a > 0.0);
      sum += a;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("single-step window gives a singleton attention weight") {
  RadioMap map = dense_line_map(1, 2);
  MaskMatrix amended = observation_mask(map).amended();
  const Scaling sc = Scaling::from_map(map);
  FeatureSequence seq = prepare_features(map, amended, all_indices(map), sc);
  BiSimModel model = BiSimModel::init(2, 4, 5, 3, sc);
  WindowDetail detail = inspect_window(seq, model);
  REQUIRE(detail.attention_fwd.size() == 1);
  REQUIRE(detail.attention_fwd[0].size() == 1);
  CHECK(detail.attention_fwd[0][0] == doctest::Approx(1.0));
}

TEST_CASE("observed cells pass through bidirectional inference exactly") {
  RadioMap map = dense_line_map(5, 3);
  MaskMatrix amended = observation_mask(map).amended();
  const Scaling sc = Scaling::from_map(map);
  FeatureSequence seq = prepare_features(map, amended, all_indices(map), sc);
  BiSimModel model = BiSimModel::init(3, 8, 5, 11, sc);
  auto steps = run_bidirectional(seq, model);
  REQUIRE(steps.size() == 5);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(steps[i].fingerprint[j] ==
            doctest::Approx(double(*map.records[i].fingerprint[j])).epsilon(1e-12));
    }
    CHECK(steps[i].rp.x == doctest::Approx(map.records[i].rp->x).epsilon(1e-12));
  }
}

TEST_CASE("mirrored parameters on a palindromic sequence align both directions") {
  RadioMap map;
  map.num_aps = 2;
  const int a[5] = {-50, -60, -70, -60, -50};
  const int b[5] = {-45, -55, -65, -55, -45};
  const double px[5] = {2, 1, 0, 1, 2};
  for (int i = 0; i < 5; ++i) {
    RadioMapRecord r;
    r.time = i;
    r.path_id = 0;
    r.rp = Point2{px[i], 1.0};
    r.fingerprint = {a[i], b[i]};
    map.records.push_back(r);
  }
  MaskMatrix amended = observation_mask(map).amended();
  const Scaling sc = Scaling::from_map(map);
  FeatureSequence seq = prepare_features(map, amended, all_indices(map), sc);

  BiSimModel model = BiSimModel::init(2, 6, 5, 5, sc);
  model.bwd() = model.fwd();  // mirror

  // The reversed input equals the original, so the two directions compute
  // the same trace; the aligned backward sequence is the forward one read
  // backwards.
  WindowDetail detail = inspect_window(seq, model);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(detail.f_comb_bwd[i][j] ==
            doctest::Approx(detail.f_comb_fwd[4 - i][j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("loss ignores values hidden by the masks") {
  RadioMap map = dense_line_map(5, 3);
  map.records[1].fingerprint[2] = std::nullopt;
  map.records[3].rp = std::nullopt;
  MaskMatrix amended = observation_mask(map).amended();
  const Scaling sc = Scaling::from_map(map);
  BiSimModel model = BiSimModel::init(3, 8, 5, 17, sc);

  FeatureSequence a = prepare_features(map, amended, all_indices(map), sc);
  FeatureSequence b = a;
  b.steps[1].fingerprint[2] = 0.77;  // masked cell: arbitrary junk
  b.steps[3].rp = {0.4, 0.9};
  CHECK(loss(a, model) == doctest::Approx(loss(b, model)).epsilon(1e-15));
}

TEST_CASE("gradients of the full window loss match finite differences") {
  RadioMap map = dense_line_map(6, 2);
  map.records[1].fingerprint[0] = std::nullopt;
  map.records[2].rp = std::nullopt;
  map.records[4].fingerprint[1] = std::nullopt;
  MaskMatrix amended = observation_mask(map).amended();
  const Scaling sc = Scaling::from_map(map);
  auto seqs = sequences_by_path(map, amended, sc);
  auto windows = slice_windows(seqs[0], 3);
  REQUIRE(windows.size() == 2);

  BiSimModel model = BiSimModel::init(2, 4, 3, 23, sc);
  auto params = model.named_params();
  const auto analytic = loss_gradients(windows, model);
  REQUIRE(analytic.size() == params.size());

  // loss() rebuilds the graph from scratch, so the finite-difference side
  // shares no tape state with the backward pass above.
  auto mean_loss = [&] {
    return (loss(windows[0], model) + loss(windows[1], model)) / 2.0;
  };
  const double h = 1e-5;
  for (std::size_t p = 0; p < params.size(); ++p) {
    ad::Tensor& t = *params[p].second;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double keep = t.data[i];
      t.data[i] = keep + h;
      const double up = mean_loss();
      t.data[i] = keep - h;
      const double down = mean_loss();
      t.data[i] = keep;
      const double fd = (up - down) / (2 * h);
      const double got = analytic[p].data[i];
      const double err = std::abs(got - fd) / std::max({1.0, std::abs(got), std::abs(fd)});
      if (err > 1e-4) {
        CAPTURE(params[p].first);
        CAPTURE(i);
        CAPTURE(fd);
        CAPTURE(got);
      }
      CHECK(err <= 1e-4);
    }
  }
}

TEST_CASE("training loss decreases on a toy map") {
  RadioMap map = dense_line_map(15, 3);
  map.records[2].fingerprint[1] = std::nullopt;
  map.records[7].fingerprint[0] = std::nullopt;
  map.records[9].rp = std::nullopt;
  MaskMatrix amended = observation_mask(map).amended();

  TrainConfig cfg;
  cfg.hidden = 8;
  cfg.seq_len = 5;
  cfg.epochs = 50;
  cfg.batch = 8;
  cfg.seed = 31;
  TrainResult r = train(map, amended, cfg);
  REQUIRE(r.epoch_loss.size() == 50);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
  int decreases = 0;
  for (std::size_t i = 1; i < r.epoch_loss.size(); ++i) {
    decreases += r.epoch_loss[i] < r.epoch_loss[i - 1];
  }
  CHECK(decreases >= 40);
}

TEST_CASE("zero epochs returns the freshly initialized model") {
  RadioMap map = dense_line_map(6, 2);
  MaskMatrix amended = observation_mask(map).amended();
  TrainConfig cfg;
  cfg.hidden = 4;
  cfg.epochs = 0;
  cfg.seed = 13;
  TrainResult r = train(map, amended, cfg);
  CHECK(r.epoch_loss.empty());
  BiSimModel fresh = BiSimModel::init(2, 4, 5, 13, Scaling::from_map(map));
  CHECK(r.model.fwd().w_fp.data == fresh.fwd().w_fp.data);
}

TEST_CASE("impute fills every null and never touches observed cells") {
  RadioMap map = dense_line_map(11, 3);
  map.records[1].fingerprint[0] = std::nullopt;
  map.records[4].fingerprint[2] = std::nullopt;
  map.records[5].rp = std::nullopt;
  map.records[8].fingerprint[1] = std::nullopt;
  MaskMatrix mask = observation_mask(map);
  mask.set(4, 2, -1);  // one unobservable cell

  BiSimModel model = BiSimModel::init(3, 8, 5, 41, Scaling::from_map(map));
  RadioMap dense = impute_radio_map(map, mask, model);

  CHECK(validate_radio_map(dense).empty());
  for (std::size_t i = 0; i < dense.records.size(); ++i) {
    CHECK(dense.records[i].rp.has_value());
    for (std::size_t j = 0; j < 3; ++j) {
      REQUIRE(dense.records[i].fingerprint[j].has_value());
      if (map.records[i].fingerprint[j]) {
        CHECK(*dense.records[i].fingerprint[j] == *map.records[i].fingerprint[j]);
      }
    }
  }
  CHECK(*dense.records[4].fingerprint[2] == kMnarFill);
  const int v = *dense.records[1].fingerprint[0];
  CHECK(v >= kRssiMin);
  CHECK(v <= kRssiMax);
}

TEST_CASE("an all-unobservable map needs no model inference") {
  RadioMap map = dense_line_map(6, 2);
  map.records[2].fingerprint[0] = std::nullopt;
  map.records[3].fingerprint[1] = std::nullopt;
  MaskMatrix mask = observation_mask(map);
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    for (std::size_t j = 0; j < mask.cols(); ++j) {
      if (mask.at(i, j) == 0) mask.set(i, j, -1);
    }
  }
  BiSimModel model = BiSimModel::init(2, 4, 5, 1, Scaling::from_map(map));
  RadioMap dense = impute_radio_map(map, mask, model);
  CHECK(*dense.records[2].fingerprint[0] == kMnarFill);
  CHECK(*dense.records[3].fingerprint[1] == kMnarFill);
}

TEST_CASE("model save/load round-trips parameters and scaling") {
  RadioMap map = dense_line_map(8, 2);
  map.records[3].fingerprint[1] = std::nullopt;
  MaskMatrix amended = observation_mask(map).amended();
  TrainConfig cfg;
  cfg.hidden = 4;
  cfg.epochs = 3;
  cfg.seed = 9;
  TrainResult r = train(map, amended, cfg);

  const std::string path = "bisim_test_model.bin";
  r.model.save(path);
  BiSimModel back = BiSimModel::load(path);
  CHECK(back.hidden() == 4);
  CHECK(back.num_aps() == 2);
  CHECK(back.fwd().w_fp.data == r.model.fwd().w_fp.data);
  CHECK(back.bwd().enc.u_o.data == r.model.bwd().enc.u_o.data);
  CHECK(back.scaling().bb_max.x == r.model.scaling().bb_max.x);

  MaskMatrix mask = observation_mask(map);
  RadioMap a = impute_radio_map(map, mask, r.model);
  RadioMap b = impute_radio_map(map, mask, back);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].fingerprint == b.records[i].fingerprint);
  }
  std::remove(path.c_str());
}
