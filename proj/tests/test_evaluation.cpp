#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "radimpute/evaluation.hpp"
#include "radimpute/io.hpp"

using namespace radimpute;

namespace {

VenueSpec tiny_venue() {
  VenueSpec v;
  v.bb_min = {0, 0};
  v.bb_max = {24, 16};
  v.walls.polygons = {{{11.7, -0.5}, {12.3, -0.5}, {12.3, 10.0}, {11.7, 10.0}}};
  v.aps = {{{6, 8}, -30, 2.2, -82}, {{18, 8}, -30, 2.2, -82}};
  v.paths = {{{2, 2}, {10, 2}, {10, 14}, {2, 14}}, {{14, 2}, {22, 2}, {22, 14}, {14, 14}}};
  v.rp_spacing = 4.0;
  v.noise_sigma = 1.5;
  return v;
}

PipelinePoint tiny_point(std::uint64_t seed) {
  PipelinePoint pt;
  pt.venue = tiny_venue();
  pt.seed = seed;
  pt.method = "tac";
  pt.imputers = {"bisim", "cd", "li", "mean-fill"};
  pt.train.hidden = 8;
  pt.train.epochs = 4;
  pt.train.batch = 16;
  pt.akm_options.k_upper = 6;
  pt.akm_options.gammas = {1, 2};
  pt.akm_options.mnar_count = 12;
  return pt;
}

}  // namespace

TEST_CASE("ape basics") {
  CHECK(ape({{1, 2}, {3, 4}}, {{1, 2}, {3, 4}}) == 0.0);
  CHECK(ape({{0, 0}}, {{3, 4}}) == doctest::Approx(5.0));
  // Three pairs with distances 5, 0, 13.
  CHECK(ape({{0, 0}, {1, 1}, {0, 0}}, {{3, 4}, {1, 1}, {5, 12}}) ==
        doctest::Approx((5.0 + 0.0 + 13.0) / 3.0));
  CHECK_THROWS_AS(ape({{0, 0}}, {{0, 0}, {1, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(ape({}, {}), std::invalid_argument);
}

TEST_CASE("fingerprint mae over held-out cells") {
  RadioMap map;
  map.num_aps = 2;
  RadioMapRecord r;
  r.fingerprint = {-60, -70};
  r.rp = Point2{0, 0};
  r.time = 0;
  map.records.push_back(r);
  r.fingerprint = {-50, -80};
  r.time = 1;
  map.records.push_back(r);

  CHECK(fingerprint_mae(map, {{0, 0, -60}, {1, 1, -80}}) == 0.0);
  CHECK(fingerprint_mae(map, {{0, 0, -63}, {1, 1, -83}}) == doctest::Approx(3.0));
  CHECK(fingerprint_mae(map, {{0, 1, -75}, {1, 0, -54}}) == doctest::Approx((5.0 + 4.0) / 2));
  CHECK_THROWS_AS(fingerprint_mae(map, {}), std::invalid_argument);
}

TEST_CASE("rp error over held-out RPs") {
  RadioMap map;
  map.num_aps = 1;
  RadioMapRecord r;
  r.fingerprint = {-60};
  r.rp = Point2{3, 4};
  r.time = 0;
  map.records.push_back(r);
  CHECK(rp_error(map, {{0, {3, 4}}}) == 0.0);
  CHECK(rp_error(map, {{0, {0, 0}}}) == doctest::Approx(5.0));
  CHECK_THROWS_AS(rp_error(map, {}), std::invalid_argument);
}

TEST_CASE("mean fill writes the per-dimension observed mean") {
  RadioMap map;
  map.num_aps = 2;
  for (int i = 0; i < 3; ++i) {
    RadioMapRecord r;
    r.fingerprint = {-60 - i, std::nullopt};
    r.rp = Point2{double(i), 0};
    r.time = i;
    map.records.push_back(r);
  }
  map.records[1].fingerprint[0] = std::nullopt;  // dim 0 mean over {-60, -62} = -61
  RadioMap filled = mean_fill(map);
  CHECK(*filled.records[1].fingerprint[0] == -61);
  CHECK(*filled.records[0].fingerprint[1] == kMnarFill);  // never observed
}

TEST_CASE("default sweep grids match the protocol lists") {
  CHECK(default_alpha_grid() == std::vector<double>{0.0, 0.05, 0.10, 0.15, 0.20});
  CHECK(default_beta_grid() == std::vector<double>{0.0, 0.10, 0.20, 0.30, 0.40, 0.50});
  CHECK(default_eta_grid() == std::vector<double>{0.0, 0.1, 0.2, 0.3});
  CHECK(default_rp_density_grid() == std::vector<double>{0.6, 0.7, 0.8, 0.9, 1.0});
}

TEST_CASE("pipeline smoke: all imputers report their metrics") {
  PipelinePoint pt = tiny_point(21);
  pt.beta = 0.2;
  PipelineOutcome res = run_pipeline(pt);

  REQUIRE(res.imputers.count("bisim"));
  REQUIRE(res.imputers.count("cd"));
  REQUIRE(res.imputers.count("li"));
  REQUIRE(res.imputers.count("mean-fill"));
  CHECK(std::isfinite(res.imputers["bisim"].ape));
  CHECK(std::isfinite(res.imputers["cd"].ape));
  CHECK(std::isfinite(res.imputers["li"].ape));
  CHECK(std::isfinite(res.imputers["bisim"].mae));
  CHECK(std::isfinite(res.imputers["mean-fill"].mae));
  CHECK(std::isfinite(res.imputers["bisim"].rp_err));
  CHECK(std::isfinite(res.imputers["li"].rp_err));
  CHECK(std::isnan(res.imputers["cd"].rp_err));   // does not impute RPs
  CHECK(std::isnan(res.imputers["mean-fill"].ape));
  CHECK(res.held_rssi > 0);
  CHECK(res.held_rp > 0);
  CHECK(res.test_queries > 0);
  CHECK(validate_radio_map(res.dense_bisim).empty());

  // Dense output has no nulls at all.
  for (const auto& r : res.dense_bisim.records) {
    CHECK(r.rp.has_value());
    for (const auto& v : r.fingerprint) CHECK(v.has_value());
  }
}

TEST_CASE("pipeline reruns are byte-identical") {
  PipelinePoint pt = tiny_point(8);
  pt.imputers = {"bisim"};
  PipelineOutcome a = run_pipeline(pt);
  PipelineOutcome b = run_pipeline(pt);
  std::stringstream sa, sb;
  write_radio_map_jsonl(sa, a.dense_bisim);
  write_radio_map_jsonl(sb, b.dense_bisim);
  CHECK(sa.str() == sb.str());
  CHECK(a.imputers["bisim"].ape == b.imputers["bisim"].ape);
}

TEST_CASE("rp density thinning degrades gracefully") {
  PipelinePoint pt = tiny_point(5);
  pt.imputers = {"li"};
  pt.rp_density = 0.6;
  PipelineOutcome res = run_pipeline(pt);
  CHECK(std::isfinite(res.imputers["li"].ape));
}

TEST_CASE("experiment config parses sweeps and grids") {
  VenueSpec v = tiny_venue();
  std::string venue_json = v.to_json();
  std::string cfg_json = R"({
    "venue": )" + venue_json + R"(,
    "seeds": [4, 5],
    "eta": 0.2,
    "methods": ["mar-only", "tac"],
    "imputers": ["cd", "li"],
    "sweep": {"parameter": "eta"},
    "akm": {"gammas": "1..5", "k_upper": 10}
  })";
  ExperimentConfig cfg = ExperimentConfig::parse(cfg_json);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(cfg.methods == std::vector<std::string>{"mar-only", "tac"});
  CHECK(cfg.sweep_parameter == "eta");
  CHECK(cfg.sweep_values == default_eta_grid());
  CHECK(cfg.base.akm_options.gammas == std::vector<double>{1, 2, 3, 4, 5});
  CHECK(cfg.base.eta == 0.2);
}

TEST_CASE("run_experiment writes plot-ready csv and a summary") {
  namespace fs = std::filesystem;
  ExperimentConfig cfg;
  cfg.base = tiny_point(1);
  cfg.base.imputers = {"cd", "li"};
  cfg.seeds = {1};
  cfg.methods = {"mar-only"};
  cfg.sweep_parameter = "none";
  cfg.sweep_values = {0.0};

  const std::string dir = "eval_report_test";
  fs::remove_all(dir);
  run_experiment(cfg, dir);

  std::ifstream csv(dir + "/sweep_none.csv");
  REQUIRE(csv.good());
  std::string header, row;
  std::getline(csv, header);
  CHECK(header ==
        "parameter,value,seed,method,imputer,ape,mae,rp_error,da,records,queries");
  int rows = 0;
  while (std::getline(csv, row)) rows += !row.empty();
  CHECK(rows == 2);  // two imputers

  std::ifstream js(dir + "/summary.json");
  REQUIRE(js.good());
  std::stringstream ss;
  ss << js.rdbuf();
  CHECK(ss.str().find("\"rows\"") != std::string::npos);
  fs::remove_all(dir);
}
