#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "radimpute/bisim.hpp"
#include "radimpute/simulator.hpp"

namespace radimpute {

// Mean Euclidean distance between paired locations.
double ape(const std::vector<Point2>& estimates, const std::vector<Point2>& truths);

// Mean absolute error over the held-out fingerprint cells.
double fingerprint_mae(const RadioMap& imputed,
                       const std::vector<std::tuple<std::size_t, std::size_t, int>>& cells);

// Mean Euclidean distance over the held-out RPs.
double rp_error(const RadioMap& imputed, const std::vector<std::pair<std::size_t, Point2>>& cells);

// Per-dimension observed-mean fill of every null RSSI; RPs are untouched.
RadioMap mean_fill(const RadioMap& map);

// One end-to-end pipeline point: simulate, build, degrade, differentiate,
// impute, locate.
struct PipelinePoint {
  VenueSpec venue;
  double epsilon = 1.0;
  double p_mar = 0.05;
  double eta = 0.1;
  double alpha = 0.0;         // observed RSSI cells nullified before differentiation
  double beta = 0.0;          // observed cells held out after the unobservable fill
  double rp_density = 1.0;    // fraction of RP rows kept in the raw survey
  double test_fraction = 0.1;
  std::string method = "tac";  // tac | akm | elkm | mar-only | mnar-only
  std::vector<std::string> imputers = {"bisim", "cd", "li", "mean-fill"};
  std::string estimator = "wknn";
  int k = 3;
  TrainConfig train;
  AkmOptions akm_options;
  std::uint64_t seed = 0;
};

struct ImputerMetrics {
  double ape = std::numeric_limits<double>::quiet_NaN();
  double mae = std::numeric_limits<double>::quiet_NaN();
  double rp_err = std::numeric_limits<double>::quiet_NaN();
};

struct PipelineOutcome {
  std::map<std::string, ImputerMetrics> imputers;
  double da = std::numeric_limits<double>::quiet_NaN();
  int clusters = 0;
  std::size_t map_records = 0;
  std::size_t held_rssi = 0, held_rp = 0, test_queries = 0;
  std::vector<double> train_loss;
  MaskMatrix mask;        // differentiator verdicts on the degraded map
  RadioMap dense_bisim;   // empty unless "bisim" ran
};

PipelineOutcome run_pipeline(const PipelinePoint& point);

// Grids the reported experiments sweep over.
std::vector<double> default_alpha_grid();       // 0, 5, ..., 20 percent
std::vector<double> default_beta_grid();        // 0, 10, ..., 50 percent
std::vector<double> default_eta_grid();         // 0, 0.1, 0.2, 0.3
std::vector<double> default_rp_density_grid();  // 60, ..., 100 percent

struct ExperimentConfig {
  PipelinePoint base;                   // venue + defaults for the fixed parameters
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<std::string> methods = {"tac"};
  std::string sweep_parameter = "none";  // alpha | beta | eta | rp_density | none
  std::vector<double> sweep_values;      // empty: the default grid of the parameter

  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig parse(const std::string& json_text);
};

// Runs the whole grid and writes sweep_<parameter>.csv plus summary.json
// under out_dir. Rows are emitted in a fixed order; reruns with the same
// seeds are byte-identical.
void run_experiment(const ExperimentConfig& config, const std::string& out_dir);

}  // namespace radimpute
