#include "radimpute/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "radimpute/positioning.hpp"
#include "radimpute/util.hpp"

namespace radimpute {

double ape(const std::vector<Point2>& estimates, const std::vector<Point2>& truths) {
  if (estimates.size() != truths.size()) throw std::invalid_argument("ape: length mismatch");
  if (estimates.empty()) throw std::invalid_argument("ape: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    acc += std::hypot(estimates[i].x - truths[i].x, estimates[i].y - truths[i].y);
  }
  return acc / estimates.size();
}

double fingerprint_mae(const RadioMap& imputed,
                       const std::vector<std::tuple<std::size_t, std::size_t, int>>& cells) {
  if (cells.empty()) throw std::invalid_argument("fingerprint_mae: no held-out cells");
  double acc = 0.0;
  for (const auto& [rec, ap, value] : cells) {
    const auto& v = imputed.records[rec].fingerprint[ap];
    if (!v) throw std::invalid_argument("fingerprint_mae: held-out cell still null");
    acc += std::abs(static_cast<double>(*v) - value);
  }
  return acc / cells.size();
}

double rp_error(const RadioMap& imputed,
                const std::vector<std::pair<std::size_t, Point2>>& cells) {
  if (cells.empty()) throw std::invalid_argument("rp_error: no held-out RPs");
  double acc = 0.0;
  for (const auto& [rec, truth] : cells) {
    const auto& rp = imputed.records[rec].rp;
    if (!rp) throw std::invalid_argument("rp_error: held-out RP still null");
    acc += std::hypot(rp->x - truth.x, rp->y - truth.y);
  }
  return acc / cells.size();
}

RadioMap mean_fill(const RadioMap& map) {
  std::vector<double> sum(map.num_aps, 0.0);
  std::vector<std::size_t> count(map.num_aps, 0);
  for (const RadioMapRecord& r : map.records) {
    for (std::size_t j = 0; j < map.num_aps; ++j) {
      if (r.fingerprint[j]) {
        sum[j] += *r.fingerprint[j];
        count[j]++;
      }
    }
  }
  RadioMap out = map;
  for (RadioMapRecord& r : out.records) {
    for (std::size_t j = 0; j < map.num_aps; ++j) {
      if (!r.fingerprint[j]) {
        r.fingerprint[j] = count[j] ? static_cast<int>(std::llround(sum[j] / count[j]))
                                    : kMnarFill;
      }
    }
  }
  return out;
}

std::vector<double> default_alpha_grid() { return {0.0, 0.05, 0.10, 0.15, 0.20}; }
std::vector<double> default_beta_grid() { return {0.0, 0.10, 0.20, 0.30, 0.40, 0.50}; }
std::vector<double> default_eta_grid() { return {0.0, 0.1, 0.2, 0.3}; }
std::vector<double> default_rp_density_grid() { return {0.6, 0.7, 0.8, 0.9, 1.0}; }

namespace {

// Drops RP rows until only `density` of them remain, never touching the
// first RP of a path (every path must stay placeable). Truth indices are
// remapped to the surviving rows.
SimulationResult thin_rps(SimulationResult sim, double density, std::uint64_t seed) {
  if (density >= 1.0) return sim;
  if (density <= 0.0) throw std::invalid_argument("rp_density must be positive");

  std::vector<std::size_t> rp_rows;
  std::map<int, std::size_t> first_of_path;
  for (std::size_t i = 0; i < sim.table.size(); ++i) {
    if (sim.table[i].kind != RecordKind::kRp) continue;
    if (!first_of_path.count(sim.table[i].path)) {
      first_of_path[sim.table[i].path] = i;
    } else {
      rp_rows.push_back(i);
    }
  }
  const std::size_t total = rp_rows.size() + first_of_path.size();
  const std::size_t keep =
      std::max(first_of_path.size(),
               static_cast<std::size_t>(std::llround(density * static_cast<double>(total))));
  std::size_t to_drop = total - keep;
  std::mt19937_64 rng(mix_seed(seed, "rp-density"));
  std::shuffle(rp_rows.begin(), rp_rows.end(), rng);
  std::vector<bool> drop(sim.table.size(), false);
  for (std::size_t i = 0; i < rp_rows.size() && to_drop > 0; ++i, --to_drop) {
    drop[rp_rows[i]] = true;
  }

  SimulationResult out;
  std::vector<std::size_t> remap(sim.table.size(), SIZE_MAX);
  for (std::size_t i = 0; i < sim.table.size(); ++i) {
    if (drop[i]) continue;
    remap[i] = out.table.size();
    out.table.push_back(std::move(sim.table[i]));
    out.truth.positions.push_back(sim.truth.positions[i]);
  }
  for (SurveyCellTruth cell : sim.truth.cells) {
    if (remap[cell.record] == SIZE_MAX) continue;
    cell.record = remap[cell.record];
    out.truth.cells.push_back(cell);
  }
  return out;
}

struct AlphaRemoval {
  RadioMap map;
  std::vector<std::pair<std::size_t, std::size_t>> cells;
};

AlphaRemoval nullify_alpha(RadioMap map, double alpha, std::uint64_t seed) {
  AlphaRemoval out;
  if (alpha > 0.0) {
    std::vector<std::pair<std::size_t, std::size_t>> observed;
    for (std::size_t i = 0; i < map.records.size(); ++i) {
      for (std::size_t j = 0; j < map.num_aps; ++j) {
        if (map.records[i].fingerprint[j]) observed.push_back({i, j});
      }
    }
    std::mt19937_64 rng(mix_seed(seed, "alpha"));
    std::shuffle(observed.begin(), observed.end(), rng);
    const std::size_t n = static_cast<std::size_t>(std::llround(alpha * observed.size()));
    for (std::size_t c = 0; c < n; ++c) {
      map.records[observed[c].first].fingerprint[observed[c].second] = std::nullopt;
      out.cells.push_back(observed[c]);
    }
  }
  out.map = std::move(map);
  return out;
}

struct DifferentiatorRun {
  MaskMatrix mask;
  int clusters = 0;
};

DifferentiatorRun run_differentiator(const RadioMap& map, const PipelinePoint& pt) {
  if (pt.method == "mar-only") return {mar_only_mask(map), 0};
  if (pt.method == "mnar-only") return {mnar_only_mask(map), 0};
  Clustering c;
  if (pt.method == "tac") {
    c = tac(build_samples(map), pt.venue.walls);
  } else if (pt.method == "elkm") {
    const int k_max = std::max(2, pt.akm_options.k_upper);
    c = elkm(build_samples(map), k_max, mix_seed(pt.seed, "elkm"));
  } else if (pt.method == "akm") {
    AkmOptions opt = pt.akm_options;
    if (opt.gammas.empty()) opt.gammas = default_gammas();
    opt.eta = pt.eta;
    c = akm(map, opt, mix_seed(pt.seed, "akm"));
  } else {
    throw std::invalid_argument("unknown differentiator method: " + pt.method);
  }
  return {differentiate(map, c, pt.eta), c.num_clusters()};
}

}  // namespace

PipelineOutcome run_pipeline(const PipelinePoint& pt) {
  PipelineOutcome out;

  // Synthetic walk, optional RP thinning, record merge.
  SimulationResult sim = generate_survey(pt.venue, mix_seed(pt.seed, "survey"), pt.p_mar);
  sim = thin_rps(std::move(sim), pt.rp_density, pt.seed);
  BuildResult build = build_radio_map(sim.table, pt.epsilon, pt.venue.aps.size());

  // Extra random nulls ahead of differentiation.
  AlphaRemoval degraded = nullify_alpha(std::move(build.map), pt.alpha, pt.seed);
  const RadioMap& map = degraded.map;
  out.map_records = map.records.size();

  // Test queries: records with an observed RP, held back from matching only.
  std::vector<std::size_t> with_rp;
  for (std::size_t i = 0; i < map.records.size(); ++i) {
    if (map.records[i].rp) with_rp.push_back(i);
  }
  if (with_rp.empty()) throw std::runtime_error("no records with observed RPs");
  std::mt19937_64 split_rng(mix_seed(pt.seed, "test-split"));
  std::shuffle(with_rp.begin(), with_rp.end(), split_rng);
  const std::size_t n_test = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(pt.test_fraction * with_rp.size())));
  std::vector<std::size_t> test_idx(with_rp.begin(), with_rp.begin() + n_test);
  std::sort(test_idx.begin(), test_idx.end());
  out.test_queries = test_idx.size();

  // Differentiate and score against the generative labels (alpha-nullified
  // cells are recoverable by construction).
  DifferentiatorRun diff = run_differentiator(map, pt);
  out.mask = std::move(diff.mask);
  out.clusters = diff.clusters;
  {
    BuildResult labelled;
    labelled.map = map;
    labelled.sources = build.sources;
    GroundTruthSample truth = radio_map_truth(labelled, sim.table, sim.truth);
    for (const auto& cell : degraded.cells) {
      truth.cells.push_back(cell);
      truth.labels.push_back(0);
    }
    try {
      out.da = differentiation_accuracy(out.mask, truth);
    } catch (const std::invalid_argument&) {
      // single-class truth: leave NaN
    }
  }

  // Unobservable fill, then the held-out removals that define imputation
  // truth. Test RPs are protected so positioning truth survives.
  auto [filled, amended] = fill_mnars(map, out.mask);
  auto [reduced_rssi, held_rssi] =
      remove_cells(filled, pt.beta, CellKind::kRssi, pt.seed);
  auto [reduced, held_rp] = remove_cells(reduced_rssi, pt.beta, CellKind::kRp, pt.seed, test_idx);
  out.held_rssi = held_rssi.rssi.size();
  out.held_rp = held_rp.rps.size();

  std::vector<Point2> truth_rp;
  for (std::size_t idx : test_idx) truth_rp.push_back(*reduced.records[idx].rp);

  auto locate = [&](const RadioMap& matching, const std::vector<int>& query) {
    return pt.estimator == "knn" ? knn_locate(matching, query, pt.k)
                                 : wknn_locate(matching, query, pt.k);
  };

  // Dense maps stay index-aligned with `reduced`; `kept` marks records that
  // survive into the matching map.
  auto evaluate = [&](const RadioMap& dense, const std::vector<bool>& kept, bool has_rps,
                      bool for_ape) {
    ImputerMetrics m;
    if (!held_rssi.rssi.empty()) m.mae = fingerprint_mae(dense, held_rssi.rssi);
    if (has_rps && !held_rp.rps.empty()) m.rp_err = rp_error(dense, held_rp.rps);
    if (for_ape) {
      RadioMap matching;
      matching.num_aps = dense.num_aps;
      std::vector<bool> is_test(dense.records.size(), false);
      for (std::size_t idx : test_idx) is_test[idx] = true;
      for (std::size_t i = 0; i < dense.records.size(); ++i) {
        if (kept[i] && !is_test[i]) matching.records.push_back(dense.records[i]);
      }
      std::vector<Point2> estimates;
      for (std::size_t idx : test_idx) {
        std::vector<int> query;
        for (const auto& v : dense.records[idx].fingerprint) query.push_back(*v);
        estimates.push_back(locate(matching, query));
      }
      m.ape = ape(estimates, truth_rp);
    }
    return m;
  };

  const std::vector<bool> all_kept(reduced.records.size(), true);
  for (const std::string& imputer : pt.imputers) {
    if (imputer == "bisim") {
      TrainConfig cfg = pt.train;
      cfg.seed = mix_seed(pt.seed, "train");
      MaskMatrix mask2 = observation_mask(reduced);
      TrainResult tr = train(reduced, mask2, cfg);
      out.train_loss = tr.epoch_loss;
      out.dense_bisim = impute_radio_map(reduced, mask2, tr.model);
      out.imputers["bisim"] = evaluate(out.dense_bisim, all_kept, true, true);
    } else if (imputer == "li") {
      out.imputers["li"] = evaluate(baseline_li(reduced), all_kept, true, true);
    } else if (imputer == "cd") {
      RadioMap dense = reduced;
      std::vector<bool> kept(dense.records.size(), false);
      for (std::size_t i = 0; i < dense.records.size(); ++i) {
        kept[i] = dense.records[i].rp.has_value();
        for (auto& v : dense.records[i].fingerprint) {
          if (!v) v = kMnarFill;
        }
      }
      out.imputers["cd"] = evaluate(dense, kept, false, true);
    } else if (imputer == "mean-fill") {
      out.imputers["mean-fill"] = evaluate(mean_fill(reduced), all_kept, false, false);
    } else {
      throw std::invalid_argument("unknown imputer: " + imputer);
    }
  }
  return out;
}

namespace {

std::vector<double> parse_grid(const nlohmann::json& j) {
  std::vector<double> out;
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    const auto dots = s.find("..");
    if (dots == std::string::npos) throw std::invalid_argument("bad grid string: " + s);
    const int lo = std::stoi(s.substr(0, dots));
    const int hi = std::stoi(s.substr(dots + 2));
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  for (const auto& v : j) out.push_back(v.get<double>());
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  ExperimentConfig cfg;
  const auto& venue = j.at("venue");
  cfg.base.venue = venue.is_string() ? VenueSpec::load(venue.get<std::string>())
                                     : VenueSpec::parse(venue.dump());
  if (j.contains("seeds")) {
    cfg.seeds.clear();
    for (const auto& s : j.at("seeds")) cfg.seeds.push_back(s.get<std::uint64_t>());
  }
  if (j.contains("epsilon")) cfg.base.epsilon = j.at("epsilon").get<double>();
  if (j.contains("p_mar")) cfg.base.p_mar = j.at("p_mar").get<double>();
  if (j.contains("eta")) cfg.base.eta = j.at("eta").get<double>();
  if (j.contains("alpha")) cfg.base.alpha = j.at("alpha").get<double>();
  if (j.contains("beta")) cfg.base.beta = j.at("beta").get<double>();
  if (j.contains("rp_density")) cfg.base.rp_density = j.at("rp_density").get<double>();
  if (j.contains("test_fraction")) cfg.base.test_fraction = j.at("test_fraction").get<double>();
  if (j.contains("estimator")) cfg.base.estimator = j.at("estimator").get<std::string>();
  if (j.contains("k")) cfg.base.k = j.at("k").get<int>();
  if (j.contains("imputers")) {
    cfg.base.imputers.clear();
    for (const auto& s : j.at("imputers")) cfg.base.imputers.push_back(s.get<std::string>());
  }
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& s : j.at("methods")) cfg.methods.push_back(s.get<std::string>());
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    if (t.contains("epochs")) cfg.base.train.epochs = t.at("epochs").get<int>();
    if (t.contains("hidden")) cfg.base.train.hidden = t.at("hidden").get<int>();
    if (t.contains("seq_len")) cfg.base.train.seq_len = t.at("seq_len").get<int>();
    if (t.contains("lr")) cfg.base.train.lr = t.at("lr").get<double>();
    if (t.contains("batch")) cfg.base.train.batch = t.at("batch").get<int>();
    if (t.contains("plateau_tol")) cfg.base.train.plateau_tol = t.at("plateau_tol").get<double>();
    if (t.contains("plateau_patience")) {
      cfg.base.train.plateau_patience = t.at("plateau_patience").get<int>();
    }
    if (t.contains("min_epochs")) cfg.base.train.min_epochs = t.at("min_epochs").get<int>();
  }
  if (j.contains("akm")) {
    const auto& a = j.at("akm");
    if (a.contains("k_upper")) cfg.base.akm_options.k_upper = a.at("k_upper").get<int>();
    if (a.contains("gammas")) cfg.base.akm_options.gammas = parse_grid(a.at("gammas"));
    if (a.contains("mnar_count")) {
      cfg.base.akm_options.mnar_count = a.at("mnar_count").get<std::size_t>();
    }
  }
  if (j.contains("sweep")) {
    cfg.sweep_parameter = j.at("sweep").at("parameter").get<std::string>();
    if (j.at("sweep").contains("values")) cfg.sweep_values = parse_grid(j.at("sweep").at("values"));
  }
  if (cfg.sweep_values.empty()) {
    if (cfg.sweep_parameter == "alpha") cfg.sweep_values = default_alpha_grid();
    else if (cfg.sweep_parameter == "beta") cfg.sweep_values = default_beta_grid();
    else if (cfg.sweep_parameter == "eta") cfg.sweep_values = default_eta_grid();
    else if (cfg.sweep_parameter == "rp_density") cfg.sweep_values = default_rp_density_grid();
    else cfg.sweep_values = {0.0};  // "none": a single run at the base point
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open experiment config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

void run_experiment(const ExperimentConfig& config, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string csv_path = out_dir + "/sweep_" + config.sweep_parameter + ".csv";
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  csv << "parameter,value,seed,method,imputer,ape,mae,rp_error,da,records,queries\n";

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (double value : config.sweep_values) {
    for (std::uint64_t seed : config.seeds) {
      for (const std::string& method : config.methods) {
        PipelinePoint pt = config.base;
        pt.seed = seed;
        pt.method = method;
        if (config.sweep_parameter == "alpha") pt.alpha = value;
        else if (config.sweep_parameter == "beta") pt.beta = value;
        else if (config.sweep_parameter == "eta") pt.eta = value;
        else if (config.sweep_parameter == "rp_density") pt.rp_density = value;

        PipelineOutcome res = run_pipeline(pt);
        for (const auto& [imputer, m] : res.imputers) {
          csv << config.sweep_parameter << ',' << fmt(value) << ',' << seed << ',' << method << ','
              << imputer << ',' << fmt(m.ape) << ',' << fmt(m.mae) << ',' << fmt(m.rp_err) << ','
              << fmt(res.da) << ',' << res.map_records << ',' << res.test_queries << '\n';
          nlohmann::ordered_json row;
          row["parameter"] = config.sweep_parameter;
          row["value"] = value;
          row["seed"] = seed;
          row["method"] = method;
          row["imputer"] = imputer;
          if (!std::isnan(m.ape)) row["ape"] = m.ape;
          if (!std::isnan(m.mae)) row["mae"] = m.mae;
          if (!std::isnan(m.rp_err)) row["rp_error"] = m.rp_err;
          if (!std::isnan(res.da)) row["da"] = res.da;
          rows.push_back(std::move(row));
        }
      }
    }
  }

  nlohmann::ordered_json summary;
  summary["sweep"] = config.sweep_parameter;
  summary["values"] = config.sweep_values;
  summary["seeds"] = config.seeds;
  summary["methods"] = config.methods;
  summary["imputers"] = config.base.imputers;
  summary["rows"] = std::move(rows);
  std::ofstream js(out_dir + "/summary.json");
  js << summary.dump(2) << '\n';
}

}  // namespace radimpute
