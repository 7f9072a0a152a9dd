#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "radimpute/autodiff.hpp"
#include "radimpute/survey.hpp"

namespace radimpute {

// Affine maps between raw units and the [0,1] ranges the network sees:
// dBm r -> (r+100)/100, coordinates min-max over the map's observed RPs.
struct Scaling {
  Point2 bb_min{0.0, 0.0};
  Point2 bb_max{1.0, 1.0};

  static Scaling from_map(const RadioMap& map);

  double scale_rssi(double dbm) const { return (dbm + 100.0) / 100.0; }
  double unscale_rssi(double v) const { return v * 100.0 - 100.0; }
  std::array<double, 2> scale_rp(const Point2& p) const;
  Point2 unscale_rp(const std::array<double, 2>& v) const;
};

// One encoder/decoder step: scaled fingerprint with nulls zero-filled, its
// {0,1} mask, the per-dimension seconds since the last observation, and the
// scaled RP with its all-or-nothing mask.
struct FeatureStep {
  std::vector<double> fingerprint;
  std::vector<double> mask;
  std::vector<double> time_lag;
  std::array<double, 2> rp{0.0, 0.0};
  std::array<double, 2> rp_mask{0.0, 0.0};
  double time = 0.0;
  std::size_t record_index = 0;
};

struct FeatureSequence {
  std::vector<FeatureStep> steps;
  std::size_t length() const { return steps.size(); }
};

// Per-dimension elapsed time since the last observed value: 0 at the first
// step, then the previous gap plus the running lag wherever the previous
// mask is 0.
std::vector<std::vector<double>> time_lags(const std::vector<double>& times,
                                           const std::vector<std::vector<double>>& masks);

// Features for a path-ordered slice of records. `amended` rows must be in
// {0,1} (unobservable cells already filled and flagged observed).
FeatureSequence prepare_features(const RadioMap& map, const MaskMatrix& amended,
                                 std::span<const std::size_t> record_indices,
                                 const Scaling& scaling);

// One sequence per path, in first-appearance order.
std::vector<FeatureSequence> sequences_by_path(const RadioMap& map, const MaskMatrix& amended,
                                               const Scaling& scaling);

// Consecutive windows of at most `window` steps; lags restart per window.
std::vector<FeatureSequence> slice_windows(const FeatureSequence& seq, int window);

// Replaces unobservable cells with the -100 dBm floor and flips their mask
// to observed; the pair feeds the imputer.
std::pair<RadioMap, MaskMatrix> fill_mnars(const RadioMap& map, const MaskMatrix& mask);

struct LstmParams {
  ad::Tensor w_i, u_i, b_i;
  ad::Tensor w_f, u_f, b_f;
  ad::Tensor w_g, u_g, b_g;
  ad::Tensor w_o, u_o, b_o;
};

struct DirectionParams {
  ad::Tensor w_fp, b_fp;        // hidden -> D fingerprint estimate
  ad::Tensor w_gamma, b_gamma;  // D -> hidden temporal decay
  LstmParams enc;               // input 2D
  ad::Tensor w_rp, b_rp;        // hidden -> 2 RP estimate
  LstmParams dec;               // input 2 + D
  ad::Tensor w_att, b_att;      // hidden -> D attention projection
  ad::Tensor att_w1, att_b1;    // (hidden + D) -> hidden alignment MLP
  ad::Tensor att_w2, att_b2;    // hidden -> 1
  ad::Tensor h0;                // fixed initial hidden state
};

class BiSimModel {
 public:
  static BiSimModel init(std::size_t num_aps, int hidden, int seq_len, std::uint64_t seed,
                         const Scaling& scaling);

  std::size_t num_aps() const { return num_aps_; }
  int hidden() const { return hidden_; }
  int seq_len() const { return seq_len_; }
  const Scaling& scaling() const { return scaling_; }

  DirectionParams& fwd() { return fwd_; }
  DirectionParams& bwd() { return bwd_; }
  const DirectionParams& fwd() const { return fwd_; }
  const DirectionParams& bwd() const { return bwd_; }

  // Trainable tensors in a fixed order; the initial hidden states stay out.
  std::vector<std::pair<std::string, ad::Tensor*>> named_params();

  void save(const std::string& path) const;
  static BiSimModel load(const std::string& path);

 private:
  std::size_t num_aps_ = 0;
  int hidden_ = 64;
  int seq_len_ = 5;
  Scaling scaling_;
  DirectionParams fwd_, bwd_;
};

struct ImputedStep {
  std::vector<double> fingerprint;  // dBm, unrounded
  Point2 rp;                        // meters
  std::size_t record_index = 0;
};

// Forward and time-reversed passes over one window, averaged after
// re-alignment and mapped back to dBm/meters. Observed cells reproduce the
// inputs exactly.
std::vector<ImputedStep> run_bidirectional(const FeatureSequence& window, const BiSimModel& model);

// Reconstruction + cross-direction consistency objective of one window.
double loss(const FeatureSequence& window, const BiSimModel& model);

// Intermediate quantities of one window pass, in scaled units. Backward
// vectors are re-aligned to forward step order.
struct WindowDetail {
  std::vector<std::vector<double>> attention_fwd;  // per decoder step, length T each
  std::vector<std::vector<double>> attention_bwd;
  std::vector<std::vector<double>> f_comb_fwd, f_comb_bwd;
  std::vector<std::array<double, 2>> l_comb_fwd, l_comb_bwd;
  double loss = 0.0;
};
WindowDetail inspect_window(const FeatureSequence& window, const BiSimModel& model);

// Analytic gradients of the mean loss over the given windows, in
// named_params() order. The verification target for finite differencing.
std::vector<ad::Tensor> loss_gradients(std::span<const FeatureSequence> windows,
                                       BiSimModel& model);

struct TrainConfig {
  int hidden = 64;
  int seq_len = 5;
  double lr = 0.001;
  int batch = 32;
  int epochs = 500;
  std::uint64_t seed = 0;
  double plateau_tol = 0.0;  // relative epoch-loss change; 0 disables early stop
  int plateau_patience = 3;
  int min_epochs = 1;
};

struct TrainResult {
  BiSimModel model;
  std::vector<double> epoch_loss;
};

// Trains on every path of an already-filled map (mask rows in {0,1}).
TrainResult train(const RadioMap& filled_map, const MaskMatrix& amended,
                  const TrainConfig& config);

// Full imputation: fill unobservable cells with -100, run the model over all
// windows, write model outputs into the remaining nulls. The result has no
// nulls; model-imputed RSSIs are rounded into [-99, 0].
RadioMap impute_radio_map(const RadioMap& map, const MaskMatrix& mask, const BiSimModel& model);

}  // namespace radimpute
