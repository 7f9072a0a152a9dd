#include "radimpute/bisim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "radimpute/util.hpp"

namespace radimpute {

using ad::Tape;
using ad::Tensor;
using Id = ad::Tape::Id;

Scaling Scaling::from_map(const RadioMap& map) {
  Scaling s;
  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_x;
  bool any = false;
  for (const RadioMapRecord& r : map.records) {
    if (!r.rp) continue;
    any = true;
    min_x = std::min(min_x, r.rp->x);
    max_x = std::max(max_x, r.rp->x);
    min_y = std::min(min_y, r.rp->y);
    max_y = std::max(max_y, r.rp->y);
  }
  if (!any) {
    return s;  // identity-ish box
  }
  if (max_x <= min_x) max_x = min_x + 1.0;
  if (max_y <= min_y) max_y = min_y + 1.0;
  s.bb_min = {min_x, min_y};
  s.bb_max = {max_x, max_y};
  return s;
}

std::array<double, 2> Scaling::scale_rp(const Point2& p) const {
  return {(p.x - bb_min.x) / (bb_max.x - bb_min.x), (p.y - bb_min.y) / (bb_max.y - bb_min.y)};
}

Point2 Scaling::unscale_rp(const std::array<double, 2>& v) const {
  return {bb_min.x + v[0] * (bb_max.x - bb_min.x), bb_min.y + v[1] * (bb_max.y - bb_min.y)};
}

std::vector<std::vector<double>> time_lags(const std::vector<double>& times,
                                           const std::vector<std::vector<double>>& masks) {
  const std::size_t n = times.size();
  if (masks.size() != n) throw std::invalid_argument("time_lags: times/masks length mismatch");
  std::vector<std::vector<double>> lags(n);
  if (n == 0) return lags;
  const std::size_t d = masks[0].size();
  lags[0].assign(d, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    const double gap = times[i] - times[i - 1];
    lags[i].resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      lags[i][j] = masks[i - 1][j] != 0.0 ? gap : lags[i - 1][j] + gap;
    }
  }
  return lags;
}

FeatureSequence prepare_features(const RadioMap& map, const MaskMatrix& amended,
                                 std::span<const std::size_t> record_indices,
                                 const Scaling& scaling) {
  if (record_indices.empty()) throw std::invalid_argument("prepare_features: empty slice");
  const std::size_t d = map.num_aps;

  FeatureSequence seq;
  std::vector<double> times;
  std::vector<std::vector<double>> masks;
  for (std::size_t idx : record_indices) {
    const RadioMapRecord& rec = map.records[idx];
    FeatureStep step;
    step.record_index = idx;
    step.time = rec.time;
    step.fingerprint.assign(d, 0.0);
    step.mask.assign(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
      if (amended.at(idx, j) != 0) {
        if (!rec.fingerprint[j]) {
          throw std::invalid_argument("prepare_features: mask claims an observation where the map "
                                      "has null; fill unobservable cells first");
        }
        step.mask[j] = 1.0;
        step.fingerprint[j] = scaling.scale_rssi(*rec.fingerprint[j]);
      }
    }
    if (rec.rp) {
      step.rp = scaling.scale_rp(*rec.rp);
      step.rp_mask = {1.0, 1.0};
    }
    times.push_back(rec.time);
    masks.push_back(step.mask);
    seq.steps.push_back(std::move(step));
  }
  const auto lags = time_lags(times, masks);
  for (std::size_t i = 0; i < seq.steps.size(); ++i) seq.steps[i].time_lag = lags[i];
  return seq;
}

std::vector<FeatureSequence> sequences_by_path(const RadioMap& map, const MaskMatrix& amended,
                                               const Scaling& scaling) {
  std::vector<int> order;
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < map.records.size(); ++i) {
    const int p = map.records[i].path_id;
    if (!groups.count(p)) order.push_back(p);
    groups[p].push_back(i);
  }
  std::vector<FeatureSequence> out;
  for (int p : order) out.push_back(prepare_features(map, amended, groups[p], scaling));
  return out;
}

std::vector<FeatureSequence> slice_windows(const FeatureSequence& seq, int window) {
  if (window < 1) throw std::invalid_argument("window length must be positive");
  std::vector<FeatureSequence> out;
  for (std::size_t start = 0; start < seq.steps.size(); start += window) {
    FeatureSequence w;
    const std::size_t end = std::min(seq.steps.size(), start + window);
    w.steps.assign(seq.steps.begin() + start, seq.steps.begin() + end);
    std::vector<double> times;
    std::vector<std::vector<double>> masks;
    for (const FeatureStep& s : w.steps) {
      times.push_back(s.time);
      masks.push_back(s.mask);
    }
    const auto lags = time_lags(times, masks);
    for (std::size_t i = 0; i < w.steps.size(); ++i) w.steps[i].time_lag = lags[i];
    out.push_back(std::move(w));
  }
  return out;
}

std::pair<RadioMap, MaskMatrix> fill_mnars(const RadioMap& map, const MaskMatrix& mask) {
  if (mask.rows() != map.records.size() || mask.cols() != map.num_aps) {
    throw std::invalid_argument("mask shape does not match the map");
  }
  RadioMap filled = map;
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    for (std::size_t j = 0; j < mask.cols(); ++j) {
      if (mask.at(i, j) == -1) filled.records[i].fingerprint[j] = kMnarFill;
    }
  }
  return {std::move(filled), mask.amended()};
}

namespace {

Tensor uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double r = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> u(-r, r);
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = u(rng);
  return t;
}

LstmParams init_lstm(std::size_t input, std::size_t hidden, std::mt19937_64& rng) {
  LstmParams p;
  auto w = [&] { return uniform_init({hidden, input}, input, rng); };
  auto u = [&] { return uniform_init({hidden, hidden}, hidden, rng); };
  auto b = [&] { return Tensor::zeros({hidden}); };
  p.w_i = w(); p.u_i = u(); p.b_i = b();
  p.w_f = w(); p.u_f = u(); p.b_f = b();
  p.w_g = w(); p.u_g = u(); p.b_g = b();
  p.w_o = w(); p.u_o = u(); p.b_o = b();
  return p;
}

DirectionParams init_direction(std::size_t d, std::size_t h, std::mt19937_64& rng) {
  DirectionParams p;
  p.w_fp = uniform_init({d, h}, h, rng);
  p.b_fp = Tensor::zeros({d});
  p.w_gamma = uniform_init({h, d}, d, rng);
  // Random offset keeps the decay pre-activation off the max(0,.) kink for
  // a freshly initialized model.
  p.b_gamma = uniform_init({h}, d, rng);
  p.enc = init_lstm(2 * d, h, rng);
  p.w_rp = uniform_init({2, h}, h, rng);
  p.b_rp = Tensor::zeros({2});
  p.dec = init_lstm(2 + d, h, rng);
  p.w_att = uniform_init({d, h}, h, rng);
  p.b_att = Tensor::zeros({d});
  p.att_w1 = uniform_init({h, h + d}, h + d, rng);
  p.att_b1 = Tensor::zeros({h});
  p.att_w2 = uniform_init({1, h}, h, rng);
  p.att_b2 = Tensor::zeros({1});
  std::normal_distribution<double> n(0.0, 0.1);
  p.h0 = Tensor::zeros({h});
  for (double& v : p.h0.data) v = n(rng);
  return p;
}

void collect_lstm(std::vector<std::pair<std::string, Tensor*>>& out, const std::string& prefix,
                  LstmParams& p) {
  out.push_back({prefix + ".w_i", &p.w_i});
  out.push_back({prefix + ".u_i", &p.u_i});
  out.push_back({prefix + ".b_i", &p.b_i});
  out.push_back({prefix + ".w_f", &p.w_f});
  out.push_back({prefix + ".u_f", &p.u_f});
  out.push_back({prefix + ".b_f", &p.b_f});
  out.push_back({prefix + ".w_g", &p.w_g});
  out.push_back({prefix + ".u_g", &p.u_g});
  out.push_back({prefix + ".b_g", &p.b_g});
  out.push_back({prefix + ".w_o", &p.w_o});
  out.push_back({prefix + ".u_o", &p.u_o});
  out.push_back({prefix + ".b_o", &p.b_o});
}

void collect_direction(std::vector<std::pair<std::string, Tensor*>>& out,
                       const std::string& prefix, DirectionParams& p) {
  out.push_back({prefix + ".w_fp", &p.w_fp});
  out.push_back({prefix + ".b_fp", &p.b_fp});
  out.push_back({prefix + ".w_gamma", &p.w_gamma});
  out.push_back({prefix + ".b_gamma", &p.b_gamma});
  collect_lstm(out, prefix + ".enc", p.enc);
  out.push_back({prefix + ".w_rp", &p.w_rp});
  out.push_back({prefix + ".b_rp", &p.b_rp});
  collect_lstm(out, prefix + ".dec", p.dec);
  out.push_back({prefix + ".w_att", &p.w_att});
  out.push_back({prefix + ".b_att", &p.b_att});
  out.push_back({prefix + ".att_w1", &p.att_w1});
  out.push_back({prefix + ".att_b1", &p.att_b1});
  out.push_back({prefix + ".att_w2", &p.att_w2});
  out.push_back({prefix + ".att_b2", &p.att_b2});
}

}  // namespace

BiSimModel BiSimModel::init(std::size_t num_aps, int hidden, int seq_len, std::uint64_t seed,
                            const Scaling& scaling) {
  if (num_aps == 0) throw std::invalid_argument("model needs at least one AP dimension");
  if (hidden < 1 || seq_len < 1) throw std::invalid_argument("hidden and seq_len must be positive");
  BiSimModel m;
  m.num_aps_ = num_aps;
  m.hidden_ = hidden;
  m.seq_len_ = seq_len;
  m.scaling_ = scaling;
  std::mt19937_64 rng(mix_seed(seed, "bisim-init"));
  m.fwd_ = init_direction(num_aps, hidden, rng);
  m.bwd_ = init_direction(num_aps, hidden, rng);
  return m;
}

std::vector<std::pair<std::string, Tensor*>> BiSimModel::named_params() {
  std::vector<std::pair<std::string, Tensor*>> out;
  collect_direction(out, "fwd", fwd_);
  collect_direction(out, "bwd", bwd_);
  return out;
}

void BiSimModel::save(const std::string& path) const {
  auto& self = const_cast<BiSimModel&>(*this);
  auto params = self.named_params();
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (auto& [name, t] : params) tensors.push_back({name, t});
  tensors.push_back({"fwd.h0", &fwd_.h0});
  tensors.push_back({"bwd.h0", &bwd_.h0});

  nlohmann::ordered_json meta;
  meta["num_aps"] = num_aps_;
  meta["hidden"] = hidden_;
  meta["seq_len"] = seq_len_;
  meta["bb_min"] = {scaling_.bb_min.x, scaling_.bb_min.y};
  meta["bb_max"] = {scaling_.bb_max.x, scaling_.bb_max.y};
  ad::save_tensors(path, tensors, meta.dump());
}

BiSimModel BiSimModel::load(const std::string& path) {
  ad::LoadedTensors lt = ad::load_tensors(path);
  const auto meta = nlohmann::json::parse(lt.meta_json);
  Scaling s;
  s.bb_min = {meta.at("bb_min").at(0).get<double>(), meta.at("bb_min").at(1).get<double>()};
  s.bb_max = {meta.at("bb_max").at(0).get<double>(), meta.at("bb_max").at(1).get<double>()};

  BiSimModel m;
  m.num_aps_ = meta.at("num_aps").get<std::size_t>();
  m.hidden_ = meta.at("hidden").get<int>();
  m.seq_len_ = meta.at("seq_len").get<int>();
  m.scaling_ = s;
  auto fetch = [&](const std::string& name) -> Tensor {
    auto it = lt.tensors.find(name);
    if (it == lt.tensors.end()) throw std::runtime_error("checkpoint misses tensor " + name);
    return it->second;
  };
  for (auto& [name, t] : m.named_params()) *t = fetch(name);
  m.fwd_.h0 = fetch("fwd.h0");
  m.bwd_.h0 = fetch("bwd.h0");
  return m;
}

namespace {

struct LstmIds {
  Id w_i, u_i, b_i, w_f, u_f, b_f, w_g, u_g, b_g, w_o, u_o, b_o;
};

struct DirIds {
  Id w_fp, b_fp, w_gamma, b_gamma, w_rp, b_rp;
  Id w_att, b_att, att_w1, att_b1, att_w2, att_b2;
  Id h0;
  LstmIds enc, dec;
};

LstmIds register_lstm(Tape& t, const LstmParams& p, bool trainable) {
  auto reg = [&](const Tensor& x) { return trainable ? t.param(x) : t.constant(x); };
  LstmIds ids;
  ids.w_i = reg(p.w_i); ids.u_i = reg(p.u_i); ids.b_i = reg(p.b_i);
  ids.w_f = reg(p.w_f); ids.u_f = reg(p.u_f); ids.b_f = reg(p.b_f);
  ids.w_g = reg(p.w_g); ids.u_g = reg(p.u_g); ids.b_g = reg(p.b_g);
  ids.w_o = reg(p.w_o); ids.u_o = reg(p.u_o); ids.b_o = reg(p.b_o);
  return ids;
}

DirIds register_direction(Tape& t, const DirectionParams& p, bool trainable) {
  auto reg = [&](const Tensor& x) { return trainable ? t.param(x) : t.constant(x); };
  DirIds ids;
  ids.w_fp = reg(p.w_fp);
  ids.b_fp = reg(p.b_fp);
  ids.w_gamma = reg(p.w_gamma);
  ids.b_gamma = reg(p.b_gamma);
  ids.enc = register_lstm(t, p.enc, trainable);
  ids.w_rp = reg(p.w_rp);
  ids.b_rp = reg(p.b_rp);
  ids.dec = register_lstm(t, p.dec, trainable);
  ids.w_att = reg(p.w_att);
  ids.b_att = reg(p.b_att);
  ids.att_w1 = reg(p.att_w1);
  ids.att_b1 = reg(p.att_b1);
  ids.att_w2 = reg(p.att_w2);
  ids.att_b2 = reg(p.att_b2);
  ids.h0 = t.constant(p.h0);  // fixed per run
  return ids;
}

// Tape ids mirroring the parameter list order of BiSimModel::named_params().
void collect_ids(std::vector<Id>& out, const LstmIds& p) {
  out.insert(out.end(), {p.w_i, p.u_i, p.b_i, p.w_f, p.u_f, p.b_f, p.w_g, p.u_g, p.b_g, p.w_o,
                         p.u_o, p.b_o});
}
void collect_ids(std::vector<Id>& out, const DirIds& p) {
  out.insert(out.end(), {p.w_fp, p.b_fp, p.w_gamma, p.b_gamma});
  collect_ids(out, p.enc);
  out.insert(out.end(), {p.w_rp, p.b_rp});
  collect_ids(out, p.dec);
  out.insert(out.end(), {p.w_att, p.b_att, p.att_w1, p.att_b1, p.att_w2, p.att_b2});
}

struct StepConsts {
  Id f, m, mf, inv_m;  // fingerprint, mask, m*f, 1-m
  Id l, k, kl, inv_k;  // rp side
  Id delta;
};

std::pair<Id, Id> lstm_step(Tape& t, const LstmIds& p, Id x, Id h, Id c) {
  Id gi = t.sigmoid(t.add(t.add(t.matmul(p.w_i, x), t.matmul(p.u_i, h)), p.b_i));
  Id gf = t.sigmoid(t.add(t.add(t.matmul(p.w_f, x), t.matmul(p.u_f, h)), p.b_f));
  Id gg = t.tanh(t.add(t.add(t.matmul(p.w_g, x), t.matmul(p.u_g, h)), p.b_g));
  Id go = t.sigmoid(t.add(t.add(t.matmul(p.w_o, x), t.matmul(p.u_o, h)), p.b_o));
  Id c2 = t.add(t.mul(gf, c), t.mul(gi, gg));
  Id h2 = t.mul(go, t.tanh(c2));
  return {h2, c2};
}

struct DirectionTrace {
  std::vector<Id> f_pred, f_comb, l_pred, l_comb, alpha;
};

// One direction over the window: encoder chain with temporal decay, then the
// decoder chain fed by sparsity-masked attention. steps/deltas are in this
// direction's order.
DirectionTrace run_direction(Tape& t, const DirIds& p, const std::vector<StepConsts>& consts,
                             int hidden) {
  const std::size_t T = consts.size();
  DirectionTrace tr;
  Id h = p.h0;
  Id c = t.constant(Tensor::zeros({static_cast<std::size_t>(hidden)}));
  std::vector<Id> hs;
  for (std::size_t i = 0; i < T; ++i) {
    Id f_pred = t.add(t.matmul(p.w_fp, h), p.b_fp);
    Id f_comb = t.add(consts[i].mf, t.mul(consts[i].inv_m, f_pred));
    Id gamma = t.exp(t.neg(t.relu(t.add(t.matmul(p.w_gamma, consts[i].delta), p.b_gamma))));
    Id decayed = t.mul(h, gamma);
    Id x = t.concat(f_comb, consts[i].m);
    std::tie(h, c) = lstm_step(t, p.enc, x, decayed, c);
    hs.push_back(h);
    tr.f_pred.push_back(f_pred);
    tr.f_comb.push_back(f_comb);
  }

  // Attention keys: projected hidden states with unobserved parts zeroed.
  std::vector<Id> keys;
  for (std::size_t i = 0; i < T; ++i) {
    keys.push_back(t.mul(t.add(t.matmul(p.w_att, hs[i]), p.b_att), consts[i].m));
  }

  Id s = hs.back();  // decoder starts from the encoder tail
  Id cd = c;
  for (std::size_t j = 0; j < T; ++j) {
    std::vector<Id> scores;
    for (std::size_t i = 0; i < T; ++i) {
      Id z = t.concat(s, keys[i]);
      Id hid = t.tanh(t.add(t.matmul(p.att_w1, z), p.att_b1));
      scores.push_back(t.add(t.matmul(p.att_w2, hid), p.att_b2));
    }
    Id alpha = t.softmax(t.stack(scores));
    Id ctx = t.weighted_sum(alpha, keys);

    Id l_pred = t.add(t.matmul(p.w_rp, s), p.b_rp);
    Id l_comb = t.add(consts[j].kl, t.mul(consts[j].inv_k, l_pred));
    Id x = t.concat(l_comb, ctx);
    std::tie(s, cd) = lstm_step(t, p.dec, x, s, cd);
    tr.l_pred.push_back(l_pred);
    tr.l_comb.push_back(l_comb);
    tr.alpha.push_back(alpha);
  }
  return tr;
}

std::vector<std::vector<double>> reversed_lags(const FeatureSequence& win) {
  const std::size_t T = win.steps.size();
  std::vector<double> times(T);
  std::vector<std::vector<double>> masks(T);
  for (std::size_t i = 0; i < T; ++i) {
    const FeatureStep& s = win.steps[T - 1 - i];
    times[i] = -s.time;  // reversed timeline keeps gaps positive
    masks[i] = s.mask;
  }
  return time_lags(times, masks);
}

struct WindowGraph {
  std::vector<StepConsts> consts;  // forward order
  DirectionTrace fwd, bwd;         // bwd indices run over the reversed order
  Id loss;
};

WindowGraph build_window(Tape& t, const DirIds& pf, const DirIds& pb, const FeatureSequence& win,
                         int hidden) {
  const std::size_t T = win.steps.size();
  if (T == 0) throw std::invalid_argument("empty window");

  WindowGraph g;
  for (const FeatureStep& s : win.steps) {
    StepConsts c;
    const std::size_t d = s.fingerprint.size();
    Tensor f = Tensor::vector(s.fingerprint);
    Tensor m = Tensor::vector(s.mask);
    Tensor mf = Tensor::zeros({d});
    Tensor inv = Tensor::zeros({d});
    for (std::size_t j = 0; j < d; ++j) {
      mf.data[j] = s.mask[j] * s.fingerprint[j];
      inv.data[j] = 1.0 - s.mask[j];
    }
    c.f = t.constant(std::move(f));
    c.m = t.constant(std::move(m));
    c.mf = t.constant(std::move(mf));
    c.inv_m = t.constant(std::move(inv));
    c.l = t.constant(Tensor::vector({s.rp[0], s.rp[1]}));
    c.k = t.constant(Tensor::vector({s.rp_mask[0], s.rp_mask[1]}));
    c.kl = t.constant(Tensor::vector({s.rp_mask[0] * s.rp[0], s.rp_mask[1] * s.rp[1]}));
    c.inv_k = t.constant(Tensor::vector({1.0 - s.rp_mask[0], 1.0 - s.rp_mask[1]}));
    c.delta = t.constant(Tensor::vector(s.time_lag));
    g.consts.push_back(c);
  }

  g.fwd = run_direction(t, pf, g.consts, hidden);

  std::vector<StepConsts> rev(g.consts.rbegin(), g.consts.rend());
  const auto rlags = reversed_lags(win);
  for (std::size_t i = 0; i < T; ++i) rev[i].delta = t.constant(Tensor::vector(rlags[i]));
  g.bwd = run_direction(t, pb, rev, hidden);

  // Reconstruction on the predicted vectors plus cross-direction agreement,
  // every term masked to the observed cells and averaged over the window.
  std::vector<Id> fwd_terms, bwd_terms, cross_terms;
  for (std::size_t i = 0; i < T; ++i) {
    const std::size_t r = T - 1 - i;  // backward slot aligned with step i
    fwd_terms.push_back(t.masked_mse(g.fwd.f_pred[i], g.consts[i].f, g.consts[i].m));
    fwd_terms.push_back(t.masked_mse(g.fwd.l_pred[i], g.consts[i].l, g.consts[i].k));
    bwd_terms.push_back(t.masked_mse(g.bwd.f_pred[r], g.consts[i].f, g.consts[i].m));
    bwd_terms.push_back(t.masked_mse(g.bwd.l_pred[r], g.consts[i].l, g.consts[i].k));
    cross_terms.push_back(t.masked_mse(g.fwd.f_pred[i], g.bwd.f_pred[r], g.consts[i].m));
    cross_terms.push_back(t.masked_mse(g.fwd.l_pred[i], g.bwd.l_pred[r], g.consts[i].k));
  }
  const double inv_t = 1.0 / static_cast<double>(T);
  Id total = t.add(t.add(t.scale(t.sum(fwd_terms), inv_t), t.scale(t.sum(bwd_terms), inv_t)),
                   t.scale(t.sum(cross_terms), inv_t));
  g.loss = total;
  return g;
}

}  // namespace

std::vector<ImputedStep> run_bidirectional(const FeatureSequence& window,
                                           const BiSimModel& model) {
  Tape t;
  DirIds pf = register_direction(t, model.fwd(), false);
  DirIds pb = register_direction(t, model.bwd(), false);
  WindowGraph g = build_window(t, pf, pb, window, model.hidden());

  const std::size_t T = window.steps.size();
  const Scaling& sc = model.scaling();
  std::vector<ImputedStep> out(T);
  for (std::size_t i = 0; i < T; ++i) {
    const std::size_t r = T - 1 - i;
    const Tensor& ff = t.value(g.fwd.f_comb[i]);
    const Tensor& fb = t.value(g.bwd.f_comb[r]);
    const Tensor& lf = t.value(g.fwd.l_comb[i]);
    const Tensor& lb = t.value(g.bwd.l_comb[r]);
    const FeatureStep& step = window.steps[i];

    ImputedStep& o = out[i];
    o.record_index = step.record_index;
    o.fingerprint.resize(step.fingerprint.size());
    for (std::size_t j = 0; j < o.fingerprint.size(); ++j) {
      if (step.mask[j] != 0.0) {
        // Observed cells replicate the input exactly.
        o.fingerprint[j] = sc.unscale_rssi(step.fingerprint[j]);
        continue;
      }
      o.fingerprint[j] = sc.unscale_rssi((ff.data[j] + fb.data[j]) / 2.0);
    }
    if (step.rp_mask[0] != 0.0) {
      o.rp = sc.unscale_rp(step.rp);
    } else {
      o.rp = sc.unscale_rp({(lf.data[0] + lb.data[0]) / 2.0, (lf.data[1] + lb.data[1]) / 2.0});
    }
  }
  return out;
}

double loss(const FeatureSequence& window, const BiSimModel& model) {
  Tape t;
  DirIds pf = register_direction(t, model.fwd(), false);
  DirIds pb = register_direction(t, model.bwd(), false);
  WindowGraph g = build_window(t, pf, pb, window, model.hidden());
  return t.value(g.loss).data[0];
}

WindowDetail inspect_window(const FeatureSequence& window, const BiSimModel& model) {
  Tape t;
  DirIds pf = register_direction(t, model.fwd(), false);
  DirIds pb = register_direction(t, model.bwd(), false);
  WindowGraph g = build_window(t, pf, pb, window, model.hidden());

  const std::size_t T = window.steps.size();
  WindowDetail out;
  out.loss = t.value(g.loss).data[0];
  for (std::size_t i = 0; i < T; ++i) {
    const std::size_t r = T - 1 - i;
    out.attention_fwd.push_back(t.value(g.fwd.alpha[i]).data);
    out.attention_bwd.push_back(t.value(g.bwd.alpha[r]).data);
    out.f_comb_fwd.push_back(t.value(g.fwd.f_comb[i]).data);
    out.f_comb_bwd.push_back(t.value(g.bwd.f_comb[r]).data);
    const auto& lf = t.value(g.fwd.l_comb[i]).data;
    const auto& lb = t.value(g.bwd.l_comb[r]).data;
    out.l_comb_fwd.push_back({lf[0], lf[1]});
    out.l_comb_bwd.push_back({lb[0], lb[1]});
  }
  return out;
}

std::vector<Tensor> loss_gradients(std::span<const FeatureSequence> windows, BiSimModel& model) {
  if (windows.empty()) throw std::invalid_argument("loss_gradients: no windows");
  Tape tape;
  DirIds pf = register_direction(tape, model.fwd(), true);
  DirIds pb = register_direction(tape, model.bwd(), true);
  std::vector<Id> param_ids;
  collect_ids(param_ids, pf);
  collect_ids(param_ids, pb);

  std::vector<Id> losses;
  for (const FeatureSequence& w : windows) {
    losses.push_back(build_window(tape, pf, pb, w, model.hidden()).loss);
  }
  Id total = tape.scale(tape.sum(losses), 1.0 / static_cast<double>(losses.size()));
  tape.backward(total);

  std::vector<Tensor> grads;
  grads.reserve(param_ids.size());
  for (Id id : param_ids) grads.push_back(tape.grad(id));
  return grads;
}

TrainResult train(const RadioMap& filled_map, const MaskMatrix& amended,
                  const TrainConfig& config) {
  if (config.batch < 1 || config.epochs < 0) {
    throw std::invalid_argument("batch must be >= 1 and epochs >= 0");
  }

  const Scaling scaling = Scaling::from_map(filled_map);
  std::vector<FeatureSequence> windows;
  for (const FeatureSequence& seq : sequences_by_path(filled_map, amended, scaling)) {
    for (FeatureSequence& w : slice_windows(seq, config.seq_len)) windows.push_back(std::move(w));
  }
  if (windows.empty()) throw std::invalid_argument("no training sequences");

  TrainResult result{
      BiSimModel::init(filled_map.num_aps, config.hidden, config.seq_len, config.seed, scaling),
      {}};
  BiSimModel& model = result.model;
  auto params = model.named_params();

  ad::AdamConfig adam;
  adam.lr = config.lr;
  std::vector<ad::AdamState> states(params.size());
  std::mt19937_64 shuffle_rng(mix_seed(config.seed, "bisim-shuffle"));
  std::int64_t step_count = 0;
  int plateau_run = 0;

  std::vector<std::size_t> order(windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;

    for (std::size_t at = 0; at < order.size(); at += config.batch) {
      const std::size_t batch_end = std::min(order.size(), at + config.batch);
      Tape tape;
      DirIds pf = register_direction(tape, model.fwd(), true);
      DirIds pb = register_direction(tape, model.bwd(), true);
      std::vector<Id> param_ids;
      collect_ids(param_ids, pf);
      collect_ids(param_ids, pb);

      std::vector<Id> losses;
      for (std::size_t w = at; w < batch_end; ++w) {
        WindowGraph g = build_window(tape, pf, pb, windows[order[w]], config.hidden);
        losses.push_back(g.loss);
        epoch_loss += tape.value(g.loss).data[0];
      }
      Id batch_loss = tape.scale(tape.sum(losses), 1.0 / static_cast<double>(losses.size()));
      tape.backward(batch_loss);

      ++step_count;
      for (std::size_t p = 0; p < params.size(); ++p) {
        adam_step(*params[p].second, tape.grad(param_ids[p]), states[p], adam, step_count);
      }
    }

    epoch_loss /= static_cast<double>(windows.size());
    result.epoch_loss.push_back(epoch_loss);

    if (config.plateau_tol > 0.0 && epoch + 1 >= config.min_epochs &&
        result.epoch_loss.size() >= 2) {
      const double prev = result.epoch_loss[result.epoch_loss.size() - 2];
      const double rel = std::abs(prev - epoch_loss) / std::max(std::abs(prev), 1e-12);
      plateau_run = rel < config.plateau_tol ? plateau_run + 1 : 0;
      if (plateau_run >= config.plateau_patience) break;
    }
  }
  return result;
}

RadioMap impute_radio_map(const RadioMap& map, const MaskMatrix& mask, const BiSimModel& model) {
  if (model.num_aps() != map.num_aps) {
    throw std::invalid_argument("model dimension does not match the map");
  }
  auto [filled, amended] = fill_mnars(map, mask);
  RadioMap dense = filled;

  for (const FeatureSequence& seq : sequences_by_path(filled, amended, model.scaling())) {
    for (const FeatureSequence& window : slice_windows(seq, model.seq_len())) {
      for (const ImputedStep& step : run_bidirectional(window, model)) {
        RadioMapRecord& rec = dense.records[step.record_index];
        for (std::size_t j = 0; j < map.num_aps; ++j) {
          if (mask.at(step.record_index, j) == 0) {
            const int v = static_cast<int>(std::llround(step.fingerprint[j]));
            rec.fingerprint[j] = std::clamp(v, kRssiMin, kRssiMax);
          }
        }
        if (!rec.rp) rec.rp = step.rp;
      }
    }
  }
  return dense;
}

}  // namespace radimpute
