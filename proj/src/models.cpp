#include "rbtk/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "rbtk/tensor_io.hpp"

namespace rbtk::models {

using ordered_json = nlohmann::ordered_json;

// ---- baseline ----

std::vector<int> beam_hold_predict(int initial_beam, int k, int n_beams) {
  if (k != 1 && k != 3 && k != 5) throw ConfigError("beam hold k must be 1, 3 or 5");
  if (n_beams < k) throw ConfigError("beam hold k exceeds the codebook size");
  if (initial_beam < 1 || initial_beam > n_beams)
    throw ConfigError("beam hold initial beam out of range");
  const int b = initial_beam;
  std::vector<int> out;
  for (int c : {b, b - 1, b + 1, b - 2, b + 2}) {
    if (static_cast<int>(out.size()) == k) break;
    if (c >= 1 && c <= n_beams) out.push_back(c);
  }
  // edge back-fill: nearest unused in-range indices, lower index first on ties
  for (int dist = 1; static_cast<int>(out.size()) < k; ++dist) {
    for (int c : {b - dist, b + dist}) {
      if (static_cast<int>(out.size()) == k) break;
      if (c >= 1 && c <= n_beams && std::find(out.begin(), out.end(), c) == out.end())
        out.push_back(c);
    }
  }
  return out;
}

std::vector<int> predict_topk(std::span<const double> logits, int k) {
  const int n = static_cast<int>(logits.size());
  if (k > n) throw ConfigError("top-k k exceeds the number of logits");
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (logits[static_cast<size_t>(a)] != logits[static_cast<size_t>(b)])
      return logits[static_cast<size_t>(a)] > logits[static_cast<size_t>(b)];
    return a < b;
  });
  std::vector<int> out(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) out[static_cast<size_t>(i)] = idx[static_cast<size_t>(i)] + 1;
  return out;
}

// ---- TxId model ----

void TxIdModel::init(const TxIdModelConfig& c, uint64_t seed) {
  cfg = c;
  Rng rng(seed);
  lstm.init(c.input_dim, c.lstm_hidden, rng);
  fc1_W = nn::Tensor::zeros({c.fc_hidden, c.lstm_hidden});
  fc1_b = nn::Tensor::zeros({c.fc_hidden});
  fc2_W = nn::Tensor::zeros({c.n_beams, c.fc_hidden});
  fc2_b = nn::Tensor::zeros({c.n_beams});
  nn::init_uniform(fc1_W, c.lstm_hidden, rng);
  nn::init_uniform(fc2_W, c.fc_hidden, rng);
}

std::vector<nn::Tensor*> TxIdModel::params() {
  return {&lstm.Wx, &lstm.Wh, &lstm.b, &fc1_W, &fc1_b, &fc2_W, &fc2_b};
}

std::vector<const nn::Tensor*> TxIdModel::params() const {
  return {&lstm.Wx, &lstm.Wh, &lstm.b, &fc1_W, &fc1_b, &fc2_W, &fc2_b};
}

std::vector<nn::Tensor> TxIdModel::make_grads() const {
  std::vector<nn::Tensor> g;
  for (const nn::Tensor* p : params()) g.push_back(nn::Tensor::zeros(p->shape));
  return g;
}

namespace {

struct TxIdActivations {
  nn::LstmCache lstm;
  std::vector<double> u1_pre, u1, logits;
};

void txid_forward_impl(const TxIdModel& m, const nn::Tensor& states,
                       TxIdActivations& act) {
  if (states.shape.size() != 2 || states.shape[1] != m.cfg.input_dim)
    throw ConfigError("TxId input must be [T x input_dim]");
  const int T = states.shape[0];
  if (T < 1) throw ConfigError("TxId input sequence is empty");
  nn::lstm_forward_seq(m.lstm, states.data(), T, act.lstm);
  const double* h_last = &act.lstm.h[static_cast<size_t>(T - 1) * m.cfg.lstm_hidden];
  act.u1_pre.resize(static_cast<size_t>(m.cfg.fc_hidden));
  act.u1.resize(static_cast<size_t>(m.cfg.fc_hidden));
  nn::dense_forward(m.fc1_W, m.fc1_b, h_last, act.u1_pre.data());
  nn::relu_forward(act.u1_pre.data(), act.u1.data(), act.u1.size());
  act.logits.resize(static_cast<size_t>(m.cfg.n_beams));
  nn::dense_forward(m.fc2_W, m.fc2_b, act.u1.data(), act.logits.data());
}

}  // namespace

std::vector<double> TxIdModel::forward(const nn::Tensor& states) const {
  TxIdActivations act;
  txid_forward_impl(*this, states, act);
  return act.logits;
}

double TxIdModel::loss_and_grad(const nn::Tensor& states, int label,
                                std::vector<nn::Tensor>& grads) const {
  if (grads.size() != 7) throw ConfigError("TxId gradient slot count mismatch");
  TxIdActivations act;
  txid_forward_impl(*this, states, act);
  const int T = states.shape[0];

  std::vector<double> dlogits(act.logits.size());
  const double loss = nn::softmax_xent(act.logits, label - 1, dlogits.data());

  std::vector<double> du1(act.u1.size());
  nn::dense_backward(fc2_W, act.u1.data(), dlogits.data(), du1.data(), grads[5], grads[6]);
  nn::relu_backward(act.u1_pre.data(), du1.data(), du1.data(), du1.size());
  std::vector<double> dh(static_cast<size_t>(cfg.lstm_hidden));
  const double* h_last = &act.lstm.h[static_cast<size_t>(T - 1) * cfg.lstm_hidden];
  nn::dense_backward(fc1_W, h_last, du1.data(), dh.data(), grads[3], grads[4]);

  nn::LstmGrads lg{std::move(grads[0]), std::move(grads[1]), std::move(grads[2])};
  nn::lstm_backward_seq(lstm, act.lstm, dh.data(), nullptr, lg);
  grads[0] = std::move(lg.dWx);
  grads[1] = std::move(lg.dWh);
  grads[2] = std::move(lg.db);
  return loss;
}

nn::Tensor normalize_tx_states(std::span<const dsp::ObjectState> states,
                               const radar::DerivedParams& d) {
  nn::Tensor t = nn::Tensor::zeros({static_cast<int>(states.size()), 3});
  for (size_t i = 0; i < states.size(); ++i) {
    t.v[i * 3 + 0] = states[i].range_m / d.max_range_m;
    t.v[i * 3 + 1] = states[i].velocity_mps / d.max_vel_mps;
    t.v[i * 3 + 2] = states[i].angle_rad / (kPi / 2.0);
  }
  return t;
}

// ---- E2E model ----

nn::Tensor preprocess_map(std::span<const float> raw, int h, int w) {
  std::vector<double> tmp(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) tmp[i] = raw[i];
  return preprocess_map(std::span<const double>(tmp), h, w);
}

nn::Tensor preprocess_map(std::span<const double> raw, int h, int w) {
  if (raw.size() != static_cast<size_t>(h) * static_cast<size_t>(w))
    throw ConfigError("map size does not match the configured dims");
  nn::Tensor t = nn::Tensor::zeros({1, h, w});
  double mean = 0.0;
  for (size_t i = 0; i < raw.size(); ++i) {
    t.v[i] = std::log10(1.0 + raw[i]);
    mean += t.v[i];
  }
  mean /= static_cast<double>(raw.size());
  double var = 0.0;
  for (double x : t.v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(raw.size());
  const double inv_std = 1.0 / std::sqrt(var + 1e-12);
  for (double& x : t.v) x = (x - mean) * inv_std;
  return t;
}

namespace {

struct StageDims {
  nn::Conv2dShape conv;
  int ph = 0, pw = 0;  // pooled output dims
};

std::array<StageDims, 5> stage_dims(const E2EModelConfig& cfg) {
  std::array<StageDims, 5> s;
  int h = cfg.map_h, w = cfg.map_w, c_in = 1;
  for (int i = 0; i < 5; ++i) {
    s[static_cast<size_t>(i)].conv = {c_in, cfg.conv_channels[static_cast<size_t>(i)],
                                      cfg.kernel, cfg.kernel, h, w};
    s[static_cast<size_t>(i)].ph = nn::pooled_extent(h);
    s[static_cast<size_t>(i)].pw = nn::pooled_extent(w);
    h = s[static_cast<size_t>(i)].ph;
    w = s[static_cast<size_t>(i)].pw;
    c_in = cfg.conv_channels[static_cast<size_t>(i)];
  }
  return s;
}

}  // namespace

int E2EModel::feature_dim() const {
  const auto dims = stage_dims(cfg);
  return cfg.conv_channels[4] * dims[4].ph * dims[4].pw;
}

void E2EModel::init(const E2EModelConfig& c, uint64_t seed) {
  cfg = c;
  if (c.map_h < 4 || c.map_w < 2) throw ConfigError("E2E map dims too small");
  Rng rng(seed);
  int c_in = 1;
  for (int i = 0; i < 5; ++i) {
    const int c_out = c.conv_channels[static_cast<size_t>(i)];
    conv_K[static_cast<size_t>(i)] = nn::Tensor::zeros({c_out, c_in, c.kernel, c.kernel});
    conv_b[static_cast<size_t>(i)] = nn::Tensor::zeros({c_out});
    nn::init_uniform(conv_K[static_cast<size_t>(i)], c_in * c.kernel * c.kernel, rng);
    c_in = c_out;
  }
  lstm.init(feature_dim(), c.lstm_hidden, rng);
  const int fused = c.lstm_hidden + c.n_beams;
  fc1_W = nn::Tensor::zeros({c.fc1_dim, fused});
  fc1_b = nn::Tensor::zeros({c.fc1_dim});
  fc2_W = nn::Tensor::zeros({c.fc2_dim, c.fc1_dim});
  fc2_b = nn::Tensor::zeros({c.fc2_dim});
  fc3_W = nn::Tensor::zeros({c.n_beams, c.fc2_dim});
  fc3_b = nn::Tensor::zeros({c.n_beams});
  nn::init_uniform(fc1_W, fused, rng);
  nn::init_uniform(fc2_W, c.fc1_dim, rng);
  nn::init_uniform(fc3_W, c.fc2_dim, rng);
}

std::vector<nn::Tensor*> E2EModel::params() {
  std::vector<nn::Tensor*> p;
  for (int i = 0; i < 5; ++i) {
    p.push_back(&conv_K[static_cast<size_t>(i)]);
    p.push_back(&conv_b[static_cast<size_t>(i)]);
  }
  p.insert(p.end(), {&lstm.Wx, &lstm.Wh, &lstm.b, &fc1_W, &fc1_b, &fc2_W, &fc2_b,
                     &fc3_W, &fc3_b});
  return p;
}

std::vector<const nn::Tensor*> E2EModel::params() const {
  std::vector<const nn::Tensor*> p;
  for (int i = 0; i < 5; ++i) {
    p.push_back(&conv_K[static_cast<size_t>(i)]);
    p.push_back(&conv_b[static_cast<size_t>(i)]);
  }
  p.insert(p.end(), {&lstm.Wx, &lstm.Wh, &lstm.b, &fc1_W, &fc1_b, &fc2_W, &fc2_b,
                     &fc3_W, &fc3_b});
  return p;
}

std::vector<nn::Tensor> E2EModel::make_grads() const {
  std::vector<nn::Tensor> g;
  for (const nn::Tensor* p : params()) g.push_back(nn::Tensor::zeros(p->shape));
  return g;
}

namespace {

// Activations of the conv stack for one time step; `in[0]` is the map,
// `in[s+1]` the pooled output of stage s, `act[s]` the post-ReLU conv output.
struct ConvStackCache {
  std::array<std::vector<double>, 6> in;
  std::array<std::vector<double>, 5> act;
};

void conv_stack_forward(const E2EModel& m, const std::array<StageDims, 5>& dims,
                        const double* map, ConvStackCache& cc,
                        std::vector<double>& cols) {
  cc.in[0].assign(map, map + static_cast<size_t>(m.cfg.map_h) * m.cfg.map_w);
  for (int s = 0; s < 5; ++s) {
    const auto& d = dims[static_cast<size_t>(s)];
    const size_t hw = static_cast<size_t>(d.conv.h) * d.conv.w;
    auto& act = cc.act[static_cast<size_t>(s)];
    act.resize(static_cast<size_t>(d.conv.c_out) * hw);
    nn::conv2d_forward(d.conv, m.conv_K[static_cast<size_t>(s)],
                       m.conv_b[static_cast<size_t>(s)],
                       cc.in[static_cast<size_t>(s)].data(), act.data(), cols);
    nn::relu_forward(act.data(), act.data(), act.size());
    auto& out = cc.in[static_cast<size_t>(s) + 1];
    out.resize(static_cast<size_t>(d.conv.c_out) * d.ph * d.pw);
    nn::avgpool2_forward(act.data(), d.conv.c_out, d.conv.h, d.conv.w, out.data());
  }
}

// dfeat is consumed; conv parameter grads accumulate into g (slot offsets
// 0..9: K/b per stage).
void conv_stack_backward(const E2EModel& m, const std::array<StageDims, 5>& dims,
                         ConvStackCache& cc, std::vector<double>& dfeat,
                         std::vector<nn::Tensor>& g, std::vector<double>& cols,
                         std::vector<double>& dcols) {
  std::vector<double> d_out = std::move(dfeat);
  for (int s = 4; s >= 0; --s) {
    const auto& d = dims[static_cast<size_t>(s)];
    const auto& act = cc.act[static_cast<size_t>(s)];
    std::vector<double> d_act(act.size());
    nn::avgpool2_backward(d_out.data(), d.conv.c_out, d.conv.h, d.conv.w, d_act.data());
    nn::relu_backward(act.data(), d_act.data(), d_act.data(), d_act.size());
    // rebuild the forward im2col for this stage's input
    nn::conv2d_forward_cols_only(d.conv, cc.in[static_cast<size_t>(s)].data(), cols);
    std::vector<double> d_in;
    double* d_in_ptr = nullptr;
    if (s > 0) {
      d_in.resize(cc.in[static_cast<size_t>(s)].size());
      d_in_ptr = d_in.data();
    }
    nn::conv2d_backward(d.conv, m.conv_K[static_cast<size_t>(s)], d_act.data(), d_in_ptr,
                        g[static_cast<size_t>(2 * s)], g[static_cast<size_t>(2 * s + 1)],
                        cols, dcols);
    d_out = std::move(d_in);
  }
}

struct E2EHeadCache {
  std::vector<double> u0, u1_pre, u1, u2_pre, u2, logits;
};

void e2e_head_forward(const E2EModel& m, const double* h_last, int initial_beam,
                      E2EHeadCache& hc) {
  if (initial_beam < 1 || initial_beam > m.cfg.n_beams)
    throw ConfigError("initial beam out of range");
  hc.u0.assign(static_cast<size_t>(m.cfg.lstm_hidden + m.cfg.n_beams), 0.0);
  std::copy(h_last, h_last + m.cfg.lstm_hidden, hc.u0.begin());
  hc.u0[static_cast<size_t>(m.cfg.lstm_hidden + initial_beam - 1)] = 1.0;
  hc.u1_pre.resize(static_cast<size_t>(m.cfg.fc1_dim));
  hc.u1.resize(hc.u1_pre.size());
  nn::dense_forward(m.fc1_W, m.fc1_b, hc.u0.data(), hc.u1_pre.data());
  nn::relu_forward(hc.u1_pre.data(), hc.u1.data(), hc.u1.size());
  hc.u2_pre.resize(static_cast<size_t>(m.cfg.fc2_dim));
  hc.u2.resize(hc.u2_pre.size());
  nn::dense_forward(m.fc2_W, m.fc2_b, hc.u1.data(), hc.u2_pre.data());
  nn::relu_forward(hc.u2_pre.data(), hc.u2.data(), hc.u2.size());
  hc.logits.resize(static_cast<size_t>(m.cfg.n_beams));
  nn::dense_forward(m.fc3_W, m.fc3_b, hc.u2.data(), hc.logits.data());
}

}  // namespace

std::vector<double> E2EModel::conv_features(const double* map) const {
  const auto dims = stage_dims(cfg);
  ConvStackCache cc;
  std::vector<double> cols;
  conv_stack_forward(*this, dims, map, cc, cols);
  return std::move(cc.in[5]);
}

std::vector<double> E2EModel::logits_from_features(const double* features, int steps,
                                                   int initial_beam) const {
  if (steps < 1) throw ConfigError("E2E needs at least one time step");
  nn::LstmCache lc;
  nn::lstm_forward_seq(lstm, features, steps, lc);
  E2EHeadCache hc;
  e2e_head_forward(*this, &lc.h[static_cast<size_t>(steps - 1) * cfg.lstm_hidden],
                   initial_beam, hc);
  return hc.logits;
}

std::vector<double> E2EModel::forward(const std::vector<nn::Tensor>& maps,
                                      int initial_beam) const {
  const int T = static_cast<int>(maps.size());
  if (T < 1) throw ConfigError("E2E needs at least one map");
  const int F = feature_dim();
  std::vector<double> features(static_cast<size_t>(T) * F);
  for (int t = 0; t < T; ++t) {
    if (maps[static_cast<size_t>(t)].size() !=
        static_cast<size_t>(cfg.map_h) * cfg.map_w)
      throw ConfigError("E2E map dims mismatch with the model config");
    auto f = conv_features(maps[static_cast<size_t>(t)].data());
    std::copy(f.begin(), f.end(), features.begin() + static_cast<size_t>(t) * F);
  }
  return logits_from_features(features.data(), T, initial_beam);
}

double E2EModel::loss_and_grad(const std::vector<nn::Tensor>& maps, int initial_beam,
                               int label, std::vector<nn::Tensor>& grads) const {
  if (grads.size() != 19) throw ConfigError("E2E gradient slot count mismatch");
  const int T = static_cast<int>(maps.size());
  if (T < 1) throw ConfigError("E2E needs at least one map");
  const auto dims = stage_dims(cfg);
  const int F = feature_dim();

  std::vector<ConvStackCache> cc(static_cast<size_t>(T));
  std::vector<double> cols, dcols;
  std::vector<double> features(static_cast<size_t>(T) * F);
  for (int t = 0; t < T; ++t) {
    conv_stack_forward(*this, dims, maps[static_cast<size_t>(t)].data(),
                       cc[static_cast<size_t>(t)], cols);
    std::copy(cc[static_cast<size_t>(t)].in[5].begin(), cc[static_cast<size_t>(t)].in[5].end(),
              features.begin() + static_cast<size_t>(t) * F);
  }
  nn::LstmCache lc;
  nn::lstm_forward_seq(lstm, features.data(), T, lc);
  E2EHeadCache hc;
  e2e_head_forward(*this, &lc.h[static_cast<size_t>(T - 1) * cfg.lstm_hidden],
                   initial_beam, hc);

  std::vector<double> dlogits(hc.logits.size());
  const double loss = nn::softmax_xent(hc.logits, label - 1, dlogits.data());

  // head backward (grad slots: 13..18 = fc1..fc3)
  std::vector<double> du2(hc.u2.size());
  nn::dense_backward(fc3_W, hc.u2.data(), dlogits.data(), du2.data(), grads[17], grads[18]);
  nn::relu_backward(hc.u2_pre.data(), du2.data(), du2.data(), du2.size());
  std::vector<double> du1(hc.u1.size());
  nn::dense_backward(fc2_W, hc.u1.data(), du2.data(), du1.data(), grads[15], grads[16]);
  nn::relu_backward(hc.u1_pre.data(), du1.data(), du1.data(), du1.size());
  std::vector<double> du0(hc.u0.size());
  nn::dense_backward(fc1_W, hc.u0.data(), du1.data(), du0.data(), grads[13], grads[14]);

  // LSTM backward (slots 10..12); one-hot input gets no gradient
  nn::LstmGrads lg{std::move(grads[10]), std::move(grads[11]), std::move(grads[12])};
  std::vector<double> dfeatures(static_cast<size_t>(T) * F);
  nn::lstm_backward_seq(lstm, lc, du0.data(), dfeatures.data(), lg);
  grads[10] = std::move(lg.dWx);
  grads[11] = std::move(lg.dWh);
  grads[12] = std::move(lg.db);

  for (int t = T - 1; t >= 0; --t) {
    std::vector<double> dfeat(dfeatures.begin() + static_cast<size_t>(t) * F,
                              dfeatures.begin() + static_cast<size_t>(t + 1) * F);
    conv_stack_backward(*this, dims, cc[static_cast<size_t>(t)], dfeat, grads, cols, dcols);
  }
  return loss;
}

// ---- training ----

namespace {

void fisher_yates(std::vector<size_t>& order, Rng& rng) {
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1],
              order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
}

// Shared mini-batch training loop. sample_fn(idx, t_obs, grads) must
// accumulate sample gradients and return the sample loss. Per-sample
// gradients land in private slots and are reduced in sample order, so the
// result does not depend on the thread count.
template <typename SampleFn>
TrainResult run_training(std::vector<nn::Tensor*> params, size_t n_samples,
                         const nn::TrainConfig& cfg,
                         const std::vector<nn::Tensor>& grad_template,
                         SampleFn&& sample_fn) {
  cfg.validate();
  if (n_samples == 0) throw ConfigError("training dataset is empty");

  nn::AdamState adam;
  adam.beta1 = 0.9;
  adam.beta2 = 0.999;
  adam.eps = 1e-8;

  const size_t bn_max = std::min<size_t>(static_cast<size_t>(cfg.batch_size), n_samples);
  std::vector<std::vector<nn::Tensor>> slots(bn_max, grad_template);
  std::vector<nn::Tensor> batch_grads = grad_template;
  std::vector<double> losses(bn_max, 0.0);

  TrainResult result;
  std::vector<size_t> order(n_samples);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.lr = nn::lr_schedule(epoch, cfg);
    Rng shuffle_rng(mix_seed(cfg.seed, 0x5FULL, static_cast<uint64_t>(epoch)));
    fisher_yates(order, shuffle_rng);
    Rng to_rng(mix_seed(cfg.seed, 0x70ULL, static_cast<uint64_t>(epoch)));
    std::vector<int> tos(n_samples);
    for (auto& t : tos) t = static_cast<int>(to_rng.uniform_int(1, 10));

    double epoch_loss = 0.0;
    for (size_t begin = 0; begin < n_samples; begin += bn_max) {
      const size_t bn = std::min(bn_max, n_samples - begin);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
      for (size_t i = 0; i < bn; ++i) {
        for (auto& g : slots[i]) g.fill(0.0);
        losses[i] = sample_fn(order[begin + i], tos[begin + i], slots[i]);
      }
      for (auto& g : batch_grads) g.fill(0.0);
      double batch_loss = 0.0;
      for (size_t i = 0; i < bn; ++i) {
        batch_loss += losses[i];
        for (size_t p = 0; p < batch_grads.size(); ++p)
          for (size_t j = 0; j < batch_grads[p].size(); ++j)
            batch_grads[p].v[j] += slots[i][p].v[j];
      }
      const double scale = 1.0 / static_cast<double>(bn);
      for (auto& g : batch_grads)
        for (double& x : g.v) x *= scale;
      epoch_loss += batch_loss;
      if (!std::isfinite(batch_loss))
        throw NumericError("training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch));
      std::vector<const nn::Tensor*> gptrs;
      for (const auto& g : batch_grads) gptrs.push_back(&g);
      nn::adam_step(params, gptrs, adam);
    }
    epoch_loss /= static_cast<double>(n_samples);
    if (!std::isfinite(epoch_loss))
      throw NumericError("training diverged (non-finite loss) at epoch " +
                         std::to_string(epoch));
    result.curve.push_back({epoch, adam.lr, epoch_loss});
  }
  return result;
}

}  // namespace

TrainResult train_txid(TxIdModel& model, const std::vector<TxTrainSample>& data,
                       const nn::TrainConfig& cfg) {
  for (const auto& s : data) {
    if (s.label < 1 || s.label > model.cfg.n_beams)
      throw ConfigError("TxId training label out of range");
    if (std::find(s.valid.begin(), s.valid.end(), 1) == s.valid.end())
      throw ConfigError("TxId training sample has no valid tracker output");
  }
  return run_training(
      model.params(), data.size(), cfg, model.make_grads(),
      [&](size_t idx, int t_obs, std::vector<nn::Tensor>& grads) {
        const TxTrainSample& s = data[idx];
        int to = t_obs;
        while (to >= 1 && !s.valid[static_cast<size_t>(to - 1)]) --to;
        if (to < 1) {
          to = t_obs;
          while (to <= 10 && !s.valid[static_cast<size_t>(to - 1)]) ++to;
        }
        return model.loss_and_grad(s.states_by_to[static_cast<size_t>(to - 1)],
                                   s.label, grads);
      });
}

TrainResult train_e2e(E2EModel& model, const E2EDataView& data,
                      const nn::TrainConfig& cfg) {
  if (!data.maps) throw ConfigError("E2E data view has no map store");
  if (data.map_h != model.cfg.map_h || data.map_w != model.cfg.map_w)
    throw ConfigError("E2E data/model map dims mismatch");
  const size_t map_len = static_cast<size_t>(data.map_h) * data.map_w;
  return run_training(
      model.params(), data.samples.size(), cfg, model.make_grads(),
      [&](size_t idx, int t_obs, std::vector<nn::Tensor>& grads) {
        const E2ESampleView& s = data.samples[idx];
        std::vector<nn::Tensor> maps;
        maps.reserve(static_cast<size_t>(t_obs));
        for (int t = 10 - t_obs; t < 10; ++t) {
          const auto& mf = (*data.maps)[static_cast<size_t>(s.frames[static_cast<size_t>(t)])];
          if (mf.size() != map_len) throw ConfigError("stored map has wrong size");
          nn::Tensor m = nn::Tensor::zeros({1, data.map_h, data.map_w});
          for (size_t j = 0; j < map_len; ++j) m.v[j] = mf[j];
          maps.push_back(std::move(m));
        }
        return model.loss_and_grad(maps, s.beams[static_cast<size_t>(10 - t_obs)],
                                   s.beams[9], grads);
      });
}

void export_loss_csv(const TrainResult& r, std::ostream& os) {
  os << "epoch,lr,mean_loss\n";
  char buf[96];
  for (const auto& p : r.curve) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", p.epoch, p.lr, p.mean_loss);
    os << buf;
  }
}

// ---- checkpoints ----

namespace {

const std::vector<std::string> kTxIdParamNames = {
    "lstm.Wx", "lstm.Wh", "lstm.b", "fc1.W", "fc1.b", "fc2.W", "fc2.b"};

std::vector<std::string> e2e_param_names() {
  std::vector<std::string> names;
  for (int i = 1; i <= 5; ++i) {
    names.push_back("conv" + std::to_string(i) + ".K");
    names.push_back("conv" + std::to_string(i) + ".b");
  }
  for (const char* n : {"lstm.Wx", "lstm.Wh", "lstm.b", "fc1.W", "fc1.b", "fc2.W",
                        "fc2.b", "fc3.W", "fc3.b"})
    names.emplace_back(n);
  return names;
}

ordered_json train_config_json(const nn::TrainConfig& cfg) {
  return ordered_json{{"epochs", cfg.epochs},
                      {"batch_size", cfg.batch_size},
                      {"lr", cfg.lr},
                      {"decay_gamma", cfg.decay_gamma},
                      {"decay_every_epochs", cfg.decay_every_epochs},
                      {"seed", cfg.seed}};
}

void write_params_bin(const std::string& path, std::vector<const nn::Tensor*> params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  for (const nn::Tensor* p : params) {
    std::vector<double> flat(p->v);
    io::write_record_real(f, {1u, 1u, static_cast<uint32_t>(flat.size())}, flat);
  }
}

void read_params_bin(const std::string& path, std::vector<nn::Tensor*> params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  for (nn::Tensor* p : params) {
    io::TensorRecord rec = io::read_record(f);
    if (rec.size() != p->size())
      throw IoError("checkpoint parameter size mismatch in " + path);
    for (size_t i = 0; i < p->size(); ++i) p->v[i] = rec.values[i].real();
  }
}

void write_checkpoint_json(const std::string& dir, const std::string& kind,
                           const ordered_json& model_cfg, const nn::TrainConfig& cfg,
                           std::vector<const nn::Tensor*> params,
                           const std::vector<std::string>& names) {
  ordered_json j;
  j["format_version"] = io::kFormatVersion;
  j["model"] = kind;
  j["config"] = model_cfg;
  j["train_config"] = train_config_json(cfg);
  ordered_json plist = ordered_json::array();
  for (size_t i = 0; i < params.size(); ++i)
    plist.push_back(ordered_json{{"name", names[i]}, {"shape", params[i]->shape}});
  j["params"] = plist;
  std::ofstream f(dir + "/checkpoint.json");
  if (!f) throw IoError("cannot write checkpoint.json in " + dir);
  f << j.dump(2) << "\n";
}

}  // namespace

void save_txid_checkpoint(const std::string& dir, const TxIdModel& model,
                          const nn::TrainConfig& cfg) {
  ordered_json mc{{"input_dim", model.cfg.input_dim},
                  {"lstm_hidden", model.cfg.lstm_hidden},
                  {"fc_hidden", model.cfg.fc_hidden},
                  {"n_beams", model.cfg.n_beams}};
  write_checkpoint_json(dir, "txid", mc, cfg, model.params(), kTxIdParamNames);
  write_params_bin(dir + "/checkpoint.bin", model.params());
}

void save_e2e_checkpoint(const std::string& dir, const E2EModel& model,
                         const nn::TrainConfig& cfg) {
  ordered_json mc{{"map_h", model.cfg.map_h},
                  {"map_w", model.cfg.map_w},
                  {"conv_channels", model.cfg.conv_channels},
                  {"kernel", model.cfg.kernel},
                  {"lstm_hidden", model.cfg.lstm_hidden},
                  {"fc1_dim", model.cfg.fc1_dim},
                  {"fc2_dim", model.cfg.fc2_dim},
                  {"n_beams", model.cfg.n_beams}};
  write_checkpoint_json(dir, "e2e", mc, cfg, model.params(), e2e_param_names());
  write_params_bin(dir + "/checkpoint.bin", model.params());
}

LoadedModel load_checkpoint(const std::string& dir) {
  std::ifstream f(dir + "/checkpoint.json");
  if (!f) throw IoError("missing checkpoint.json in " + dir);
  ordered_json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw IoError("malformed checkpoint.json in " + dir + ": " + e.what());
  }
  LoadedModel out;
  const std::string kind = j.at("model").get<std::string>();
  const auto& mc = j.at("config");
  if (kind == "txid") {
    TxIdModelConfig cfg;
    cfg.input_dim = mc.at("input_dim").get<int>();
    cfg.lstm_hidden = mc.at("lstm_hidden").get<int>();
    cfg.fc_hidden = mc.at("fc_hidden").get<int>();
    cfg.n_beams = mc.at("n_beams").get<int>();
    TxIdModel m;
    m.init(cfg, 0);
    read_params_bin(dir + "/checkpoint.bin", m.params());
    out.txid = std::move(m);
  } else if (kind == "e2e") {
    E2EModelConfig cfg;
    cfg.map_h = mc.at("map_h").get<int>();
    cfg.map_w = mc.at("map_w").get<int>();
    const auto ch = mc.at("conv_channels").get<std::vector<int>>();
    if (ch.size() != 5) throw IoError("checkpoint conv_channels must have 5 entries");
    std::copy(ch.begin(), ch.end(), cfg.conv_channels.begin());
    cfg.kernel = mc.at("kernel").get<int>();
    cfg.lstm_hidden = mc.at("lstm_hidden").get<int>();
    cfg.fc1_dim = mc.at("fc1_dim").get<int>();
    cfg.fc2_dim = mc.at("fc2_dim").get<int>();
    cfg.n_beams = mc.at("n_beams").get<int>();
    E2EModel m;
    m.init(cfg, 0);
    read_params_bin(dir + "/checkpoint.bin", m.params());
    out.e2e = std::move(m);
  } else {
    throw IoError("unknown checkpoint model kind: " + kind);
  }
  return out;
}

}  // namespace rbtk::models
