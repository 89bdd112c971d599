#include "rbtk/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace rbtk::nn {

size_t shape_product(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ConfigError("tensor dims must be positive");
    n *= static_cast<size_t>(d);
  }
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape) {
  Tensor t;
  t.v.assign(shape_product(shape), 0.0);
  t.shape = std::move(shape);
  return t;
}

void init_uniform(Tensor& t, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  for (double& x : t.v) x = rng.uniform(-bound, bound);
}

void matmul(int m, int k, int n, const double* A, const double* B, double* C,
            bool accumulate) {
  if (!accumulate) std::memset(C, 0, sizeof(double) * static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    double* ci = C + static_cast<size_t>(i) * n;
    const double* ai = A + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double a = ai[p];
      if (a == 0.0) continue;
      const double* bp = B + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += a * bp[j];
    }
  }
}

void matmul_nt(int m, int n, int k, const double* A, const double* B, double* C,
               bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const double* ai = A + static_cast<size_t>(i) * k;
    double* ci = C + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = B + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + acc : acc;
    }
  }
}

void matmul_tn(int k, int m, int n, const double* A, const double* B, double* C,
               bool accumulate) {
  if (!accumulate) std::memset(C, 0, sizeof(double) * static_cast<size_t>(m) * n);
  for (int p = 0; p < k; ++p) {
    const double* ap = A + static_cast<size_t>(p) * m;
    const double* bp = B + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double a = ap[i];
      if (a == 0.0) continue;
      double* ci = C + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += a * bp[j];
    }
  }
}

// ---- dense ----

void dense_forward(const Tensor& W, const Tensor& b, const double* x, double* y) {
  const int out = W.shape[0], in = W.shape[1];
  for (int i = 0; i < out; ++i) {
    const double* wi = W.data() + static_cast<size_t>(i) * in;
    double acc = b.v[static_cast<size_t>(i)];
    for (int j = 0; j < in; ++j) acc += wi[j] * x[j];
    y[i] = acc;
  }
}

void dense_backward(const Tensor& W, const double* x, const double* dy, double* dx,
                    Tensor& dW, Tensor& db) {
  const int out = W.shape[0], in = W.shape[1];
  for (int i = 0; i < out; ++i) {
    const double g = dy[i];
    db.v[static_cast<size_t>(i)] += g;
    double* dwi = dW.data() + static_cast<size_t>(i) * in;
    for (int j = 0; j < in; ++j) dwi[j] += g * x[j];
  }
  if (dx) {
    for (int j = 0; j < in; ++j) dx[j] = 0.0;
    for (int i = 0; i < out; ++i) {
      const double g = dy[i];
      const double* wi = W.data() + static_cast<size_t>(i) * in;
      for (int j = 0; j < in; ++j) dx[j] += g * wi[j];
    }
  }
}

// ---- conv2d ----

void Conv2dShape::validate() const {
  if (c_in < 1 || c_out < 1 || h < 1 || w < 1)
    throw ConfigError("conv2d dims must be positive");
  if (kh < 1 || kw < 1 || kh % 2 == 0 || kw % 2 == 0)
    throw ConfigError("conv2d kernel dims must be odd");
}

namespace {

void im2col(const Conv2dShape& s, const double* x, double* cols) {
  const int ph = s.kh / 2, pw = s.kw / 2;
  const size_t hw = static_cast<size_t>(s.h) * s.w;
  size_t q = 0;
  for (int ci = 0; ci < s.c_in; ++ci)
    for (int u = 0; u < s.kh; ++u)
      for (int v = 0; v < s.kw; ++v, ++q) {
        double* row = cols + q * hw;
        const double* xc = x + static_cast<size_t>(ci) * hw;
        for (int i = 0; i < s.h; ++i) {
          const int si = i + u - ph;
          double* out = row + static_cast<size_t>(i) * s.w;
          if (si < 0 || si >= s.h) {
            std::memset(out, 0, sizeof(double) * static_cast<size_t>(s.w));
            continue;
          }
          const double* src = xc + static_cast<size_t>(si) * s.w;
          for (int j = 0; j < s.w; ++j) {
            const int sj = j + v - pw;
            out[j] = (sj < 0 || sj >= s.w) ? 0.0 : src[sj];
          }
        }
      }
}

void col2im_add(const Conv2dShape& s, const double* cols, double* dx) {
  const int ph = s.kh / 2, pw = s.kw / 2;
  const size_t hw = static_cast<size_t>(s.h) * s.w;
  size_t q = 0;
  for (int ci = 0; ci < s.c_in; ++ci)
    for (int u = 0; u < s.kh; ++u)
      for (int v = 0; v < s.kw; ++v, ++q) {
        const double* row = cols + q * hw;
        double* xc = dx + static_cast<size_t>(ci) * hw;
        for (int i = 0; i < s.h; ++i) {
          const int si = i + u - ph;
          if (si < 0 || si >= s.h) continue;
          double* dst = xc + static_cast<size_t>(si) * s.w;
          const double* src = row + static_cast<size_t>(i) * s.w;
          for (int j = 0; j < s.w; ++j) {
            const int sj = j + v - pw;
            if (sj >= 0 && sj < s.w) dst[sj] += src[j];
          }
        }
      }
}

}  // namespace

void conv2d_forward_cols_only(const Conv2dShape& s, const double* x,
                              std::vector<double>& cols) {
  s.validate();
  cols.resize(s.col_rows() * static_cast<size_t>(s.h) * s.w);
  im2col(s, x, cols.data());
}

void conv2d_forward(const Conv2dShape& s, const Tensor& K, const Tensor& b,
                    const double* x, double* y, std::vector<double>& cols) {
  s.validate();
  const size_t hw = static_cast<size_t>(s.h) * s.w;
  cols.resize(s.col_rows() * hw);
  im2col(s, x, cols.data());
  matmul(s.c_out, static_cast<int>(s.col_rows()), static_cast<int>(hw), K.data(),
         cols.data(), y, false);
  for (int co = 0; co < s.c_out; ++co) {
    double* yc = y + static_cast<size_t>(co) * hw;
    const double bias = b.v[static_cast<size_t>(co)];
    for (size_t p = 0; p < hw; ++p) yc[p] += bias;
  }
}

void conv2d_backward(const Conv2dShape& s, const Tensor& K, const double* dy,
                     double* dx, Tensor& dK, Tensor& db,
                     std::vector<double>& cols, std::vector<double>& dcols) {
  // `cols` must still hold the forward im2col of the same input.
  const size_t hw = static_cast<size_t>(s.h) * s.w;
  const int q = static_cast<int>(s.col_rows());
  for (int co = 0; co < s.c_out; ++co) {
    const double* dyc = dy + static_cast<size_t>(co) * hw;
    double acc = 0.0;
    for (size_t p = 0; p < hw; ++p) acc += dyc[p];
    db.v[static_cast<size_t>(co)] += acc;
  }
  matmul_nt(s.c_out, q, static_cast<int>(hw), dy, cols.data(), dK.data(), true);
  if (dx) {
    dcols.resize(static_cast<size_t>(q) * hw);
    matmul_tn(s.c_out, q, static_cast<int>(hw), K.data(), dy, dcols.data(), false);
    std::memset(dx, 0, sizeof(double) * static_cast<size_t>(s.c_in) * hw);
    col2im_add(s, dcols.data(), dx);
  }
}

// ---- avgpool2 ----

void avgpool2_forward(const double* x, int c, int h, int w, double* y) {
  const int oh = pooled_extent(h), ow = pooled_extent(w);
  for (int ci = 0; ci < c; ++ci) {
    const double* xc = x + static_cast<size_t>(ci) * h * w;
    double* yc = y + static_cast<size_t>(ci) * oh * ow;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj) {
            const int si = std::min(2 * i + di, h - 1);  // edge replication
            const int sj = std::min(2 * j + dj, w - 1);
            acc += xc[static_cast<size_t>(si) * w + sj];
          }
        yc[static_cast<size_t>(i) * ow + j] = 0.25 * acc;
      }
  }
}

void avgpool2_backward(const double* dy, int c, int h, int w, double* dx) {
  const int oh = pooled_extent(h), ow = pooled_extent(w);
  std::memset(dx, 0, sizeof(double) * static_cast<size_t>(c) * h * w);
  for (int ci = 0; ci < c; ++ci) {
    const double* dyc = dy + static_cast<size_t>(ci) * oh * ow;
    double* dxc = dx + static_cast<size_t>(ci) * h * w;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        const double g = 0.25 * dyc[static_cast<size_t>(i) * ow + j];
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj) {
            const int si = std::min(2 * i + di, h - 1);
            const int sj = std::min(2 * j + dj, w - 1);
            dxc[static_cast<size_t>(si) * w + sj] += g;
          }
      }
  }
}

// ---- relu ----

void relu_forward(const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* dy, double* dx, size_t n) {
  for (size_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

// ---- LSTM ----

namespace {
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}

void LstmParams::init(int in_dim, int hid, Rng& rng) {
  input_dim = in_dim;
  hidden = hid;
  Wx = Tensor::zeros({4 * hid, in_dim});
  Wh = Tensor::zeros({4 * hid, hid});
  b = Tensor::zeros({4 * hid});
  init_uniform(Wx, in_dim, rng);
  init_uniform(Wh, hid, rng);
}

void lstm_cell(const LstmParams& p, const double* x, const double* h_prev,
               const double* c_prev, double* h_out, double* c_out) {
  const int H = p.hidden;
  std::vector<double> z(static_cast<size_t>(4) * H);
  for (int r = 0; r < 4 * H; ++r) {
    const double* wx = p.Wx.data() + static_cast<size_t>(r) * p.input_dim;
    const double* wh = p.Wh.data() + static_cast<size_t>(r) * H;
    double acc = p.b.v[static_cast<size_t>(r)];
    for (int j = 0; j < p.input_dim; ++j) acc += wx[j] * x[j];
    for (int j = 0; j < H; ++j) acc += wh[j] * h_prev[j];
    z[static_cast<size_t>(r)] = acc;
  }
  for (int j = 0; j < H; ++j) {
    const double i = sigmoid(z[static_cast<size_t>(j)]);
    const double f = sigmoid(z[static_cast<size_t>(H + j)]);
    const double g = std::tanh(z[static_cast<size_t>(2 * H + j)]);
    const double o = sigmoid(z[static_cast<size_t>(3 * H + j)]);
    const double c = f * c_prev[j] + i * g;
    c_out[j] = c;
    h_out[j] = o * std::tanh(c);
  }
}

void lstm_forward_seq(const LstmParams& p, const double* xs, int steps,
                      LstmCache& cache) {
  if (steps < 1) throw ConfigError("LSTM needs at least one step");
  const int H = p.hidden, D = p.input_dim;
  cache.steps = steps;
  cache.xs.assign(xs, xs + static_cast<size_t>(steps) * D);
  cache.gates.assign(static_cast<size_t>(steps) * 4 * H, 0.0);
  cache.c.assign(static_cast<size_t>(steps) * H, 0.0);
  cache.tanh_c.assign(static_cast<size_t>(steps) * H, 0.0);
  cache.h.assign(static_cast<size_t>(steps) * H, 0.0);

  std::vector<double> z(static_cast<size_t>(4) * H);
  std::vector<double> h_prev(static_cast<size_t>(H), 0.0);
  std::vector<double> c_prev(static_cast<size_t>(H), 0.0);
  for (int t = 0; t < steps; ++t) {
    const double* x = xs + static_cast<size_t>(t) * D;
    // z = Wx x + Wh h_prev + b
    for (int r = 0; r < 4 * H; ++r) {
      const double* wx = p.Wx.data() + static_cast<size_t>(r) * D;
      const double* wh = p.Wh.data() + static_cast<size_t>(r) * H;
      double acc = p.b.v[static_cast<size_t>(r)];
      for (int j = 0; j < D; ++j) acc += wx[j] * x[j];
      for (int j = 0; j < H; ++j) acc += wh[j] * h_prev[static_cast<size_t>(j)];
      z[static_cast<size_t>(r)] = acc;
    }
    double* gates = &cache.gates[static_cast<size_t>(t) * 4 * H];
    double* ct = &cache.c[static_cast<size_t>(t) * H];
    double* tct = &cache.tanh_c[static_cast<size_t>(t) * H];
    double* ht = &cache.h[static_cast<size_t>(t) * H];
    for (int j = 0; j < H; ++j) {
      const double i = sigmoid(z[static_cast<size_t>(j)]);
      const double f = sigmoid(z[static_cast<size_t>(H + j)]);
      const double g = std::tanh(z[static_cast<size_t>(2 * H + j)]);
      const double o = sigmoid(z[static_cast<size_t>(3 * H + j)]);
      gates[j] = i;
      gates[H + j] = f;
      gates[2 * H + j] = g;
      gates[3 * H + j] = o;
      ct[j] = f * c_prev[static_cast<size_t>(j)] + i * g;
      tct[j] = std::tanh(ct[j]);
      ht[j] = o * tct[j];
    }
    std::copy(ct, ct + H, c_prev.begin());
    std::copy(ht, ht + H, h_prev.begin());
  }
}

void lstm_backward_seq(const LstmParams& p, const LstmCache& cache,
                       const double* dh_last, double* dxs, LstmGrads& g) {
  const int H = p.hidden, D = p.input_dim, T = cache.steps;
  std::vector<double> dh(dh_last, dh_last + H);
  std::vector<double> dc(static_cast<size_t>(H), 0.0);
  std::vector<double> dz(static_cast<size_t>(4) * H);

  for (int t = T - 1; t >= 0; --t) {
    const double* gates = &cache.gates[static_cast<size_t>(t) * 4 * H];
    const double* tct = &cache.tanh_c[static_cast<size_t>(t) * H];
    const double* c_prev = t > 0 ? &cache.c[static_cast<size_t>(t - 1) * H] : nullptr;
    const double* h_prev = t > 0 ? &cache.h[static_cast<size_t>(t - 1) * H] : nullptr;
    const double* x = &cache.xs[static_cast<size_t>(t) * D];

    for (int j = 0; j < H; ++j) {
      const double i = gates[j], f = gates[H + j], gg = gates[2 * H + j],
                   o = gates[3 * H + j];
      const double dct = dc[static_cast<size_t>(j)] +
                         dh[static_cast<size_t>(j)] * o * (1.0 - tct[j] * tct[j]);
      const double cp = c_prev ? c_prev[j] : 0.0;
      dz[static_cast<size_t>(j)] = dct * gg * i * (1.0 - i);                // input gate
      dz[static_cast<size_t>(H + j)] = dct * cp * f * (1.0 - f);           // forget gate
      dz[static_cast<size_t>(2 * H + j)] = dct * i * (1.0 - gg * gg);      // candidate
      dz[static_cast<size_t>(3 * H + j)] =
          dh[static_cast<size_t>(j)] * tct[j] * o * (1.0 - o);             // output gate
      dc[static_cast<size_t>(j)] = dct * f;
    }

    for (int r = 0; r < 4 * H; ++r) {
      const double grad = dz[static_cast<size_t>(r)];
      g.db.v[static_cast<size_t>(r)] += grad;
      double* dwx = g.dWx.data() + static_cast<size_t>(r) * D;
      for (int j = 0; j < D; ++j) dwx[j] += grad * x[j];
      if (h_prev) {
        double* dwh = g.dWh.data() + static_cast<size_t>(r) * H;
        for (int j = 0; j < H; ++j) dwh[j] += grad * h_prev[j];
      }
    }
    if (dxs) {
      double* dx = dxs + static_cast<size_t>(t) * D;
      for (int j = 0; j < D; ++j) dx[j] = 0.0;
      for (int r = 0; r < 4 * H; ++r) {
        const double grad = dz[static_cast<size_t>(r)];
        const double* wx = p.Wx.data() + static_cast<size_t>(r) * D;
        for (int j = 0; j < D; ++j) dx[j] += grad * wx[j];
      }
    }
    // dh for the previous step
    std::fill(dh.begin(), dh.end(), 0.0);
    if (t > 0) {
      for (int r = 0; r < 4 * H; ++r) {
        const double grad = dz[static_cast<size_t>(r)];
        const double* wh = p.Wh.data() + static_cast<size_t>(r) * H;
        for (int j = 0; j < H; ++j) dh[static_cast<size_t>(j)] += grad * wh[j];
      }
    }
  }
}

// ---- softmax cross-entropy ----

double softmax_xent(std::span<const double> logits, int label, double* dlogits) {
  const int n = static_cast<int>(logits.size());
  if (label < 0 || label >= n)
    throw ConfigError("softmax label " + std::to_string(label) + " out of range");
  double mx = logits[0];
  for (double x : logits) mx = std::max(mx, x);
  double denom = 0.0;
  for (double x : logits) denom += std::exp(x - mx);
  const double log_denom = std::log(denom);
  const double loss = -(logits[static_cast<size_t>(label)] - mx - log_denom);
  if (dlogits) {
    for (int i = 0; i < n; ++i)
      dlogits[i] = std::exp(logits[static_cast<size_t>(i)] - mx) / denom;
    dlogits[label] -= 1.0;
  }
  return loss;
}

// ---- Adam ----

void AdamState::ensure_shapes(std::span<Tensor* const> params) {
  if (!m.empty()) {
    if (m.size() != params.size()) throw ConfigError("Adam state/parameter count mismatch");
    return;
  }
  for (const Tensor* p : params) {
    m.push_back(Tensor::zeros(p->shape));
    v.push_back(Tensor::zeros(p->shape));
  }
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               AdamState& state) {
  if (params.size() != grads.size()) throw ConfigError("params/grads count mismatch");
  state.ensure_shapes(params);
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    if (g.size() != p.size()) throw ConfigError("gradient shape mismatch");
    Tensor& mi = state.m[i];
    Tensor& vi = state.v[i];
    for (size_t j = 0; j < p.size(); ++j) {
      const double gj = g.v[j];
      mi.v[j] = state.beta1 * mi.v[j] + (1.0 - state.beta1) * gj;
      vi.v[j] = state.beta2 * vi.v[j] + (1.0 - state.beta2) * gj * gj;
      const double mhat = mi.v[j] / bc1;
      const double vhat = vi.v[j] / bc2;
      p.v[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || decay_every_epochs < 1)
    throw ConfigError("train config counts must be positive");
  if (!(lr > 0.0) || !(decay_gamma > 0.0))
    throw ConfigError("train config rates must be positive");
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  cfg.validate();
  if (epoch < 0) throw ConfigError("epoch must be >= 0");
  return cfg.lr * std::pow(cfg.decay_gamma, epoch / cfg.decay_every_epochs);
}

// ---- gradient verification ----

double grad_check(std::span<Tensor* const> params, std::span<Tensor* const> grads,
                  const std::function<double()>& compute_loss,
                  const std::function<void()>& compute_grads, Rng& rng,
                  double fraction, double step) {
  compute_grads();
  std::vector<Tensor> analytic;
  analytic.reserve(grads.size());
  for (const Tensor* g : grads) analytic.push_back(*g);

  double max_rel = 0.0;
  for (size_t ti = 0; ti < params.size(); ++ti) {
    Tensor& p = *params[ti];
    const size_t want = std::max<size_t>(
        1, static_cast<size_t>(fraction * static_cast<double>(p.size()) + 0.5));
    for (size_t s = 0; s < want; ++s) {
      const size_t j = static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(p.size()) - 1));
      const double saved = p.v[j];
      p.v[j] = saved + step;
      const double lp = compute_loss();
      p.v[j] = saved - step;
      const double lm = compute_loss();
      p.v[j] = saved;
      const double numeric = (lp - lm) / (2.0 * step);
      const double a = analytic[ti].v[j];
      // central differences carry ~eps*|L|/step of rounding noise; entries
      // that agree within that floor are unresolvable, not wrong
      if (std::abs(a - numeric) < 1e-10) continue;
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace rbtk::nn
