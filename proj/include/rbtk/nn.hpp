#pragma once

#include <functional>
#include <span>
#include <vector>

#include "rbtk/common.hpp"

namespace rbtk::nn {

/// Dense n-dimensional real array. All training math is 64-bit; checkpoints
/// round to 32-bit on disk.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  static Tensor zeros(std::vector<int> shape);

  size_t size() const { return v.size(); }
  void fill(double x) { std::fill(v.begin(), v.end(), x); }
  double* data() { return v.data(); }
  const double* data() const { return v.data(); }
};

size_t shape_product(const std::vector<int>& shape);

/// Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
void init_uniform(Tensor& t, int fan_in, Rng& rng);

// Row-major GEMM variants, C (m x n) = A.B / A.B^T / A^T.B, optionally
// accumulating into C.
void matmul(int m, int k, int n, const double* A, const double* B, double* C,
            bool accumulate);
void matmul_nt(int m, int n, int k, const double* A, const double* B, double* C,
               bool accumulate);
void matmul_tn(int k, int m, int n, const double* A, const double* B, double* C,
               bool accumulate);

// ---- dense ----------------------------------------------------------------

/// y = W x + b, W is [out x in].
void dense_forward(const Tensor& W, const Tensor& b, const double* x, double* y);
/// dx (optional) = W^T dy; accumulates dW += dy x^T, db += dy.
void dense_backward(const Tensor& W, const double* x, const double* dy, double* dx,
                    Tensor& dW, Tensor& db);

// ---- conv2d (stride 1, zero same-padding, odd kernels) ---------------------

struct Conv2dShape {
  int c_in = 0, c_out = 0, kh = 0, kw = 0, h = 0, w = 0;
  void validate() const;
  size_t col_rows() const { return static_cast<size_t>(c_in) * kh * kw; }
};

/// K is [c_out x c_in x kh x kw], x is [c_in x h x w], y is [c_out x h x w].
/// `cols` is caller-provided scratch of size col_rows() * h * w.
void conv2d_forward(const Conv2dShape& s, const Tensor& K, const Tensor& b,
                    const double* x, double* y, std::vector<double>& cols);
/// Rebuilds the im2col scratch of `x` without the GEMM; conv2d_backward needs
/// the forward cols and this avoids caching them across the whole sequence.
void conv2d_forward_cols_only(const Conv2dShape& s, const double* x,
                              std::vector<double>& cols);
void conv2d_backward(const Conv2dShape& s, const Tensor& K, const double* dy,
                     double* dx, Tensor& dK, Tensor& db,
                     std::vector<double>& cols, std::vector<double>& dcols);

// ---- 2x2 average pooling ----------------------------------------------------

/// Non-overlapping 2x2 mean. Odd extents are padded on the right/bottom by
/// edge replication, so output dims are ceil(h/2) x ceil(w/2).
void avgpool2_forward(const double* x, int c, int h, int w, double* y);
void avgpool2_backward(const double* dy, int c, int h, int w, double* dx);
inline int pooled_extent(int n) { return (n + 1) / 2; }

// ---- relu -------------------------------------------------------------------

void relu_forward(const double* x, double* y, size_t n);
/// dx = dy where x > 0 (in-place allowed).
void relu_backward(const double* x, const double* dy, double* dx, size_t n);

// ---- LSTM -------------------------------------------------------------------

/// Gate order in the stacked [4H x .] parameters: input, forget, cell, output.
struct LstmParams {
  int input_dim = 0;
  int hidden = 0;
  Tensor Wx;  // [4H x D]
  Tensor Wh;  // [4H x H]
  Tensor b;   // [4H]

  void init(int input_dim, int hidden, Rng& rng);
};

struct LstmGrads {
  Tensor dWx, dWh, db;
};

/// Per-sequence activations kept for backprop.
struct LstmCache {
  int steps = 0;
  std::vector<double> xs;      // T x D (copy of inputs)
  std::vector<double> gates;   // T x 4H (post-activation i,f,g,o)
  std::vector<double> c;       // T x H
  std::vector<double> tanh_c;  // T x H
  std::vector<double> h;       // T x H
};

/// One cell step; h_out/c_out may alias h_prev/c_prev.
void lstm_cell(const LstmParams& p, const double* x, const double* h_prev,
               const double* c_prev, double* h_out, double* c_out);

/// Unrolls over xs (T x D) from zero initial state; returns the cache filled.
/// The last hidden state is cache.h tail.
void lstm_forward_seq(const LstmParams& p, const double* xs, int steps,
                      LstmCache& cache);

/// Backprop from a gradient on the last hidden state only. dxs (optional,
/// T x D) receives input gradients; parameter grads accumulate.
void lstm_backward_seq(const LstmParams& p, const LstmCache& cache,
                       const double* dh_last, double* dxs, LstmGrads& g);

// ---- softmax cross-entropy ----------------------------------------------------

/// Returns -log softmax(logits)[label]; fills dlogits = softmax - onehot when
/// non-null. Numerically stabilized by the max-logit shift.
double softmax_xent(std::span<const double> logits, int label, double* dlogits);

// ---- Adam ---------------------------------------------------------------------

struct AdamState {
  int64_t step = 0;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Tensor> m, v;

  /// Moment tensors are created lazily to match `params` on the first step.
  void ensure_shapes(std::span<Tensor* const> params);
};

/// Standard bias-corrected update; a zero gradient leaves parameters unchanged.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               AdamState& state);

struct TrainConfig {
  int epochs = 80;
  int batch_size = 32;
  double lr = 0.01;
  double decay_gamma = 0.01;
  int decay_every_epochs = 20;
  uint64_t seed = 1;

  void validate() const;
};

/// lr0 * gamma^floor(epoch / decay_every) (step decay).
double lr_schedule(int epoch, const TrainConfig& cfg);

// ---- gradient verification -----------------------------------------------------

/// Central finite differences (step 1e-5) over a random subset of the
/// parameters (fraction of the total, at least one entry per tensor).
/// `compute_grads` must zero + fill `grads`; `compute_loss` must evaluate the
/// same loss without touching grads. Returns the max relative error with
/// denominator max(|analytic|, |numeric|, 1e-8).
double grad_check(std::span<Tensor* const> params, std::span<Tensor* const> grads,
                  const std::function<double()>& compute_loss,
                  const std::function<void()>& compute_grads, Rng& rng,
                  double fraction = 0.01, double step = 1e-5);

}  // namespace rbtk::nn
