#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rbtk/nn.hpp"
#include "rbtk/radar_dsp.hpp"
#include "rbtk/radar_synth.hpp"

namespace rbtk::models {

// ---- baseline ----------------------------------------------------------------

/// Ranked beam-hold prediction [b, b-1, b+1, b-2, b+2][:k]; out-of-range
/// entries are dropped and back-filled with the nearest unused in-range
/// indices (ascending distance, lower index first). k must be 1, 3 or 5.
std::vector<int> beam_hold_predict(int initial_beam, int k, int n_beams);

/// 1-based indices of the k largest logits, descending; ties to lower index.
std::vector<int> predict_topk(std::span<const double> logits, int k);

// ---- transmitter-identification model -----------------------------------------

struct TxIdModelConfig {
  int input_dim = 3;  // normalized range, velocity, angle
  int lstm_hidden = 64;
  int fc_hidden = 64;
  int n_beams = 64;
};

/// LSTM over the tracked transmitter states, then two fully connected layers
/// onto beam logits.
class TxIdModel {
 public:
  TxIdModelConfig cfg;
  nn::LstmParams lstm;
  nn::Tensor fc1_W, fc1_b, fc2_W, fc2_b;

  void init(const TxIdModelConfig& c, uint64_t seed);

  std::vector<nn::Tensor*> params();
  std::vector<const nn::Tensor*> params() const;
  std::vector<nn::Tensor> make_grads() const;

  /// states is [T x 3], already normalized to [-1, 1].
  std::vector<double> forward(const nn::Tensor& states) const;

  /// Cross-entropy loss; accumulates parameter gradients into `grads`
  /// (aligned with params()).
  double loss_and_grad(const nn::Tensor& states, int label,
                       std::vector<nn::Tensor>& grads) const;
};

/// Maps (range, velocity, angle) onto [-1,1] by the radar's physical maxima.
nn::Tensor normalize_tx_states(std::span<const dsp::ObjectState> states,
                               const radar::DerivedParams& d);

// ---- end-to-end model -----------------------------------------------------------

struct E2EModelConfig {
  int map_h = 256;
  int map_w = 128;
  std::array<int, 5> conv_channels{8, 16, 32, 32, 32};
  int kernel = 3;
  int lstm_hidden = 128;
  int fc1_dim = 128;
  int fc2_dim = 64;
  int n_beams = 64;
};

/// log10(1+x) then per-map standardization; the model's input contract.
nn::Tensor preprocess_map(std::span<const float> raw, int h, int w);
nn::Tensor preprocess_map(std::span<const double> raw, int h, int w);

/// Five shared conv(3x3)+ReLU+avgpool stages per time step, LSTM across time,
/// previous-beam one-hot concatenated after the LSTM, three fully connected
/// stages onto beam logits.
class E2EModel {
 public:
  E2EModelConfig cfg;
  std::array<nn::Tensor, 5> conv_K, conv_b;
  nn::LstmParams lstm;
  nn::Tensor fc1_W, fc1_b, fc2_W, fc2_b, fc3_W, fc3_b;

  void init(const E2EModelConfig& c, uint64_t seed);

  int feature_dim() const;
  std::vector<nn::Tensor*> params();
  std::vector<const nn::Tensor*> params() const;
  std::vector<nn::Tensor> make_grads() const;

  /// Conv-stack output for a single preprocessed map (length feature_dim()).
  std::vector<double> conv_features(const double* map) const;

  /// LSTM + fusion + FC head over per-step conv features (steps x feature_dim).
  std::vector<double> logits_from_features(const double* features, int steps,
                                           int initial_beam) const;

  /// maps: `steps` preprocessed maps (each map_h x map_w).
  std::vector<double> forward(const std::vector<nn::Tensor>& maps,
                              int initial_beam) const;

  double loss_and_grad(const std::vector<nn::Tensor>& maps, int initial_beam,
                       int label, std::vector<nn::Tensor>& grads) const;
};

// ---- training --------------------------------------------------------------------

struct TxTrainSample {
  // states_by_to[t-1] holds the tracker output over the last t frames,
  // normalized; valid[t-1] = 0 when the tracker lost the transmitter there.
  std::array<nn::Tensor, 10> states_by_to;
  std::array<uint8_t, 10> valid{};
  int label = 0;  // 1-based beam
};

struct E2ESampleView {
  std::array<int, 10> frames{};  // indices into the map store
  std::array<int, 10> beams{};   // per-frame optimal beams, 1-based
};

struct E2EDataView {
  int map_h = 0;
  int map_w = 0;
  const std::vector<std::vector<float>>* maps = nullptr;  // preprocessed, per frame
  std::vector<E2ESampleView> samples;
};

struct TrainCurvePoint {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
};

struct TrainResult {
  std::vector<TrainCurvePoint> curve;
};

/// Mini-batch Adam on the mean cross-entropy. The observation length of every
/// (epoch, sample) pair is drawn uniformly from 1..10 (seeded), so one model
/// serves every evaluation T_o. Bit-reproducible for a fixed seed; per-sample
/// gradients are reduced in sample order regardless of thread count.
TrainResult train_txid(TxIdModel& model, const std::vector<TxTrainSample>& data,
                       const nn::TrainConfig& cfg);

TrainResult train_e2e(E2EModel& model, const E2EDataView& data,
                      const nn::TrainConfig& cfg);

void export_loss_csv(const TrainResult& r, std::ostream& os);

// ---- checkpoints --------------------------------------------------------------------

void save_txid_checkpoint(const std::string& dir, const TxIdModel& model,
                          const nn::TrainConfig& cfg);
void save_e2e_checkpoint(const std::string& dir, const E2EModel& model,
                         const nn::TrainConfig& cfg);

/// Reads checkpoint.json to decide the kind; exactly one optional is set.
struct LoadedModel {
  std::optional<TxIdModel> txid;
  std::optional<E2EModel> e2e;
};
LoadedModel load_checkpoint(const std::string& dir);

}  // namespace rbtk::models
