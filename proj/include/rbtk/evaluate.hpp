#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rbtk/dataset.hpp"
#include "rbtk/models.hpp"

namespace rbtk::data {

/// Mean of 1{label in top-k prefix of the ranked list}.
double topk_accuracy(const std::vector<std::vector<int>>& ranked,
                     const std::vector<int>& labels, int k);

/// B x B counts, row-major; entry (label-1, predicted-1).
std::vector<long long> confusion_matrix(const std::vector<int>& top1,
                                        const std::vector<int>& labels, int n_beams);

/// A predictor returns a ranked beam list (>= k_max entries) for one test
/// sequence truncated to the last t_obs frames.
using RankedPredictor =
    std::function<std::vector<int>(const SequenceInfo& seq, int t_obs, int k_max)>;

struct EvalOptions {
  std::vector<int> t_obs_set{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<int> ks{1, 3, 5};
  int confusion_t_obs = 5;
  int n_beams = 64;
};

struct EvalReport {
  EvalOptions options;
  int n_test = 0;
  // model -> t_obs -> k -> accuracy
  std::map<std::string, std::map<int, std::map<int, double>>> accuracy;
  // model -> B x B counts at options.confusion_t_obs
  std::map<std::string, std::vector<long long>> confusion;
};

/// Runs every predictor over the test split at every requested observation
/// length. Predictors are expected to be pure; samples are evaluated in a
/// deterministic order.
EvalReport evaluate_models(const Dataset& ds,
                           const std::vector<std::pair<std::string, RankedPredictor>>& models,
                           const EvalOptions& opt);

void write_report_json(const EvalReport& r, const std::string& path);
void write_accuracy_csv(const EvalReport& r, const std::string& path);
/// Nonzero confusion entries only: model, t_obs, label, predicted, count.
void write_confusion_csv(const EvalReport& r, const std::string& path);

// ---- stock predictors ----

RankedPredictor make_hold_predictor(int n_beams);

RankedPredictor make_txid_predictor(const models::TxIdModel& model,
                                    const std::vector<TxSequenceStates>& tx_states,
                                    int n_beams);

/// Conv features are cached per frame on first use (they do not depend on the
/// window), so evaluating all T_o values costs one conv pass per frame.
RankedPredictor make_e2e_predictor(const models::E2EModel& model,
                                   const ProcessedFrames& pf);

}  // namespace rbtk::data
