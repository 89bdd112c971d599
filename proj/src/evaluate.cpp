#include "rbtk/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "rbtk/tensor_io.hpp"

namespace rbtk::data {

using ordered_json = nlohmann::ordered_json;

double topk_accuracy(const std::vector<std::vector<int>>& ranked,
                     const std::vector<int>& labels, int k) {
  if (ranked.size() != labels.size())
    throw ConfigError("predictions/labels length mismatch");
  if (ranked.empty()) throw ConfigError("topk_accuracy on empty input");
  size_t hits = 0;
  for (size_t i = 0; i < ranked.size(); ++i) {
    const auto& r = ranked[i];
    const size_t kk = std::min<size_t>(static_cast<size_t>(k), r.size());
    for (size_t j = 0; j < kk; ++j)
      if (r[j] == labels[i]) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(ranked.size());
}

std::vector<long long> confusion_matrix(const std::vector<int>& top1,
                                        const std::vector<int>& labels, int n_beams) {
  if (top1.size() != labels.size()) throw ConfigError("predictions/labels length mismatch");
  std::vector<long long> m(static_cast<size_t>(n_beams) * n_beams, 0);
  for (size_t i = 0; i < top1.size(); ++i) {
    if (labels[i] < 1 || labels[i] > n_beams || top1[i] < 1 || top1[i] > n_beams)
      throw ConfigError("confusion matrix index out of range");
    m[static_cast<size_t>(labels[i] - 1) * n_beams + static_cast<size_t>(top1[i] - 1)] += 1;
  }
  return m;
}

EvalReport evaluate_models(const Dataset& ds,
                           const std::vector<std::pair<std::string, RankedPredictor>>& models,
                           const EvalOptions& opt) {
  std::vector<const SequenceInfo*> test;
  for (const auto& q : ds.sequences)
    if (q.split == Split::test) test.push_back(&q);
  if (test.empty()) throw ConfigError("dataset has no test sequences");

  EvalReport report;
  report.options = opt;
  report.n_test = static_cast<int>(test.size());
  const int k_max = *std::max_element(opt.ks.begin(), opt.ks.end());

  for (const auto& [name, predict] : models) {
    for (int t_obs : opt.t_obs_set) {
      std::vector<std::vector<int>> ranked(test.size());
      std::vector<int> labels(test.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
      for (size_t i = 0; i < test.size(); ++i) {
        ranked[i] = predict(*test[i], t_obs, k_max);
        labels[i] = test[i]->beams[9];
      }
      for (int k : opt.ks)
        report.accuracy[name][t_obs][k] = topk_accuracy(ranked, labels, k);
      if (t_obs == opt.confusion_t_obs) {
        std::vector<int> top1(test.size());
        for (size_t i = 0; i < test.size(); ++i) top1[i] = ranked[i][0];
        report.confusion[name] = confusion_matrix(top1, labels, opt.n_beams);
      }
    }
  }

  for (const auto& [name, acc] : report.accuracy)
    for (const auto& [t, by_k] : acc)
      for (const auto& [k, v] : by_k)
        if (!(v >= 0.0 && v <= 1.0))
          throw NumericError("accuracy out of [0,1] for model " + name);
  return report;
}

void write_report_json(const EvalReport& r, const std::string& path) {
  ordered_json j;
  j["format_version"] = io::kFormatVersion;
  j["n_test"] = r.n_test;
  j["n_beams"] = r.options.n_beams;
  j["t_obs"] = r.options.t_obs_set;
  j["ks"] = r.options.ks;
  j["confusion_t_obs"] = r.options.confusion_t_obs;
  ordered_json jm;
  for (const auto& [name, acc] : r.accuracy) {
    ordered_json ja;
    for (const auto& [t, by_k] : acc) {
      ordered_json jk;
      for (const auto& [k, v] : by_k) jk["k" + std::to_string(k)] = v;
      ja["t_obs_" + std::to_string(t)] = jk;
    }
    ordered_json entry;
    entry["accuracy"] = ja;
    const auto it = r.confusion.find(name);
    if (it != r.confusion.end()) {
      const int B = r.options.n_beams;
      ordered_json rows = ordered_json::array();
      for (int a = 0; a < B; ++a) {
        ordered_json row = ordered_json::array();
        for (int b = 0; b < B; ++b)
          row.push_back(it->second[static_cast<size_t>(a) * B + static_cast<size_t>(b)]);
        rows.push_back(row);
      }
      entry["confusion"] = rows;
    }
    jm[name] = entry;
  }
  j["models"] = jm;
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << j.dump(2) << "\n";
}

void write_accuracy_csv(const EvalReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "model,t_obs,k,accuracy\n";
  char buf[64];
  for (const auto& [name, acc] : r.accuracy)
    for (const auto& [t, by_k] : acc)
      for (const auto& [k, v] : by_k) {
        std::snprintf(buf, sizeof(buf), ",%d,%d,%.17g\n", t, k, v);
        f << name << buf;
      }
}

void write_confusion_csv(const EvalReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "model,t_obs,label,predicted,count\n";
  const int B = r.options.n_beams;
  for (const auto& [name, m] : r.confusion)
    for (int a = 0; a < B; ++a)
      for (int b = 0; b < B; ++b) {
        const long long c = m[static_cast<size_t>(a) * B + static_cast<size_t>(b)];
        if (c != 0)
          f << name << ',' << r.options.confusion_t_obs << ',' << (a + 1) << ','
            << (b + 1) << ',' << c << "\n";
      }
}

// ---- stock predictors ----

RankedPredictor make_hold_predictor(int n_beams) {
  return [n_beams](const SequenceInfo& q, int t_obs, int k_max) {
    return models::beam_hold_predict(q.beams[static_cast<size_t>(10 - t_obs)],
                                     std::min(k_max, 5), n_beams);
  };
}

RankedPredictor make_txid_predictor(const models::TxIdModel& model,
                                    const std::vector<TxSequenceStates>& tx_states,
                                    int n_beams) {
  // index by sequence id for O(1) lookup
  auto by_id = std::make_shared<std::map<int, const TxSequenceStates*>>();
  for (const auto& s : tx_states) (*by_id)[s.sequence_id] = &s;
  const models::TxIdModel* m = &model;
  return [m, by_id, n_beams](const SequenceInfo& q, int t_obs, int k_max) {
    const auto it = by_id->find(q.id);
    if (it == by_id->end())
      throw ConfigError("no tracker states for sequence " + std::to_string(q.id));
    const auto& ts = *it->second;
    if (!ts.valid[static_cast<size_t>(t_obs - 1)]) {
      // the radar chain lost the transmitter: hold the initial beam
      return models::beam_hold_predict(q.beams[static_cast<size_t>(10 - t_obs)],
                                       std::min(k_max, 5), n_beams);
    }
    const auto logits = m->forward(ts.states_by_to[static_cast<size_t>(t_obs - 1)]);
    return models::predict_topk(logits, k_max);
  };
}

RankedPredictor make_e2e_predictor(const models::E2EModel& model,
                                   const ProcessedFrames& pf) {
  // Conv features depend only on (model, frame); computing them up front makes
  // every T_o evaluation an LSTM-only pass and keeps the predictor read-only.
  auto features = std::make_shared<std::vector<std::vector<double>>>(pf.maps.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (size_t frame = 0; frame < pf.maps.size(); ++frame) {
    const auto& mf = pf.maps[frame];
    std::vector<double> map(mf.size());
    for (size_t v = 0; v < mf.size(); ++v) map[v] = mf[v];
    (*features)[frame] = model.conv_features(map.data());
  }
  const models::E2EModel* m = &model;
  return [m, features](const SequenceInfo& q, int t_obs, int k_max) {
    const int F = m->feature_dim();
    std::vector<double> feats(static_cast<size_t>(t_obs) * F);
    for (int i = 0; i < t_obs; ++i) {
      const int frame = q.frame_begin + (10 - t_obs) + i;
      const auto& slot = (*features)[static_cast<size_t>(frame)];
      std::copy(slot.begin(), slot.end(), feats.begin() + static_cast<size_t>(i) * F);
    }
    const auto logits = m->logits_from_features(
        feats.data(), t_obs, q.beams[static_cast<size_t>(10 - t_obs)]);
    return models::predict_topk(logits, k_max);
  };
}

}  // namespace rbtk::data
