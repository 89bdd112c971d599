// rbtk: batch pipeline driver (simulate -> make-dataset -> train -> eval).
// stdout carries machine-readable JSON only; progress text goes to stderr.
// Exit codes: 0 ok, 1 configuration, 2 I/O, 3 numeric failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "rbtk/dataset.hpp"
#include "rbtk/evaluate.hpp"
#include "rbtk/models.hpp"
#include "rbtk/tensor_io.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace rbtk;

namespace {

// One writer per output directory.
class DirLock {
 public:
  explicit DirLock(const std::string& dir) : path_(dir + "/.rbtk.lock") {
    fs::create_directories(dir);
    if (fs::exists(path_))
      throw IoError("output directory is locked by another command: " + dir);
    std::ofstream f(path_);
    if (!f) throw IoError("cannot create lock file in " + dir);
    f << "locked\n";
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
};

void apply_thread_env() {
#ifdef _OPENMP
  if (const char* v = std::getenv("RBTK_THREADS")) {
    const int n = std::atoi(v);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
}

void write_manifest(const std::string& dir, ordered_json manifest) {
  std::ofstream f(dir + "/manifest.json");
  if (!f) throw IoError("cannot write manifest.json in " + dir);
  f << manifest.dump(2) << "\n";
}

std::vector<int> parse_t_obs(const std::string& s) {
  std::vector<int> out;
  const auto range_pos = s.find("..");
  if (range_pos != std::string::npos) {
    const int lo = std::stoi(s.substr(0, range_pos));
    const int hi = std::stoi(s.substr(range_pos + 2));
    if (lo < 1 || hi > 10 || lo > hi) throw ConfigError("--t-obs range must be within 1..10");
    for (int t = lo; t <= hi; ++t) out.push_back(t);
    return out;
  }
  size_t pos = 0;
  while (pos < s.size()) {
    size_t comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    const int t = std::stoi(s.substr(pos, comma - pos));
    if (t < 1 || t > 10) throw ConfigError("--t-obs entries must be within 1..10");
    out.push_back(t);
    pos = comma + 1;
  }
  if (out.empty()) throw ConfigError("--t-obs parsed to an empty set");
  return out;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir,
                 int64_t seed_override) {
  if (!fs::exists(scenario_path))
    throw ConfigError("scenario config file not found: " + scenario_path);
  auto cfg = data::simulation_config_from_json_file(scenario_path);
  if (seed_override >= 0) cfg.scenario.seed = static_cast<uint64_t>(seed_override);
  DirLock lock(out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const auto beams = data::simulate_scene(cfg, out_dir);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  // simulate_scene wrote the manifest; extend it with run metadata
  std::ifstream mf(out_dir + "/manifest.json");
  ordered_json manifest;
  mf >> manifest;
  mf.close();
  manifest["input_hash"] = io::to_hex(io::hash_file(scenario_path));
  manifest["wall_clock_s"] = secs;
  write_manifest(out_dir, manifest);

  std::cout << ordered_json{{"command", "simulate"},
                            {"out", out_dir},
                            {"n_frames", beams.size()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_make_dataset(const std::vector<std::string>& in_dirs, const std::string& out_dir,
                     bool filter_changing, double ratio) {
  for (const auto& d : in_dirs)
    if (!fs::exists(d + "/manifest.json"))
      throw ConfigError("scene dir missing manifest.json: " + d);
  DirLock lock(out_dir);
  data::MakeDatasetOptions opt;
  opt.filter_changing = filter_changing;
  opt.train_ratio = ratio;
  const auto t0 = std::chrono::steady_clock::now();
  const auto sum = data::make_dataset(in_dirs, out_dir, opt);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (sum.n_sequences == 0)
    std::cerr << "warning: no sequences kept (static scene with --filter-changing?)\n";

  std::ifstream mf(out_dir + "/manifest.json");
  ordered_json manifest;
  mf >> manifest;
  mf.close();
  manifest["wall_clock_s"] = secs;
  write_manifest(out_dir, manifest);

  std::cout << ordered_json{{"command", "make-dataset"},
                            {"out", out_dir},
                            {"sequences", sum.n_sequences},
                            {"train", sum.n_train},
                            {"test", sum.n_test},
                            {"dropped", sum.n_dropped}}
                   .dump()
            << "\n";
  return 0;
}

struct TrainOverrides {
  int epochs = -1;
  int batch = -1;
  double lr = -1.0;
  double gamma = -1.0;
  int decay_every = -1;
  int64_t seed = -1;
};

int cmd_train(const std::string& dataset_dir, const std::string& kind,
              const std::string& out_dir, const TrainOverrides& ov) {
  if (!fs::exists(dataset_dir + "/manifest.json"))
    throw ConfigError("dataset dir missing manifest.json: " + dataset_dir);
  if (kind != "txid" && kind != "e2e")
    throw ConfigError("--model must be txid or e2e");
  DirLock lock(out_dir);
  const auto t0 = std::chrono::steady_clock::now();

  const auto ds = data::load_dataset(dataset_dir);
  std::cerr << "processing " << ds.summary.n_frames << " frames\n";
  const auto pf = data::process_frames(ds, dsp::CfarConfig{}, data::pipeline_dbscan_config());

  nn::TrainConfig tc;
  if (kind == "txid") {
    tc = {80, 32, 0.01, 0.01, 20, 1};
  } else {
    tc = {80, 32, 0.001, 0.1, 40, 1};
  }
  if (ov.epochs > 0) tc.epochs = ov.epochs;
  if (ov.batch > 0) tc.batch_size = ov.batch;
  if (ov.lr > 0) tc.lr = ov.lr;
  if (ov.gamma > 0) tc.decay_gamma = ov.gamma;
  if (ov.decay_every > 0) tc.decay_every_epochs = ov.decay_every;
  if (ov.seed >= 0) tc.seed = static_cast<uint64_t>(ov.seed);

  models::TrainResult result;
  if (kind == "txid") {
    const auto cb = comm::build_codebook(ds.array, ds.codebook_size);
    const auto tcfg = track::TrackerConfig::for_radar(ds.radar);
    const auto tx_states = data::build_tx_states(ds, pf, cb, tcfg);
    std::vector<models::TxTrainSample> samples;
    int skipped = 0;
    for (size_t i = 0; i < ds.sequences.size(); ++i) {
      const auto& q = ds.sequences[i];
      if (q.split != data::Split::train) continue;
      const auto& ts = tx_states[i];
      models::TxTrainSample s;
      s.states_by_to = ts.states_by_to;
      s.valid = ts.valid;
      s.label = q.beams[9];
      if (std::find(s.valid.begin(), s.valid.end(), 1) == s.valid.end()) {
        ++skipped;
        continue;
      }
      samples.push_back(std::move(s));
    }
    if (skipped > 0)
      std::cerr << "warning: dropped " << skipped << " train sequences with lost tracks\n";
    models::TxIdModelConfig mc;
    mc.n_beams = ds.codebook_size;
    models::TxIdModel model;
    model.init(mc, mix_seed(tc.seed, 0x1D));
    result = models::train_txid(model, samples, tc);
    models::save_txid_checkpoint(out_dir, model, tc);
  } else {
    models::E2EDataView view;
    view.map_h = pf.map_h;
    view.map_w = pf.map_w;
    view.maps = &pf.maps;
    for (const auto& q : ds.sequences) {
      if (q.split != data::Split::train) continue;
      models::E2ESampleView s;
      for (int i = 0; i < 10; ++i) {
        s.frames[static_cast<size_t>(i)] = q.frame_begin + i;
        s.beams[static_cast<size_t>(i)] = q.beams[static_cast<size_t>(i)];
      }
      view.samples.push_back(s);
    }
    models::E2EModelConfig mc;
    mc.map_h = pf.map_h;
    mc.map_w = pf.map_w;
    mc.n_beams = ds.codebook_size;
    models::E2EModel model;
    model.init(mc, mix_seed(tc.seed, 0xE2E));
    result = models::train_e2e(model, view, tc);
    models::save_e2e_checkpoint(out_dir, model, tc);
  }

  {
    std::ofstream f(out_dir + "/loss.csv");
    if (!f) throw IoError("cannot write loss.csv in " + out_dir);
    models::export_loss_csv(result, f);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ordered_json manifest;
  manifest["format_version"] = io::kFormatVersion;
  manifest["command"] = "train";
  manifest["model"] = kind;
  manifest["dataset"] = dataset_dir;
  manifest["train_config"] = ordered_json{{"epochs", tc.epochs},
                                          {"batch_size", tc.batch_size},
                                          {"lr", tc.lr},
                                          {"decay_gamma", tc.decay_gamma},
                                          {"decay_every_epochs", tc.decay_every_epochs},
                                          {"seed", tc.seed}};
  manifest["artifacts"] = ordered_json{
      {"checkpoint.bin", io::to_hex(io::hash_file(out_dir + "/checkpoint.bin"))},
      {"checkpoint.json", io::to_hex(io::hash_file(out_dir + "/checkpoint.json"))},
      {"loss.csv", io::to_hex(io::hash_file(out_dir + "/loss.csv"))}};
  manifest["wall_clock_s"] = secs;
  write_manifest(out_dir, manifest);

  std::cout << ordered_json{{"command", "train"},
                            {"out", out_dir},
                            {"model", kind},
                            {"final_loss", result.curve.back().mean_loss}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_eval(const std::string& dataset_dir, const std::vector<std::string>& model_dirs,
             bool baseline_hold, const std::string& t_obs_spec, const std::string& out_dir) {
  if (!fs::exists(dataset_dir + "/manifest.json"))
    throw ConfigError("dataset dir missing manifest.json: " + dataset_dir);
  for (const auto& d : model_dirs)
    if (!fs::exists(d + "/checkpoint.json"))
      throw ConfigError("missing checkpoint in model dir: " + d);
  DirLock lock(out_dir);
  const auto t0 = std::chrono::steady_clock::now();

  const auto ds = data::load_dataset(dataset_dir);
  const auto pf = data::process_frames(ds, dsp::CfarConfig{}, data::pipeline_dbscan_config());

  data::EvalOptions opt;
  opt.t_obs_set = parse_t_obs(t_obs_spec);
  opt.n_beams = ds.codebook_size;
  opt.confusion_t_obs =
      std::find(opt.t_obs_set.begin(), opt.t_obs_set.end(), 5) != opt.t_obs_set.end()
          ? 5
          : opt.t_obs_set.back();

  // keep loaded models and tracker states alive for the predictors
  std::vector<std::shared_ptr<models::LoadedModel>> loaded;
  auto tx_states = std::make_shared<std::vector<data::TxSequenceStates>>();
  std::vector<std::pair<std::string, data::RankedPredictor>> predictors;
  if (baseline_hold)
    predictors.emplace_back("hold", data::make_hold_predictor(ds.codebook_size));
  for (const auto& d : model_dirs) {
    auto lm = std::make_shared<models::LoadedModel>(models::load_checkpoint(d));
    loaded.push_back(lm);
    if (lm->txid) {
      if (tx_states->empty()) {
        const auto cb = comm::build_codebook(ds.array, ds.codebook_size);
        *tx_states = data::build_tx_states(ds, pf, cb, track::TrackerConfig::for_radar(ds.radar));
      }
      auto pred = data::make_txid_predictor(*lm->txid, *tx_states, ds.codebook_size);
      predictors.emplace_back(
          "txid", [lm, tx_states, pred](const data::SequenceInfo& q, int t, int k) {
            return pred(q, t, k);
          });
    } else {
      predictors.emplace_back("e2e", data::make_e2e_predictor(*lm->e2e, pf));
    }
  }
  if (predictors.empty()) throw ConfigError("nothing to evaluate: no models, no baseline");

  const auto report = data::evaluate_models(ds, predictors, opt);
  data::write_report_json(report, out_dir + "/report.json");
  data::write_accuracy_csv(report, out_dir + "/accuracy_vs_to.csv");
  data::write_confusion_csv(report, out_dir + "/confusion.csv");
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ordered_json manifest;
  manifest["format_version"] = io::kFormatVersion;
  manifest["command"] = "eval";
  manifest["dataset"] = dataset_dir;
  manifest["models"] = model_dirs;
  manifest["baseline_hold"] = baseline_hold;
  manifest["t_obs"] = opt.t_obs_set;
  manifest["artifacts"] = ordered_json{
      {"report.json", io::to_hex(io::hash_file(out_dir + "/report.json"))},
      {"accuracy_vs_to.csv", io::to_hex(io::hash_file(out_dir + "/accuracy_vs_to.csv"))},
      {"confusion.csv", io::to_hex(io::hash_file(out_dir + "/confusion.csv"))}};
  manifest["wall_clock_s"] = secs;
  write_manifest(out_dir, manifest);

  std::cout << ordered_json{{"command", "eval"},
                            {"out", out_dir},
                            {"n_test", report.n_test}}
                   .dump()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();
  CLI::App app{"radar-aided V2V beam tracking workbench"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "synthesize one labeled scene");
  std::string sim_scenario, sim_out;
  int64_t sim_seed = -1;
  sim->add_option("--scenario", sim_scenario, "scenario config JSON")->required();
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--seed", sim_seed, "override the config seed");

  // make-dataset
  auto* mkd = app.add_subcommand("make-dataset", "window + label + split scenes");
  std::vector<std::string> mkd_in;
  std::string mkd_out;
  bool mkd_filter = false;
  double mkd_ratio = 0.7;
  mkd->add_option("--in", mkd_in, "scene directories")->required()->expected(-1);
  mkd->add_option("--out", mkd_out, "output directory")->required();
  mkd->add_flag("--filter-changing", mkd_filter, "keep only windows with changing beams");
  mkd->add_option("--split", mkd_ratio, "train fraction (default 0.7)");

  // train
  auto* trn = app.add_subcommand("train", "train a beam predictor");
  std::string trn_dataset, trn_model, trn_out;
  TrainOverrides ov;
  trn->add_option("--dataset", trn_dataset, "dataset directory")->required();
  trn->add_option("--model", trn_model, "txid or e2e")->required();
  trn->add_option("--out", trn_out, "output directory")->required();
  trn->add_option("--epochs", ov.epochs, "override epochs");
  trn->add_option("--batch", ov.batch, "override batch size");
  trn->add_option("--lr", ov.lr, "override learning rate");
  trn->add_option("--gamma", ov.gamma, "override decay factor");
  trn->add_option("--decay-every", ov.decay_every, "override decay period (epochs)");
  trn->add_option("--seed", ov.seed, "override training seed");

  // eval
  auto* evl = app.add_subcommand("eval", "evaluate predictors on the test split");
  std::string evl_dataset, evl_tobs = "1..10", evl_out, evl_baseline;
  std::vector<std::string> evl_models;
  evl->add_option("--dataset", evl_dataset, "dataset directory")->required();
  evl->add_option("--models", evl_models, "trained model directories")->expected(-1);
  evl->add_option("--baseline", evl_baseline, "'hold' to include the beam-hold baseline");
  evl->add_option("--t-obs", evl_tobs, "observation lengths, e.g. 1..10 or 1,5,10");
  evl->add_option("--out", evl_out, "output directory")->required();

  try {
    app.parse(argc, argv);
    if (sim->parsed()) return cmd_simulate(sim_scenario, sim_out, sim_seed);
    if (mkd->parsed()) return cmd_make_dataset(mkd_in, mkd_out, mkd_filter, mkd_ratio);
    if (trn->parsed()) return cmd_train(trn_dataset, trn_model, trn_out, ov);
    if (evl->parsed()) {
      if (!evl_baseline.empty() && evl_baseline != "hold")
        throw ConfigError("unknown baseline: " + evl_baseline);
      return cmd_eval(evl_dataset, evl_models, evl_baseline == "hold", evl_tobs, evl_out);
    }
    return 1;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
