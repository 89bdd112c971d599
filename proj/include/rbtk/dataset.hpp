#pragma once

#include <array>
#include <string>
#include <vector>

#include "rbtk/comm.hpp"
#include "rbtk/common.hpp"
#include "rbtk/models.hpp"
#include "rbtk/radar_dsp.hpp"
#include "rbtk/radar_synth.hpp"
#include "rbtk/scenario.hpp"
#include "rbtk/tracker.hpp"

namespace rbtk::data {

/// Everything one simulated scene needs: kinematics plus the radar and
/// communication hardware description. Parsed from a single JSON document.
struct SimulationConfig {
  scenario::ScenarioConfig scenario;
  radar::RadarWaveformConfig radar;
  comm::ArrayConfig array;
  int codebook_size = 64;
};

SimulationConfig simulation_config_from_json_file(const std::string& path);
SimulationConfig simulation_config_from_json_text(const std::string& text);
std::string simulation_config_to_json_text(const SimulationConfig& cfg);

struct LabeledFrame {
  radar::RadarFrameCube cube;
  int beam = 0;  // 1-based optimal beam of the transmitter's channel
};

/// One timestep: synthesizes the frame cube from every scene object (noise
/// stream derived from (scenario seed, timestep)) and labels it with the
/// exhaustive-search optimal beam of the transmitter's channel.
LabeledFrame label_frame(const scenario::SceneTimeline& tl, int timestep,
                         const radar::RadarWaveformConfig& rcfg,
                         const comm::ArrayConfig& acfg, const comm::BeamCodebook& cb,
                         uint64_t scenario_seed);

/// Writes manifest.json, timeline.csv, frames.bin (one RBTK record per frame)
/// and labels.csv (t, beam) into out_dir. Returns the per-frame beams.
std::vector<int> simulate_scene(const SimulationConfig& cfg, const std::string& out_dir);

enum class Split : int { train = 0, test = 1, dropped = 2 };

struct SequenceInfo {
  int id = 0;
  int frame_begin = 0;           // global frame index of the first window frame
  std::array<int, 10> beams{};   // per-frame optimal beams, 1-based
  double t_begin = 0.0, t_end = 0.0;
  Split split = Split::train;
};

struct MakeDatasetOptions {
  double train_ratio = 0.7;
  bool filter_changing = true;
  int window = 10;
  int stride = 1;
};

struct DatasetSummary {
  int n_frames = 0;
  int n_sequences = 0;  // kept (train + test)
  int n_train = 0;
  int n_test = 0;
  int n_dropped = 0;  // boundary-straddling windows
  double boundary_time_s = 0.0;
};

/// Sliding windows over one scene's labeled frames; keep_changing drops
/// windows whose label never changes. frame offsets/time offsets are applied
/// by the caller.
std::vector<SequenceInfo> make_sequences(const std::vector<int>& beams,
                                         const std::vector<double>& times,
                                         int frame_offset, int window, int stride,
                                         bool keep_changing_only);

struct SplitResult {
  double boundary_time_s = 0.0;
  int n_train = 0;
  int n_test = 0;
  int n_dropped = 0;
};

/// Single time boundary; train windows end at or before it, test windows
/// start strictly after it, straddlers are dropped. The boundary is chosen so
/// the kept train fraction is as close to `ratio` as possible.
SplitResult split_by_time(std::vector<SequenceInfo>& seqs, double ratio);

DatasetSummary make_dataset(const std::vector<std::string>& scene_dirs,
                            const std::string& out_dir, const MakeDatasetOptions& opt);

struct Dataset {
  std::string dir;
  radar::RadarWaveformConfig radar;
  comm::ArrayConfig array;
  int codebook_size = 64;
  int window = 10;
  std::vector<double> frame_times;  // global time per frame
  std::vector<int> frame_beams;
  std::vector<SequenceInfo> sequences;
  DatasetSummary summary;
};

Dataset load_dataset(const std::string& dir);

/// Detection-chain settings used by the pipeline. Point scatterers sitting
/// near a bin center concentrate on a single map cell, so the pipeline keeps
/// single-cell clusters (the local-peak gate in estimate_states already
/// rejects sidelobe artifacts); the DbscanConfig default of min_points = 3
/// suits extended targets instead.
inline dsp::DbscanConfig pipeline_dbscan_config() {
  dsp::DbscanConfig c;
  c.min_points = 1;
  return c;
}

/// Per-frame products of the classical chain, computed once per unique frame:
/// the preprocessed range-Doppler map (the E2E model input) and the detected
/// object states (the tracker input).
struct ProcessedFrames {
  int map_h = 0;
  int map_w = 0;
  std::vector<std::vector<float>> maps;               // log-compressed, standardized
  std::vector<std::vector<dsp::ObjectState>> states;  // per frame
};

ProcessedFrames process_frames(const Dataset& ds, const dsp::CfarConfig& cfar,
                               const dsp::DbscanConfig& dbscan, int n_angle_bins = 64);

/// Tracker outputs for every sequence at every observation length; feeds both
/// TxId training and evaluation.
struct TxSequenceStates {
  int sequence_id = 0;
  std::array<nn::Tensor, 10> states_by_to;
  std::array<uint8_t, 10> valid{};
};

std::vector<TxSequenceStates> build_tx_states(const Dataset& ds,
                                              const ProcessedFrames& pf,
                                              const comm::BeamCodebook& cb,
                                              const track::TrackerConfig& tcfg);

}  // namespace rbtk::data
