#pragma once

#include <vector>

#include "rbtk/comm.hpp"
#include "rbtk/common.hpp"
#include "rbtk/radar_dsp.hpp"

namespace rbtk::track {

struct TrackerConfig {
  double w_r = 0.0;  // 1/m
  double w_v = 0.0;  // s/m
  int max_coast_frames = 2;

  void validate() const;

  /// Default weights normalize range/velocity differences to bin units.
  static TrackerConfig for_radar(const radar::RadarWaveformConfig& cfg);
};

struct TrackState {
  dsp::ObjectState current;
  int frames_since_update = 0;
  std::vector<dsp::ObjectState> history;  // most recent last, capped at 10
};

/// argmin_k |angle_k - comm_angle|; ties to the lowest index. Throws
/// NumericError when no objects were detected.
int identify_transmitter(const std::vector<dsp::ObjectState>& states,
                         double comm_angle_rad);

/// Nearest-state association with metric w_r|dr| + w_v|dv|. Empty candidate
/// lists coast (hold the state); exceeding max_coast_frames throws.
TrackState track_step(const TrackState& prev,
                      const std::vector<dsp::ObjectState>& candidates,
                      const TrackerConfig& cfg);

/// Identification on the first frame via the initial beam's steering angle,
/// then per-frame association. Returns one state per frame; coast_flags (if
/// non-null) records which outputs are held states.
std::vector<dsp::ObjectState> run_tracker(
    const std::vector<std::vector<dsp::ObjectState>>& frames, int initial_beam,
    const comm::BeamCodebook& cb, const TrackerConfig& cfg,
    std::vector<uint8_t>* coast_flags = nullptr);

/// CSV: t, range_m, velocity_mps, angle_rad, coast_flag.
void export_track_csv(const std::vector<double>& timestamps,
                      const std::vector<dsp::ObjectState>& track,
                      const std::vector<uint8_t>& coast_flags, std::ostream& os);

}  // namespace rbtk::track
