#include "rbtk/tracker.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace rbtk::track {

void TrackerConfig::validate() const {
  if (w_r < 0.0 || w_v < 0.0) throw ConfigError("tracker weights must be >= 0");
  if (w_r == 0.0 && w_v == 0.0) throw ConfigError("tracker weights cannot both be zero");
  if (max_coast_frames < 0) throw ConfigError("max_coast_frames must be >= 0");
}

TrackerConfig TrackerConfig::for_radar(const radar::RadarWaveformConfig& rcfg) {
  const auto d = radar::derived_params(rcfg);
  TrackerConfig cfg;
  cfg.w_r = 1.0 / d.range_res_m;
  cfg.w_v = 1.0 / d.vel_res_mps;
  return cfg;
}

int identify_transmitter(const std::vector<dsp::ObjectState>& states,
                         double comm_angle_rad) {
  if (states.empty())
    throw NumericError("identify_transmitter: no detected objects");
  int best = 0;
  double best_d = std::abs(states[0].angle_rad - comm_angle_rad);
  for (size_t k = 1; k < states.size(); ++k) {
    const double dk = std::abs(states[k].angle_rad - comm_angle_rad);
    if (dk < best_d) {
      best_d = dk;
      best = static_cast<int>(k);
    }
  }
  return best;
}

namespace {
void push_history(TrackState& st, const dsp::ObjectState& s) {
  st.history.push_back(s);
  if (st.history.size() > 10) st.history.erase(st.history.begin());
}
}  // namespace

TrackState track_step(const TrackState& prev,
                      const std::vector<dsp::ObjectState>& candidates,
                      const TrackerConfig& cfg) {
  cfg.validate();
  TrackState next = prev;
  if (candidates.empty()) {
    next.frames_since_update = prev.frames_since_update + 1;
    if (next.frames_since_update > cfg.max_coast_frames)
      throw NumericError("track lost: coasted past max_coast_frames");
    push_history(next, next.current);  // hold
    return next;
  }
  int best = 0;
  double best_m = cfg.w_r * std::abs(candidates[0].range_m - prev.current.range_m) +
                  cfg.w_v * std::abs(candidates[0].velocity_mps - prev.current.velocity_mps);
  for (size_t k = 1; k < candidates.size(); ++k) {
    const double m = cfg.w_r * std::abs(candidates[k].range_m - prev.current.range_m) +
                     cfg.w_v * std::abs(candidates[k].velocity_mps - prev.current.velocity_mps);
    if (m < best_m) {
      best_m = m;
      best = static_cast<int>(k);
    }
  }
  next.current = candidates[static_cast<size_t>(best)];
  next.frames_since_update = 0;
  push_history(next, next.current);
  return next;
}

std::vector<dsp::ObjectState> run_tracker(
    const std::vector<std::vector<dsp::ObjectState>>& frames, int initial_beam,
    const comm::BeamCodebook& cb, const TrackerConfig& cfg,
    std::vector<uint8_t>* coast_flags) {
  cfg.validate();
  if (frames.empty()) throw ConfigError("run_tracker: no frames");
  const double comm_angle = comm::beam_to_comm_angle(initial_beam, cb);

  std::vector<dsp::ObjectState> out;
  out.reserve(frames.size());
  if (coast_flags) coast_flags->assign(frames.size(), 0);

  TrackState st;
  st.current = frames[0][static_cast<size_t>(identify_transmitter(frames[0], comm_angle))];
  st.frames_since_update = 0;
  push_history(st, st.current);
  out.push_back(st.current);

  for (size_t t = 1; t < frames.size(); ++t) {
    st = track_step(st, frames[t], cfg);
    if (coast_flags && st.frames_since_update > 0) (*coast_flags)[t] = 1;
    out.push_back(st.current);
  }
  return out;
}

void export_track_csv(const std::vector<double>& timestamps,
                      const std::vector<dsp::ObjectState>& track,
                      const std::vector<uint8_t>& coast_flags, std::ostream& os) {
  if (timestamps.size() != track.size() || coast_flags.size() != track.size())
    throw ConfigError("track CSV export length mismatch");
  os << "t,range_m,velocity_mps,angle_rad,coast_flag\n";
  char buf[160];
  for (size_t k = 0; k < track.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%d\n", timestamps[k],
                  track[k].range_m, track[k].velocity_mps, track[k].angle_rad,
                  static_cast<int>(coast_flags[k]));
    os << buf;
  }
}

}  // namespace rbtk::track
