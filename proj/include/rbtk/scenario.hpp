#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rbtk/comm.hpp"
#include "rbtk/common.hpp"

namespace rbtk::scenario {

// Unambiguous limits of the default radar waveform; scenario validation keeps
// every generated object inside them (checked against radar::derived_params
// in the tests).
inline constexpr double kDefaultMaxRange = 49.96;
inline constexpr double kDefaultMaxSpeed = 14.97;

enum class Preset { following, passing, lane_change, turn };

Preset preset_from_string(const std::string& s);
std::string to_string(Preset p);

/// Preset-specific speeds and lane offsets. Irrelevant fields are ignored by
/// presets that do not use them. direction: +1 / -1 mirror the geometry,
/// 0 picks a side from the scenario seed.
struct SpeedParams {
  // following
  double gap_m = 10.0;
  // passing: relative straight-line track crossing boresight at mid-duration
  double cpa_gap_m = 18.0;
  double along_speed_mps = -0.6;
  double lateral_speed_mps = 2.8;
  // lane_change (cut-in toward the receiver's lane)
  double lane_gap_m = 15.0;
  double closing_speed_mps = -0.5;
  double start_offset_m = 3.6;
  double end_offset_m = 0.3;
  // turn (sweep at slowly drifting range)
  double turn_range_m = 12.0;
  double range_rate_mps = 0.3;
  double start_azimuth_rad = -0.5236;
  double turn_rate_rps = 0.10;
  int direction = 0;
};

struct ScenarioConfig {
  Preset preset = Preset::following;
  double duration_s = 10.0;
  double sample_rate_hz = 10.0;
  int n_clutter = 3;
  uint64_t seed = 1;
  SpeedParams speed;

  void validate() const;
};

/// Polar state of one point object relative to the serving array boresight.
/// Positive radial velocity = receding; azimuth positive toward +y (left).
struct ObjectTruth {
  double range_m = 0.0;
  double radial_velocity_mps = 0.0;
  double azimuth_rad = 0.0;
  double rcs_gain = 1.0;
};

struct SceneTimeline {
  std::vector<double> timestamps_s;
  std::vector<ObjectTruth> transmitter;
  std::vector<std::vector<ObjectTruth>> clutter;  // per timestep, n_clutter entries
};

/// Continuous analytic evaluators; generate_timeline samples these. The
/// reported radial velocity is the exact derivative of range.
ObjectTruth transmitter_state_at(const ScenarioConfig& cfg, double t);
ObjectTruth clutter_state_at(const ScenarioConfig& cfg, int clutter_index, double t);

SceneTimeline generate_timeline(const ScenarioConfig& cfg);

/// LOS path with |gain| = 1/range and a phase drawn deterministically from
/// (seed, state). Optional flat-ground second bounce at 0.3x amplitude.
std::vector<comm::ChannelPath> truth_to_channel_paths(const ObjectTruth& obj,
                                                      uint64_t seed,
                                                      bool ground_reflection = false);

/// CSV: t, object (0 = transmitter, 1.. = clutter), range, velocity, azimuth, rcs.
void export_timeline_csv(const SceneTimeline& tl, std::ostream& os);

}  // namespace rbtk::scenario
