#include "rbtk/scenario.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace rbtk::scenario {

Preset preset_from_string(const std::string& s) {
  if (s == "following") return Preset::following;
  if (s == "passing") return Preset::passing;
  if (s == "lane_change") return Preset::lane_change;
  if (s == "turn") return Preset::turn;
  throw ConfigError("unknown scenario preset: " + s);
}

std::string to_string(Preset p) {
  switch (p) {
    case Preset::following: return "following";
    case Preset::passing: return "passing";
    case Preset::lane_change: return "lane_change";
    case Preset::turn: return "turn";
  }
  return "following";
}

void ScenarioConfig::validate() const {
  if (!(duration_s > 0.0)) throw ConfigError("duration_s must be positive");
  if (!(sample_rate_hz > 0.0)) throw ConfigError("sample_rate_hz must be positive");
  if (n_clutter < 0) throw ConfigError("n_clutter must be non-negative");
  switch (preset) {
    case Preset::following:
      if (!(speed.gap_m > 0.0)) throw ConfigError("following gap_m must be positive");
      break;
    case Preset::passing:
      if (!(speed.cpa_gap_m > 0.0)) throw ConfigError("passing cpa_gap_m must be positive");
      if (!(speed.lateral_speed_mps > 0.0))
        throw ConfigError("passing lateral_speed_mps must be positive");
      break;
    case Preset::lane_change:
      if (!(speed.lane_gap_m > 0.0)) throw ConfigError("lane_change lane_gap_m must be positive");
      if (!(speed.start_offset_m > 0.0) || speed.end_offset_m < 0.0 ||
          speed.end_offset_m >= speed.start_offset_m)
        throw ConfigError("lane_change offsets must satisfy start > end >= 0");
      break;
    case Preset::turn:
      if (!(speed.turn_range_m > 0.0)) throw ConfigError("turn range_m must be positive");
      break;
  }
}

namespace {

// +1 or -1, from config or (deterministically) from the seed.
int resolve_direction(const ScenarioConfig& cfg) {
  if (cfg.speed.direction > 0) return 1;
  if (cfg.speed.direction < 0) return -1;
  return (splitmix64(cfg.seed ^ 0x5151caf1ULL) & 1) ? 1 : -1;
}

struct CartesianState {
  double x, y, vx, vy;
};

ObjectTruth to_polar(const CartesianState& s, double rcs) {
  ObjectTruth o;
  o.range_m = std::hypot(s.x, s.y);
  if (o.range_m <= 0.0) throw NumericError("degenerate geometry: object at zero range");
  o.radial_velocity_mps = (s.x * s.vx + s.y * s.vy) / o.range_m;
  o.azimuth_rad = std::atan2(s.y, s.x);
  o.rcs_gain = rcs;
  return o;
}

// C2 ramp for the lane-change lateral motion; range stays twice
// differentiable so finite differences of range converge to the reported
// radial velocity everywhere.
double smoothstep(double u) { return u * u * u * (u * (6.0 * u - 15.0) + 10.0); }
double smoothstep_deriv(double u) {
  const double w = u * (1.0 - u);
  return 30.0 * w * w;
}

}  // namespace

ObjectTruth transmitter_state_at(const ScenarioConfig& cfg, double t) {
  cfg.validate();
  const SpeedParams& sp = cfg.speed;
  switch (cfg.preset) {
    case Preset::following: {
      ObjectTruth o;
      o.range_m = sp.gap_m;
      o.radial_velocity_mps = 0.0;
      o.azimuth_rad = 0.0;
      return o;
    }
    case Preset::passing: {
      const int dir = resolve_direction(cfg);
      const double tc = 0.5 * cfg.duration_s;
      CartesianState s;
      s.x = sp.cpa_gap_m + sp.along_speed_mps * (t - tc);
      s.y = dir * sp.lateral_speed_mps * (t - tc);
      s.vx = sp.along_speed_mps;
      s.vy = dir * sp.lateral_speed_mps;
      return to_polar(s, 1.0);
    }
    case Preset::lane_change: {
      const int dir = resolve_direction(cfg);
      const double t1 = 0.2 * cfg.duration_s;
      const double t2 = 0.8 * cfg.duration_s;
      const double u = std::clamp((t - t1) / (t2 - t1), 0.0, 1.0);
      const double span = sp.end_offset_m - sp.start_offset_m;
      CartesianState s;
      s.x = sp.lane_gap_m + sp.closing_speed_mps * t;
      s.y = dir * (sp.start_offset_m + span * smoothstep(u));
      s.vx = sp.closing_speed_mps;
      s.vy = (u > 0.0 && u < 1.0)
                 ? dir * span * smoothstep_deriv(u) / (t2 - t1)
                 : 0.0;
      return to_polar(s, 1.0);
    }
    case Preset::turn: {
      const int dir = resolve_direction(cfg);
      ObjectTruth o;
      o.range_m = sp.turn_range_m + sp.range_rate_mps * t;
      o.radial_velocity_mps = sp.range_rate_mps;
      o.azimuth_rad = dir * (sp.start_azimuth_rad + sp.turn_rate_rps * t);
      if (o.range_m <= 0.0) throw ConfigError("turn range decays through zero");
      return o;
    }
  }
  throw ConfigError("unhandled preset");
}

ObjectTruth clutter_state_at(const ScenarioConfig& cfg, int clutter_index, double t) {
  // Constant-velocity lane movers; parameters are a pure function of
  // (seed, clutter_index) so any timestep can be evaluated independently.
  Rng rng(mix_seed(cfg.seed, 0xC1077Eu, static_cast<uint64_t>(clutter_index)));
  const double side = (rng.next_u64() & 1) ? 1.0 : -1.0;
  const double y = side * rng.uniform(2.0, 8.0);
  const double x0 = rng.uniform(6.0, 40.0);
  double vx = rng.uniform(-3.0, 3.0);
  const double rcs = rng.uniform(0.5, 2.0);
  // keep the mover inside x in [3, 46] for the whole scene
  vx = std::clamp(vx, (3.0 - x0) / cfg.duration_s, (46.0 - x0) / cfg.duration_s);
  CartesianState s{x0 + vx * t, y, vx, 0.0};
  return to_polar(s, rcs);
}

SceneTimeline generate_timeline(const ScenarioConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(std::llround(cfg.duration_s * cfg.sample_rate_hz));
  if (n < 1) throw ConfigError("scene produces no samples");
  const double dt = 1.0 / cfg.sample_rate_hz;
  const double sector_limit = (cfg.preset == Preset::turn) ? kPi / 2.0 : kPi / 4.0;

  SceneTimeline tl;
  tl.timestamps_s.resize(static_cast<size_t>(n));
  tl.transmitter.resize(static_cast<size_t>(n));
  tl.clutter.resize(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double t = k * dt;
    tl.timestamps_s[static_cast<size_t>(k)] = t;
    ObjectTruth tx = transmitter_state_at(cfg, t);
    if (std::abs(tx.azimuth_rad) > sector_limit + 1e-12)
      throw ConfigError("preset parameters push the transmitter out of its sector at t=" +
                        std::to_string(t));
    if (tx.range_m >= kDefaultMaxRange)
      throw ConfigError("transmitter beyond unambiguous range at t=" + std::to_string(t));
    if (std::abs(tx.radial_velocity_mps) >= kDefaultMaxSpeed)
      throw ConfigError("transmitter beyond unambiguous velocity at t=" + std::to_string(t));
    tl.transmitter[static_cast<size_t>(k)] = tx;
    auto& cl = tl.clutter[static_cast<size_t>(k)];
    cl.reserve(static_cast<size_t>(cfg.n_clutter));
    for (int i = 0; i < cfg.n_clutter; ++i)
      cl.push_back(clutter_state_at(cfg, i, t));
  }
  return tl;
}

std::vector<comm::ChannelPath> truth_to_channel_paths(const ObjectTruth& obj,
                                                      uint64_t seed,
                                                      bool ground_reflection) {
  if (!(obj.range_m > 0.0))
    throw NumericError("degenerate geometry: zero-range object has no channel path");
  const uint64_t state_seed =
      mix_seed(seed, std::bit_cast<uint64_t>(obj.range_m),
               std::bit_cast<uint64_t>(obj.azimuth_rad));
  std::vector<comm::ChannelPath> paths;
  {
    Rng rng(state_seed);
    comm::ChannelPath los;
    los.gain = std::polar(1.0 / obj.range_m, rng.uniform(0.0, 2.0 * kPi));
    los.azimuth_rad = obj.azimuth_rad;
    los.elevation_rad = 0.0;
    paths.push_back(los);
  }
  if (ground_reflection) {
    Rng rng(mix_seed(state_seed, 0x6B0u));
    comm::ChannelPath bounce;
    bounce.gain = std::polar(0.3 / obj.range_m, rng.uniform(0.0, 2.0 * kPi));
    bounce.azimuth_rad = obj.azimuth_rad;
    bounce.elevation_rad = 0.0;
    paths.push_back(bounce);
  }
  return paths;
}

void export_timeline_csv(const SceneTimeline& tl, std::ostream& os) {
  os << "t,object,range_m,velocity_mps,azimuth_rad,rcs\n";
  char buf[160];
  for (size_t k = 0; k < tl.timestamps_s.size(); ++k) {
    const auto row = [&](int id, const ObjectTruth& o) {
      std::snprintf(buf, sizeof(buf), "%.17g,%d,%.17g,%.17g,%.17g,%.17g\n",
                    tl.timestamps_s[k], id, o.range_m, o.radial_velocity_mps,
                    o.azimuth_rad, o.rcs_gain);
      os << buf;
    };
    row(0, tl.transmitter[k]);
    for (size_t i = 0; i < tl.clutter[k].size(); ++i)
      row(static_cast<int>(i) + 1, tl.clutter[k][i]);
  }
}

}  // namespace rbtk::scenario
