#include "rbtk/radar_synth.hpp"

#include <cmath>

namespace rbtk::radar {

void RadarWaveformConfig::validate() const {
  if (!(f0_hz > 0.0) || !(slope_hz_per_s > 0.0) || !(sample_rate_hz > 0.0))
    throw ConfigError("radar frequencies/slopes must be positive");
  if (n_samples < 2 || n_chirps < 2 || n_antennas < 1)
    throw ConfigError("radar cube dimensions too small");
  if (!(t_pri_s > 0.0)) throw ConfigError("t_pri_s must be positive");
  const double t_active = n_samples / sample_rate_hz;
  if (t_active > t_pri_s + 1e-15)
    throw ConfigError("active chirp time exceeds the chirp repetition interval");
  if (!(tx_power > 0.0)) throw ConfigError("tx_power must be positive");
  if (noise_var < 0.0) throw ConfigError("noise_var must be non-negative");
}

DerivedParams derived_params(const RadarWaveformConfig& cfg) {
  cfg.validate();
  DerivedParams d;
  d.t_active_s = cfg.n_samples / cfg.sample_rate_hz;
  d.bandwidth_hz = cfg.slope_hz_per_s * d.t_active_s;
  d.frame_time_s = cfg.n_chirps * cfg.t_pri_s;
  d.wavelength_m = kSpeedOfLight / cfg.f0_hz;
  d.range_res_m = kSpeedOfLight / (2.0 * d.bandwidth_hz);
  d.max_range_m = cfg.n_samples * d.range_res_m;  // quadrature IF sampling
  d.max_vel_mps = d.wavelength_m / (4.0 * cfg.t_pri_s);
  d.vel_res_mps = 2.0 * d.max_vel_mps / cfg.n_chirps;
  return d;
}

namespace {

void check_unambiguous(const scenario::ObjectTruth& obj, const DerivedParams& d) {
  if (!(obj.range_m > 0.0) || obj.range_m >= d.max_range_m)
    throw NumericError("object range " + std::to_string(obj.range_m) +
                       " m outside unambiguous range (aliasing refused)");
  if (std::abs(obj.radial_velocity_mps) >= d.max_vel_mps)
    throw NumericError("object velocity " + std::to_string(obj.radial_velocity_mps) +
                       " m/s outside unambiguous velocity (aliasing refused)");
  if (!(obj.rcs_gain > 0.0)) throw NumericError("rcs_gain must be positive");
}

// Accumulates one object's chirp into dst[0], dst[stride], ... The tone is a
// geometric phase progression, so one complex multiply per sample.
void accumulate_chirp(cplx* dst, size_t stride, const scenario::ObjectTruth& obj,
                      const RadarWaveformConfig& cfg, int chirp_index,
                      int antenna_index) {
  const double range_c =
      obj.range_m + obj.radial_velocity_mps * (chirp_index * cfg.t_pri_s);
  const double tau = 2.0 * range_c / kSpeedOfLight;
  const double amp =
      std::sqrt(cfg.tx_power * obj.rcs_gain / std::pow(obj.range_m, 4));
  const double ant_phase = kPi * antenna_index * std::sin(obj.azimuth_rad);
  const double phi0 =
      2.0 * kPi * (cfg.f0_hz * tau - 0.5 * cfg.slope_hz_per_s * tau * tau) + ant_phase;
  const double dphi = 2.0 * kPi * cfg.slope_hz_per_s * tau / cfg.sample_rate_hz;
  cplx v = std::polar(amp, phi0);
  const cplx step = std::polar(1.0, dphi);
  for (int n = 0; n < cfg.n_samples; ++n) {
    dst[static_cast<size_t>(n) * stride] += v;
    v *= step;
  }
}

}  // namespace

std::vector<cplx> synth_chirp_if(const scenario::ObjectTruth& obj,
                                 const RadarWaveformConfig& cfg, int chirp_index,
                                 int antenna_index) {
  const DerivedParams d = derived_params(cfg);
  check_unambiguous(obj, d);
  if (chirp_index < 0 || chirp_index >= cfg.n_chirps || antenna_index < 0 ||
      antenna_index >= cfg.n_antennas)
    throw ConfigError("chirp/antenna index out of range");
  std::vector<cplx> out(static_cast<size_t>(cfg.n_samples), cplx{0.0, 0.0});
  accumulate_chirp(out.data(), 1, obj, cfg, chirp_index, antenna_index);
  return out;
}

RadarFrameCube synth_frame(const std::vector<scenario::ObjectTruth>& objects,
                           const RadarWaveformConfig& cfg, uint64_t seed) {
  const DerivedParams d = derived_params(cfg);
  for (const auto& obj : objects) check_unambiguous(obj, d);

  RadarFrameCube cube;
  cube.config = cfg;
  cube.data.assign(static_cast<size_t>(cfg.n_antennas) * cfg.n_samples * cfg.n_chirps,
                   cplx{0.0, 0.0});
  const size_t sample_stride = static_cast<size_t>(cfg.n_chirps);
  for (const auto& obj : objects)
    for (int a = 0; a < cfg.n_antennas; ++a)
      for (int c = 0; c < cfg.n_chirps; ++c)
        accumulate_chirp(&cube.data[cube.index(a, 0, c)], sample_stride, obj, cfg, c, a);
  if (cfg.noise_var > 0.0) {
    Rng rng(seed);
    for (auto& v : cube.data) v += rng.cgaussian(cfg.noise_var);
  }
  return cube;
}

}  // namespace rbtk::radar
