#pragma once

#include <vector>

#include "rbtk/common.hpp"
#include "rbtk/scenario.hpp"

namespace rbtk::radar {

struct RadarWaveformConfig {
  double f0_hz = 77e9;            // chirp start frequency
  double slope_hz_per_s = 15e12;  // 15 MHz/us
  double sample_rate_hz = 5e6;
  int n_samples = 256;
  int n_chirps = 128;
  int n_antennas = 4;
  double t_pri_s = 65e-6;
  double tx_power = 1.0;
  double noise_var = 1e-4;  // circular complex Gaussian per IF sample

  void validate() const;
};

struct DerivedParams {
  double t_active_s = 0.0;
  double bandwidth_hz = 0.0;
  double frame_time_s = 0.0;
  double wavelength_m = 0.0;
  double range_res_m = 0.0;
  double max_range_m = 0.0;
  double vel_res_mps = 0.0;
  double max_vel_mps = 0.0;
};

DerivedParams derived_params(const RadarWaveformConfig& cfg);

/// Complex IF samples of one radar frame, laid out antenna-major,
/// sample-next, chirp-minor.
struct RadarFrameCube {
  RadarWaveformConfig config;
  double timestamp_s = 0.0;
  std::vector<cplx> data;

  size_t index(int antenna, int sample, int chirp) const {
    return (static_cast<size_t>(antenna) * static_cast<size_t>(config.n_samples) +
            static_cast<size_t>(sample)) * static_cast<size_t>(config.n_chirps) +
           static_cast<size_t>(chirp);
  }
  cplx& at(int antenna, int sample, int chirp) { return data[index(antenna, sample, chirp)]; }
  const cplx& at(int antenna, int sample, int chirp) const {
    return data[index(antenna, sample, chirp)];
  }
};

/// IF tone of one chirp for one point object: exp(j2pi[S*tau*t + f0*tau -
/// (S/2)*tau^2]) scaled by sqrt(tx_power * rcs/R^4), with the range advanced
/// per chirp (stop-and-hop) and a per-antenna phase pi*a*sin(azimuth) for
/// half-wavelength receive spacing. Throws NumericError if the object lies
/// outside the unambiguous range/velocity box.
std::vector<cplx> synth_chirp_if(const scenario::ObjectTruth& obj,
                                 const RadarWaveformConfig& cfg, int chirp_index,
                                 int antenna_index);

/// Superposition of all objects plus seeded noise.
RadarFrameCube synth_frame(const std::vector<scenario::ObjectTruth>& objects,
                           const RadarWaveformConfig& cfg, uint64_t seed);

}  // namespace rbtk::radar
