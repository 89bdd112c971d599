#pragma once

#include <iosfwd>
#include <vector>

#include "rbtk/common.hpp"
#include "rbtk/radar_synth.hpp"

namespace rbtk::dsp {

/// |2D FFT| over (sample, chirp) summed across antennas. Doppler axis is
/// FFT-shifted so zero velocity sits at bin n_chirps/2; range axis unshifted.
struct RangeDopplerMap {
  radar::RadarWaveformConfig config;
  int n_samples = 0;
  int n_chirps = 0;
  std::vector<double> values;  // [sample][chirp] row-major, magnitudes

  size_t index(int r, int d) const {
    return static_cast<size_t>(r) * static_cast<size_t>(n_chirps) + static_cast<size_t>(d);
  }
  double at(int r, int d) const { return values[index(r, d)]; }
};

/// |3D FFT| with the antenna axis zero-padded to n_angle_bins. Doppler and
/// angle axes centered, range axis unshifted.
struct RadarCube {
  radar::RadarWaveformConfig config;
  int n_samples = 0;
  int n_angle_bins = 0;
  int n_chirps = 0;
  std::vector<double> values;  // [sample][angle][chirp] row-major

  size_t index(int r, int a, int d) const {
    return (static_cast<size_t>(r) * static_cast<size_t>(n_angle_bins) +
            static_cast<size_t>(a)) * static_cast<size_t>(n_chirps) + static_cast<size_t>(d);
  }
  double at(int r, int a, int d) const { return values[index(r, a, d)]; }
};

struct Detection {
  int range_bin = 0;
  int doppler_bin = 0;
  double power = 0.0;  // squared magnitude
};

struct ObjectState {
  double range_m = 0.0;
  double velocity_mps = 0.0;
  double angle_rad = 0.0;
  double power = 0.0;
};

struct CfarConfig {
  int guard_range = 2;
  int guard_doppler = 2;
  int train_range = 4;
  int train_doppler = 4;
  double pfa = 1e-4;

  void validate() const;
};

struct DbscanConfig {
  double eps_bins = 3.0;
  int min_points = 3;

  void validate() const;
};

/// Optional per-axis Hann tapers; rectangular (no window) by default so bin
/// positions stay exactly analyzable.
struct SpectralWindows {
  bool hann_range = false;
  bool hann_doppler = false;
  bool hann_angle = false;
};

RangeDopplerMap range_doppler_map(const radar::RadarFrameCube& cube,
                                  const SpectralWindows& windows = {});

RadarCube radar_cube(const radar::RadarFrameCube& cube, int n_angle_bins = 64,
                     const SpectralWindows& windows = {});

/// Cell-averaging CFAR on squared magnitudes with the exponential-noise
/// closed-form threshold alpha = N (pfa^(-1/N) - 1). Border cells use a
/// truncated training window with alpha recomputed for the available count.
std::vector<Detection> cfar_detect(const RangeDopplerMap& map, const CfarConfig& cfg);

/// Euclidean-distance DBSCAN in (range_bin, doppler_bin) space. Returns one
/// label per detection: cluster id >= 0 or -1 for noise. Points are visited in
/// lexicographic order, so labels do not depend on input order.
std::vector<int> dbscan_cluster(const std::vector<Detection>& dets,
                                const DbscanConfig& cfg);

/// Per cluster: representative cell = max-power member; range/velocity from
/// its bins; angle from the peak of the radar-cube slice at that cell.
std::vector<ObjectState> estimate_states(const std::vector<int>& labels,
                                         const std::vector<Detection>& dets,
                                         const RangeDopplerMap& map,
                                         const RadarCube& cube);

/// CSV: t, k, range_m, velocity_mps, angle_rad, power.
void export_states_csv(double t, const std::vector<ObjectState>& states,
                       std::ostream& os);
void export_map_csv(const RangeDopplerMap& map, std::ostream& os);

}  // namespace rbtk::dsp
