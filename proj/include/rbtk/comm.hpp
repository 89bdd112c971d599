#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rbtk/common.hpp"

namespace rbtk::comm {

enum class Sector { front, right, back, left };

Sector sector_from_string(const std::string& s);
std::string to_string(Sector s);

struct ArrayConfig {
  int n_elements = 16;
  double spacing_wavelengths = 0.5;
  Sector sector = Sector::front;

  void validate() const;
};

struct BeamCodebook {
  int n_elements = 0;
  std::vector<std::vector<cplx>> beams;     // B vectors, unit norm each
  std::vector<double> steering_angles_rad;  // strictly increasing

  int size() const { return static_cast<int>(beams.size()); }
};

struct ChannelPath {
  cplx gain;
  double azimuth_rad = 0.0;
  double elevation_rad = 0.0;
};

struct ChannelState {
  std::vector<ChannelPath> paths;
};

/// ULA response: element m gets phase 2*pi*spacing*m*sin(azimuth), unit
/// magnitude. Elevation is accepted for signature parity but a horizontal
/// linear array cannot resolve it.
std::vector<cplx> array_response(const ArrayConfig& cfg, double azimuth_rad,
                                 double elevation_rad = 0.0);

/// Beams are normalized steering vectors on a sine-space uniform grid of cell
/// centers covering one 90-degree sector (sin in [-sin(pi/4), sin(pi/4)]).
/// Requires n_beams >= n_elements.
BeamCodebook build_codebook(const ArrayConfig& cfg, int n_beams);

std::vector<cplx> channel_vector(const ChannelState& state, const ArrayConfig& cfg);

/// y = sqrt(symbol_power) * f^H h * s + n with s = 1 and n circular complex
/// Gaussian of variance noise_var, drawn deterministically from seed.
cplx receive_signal(std::span<const cplx> h, std::span<const cplx> f,
                    double symbol_power, double noise_var, uint64_t seed);

struct BeamChoice {
  int beam = 0;  // 1-based beam index
  double gain = 0.0;
};

/// Exhaustive argmax_b |f_b^H h|^2; ties go to the lowest index.
BeamChoice optimal_beam(std::span<const cplx> h, const BeamCodebook& cb);

double beam_to_comm_angle(int beam, const BeamCodebook& cb);

/// CSV: index, steering_angle_rad, then re/im per element.
void export_codebook_csv(const BeamCodebook& cb, std::ostream& os);

}  // namespace rbtk::comm
