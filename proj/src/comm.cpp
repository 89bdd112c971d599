#include "rbtk/comm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace rbtk::comm {

Sector sector_from_string(const std::string& s) {
  if (s == "front") return Sector::front;
  if (s == "right") return Sector::right;
  if (s == "back") return Sector::back;
  if (s == "left") return Sector::left;
  throw ConfigError("unknown array sector: " + s);
}

std::string to_string(Sector s) {
  switch (s) {
    case Sector::front: return "front";
    case Sector::right: return "right";
    case Sector::back: return "back";
    case Sector::left: return "left";
  }
  return "front";
}

void ArrayConfig::validate() const {
  if (n_elements < 1) throw ConfigError("array needs at least one element");
  if (!(spacing_wavelengths > 0.0))
    throw ConfigError("array spacing must be positive");
}

std::vector<cplx> array_response(const ArrayConfig& cfg, double azimuth_rad,
                                 double elevation_rad) {
  cfg.validate();
  (void)elevation_rad;  // carried in signatures, unresolvable by a ULA
  std::vector<cplx> a(static_cast<size_t>(cfg.n_elements));
  const double k = 2.0 * kPi * cfg.spacing_wavelengths * std::sin(azimuth_rad);
  for (int m = 0; m < cfg.n_elements; ++m)
    a[static_cast<size_t>(m)] = std::polar(1.0, k * m);
  return a;
}

BeamCodebook build_codebook(const ArrayConfig& cfg, int n_beams) {
  cfg.validate();
  if (n_beams < cfg.n_elements)
    throw ConfigError("undersampled codebook rejected: B=" + std::to_string(n_beams) +
                      " < M=" + std::to_string(cfg.n_elements));
  BeamCodebook cb;
  cb.n_elements = cfg.n_elements;
  cb.beams.reserve(static_cast<size_t>(n_beams));
  cb.steering_angles_rad.reserve(static_cast<size_t>(n_beams));
  const double sin_max = std::sin(kPi / 4.0);
  const double step = 2.0 * sin_max / n_beams;
  const double inv_norm = 1.0 / std::sqrt(static_cast<double>(cfg.n_elements));
  for (int b = 0; b < n_beams; ++b) {
    const double s = -sin_max + (b + 0.5) * step;  // cell centers in sin space
    const double angle = std::asin(s);
    auto v = array_response(cfg, angle);
    for (auto& x : v) x *= inv_norm;
    cb.beams.push_back(std::move(v));
    cb.steering_angles_rad.push_back(angle);
  }
  return cb;
}

std::vector<cplx> channel_vector(const ChannelState& state, const ArrayConfig& cfg) {
  cfg.validate();
  if (state.paths.empty()) throw ConfigError("channel state needs at least one path");
  std::vector<cplx> h(static_cast<size_t>(cfg.n_elements), cplx{0.0, 0.0});
  for (const auto& p : state.paths) {
    if (!std::isfinite(p.azimuth_rad) || !std::isfinite(p.elevation_rad))
      throw ConfigError("non-finite path angle");
    const auto a = array_response(cfg, p.azimuth_rad, p.elevation_rad);
    for (size_t m = 0; m < h.size(); ++m) h[m] += p.gain * a[m];
  }
  return h;
}

cplx receive_signal(std::span<const cplx> h, std::span<const cplx> f,
                    double symbol_power, double noise_var, uint64_t seed) {
  if (h.size() != f.size())
    throw ConfigError("combining vector / channel length mismatch");
  cplx fh{0.0, 0.0};
  for (size_t m = 0; m < h.size(); ++m) fh += std::conj(f[m]) * h[m];
  cplx n{0.0, 0.0};
  if (noise_var > 0.0) n = Rng(seed).cgaussian(noise_var);
  return std::sqrt(symbol_power) * fh + n;
}

BeamChoice optimal_beam(std::span<const cplx> h, const BeamCodebook& cb) {
  if (cb.size() == 0) throw ConfigError("empty codebook");
  double energy = 0.0;
  for (const auto& x : h) energy += std::norm(x);
  if (energy == 0.0) throw NumericError("optimal_beam: zero channel vector");
  BeamChoice best{0, -1.0};
  for (int b = 0; b < cb.size(); ++b) {
    const auto& f = cb.beams[static_cast<size_t>(b)];
    if (f.size() != h.size()) throw ConfigError("codebook / channel length mismatch");
    cplx fh{0.0, 0.0};
    for (size_t m = 0; m < h.size(); ++m) fh += std::conj(f[m]) * h[m];
    const double g = std::norm(fh);
    if (g > best.gain) best = {b + 1, g};
  }
  return best;
}

double beam_to_comm_angle(int beam, const BeamCodebook& cb) {
  if (beam < 1 || beam > cb.size())
    throw ConfigError("beam index " + std::to_string(beam) + " out of range 1.." +
                      std::to_string(cb.size()));
  return cb.steering_angles_rad[static_cast<size_t>(beam - 1)];
}

void export_codebook_csv(const BeamCodebook& cb, std::ostream& os) {
  os << "index,steering_angle_rad";
  for (int m = 0; m < cb.n_elements; ++m) os << ",re" << m << ",im" << m;
  os << "\n";
  char buf[64];
  for (int b = 0; b < cb.size(); ++b) {
    os << (b + 1);
    std::snprintf(buf, sizeof(buf), ",%.17g", cb.steering_angles_rad[static_cast<size_t>(b)]);
    os << buf;
    for (const auto& w : cb.beams[static_cast<size_t>(b)]) {
      std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", w.real(), w.imag());
      os << buf;
    }
    os << "\n";
  }
}

}  // namespace rbtk::comm
