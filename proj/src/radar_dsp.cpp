#include "rbtk/radar_dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <unordered_map>

namespace rbtk::dsp {

void CfarConfig::validate() const {
  if (guard_range < 0 || guard_doppler < 0) throw ConfigError("CFAR guard cells must be >= 0");
  if (train_range < 1 && train_doppler < 1)
    throw ConfigError("CFAR training window is empty");
  if (train_range < 0 || train_doppler < 0) throw ConfigError("CFAR training cells must be >= 0");
  if (!(pfa > 0.0) || !(pfa < 1.0)) throw ConfigError("CFAR pfa must be in (0,1)");
}

void DbscanConfig::validate() const {
  if (!(eps_bins > 0.0)) throw ConfigError("DBSCAN eps must be positive");
  if (min_points < 1) throw ConfigError("DBSCAN min_points must be >= 1");
}

namespace {

// FFTW plans are cached per shape; creation is serialized (FFTW planning is
// not thread-safe), execution on distinct buffers is.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache c;
    return c;
  }

  fftw_plan plan2d(int n0, int n1) {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::array<int, 3>{n0, n1, -1};
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::vector<cplx> tmp(static_cast<size_t>(n0) * n1);
    fftw_plan p = fftw_plan_dft_2d(n0, n1, reinterpret_cast<fftw_complex*>(tmp.data()),
                                   reinterpret_cast<fftw_complex*>(tmp.data()),
                                   FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(key, p);
    return p;
  }

  fftw_plan plan3d(int n0, int n1, int n2) {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::array<int, 3>{n0, n1, n2};
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::vector<cplx> tmp(static_cast<size_t>(n0) * n1 * n2);
    fftw_plan p = fftw_plan_dft_3d(n0, n1, n2, reinterpret_cast<fftw_complex*>(tmp.data()),
                                   reinterpret_cast<fftw_complex*>(tmp.data()),
                                   FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(key, p);
    return p;
  }

 private:
  std::mutex mu_;
  std::map<std::array<int, 3>, fftw_plan> plans_;
};

void fft_inplace_2d(std::vector<cplx>& buf, int n0, int n1) {
  fftw_plan p = PlanCache::instance().plan2d(n0, n1);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(buf.data()),
                   reinterpret_cast<fftw_complex*>(buf.data()));
}

void fft_inplace_3d(std::vector<cplx>& buf, int n0, int n1, int n2) {
  fftw_plan p = PlanCache::instance().plan3d(n0, n1, n2);
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(buf.data()),
                   reinterpret_cast<fftw_complex*>(buf.data()));
}

std::vector<double> hann(int n) {
  std::vector<double> w(static_cast<size_t>(n), 1.0);
  if (n < 2) return w;
  for (int i = 0; i < n; ++i)
    w[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (n - 1));
  return w;
}

}  // namespace

RangeDopplerMap range_doppler_map(const radar::RadarFrameCube& cube,
                                  const SpectralWindows& windows) {
  const auto& cfg = cube.config;
  cfg.validate();
  const int ns = cfg.n_samples, nc = cfg.n_chirps;
  if (cube.data.size() != static_cast<size_t>(cfg.n_antennas) * ns * nc)
    throw ConfigError("frame cube dims do not match its config");

  RangeDopplerMap map;
  map.config = cfg;
  map.n_samples = ns;
  map.n_chirps = nc;
  map.values.assign(static_cast<size_t>(ns) * nc, 0.0);

  const auto wr = windows.hann_range ? hann(ns) : std::vector<double>();
  const auto wd = windows.hann_doppler ? hann(nc) : std::vector<double>();
  std::vector<cplx> slice(static_cast<size_t>(ns) * nc);
  for (int a = 0; a < cfg.n_antennas; ++a) {
    const cplx* src = &cube.data[cube.index(a, 0, 0)];
    std::copy(src, src + slice.size(), slice.begin());
    if (!wr.empty() || !wd.empty())
      for (int r = 0; r < ns; ++r)
        for (int dd = 0; dd < nc; ++dd)
          slice[static_cast<size_t>(r) * nc + dd] *=
              (wr.empty() ? 1.0 : wr[static_cast<size_t>(r)]) *
              (wd.empty() ? 1.0 : wd[static_cast<size_t>(dd)]);
    fft_inplace_2d(slice, ns, nc);
    for (int r = 0; r < ns; ++r)
      for (int d = 0; d < nc; ++d)
        map.values[map.index(r, d)] +=
            std::abs(slice[static_cast<size_t>(r) * nc + (d + nc / 2) % nc]);
  }
  return map;
}

RadarCube radar_cube(const radar::RadarFrameCube& cube, int n_angle_bins,
                     const SpectralWindows& windows) {
  const auto& cfg = cube.config;
  cfg.validate();
  if (n_angle_bins < cfg.n_antennas)
    throw ConfigError("n_angle_bins must be >= the antenna count");
  const int ns = cfg.n_samples, nc = cfg.n_chirps, na = n_angle_bins;
  if (cube.data.size() != static_cast<size_t>(cfg.n_antennas) * ns * nc)
    throw ConfigError("frame cube dims do not match its config");

  const auto wr = windows.hann_range ? hann(ns) : std::vector<double>();
  const auto wd = windows.hann_doppler ? hann(nc) : std::vector<double>();
  const auto wa = windows.hann_angle ? hann(cfg.n_antennas) : std::vector<double>();

  // Zero-padded copy in [angle][sample][chirp] order, 3D FFT, then magnitude
  // with angle/Doppler axes centered into [sample][angle][chirp].
  std::vector<cplx> buf(static_cast<size_t>(na) * ns * nc, cplx{0.0, 0.0});
  for (int a = 0; a < cfg.n_antennas; ++a) {
    cplx* dst = &buf[static_cast<size_t>(a) * ns * nc];
    std::copy(&cube.data[cube.index(a, 0, 0)],
              &cube.data[cube.index(a, 0, 0)] + size_t(ns) * nc, dst);
    if (!wr.empty() || !wd.empty() || !wa.empty()) {
      const double ga = wa.empty() ? 1.0 : wa[static_cast<size_t>(a)];
      for (int r = 0; r < ns; ++r)
        for (int dd = 0; dd < nc; ++dd)
          dst[static_cast<size_t>(r) * nc + dd] *=
              ga * (wr.empty() ? 1.0 : wr[static_cast<size_t>(r)]) *
              (wd.empty() ? 1.0 : wd[static_cast<size_t>(dd)]);
    }
  }
  fft_inplace_3d(buf, na, ns, nc);

  RadarCube out;
  out.config = cfg;
  out.n_samples = ns;
  out.n_angle_bins = na;
  out.n_chirps = nc;
  out.values.resize(static_cast<size_t>(ns) * na * nc);
  for (int r = 0; r < ns; ++r)
    for (int a = 0; a < na; ++a) {
      const int ka = (a + na / 2) % na;
      for (int d = 0; d < nc; ++d) {
        const int kd = (d + nc / 2) % nc;
        out.values[out.index(r, a, d)] =
            std::abs(buf[(static_cast<size_t>(ka) * ns + static_cast<size_t>(r)) * nc + kd]);
      }
    }
  return out;
}

namespace {

// Summed-area table over cell powers, with clamped-rectangle queries.
class PowerSat {
 public:
  PowerSat(const RangeDopplerMap& map) : nr_(map.n_samples), nd_(map.n_chirps) {
    sat_.assign(static_cast<size_t>(nr_ + 1) * (nd_ + 1), 0.0);
    for (int r = 0; r < nr_; ++r) {
      double row = 0.0;
      for (int d = 0; d < nd_; ++d) {
        const double v = map.at(r, d);
        row += v * v;
        sat_[idx(r + 1, d + 1)] = sat_[idx(r, d + 1)] + row;
      }
    }
  }

  // Inclusive rectangle sum, clamped to the map.
  double sum(int r0, int r1, int d0, int d1) const {
    r0 = std::max(r0, 0);
    d0 = std::max(d0, 0);
    r1 = std::min(r1, nr_ - 1);
    d1 = std::min(d1, nd_ - 1);
    if (r0 > r1 || d0 > d1) return 0.0;
    return sat_[idx(r1 + 1, d1 + 1)] - sat_[idx(r0, d1 + 1)] - sat_[idx(r1 + 1, d0)] +
           sat_[idx(r0, d0)];
  }

  static long long area(int r0, int r1, int d0, int d1, int nr, int nd) {
    r0 = std::max(r0, 0);
    d0 = std::max(d0, 0);
    r1 = std::min(r1, nr - 1);
    d1 = std::min(d1, nd - 1);
    if (r0 > r1 || d0 > d1) return 0;
    return static_cast<long long>(r1 - r0 + 1) * (d1 - d0 + 1);
  }

 private:
  size_t idx(int r, int d) const {
    return static_cast<size_t>(r) * static_cast<size_t>(nd_ + 1) + static_cast<size_t>(d);
  }
  int nr_, nd_;
  std::vector<double> sat_;
};

}  // namespace

std::vector<Detection> cfar_detect(const RangeDopplerMap& map, const CfarConfig& cfg) {
  cfg.validate();
  const int nr = map.n_samples, nd = map.n_chirps;
  const int er = cfg.guard_range + cfg.train_range;
  const int ed = cfg.guard_doppler + cfg.train_doppler;
  if (nr <= 2 * er + 1 || nd <= 2 * ed + 1)
    throw ConfigError("range-Doppler map too small for the CFAR window");

  PowerSat sat(map);
  std::unordered_map<long long, double> alpha_cache;
  const auto alpha_for = [&](long long n) {
    auto it = alpha_cache.find(n);
    if (it != alpha_cache.end()) return it->second;
    const double a = static_cast<double>(n) *
                     (std::pow(cfg.pfa, -1.0 / static_cast<double>(n)) - 1.0);
    alpha_cache.emplace(n, a);
    return a;
  };

  std::vector<Detection> dets;
  for (int r = 0; r < nr; ++r)
    for (int d = 0; d < nd; ++d) {
      const double outer = sat.sum(r - er, r + er, d - ed, d + ed);
      const double guard = sat.sum(r - cfg.guard_range, r + cfg.guard_range,
                                   d - cfg.guard_doppler, d + cfg.guard_doppler);
      const long long n_outer = PowerSat::area(r - er, r + er, d - ed, d + ed, nr, nd);
      const long long n_guard = PowerSat::area(r - cfg.guard_range, r + cfg.guard_range,
                                               d - cfg.guard_doppler, d + cfg.guard_doppler,
                                               nr, nd);
      const long long n_train = n_outer - n_guard;
      if (n_train <= 0) continue;
      const double noise = (outer - guard) / static_cast<double>(n_train);
      const double p = map.at(r, d) * map.at(r, d);
      if (p > alpha_for(n_train) * noise) dets.push_back({r, d, p});
    }
  return dets;
}

std::vector<int> dbscan_cluster(const std::vector<Detection>& dets,
                                const DbscanConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(dets.size());
  std::vector<int> labels(static_cast<size_t>(n), -2);  // -2 unvisited, -1 noise
  if (n == 0) return labels;

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& pa = dets[static_cast<size_t>(a)];
    const auto& pb = dets[static_cast<size_t>(b)];
    if (pa.range_bin != pb.range_bin) return pa.range_bin < pb.range_bin;
    if (pa.doppler_bin != pb.doppler_bin) return pa.doppler_bin < pb.doppler_bin;
    return a < b;
  });

  const double eps2 = cfg.eps_bins * cfg.eps_bins;
  const auto neighbors = [&](int i) {
    std::vector<int> out;
    for (int j : order) {
      const double dr = dets[static_cast<size_t>(i)].range_bin - dets[static_cast<size_t>(j)].range_bin;
      const double dd = dets[static_cast<size_t>(i)].doppler_bin - dets[static_cast<size_t>(j)].doppler_bin;
      if (dr * dr + dd * dd <= eps2) out.push_back(j);
    }
    return out;
  };

  int next_cluster = 0;
  for (int seed : order) {
    if (labels[static_cast<size_t>(seed)] != -2) continue;
    auto nb = neighbors(seed);
    if (static_cast<int>(nb.size()) < cfg.min_points) {
      labels[static_cast<size_t>(seed)] = -1;
      continue;
    }
    const int cid = next_cluster++;
    labels[static_cast<size_t>(seed)] = cid;
    std::deque<int> queue(nb.begin(), nb.end());
    while (!queue.empty()) {
      const int q = queue.front();
      queue.pop_front();
      if (labels[static_cast<size_t>(q)] == -1) labels[static_cast<size_t>(q)] = cid;  // border
      if (labels[static_cast<size_t>(q)] != -2) continue;
      labels[static_cast<size_t>(q)] = cid;
      auto qn = neighbors(q);
      if (static_cast<int>(qn.size()) >= cfg.min_points)
        queue.insert(queue.end(), qn.begin(), qn.end());
    }
  }
  return labels;
}

std::vector<ObjectState> estimate_states(const std::vector<int>& labels,
                                         const std::vector<Detection>& dets,
                                         const RangeDopplerMap& map,
                                         const RadarCube& cube) {
  if (labels.size() != dets.size())
    throw ConfigError("labels/detections length mismatch");
  const auto d = radar::derived_params(map.config);
  int n_clusters = 0;
  for (int l : labels) n_clusters = std::max(n_clusters, l + 1);

  std::vector<int> rep(static_cast<size_t>(n_clusters), -1);
  for (size_t i = 0; i < dets.size(); ++i) {
    const int l = labels[i];
    if (l < 0) continue;
    if (dets[i].range_bin < 0 || dets[i].range_bin >= map.n_samples ||
        dets[i].doppler_bin < 0 || dets[i].doppler_bin >= map.n_chirps)
      throw ConfigError("detection references a cell outside the map");
    int& r = rep[static_cast<size_t>(l)];
    if (r < 0 || dets[i].power > dets[static_cast<size_t>(r)].power ||
        (dets[i].power == dets[static_cast<size_t>(r)].power &&
         std::make_pair(dets[i].range_bin, dets[i].doppler_bin) <
             std::make_pair(dets[static_cast<size_t>(r)].range_bin,
                            dets[static_cast<size_t>(r)].doppler_bin)))
      r = static_cast<int>(i);
  }

  // Peak grouping: a cluster only becomes an object if its representative is
  // a local maximum of the map. Sidelobe ridges of a strong return pass CFAR
  // on noiseless scenes (their training rings are nearly empty) but are
  // monotone toward the main lobe, so this drops them without any absolute
  // power floor that could mask weak far objects.
  // Both map axes are FFT axes, so the neighborhood wraps circularly; this
  // also drops skirt maxima that appear where a wrapped skirt meets the edge.
  const auto is_local_peak = [&](int r, int dd) {
    const double p = map.at(r, dd);
    for (int ir = -1; ir <= 1; ++ir)
      for (int id = -1; id <= 1; ++id) {
        const int rr = (r + ir + map.n_samples) % map.n_samples;
        const int dc = (dd + id + map.n_chirps) % map.n_chirps;
        if (map.at(rr, dc) > p) return false;
      }
    return true;
  };

  std::vector<ObjectState> states;
  states.reserve(static_cast<size_t>(n_clusters));
  for (int l = 0; l < n_clusters; ++l) {
    const auto& cell = dets[static_cast<size_t>(rep[static_cast<size_t>(l)])];
    if (!is_local_peak(cell.range_bin, cell.doppler_bin)) continue;
    int best_a = 0;
    double best_v = -1.0;
    for (int a = 0; a < cube.n_angle_bins; ++a) {
      const double v = cube.at(cell.range_bin, a, cell.doppler_bin);
      if (v > best_v) {
        best_v = v;
        best_a = a;
      }
    }
    ObjectState s;
    s.range_m = cell.range_bin * d.range_res_m;
    s.velocity_mps = (cell.doppler_bin - map.n_chirps / 2) * d.vel_res_mps;
    s.angle_rad = std::asin(2.0 * (best_a - cube.n_angle_bins / 2) / cube.n_angle_bins);
    s.power = cell.power;
    states.push_back(s);
  }
  return states;
}

void export_states_csv(double t, const std::vector<ObjectState>& states,
                       std::ostream& os) {
  char buf[160];
  for (size_t k = 0; k < states.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g,%zu,%.17g,%.17g,%.17g,%.17g\n", t, k,
                  states[k].range_m, states[k].velocity_mps, states[k].angle_rad,
                  states[k].power);
    os << buf;
  }
}

void export_map_csv(const RangeDopplerMap& map, std::ostream& os) {
  char buf[48];
  for (int r = 0; r < map.n_samples; ++r) {
    for (int d = 0; d < map.n_chirps; ++d) {
      std::snprintf(buf, sizeof(buf), d + 1 == map.n_chirps ? "%.9g" : "%.9g,", map.at(r, d));
      os << buf;
    }
    os << "\n";
  }
}

}  // namespace rbtk::dsp
