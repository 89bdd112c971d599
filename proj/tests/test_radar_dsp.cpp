#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <set>

#include "rbtk/radar_dsp.hpp"
#include "rbtk/radar_synth.hpp"

using namespace rbtk;
using dsp::Detection;

namespace {

radar::RadarWaveformConfig small_config(int ns = 16, int nc = 8, int na = 8) {
  radar::RadarWaveformConfig c;
  c.n_samples = ns;
  c.n_chirps = nc;
  c.n_antennas = na;
  c.noise_var = 0.0;
  // keep t_active <= t_pri for tiny sample counts
  c.t_pri_s = std::max(65e-6, ns / c.sample_rate_hz);
  return c;
}

radar::RadarFrameCube random_cube(const radar::RadarWaveformConfig& c, uint64_t seed) {
  radar::RadarFrameCube cube;
  cube.config = c;
  cube.data.resize(static_cast<size_t>(c.n_antennas) * c.n_samples * c.n_chirps);
  Rng rng(seed);
  for (auto& v : cube.data) v = rng.cgaussian(1.0);
  return cube;
}

// naive O(N^2) DFT oracles, written independently of the FFT path
std::vector<double> naive_rd_map(const radar::RadarFrameCube& cube) {
  const int na = cube.config.n_antennas, ns = cube.config.n_samples,
            nc = cube.config.n_chirps;
  std::vector<double> out(static_cast<size_t>(ns) * nc, 0.0);
  for (int a = 0; a < na; ++a)
    for (int kr = 0; kr < ns; ++kr)
      for (int kd = 0; kd < nc; ++kd) {
        cplx acc{0.0, 0.0};
        for (int n = 0; n < ns; ++n)
          for (int m = 0; m < nc; ++m)
            acc += cube.at(a, n, m) *
                   std::exp(cplx(0.0, -2.0 * kPi * (double(kr) * n / ns +
                                                    double(kd) * m / nc)));
        const int shifted = (kd + nc / 2) % nc;  // center zero Doppler
        out[static_cast<size_t>(kr) * nc + shifted] += std::abs(acc);
      }
  return out;
}

std::vector<double> naive_cube(const radar::RadarFrameCube& cube, int n_angle) {
  const int na = cube.config.n_antennas, ns = cube.config.n_samples,
            nc = cube.config.n_chirps;
  std::vector<double> out(static_cast<size_t>(ns) * n_angle * nc, 0.0);
  for (int ka = 0; ka < n_angle; ++ka)
    for (int kr = 0; kr < ns; ++kr)
      for (int kd = 0; kd < nc; ++kd) {
        cplx acc{0.0, 0.0};
        for (int a = 0; a < na; ++a)  // zero padding: a >= na contributes 0
          for (int n = 0; n < ns; ++n)
            for (int m = 0; m < nc; ++m)
              acc += cube.at(a, n, m) *
                     std::exp(cplx(0.0, -2.0 * kPi * (double(ka) * a / n_angle +
                                                      double(kr) * n / ns +
                                                      double(kd) * m / nc)));
        const int sa = (ka + n_angle / 2) % n_angle;
        const int sd = (kd + nc / 2) % nc;
        out[(static_cast<size_t>(kr) * n_angle + sa) * nc + sd] = std::abs(acc);
      }
  return out;
}

dsp::RangeDopplerMap map_from_values(std::vector<double> v, int ns, int nc) {
  dsp::RangeDopplerMap m;
  m.config = small_config(ns, nc, 1);
  m.config.n_samples = ns;
  m.config.n_chirps = nc;
  m.n_samples = ns;
  m.n_chirps = nc;
  m.values = std::move(v);
  return m;
}

// reference DBSCAN: recursive, region-grown, coded separately
std::vector<int> reference_dbscan(const std::vector<Detection>& dets, double eps,
                                  int min_pts) {
  const int n = static_cast<int>(dets.size());
  std::vector<std::vector<int>> nb(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double dr = dets[size_t(i)].range_bin - dets[size_t(j)].range_bin;
      const double dd = dets[size_t(i)].doppler_bin - dets[size_t(j)].doppler_bin;
      if (std::sqrt(dr * dr + dd * dd) <= eps) nb[size_t(i)].push_back(j);
    }
  std::vector<bool> core(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) core[size_t(i)] = static_cast<int>(nb[size_t(i)].size()) >= min_pts;
  std::vector<int> label(static_cast<size_t>(n), -1);
  int cid = 0;
  // union of eps-connected cores, then attach borders
  std::function<void(int, int)> grow = [&](int i, int c) {
    label[size_t(i)] = c;
    for (int j : nb[size_t(i)])
      if (core[size_t(j)] && label[size_t(j)] == -1) grow(j, c);
  };
  for (int i = 0; i < n; ++i)
    if (core[size_t(i)] && label[size_t(i)] == -1) grow(i, cid++);
  for (int i = 0; i < n; ++i) {
    if (core[size_t(i)] || label[size_t(i)] != -1) continue;
    for (int j : nb[size_t(i)])
      if (core[size_t(j)]) {
        label[size_t(i)] = label[size_t(j)];
        break;  // border point: any reachable core cluster is acceptable
      }
  }
  return label;
}

// partitions equal up to label permutation; noise must map to noise
bool same_clustering(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> fwd, bwd;
  for (size_t i = 0; i < a.size(); ++i) {
    if ((a[i] < 0) != (b[i] < 0)) return false;
    if (a[i] < 0) continue;
    if (fwd.count(a[i]) && fwd[a[i]] != b[i]) return false;
    if (bwd.count(b[i]) && bwd[b[i]] != a[i]) return false;
    fwd[a[i]] = b[i];
    bwd[b[i]] = a[i];
  }
  return true;
}

}  // namespace

TEST_CASE("all-zero cube maps to all-zero RD map and radar cube") {
  radar::RadarFrameCube cube;
  cube.config = small_config();
  cube.data.assign(static_cast<size_t>(8) * 16 * 8, cplx{0.0, 0.0});
  const auto map = dsp::range_doppler_map(cube);
  for (double v : map.values) CHECK(v == 0.0);
  const auto rc = dsp::radar_cube(cube, 16);
  for (double v : rc.values) CHECK(v == 0.0);
}

TEST_CASE("range-Doppler map equals the naive DFT oracle on random cubes") {
  const auto c = small_config();
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const auto cube = random_cube(c, seed);
    const auto map = dsp::range_doppler_map(cube);
    const auto ref = naive_rd_map(cube);
    double max_ref = 0.0, max_err = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) {
      max_ref = std::max(max_ref, std::abs(ref[i]));
      max_err = std::max(max_err, std::abs(ref[i] - map.values[i]));
    }
    CHECK(max_err / max_ref < 1e-6);
  }
}

TEST_CASE("radar cube equals the naive 3D DFT oracle with zero padding") {
  const auto c = small_config(8, 4, 4);
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const auto cube = random_cube(c, 100 + seed);
    const auto rc = dsp::radar_cube(cube, 8);
    const auto ref = naive_cube(cube, 8);
    double max_ref = 0.0, max_err = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) {
      max_ref = std::max(max_ref, std::abs(ref[i]));
      max_err = std::max(max_err, std::abs(ref[i] - rc.values[i]));
    }
    CHECK(max_err / max_ref < 1e-6);
  }
}

TEST_CASE("Parseval: unnormalized forward 2D FFT energy per antenna") {
  auto c = small_config(16, 8, 1);
  const auto cube = random_cube(c, 3);
  // single antenna: map holds |FFT|, so sum of squares = ns*nc * sum |x|^2
  const auto map = dsp::range_doppler_map(cube);
  double lhs = 0.0;
  for (double v : map.values) lhs += v * v;
  double rhs = 0.0;
  for (const auto& x : cube.data) rhs += std::norm(x);
  rhs *= 16.0 * 8.0;
  CHECK(std::abs(lhs - rhs) / rhs < 1e-9);
}

TEST_CASE("zero-velocity object peaks at the center Doppler bin") {
  radar::RadarWaveformConfig c;
  c.noise_var = 0.0;
  scenario::ObjectTruth o;
  o.range_m = 25.0;
  o.radial_velocity_mps = 0.0;
  o.azimuth_rad = 0.0;
  const auto map = dsp::range_doppler_map(radar::synth_frame({o}, c, 1));
  int best_d = -1, best_r = -1;
  double best = -1.0;
  for (int r = 0; r < map.n_samples; ++r)
    for (int d = 0; d < map.n_chirps; ++d)
      if (map.at(r, d) > best) {
        best = map.at(r, d);
        best_r = r;
        best_d = d;
      }
  CHECK(best_d == 64);  // center of 128
  CHECK(best_r > 0);
}

TEST_CASE("angle axis: boresight at center bin, 30 degrees at +16 of 64") {
  radar::RadarWaveformConfig c;
  c.noise_var = 0.0;
  scenario::ObjectTruth o;
  o.range_m = 20.0;
  o.radial_velocity_mps = 0.0;

  for (double az : {0.0, kPi / 6.0}) {
    o.azimuth_rad = az;
    const auto cube = dsp::radar_cube(radar::synth_frame({o}, c, 1), 64);
    int br = 0, ba = 0, bd = 0;
    double best = -1.0;
    for (int r = 0; r < cube.n_samples; ++r)
      for (int a = 0; a < cube.n_angle_bins; ++a)
        for (int d = 0; d < cube.n_chirps; ++d)
          if (cube.at(r, a, d) > best) {
            best = cube.at(r, a, d);
            br = r;
            ba = a;
            bd = d;
          }
    // spatial frequency sin(az)/2 -> bin offset sin(az)/2 * 64
    const int expect = 32 + static_cast<int>(std::lround(std::sin(az) / 2.0 * 64.0));
    if (az == 0.0) CHECK(ba == 32);
    CHECK(std::abs(ba - expect) <= 1);
    CHECK(bd == 64);
    CHECK(br > 0);
  }
}

TEST_CASE("optional Hann windows match the oracle applied to a windowed cube") {
  const auto c = small_config(16, 8, 2);
  const auto cube = random_cube(c, 12);
  dsp::SpectralWindows w;
  w.hann_range = true;
  w.hann_doppler = true;
  const auto map = dsp::range_doppler_map(cube, w);

  // independently windowed copy fed to the unwindowed transform
  auto windowed = cube;
  for (int a = 0; a < c.n_antennas; ++a)
    for (int r = 0; r < 16; ++r)
      for (int d = 0; d < 8; ++d) {
        const double wr = 0.5 - 0.5 * std::cos(2.0 * kPi * r / 15.0);
        const double wd = 0.5 - 0.5 * std::cos(2.0 * kPi * d / 7.0);
        windowed.at(a, r, d) *= wr * wd;
      }
  const auto ref = dsp::range_doppler_map(windowed);
  for (size_t i = 0; i < ref.values.size(); ++i)
    CHECK(map.values[i] == doctest::Approx(ref.values[i]).epsilon(1e-12));

  // windowed single-tone peak stays within one bin of the rectangular peak
  radar::RadarWaveformConfig pc;
  pc.noise_var = 0.0;
  scenario::ObjectTruth o;
  o.range_m = 25.0;
  o.radial_velocity_mps = 4.0;
  o.azimuth_rad = 0.1;
  const auto frame = radar::synth_frame({o}, pc, 5);
  const auto plain = dsp::range_doppler_map(frame);
  const auto tapered = dsp::range_doppler_map(frame, w);
  const auto argmax = [](const dsp::RangeDopplerMap& m) {
    int br = 0, bd = 0;
    double best = -1.0;
    for (int r = 0; r < m.n_samples; ++r)
      for (int d = 0; d < m.n_chirps; ++d)
        if (m.at(r, d) > best) {
          best = m.at(r, d);
          br = r;
          bd = d;
        }
    return std::pair{br, bd};
  };
  const auto [r0, d0] = argmax(plain);
  const auto [r1, d1] = argmax(tapered);
  CHECK(std::abs(r0 - r1) <= 1);
  CHECK(std::abs(d0 - d1) <= 1);
}

TEST_CASE("radar cube rejects fewer angle bins than antennas") {
  const auto cube = random_cube(small_config(8, 4, 4), 1);
  CHECK_THROWS_AS(dsp::radar_cube(cube, 2), ConfigError);
}

TEST_CASE("CFAR: all-zero and flat maps produce no detections") {
  const dsp::CfarConfig cfg;
  auto zero = map_from_values(std::vector<double>(64 * 32, 0.0), 64, 32);
  CHECK(dsp::cfar_detect(zero, cfg).empty());
  auto flat = map_from_values(std::vector<double>(64 * 32, 1.0), 64, 32);
  CHECK(dsp::cfar_detect(flat, cfg).empty());
}

TEST_CASE("CFAR threshold: a single +20 dB cell is exactly the detection") {
  // alpha = N (pfa^(-1/N) - 1) with N = 13*13 - 5*5 = 144 -> ~9.51 << 100
  const double alpha = 144.0 * (std::pow(1e-4, -1.0 / 144.0) - 1.0);
  CHECK(alpha < 100.0);
  CHECK(alpha == doctest::Approx(9.5135).epsilon(1e-3));

  std::vector<double> v(64 * 32, 1.0);
  v[static_cast<size_t>(30) * 32 + 15] = 10.0;  // +20 dB in power (mag 10 -> power 100)
  const auto map = map_from_values(std::move(v), 64, 32);
  const auto dets = dsp::cfar_detect(map, dsp::CfarConfig{});
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].range_bin == 30);
  CHECK(dets[0].doppler_bin == 15);
  CHECK(dets[0].power == doctest::Approx(100.0));
}

TEST_CASE("CFAR is translation covariant in the map interior") {
  const dsp::CfarConfig cfg;
  for (auto [r, d] : {std::pair{20, 10}, std::pair{25, 14}, std::pair{33, 20}}) {
    std::vector<double> v(64 * 32, 1.0);
    v[static_cast<size_t>(r) * 32 + d] = 10.0;
    const auto dets = dsp::cfar_detect(map_from_values(std::move(v), 64, 32), cfg);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].range_bin == r);
    CHECK(dets[0].doppler_bin == d);
  }
}

TEST_CASE("CFAR rejects maps smaller than the training window") {
  const auto tiny = map_from_values(std::vector<double>(8 * 8, 1.0), 8, 8);
  CHECK_THROWS_AS(dsp::cfar_detect(tiny, dsp::CfarConfig{}), ConfigError);
}

TEST_CASE("CFAR empirical false-alarm rate on exponential noise") {
  // |CN(0,1)| magnitudes give exponential cell powers
  const int nr = 1000, nd = 1000;
  std::vector<double> v(static_cast<size_t>(nr) * nd);
  Rng rng(808);
  for (auto& x : v) x = std::abs(rng.cgaussian(1.0));
  const auto map = map_from_values(std::move(v), nr, nd);
  const auto dets = dsp::cfar_detect(map, dsp::CfarConfig{});
  const double rate = static_cast<double>(dets.size()) / (double(nr) * nd);
  CHECK(rate >= 0.3e-4);
  CHECK(rate <= 3.0e-4);
}

TEST_CASE("DBSCAN: too-sparse points are noise, empty input is empty") {
  const dsp::DbscanConfig cfg;  // eps 3, min_points 3
  CHECK(dsp::dbscan_cluster({}, cfg).empty());
  std::vector<Detection> iso = {{0, 0, 1.0}, {20, 0, 1.0}, {40, 0, 1.0}};
  const auto labels = dsp::dbscan_cluster(iso, cfg);
  for (int l : labels) CHECK(l == -1);
}

TEST_CASE("DBSCAN: two well-separated blobs form exactly two clusters") {
  std::vector<Detection> dets;
  for (int i = 0; i < 5; ++i) dets.push_back({10 + i % 2, 10 + i / 2, 1.0});
  for (int i = 0; i < 5; ++i) dets.push_back({30 + i % 2, 10 + i / 2, 1.0});
  const auto labels = dsp::dbscan_cluster(dets, dsp::DbscanConfig{});
  std::set<int> ids(labels.begin(), labels.end());
  CHECK(ids.size() == 2);
  CHECK(!ids.count(-1));
  const auto ref = reference_dbscan(dets, 3.0, 3);
  CHECK(same_clustering(labels, ref));
}

TEST_CASE("DBSCAN equals the brute-force reference on random small instances") {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(0, 12));
    std::vector<Detection> dets;
    for (int i = 0; i < n; ++i)
      dets.push_back({static_cast<int>(rng.uniform_int(0, 15)),
                      static_cast<int>(rng.uniform_int(0, 15)), 1.0});
    dsp::DbscanConfig cfg;
    cfg.eps_bins = rng.uniform(1.0, 4.0);
    cfg.min_points = static_cast<int>(rng.uniform_int(1, 4));
    const auto got = dsp::dbscan_cluster(dets, cfg);
    const auto ref = reference_dbscan(dets, cfg.eps_bins, cfg.min_points);
    CHECK(same_clustering(got, ref));
  }
}

TEST_CASE("DBSCAN labels are independent of the input order") {
  std::vector<Detection> dets = {{5, 5, 1}, {5, 6, 1}, {6, 5, 1}, {20, 20, 1},
                                 {20, 21, 1}, {21, 20, 1}, {40, 3, 1}};
  auto rev = dets;
  std::reverse(rev.begin(), rev.end());
  const auto a = dsp::dbscan_cluster(dets, dsp::DbscanConfig{});
  auto b = dsp::dbscan_cluster(rev, dsp::DbscanConfig{});
  std::reverse(b.begin(), b.end());
  CHECK(same_clustering(a, b));
}

TEST_CASE("estimate_states recovers a synthetic object within one bin per axis") {
  radar::RadarWaveformConfig c;
  c.noise_var = 0.0;
  const auto d = radar::derived_params(c);
  scenario::ObjectTruth o;
  o.range_m = 30.0;
  o.radial_velocity_mps = 5.0;
  o.azimuth_rad = 20.0 * kPi / 180.0;
  const auto frame = radar::synth_frame({o}, c, 3);
  const auto map = dsp::range_doppler_map(frame);
  const auto cube = dsp::radar_cube(frame, 64);
  const auto dets = dsp::cfar_detect(map, dsp::CfarConfig{});
  REQUIRE(!dets.empty());
  const auto labels = dsp::dbscan_cluster(dets, dsp::DbscanConfig{});
  const auto states = dsp::estimate_states(labels, dets, map, cube);
  REQUIRE(states.size() == 1);
  CHECK(std::abs(states[0].range_m - o.range_m) <= 1.5 * d.range_res_m);
  CHECK(std::abs(states[0].velocity_mps - o.radial_velocity_mps) <= 1.5 * d.vel_res_mps);
  const double sin_step = 2.0 / 64.0;
  CHECK(std::abs(std::sin(states[0].angle_rad) - std::sin(o.azimuth_rad)) <=
        1.5 * sin_step);
}

TEST_CASE("boresight object estimates exactly zero angle") {
  radar::RadarWaveformConfig c;
  c.noise_var = 0.0;
  scenario::ObjectTruth o;
  o.range_m = 18.0;
  o.radial_velocity_mps = -2.0;
  o.azimuth_rad = 0.0;
  const auto frame = radar::synth_frame({o}, c, 9);
  const auto map = dsp::range_doppler_map(frame);
  const auto cube = dsp::radar_cube(frame, 64);
  const auto dets = dsp::cfar_detect(map, dsp::CfarConfig{});
  const auto labels = dsp::dbscan_cluster(dets, dsp::DbscanConfig{});
  const auto states = dsp::estimate_states(labels, dets, map, cube);
  REQUIRE(states.size() == 1);
  CHECK(states[0].angle_rad == 0.0);
}

TEST_CASE("two separated objects produce two states near their truths") {
  radar::RadarWaveformConfig c;
  c.noise_var = 0.0;
  const auto d = radar::derived_params(c);
  scenario::ObjectTruth o1, o2;
  o1.range_m = 15.0;
  o1.radial_velocity_mps = 4.0;
  o1.azimuth_rad = 0.2;
  o2.range_m = 35.0;
  o2.radial_velocity_mps = -6.0;
  o2.azimuth_rad = -0.4;
  const auto frame = radar::synth_frame({o1, o2}, c, 4);
  const auto map = dsp::range_doppler_map(frame);
  const auto cube = dsp::radar_cube(frame, 64);
  const auto dets = dsp::cfar_detect(map, dsp::CfarConfig{});
  const auto labels = dsp::dbscan_cluster(dets, dsp::DbscanConfig{});
  auto states = dsp::estimate_states(labels, dets, map, cube);
  REQUIRE(states.size() == 2);
  std::sort(states.begin(), states.end(),
            [](const auto& a, const auto& b) { return a.range_m < b.range_m; });
  CHECK(std::abs(states[0].range_m - o1.range_m) <= 1.5 * d.range_res_m);
  CHECK(std::abs(states[1].range_m - o2.range_m) <= 1.5 * d.range_res_m);
  CHECK(std::abs(states[0].velocity_mps - o1.radial_velocity_mps) <= 1.5 * d.vel_res_mps);
  CHECK(std::abs(states[1].velocity_mps - o2.radial_velocity_mps) <= 1.5 * d.vel_res_mps);
}
