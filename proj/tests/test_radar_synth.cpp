#include <doctest.h>

#include <cmath>
#include <complex>

#include "rbtk/radar_dsp.hpp"
#include "rbtk/radar_synth.hpp"

using namespace rbtk;
using radar::RadarWaveformConfig;
using scenario::ObjectTruth;

namespace {
ObjectTruth object(double r, double v, double az, double rcs = 1.0) {
  ObjectTruth o;
  o.range_m = r;
  o.radial_velocity_mps = v;
  o.azimuth_rad = az;
  o.rcs_gain = rcs;
  return o;
}

RadarWaveformConfig noiseless() {
  RadarWaveformConfig c;
  c.noise_var = 0.0;
  return c;
}
}  // namespace

TEST_CASE("derived parameters reproduce the paper-scale radar link budget") {
  const auto d = radar::derived_params(RadarWaveformConfig{});
  CHECK(d.bandwidth_hz == doctest::Approx(768e6).epsilon(1e-12));  // 15e12 * 51.2us
  CHECK(d.max_range_m == doctest::Approx(49.965).epsilon(1e-3));   // ~50 m
  CHECK(d.max_vel_mps == doctest::Approx(14.974).epsilon(1e-3));   // ~54 km/h
  CHECK(d.max_vel_mps * 3.6 == doctest::Approx(53.9).epsilon(2e-3));
  CHECK(d.range_res_m == doctest::Approx(kSpeedOfLight / (2 * 768e6)).epsilon(1e-12));
  CHECK(d.vel_res_mps == doctest::Approx(2.0 * d.max_vel_mps / 128).epsilon(1e-12));
  CHECK(d.t_active_s == doctest::Approx(51.2e-6).epsilon(1e-12));
  CHECK(d.frame_time_s == doctest::Approx(128 * 65e-6).epsilon(1e-12));
}

TEST_CASE("doubling t_pri halves the unambiguous velocity exactly") {
  RadarWaveformConfig c;
  const auto d1 = radar::derived_params(c);
  c.t_pri_s *= 2.0;
  const auto d2 = radar::derived_params(c);
  CHECK(d2.max_vel_mps == doctest::Approx(d1.max_vel_mps / 2.0).epsilon(1e-15));
}

TEST_CASE("single chirp is a tone at the beat frequency (bin formula)") {
  const auto c = noiseless();
  // beat S*2R/c: 3.0 MHz at 30 m -> bin ~153.6; 1.0 MHz at 10 m -> bin ~51.2
  for (double range : {30.0, 10.0}) {
    const double beat_hz = c.slope_hz_per_s * 2.0 * range / kSpeedOfLight;
    const double expected = beat_hz / c.sample_rate_hz * c.n_samples;
    const auto samples = radar::synth_chirp_if(object(range, 0.0, 0.0), c, 0, 0);
    REQUIRE(samples.size() == 256);
    int best = 0;
    double best_mag = -1.0;
    for (int k = 0; k < c.n_samples; ++k) {
      cplx acc{0.0, 0.0};
      for (int n = 0; n < c.n_samples; ++n)
        acc += samples[static_cast<size_t>(n)] *
               std::exp(cplx(0.0, -2.0 * kPi * k * n / c.n_samples));
      if (std::abs(acc) > best_mag) {
        best_mag = std::abs(acc);
        best = k;
      }
    }
    CHECK(std::abs(best - expected) <= 1.0);
    if (range == 30.0) CHECK((best == 153 || best == 154));
    if (range == 10.0) CHECK((best == 51 || best == 52));
  }
}

TEST_CASE("empty object list with zero noise yields an all-zero cube") {
  const auto cube = radar::synth_frame({}, noiseless(), 7);
  for (const auto& v : cube.data) CHECK(v == cplx{0.0, 0.0});
}

TEST_CASE("Doppler phase advance lands in the predicted Doppler bin") {
  auto c = noiseless();
  const auto d = radar::derived_params(c);
  const double v = 5.0;
  const auto cube = radar::synth_frame({object(20.0, v, 0.0)}, c, 1);
  const auto map = dsp::range_doppler_map(cube);
  // independent bin prediction: offset = round(2 v / lambda * t_pri * n_chirps)
  const int offset =
      static_cast<int>(std::lround(2.0 * v / d.wavelength_m * c.t_pri_s * c.n_chirps));
  CHECK(offset == 21);
  int best_r = 0, best_d = 0;
  double best = -1.0;
  for (int r = 0; r < map.n_samples; ++r)
    for (int dd = 0; dd < map.n_chirps; ++dd)
      if (map.at(r, dd) > best) {
        best = map.at(r, dd);
        best_r = r;
        best_d = dd;
      }
  CHECK(std::abs(best_d - (c.n_chirps / 2 + offset)) <= 1);
  const double expected_r =
      c.slope_hz_per_s * 2.0 * 20.0 / kSpeedOfLight / c.sample_rate_hz * c.n_samples;
  CHECK(std::abs(best_r - expected_r) <= 1.0);
}

TEST_CASE("superposition: frame of two objects equals the sum of single-object frames") {
  const auto c = noiseless();
  const auto a = object(15.0, 3.0, 0.2);
  const auto b = object(30.0, -4.0, -0.3, 1.7);
  const auto fa = radar::synth_frame({a}, c, 5);
  const auto fb = radar::synth_frame({b}, c, 5);
  const auto fab = radar::synth_frame({a, b}, c, 5);
  for (size_t i = 0; i < fab.data.size(); ++i)
    CHECK(std::abs(fab.data[i] - (fa.data[i] + fb.data[i])) < 1e-12);
}

TEST_CASE("noiseless chirp energy equals tx_power * rcs / R^4 * n_samples") {
  auto c = noiseless();
  c.tx_power = 2.0;
  const auto o = object(10.0, 0.0, 0.1, 3.0);
  const auto samples = radar::synth_chirp_if(o, c, 3, 2);
  double e = 0.0;
  for (const auto& s : samples) e += std::norm(s);
  const double expected = c.tx_power * o.rcs_gain / std::pow(10.0, 4) * c.n_samples;
  CHECK(e == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("antenna phase progression matches the half-wavelength model") {
  const auto c = noiseless();
  const double az = 0.4;
  const auto a0 = radar::synth_chirp_if(object(12.0, 0.0, az), c, 0, 0);
  const auto a1 = radar::synth_chirp_if(object(12.0, 0.0, az), c, 0, 1);
  const auto a3 = radar::synth_chirp_if(object(12.0, 0.0, az), c, 0, 3);
  const double expected = kPi * std::sin(az);
  for (size_t n = 0; n < a0.size(); n += 37) {
    CHECK(std::arg(a1[n] / a0[n]) == doctest::Approx(expected).epsilon(1e-10));
    const double p3 = std::remainder(3.0 * expected, 2.0 * kPi);
    CHECK(std::arg(a3[n] / a0[n]) == doctest::Approx(p3).epsilon(1e-10));
  }
}

TEST_CASE("seeded noise cube is reproducible and seed-sensitive") {
  auto c = noiseless();
  c.noise_var = 1.0;
  const auto f1 = radar::synth_frame({}, c, 42);
  const auto f2 = radar::synth_frame({}, c, 42);
  const auto f3 = radar::synth_frame({}, c, 43);
  REQUIRE(f1.data.size() == f2.data.size());
  bool all_equal = true, any_differ = false;
  double power = 0.0;
  for (size_t i = 0; i < f1.data.size(); ++i) {
    all_equal = all_equal && (f1.data[i] == f2.data[i]);
    any_differ = any_differ || (f1.data[i] != f3.data[i]);
    power += std::norm(f1.data[i]);
  }
  CHECK(all_equal);
  CHECK(any_differ);
  power /= static_cast<double>(f1.data.size());
  CHECK(power == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("aliasing preconditions are refused, not silently wrapped") {
  const auto c = noiseless();
  const auto d = radar::derived_params(c);
  CHECK_THROWS_AS(radar::synth_frame({object(d.max_range_m + 1.0, 0.0, 0.0)}, c, 1),
                  NumericError);
  CHECK_THROWS_AS(radar::synth_frame({object(20.0, d.max_vel_mps + 0.5, 0.0)}, c, 1),
                  NumericError);
  CHECK_THROWS_AS(radar::synth_chirp_if(object(-5.0, 0.0, 0.0), c, 0, 0), NumericError);
}

TEST_CASE("range-Doppler peak lands within one bin of the analytic prediction") {
  // smaller cube for speed; 200 randomized in-range objects
  RadarWaveformConfig c;
  c.n_samples = 64;
  c.n_chirps = 32;
  c.n_antennas = 2;
  c.noise_var = 0.0;
  const auto d = radar::derived_params(c);
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const double r = rng.uniform(0.05 * d.max_range_m, 0.9 * d.max_range_m);
    const double v = rng.uniform(-0.85 * d.max_vel_mps, 0.85 * d.max_vel_mps);
    const auto cube =
        radar::synth_frame({object(r, v, rng.uniform(-0.7, 0.7))}, c,
                           static_cast<uint64_t>(trial));
    const auto map = dsp::range_doppler_map(cube);
    int best_r = 0, best_d = 0;
    double best = -1.0;
    for (int rr = 0; rr < map.n_samples; ++rr)
      for (int dd = 0; dd < map.n_chirps; ++dd)
        if (map.at(rr, dd) > best) {
          best = map.at(rr, dd);
          best_r = rr;
          best_d = dd;
        }
    const double expect_r = r / d.range_res_m;
    const double expect_d = c.n_chirps / 2.0 + v / d.vel_res_mps;
    CHECK(std::abs(best_r - expect_r) <= 1.0);
    CHECK(std::abs(best_d - expect_d) <= 1.0);
  }
}
