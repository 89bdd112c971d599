#include "rbtk/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "rbtk/tensor_io.hpp"

namespace rbtk::data {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---- config JSON ----

namespace {

scenario::ScenarioConfig scenario_from_json(const ordered_json& j) {
  scenario::ScenarioConfig c;
  c.preset = scenario::preset_from_string(j.at("preset").get<std::string>());
  c.duration_s = j.value("duration_s", c.duration_s);
  c.sample_rate_hz = j.value("sample_rate_hz", c.sample_rate_hz);
  c.n_clutter = j.value("n_clutter", c.n_clutter);
  c.seed = j.value("seed", c.seed);
  if (j.contains("speed_params")) {
    const auto& s = j.at("speed_params");
    auto& sp = c.speed;
    sp.gap_m = s.value("gap_m", sp.gap_m);
    sp.cpa_gap_m = s.value("cpa_gap_m", sp.cpa_gap_m);
    sp.along_speed_mps = s.value("along_speed_mps", sp.along_speed_mps);
    sp.lateral_speed_mps = s.value("lateral_speed_mps", sp.lateral_speed_mps);
    sp.lane_gap_m = s.value("lane_gap_m", sp.lane_gap_m);
    sp.closing_speed_mps = s.value("closing_speed_mps", sp.closing_speed_mps);
    sp.start_offset_m = s.value("start_offset_m", sp.start_offset_m);
    sp.end_offset_m = s.value("end_offset_m", sp.end_offset_m);
    sp.turn_range_m = s.value("turn_range_m", sp.turn_range_m);
    sp.range_rate_mps = s.value("range_rate_mps", sp.range_rate_mps);
    sp.start_azimuth_rad = s.value("start_azimuth_rad", sp.start_azimuth_rad);
    sp.turn_rate_rps = s.value("turn_rate_rps", sp.turn_rate_rps);
    sp.direction = s.value("direction", sp.direction);
  }
  return c;
}

ordered_json scenario_to_json(const scenario::ScenarioConfig& c) {
  const auto& sp = c.speed;
  return ordered_json{
      {"preset", scenario::to_string(c.preset)},
      {"duration_s", c.duration_s},
      {"sample_rate_hz", c.sample_rate_hz},
      {"n_clutter", c.n_clutter},
      {"seed", c.seed},
      {"speed_params",
       ordered_json{{"gap_m", sp.gap_m},
                    {"cpa_gap_m", sp.cpa_gap_m},
                    {"along_speed_mps", sp.along_speed_mps},
                    {"lateral_speed_mps", sp.lateral_speed_mps},
                    {"lane_gap_m", sp.lane_gap_m},
                    {"closing_speed_mps", sp.closing_speed_mps},
                    {"start_offset_m", sp.start_offset_m},
                    {"end_offset_m", sp.end_offset_m},
                    {"turn_range_m", sp.turn_range_m},
                    {"range_rate_mps", sp.range_rate_mps},
                    {"start_azimuth_rad", sp.start_azimuth_rad},
                    {"turn_rate_rps", sp.turn_rate_rps},
                    {"direction", sp.direction}}}};
}

radar::RadarWaveformConfig radar_from_json(const ordered_json& j) {
  radar::RadarWaveformConfig c;
  c.f0_hz = j.value("f0_hz", c.f0_hz);
  c.slope_hz_per_s = j.value("slope_hz_per_s", c.slope_hz_per_s);
  c.sample_rate_hz = j.value("sample_rate_hz", c.sample_rate_hz);
  c.n_samples = j.value("n_samples", c.n_samples);
  c.n_chirps = j.value("n_chirps", c.n_chirps);
  c.n_antennas = j.value("n_antennas", c.n_antennas);
  c.t_pri_s = j.value("t_pri_s", c.t_pri_s);
  c.tx_power = j.value("tx_power", c.tx_power);
  c.noise_var = j.value("noise_var", c.noise_var);
  return c;
}

ordered_json radar_to_json(const radar::RadarWaveformConfig& c) {
  return ordered_json{{"f0_hz", c.f0_hz},
                      {"slope_hz_per_s", c.slope_hz_per_s},
                      {"sample_rate_hz", c.sample_rate_hz},
                      {"n_samples", c.n_samples},
                      {"n_chirps", c.n_chirps},
                      {"n_antennas", c.n_antennas},
                      {"t_pri_s", c.t_pri_s},
                      {"tx_power", c.tx_power},
                      {"noise_var", c.noise_var}};
}

comm::ArrayConfig array_from_json(const ordered_json& j) {
  comm::ArrayConfig c;
  c.n_elements = j.value("n_elements", c.n_elements);
  c.spacing_wavelengths = j.value("spacing_wavelengths", c.spacing_wavelengths);
  if (j.contains("sector")) c.sector = comm::sector_from_string(j.at("sector"));
  return c;
}

ordered_json array_to_json(const comm::ArrayConfig& c) {
  return ordered_json{{"n_elements", c.n_elements},
                      {"spacing_wavelengths", c.spacing_wavelengths},
                      {"sector", comm::to_string(c.sector)}};
}

ordered_json sim_to_json(const SimulationConfig& cfg) {
  ordered_json j;
  j["scenario"] = scenario_to_json(cfg.scenario);
  j["radar"] = radar_to_json(cfg.radar);
  j["array"] = array_to_json(cfg.array);
  j["codebook_size"] = cfg.codebook_size;
  return j;
}

ordered_json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError("malformed JSON in " + what + ": " + e.what());
  }
}

}  // namespace

SimulationConfig simulation_config_from_json_text(const std::string& text) {
  const ordered_json j = parse_json_text(text, "simulation config");
  SimulationConfig cfg;
  if (!j.contains("scenario")) throw ConfigError("simulation config needs a 'scenario' object");
  cfg.scenario = scenario_from_json(j.at("scenario"));
  if (j.contains("radar")) cfg.radar = radar_from_json(j.at("radar"));
  if (j.contains("array")) cfg.array = array_from_json(j.at("array"));
  cfg.codebook_size = j.value("codebook_size", cfg.codebook_size);
  cfg.scenario.validate();
  cfg.radar.validate();
  cfg.array.validate();
  if (cfg.codebook_size < cfg.array.n_elements)
    throw ConfigError("codebook_size must be >= the array element count");
  return cfg;
}

SimulationConfig simulation_config_from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open scenario config file: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return simulation_config_from_json_text(text);
}

std::string simulation_config_to_json_text(const SimulationConfig& cfg) {
  return sim_to_json(cfg).dump(2) + "\n";
}

// ---- simulate ----

LabeledFrame label_frame(const scenario::SceneTimeline& tl, int timestep,
                         const radar::RadarWaveformConfig& rcfg,
                         const comm::ArrayConfig& acfg, const comm::BeamCodebook& cb,
                         uint64_t scenario_seed) {
  if (timestep < 0 || timestep >= static_cast<int>(tl.timestamps_s.size()))
    throw ConfigError("label_frame timestep out of range");
  const size_t k = static_cast<size_t>(timestep);
  std::vector<scenario::ObjectTruth> objects;
  objects.push_back(tl.transmitter[k]);
  for (const auto& c : tl.clutter[k]) objects.push_back(c);
  LabeledFrame out;
  out.cube = radar::synth_frame(objects, rcfg,
                                mix_seed(scenario_seed, 0xF0A3u, static_cast<uint64_t>(timestep)));
  out.cube.timestamp_s = tl.timestamps_s[k];
  const auto paths = scenario::truth_to_channel_paths(tl.transmitter[k], scenario_seed);
  out.beam = comm::optimal_beam(comm::channel_vector({paths}, acfg), cb).beam;
  return out;
}

std::vector<int> simulate_scene(const SimulationConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const auto tl = scenario::generate_timeline(cfg.scenario);
  const auto cb = comm::build_codebook(cfg.array, cfg.codebook_size);
  const int n = static_cast<int>(tl.timestamps_s.size());

  {
    std::ofstream f(out_dir + "/timeline.csv");
    if (!f) throw IoError("cannot write timeline.csv in " + out_dir);
    scenario::export_timeline_csv(tl, f);
  }

  std::vector<int> beams(static_cast<size_t>(n), 0);
  std::ofstream frames(out_dir + "/frames.bin", std::ios::binary);
  if (!frames) throw IoError("cannot write frames.bin in " + out_dir);

  // Frames are synthesized in parallel chunks but written in time order;
  // per-frame RNG streams keep the output independent of the chunking.
  const int chunk = 32;
  std::vector<radar::RadarFrameCube> cubes(static_cast<size_t>(chunk));
  for (int begin = 0; begin < n; begin += chunk) {
    const int m = std::min(chunk, n - begin);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int i = 0; i < m; ++i) {
      const int k = begin + i;
      auto lf = label_frame(tl, k, cfg.radar, cfg.array, cb, cfg.scenario.seed);
      cubes[static_cast<size_t>(i)] = std::move(lf.cube);
      beams[static_cast<size_t>(k)] = lf.beam;
    }
    for (int i = 0; i < m; ++i) {
      const auto& cube = cubes[static_cast<size_t>(i)];
      io::write_record(frames,
                       {static_cast<uint32_t>(cfg.radar.n_antennas),
                        static_cast<uint32_t>(cfg.radar.n_samples),
                        static_cast<uint32_t>(cfg.radar.n_chirps)},
                       cube.data);
    }
  }
  frames.close();

  {
    std::ofstream f(out_dir + "/labels.csv");
    if (!f) throw IoError("cannot write labels.csv in " + out_dir);
    f << "t,beam\n";
    char buf[64];
    for (int k = 0; k < n; ++k) {
      std::snprintf(buf, sizeof(buf), "%.17g,%d\n", tl.timestamps_s[static_cast<size_t>(k)],
                    beams[static_cast<size_t>(k)]);
      f << buf;
    }
  }

  ordered_json manifest;
  manifest["format_version"] = io::kFormatVersion;
  manifest["command"] = "simulate";
  manifest["config"] = sim_to_json(cfg);
  manifest["seed"] = cfg.scenario.seed;
  manifest["n_frames"] = n;
  manifest["artifacts"] = ordered_json{
      {"frames.bin", io::to_hex(io::hash_file(out_dir + "/frames.bin"))},
      {"labels.csv", io::to_hex(io::hash_file(out_dir + "/labels.csv"))},
      {"timeline.csv", io::to_hex(io::hash_file(out_dir + "/timeline.csv"))}};
  std::ofstream mf(out_dir + "/manifest.json");
  if (!mf) throw IoError("cannot write manifest.json in " + out_dir);
  mf << manifest.dump(2) << "\n";
  return beams;
}

// ---- sequences & split ----

std::vector<SequenceInfo> make_sequences(const std::vector<int>& beams,
                                         const std::vector<double>& times,
                                         int frame_offset, int window, int stride,
                                         bool keep_changing_only) {
  if (beams.size() != times.size()) throw ConfigError("beams/times length mismatch");
  if (window < 1 || stride < 1) throw ConfigError("window and stride must be positive");
  if (window != 10) throw ConfigError("sequence window is fixed to 10 frames");
  const int n = static_cast<int>(beams.size());
  if (n < window) throw ConfigError("too few frames for one sequence window");
  std::vector<SequenceInfo> out;
  for (int s = 0; s + window <= n; s += stride) {
    SequenceInfo q;
    q.frame_begin = frame_offset + s;
    for (int i = 0; i < window; ++i)
      q.beams[static_cast<size_t>(i)] = beams[static_cast<size_t>(s + i)];
    q.t_begin = times[static_cast<size_t>(s)];
    q.t_end = times[static_cast<size_t>(s + window - 1)];
    if (keep_changing_only) {
      bool changing = false;
      for (int i = 1; i < window; ++i)
        if (q.beams[static_cast<size_t>(i)] != q.beams[0]) changing = true;
      if (!changing) continue;
    }
    out.push_back(q);
  }
  return out;
}

SplitResult split_by_time(std::vector<SequenceInfo>& seqs, double ratio) {
  if (seqs.size() < 2) throw ConfigError("too few sequences to split");
  if (!(ratio > 0.0) || !(ratio < 1.0)) throw ConfigError("split ratio must be in (0,1)");
  std::sort(seqs.begin(), seqs.end(), [](const SequenceInfo& a, const SequenceInfo& b) {
    if (a.t_begin != b.t_begin) return a.t_begin < b.t_begin;
    return a.frame_begin < b.frame_begin;
  });

  std::vector<double> ends;
  ends.reserve(seqs.size());
  for (const auto& s : seqs) ends.push_back(s.t_end);
  std::vector<double> begins_sorted;
  begins_sorted.reserve(seqs.size());
  for (const auto& s : seqs) begins_sorted.push_back(s.t_begin);
  std::sort(begins_sorted.begin(), begins_sorted.end());
  std::vector<double> ends_sorted = ends;
  std::sort(ends_sorted.begin(), ends_sorted.end());

  double best_boundary = 0.0;
  double best_err = 2.0;
  int best_train = 0, best_test = 0;
  for (double boundary : ends_sorted) {
    const auto n_train = static_cast<int>(
        std::upper_bound(ends_sorted.begin(), ends_sorted.end(), boundary) -
        ends_sorted.begin());
    const auto n_test = static_cast<int>(
        begins_sorted.end() -
        std::upper_bound(begins_sorted.begin(), begins_sorted.end(), boundary));
    const int kept = n_train + n_test;
    if (n_train == 0 || n_test == 0) continue;
    const double err =
        std::abs(static_cast<double>(n_train) / static_cast<double>(kept) - ratio);
    if (err < best_err - 1e-12) {
      best_err = err;
      best_boundary = boundary;
      best_train = n_train;
      best_test = n_test;
    }
  }
  if (best_train == 0) throw ConfigError("no time boundary yields a non-empty split");

  SplitResult r;
  r.boundary_time_s = best_boundary;
  r.n_train = best_train;
  r.n_test = best_test;
  for (auto& s : seqs) {
    if (s.t_end <= best_boundary)
      s.split = Split::train;
    else if (s.t_begin > best_boundary)
      s.split = Split::test;
    else {
      s.split = Split::dropped;
      ++r.n_dropped;
    }
  }
  return r;
}

// ---- make_dataset ----

namespace {

struct SceneMeta {
  std::string dir;
  SimulationConfig cfg;
  int n_frames = 0;
  std::vector<int> beams;
  std::vector<double> times;  // local
};

SceneMeta read_scene(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw IoError("missing manifest.json in scene dir " + dir);
  ordered_json j;
  try {
    mf >> j;
  } catch (const std::exception& e) {
    throw IoError("malformed manifest.json in " + dir + ": " + e.what());
  }
  SceneMeta m;
  m.dir = dir;
  m.cfg = simulation_config_from_json_text(j.at("config").dump());
  m.n_frames = j.at("n_frames").get<int>();

  std::ifstream lf(dir + "/labels.csv");
  if (!lf) throw IoError("missing labels.csv in scene dir " + dir);
  std::string line;
  std::getline(lf, line);  // header
  while (std::getline(lf, line)) {
    if (line.empty()) continue;
    double t = 0.0;
    int beam = 0;
    if (std::sscanf(line.c_str(), "%lg,%d", &t, &beam) != 2)
      throw IoError("malformed labels.csv row in " + dir + ": " + line);
    m.times.push_back(t);
    m.beams.push_back(beam);
  }
  if (static_cast<int>(m.beams.size()) != m.n_frames)
    throw IoError("labels.csv row count does not match manifest n_frames in " + dir);
  return m;
}

}  // namespace

DatasetSummary make_dataset(const std::vector<std::string>& scene_dirs,
                            const std::string& out_dir, const MakeDatasetOptions& opt) {
  if (scene_dirs.empty()) throw ConfigError("make_dataset needs at least one scene dir");
  fs::create_directories(out_dir);

  std::vector<SceneMeta> scenes;
  for (const auto& d : scene_dirs) scenes.push_back(read_scene(d));
  for (size_t i = 1; i < scenes.size(); ++i) {
    const auto same_hw = [&](const SimulationConfig& a, const SimulationConfig& b) {
      return a.radar.n_samples == b.radar.n_samples && a.radar.n_chirps == b.radar.n_chirps &&
             a.radar.n_antennas == b.radar.n_antennas &&
             a.array.n_elements == b.array.n_elements && a.codebook_size == b.codebook_size;
    };
    if (!same_hw(scenes[0].cfg, scenes[i].cfg))
      throw ConfigError("scene dirs mix incompatible radar/array configurations");
  }

  // Scenes get disjoint global time offsets; a 10 s gap keeps windows from
  // different scenes well separated for the split.
  constexpr double kSceneGap = 10.0;
  std::vector<double> offsets(scenes.size(), 0.0);
  for (size_t i = 1; i < scenes.size(); ++i)
    offsets[i] = offsets[i - 1] + scenes[i - 1].cfg.scenario.duration_s + kSceneGap;

  std::vector<SequenceInfo> seqs;
  std::vector<double> frame_times;
  std::vector<int> frame_beams;
  int frame_offset = 0;
  for (size_t i = 0; i < scenes.size(); ++i) {
    std::vector<double> gtimes = scenes[i].times;
    for (auto& t : gtimes) t += offsets[i];
    auto s = make_sequences(scenes[i].beams, gtimes, frame_offset, opt.window, opt.stride,
                            opt.filter_changing);
    seqs.insert(seqs.end(), s.begin(), s.end());
    frame_times.insert(frame_times.end(), gtimes.begin(), gtimes.end());
    frame_beams.insert(frame_beams.end(), scenes[i].beams.begin(), scenes[i].beams.end());
    frame_offset += scenes[i].n_frames;
  }
  // A fully static scene with the changing-beam filter can leave nothing;
  // that yields an empty (but valid) dataset rather than an error.
  SplitResult split;
  if (!seqs.empty()) {
    split = split_by_time(seqs, opt.train_ratio);
    for (size_t i = 0; i < seqs.size(); ++i) seqs[i].id = static_cast<int>(i);
  }

  // concatenate frame records
  {
    std::ofstream out(out_dir + "/frames.bin", std::ios::binary);
    if (!out) throw IoError("cannot write frames.bin in " + out_dir);
    for (const auto& sc : scenes) {
      std::ifstream in(sc.dir + "/frames.bin", std::ios::binary);
      if (!in) throw IoError("missing frames.bin in scene dir " + sc.dir);
      out << in.rdbuf();
    }
  }

  {
    std::ofstream f(out_dir + "/labels.csv");
    if (!f) throw IoError("cannot write labels.csv in " + out_dir);
    f << "t,beam,sequence_id,split\n";
    const char* split_names[3] = {"train", "test", "dropped"};
    char buf[96];
    for (const auto& q : seqs)
      for (int i = 0; i < opt.window; ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%d,%d,%s\n",
                      frame_times[static_cast<size_t>(q.frame_begin + i)],
                      q.beams[static_cast<size_t>(i)], q.id,
                      split_names[static_cast<int>(q.split)]);
        f << buf;
      }
  }

  DatasetSummary sum;
  sum.n_frames = frame_offset;
  sum.n_train = split.n_train;
  sum.n_test = split.n_test;
  sum.n_dropped = split.n_dropped;
  sum.n_sequences = split.n_train + split.n_test;
  sum.boundary_time_s = split.boundary_time_s;

  ordered_json manifest;
  manifest["format_version"] = io::kFormatVersion;
  manifest["command"] = "make-dataset";
  manifest["radar"] = radar_to_json(scenes[0].cfg.radar);
  manifest["array"] = array_to_json(scenes[0].cfg.array);
  manifest["codebook_size"] = scenes[0].cfg.codebook_size;
  manifest["window"] = opt.window;
  manifest["stride"] = opt.stride;
  manifest["filter_changing"] = opt.filter_changing;
  manifest["train_ratio"] = opt.train_ratio;
  ordered_json jscenes = ordered_json::array();
  for (size_t i = 0; i < scenes.size(); ++i)
    jscenes.push_back(ordered_json{{"dir", scenes[i].dir},
                                   {"seed", scenes[i].cfg.scenario.seed},
                                   {"preset", scenario::to_string(scenes[i].cfg.scenario.preset)},
                                   {"n_frames", scenes[i].n_frames},
                                   {"time_offset_s", offsets[i]}});
  manifest["scenes"] = jscenes;
  manifest["n_frames"] = sum.n_frames;
  manifest["counts"] = ordered_json{{"sequences", sum.n_sequences},
                                    {"train", sum.n_train},
                                    {"test", sum.n_test},
                                    {"dropped", sum.n_dropped}};
  manifest["boundary_time_s"] = sum.boundary_time_s;
  ordered_json jframes = ordered_json::array();
  for (size_t k = 0; k < frame_times.size(); ++k)
    jframes.push_back(ordered_json{{"t", frame_times[k]}, {"beam", frame_beams[k]}});
  manifest["frames"] = jframes;
  ordered_json jseqs = ordered_json::array();
  for (const auto& q : seqs)
    jseqs.push_back(ordered_json{{"id", q.id},
                                 {"frame_begin", q.frame_begin},
                                 {"split", static_cast<int>(q.split)},
                                 {"beams", q.beams}});
  manifest["sequences"] = jseqs;
  manifest["artifacts"] = ordered_json{
      {"frames.bin", io::to_hex(io::hash_file(out_dir + "/frames.bin"))},
      {"labels.csv", io::to_hex(io::hash_file(out_dir + "/labels.csv"))}};
  std::ofstream mf(out_dir + "/manifest.json");
  if (!mf) throw IoError("cannot write manifest.json in " + out_dir);
  mf << manifest.dump(2) << "\n";
  return sum;
}

// ---- load & process ----

Dataset load_dataset(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw IoError("missing manifest.json in dataset dir " + dir);
  ordered_json j;
  try {
    mf >> j;
  } catch (const std::exception& e) {
    throw IoError("malformed dataset manifest in " + dir + ": " + e.what());
  }
  Dataset ds;
  ds.dir = dir;
  ds.radar = radar_from_json(j.at("radar"));
  ds.array = array_from_json(j.at("array"));
  ds.codebook_size = j.at("codebook_size").get<int>();
  ds.window = j.at("window").get<int>();
  for (const auto& fj : j.at("frames")) {
    ds.frame_times.push_back(fj.at("t").get<double>());
    ds.frame_beams.push_back(fj.at("beam").get<int>());
  }
  for (const auto& sj : j.at("sequences")) {
    SequenceInfo q;
    q.id = sj.at("id").get<int>();
    q.frame_begin = sj.at("frame_begin").get<int>();
    q.split = static_cast<Split>(sj.at("split").get<int>());
    const auto beams = sj.at("beams").get<std::vector<int>>();
    if (beams.size() != 10) throw IoError("sequence beams must have 10 entries");
    std::copy(beams.begin(), beams.end(), q.beams.begin());
    q.t_begin = ds.frame_times[static_cast<size_t>(q.frame_begin)];
    q.t_end = ds.frame_times[static_cast<size_t>(q.frame_begin + ds.window - 1)];
    ds.sequences.push_back(q);
  }
  ds.summary.n_frames = j.at("n_frames").get<int>();
  ds.summary.n_sequences = j.at("counts").at("sequences").get<int>();
  ds.summary.n_train = j.at("counts").at("train").get<int>();
  ds.summary.n_test = j.at("counts").at("test").get<int>();
  ds.summary.n_dropped = j.at("counts").at("dropped").get<int>();
  ds.summary.boundary_time_s = j.at("boundary_time_s").get<double>();
  if (static_cast<int>(ds.frame_times.size()) != ds.summary.n_frames)
    throw IoError("dataset manifest frame table size mismatch");
  return ds;
}

ProcessedFrames process_frames(const Dataset& ds, const dsp::CfarConfig& cfar,
                               const dsp::DbscanConfig& dbscan, int n_angle_bins) {
  std::ifstream f(ds.dir + "/frames.bin", std::ios::binary);
  if (!f) throw IoError("missing frames.bin in dataset dir " + ds.dir);

  const int n = ds.summary.n_frames;
  ProcessedFrames pf;
  pf.map_h = ds.radar.n_samples;
  pf.map_w = ds.radar.n_chirps;
  pf.maps.resize(static_cast<size_t>(n));
  pf.states.resize(static_cast<size_t>(n));

  const int chunk = 32;
  std::vector<radar::RadarFrameCube> cubes(static_cast<size_t>(chunk));
  for (int begin = 0; begin < n; begin += chunk) {
    const int m = std::min(chunk, n - begin);
    for (int i = 0; i < m; ++i) {
      io::TensorRecord rec = io::read_record(f);
      if (rec.dims[0] != static_cast<uint32_t>(ds.radar.n_antennas) ||
          rec.dims[1] != static_cast<uint32_t>(ds.radar.n_samples) ||
          rec.dims[2] != static_cast<uint32_t>(ds.radar.n_chirps))
        throw IoError("frame record dims do not match the dataset radar config");
      auto& cube = cubes[static_cast<size_t>(i)];
      cube.config = ds.radar;
      cube.timestamp_s = ds.frame_times[static_cast<size_t>(begin + i)];
      cube.data.resize(rec.values.size());
      for (size_t v = 0; v < rec.values.size(); ++v)
        cube.data[v] = cplx(rec.values[v].real(), rec.values[v].imag());
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int i = 0; i < m; ++i) {
      const int k = begin + i;
      const auto map = dsp::range_doppler_map(cubes[static_cast<size_t>(i)]);
      const auto cube3 = dsp::radar_cube(cubes[static_cast<size_t>(i)], n_angle_bins);
      const auto dets = dsp::cfar_detect(map, cfar);
      const auto labels = dsp::dbscan_cluster(dets, dbscan);
      pf.states[static_cast<size_t>(k)] = dsp::estimate_states(labels, dets, map, cube3);
      const auto pre = models::preprocess_map(
          std::span<const double>(map.values), pf.map_h, pf.map_w);
      auto& dst = pf.maps[static_cast<size_t>(k)];
      dst.resize(pre.size());
      for (size_t v = 0; v < pre.size(); ++v) dst[v] = static_cast<float>(pre.v[v]);
    }
  }
  return pf;
}

std::vector<TxSequenceStates> build_tx_states(const Dataset& ds,
                                              const ProcessedFrames& pf,
                                              const comm::BeamCodebook& cb,
                                              const track::TrackerConfig& tcfg) {
  const auto derived = radar::derived_params(ds.radar);
  std::vector<TxSequenceStates> out(ds.sequences.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (size_t qi = 0; qi < ds.sequences.size(); ++qi) {
    const auto& q = ds.sequences[qi];
    auto& r = out[qi];
    r.sequence_id = q.id;
    for (int to = 1; to <= 10; ++to) {
      std::vector<std::vector<dsp::ObjectState>> frames;
      frames.reserve(static_cast<size_t>(to));
      for (int i = 10 - to; i < 10; ++i)
        frames.push_back(pf.states[static_cast<size_t>(q.frame_begin + i)]);
      try {
        const auto tracked =
            track::run_tracker(frames, q.beams[static_cast<size_t>(10 - to)], cb, tcfg);
        r.states_by_to[static_cast<size_t>(to - 1)] =
            models::normalize_tx_states(tracked, derived);
        r.valid[static_cast<size_t>(to - 1)] = 1;
      } catch (const NumericError&) {
        r.valid[static_cast<size_t>(to - 1)] = 0;  // lost track / empty first frame
      }
    }
  }
  return out;
}

}  // namespace rbtk::data
