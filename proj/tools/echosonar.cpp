#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "echosonar/augment.hpp"
#include "echosonar/chirp.hpp"
#include "echosonar/echo.hpp"
#include "echosonar/error.hpp"
#include "echosonar/io.hpp"
#include "echosonar/pipeline.hpp"
#include "echosonar/sim.hpp"

using namespace echosonar;
using json = nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError(path + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IngestionError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IngestionError(path + ": cannot write");
  out << text << '\n';
}

NoiseModel::Kind noise_kind(const std::string& name) {
  if (name == "gaussian") return NoiseModel::Kind::gaussian;
  if (name == "music") return NoiseModel::Kind::music;
  if (name == "tone") return NoiseModel::Kind::tone;
  throw ParameterError("unknown noise kind '" + name + "'");
}

// Scene file: direct path, reflectors (fixed, keyframed or oscillating),
// jitter, noise, device preset, and optionally a pose file driving a hand.
struct SceneFile {
  SceneSpec scene;
  double duration = 1.0;
};

SceneFile read_scene_file(const std::string& path) {
  const json j = read_json_file(path);
  SceneFile out;
  SceneSpec& s = out.scene;
  try {
    out.duration = j.value("duration", 1.0);
    s.direct_path_delay = j.value("direct_path_delay", s.direct_path_delay);
    s.direct_path_gain = j.value("direct_path_gain", s.direct_path_gain);
    if (j.contains("device_preset")) s.device_preset = j.at("device_preset").get<std::string>();
    for (const json& r : j.value("reflectors", json::array())) {
      const double rho = r.at("reflectivity").get<double>();
      if (r.contains("distance")) {
        s.reflectors.push_back(Reflector::fixed(r.at("distance").get<double>(), rho));
      } else if (r.contains("trajectory")) {
        Reflector ref;
        ref.reflectivity = rho;
        for (const json& k : r.at("trajectory")) ref.trajectory.push_back({k.at(0).get<double>(), k.at(1).get<double>()});
        s.reflectors.push_back(ref);
      } else if (r.contains("oscillating")) {
        const json& o = r.at("oscillating");
        s.reflectors.push_back(Reflector::oscillating(o.at("near").get<double>(), o.at("far").get<double>(),
                                                      o.at("speed").get<double>(), out.duration, rho,
                                                      o.value("approach_first", false)));
      } else {
        throw ParameterError("reflector needs distance, trajectory or oscillating");
      }
    }
    if (j.contains("jitter")) {
      const json& jt = j.at("jitter");
      const std::string kind = jt.value("kind", "none");
      if (kind == "uniform") {
        s.jitter = {JitterModel::Kind::uniform, jt.at("max_offset").get<int>(), {}};
      } else if (kind == "periodic") {
        s.jitter = {JitterModel::Kind::periodic, 0, jt.at("pattern").get<std::vector<int>>()};
      } else if (kind != "none") {
        throw ParameterError("unknown jitter kind '" + kind + "'");
      }
    }
    for (const json& n : j.value("noise", json::array())) {
      NoiseModel m;
      m.kind = noise_kind(n.at("kind").get<std::string>());
      m.snr_db = n.value("snr_db", m.snr_db);
      m.level_dba = n.value("level_dba", m.level_dba);
      m.cutoff_hz = n.value("cutoff_hz", m.cutoff_hz);
      m.frequency_hz = n.value("frequency_hz", m.frequency_hz);
      s.noise.push_back(m);
    }
    if (j.contains("hand_poses")) {
      std::filesystem::path p = j.at("hand_poses").get<std::string>();
      if (p.is_relative()) p = std::filesystem::path(path).parent_path() / p;
      const auto frames = read_pose_file(p.string());
      PoseToReflectors mapping;
      mapping.base = s;
      s = hand_scene_from_poses(frames, mapping);
    }
  } catch (const json::exception& e) {
    throw IngestionError(path + ": " + e.what());
  }
  return out;
}

std::pair<EchoProfile, EchoProfile> read_profile_pair(const std::string& path) {
  const auto records = read_records(path);
  if (records.size() != 2 || records[0].kind != RecordKind::original_profile ||
      records[1].kind != RecordKind::differential_profile)
    throw IngestionError(path + ": expected an original and a differential profile record");
  auto as_profile = [](const Record& r, ProfileKind kind) {
    EchoProfile p;
    p.values = r.values;
    p.frame_duration = r.scalar;
    p.kind = kind;
    return p;
  };
  return {as_profile(records[0], ProfileKind::original), as_profile(records[1], ProfileKind::differential)};
}

void write_profile_pair(const std::string& path, const EchoProfile& original, const EchoProfile& differential) {
  write_records(path, {{RecordKind::original_profile, original.frame_duration, original.values},
                       {RecordKind::differential_profile, differential.frame_duration, differential.values}});
}

std::vector<Record> window_records(const std::string& path) {
  auto records = read_records(path);
  for (const Record& r : records) {
    if (r.kind != RecordKind::window) throw IngestionError(path + ": expected window records only");
  }
  return records;
}

std::vector<PairedSample> read_shards(const std::vector<std::string>& paths) {
  std::vector<PairedSample> all;
  for (const auto& p : paths) {
    auto part = read_paired_shard(p);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

Protocol protocol_from(const std::string& name) {
  if (name == "within_session") return Protocol::within_session;
  if (name == "cross_session") return Protocol::cross_session;
  if (name == "cross_user") return Protocol::cross_user;
  throw UsageError("--protocol must be within_session, cross_session or cross_user");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acoustic echo-profile hand tracking toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // chirp
  std::string chirp_out;
  int chirp_frames = 80;
  auto* chirp = app.add_subcommand("chirp", "Write a repeated transmit chirp stream to a WAV file");
  chirp->add_option("--out", chirp_out, "Output WAV")->required();
  chirp->add_option("--frames", chirp_frames, "Number of chirp frames")->check(CLI::PositiveNumber);

  // simulate
  std::string sim_scene, sim_out;
  std::optional<double> sim_duration;
  std::uint64_t sim_seed = 0;
  auto* simulate_cmd = app.add_subcommand("simulate", "Render a scene file to a microphone WAV");
  simulate_cmd->add_option("--scene", sim_scene, "Scene JSON")->required();
  simulate_cmd->add_option("--out", sim_out, "Output WAV")->required();
  simulate_cmd->add_option("--duration", sim_duration, "Seconds (overrides the scene file)");
  simulate_cmd->add_option("--seed", sim_seed, "Noise and jitter seed");

  // echo
  std::string echo_in, echo_out;
  bool echo_calibrate = false;
  auto* echo = app.add_subcommand("echo", "WAV to original and differential echo profiles");
  echo->add_option("--in", echo_in, "Input WAV")->required();
  echo->add_option("--out", echo_out, "Output profile file")->required();
  echo->add_flag("--calibrate", echo_calibrate, "Apply peak realignment and the drift filter");

  // calibrate
  std::string cal_in, cal_out;
  EchoPipelineSpec cal_spec;
  auto* calibrate = app.add_subcommand("calibrate", "Realign peaks and median-filter a profile file");
  calibrate->add_option("--in", cal_in, "Input profile file")->required();
  calibrate->add_option("--out", cal_out, "Output profile file")->required();
  calibrate->add_option("--median-kernel", cal_spec.median_kernel, "Drift filter length (frames)");
  calibrate->add_option("--window-frames", cal_spec.realign.window_frames, "Realignment window (frames)");
  calibrate->add_option("--deviation-threshold", cal_spec.realign.deviation_threshold, "Bins");
  calibrate->add_option("--max-shift", cal_spec.realign.max_shift, "Bins");

  // window
  std::string win_in, win_out;
  WindowSpec win_spec;
  Eigen::Index win_crop = -1;
  bool win_raw = false;
  auto* window = app.add_subcommand("window", "Cut a profile file into echo windows");
  window->add_option("--in", win_in, "Input profile file")->required();
  window->add_option("--out", win_out, "Output window shard")->required();
  window->add_option("--frames", win_spec.window_frames, "Window length (frames)");
  window->add_option("--stride", win_spec.stride_frames, "Stride (frames)");
  window->add_option("--bins", win_spec.range_bins, "Range bins kept");
  window->add_option("--crop-start", win_crop, "First kept row (default: direct-path row)");
  window->add_flag("--no-normalize", win_raw, "Skip the per-channel z-score");

  // augment
  std::string aug_in, aug_out;
  AugmentSpec aug_spec;
  int aug_copies = 1;
  std::uint64_t aug_seed = 0;
  auto* augment = app.add_subcommand("augment", "Randomly augment a window shard");
  augment->add_option("--in", aug_in, "Input window shard")->required();
  augment->add_option("--out", aug_out, "Output window shard")->required();
  augment->add_option("--copies", aug_copies, "Augmented copies per window")->check(CLI::PositiveNumber);
  augment->add_option("--shift", aug_spec.vertical_shift_bins, "Maximum vertical shift (bins)");
  augment->add_option("--amp-prob", aug_spec.amp_prob, "Amplitude scaling probability");
  augment->add_option("--mask-prob", aug_spec.mask_prob, "Masking probability");
  augment->add_option("--seed", aug_seed, "Random seed");

  // pair
  std::string pair_manifest, pair_out;
  auto* pair = app.add_subcommand("pair", "Pair a session's echo windows with its poses");
  pair->add_option("--manifest", pair_manifest, "Session manifest JSON")->required();
  pair->add_option("--out", pair_out, "Output paired shard")->required();

  // split
  std::vector<std::string> split_manifests, split_holdout;
  std::string split_protocol = "cross_session", split_out;
  auto* split_cmd = app.add_subcommand("split", "Assign sessions to train and test");
  split_cmd->add_option("--manifests", split_manifests, "Session manifests")->required();
  split_cmd->add_option("--protocol", split_protocol, "within_session | cross_session | cross_user");
  split_cmd->add_option("--holdout", split_holdout, "Held-out user ids or session ids");
  split_cmd->add_option("--out", split_out, "Output JSON (default: stdout)");

  // fit
  std::vector<std::string> fit_train;
  std::string fit_out, fit_estimator = "knn";
  int fit_k = 3;
  auto* fit = app.add_subcommand("fit", "Fit a pose estimator on paired shards");
  fit->add_option("--train", fit_train, "Paired shards")->required();
  fit->add_option("--out", fit_out, "Output model file")->required();
  fit->add_option("--estimator", fit_estimator, "knn | mean | oracle")
      ->check(CLI::IsMember({"knn", "mean", "oracle"}));
  fit->add_option("--k", fit_k, "Neighbours for knn");

  // evaluate
  std::vector<std::string> eval_test;
  std::string eval_model, eval_out;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate a model on paired shards");
  evaluate_cmd->add_option("--model", eval_model, "Model file")->required();
  evaluate_cmd->add_option("--test", eval_test, "Paired shards")->required();
  evaluate_cmd->add_option("--out", eval_out, "Report JSON (default: stdout)");

  // render
  std::string render_in, render_out;
  double render_clip = 1e10;
  bool render_diff = false;
  auto* render = app.add_subcommand("render", "Render a profile to a PGM or PNG image");
  render->add_option("--in", render_in, "Profile file")->required();
  render->add_option("--out", render_out, "Output .pgm or .png")->required();
  render->add_option("--clip", render_clip, "Clipping threshold")->check(CLI::PositiveNumber);
  render->add_flag("--differential", render_diff, "Render the differential profile");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::fprintf(stderr, "echosonar: usage error: %s\n", msg.c_str());
    return 2;
  }

  try {
    if (*chirp) {
      const ChirpSpec spec;
      write_wav(chirp_out, assemble_tx_stream(spec, chirp_frames), spec.sample_rate);
    } else if (*simulate_cmd) {
      const SceneFile sf = read_scene_file(sim_scene);
      const ChirpSpec spec;
      write_wav(sim_out, simulate(sf.scene, spec, sim_duration.value_or(sf.duration), sim_seed), spec.sample_rate);
    } else if (*echo) {
      const WavAudio audio = read_wav(echo_in);
      EchoPipelineSpec spec;
      spec.calibrate = echo_calibrate;
      if (audio.sample_rate != spec.chirp.sample_rate)
        throw IngestionError(echo_in + ": sample rate " + std::to_string(audio.sample_rate) + " Hz, expected 48000");
      const ProcessedRecording proc = process_recording(audio.samples, spec);
      write_profile_pair(echo_out, proc.original, proc.differential);
    } else if (*calibrate) {
      const auto [original, differential] = read_profile_pair(cal_in);
      const EchoProfile fixed = median_drift_filter(realign_peaks(original, cal_spec.realign), cal_spec.median_kernel);
      write_profile_pair(cal_out, fixed, differential_profile(fixed));
    } else if (*window) {
      const auto [original, differential] = read_profile_pair(win_in);
      if (win_crop >= 0) win_spec.crop_start = win_crop;
      win_spec.normalize = !win_raw;
      std::vector<Record> out;
      for (const EchoWindow& w : crop_and_window(original, differential, win_spec))
        out.push_back(window_record(w, static_cast<double>(w.end_frame + 1) * original.frame_duration));
      if (out.empty()) throw InsufficientDataError(win_in + ": too few frames for one window");
      write_records(win_out, out);
    } else if (*augment) {
      std::mt19937_64 rng(aug_seed);
      std::vector<Record> out;
      for (const Record& r : window_records(aug_in)) {
        const EchoWindow w = window_from_record(r);
        for (int c = 0; c < aug_copies; ++c) out.push_back(window_record(augment_window(w, aug_spec, rng), r.scalar));
      }
      write_records(aug_out, out);
    } else if (*pair) {
      const auto samples = pair_samples(read_manifest(pair_manifest));
      if (samples.empty()) throw InsufficientDataError(pair_manifest + ": no pose frame has a full window history");
      write_paired_shard(pair_out, samples);
    } else if (*split_cmd) {
      const Protocol protocol = protocol_from(split_protocol);
      std::vector<SessionManifest> sessions;
      for (const auto& m : split_manifests) sessions.push_back(read_manifest(m));
      const SplitResult r = split(sessions, {protocol, split_holdout});
      auto parts = [](const std::vector<SessionPart>& v) {
        json a = json::array();
        for (const auto& p : v) a.push_back({{"session_id", p.session_id}, {"begin", p.begin}, {"end", p.end}});
        return a;
      };
      const std::string text = json{{"protocol", split_protocol}, {"train", parts(r.train)}, {"test", parts(r.test)}}.dump(2);
      if (split_out.empty()) std::cout << text << '\n';
      else write_text(split_out, text);
    } else if (*fit) {
      const auto train = read_shards(fit_train);
      if (fit_estimator == "knn") save_estimator(fit_out, fit_knn_estimator(train, fit_k));
      else if (fit_estimator == "mean") save_estimator(fit_out, MeanPoseEstimator(train));
      else save_estimator(fit_out, OracleEstimator{});
    } else if (*evaluate_cmd) {
      const auto model = load_estimator(eval_model);
      const std::string text = report_to_json(evaluate(*model, read_shards(eval_test)));
      if (eval_out.empty()) std::cout << text << '\n';
      else write_text(eval_out, text);
    } else if (*render) {
      const auto [original, differential] = read_profile_pair(render_in);
      const Eigen::MatrixXd img = clip_for_render(render_diff ? differential : original, render_clip);
      const std::string ext = std::filesystem::path(render_out).extension().string();
      if (ext == ".png") write_png(render_out, img);
      else if (ext == ".pgm") write_pgm(render_out, img);
      else throw UsageError("--out must end in .pgm or .png");
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "echosonar: usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::fprintf(stderr, "echosonar: error: %s\n", msg.c_str());
    return 1;
  }
  return 0;
}
