#include "echosonar/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "echosonar/error.hpp"
#include "echosonar/io.hpp"
#include "json.hpp"

namespace echosonar {

using nlohmann::json;

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& text, const std::array<const char*, N>& names, const char* field) {
  for (std::size_t i = 0; i < N; ++i) {
    if (text == names[i]) return static_cast<Enum>(i);
  }
  throw IngestionError(std::string("manifest: unknown ") + field + " '" + text + "'");
}

constexpr std::array<const char*, 4> kDeviceNames{"galaxy", "xiaomi", "pixel", "synthetic"};
constexpr std::array<const char*, 2> kHandNames{"left", "right"};
constexpr std::array<const char*, 3> kPostureNames{"sitting", "watch_raised", "arm_resting"};
constexpr std::array<const char*, 5> kConditionNames{"baseline", "music", "nearby", "walking", "altered"};

std::string resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative()) path = base / path;
  return path.lexically_normal().string();
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

SessionManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open manifest " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IngestionError("manifest " + path + ": " + e.what());
  }
  const auto base = std::filesystem::path(path).parent_path();
  SessionManifest m;
  try {
    m.session_id = j.at("session_id").get<std::string>();
    m.user_id = j.at("user_id").get<std::string>();
    m.session_index = j.value("session_index", 1);
    m.device = parse_enum<Device>(j.at("device").get<std::string>(), kDeviceNames, "device");
    m.hand = parse_enum<Hand>(j.value("hand", std::string("right")), kHandNames, "hand");
    m.posture = parse_enum<Posture>(j.value("posture", std::string("sitting")), kPostureNames, "posture");
    m.condition =
        parse_enum<Condition>(j.value("condition", std::string("baseline")), kConditionNames, "condition");
    m.audio_path = resolve(base, j.at("audio").get<std::string>());
    m.pose_path = resolve(base, j.at("pose").get<std::string>());
    if (j.contains("imu") && !j["imu"].is_null()) m.imu_path = resolve(base, j["imu"].get<std::string>());
    if (j.contains("wrist_to_little_mcp_m") && !j["wrist_to_little_mcp_m"].is_null())
      m.wrist_to_little_mcp = j["wrist_to_little_mcp_m"].get<double>();
  } catch (const json::exception& e) {
    throw IngestionError("manifest " + path + ": " + e.what());
  }
  return m;
}

void write_manifest(const std::string& path, const SessionManifest& m) {
  json j{{"session_id", m.session_id},
         {"user_id", m.user_id},
         {"session_index", m.session_index},
         {"device", kDeviceNames[static_cast<int>(m.device)]},
         {"hand", kHandNames[static_cast<int>(m.hand)]},
         {"posture", kPostureNames[static_cast<int>(m.posture)]},
         {"condition", kConditionNames[static_cast<int>(m.condition)]},
         {"audio", m.audio_path},
         {"pose", m.pose_path}};
  if (m.imu_path) j["imu"] = *m.imu_path;
  if (m.wrist_to_little_mcp) j["wrist_to_little_mcp_m"] = *m.wrist_to_little_mcp;
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write manifest " + path);
  out << j.dump(2) << '\n';
}

double nominal_imu_rate(Device device) {
  switch (device) {
    case Device::galaxy: return 100.0;
    case Device::xiaomi: return 50.0;
    case Device::pixel: return 200.0;
    case Device::synthetic: return 100.0;
  }
  return 100.0;
}

std::vector<PairedSample> pair_session(const SessionData& data, const PairingSpec& spec) {
  if (data.audio_rate != spec.echo.chirp.sample_rate)
    throw IngestionError("audio sample rate " + std::to_string(data.audio_rate) + " Hz does not match chirp rate " +
                         std::to_string(spec.echo.chirp.sample_rate) + " Hz");
  spec.normalization.validate();

  const auto t0 = std::chrono::steady_clock::now();
  const ProcessedRecording proc = process_recording(data.audio, spec.echo);
  if (spec.on_processed) spec.on_processed(proc);
  const Eigen::Index crop = spec.window.crop_start.value_or(proc.direct_row);

  Eigen::MatrixXd imu_expanded;
  double imu_t0 = 0.0;
  Eigen::Index imu_len = 0;
  if (data.imu && data.imu->samples.rows() > 0) {
    imu_expanded = expand_bands(resample_imu(*data.imu, data.imu_rate), data.imu_rate);
    imu_t0 = static_cast<double>(data.imu->timestamp_ns.front()) * 1e-9;
    imu_len = imu_window_samples(data.imu_rate);
  }
  const double shared_ms = elapsed_ms(t0);

  const double L = static_cast<double>(spec.echo.chirp.frame_len);
  const double fs = proc.sample_rate;
  const double tolerance = spec.tolerance_s.value_or(0.5 * L / fs);
  const double audio_end = static_cast<double>(data.audio.size()) / fs;
  const Eigen::Index n_cols = proc.original.cols();
  const Eigen::Index W = spec.window.window_frames;

  std::vector<PairedSample> out;
  std::vector<double> own_ms;
  for (const PoseFrame& frame : data.poses) {
    const double t = frame.timestamp;
    if (t > audio_end + tolerance) {
      std::ostringstream msg;
      msg << "pose timestamp " << t << " s is beyond the audio end " << audio_end << " s";
      throw PairingError(msg.str());
    }
    const auto f = static_cast<Eigen::Index>(std::llround((t * fs - static_cast<double>(proc.start_index)) / L - 1.0));
    if (f < W || f >= n_cols) continue;
    if (std::abs(proc.frame_end_time(f) - t) > tolerance) continue;

    const auto t1 = std::chrono::steady_clock::now();
    PairedSample s;
    s.echo_window = window_at(proc.original, proc.differential, crop, f, spec.window);
    if (imu_len > 0) {
      const auto j = static_cast<Eigen::Index>(std::floor((t - imu_t0) * data.imu_rate + 1e-9));
      const Eigen::Index first = j - imu_len + 1;
      if (first >= 0 && j < imu_expanded.rows()) {
        ImuWindow w;
        w.values = imu_expanded.middleRows(first, imu_len);
        normalize_columns(w.values);
        w.start_time = imu_t0 + static_cast<double>(first) / data.imu_rate;
        s.imu_window = std::move(w);
      }
    }
    s.pose = normalize_pose(frame.pose, spec.normalization);
    s.timestamp = t;
    own_ms.push_back(elapsed_ms(t1));
    out.push_back(std::move(s));
  }
  const double amortized = out.empty() ? 0.0 : shared_ms / static_cast<double>(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i].preprocess_ms = own_ms[i] + amortized;
  return out;
}

std::vector<PairedSample> pair_samples(const SessionManifest& manifest, const PairingSpec& spec) {
  SessionData data;
  const WavAudio audio = read_wav(manifest.audio_path);
  data.audio = audio.samples;
  data.audio_rate = audio.sample_rate;
  data.poses = read_pose_file(manifest.pose_path);
  data.imu_rate = nominal_imu_rate(manifest.device);
  if (manifest.imu_path) {
    data.imu = read_imu_file(*manifest.imu_path);
    const auto& ts = data.imu->timestamp_ns;
    if (ts.size() > 1) {
      const double measured = static_cast<double>(ts.size() - 1) * 1e9 / static_cast<double>(ts.back() - ts.front());
      if (std::abs(measured - data.imu_rate) > 0.1 * data.imu_rate) {
        std::cerr << "warning: session " << manifest.session_id << ": IMU rate " << measured
                  << " Hz differs from the device nominal " << data.imu_rate << " Hz\n";
      }
    }
  }
  PairingSpec effective = spec;
  effective.on_processed = [&manifest, inner = spec.on_processed](const ProcessedRecording& proc) {
    const double cols = static_cast<double>(std::max<Eigen::Index>(1, proc.original.cols()));
    const double misaligned = static_cast<double>(proc.misaligned_columns) / cols;
    if ((manifest.device == Device::xiaomi || manifest.device == Device::pixel) && misaligned > 0.05) {
      std::cerr << "warning: session " << manifest.session_id << ": " << 100.0 * misaligned
                << "% of frames were misaligned before calibration\n";
    }
    if (manifest.device == Device::galaxy && proc.drift_suppression > 2.0) {
      std::cerr << "warning: session " << manifest.session_id << ": frame drift; median filter reduced "
                << "differential RMS by " << proc.drift_suppression << "x\n";
    }
    if (inner) inner(proc);
  };
  if (manifest.wrist_to_little_mcp) effective.normalization.wrist_to_little_mcp = *manifest.wrist_to_little_mcp;
  return pair_session(data, effective);
}

std::string report_to_json(const EvaluationReport& r) {
  json per_finger = json::object();
  for (std::size_t i = 0; i < r.per_finger.size(); ++i) {
    per_finger[kFingerNames[i]] = {{"mpjpe_mm", r.per_finger[i].mpjpe_mm}, {"mpjae_deg", r.per_finger[i].mpjae_deg}};
  }
  json j{{"samples", r.samples},
         {"mpjpe_mm", r.mpjpe_mm},
         {"mpjae_deg", r.mpjae_deg},
         {"mwae_deg", r.mwae_deg},
         {"per_finger", per_finger},
         {"preprocess_ms", {{"mean", r.preprocess_ms.mean}, {"sd", r.preprocess_ms.sd}}},
         {"predict_ms", {{"mean", r.predict_ms.mean}, {"sd", r.predict_ms.sd}}}};
  return j.dump(2);
}

EvaluationReport report_from_json(const std::string& text) {
  EvaluationReport r;
  try {
    const json j = json::parse(text);
    r.samples = j.at("samples").get<std::size_t>();
    r.mpjpe_mm = j.at("mpjpe_mm").get<double>();
    r.mpjae_deg = j.at("mpjae_deg").get<double>();
    r.mwae_deg = j.at("mwae_deg").get<double>();
    for (std::size_t i = 0; i < r.per_finger.size(); ++i) {
      const json& f = j.at("per_finger").at(kFingerNames[i]);
      r.per_finger[i] = {f.at("mpjpe_mm").get<double>(), f.at("mpjae_deg").get<double>()};
    }
    r.preprocess_ms = {j.at("preprocess_ms").at("mean").get<double>(), j.at("preprocess_ms").at("sd").get<double>()};
    r.predict_ms = {j.at("predict_ms").at("mean").get<double>(), j.at("predict_ms").at("sd").get<double>()};
  } catch (const json::exception& e) {
    throw IngestionError(std::string("report: ") + e.what());
  }
  return r;
}

void write_paired_shard(const std::string& path, std::span<const PairedSample> samples) {
  std::vector<Record> records;
  records.reserve(samples.size() * 3);
  for (const PairedSample& s : samples) {
    records.push_back(window_record(s.echo_window, s.timestamp));
    records.push_back({RecordKind::pose, s.preprocess_ms, s.pose.landmarks});
    if (s.imu_window) records.push_back({RecordKind::imu_window, s.imu_window->start_time, s.imu_window->values});
  }
  write_records(path, records);
}

std::vector<PairedSample> read_paired_shard(const std::string& path) {
  const std::vector<Record> records = read_records(path);
  std::vector<PairedSample> out;
  for (std::size_t i = 0; i < records.size();) {
    if (records[i].kind != RecordKind::window || i + 1 >= records.size() || records[i + 1].kind != RecordKind::pose)
      throw IngestionError(path + ": expected a window record followed by a pose record at record " +
                           std::to_string(i));
    PairedSample s;
    s.echo_window = window_from_record(records[i]);
    s.timestamp = records[i].scalar;
    if (records[i + 1].values.rows() != 21 || records[i + 1].values.cols() != 3)
      throw IngestionError(path + ": pose record is not 21 x 3");
    s.pose.landmarks = records[i + 1].values;
    s.preprocess_ms = records[i + 1].scalar;
    i += 2;
    if (i < records.size() && records[i].kind == RecordKind::imu_window) {
      s.imu_window = ImuWindow{records[i].values, records[i].scalar};
      ++i;
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace echosonar
