#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "echosonar/echo.hpp"
#include "echosonar/imu.hpp"
#include "echosonar/pose.hpp"

namespace echosonar {

enum class Device { galaxy, xiaomi, pixel, synthetic };
enum class Hand { left, right };
enum class Posture { sitting, watch_raised, arm_resting };
enum class Condition { baseline, music, nearby, walking, altered };

/// One recording session. Paths are stored as given; read_manifest resolves
/// relative paths against the manifest's directory.
struct SessionManifest {
  std::string session_id;
  std::string user_id;
  int session_index = 0;  // wearing order within the user, 1-based
  Device device = Device::synthetic;
  Hand hand = Hand::right;
  Posture posture = Posture::sitting;
  Condition condition = Condition::baseline;
  std::string audio_path;
  std::optional<std::string> imu_path;
  std::string pose_path;
  std::optional<double> wrist_to_little_mcp;  // per-user measured length (m)
};

/// JSON object with the fields above; device/hand/posture/condition as lowercase names.
SessionManifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const SessionManifest& manifest);

/// Nominal IMU rate for a device (galaxy 100, xiaomi 50, pixel 200, synthetic 100 Hz).
double nominal_imu_rate(Device device);

struct PairedSample {
  EchoWindow echo_window;
  std::optional<ImuWindow> imu_window;
  HandPose pose;            // normalized
  double timestamp = 0.0;   // pose timestamp (s)
  double preprocess_ms = 0.0;
};

struct PairingSpec {
  EchoPipelineSpec echo;
  WindowSpec window;
  PoseNormalization normalization;
  std::optional<double> tolerance_s;  // defaults to half a frame
  std::function<void(const ProcessedRecording&)> on_processed;  // inspection hook, called once per session
};

/// In-memory session data for pairing.
struct SessionData {
  Eigen::VectorXd audio;
  double audio_rate = 48000.0;
  std::vector<PoseFrame> poses;
  std::optional<ImuRecording> imu;  // timestamps relative to audio sample 0
  double imu_rate = 100.0;
};

/// One PairedSample per pose frame whose window end (nearest original column
/// end) has a full history. Pose frames after the last complete column but
/// within the recording are skipped; a pose timestamp past the end of the
/// audio by more than the tolerance is a PairingError.
std::vector<PairedSample> pair_session(const SessionData& data, const PairingSpec& spec = {});

/// Reads the manifest's files and pairs them. Ingestion errors name the file.
std::vector<PairedSample> pair_samples(const SessionManifest& manifest, const PairingSpec& spec = {});

enum class Protocol { within_session, cross_session, cross_user };

struct SplitSpec {
  Protocol protocol = Protocol::cross_session;
  std::vector<std::string> holdout;  // cross_user: held-out user ids; cross_session: optional test session ids
};

/// Half-open fraction [begin, end) of a session's samples, in time order.
struct SessionPart {
  std::string session_id;
  double begin = 0.0;
  double end = 1.0;

  /// Sample indices of this part for a session with `n` samples.
  std::pair<std::size_t, std::size_t> index_range(std::size_t n) const;
};

struct SplitResult {
  std::vector<SessionPart> train;
  std::vector<SessionPart> test;
};

/// within_session: per user, every session but the last two trains, plus the
/// first half of each of the last two; the second halves test.
/// cross_session: per user, the final session tests (or the holdout sessions).
/// cross_user: every session of the holdout users tests.
SplitResult split(std::span<const SessionManifest> sessions, const SplitSpec& spec);

class PoseEstimator {
 public:
  virtual ~PoseEstimator() = default;
  virtual HandPose predict(const PairedSample& sample) const = 0;
  virtual std::string name() const = 0;
};

/// Distance-weighted k nearest neighbours over flattened echo windows.
class KnnEstimator final : public PoseEstimator {
 public:
  KnnEstimator(std::span<const PairedSample> train, int k);

  HandPose predict(const PairedSample& sample) const override { return predict_window(sample.echo_window); }
  /// `exclude` drops one training item, for leave-one-out evaluation.
  HandPose predict_window(const EchoWindow& window, std::optional<std::size_t> exclude = {}) const;
  std::string name() const override { return "knn"; }

  int k() const { return k_; }
  std::size_t size() const { return poses_.size(); }
  const Eigen::MatrixXd& keys() const { return keys_; }
  const std::vector<HandPose>& poses() const { return poses_; }

 private:
  int k_;
  Eigen::MatrixXd keys_;  // one flattened window per column
  std::vector<HandPose> poses_;
};

/// Throws ParameterError when train is empty or k is outside [1, train size].
KnnEstimator fit_knn_estimator(std::span<const PairedSample> train, int k = 3);

/// Predicts the training-set mean pose regardless of input.
class MeanPoseEstimator final : public PoseEstimator {
 public:
  explicit MeanPoseEstimator(std::span<const PairedSample> train);
  explicit MeanPoseEstimator(HandPose mean) : mean_(std::move(mean)) {}
  HandPose predict(const PairedSample&) const override { return mean_; }
  std::string name() const override { return "mean"; }
  const HandPose& mean() const { return mean_; }

 private:
  HandPose mean_;
};

/// Returns each sample's own ground truth; a sanity check for the evaluation path.
class OracleEstimator final : public PoseEstimator {
 public:
  HandPose predict(const PairedSample& sample) const override { return sample.pose; }
  std::string name() const override { return "oracle"; }
};

void save_estimator(const std::string& path, const PoseEstimator& estimator);
std::unique_ptr<PoseEstimator> load_estimator(const std::string& path);

struct FingerErrors {
  double mpjpe_mm = 0.0;
  double mpjae_deg = 0.0;
};

struct LatencyStats {
  double mean = 0.0;
  double sd = 0.0;
};

struct EvaluationReport {
  std::size_t samples = 0;
  double mpjpe_mm = 0.0;
  double mpjae_deg = 0.0;
  double mwae_deg = 0.0;
  std::array<FingerErrors, 5> per_finger{};  // thumb, index, middle, ring, little
  LatencyStats preprocess_ms;
  LatencyStats predict_ms;
};

EvaluationReport evaluate(const PoseEstimator& estimator, std::span<const PairedSample> test);

/// JSON text with fields mpjpe_mm, mpjae_deg, mwae_deg,
/// per_finger.<finger>.{mpjpe_mm, mpjae_deg}, preprocess_ms.{mean, sd},
/// predict_ms.{mean, sd}, samples.
std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const std::string& text);

/// Paired shard: per sample a window record, a pose record, and an optional IMU window record.
void write_paired_shard(const std::string& path, std::span<const PairedSample> samples);
std::vector<PairedSample> read_paired_shard(const std::string& path);

}  // namespace echosonar
