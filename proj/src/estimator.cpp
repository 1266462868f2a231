#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "echosonar/error.hpp"
#include "echosonar/io.hpp"
#include "echosonar/pipeline.hpp"

namespace echosonar {

namespace {

enum class EstimatorCode { knn = 0, mean = 1, oracle = 2 };

Eigen::Matrix<double, 1, 63> flat_pose(const HandPose& pose) {
  Eigen::Matrix<double, 1, 63> row;
  for (int j = 0; j < 21; ++j) row.segment<3>(3 * j) = pose.landmarks.row(j);
  return row;
}

HandPose pose_from_flat(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  HandPose pose;
  for (int j = 0; j < 21; ++j) pose.landmarks.row(j) = row.segment<3>(3 * j);
  return pose;
}

LatencyStats stats(const std::vector<double>& xs) {
  LatencyStats s;
  if (xs.empty()) return s;
  const double n = static_cast<double>(xs.size());
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

}  // namespace

KnnEstimator::KnnEstimator(std::span<const PairedSample> train, int k) : k_(k) {
  if (train.empty()) throw ParameterError("knn: empty training set");
  if (k < 1 || static_cast<std::size_t>(k) > train.size())
    throw ParameterError("knn: k = " + std::to_string(k) + " outside [1, " + std::to_string(train.size()) + "]");
  const Eigen::Index dims = train.front().echo_window.flattened().size();
  keys_.resize(dims, static_cast<Eigen::Index>(train.size()));
  poses_.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    Eigen::VectorXd key = train[i].echo_window.flattened();
    if (key.size() != dims) throw ParameterError("knn: training windows differ in shape");
    keys_.col(static_cast<Eigen::Index>(i)) = key;
    poses_.push_back(train[i].pose);
  }
}

HandPose KnnEstimator::predict_window(const EchoWindow& window, std::optional<std::size_t> exclude) const {
  const Eigen::VectorXd q = window.flattened();
  if (q.size() != keys_.rows()) throw ParameterError("knn: query window shape differs from training windows");
  const std::size_t available = poses_.size() - (exclude ? 1 : 0);
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(k_), available);
  if (k == 0) throw ParameterError("knn: no neighbours available");

  const Eigen::VectorXd d2 = (keys_.colwise() - q).colwise().squaredNorm().transpose();
  std::vector<std::size_t> order;
  order.reserve(poses_.size());
  for (std::size_t i = 0; i < poses_.size(); ++i) {
    if (!exclude || *exclude != i) order.push_back(i);
  }
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double da = d2(static_cast<Eigen::Index>(a)), db = d2(static_cast<Eigen::Index>(b));
                      return da < db || (da == db && a < b);
                    });

  HandPose out;
  double weight_sum = 0.0;
  if (d2(static_cast<Eigen::Index>(order[0])) == 0.0) {
    for (std::size_t i = 0; i < k && d2(static_cast<Eigen::Index>(order[i])) == 0.0; ++i) {
      out.landmarks += poses_[order[i]].landmarks;
      weight_sum += 1.0;
    }
  } else {
    for (std::size_t i = 0; i < k; ++i) {
      const double w = 1.0 / std::sqrt(d2(static_cast<Eigen::Index>(order[i])));
      out.landmarks += w * poses_[order[i]].landmarks;
      weight_sum += w;
    }
  }
  out.landmarks /= weight_sum;
  return out;
}

KnnEstimator fit_knn_estimator(std::span<const PairedSample> train, int k) { return KnnEstimator(train, k); }

MeanPoseEstimator::MeanPoseEstimator(std::span<const PairedSample> train) {
  if (train.empty()) throw ParameterError("mean estimator: empty training set");
  for (const PairedSample& s : train) mean_.landmarks += s.pose.landmarks;
  mean_.landmarks /= static_cast<double>(train.size());
}

void save_estimator(const std::string& path, const PoseEstimator& estimator) {
  std::vector<Record> records;
  Eigen::MatrixXd code(1, 1);
  if (const auto* knn = dynamic_cast<const KnnEstimator*>(&estimator)) {
    code(0, 0) = static_cast<double>(EstimatorCode::knn);
    records.push_back({RecordKind::model, static_cast<double>(knn->k()), code});
    records.push_back({RecordKind::model, 0.0, knn->keys()});
    Eigen::MatrixXd poses(static_cast<Eigen::Index>(knn->size()), 63);
    for (std::size_t i = 0; i < knn->size(); ++i) poses.row(static_cast<Eigen::Index>(i)) = flat_pose(knn->poses()[i]);
    records.push_back({RecordKind::model, 0.0, poses});
  } else if (const auto* mean = dynamic_cast<const MeanPoseEstimator*>(&estimator)) {
    code(0, 0) = static_cast<double>(EstimatorCode::mean);
    records.push_back({RecordKind::model, 0.0, code});
    records.push_back({RecordKind::pose, 0.0, mean->mean().landmarks});
  } else if (dynamic_cast<const OracleEstimator*>(&estimator)) {
    code(0, 0) = static_cast<double>(EstimatorCode::oracle);
    records.push_back({RecordKind::model, 0.0, code});
  } else {
    throw ParameterError("cannot save estimator '" + estimator.name() + "'");
  }
  write_records(path, records);
}

std::unique_ptr<PoseEstimator> load_estimator(const std::string& path) {
  const std::vector<Record> records = read_records(path);
  if (records.empty() || records[0].kind != RecordKind::model || records[0].values.size() != 1)
    throw IngestionError(path + ": not a model file");
  switch (static_cast<int>(records[0].values(0, 0))) {
    case static_cast<int>(EstimatorCode::knn): {
      if (records.size() != 3 || records[1].values.cols() != records[2].values.rows() ||
          records[2].values.cols() != 63)
        throw IngestionError(path + ": malformed knn model");
      const Eigen::MatrixXd& keys = records[1].values;
      const Eigen::Index bins = keys.rows() / 2;
      std::vector<PairedSample> train(static_cast<std::size_t>(keys.cols()));
      for (Eigen::Index i = 0; i < keys.cols(); ++i) {
        auto& s = train[static_cast<std::size_t>(i)];
        // flattened() is both channels column-major; a single column of
        // 2 * bins rows reproduces the same key.
        s.echo_window.channels[0] = keys.col(i).head(bins);
        s.echo_window.channels[1] = keys.col(i).tail(keys.rows() - bins);
        s.pose = pose_from_flat(records[2].values.row(i));
      }
      return std::make_unique<KnnEstimator>(train, static_cast<int>(records[0].scalar));
    }
    case static_cast<int>(EstimatorCode::mean): {
      if (records.size() != 2 || records[1].values.rows() != 21 || records[1].values.cols() != 3)
        throw IngestionError(path + ": malformed mean model");
      HandPose mean;
      mean.landmarks = records[1].values;
      return std::make_unique<MeanPoseEstimator>(mean);
    }
    case static_cast<int>(EstimatorCode::oracle):
      return std::make_unique<OracleEstimator>();
    default:
      throw IngestionError(path + ": unknown estimator code");
  }
}

EvaluationReport evaluate(const PoseEstimator& estimator, std::span<const PairedSample> test) {
  if (test.empty()) throw InsufficientDataError("evaluate: no test samples");
  EvaluationReport r;
  r.samples = test.size();
  std::vector<double> pre, pred_ms;
  for (const PairedSample& s : test) {
    const auto t0 = std::chrono::steady_clock::now();
    const HandPose p = estimator.predict(s);
    pred_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    pre.push_back(s.preprocess_ms);
    r.mpjpe_mm += mpjpe(p, s.pose);
    r.mpjae_deg += mpjae(p, s.pose);
    r.mwae_deg += mwae(p, s.pose);
    for (int f = 0; f < 5; ++f) {
      r.per_finger[f].mpjpe_mm += finger_mpjpe(p, s.pose, static_cast<Finger>(f));
      r.per_finger[f].mpjae_deg += finger_mpjae(p, s.pose, static_cast<Finger>(f));
    }
  }
  const double n = static_cast<double>(test.size());
  r.mpjpe_mm /= n;
  r.mpjae_deg /= n;
  r.mwae_deg /= n;
  for (auto& f : r.per_finger) {
    f.mpjpe_mm /= n;
    f.mpjae_deg /= n;
  }
  r.preprocess_ms = stats(pre);
  r.predict_ms = stats(pred_ms);
  return r;
}

}  // namespace echosonar
