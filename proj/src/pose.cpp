#include "echosonar/pose.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

#include "echosonar/error.hpp"

namespace echosonar {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double clamped_acos(double x) { return std::acos(std::clamp(x, -1.0, 1.0)); }

}  // namespace

std::array<int, 4> finger_chain(Finger finger) {
  const int base = 1 + 4 * static_cast<int>(finger);
  return {base, base + 1, base + 2, base + 3};
}

const std::array<std::array<int, 3>, 15>& interior_joints() {
  static const auto joints = [] {
    std::array<std::array<int, 3>, 15> out{};
    for (int f = 0; f < 5; ++f) {
      const auto chain = finger_chain(static_cast<Finger>(f));
      out[static_cast<std::size_t>(3 * f + 0)] = {landmark::kWrist, chain[0], chain[1]};
      out[static_cast<std::size_t>(3 * f + 1)] = {chain[0], chain[1], chain[2]};
      out[static_cast<std::size_t>(3 * f + 2)] = {chain[1], chain[2], chain[3]};
    }
    return out;
  }();
  return joints;
}

void PoseNormalization::validate() const {
  const Eigen::Matrix3d gram = reference_palm_frame.transpose() * reference_palm_frame;
  if (!gram.isIdentity(1e-9)) throw ParameterError("pose normalization: reference palm frame is not orthonormal");
  if (!(wrist_to_little_mcp > 0.0)) throw ParameterError("pose normalization: length must be positive");
}

HandPose to_wrist_relative(const HandPose& pose) {
  HandPose out;
  out.landmarks = pose.landmarks.rowwise() - pose.landmarks.row(landmark::kWrist);
  return out;
}

Eigen::Matrix3d palm_frame(const HandPose& pose) {
  const Eigen::Vector3d wrist = pose.point(landmark::kWrist);
  const Eigen::Vector3d to_index = pose.point(landmark::kIndexMcp) - wrist;
  const Eigen::Vector3d to_little = pose.point(landmark::kLittleMcp) - wrist;
  const double index_len = to_index.norm();
  if (!(index_len > 1e-12)) throw DegeneratePoseError("palm frame: index MCP coincides with the wrist");
  const Eigen::Vector3d u = to_index / index_len;
  const Eigen::Vector3d normal = u.cross(to_little);
  if (!(normal.norm() > 1e-9 * std::max(1.0, to_little.norm()))) {
    throw DegeneratePoseError("palm frame: wrist, index MCP and little MCP are collinear");
  }
  const Eigen::Vector3d n = normal.normalized();
  Eigen::Matrix3d frame;
  frame.col(0) = u;
  frame.col(1) = n.cross(u);
  frame.col(2) = n;
  return frame;
}

HandPose normalize_pose(const HandPose& pose, const PoseNormalization& norm) {
  norm.validate();
  HandPose rel = to_wrist_relative(pose);
  const Eigen::Matrix3d rotation = norm.reference_palm_frame * palm_frame(rel).transpose();
  // Row-vector landmarks: p' = R p  <=>  row' = row R^T.
  rel.landmarks = rel.landmarks * rotation.transpose();
  const double length = rel.point(landmark::kLittleMcp).norm();
  rel.landmarks *= norm.wrist_to_little_mcp / length;
  return rel;
}

double mpjpe(const HandPose& pred, const HandPose& gt) {
  const Eigen::Matrix<double, 20, 3> diff = pred.landmarks.bottomRows<20>() - gt.landmarks.bottomRows<20>();
  return 1000.0 * diff.rowwise().norm().mean();
}

double finger_mpjpe(const HandPose& pred, const HandPose& gt, Finger finger) {
  double sum = 0.0;
  for (int row : finger_chain(finger)) sum += (pred.landmarks.row(row) - gt.landmarks.row(row)).norm();
  return 1000.0 * sum / 4.0;
}

std::array<double, 15> joint_angles(const HandPose& pose) {
  std::array<double, 15> angles{};
  const auto& joints = interior_joints();
  for (std::size_t j = 0; j < joints.size(); ++j) {
    const auto [prev, at, next] = joints[j];
    const Eigen::Vector3d a = pose.point(at) - pose.point(prev);
    const Eigen::Vector3d b = pose.point(next) - pose.point(at);
    const double denom = a.norm() * b.norm();
    if (!(denom > 0.0)) throw DegeneratePoseError("joint angle: zero-length bone at landmark " + std::to_string(at));
    angles[j] = kRadToDeg * clamped_acos(a.dot(b) / denom);
  }
  return angles;
}

double mpjae(const HandPose& pred, const HandPose& gt) {
  const auto p = joint_angles(pred);
  const auto g = joint_angles(gt);
  double sum = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) sum += std::abs(p[j] - g[j]);
  return sum / static_cast<double>(p.size());
}

double finger_mpjae(const HandPose& pred, const HandPose& gt, Finger finger) {
  const auto p = joint_angles(pred);
  const auto g = joint_angles(gt);
  const auto base = static_cast<std::size_t>(3 * static_cast<int>(finger));
  double sum = 0.0;
  for (std::size_t j = base; j < base + 3; ++j) sum += std::abs(p[j] - g[j]);
  return sum / 3.0;
}

double mwae(const HandPose& pred, const HandPose& gt) {
  const Eigen::Matrix3d relative = palm_frame(pred).transpose() * palm_frame(gt);
  const Eigen::Vector3d axis(relative(2, 1) - relative(1, 2), relative(0, 2) - relative(2, 0),
                             relative(1, 0) - relative(0, 1));
  return kRadToDeg * std::atan2(0.5 * axis.norm(), 0.5 * (relative.trace() - 1.0));
}

double composite_loss(std::span<const HandPose> pred, std::span<const HandPose> gt, const LossSpec& spec) {
  if (pred.empty()) throw ParameterError("composite_loss: empty sequence");
  if (pred.size() != gt.size()) throw ParameterError("composite_loss: sequence lengths differ");
  if (spec.velocity_weight < 0.0) throw ParameterError("composite_loss: velocity_weight must be >= 0");

  double position = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    position += (pred[t].landmarks.bottomRows<20>() - gt[t].landmarks.bottomRows<20>()).squaredNorm();
  }
  position /= 60.0 * static_cast<double>(pred.size());

  double velocity = 0.0;
  if (pred.size() > 1) {
    for (std::size_t t = 1; t < pred.size(); ++t) {
      const Eigen::Matrix<double, 20, 3> dp = pred[t].landmarks.bottomRows<20>() - pred[t - 1].landmarks.bottomRows<20>();
      const Eigen::Matrix<double, 20, 3> dg = gt[t].landmarks.bottomRows<20>() - gt[t - 1].landmarks.bottomRows<20>();
      velocity += (dp - dg).squaredNorm();
    }
    velocity /= 60.0 * static_cast<double>(pred.size() - 1);
  }
  return position + spec.velocity_weight * velocity;
}

std::vector<PoseFrame> read_pose_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("pose file " + path + ": cannot open");
  std::vector<PoseFrame> frames;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::vector<double> values;
    std::string token;
    bool numeric = true;
    while (fields >> token) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(token, &used));
        if (used != token.size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
      if (!numeric) break;
    }
    if (values.empty() && !numeric && frames.empty()) continue;  // header
    if (!numeric || values.size() != 64) {
      throw IngestionError("pose file " + path + ":" + std::to_string(line_no) + ": expected timestamp + 63 numbers");
    }
    PoseFrame frame;
    frame.timestamp = values[0];
    for (int i = 0; i < 21; ++i) {
      for (int k = 0; k < 3; ++k) frame.pose.landmarks(i, k) = values[static_cast<std::size_t>(1 + 3 * i + k)];
    }
    if (!frame.pose.landmarks.allFinite()) {
      throw IngestionError("pose file " + path + ":" + std::to_string(line_no) + ": non-finite coordinate");
    }
    frames.push_back(frame);
  }
  return frames;
}

void write_pose_file(const std::string& path, std::span<const PoseFrame> frames) {
  std::ofstream out(path);
  if (!out) throw IngestionError("pose file " + path + ": cannot write");
  out << std::setprecision(17);
  out << "# timestamp_s,x0,y0,z0,...,x20,y20,z20 (meters)\n";
  for (const PoseFrame& frame : frames) {
    out << frame.timestamp;
    for (int i = 0; i < 21; ++i) {
      for (int k = 0; k < 3; ++k) out << ',' << frame.pose.landmarks(i, k);
    }
    out << '\n';
  }
}

}  // namespace echosonar
