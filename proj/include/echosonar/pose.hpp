#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace echosonar {

using Landmarks = Eigen::Matrix<double, 21, 3>;

/// 21 hand landmarks in meters, one per row. Row 0 is the wrist; rows 1-4
/// thumb CMC, MCP, IP, TIP; then index, middle, ring and little finger as
/// MCP, PIP, DIP, TIP (rows 5-8, 9-12, 13-16, 17-20).
struct HandPose {
  Landmarks landmarks = Landmarks::Zero();

  Eigen::Vector3d point(int index) const { return landmarks.row(index).transpose(); }
  bool operator==(const HandPose&) const = default;
};

namespace landmark {
inline constexpr int kWrist = 0;
inline constexpr int kIndexMcp = 5;
inline constexpr int kLittleMcp = 17;
}  // namespace landmark

enum class Finger { thumb = 0, index = 1, middle = 2, ring = 3, little = 4 };
inline constexpr std::array<const char*, 5> kFingerNames{"thumb", "index", "middle", "ring", "little"};

/// Landmark rows of a finger chain, base first: thumb {1,2,3,4}, index {5,6,7,8}, ...
std::array<int, 4> finger_chain(Finger finger);

/// Interior joint triples (previous, joint, next); 3 per finger, thumb first.
const std::array<std::array<int, 3>, 15>& interior_joints();

struct PoseNormalization {
  Eigen::Matrix3d reference_palm_frame = Eigen::Matrix3d::Identity();
  double wrist_to_little_mcp = 0.095;  // m

  void validate() const;
};

struct LossSpec {
  double velocity_weight = 0.1;
};

/// Subtracts the wrist from every landmark.
HandPose to_wrist_relative(const HandPose& pose);

/// Columns (u, v, n): u along wrist->index MCP, n = u x (wrist->little MCP)
/// normalized, v = n x u. Throws DegeneratePoseError for collinear points.
Eigen::Matrix3d palm_frame(const HandPose& pose);

/// Wrist-relative pose rotated about the wrist so its palm frame coincides
/// with the reference frame, then scaled so |wrist->little MCP| equals the
/// measured length.
HandPose normalize_pose(const HandPose& pose, const PoseNormalization& norm = {});

/// Mean Euclidean error over the 20 non-wrist joints, in millimeters.
double mpjpe(const HandPose& pred, const HandPose& gt);
/// Mean Euclidean error over one finger's four joints, in millimeters.
double finger_mpjpe(const HandPose& pred, const HandPose& gt, Finger finger);

/// Bend angle (degrees) between the two bones meeting at each interior joint.
std::array<double, 15> joint_angles(const HandPose& pose);

/// Mean absolute bend-angle difference over the 15 interior joints, degrees.
double mpjae(const HandPose& pred, const HandPose& gt);
/// Mean over one finger's three interior joints, degrees.
double finger_mpjae(const HandPose& pred, const HandPose& gt, Finger finger);

/// Geodesic angle between the palm frames, acos((trace(Rp^T Rg) - 1) / 2), degrees.
double mwae(const HandPose& pred, const HandPose& gt);

/// Coordinate MSE over the 60 non-wrist coordinates of every frame, plus
/// velocity_weight times the MSE between frame-to-frame differences.
double composite_loss(std::span<const HandPose> pred, std::span<const HandPose> gt, const LossSpec& spec = {});

/// One pose per frame with its timestamp in seconds.
struct PoseFrame {
  double timestamp = 0.0;
  HandPose pose;
};

/// Comma-separated, one frame per line: timestamp then 63 coordinates
/// (x0,y0,z0,...,x20,y20,z20). Blank lines, '#' comments and a non-numeric
/// header line are skipped.
std::vector<PoseFrame> read_pose_file(const std::string& path);
void write_pose_file(const std::string& path, std::span<const PoseFrame> frames);

}  // namespace echosonar
