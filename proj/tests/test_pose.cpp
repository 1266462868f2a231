#include <filesystem>
#include <fstream>
#include <random>

#include <Eigen/Geometry>

#include "doctest.h"
#include "echosonar/error.hpp"
#include "echosonar/pose.hpp"
#include "echosonar/sim.hpp"
#include "oracles.hpp"

using namespace echosonar;

namespace {

HandPose rotated(const HandPose& p, const Eigen::Matrix3d& r) {
  HandPose out;
  out.landmarks = p.landmarks * r.transpose();
  return out;
}

HandPose random_hand(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  HandPose h = articulated_hand({u(rng), u(rng), u(rng), u(rng), u(rng)});
  // Small per-landmark perturbation keeps bones non-degenerate.
  std::normal_distribution<double> g(0.0, 0.002);
  for (int j = 1; j < 21; ++j)
    for (int c = 0; c < 3; ++c) h.landmarks(j, c) += g(rng);
  return h;
}

}  // namespace

TEST_SUITE("pose") {
  TEST_CASE("wrist-relative conversion") {
    std::mt19937_64 rng(1);
    const HandPose p = oracle::random_pose(rng);
    const HandPose r = to_wrist_relative(p);
    CHECK(r.point(0).isZero(0.0));
    for (int j = 0; j < 21; ++j) CHECK(r.point(j) == p.point(j) - p.point(0));
    CHECK(to_wrist_relative(r) == r);
    HandPose moved = p;
    moved.landmarks.rowwise() += Eigen::RowVector3d(1, 2, 3);
    CHECK(to_wrist_relative(moved).landmarks.isApprox(r.landmarks, 1e-12));
  }

  TEST_CASE("palm frame") {
    const HandPose flat = articulated_hand({0, 0, 0, 0, 0});
    CHECK(palm_frame(flat).isApprox(Eigen::Matrix3d::Identity(), 1e-12));
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
      const Eigen::Matrix3d r = oracle::random_rotation(rng);
      CHECK((palm_frame(rotated(flat, r)) - r).cwiseAbs().maxCoeff() < 1e-12);
    }
    HandPose collinear = flat;
    collinear.landmarks.row(17) = 2.0 * collinear.landmarks.row(5);
    CHECK_THROWS_AS(palm_frame(collinear), DegeneratePoseError);
  }

  TEST_CASE("normalization is identity on a canonical hand") {
    const HandPose h = articulated_hand({0.2, 0.4, 0.1, 0.9, 0.5});
    CHECK((normalize_pose(h).landmarks - h.landmarks).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("normalization is rotation-, translation- and scale-invariant and idempotent") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> scale(0.5, 2.0);
    for (int t = 0; t < 200; ++t) {
      const HandPose h = random_hand(rng);
      const HandPose ref = normalize_pose(h);
      HandPose moved = rotated(h, oracle::random_rotation(rng));
      moved.landmarks *= scale(rng);
      moved.landmarks.rowwise() += Eigen::RowVector3d(0.3, -0.1, 2.0);
      CHECK((normalize_pose(moved).landmarks - ref.landmarks).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((normalize_pose(ref).landmarks - ref.landmarks).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((ref.point(17) - ref.point(0)).norm() == doctest::Approx(0.095).epsilon(1e-12));
    }
  }

  TEST_CASE("custom reference frame and length") {
    std::mt19937_64 rng(4);
    PoseNormalization norm;
    norm.reference_palm_frame = oracle::random_rotation(rng);
    norm.wrist_to_little_mcp = 0.08;
    const HandPose out = normalize_pose(random_hand(rng), norm);
    CHECK(palm_frame(out).isApprox(norm.reference_palm_frame, 1e-12));
    CHECK((out.point(17) - out.point(0)).norm() == doctest::Approx(0.08).epsilon(1e-12));
    norm.wrist_to_little_mcp = 0.0;
    CHECK_THROWS_AS(normalize_pose(out, norm), ParameterError);
    norm.wrist_to_little_mcp = 0.08;
    norm.reference_palm_frame(0, 0) += 0.1;
    CHECK_THROWS_AS(normalize_pose(out, norm), ParameterError);
  }

  TEST_CASE("mpjpe identities and brute force") {
    std::mt19937_64 rng(5);
    const HandPose a = oracle::random_pose(rng);
    CHECK(mpjpe(a, a) == 0.0);
    HandPose b = a;
    b.landmarks.rowwise() += Eigen::RowVector3d(0.003, 0.0, 0.004);
    CHECK(mpjpe(b, a) == doctest::Approx(5.0).epsilon(1e-12));
    for (int t = 0; t < 100; ++t) {
      const HandPose p = oracle::random_pose(rng), q = oracle::random_pose(rng), r = oracle::random_pose(rng);
      CHECK(std::abs(mpjpe(p, q) - oracle::mpjpe_mm(p, q)) <= 1e-9);
      CHECK(mpjpe(p, q) == mpjpe(q, p));
      CHECK(mpjpe(p, r) <= mpjpe(p, q) + mpjpe(q, r) + 1e-12);
      CHECK(mpjpe(p, q) > 0.0);
    }
  }

  TEST_CASE("per-finger mpjpe averages to the total") {
    std::mt19937_64 rng(6);
    const HandPose p = oracle::random_pose(rng), q = oracle::random_pose(rng);
    double sum = 0.0;
    for (int f = 0; f < 5; ++f) sum += finger_mpjpe(p, q, static_cast<Finger>(f));
    CHECK(sum / 5.0 == doctest::Approx(mpjpe(p, q)).epsilon(1e-12));
  }

  TEST_CASE("mpjae identities and brute force") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 100; ++t) {
      const HandPose p = random_hand(rng), q = random_hand(rng);
      CHECK(mpjae(p, p) == 0.0);
      CHECK(std::abs(mpjae(p, q) - oracle::mpjae_deg(p, q)) <= 1e-6);
      const Eigen::Matrix3d r = oracle::random_rotation(rng);
      CHECK(std::abs(mpjae(rotated(p, r), rotated(q, r)) - mpjae(p, q)) <= 1e-6);
    }
    CHECK(interior_joints().size() == 15);
    CHECK(interior_joints()[0] == std::array<int, 3>{0, 1, 2});
  }

  TEST_CASE("one joint bent by 30 degrees gives 2 degrees") {
    // Straight index finger; bend the DIP->TIP bone by 30 degrees.
    HandPose a = articulated_hand({0, 0, 0, 0, 0});
    HandPose b = a;
    const Eigen::Vector3d dip = b.point(7), tip = b.point(8);
    const Eigen::Vector3d axis = (tip - dip).cross(Eigen::Vector3d::UnitZ()).normalized();
    const Eigen::AngleAxisd bend(30.0 * std::numbers::pi / 180.0, axis);
    b.landmarks.row(8) = (dip + bend * (tip - dip)).transpose();
    CHECK(mpjae(a, b) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(finger_mpjae(a, b, Finger::index) == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(finger_mpjae(a, b, Finger::ring) == 0.0);
  }

  TEST_CASE("degenerate bones are rejected") {
    HandPose p = articulated_hand({0, 0, 0, 0, 0});
    p.landmarks.row(7) = p.landmarks.row(6);
    CHECK_THROWS_AS(joint_angles(p), DegeneratePoseError);
  }

  TEST_CASE("mwae") {
    std::mt19937_64 rng(8);
    const HandPose h = random_hand(rng);
    CHECK(mwae(h, h) == doctest::Approx(0.0).epsilon(1e-9));
    const Eigen::Vector3d n = palm_frame(h).col(2);
    const Eigen::Matrix3d r15 = Eigen::AngleAxisd(15.0 * std::numbers::pi / 180.0, n).toRotationMatrix();
    CHECK(std::abs(mwae(rotated(h, r15), h) - 15.0) < 1e-9);
    const Eigen::Vector3d u = palm_frame(h).col(0);
    const Eigen::Matrix3d flip = Eigen::AngleAxisd(std::numbers::pi, u).toRotationMatrix();
    CHECK(mwae(rotated(h, flip), h) == doctest::Approx(180.0).epsilon(1e-9));
    for (int t = 0; t < 50; ++t) {
      const HandPose a = random_hand(rng), b = random_hand(rng);
      const Eigen::Matrix3d r = oracle::random_rotation(rng);
      CHECK(std::abs(mwae(rotated(a, r), rotated(b, r)) - mwae(a, b)) < 1e-6);
    }
  }

  TEST_CASE("composite loss") {
    std::mt19937_64 rng(9);
    std::vector<HandPose> gt{oracle::random_pose(rng), oracle::random_pose(rng), oracle::random_pose(rng)};
    CHECK(composite_loss(gt, gt) == 0.0);

    // Two frames: pred offsets every non-wrist coordinate by a in frame 0 and b in frame 1.
    const double a = 0.01, b = -0.03;
    std::vector<HandPose> two{gt[0], gt[1]}, pred = two;
    pred[0].landmarks.bottomRows(20).array() += a;
    pred[1].landmarks.bottomRows(20).array() += b;
    const double mse = (a * a + b * b) / 2.0;
    const double velocity = (b - a) * (b - a);
    CHECK(composite_loss(pred, two) == doctest::Approx(mse + 0.1 * velocity).epsilon(1e-12));
    CHECK(composite_loss(pred, two, LossSpec{0.0}) == doctest::Approx(mse).epsilon(1e-15));

    std::vector<HandPose> one{pred[0]}, one_gt{two[0]};
    CHECK(composite_loss(one, one_gt) == doctest::Approx(a * a).epsilon(1e-12));
    CHECK_THROWS_AS(composite_loss(one, two), ParameterError);
    CHECK_THROWS_AS(composite_loss(std::vector<HandPose>{}, std::vector<HandPose>{}), ParameterError);
  }

  TEST_CASE("pose file round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "echosonar_pose_test";
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(10);
    std::vector<PoseFrame> frames;
    for (int i = 0; i < 5; ++i) frames.push_back({i / 30.0, oracle::random_pose(rng)});
    const std::string path = (dir / "poses.csv").string();
    write_pose_file(path, frames);
    const auto back = read_pose_file(path);
    REQUIRE(back.size() == 5);
    for (int i = 0; i < 5; ++i) {
      CHECK(back[i].timestamp == frames[i].timestamp);
      CHECK(back[i].pose == frames[i].pose);
    }
    std::ofstream(dir / "bad.csv") << "0.0,1,2,3\n";
    CHECK_THROWS_AS(read_pose_file((dir / "bad.csv").string()), IngestionError);
    CHECK_THROWS_AS(read_pose_file((dir / "missing.csv").string()), IngestionError);
    std::ofstream(dir / "commented.csv") << "# comment\n\n" << std::ifstream(path).rdbuf();
    CHECK(read_pose_file((dir / "commented.csv").string()).size() == 5);
  }
}
