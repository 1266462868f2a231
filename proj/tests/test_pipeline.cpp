#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "doctest.h"
#include "echosonar/error.hpp"
#include "echosonar/io.hpp"
#include "echosonar/pipeline.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace echosonar;

namespace {

std::filesystem::path scratch() {
  const auto dir = std::filesystem::temp_directory_path() / "echosonar_pipeline_test";
  std::filesystem::create_directories(dir);
  return dir;
}

// A 20 s session in which the hand drifts between random poses every second.
struct Session {
  SessionData data;
  std::vector<PoseFrame> truth;
};

Session moving_session(double duration, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PoseFrame> keys;
  for (double t = 0.0; t <= duration + 1.0; t += 1.0) keys.push_back({t, synth::random_hand(rng)});
  SceneSpec base;
  base.noise.push_back({NoiseModel::Kind::gaussian, 30.0});
  Session s;
  s.data.audio = simulate(synth::moving_hand_scene(keys, base), ChirpSpec{}, duration, seed);
  // Pose stream: the keyframe pose nearest in time, so each frame's pose is a generating pose.
  for (double t : synth::pose_times(duration)) {
    const auto& nearest = keys[static_cast<std::size_t>(std::llround(t))];
    s.data.poses.push_back({t, nearest.pose});
  }
  s.truth = s.data.poses;
  return s;
}

ImuRecording synthetic_imu(double duration, double rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  ImuRecording r;
  const auto n = static_cast<Eigen::Index>(duration * rate);
  r.samples.resize(n, 6);
  for (Eigen::Index i = 0; i < n; ++i) {
    r.timestamp_ns.push_back(static_cast<std::int64_t>(std::llround(static_cast<double>(i) / rate * 1e9)));
    for (int c = 0; c < 6; ++c) r.samples(i, c) = std::sin(0.3 * static_cast<double>(i) + c) + 0.1 * g(rng);
  }
  return r;
}

SessionManifest manifest(std::string session, std::string user, int index) {
  SessionManifest m;
  m.session_id = std::move(session);
  m.user_id = std::move(user);
  m.session_index = index;
  return m;
}

std::set<std::string> ids(const std::vector<SessionPart>& parts) {
  std::set<std::string> out;
  for (const auto& p : parts) out.insert(p.session_id);
  return out;
}

// Expands parts into (session, sample index) pairs for a fixed per-session sample count.
std::set<std::pair<std::string, std::size_t>> members(const std::vector<SessionPart>& parts, std::size_t n) {
  std::set<std::pair<std::string, std::size_t>> out;
  for (const auto& p : parts) {
    const auto [b, e] = p.index_range(n);
    for (std::size_t i = b; i < e; ++i) out.insert({p.session_id, i});
  }
  return out;
}

PairedSample sample_with(const HandPose& pose, double value) {
  PairedSample s;
  s.pose = pose;
  for (auto& ch : s.echo_window.channels) ch = Eigen::MatrixXd::Constant(2, 3, value);
  return s;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("manifest round trip resolves relative paths") {
    const auto dir = scratch() / "manifest";
    std::filesystem::create_directories(dir);
    SessionManifest m = manifest("s1", "u1", 3);
    m.device = Device::pixel;
    m.hand = Hand::left;
    m.posture = Posture::watch_raised;
    m.condition = Condition::music;
    m.audio_path = "rec.wav";
    m.pose_path = "/abs/pose.csv";
    m.imu_path = "imu.csv";
    m.wrist_to_little_mcp = 0.091;
    write_manifest((dir / "m.json").string(), m);
    const SessionManifest back = read_manifest((dir / "m.json").string());
    CHECK(back.session_id == "s1");
    CHECK(back.user_id == "u1");
    CHECK(back.session_index == 3);
    CHECK(back.device == Device::pixel);
    CHECK(back.hand == Hand::left);
    CHECK(back.posture == Posture::watch_raised);
    CHECK(back.condition == Condition::music);
    CHECK(std::filesystem::path(back.audio_path) == dir / "rec.wav");
    CHECK(back.pose_path == "/abs/pose.csv");
    REQUIRE(back.imu_path);
    CHECK(std::filesystem::path(*back.imu_path) == dir / "imu.csv");
    REQUIRE(back.wrist_to_little_mcp);
    CHECK(*back.wrist_to_little_mcp == 0.091);
  }

  TEST_CASE("malformed manifests are ingestion errors") {
    const auto path = scratch() / "bad.json";
    std::ofstream(path) << R"({"session_id": "s", "device": "toaster"})";
    CHECK_THROWS_AS(read_manifest(path.string()), IngestionError);
    std::ofstream(path) << "{ not json";
    CHECK_THROWS_AS(read_manifest(path.string()), IngestionError);
  }

  TEST_CASE("nominal imu rates") {
    CHECK(nominal_imu_rate(Device::galaxy) == 100.0);
    CHECK(nominal_imu_rate(Device::xiaomi) == 50.0);
    CHECK(nominal_imu_rate(Device::pixel) == 200.0);
  }

  TEST_CASE("pairing a synthetic session") {
    Session s = moving_session(20.0, 11);
    s.data.imu = synthetic_imu(20.0, 100.0, 3);
    std::optional<ProcessedRecording> proc;
    PairingSpec spec;
    spec.on_processed = [&](const ProcessedRecording& p) { proc = p; };
    const auto pairs = pair_session(s.data, spec);
    REQUIRE(proc);

    // Frame arithmetic: 600 poses at 30 FPS; the first 37 (t < 96.5 frames of 12.5 ms) lack a full
    // 96-column window plus its differential partner.
    CHECK(s.truth.size() == 600);
    CHECK(proc->start_index < 600);
    CHECK(pairs.size() == 600 - 37);
    CHECK(pairs.front().timestamp == doctest::Approx(37.0 / 30.0));

    std::size_t k = 37;
    for (const PairedSample& p : pairs) {
      REQUIRE(k < s.truth.size());
      CHECK(p.timestamp == s.truth[k].timestamp);
      CHECK(p.pose == normalize_pose(s.truth[k].pose));
      CHECK((p.pose.landmarks - s.truth[k].pose.landmarks).cwiseAbs().maxCoeff() < 1e-12);

      // Nearest column end by exhaustive search; must be within half a frame.
      Eigen::Index best = 0;
      for (Eigen::Index f = 0; f < proc->original.cols(); ++f) {
        if (std::abs(proc->frame_end_time(f) - p.timestamp) < std::abs(proc->frame_end_time(best) - p.timestamp))
          best = f;
      }
      CHECK(std::abs(proc->frame_end_time(best) - p.timestamp) <= 0.00625 + 1e-12);
      const EchoWindow expect = window_at(proc->original, proc->differential, proc->direct_row, best, WindowSpec{});
      CHECK(p.echo_window.channels[0] == expect.channels[0]);
      CHECK(p.echo_window.channels[1] == expect.channels[1]);

      REQUIRE(p.imu_window);
      CHECK(p.imu_window->values.rows() == 120);
      CHECK(p.imu_window->values.cols() == 24);
      CHECK(p.imu_window->start_time <= p.timestamp - 1.19 + 1e-9);
      CHECK(p.preprocess_ms > 0.0);
      ++k;
    }
  }

  TEST_CASE("missing imu leaves imu windows absent") {
    const Session s = moving_session(3.0, 2);
    const auto pairs = pair_session(s.data);
    REQUIRE(!pairs.empty());
    for (const auto& p : pairs) CHECK(!p.imu_window);
  }

  TEST_CASE("clock skew beyond half a frame is a pairing error") {
    Session s = moving_session(3.0, 4);
    s.data.poses.push_back({3.0 + 0.02, s.data.poses.back().pose});
    CHECK_THROWS_AS(pair_session(s.data), PairingError);
    s.data.poses.back().timestamp = 3.0 + 0.005;
    CHECK_NOTHROW(pair_session(s.data));
  }

  TEST_CASE("pair_samples reads files and names the bad one") {
    const auto dir = scratch() / "files";
    std::filesystem::create_directories(dir);
    const Session s = moving_session(3.0, 6);
    write_wav((dir / "a.wav").string(), s.data.audio, 48000.0);
    write_pose_file((dir / "p.csv").string(), s.data.poses);
    write_imu_file((dir / "i.csv").string(), synthetic_imu(3.0, 100.0, 1));
    SessionManifest m = manifest("s", "u", 1);
    m.device = Device::galaxy;
    m.audio_path = (dir / "a.wav").string();
    m.pose_path = (dir / "p.csv").string();
    m.imu_path = (dir / "i.csv").string();

    const auto pairs = pair_samples(m);
    REQUIRE(!pairs.empty());
    CHECK(pairs.front().imu_window);
    // 16-bit storage of the audio keeps windows close to the in-memory pairing.
    const auto direct = pair_session(s.data);
    REQUIRE(direct.size() == pairs.size());
    CHECK(pairs.back().pose == direct.back().pose);

    std::ofstream(dir / "broken.csv") << "timestamp,garbage\n1,2,3\n";
    m.pose_path = (dir / "broken.csv").string();
    try {
      pair_samples(m);
      FAIL("expected an ingestion error");
    } catch (const IngestionError& e) {
      CHECK(std::string(e.what()).find("broken.csv") != std::string::npos);
    }
    m.pose_path = (dir / "p.csv").string();
    m.audio_path = (dir / "nothing.wav").string();
    try {
      pair_samples(m);
      FAIL("expected an ingestion error");
    } catch (const IngestionError& e) {
      CHECK(std::string(e.what()).find("nothing.wav") != std::string::npos);
    }
  }

  TEST_CASE("cross_session holds out the final session") {
    std::vector<SessionManifest> ms;
    for (int i = 10; i >= 1; --i) ms.push_back(manifest("s" + std::to_string(i), "u1", i));
    const SplitResult r = split(ms, {Protocol::cross_session, {}});
    std::set<std::string> train;
    for (int i = 1; i <= 9; ++i) train.insert("s" + std::to_string(i));
    CHECK(ids(r.train) == train);
    CHECK(ids(r.test) == std::set<std::string>{"s10"});
    for (const auto& p : r.test) {
      CHECK(p.begin == 0.0);
      CHECK(p.end == 1.0);
    }
  }

  TEST_CASE("cross_user holds out one user") {
    std::vector<SessionManifest> ms;
    for (int u = 1; u <= 24; ++u)
      for (int i = 1; i <= 2; ++i) ms.push_back(manifest("u" + std::to_string(u) + "s" + std::to_string(i), "u" + std::to_string(u), i));
    const SplitResult r = split(ms, {Protocol::cross_user, {"u7"}});
    CHECK(ids(r.test) == std::set<std::string>{"u7s1", "u7s2"});
    std::set<std::string> train_users;
    for (const auto& p : r.train) {
      const auto it = std::find_if(ms.begin(), ms.end(), [&](const SessionManifest& m) { return m.session_id == p.session_id; });
      train_users.insert(it->user_id);
    }
    CHECK(train_users.size() == 23);
    CHECK(!train_users.count("u7"));
  }

  TEST_CASE("within_session splits the final two sessions in half") {
    std::vector<SessionManifest> ms;
    for (int i = 1; i <= 10; ++i) ms.push_back(manifest("s" + std::to_string(i), "u1", i));
    const SplitResult r = split(ms, {Protocol::within_session, {}});
    const auto train = members(r.train, 100), test = members(r.test, 100);
    for (int i = 1; i <= 8; ++i)
      for (std::size_t k = 0; k < 100; ++k) CHECK(train.count({"s" + std::to_string(i), k}));
    for (const char* id : {"s9", "s10"}) {
      for (std::size_t k = 0; k < 50; ++k) CHECK(train.count({id, k}));
      for (std::size_t k = 50; k < 100; ++k) CHECK(test.count({id, k}));
    }
    CHECK(train.size() == 900);
    CHECK(test.size() == 100);
  }

  TEST_CASE("splits are disjoint for every protocol") {
    std::vector<SessionManifest> ms;
    for (int u = 1; u <= 4; ++u)
      for (int i = 1; i <= 3; ++i) ms.push_back(manifest("u" + std::to_string(u) + "s" + std::to_string(i), "u" + std::to_string(u), i));
    for (const SplitSpec& spec : {SplitSpec{Protocol::within_session, {}}, SplitSpec{Protocol::cross_session, {}},
                                  SplitSpec{Protocol::cross_user, {"u2"}}}) {
      for (std::size_t n : {1u, 7u, 100u}) {
        const auto train = members(split(ms, spec).train, n);
        const auto test = members(split(ms, spec).test, n);
        for (const auto& item : test) CHECK(!train.count(item));
        if (n == 100) CHECK(train.size() + test.size() == 1200);
      }
    }
  }

  TEST_CASE("infeasible splits") {
    const std::vector<SessionManifest> one{manifest("s1", "u1", 1)};
    CHECK_THROWS_AS(split(one, {Protocol::cross_session, {}}), SplitError);
    CHECK_THROWS_AS(split(one, {Protocol::cross_user, {"u1"}}), SplitError);
    const std::vector<SessionManifest> two{manifest("s1", "u1", 1), manifest("s2", "u1", 2)};
    CHECK_THROWS_AS(split(two, {Protocol::cross_user, {"nobody"}}), SplitError);
    CHECK_THROWS_AS(split(two, {Protocol::cross_user, {}}), SplitError);
    CHECK_THROWS_AS(split(two, {Protocol::cross_session, {"s9"}}), SplitError);
    const std::vector<SessionManifest> dup{manifest("s1", "u1", 1), manifest("s1", "u1", 2)};
    CHECK_THROWS_AS(split(dup, {Protocol::cross_session, {}}), SplitError);
    CHECK_THROWS_AS(split(std::span<const SessionManifest>{}, {Protocol::within_session, {}}), SplitError);
  }

  TEST_CASE("knn exact match and equidistant midpoint") {
    std::mt19937_64 rng(1);
    const HandPose a = oracle::random_pose(rng), b = oracle::random_pose(rng), c = oracle::random_pose(rng);
    const std::vector<PairedSample> train{sample_with(a, 0.0), sample_with(b, 2.0), sample_with(c, 10.0)};
    const KnnEstimator one = fit_knn_estimator(train, 1);
    CHECK(one.predict(train[1]) == b);
    const KnnEstimator exact3 = fit_knn_estimator(train, 3);
    CHECK(exact3.predict(train[2]) == c);

    const std::vector<PairedSample> pair{sample_with(a, 0.0), sample_with(b, 2.0)};
    const KnnEstimator two = fit_knn_estimator(pair, 2);
    const HandPose mid = two.predict(sample_with(HandPose{}, 1.0));
    CHECK((mid.landmarks - 0.5 * (a.landmarks + b.landmarks)).cwiseAbs().maxCoeff() < 1e-15);

    CHECK_THROWS_AS(fit_knn_estimator(pair, 3), ParameterError);
    CHECK_THROWS_AS(fit_knn_estimator(pair, 0), ParameterError);
    CHECK_THROWS_AS(fit_knn_estimator(std::span<const PairedSample>{}, 1), ParameterError);
  }

  TEST_CASE("knn weights neighbours by inverse distance") {
    std::mt19937_64 rng(2);
    const HandPose a = oracle::random_pose(rng), b = oracle::random_pose(rng);
    const std::vector<PairedSample> train{sample_with(a, 0.0), sample_with(b, 4.0)};
    const KnnEstimator knn = fit_knn_estimator(train, 2);
    // Query at 1.0: distances sqrt(12)*1 and sqrt(12)*3, weights 1 and 1/3.
    const HandPose got = knn.predict(sample_with(HandPose{}, 1.0));
    const Landmarks expect = (1.0 * a.landmarks + (1.0 / 3.0) * b.landmarks) / (1.0 + 1.0 / 3.0);
    CHECK((got.landmarks - expect).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("evaluate with oracle and mean estimators") {
    std::mt19937_64 rng(3);
    std::vector<PairedSample> test;
    for (int i = 0; i < 30; ++i) {
      PairedSample s = sample_with(synth::random_hand(rng), i);
      s.preprocess_ms = 1.0 + i;
      test.push_back(s);
    }
    const EvaluationReport zero = evaluate(OracleEstimator{}, test);
    CHECK(zero.samples == 30);
    CHECK(zero.mpjpe_mm == 0.0);
    CHECK(zero.mpjae_deg == 0.0);
    CHECK(zero.mwae_deg == 0.0);
    for (const auto& f : zero.per_finger) {
      CHECK(f.mpjpe_mm == 0.0);
      CHECK(f.mpjae_deg == 0.0);
    }
    CHECK(zero.preprocess_ms.mean == doctest::Approx(15.5));
    CHECK(zero.preprocess_ms.sd == doctest::Approx(std::sqrt(30.0 * 31.0 / 12.0)));

    const MeanPoseEstimator mean(test);
    Landmarks avg = Landmarks::Zero();
    for (const auto& s : test) avg += s.pose.landmarks;
    avg /= 30.0;
    CHECK((mean.mean().landmarks - avg).cwiseAbs().maxCoeff() < 1e-15);
    double loop = 0.0;
    for (const auto& s : test) loop += oracle::mpjpe_mm(HandPose{avg}, s.pose);
    const EvaluationReport r = evaluate(mean, test);
    CHECK(r.mpjpe_mm == doctest::Approx(loop / 30.0).epsilon(1e-12));
    CHECK(r.mpjae_deg > 0.0);

    CHECK_THROWS_AS(evaluate(mean, std::span<const PairedSample>{}), InsufficientDataError);
  }

  TEST_CASE("report json round trip") {
    EvaluationReport r;
    r.samples = 12;
    r.mpjpe_mm = 7.87;
    r.mpjae_deg = 1.0 / 3.0;
    r.mwae_deg = 2.5e-7;
    for (std::size_t i = 0; i < 5; ++i) r.per_finger[i] = {0.1 * static_cast<double>(i) + 1e-3, 3.0 / (1.0 + static_cast<double>(i))};
    r.preprocess_ms = {35.0, 4.0};
    r.predict_ms = {115.0, 0.123456789012345};
    const std::string text = report_to_json(r);
    CHECK(text.find("\"mpjpe_mm\"") != std::string::npos);
    CHECK(text.find("\"little\"") != std::string::npos);
    const EvaluationReport back = report_from_json(text);
    CHECK(back.samples == r.samples);
    CHECK(back.mpjpe_mm == r.mpjpe_mm);
    CHECK(back.mpjae_deg == r.mpjae_deg);
    CHECK(back.mwae_deg == r.mwae_deg);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(back.per_finger[i].mpjpe_mm == r.per_finger[i].mpjpe_mm);
      CHECK(back.per_finger[i].mpjae_deg == r.per_finger[i].mpjae_deg);
    }
    CHECK(back.preprocess_ms.mean == 35.0);
    CHECK(back.predict_ms.sd == r.predict_ms.sd);
    CHECK_THROWS_AS(report_from_json("{\"samples\": 1}"), IngestionError);
  }

  TEST_CASE("estimator files round trip") {
    std::mt19937_64 rng(4);
    std::vector<PairedSample> train;
    for (int i = 0; i < 8; ++i) {
      PairedSample s;
      s.pose = oracle::random_pose(rng);
      for (auto& ch : s.echo_window.channels) ch = Eigen::MatrixXd::Random(60, 96);
      train.push_back(s);
    }
    const auto path = (scratch() / "knn.bin").string();
    save_estimator(path, fit_knn_estimator(train, 3));
    const auto loaded = load_estimator(path);
    CHECK(loaded->name() == "knn");
    const KnnEstimator original = fit_knn_estimator(train, 3);
    for (int i = 0; i < 5; ++i) {
      PairedSample q;
      for (auto& ch : q.echo_window.channels) ch = Eigen::MatrixXd::Random(60, 96);
      CHECK(loaded->predict(q) == original.predict(q));
    }

    save_estimator(path, MeanPoseEstimator(train));
    const auto mean = load_estimator(path);
    CHECK(mean->name() == "mean");
    CHECK(mean->predict(train[0]) == MeanPoseEstimator(train).predict(train[0]));

    save_estimator(path, OracleEstimator{});
    CHECK(load_estimator(path)->name() == "oracle");

    std::ofstream((scratch() / "junk.bin").string()) << "nope";
    CHECK_THROWS_AS(load_estimator((scratch() / "junk.bin").string()), IngestionError);
  }

  TEST_CASE("paired shards round trip") {
    Session s = moving_session(2.0, 8);
    s.data.imu = synthetic_imu(2.0, 100.0, 9);
    const auto pairs = pair_session(s.data);
    REQUIRE(!pairs.empty());
    const auto path = (scratch() / "shard.bin").string();
    write_paired_shard(path, pairs);
    const auto back = read_paired_shard(path);
    REQUIRE(back.size() == pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      CHECK(back[i].echo_window.channels[0] == pairs[i].echo_window.channels[0]);
      CHECK(back[i].echo_window.channels[1] == pairs[i].echo_window.channels[1]);
      CHECK(back[i].pose == pairs[i].pose);
      CHECK(back[i].timestamp == pairs[i].timestamp);
      CHECK(back[i].preprocess_ms == pairs[i].preprocess_ms);
      REQUIRE(back[i].imu_window.has_value() == pairs[i].imu_window.has_value());
      if (pairs[i].imu_window) CHECK(back[i].imu_window->values == pairs[i].imu_window->values);
    }
  }

  TEST_CASE("report metrics are deterministic") {
    auto run = [] {
      std::mt19937_64 rng(21);
      std::vector<PairedSample> d;
      for (int i = 0; i < 12; ++i) d.push_back(synth::neutral_to_pose_sample(synth::random_hand(rng), 500 + i));
      const std::span<const PairedSample> all(d);
      return evaluate(fit_knn_estimator(all.first(8), 3), all.subspan(8));
    };
    const EvaluationReport a = run(), b = run();
    CHECK(a.mpjpe_mm == b.mpjpe_mm);
    CHECK(a.mpjae_deg == b.mpjae_deg);
    CHECK(a.mwae_deg == b.mwae_deg);
    for (std::size_t i = 0; i < 5; ++i) CHECK(a.per_finger[i].mpjpe_mm == b.per_finger[i].mpjpe_mm);
  }

  TEST_CASE("knn error grows as SNR falls, averaged over five seeds") {
    const std::array<double, 4> snrs{30.0, 20.0, 10.0, 0.0};
    std::array<double, 4> knn_err{}, mean_err{};
    for (std::size_t k = 0; k < snrs.size(); ++k) {
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::mt19937_64 rng(seed);
        std::vector<PairedSample> d;
        for (int i = 0; i < 100; ++i)
          d.push_back(synth::neutral_to_pose_sample(synth::random_hand(rng), seed * 1000 + i, snrs[k]));
        const KnnEstimator knn = fit_knn_estimator(d, 3);
        for (std::size_t i = 0; i < d.size(); ++i) knn_err[k] += mpjpe(knn.predict_window(d[i].echo_window, i), d[i].pose);
        if (k == 0) {
          for (std::size_t i = 0; i < d.size(); ++i) {
            std::vector<PairedSample> rest(d);
            rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i));
            mean_err[0] += mpjpe(MeanPoseEstimator(rest).mean(), d[i].pose);
          }
        }
      }
    }
    MESSAGE("3-NN MPJPE (mm) at 30/20/10/0 dB: " << knn_err[0] / 500 << " " << knn_err[1] / 500 << " "
                                                   << knn_err[2] / 500 << " " << knn_err[3] / 500
                                                   << ", mean pose " << mean_err[0] / 500);
    CHECK(knn_err[0] < mean_err[0]);
    for (std::size_t k = 1; k < snrs.size(); ++k) CHECK(knn_err[k] > knn_err[k - 1]);
  }
}
