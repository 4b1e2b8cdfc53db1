// Synthetic keyboards, hands and sessions shared by the unit and acceptance suites.

#pragma once

#include <unistd.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pianofinger/audio.hpp"
#include "pianofinger/geometry.hpp"
#include "pianofinger/midi.hpp"
#include "pianofinger/session_store.hpp"
#include "pianofinger/skeleton.hpp"
#include "reference_algorithm.hpp"

namespace testsupport {

namespace pf = pianofinger;
namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "pianofinger-test-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::vector<pf::Keystone> two_keystones(double x0, double x1, double top_y, double bottom_y) {
  return {pf::Keystone{0, {x0, top_y}, {x0, bottom_y}}, pf::Keystone{52, {x1, top_y}, {x1, bottom_y}}};
}

// 1040 px wide, 100 px tall, 20 px white keys, anchored at the image origin.
inline pf::KeyboardLayout uniform_layout() {
  const auto ks = two_keystones(0, 1040, 0, 100);
  return pf::build_layout(ks, {1040, 100});
}

// Random calibration: 2 to 6 keystones with perturbed spacing, a tilted top edge
// and varying key heights.
inline std::vector<pf::Keystone> random_keystones(std::mt19937_64& rng, pf::ImageSize image) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> indices{0, 52};
  const int extra = static_cast<int>(u(rng) * 5);
  for (int i = 0; i < extra; ++i) indices.push_back(1 + static_cast<int>(u(rng) * 51));
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());

  const double left = 20 + u(rng) * 0.1 * image.width;
  const double span = (0.6 + 0.3 * u(rng)) * image.width;
  const double top0 = 0.4 * image.height + u(rng) * 0.2 * image.height;
  const double tilt = (u(rng) - 0.5) * 0.08;
  std::vector<pf::Keystone> out;
  for (int idx : indices) {
    const double nominal = left + span * idx / 52.0;
    const double jitter = (idx == 0 || idx == 52) ? 0.0 : (u(rng) - 0.5) * 0.3 * span / 52.0;
    const double x_top = nominal + jitter;
    const double x_bottom = x_top + (u(rng) - 0.5) * 0.2 * span / 52.0;
    const double y_top = top0 + tilt * (x_top - left);
    const double height = 0.12 * image.height * (0.8 + 0.4 * u(rng));
    out.push_back({idx, {x_top, y_top}, {x_bottom, y_top + height}});
  }
  return out;
}

inline pf::Landmark lm(pf::Point p) { return {p.x, p.y, 0.0}; }

// A 21-landmark hand whose fingertips (thumb..pinky) sit at `tips`.
inline pf::Hand make_hand(pf::Handedness side, const std::array<pf::Point, 5>& tips,
                          std::optional<bool> floating = false) {
  pf::Hand hand;
  hand.handedness = side;
  hand.floating = floating;
  pf::Point wrist{0, 0};
  for (const auto& t : tips) wrist = {wrist.x + t.x / 5, wrist.y + t.y / 5};
  wrist.y += 120;
  hand.landmarks[0] = lm(wrist);
  for (int f = 0; f < 5; ++f) {
    for (int j = 1; j <= 4; ++j) {
      const double t = j / 4.0;
      hand.landmarks[1 + f * 4 + (j - 1)] =
          lm({wrist.x + (tips[f].x - wrist.x) * t, wrist.y + (tips[f].y - wrist.y) * t});
    }
  }
  return hand;
}

inline pf::Point centroid(const pf::KeyRegion& r) {
  pf::Point c{0, 0};
  for (const auto& p : r.quad) c = {c.x + p.x / 4, c.y + p.y / 4};
  return c;
}

// Point strictly inside a (convex) quad from barycentric-ish weights in (0.1, 0.9).
inline pf::Point interior_point(const pf::KeyRegion& r, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 0.9);
  const double s = u(rng), t = u(rng);
  const auto& q = r.quad;
  const pf::Point top{q[0].x + (q[1].x - q[0].x) * s, q[0].y + (q[1].y - q[0].y) * s};
  const pf::Point bottom{q[3].x + (q[2].x - q[3].x) * s, q[3].y + (q[2].y - q[3].y) * s};
  return {top.x + (bottom.x - top.x) * t, top.y + (bottom.y - top.y) * t};
}

inline oracle::Region to_oracle(const pf::KeyRegion& r) {
  oracle::Region out;
  for (int i = 0; i < 4; ++i) out.corners[i] = {r.quad[i].x, r.quad[i].y};
  out.w = r.width_px;
  return out;
}

// H(f, i) as the oracle sees it: straight from the hands, floating hands dropped.
inline oracle::Frames to_oracle(const pf::SkeletonTrack& track) {
  oracle::Frames frames;
  for (const auto& [f, hf] : track.frames) {
    oracle::FrameFingers fingers;
    for (const auto& hand : hf.hands) {
      if (hand.floating.value_or(false)) continue;
      const int base = hand.handedness == pf::Handedness::left ? 0 : 5;
      const int tip_landmark[5] = {4, 8, 12, 16, 20};
      for (int k = 0; k < 5; ++k) {
        const auto& l = hand.landmarks[tip_landmark[k]];
        fingers[base + k] = oracle::Pt{l.x, l.y};
      }
    }
    frames[f] = fingers;
  }
  return frames;
}

inline std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline pf::AudioBuffer noise(std::size_t n, std::uint64_t seed, std::uint32_t rate = 44100, double amp = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, amp);
  pf::AudioBuffer b;
  b.sample_rate = rate;
  b.samples.resize(n);
  for (auto& s : b.samples) s = std::clamp(g(rng), -1.0, 1.0);
  return b;
}

// other[n] = x[n - k] for k > 0 (zero-padded head); x advanced by |k| for k < 0.
inline std::vector<double> shifted(const std::vector<double>& x, std::int64_t k) {
  std::vector<double> y(x.size(), 0.0);
  const auto n = static_cast<std::int64_t>(x.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t src = i - k;
    if (src >= 0 && src < n) y[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(src)];
  }
  return y;
}

// A small, fully specified session: keyboard at x 100..1140, y 500..600 in a
// 1280x720 frame, 30 fps, four notes.
//   note 0  C4  [0.0, 0.5)  R2 on the key           -> Single(6)
//   note 1  E4  [0.5, 1.0)  R1 and R3 both on it    -> Multiple{5, 7}
//   note 2  G2  [1.0, 1.5)  L3 on the key           -> Single(2)
//   note 3  pitch 20        [1.5, 2.0)              -> None (no region)
struct SessionFixture {
  fs::path dir;
  fs::path midi, audio_daw, audio_video, skeleton, keystones;
  pf::MidiPerformance perf;
  pf::Calibration calibration;
  pf::SkeletonTrack track;
};

inline pf::Calibration fixture_calibration() {
  return {{1280, 720}, two_keystones(100, 1140, 500, 600)};
}

inline SessionFixture write_session_inputs(const fs::path& dir) {
  fs::create_directories(dir);
  SessionFixture fx;
  fx.dir = dir;
  fx.calibration = fixture_calibration();
  const auto layout = pf::build_layout(fx.calibration.keystones, fx.calibration.image_size);

  struct Plan {
    int pitch;
    double on, off;
    std::vector<int> fingers;
  };
  const std::vector<Plan> plan{{60, 0.0, 0.5, {6}}, {64, 0.5, 1.0, {5, 7}}, {43, 1.0, 1.5, {2}}, {20, 1.5, 2.0, {}}};
  std::size_t idx = 0;
  for (const auto& p : plan) {
    pf::NoteEvent n;
    n.index = idx++;
    n.pitch = p.pitch;
    n.velocity = 80;
    n.onset_s = p.on;
    n.offset_s = p.off;
    fx.perf.notes.push_back(n);
  }
  fx.perf.duration_s = 2.0;

  fx.track.fps = 30;
  fx.track.image_size = fx.calibration.image_size;
  for (std::int64_t f = 0; f < 60; ++f) {
    const auto& p = plan[static_cast<std::size_t>(f / 15)];
    // Idle fingers rest far above the keys; a hand with no finger down is flagged floating.
    std::array<pf::Point, 5> left, right;
    for (int k = 0; k < 5; ++k) {
      left[k] = {150.0 + 30 * k, 300};
      right[k] = {900.0 + 30 * k, 300};
    }
    if (p.pitch >= 21) {
      const auto c = centroid(pf::key_region(layout, p.pitch));
      for (int finger : p.fingers) {
        auto& side = finger < 5 ? left : right;
        side[finger % 5] = {c.x + (finger % 5) * 0.5, c.y};
      }
    }
    pf::HandFrame hf;
    hf.frame = f;
    hf.hands.push_back(make_hand(pf::Handedness::left, left, std::nullopt));
    hf.hands.push_back(make_hand(pf::Handedness::right, right, std::nullopt));
    fx.track.frames[f] = hf;
  }

  fx.midi = dir / "take.mid";
  fx.audio_daw = dir / "daw.wav";
  fx.audio_video = dir / "video.wav";
  fx.skeleton = dir / "hands.jsonl";
  fx.keystones = dir / "keystones.json";
  pf::write_midi_file(fx.perf, fx.midi.string());
  const auto audio = noise(44100, 7);
  pf::write_wav_file(audio, fx.audio_daw.string());
  pf::write_wav_file(audio, fx.audio_video.string());
  std::ofstream sk(fx.skeleton);
  pf::write_skeletons(fx.track, sk);
  sk.close();
  write_text(fx.keystones, pf::serialize_calibration(fx.calibration));
  return fx;
}

// Creates profile + session `id` in `store` from a fixture, calibrated when asked.
inline pf::SessionManifest make_ready_session(pf::SessionStore& store, const SessionFixture& fx, const std::string& id,
                                              bool calibrate = true) {
  auto profile = store.profiles().empty() ? store.register_profile("Fixture Pianist") : store.profiles().front();
  pf::SessionRequest req;
  req.profile_id = profile.profile_id;
  req.piece = {"Composer", "Etude", {}};
  req.files.midi = fx.midi.string();
  req.files.audio_daw = fx.audio_daw.string();
  req.files.audio_video = fx.audio_video.string();
  req.files.skeleton = fx.skeleton.string();
  req.fps = 30;
  req.session_id = id;
  auto m = store.create_session(req);
  if (calibrate) store.save_calibration(id, fx.calibration);
  return store.load_manifest(id);
}

}  // namespace testsupport
