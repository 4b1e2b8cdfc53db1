#include "pianofinger/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "pianofinger/error.hpp"

namespace pianofinger {
namespace {

using nlohmann::json;

// Landmarks may sit this fraction of the image size outside the frame.
constexpr double kBoundsTolerance = 0.5;

[[noreturn]] void line_fail(ErrorKind kind, std::size_t line, const std::string& what) {
  throw Error(kind, "skeleton: line " + std::to_string(line) + ": " + what);
}

Hand parse_hand(const json& rec, std::size_t line, ImageSize image_size, std::int64_t& frame_out) {
  if (!rec.is_object()) line_fail(ErrorKind::parse, line, "record is not an object");
  const auto frame_it = rec.find("frame");
  if (frame_it == rec.end() || !frame_it->is_number_integer()) line_fail(ErrorKind::parse, line, "missing integer 'frame'");
  frame_out = frame_it->get<std::int64_t>();
  if (frame_out < 0) line_fail(ErrorKind::parse, line, "negative frame index");

  Hand hand;
  const auto hand_it = rec.find("hand");
  if (hand_it == rec.end() || !hand_it->is_string()) line_fail(ErrorKind::parse, line, "missing string 'hand'");
  const auto side = hand_it->get<std::string>();
  if (side == "left") {
    hand.handedness = Handedness::left;
  } else if (side == "right") {
    hand.handedness = Handedness::right;
  } else {
    line_fail(ErrorKind::parse, line, "hand must be \"left\" or \"right\", got \"" + side + "\"");
  }

  if (const auto fl = rec.find("floating"); fl != rec.end() && !fl->is_null()) {
    if (!fl->is_boolean()) line_fail(ErrorKind::parse, line, "'floating' must be a boolean");
    hand.floating = fl->get<bool>();
  }

  const auto lm = rec.find("landmarks");
  if (lm == rec.end() || !lm->is_array()) line_fail(ErrorKind::parse, line, "missing array 'landmarks'");
  if (lm->size() != kLandmarksPerHand) {
    line_fail(ErrorKind::invalid_landmark_count, line,
              "expected 21 landmarks, got " + std::to_string(lm->size()));
  }
  const double margin_x = kBoundsTolerance * image_size.width;
  const double margin_y = kBoundsTolerance * image_size.height;
  for (std::size_t i = 0; i < lm->size(); ++i) {
    const auto& p = (*lm)[i];
    if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() || !p[2].is_number()) {
      line_fail(ErrorKind::parse, line, "landmark " + std::to_string(i) + " is not [x, y, z]");
    }
    Landmark l{p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
    if (!std::isfinite(l.x) || !std::isfinite(l.y) || !std::isfinite(l.z)) {
      line_fail(ErrorKind::parse, line, "landmark " + std::to_string(i) + " is not finite");
    }
    if (image_size.width > 0 && image_size.height > 0 &&
        (l.x < -margin_x || l.x > image_size.width + margin_x || l.y < -margin_y || l.y > image_size.height + margin_y)) {
      line_fail(ErrorKind::parse, line, "landmark " + std::to_string(i) + " lies far outside the image");
    }
    hand.landmarks[i] = l;
  }
  return hand;
}

}  // namespace

std::string to_string(Handedness h) { return h == Handedness::left ? "left" : "right"; }

SkeletonTrack load_skeletons(std::istream& in, double fps, ImageSize image_size) {
  if (!(fps > 0.0)) throw Error(ErrorKind::validation, "skeleton: fps must be positive");
  SkeletonTrack track;
  track.fps = fps;
  track.image_size = image_size;

  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      line_fail(ErrorKind::parse, line, e.what());
    }
    std::int64_t frame = 0;
    Hand hand = parse_hand(rec, line, image_size, frame);

    HandFrame& hf = track.frames[frame];
    hf.frame = frame;
    for (const auto& existing : hf.hands) {
      if (existing.handedness == hand.handedness) {
        line_fail(ErrorKind::duplicate_hand, line,
                  "second " + to_string(hand.handedness) + " hand for frame " + std::to_string(frame));
      }
    }
    hf.hands.push_back(hand);
    std::sort(hf.hands.begin(), hf.hands.end(),
              [](const Hand& a, const Hand& b) { return a.handedness < b.handedness; });
  }
  return track;
}

SkeletonTrack load_skeleton_file(const std::string& path, double fps, ImageSize image_size) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open skeleton file: " + path);
  return load_skeletons(in, fps, image_size);
}

void write_skeletons(const SkeletonTrack& track, std::ostream& out) {
  for (const auto& [frame, hf] : track.frames) {
    for (const auto& hand : hf.hands) {
      json rec;
      rec["frame"] = frame;
      rec["hand"] = to_string(hand.handedness);
      if (hand.floating) rec["floating"] = *hand.floating;
      json lms = json::array();
      for (const auto& l : hand.landmarks) lms.push_back({l.x, l.y, l.z});
      rec["landmarks"] = std::move(lms);
      out << rec.dump() << '\n';
    }
  }
}

std::vector<FingertipObservation> fingertips_at(const SkeletonTrack& track, std::int64_t frame) {
  std::vector<FingertipObservation> out;
  const auto it = track.frames.find(frame);
  if (it == track.frames.end()) return out;
  for (const auto& hand : it->second.hands) {
    if (hand.floating.value_or(false)) continue;
    const int base = hand.handedness == Handedness::left ? 0 : 5;
    for (int f = 0; f < 5; ++f) {
      const auto& l = hand.landmarks[kFingertipLandmarks[f]];
      out.push_back({base + f, Point{l.x, l.y}});
    }
  }
  return out;
}

double default_floating_margin(const KeyboardLayout& layout) { return 0.5 * layout.mean_key_height(); }

SkeletonTrack flag_floating(const SkeletonTrack& track, const KeyboardLayout& layout, double margin_px) {
  SkeletonTrack out = track;
  for (auto& [frame, hf] : out.frames) {
    for (auto& hand : hf.hands) {
      if (hand.floating) continue;
      hand.floating = std::all_of(kFingertipLandmarks.begin(), kFingertipLandmarks.end(), [&](int idx) {
        const auto& l = hand.landmarks[idx];
        return l.y < layout.top_edge_y(l.x) - margin_px;
      });
    }
  }
  return out;
}

}  // namespace pianofinger
