/// @file
/// @brief Frame-wise hand skeleton ingestion and fingertip extraction.
///
/// Skeleton files are JSON Lines, one record per detected hand per frame:
///
///   {"frame": 120, "hand": "right", "floating": false, "landmarks": [[x, y, z], ... 21 entries]}
///
/// Coordinates are image pixels with y growing downward. "floating" is optional;
/// when absent the flag is computed by flag_floating(). Landmark order follows
/// the 21-point hand model (wrist = 0, fingertips at 4, 8, 12, 16, 20).

#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pianofinger/geometry.hpp"

namespace pianofinger {

inline constexpr int kLandmarksPerHand = 21;
inline constexpr int kFingerCount = 10;
inline constexpr std::array<int, 5> kFingertipLandmarks{4, 8, 12, 16, 20};

enum class Handedness { left, right };

std::string to_string(Handedness h);

struct Landmark {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool operator==(const Landmark&) const = default;
};

struct Hand {
  Handedness handedness = Handedness::right;
  std::array<Landmark, kLandmarksPerHand> landmarks{};
  std::optional<bool> floating;

  bool operator==(const Hand&) const = default;
};

struct HandFrame {
  std::int64_t frame = 0;
  std::vector<Hand> hands;  // at most one per handedness, left first

  bool operator==(const HandFrame&) const = default;
};

/// finger_index 0-4 = left thumb..pinky, 5-9 = right thumb..pinky.
struct FingertipObservation {
  int finger_index = 0;
  Point position;
};

struct SkeletonTrack {
  std::map<std::int64_t, HandFrame> frames;
  double fps = 30.0;
  ImageSize image_size;
};

/// Parses skeleton records. Throws Error{parse} (with line number) on malformed
/// records, Error{invalid_landmark_count} and Error{duplicate_hand}.
SkeletonTrack load_skeletons(std::istream& in, double fps, ImageSize image_size);

SkeletonTrack load_skeleton_file(const std::string& path, double fps, ImageSize image_size);

/// Serializes a track back to the line format (frame order, left before right).
void write_skeletons(const SkeletonTrack& track, std::ostream& out);

/// Fingertips of every non-floating hand at `frame`, ordered by finger_index.
std::vector<FingertipObservation> fingertips_at(const SkeletonTrack& track, std::int64_t frame);

/// Default floating margin: half the mean key height.
double default_floating_margin(const KeyboardLayout& layout);

/// Marks a hand floating when all five fingertips lie more than margin_px above
/// the keyboard's top edge. Hands that already carry a flag are left untouched.
SkeletonTrack flag_floating(const SkeletonTrack& track, const KeyboardLayout& layout, double margin_px);

}  // namespace pianofinger
