/// @file
/// @brief Image-space model of the 88 piano keys, calibrated from keystones.
///
/// Keystones anchor white-key boundaries: boundary 0 is the left edge of A0 and
/// boundary 52 the right edge of C8. Boundaries without a keystone are linearly
/// interpolated (top and bottom points independently) between the nearest
/// enclosing keystones, which absorbs mild lens distortion piecewise.

#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pianofinger {

inline constexpr int kWhiteKeyCount = 52;
inline constexpr int kBlackKeyCount = 36;
inline constexpr int kKeyCount = 88;
inline constexpr int kBoundaryCount = kWhiteKeyCount + 1;

inline constexpr double kBlackWidthRatio = 0.583;   // black / white key width
inline constexpr double kBlackLengthRatio = 0.62;   // black key length / key height

struct Point {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point&) const = default;
};

struct ImageSize {
  int width = 0;
  int height = 0;

  bool operator==(const ImageSize&) const = default;
};

struct Keystone {
  int boundary_index = 0;
  Point top;
  Point bottom;

  bool operator==(const Keystone&) const = default;
};

struct KeyRegion {
  int pitch = 0;
  std::array<Point, 4> quad{};  // top-left, top-right, bottom-right, bottom-left
  double width_px = 0.0;
  bool is_black = false;
};

struct KeyboardLayout {
  std::array<KeyRegion, kKeyCount> regions{};  // regions[pitch - 21]
  ImageSize image_size;
  std::vector<Keystone> keystones;
  std::array<Keystone, kBoundaryCount> boundaries{};  // interpolated boundary lines

  /// Mean white-key height along the boundary lines.
  double mean_key_height() const;
  /// y of the keyboard's top edge at image column x (piecewise linear, extrapolated).
  double top_edge_y(double x) const;
};

bool is_black_pitch(int pitch);

/// Throws Error{calibration_incomplete} when boundary 0 or 52 is missing and
/// Error{invalid_keystone} for out-of-range, unordered or non-monotonic keystones.
KeyboardLayout build_layout(std::span<const Keystone> keystones, ImageSize image_size);

/// Throws Error{no_region} for pitches outside 21..108.
const KeyRegion& key_region(const KeyboardLayout& layout, int pitch);

bool region_contains(const KeyRegion& region, Point p);

/// 0 inside or on the quad, else Euclidean distance to its boundary.
double point_region_distance(Point p, const KeyRegion& region);

/// Black keys win where they overlap white keys.
std::optional<int> locate_key_at(const KeyboardLayout& layout, Point p);

// Calibration document (JSON): {"image_size": [w, h], "keystones": [{"boundary_index", "top": [x, y], "bottom": [x, y]}]}
struct Calibration {
  ImageSize image_size;
  std::vector<Keystone> keystones;
};

Calibration parse_calibration(const std::string& text);
std::string serialize_calibration(const Calibration& calibration);
Calibration read_calibration_file(const std::string& path);

}  // namespace pianofinger
