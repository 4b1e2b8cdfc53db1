#include "pianofinger/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pianofinger/error.hpp"
#include "pianofinger/midi.hpp"

namespace pianofinger {
namespace {

using nlohmann::json;

Point lerp(Point a, Point b, double t) { return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)}; }

Point midpoint(Point a, Point b) { return {(a.x + b.x) * 0.5, (a.y + b.y) * 0.5}; }

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

bool convex_nondegenerate(const std::array<Point, 4>& q) {
  int sign = 0;
  for (int i = 0; i < 4; ++i) {
    const double c = cross(q[i], q[(i + 1) % 4], q[(i + 2) % 4]);
    if (!(std::abs(c) > 0.0)) return false;
    const int s = c > 0.0 ? 1 : -1;
    if (sign != 0 && s != sign) return false;
    sign = s;
  }
  return true;
}

double edge_width(const std::array<Point, 4>& q) {
  return midpoint(q[1], q[2]).x - midpoint(q[0], q[3]).x;
}

// Ordinal of a white pitch among the 52 white keys; -1 for black pitches.
int white_ordinal(int pitch) {
  if (is_black_pitch(pitch)) return -1;
  int n = 0;
  for (int p = kLowestPianoPitch; p < pitch; ++p) n += is_black_pitch(p) ? 0 : 1;
  return n;
}

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::invalid_keystone, "calibration: " + what); }

}  // namespace

bool is_black_pitch(int pitch) {
  switch (((pitch % 12) + 12) % 12) {
    case 1: case 3: case 6: case 8: case 10: return true;
    default: return false;
  }
}

double KeyboardLayout::mean_key_height() const {
  double sum = 0.0;
  for (const auto& b : boundaries) sum += std::hypot(b.bottom.x - b.top.x, b.bottom.y - b.top.y);
  return sum / kBoundaryCount;
}

double KeyboardLayout::top_edge_y(double x) const {
  std::size_t seg = 0;
  while (seg + 2 < boundaries.size() && x > boundaries[seg + 1].top.x) ++seg;
  const Point a = boundaries[seg].top;
  const Point b = boundaries[seg + 1].top;
  return a.y + (x - a.x) * (b.y - a.y) / (b.x - a.x);
}

KeyboardLayout build_layout(std::span<const Keystone> keystones, ImageSize image_size) {
  if (keystones.empty()) throw Error(ErrorKind::calibration_incomplete, "calibration: no keystones");
  for (const auto& k : keystones) {
    if (k.boundary_index < 0 || k.boundary_index > kWhiteKeyCount) {
      invalid("boundary_index " + std::to_string(k.boundary_index) + " outside 0..52");
    }
    for (double v : {k.top.x, k.top.y, k.bottom.x, k.bottom.y}) {
      if (!std::isfinite(v)) invalid("non-finite coordinate at boundary " + std::to_string(k.boundary_index));
    }
    if (!(k.top.y < k.bottom.y)) invalid("top must lie above bottom at boundary " + std::to_string(k.boundary_index));
  }
  for (std::size_t i = 1; i < keystones.size(); ++i) {
    if (keystones[i].boundary_index <= keystones[i - 1].boundary_index) invalid("boundary indices must strictly increase");
  }
  if (keystones.front().boundary_index != 0 || keystones.back().boundary_index != kWhiteKeyCount) {
    throw Error(ErrorKind::calibration_incomplete, "calibration: keystones at boundaries 0 and 52 are required");
  }
  for (std::size_t i = 1; i < keystones.size(); ++i) {
    if (!(keystones[i].top.x > keystones[i - 1].top.x) || !(keystones[i].bottom.x > keystones[i - 1].bottom.x)) {
      invalid("x must strictly increase between boundaries " + std::to_string(keystones[i - 1].boundary_index) +
              " and " + std::to_string(keystones[i].boundary_index));
    }
  }

  KeyboardLayout layout;
  layout.image_size = image_size;
  layout.keystones.assign(keystones.begin(), keystones.end());

  std::size_t seg = 0;
  for (int b = 0; b < kBoundaryCount; ++b) {
    while (keystones[seg + 1].boundary_index < b) ++seg;
    const Keystone& lo = keystones[seg];
    const Keystone& hi = keystones[seg + 1];
    Keystone& out = layout.boundaries[b];
    out.boundary_index = b;
    if (b == lo.boundary_index) {
      out.top = lo.top;
      out.bottom = lo.bottom;
    } else if (b == hi.boundary_index) {
      out.top = hi.top;
      out.bottom = hi.bottom;
    } else {
      const double t = static_cast<double>(b - lo.boundary_index) / (hi.boundary_index - lo.boundary_index);
      out.top = lerp(lo.top, hi.top, t);
      out.bottom = lerp(lo.bottom, hi.bottom, t);
    }
  }

  std::array<double, kWhiteKeyCount> white_width{};
  for (int pitch = kLowestPianoPitch; pitch <= kHighestPianoPitch; ++pitch) {
    if (is_black_pitch(pitch)) continue;
    const int w = white_ordinal(pitch);
    const auto& left = layout.boundaries[w];
    const auto& right = layout.boundaries[w + 1];
    KeyRegion& r = layout.regions[pitch - kLowestPianoPitch];
    r.pitch = pitch;
    r.is_black = false;
    r.quad = {left.top, right.top, right.bottom, left.bottom};
    if (!convex_nondegenerate(r.quad)) invalid("degenerate key quad at pitch " + std::to_string(pitch));
    r.width_px = edge_width(r.quad);
    if (!(r.width_px > 0.0)) invalid("non-positive key width at pitch " + std::to_string(pitch));
    white_width[w] = r.width_px;
  }

  for (int pitch = kLowestPianoPitch; pitch <= kHighestPianoPitch; ++pitch) {
    if (!is_black_pitch(pitch)) continue;
    const int below = white_ordinal(pitch - 1);
    const int b = below + 1;  // parent boundary
    const Point top = layout.boundaries[b].top;
    const Point bottom = layout.boundaries[b].bottom;
    const Point tip = lerp(top, bottom, kBlackLengthRatio);
    const double half = 0.5 * kBlackWidthRatio * 0.5 * (white_width[below] + white_width[below + 1]);
    const Point prev = layout.boundaries[b - 1].top;
    const Point next = layout.boundaries[b + 1].top;
    const double slope = (next.y - prev.y) / (next.x - prev.x);

    KeyRegion& r = layout.regions[pitch - kLowestPianoPitch];
    r.pitch = pitch;
    r.is_black = true;
    r.quad = {Point{top.x - half, top.y - half * slope}, Point{top.x + half, top.y + half * slope},
              Point{tip.x + half, tip.y + half * slope}, Point{tip.x - half, tip.y - half * slope}};
    if (!convex_nondegenerate(r.quad)) invalid("degenerate key quad at pitch " + std::to_string(pitch));
    r.width_px = edge_width(r.quad);
  }
  return layout;
}

const KeyRegion& key_region(const KeyboardLayout& layout, int pitch) {
  if (pitch < kLowestPianoPitch || pitch > kHighestPianoPitch) {
    throw Error(ErrorKind::no_region, "no key region for pitch " + std::to_string(pitch));
  }
  return layout.regions[pitch - kLowestPianoPitch];
}

double point_region_distance(Point p, const KeyRegion& region) {
  const auto& q = region.quad;
  bool has_pos = false, has_neg = false;
  for (int i = 0; i < 4; ++i) {
    const double c = cross(q[i], q[(i + 1) % 4], p);
    has_pos = has_pos || c > 0.0;
    has_neg = has_neg || c < 0.0;
  }
  if (!(has_pos && has_neg)) return 0.0;
  double d = segment_distance(p, q[0], q[1]);
  for (int i = 1; i < 4; ++i) d = std::min(d, segment_distance(p, q[i], q[(i + 1) % 4]));
  return d;
}

bool region_contains(const KeyRegion& region, Point p) { return point_region_distance(p, region) == 0.0; }

std::optional<int> locate_key_at(const KeyboardLayout& layout, Point p) {
  for (const auto& r : layout.regions) {
    if (r.is_black && region_contains(r, p)) return r.pitch;
  }
  // Descending so a shared boundary resolves to the key on its right, i.e. [left, right).
  for (auto it = layout.regions.rbegin(); it != layout.regions.rend(); ++it) {
    if (!it->is_black && region_contains(*it, p)) return it->pitch;
  }
  return std::nullopt;
}

namespace {

Point point_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorKind::parse, "calibration: point must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

Calibration parse_calibration(const std::string& text) {
  try {
    const json doc = json::parse(text);
    Calibration c;
    const auto& size = doc.at("image_size");
    if (!size.is_array() || size.size() != 2) throw Error(ErrorKind::parse, "calibration: image_size must be [w, h]");
    c.image_size = {size[0].get<int>(), size[1].get<int>()};
    for (const auto& k : doc.at("keystones")) {
      c.keystones.push_back({k.at("boundary_index").get<int>(), point_from(k.at("top")), point_from(k.at("bottom"))});
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("calibration: ") + e.what());
  }
}

std::string serialize_calibration(const Calibration& calibration) {
  json doc;
  doc["image_size"] = {calibration.image_size.width, calibration.image_size.height};
  doc["keystones"] = json::array();
  for (const auto& k : calibration.keystones) {
    doc["keystones"].push_back(
        {{"boundary_index", k.boundary_index}, {"top", {k.top.x, k.top.y}}, {"bottom", {k.bottom.x, k.bottom.y}}});
  }
  return doc.dump(2) + "\n";
}

Calibration read_calibration_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open calibration file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_calibration(ss.str());
}

}  // namespace pianofinger
