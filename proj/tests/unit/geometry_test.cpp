#include <cmath>
#include <random>

#include "doctest.h"
#include "pianofinger/error.hpp"
#include "pianofinger/geometry.hpp"
#include "reference_algorithm.hpp"
#include "scene.hpp"

namespace pf = pianofinger;
using testsupport::two_keystones;

namespace {

pf::ErrorKind layout_error(const std::vector<pf::Keystone>& ks) {
  try {
    pf::build_layout(ks, {1280, 720});
  } catch (const pf::Error& e) {
    return e.kind();
  }
  FAIL("expected build_layout to throw");
  return pf::ErrorKind::io;
}

double bottom_left_x(const pf::KeyRegion& r) { return r.quad[3].x; }
double bottom_right_x(const pf::KeyRegion& r) { return r.quad[2].x; }

}  // namespace

TEST_CASE("two keystones give uniform 20 px white keys") {
  const auto layout = testsupport::uniform_layout();
  int whites = 0, blacks = 0;
  for (int p = 21; p <= 108; ++p) {
    const auto& r = pf::key_region(layout, p);
    CHECK(r.pitch == p);
    if (r.is_black) {
      ++blacks;
      continue;
    }
    ++whites;
    CHECK(r.width_px == doctest::Approx(1040.0 / 52));
  }
  CHECK(whites == 52);
  CHECK(blacks == 36);

  const auto& a0 = pf::key_region(layout, 21);
  CHECK(bottom_left_x(a0) == 0.0);
  CHECK(bottom_right_x(a0) == doctest::Approx(20.0));
  CHECK(pf::locate_key_at(layout, {0.0, 90}) == 21);
  CHECK(pf::locate_key_at(layout, {19.999, 90}) == 21);
  CHECK(pf::locate_key_at(layout, {20.0, 90}) == 23);  // [0, 20) is half-open
}

TEST_CASE("A#0 is centred on boundary 1 with the black-key proportions") {
  const auto layout = testsupport::uniform_layout();
  const auto& as0 = pf::key_region(layout, 22);
  CHECK(as0.is_black);
  const double width = 0.583 * 20;
  const double length = 0.62 * 100;
  CHECK(as0.width_px == doctest::Approx(width));
  CHECK(as0.quad[0].x == doctest::Approx(20 - width / 2));
  CHECK(as0.quad[1].x == doctest::Approx(20 + width / 2));
  CHECK(as0.quad[2].x == doctest::Approx(20 + width / 2));
  CHECK(as0.quad[3].x == doctest::Approx(20 - width / 2));
  CHECK(as0.quad[0].y == doctest::Approx(0.0));
  CHECK(as0.quad[1].y == doctest::Approx(0.0));
  CHECK(as0.quad[2].y == doctest::Approx(length));
  CHECK(as0.quad[3].y == doctest::Approx(length));
  CHECK(pf::locate_key_at(layout, {20, length - 0.001}) == 22);
  CHECK(pf::locate_key_at(layout, {20, length + 0.001}) == 23);
}

TEST_CASE("a middle keystone produces piecewise widths") {
  const std::vector<pf::Keystone> ks{{0, {0, 0}, {0, 100}}, {26, {600, 0}, {600, 100}}, {52, {1040, 0}, {1040, 100}}};
  const auto layout = pf::build_layout(ks, {1040, 100});
  int white = 0;
  for (int p = 21; p <= 108; ++p) {
    const auto& r = pf::key_region(layout, p);
    if (r.is_black) continue;
    CHECK(r.width_px == doctest::Approx(white < 26 ? 600.0 / 26 : 440.0 / 26).epsilon(1e-12));
    ++white;
  }
  CHECK(600.0 / 26 == doctest::Approx(23.08).epsilon(1e-3));
  CHECK(440.0 / 26 == doctest::Approx(16.92).epsilon(1e-3));
}

TEST_CASE("key_region lookups") {
  const auto layout = testsupport::uniform_layout();
  CHECK(pf::key_region(layout, 21).pitch == 21);
  const auto& c8 = pf::key_region(layout, 108);
  CHECK(c8.quad[1].x == 1040.0);
  CHECK(c8.quad[2].x == 1040.0);
  for (int bad : {20, 109, 0, -1}) {
    try {
      pf::key_region(layout, bad);
      FAIL("expected no_region");
    } catch (const pf::Error& e) {
      CHECK(e.kind() == pf::ErrorKind::no_region);
    }
  }
}

TEST_CASE("point to region distance examples") {
  const auto layout = testsupport::uniform_layout();
  const auto& a0 = pf::key_region(layout, 21);
  CHECK(pf::point_region_distance(testsupport::centroid(a0), a0) == 0.0);
  CHECK(pf::point_region_distance({-5, 50}, a0) == doctest::Approx(5.0));
  // 3 px left, 4 px above the top-left corner (0, 0)
  CHECK(pf::point_region_distance({-3, -4}, a0) == doctest::Approx(std::hypot(3.0, 4.0)));
  CHECK(pf::point_region_distance({0, 50}, a0) == 0.0);  // on the edge
  CHECK(pf::region_contains(a0, {0, 0}));
}

TEST_CASE("locate_key_at examples") {
  const auto layout = testsupport::uniform_layout();
  CHECK(pf::locate_key_at(layout, testsupport::centroid(pf::key_region(layout, 21))) == 21);
  CHECK(pf::locate_key_at(layout, {18, 10}) == 22);  // inside A#0, also inside A0's upper part
  CHECK_FALSE(pf::locate_key_at(layout, {500, -1}).has_value());
  CHECK_FALSE(pf::locate_key_at(layout, {1100, 50}).has_value());
}

TEST_CASE("invalid calibrations are rejected") {
  auto ks = two_keystones(0, 1040, 0, 100);
  CHECK(layout_error({ks[0]}) == pf::ErrorKind::calibration_incomplete);
  CHECK(layout_error({ks[1]}) == pf::ErrorKind::calibration_incomplete);
  CHECK(layout_error({}) == pf::ErrorKind::calibration_incomplete);
  CHECK(layout_error({ks[0], {30, {500, 0}, {500, 100}}}) == pf::ErrorKind::calibration_incomplete);

  CHECK(layout_error({ks[0], {26, {-10, 0}, {-10, 100}}, ks[1]}) == pf::ErrorKind::invalid_keystone);
  CHECK(layout_error({ks[0], {26, {500, 0}, {1100, 100}}, ks[1]}) == pf::ErrorKind::invalid_keystone);
  CHECK(layout_error({ks[0], {26, {500, 100}, {500, 0}}, ks[1]}) == pf::ErrorKind::invalid_keystone);
  CHECK(layout_error({ks[0], {53, {500, 0}, {500, 100}}}) == pf::ErrorKind::invalid_keystone);
  CHECK(layout_error({ks[1], ks[0]}) == pf::ErrorKind::invalid_keystone);
  CHECK(layout_error({ks[0], {0, {1, 0}, {1, 100}}, ks[1]}) == pf::ErrorKind::invalid_keystone);
}

TEST_CASE("white bottom edges are disjoint, ordered and partition the strip") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto layout = pf::build_layout(testsupport::random_keystones(rng, {1920, 1080}), {1920, 1080});
    double prev_right = -INFINITY;
    for (int p = 21; p <= 108; ++p) {
      const auto& r = pf::key_region(layout, p);
      if (r.is_black) continue;
      CHECK(bottom_left_x(r) >= prev_right);
      CHECK(bottom_right_x(r) > bottom_left_x(r));
      prev_right = bottom_right_x(r);
    }
    // a horizontal line through the lower 10% of the keys
    std::uniform_real_distribution<double> u(0, 1);
    for (int s = 0; s < 300; ++s) {
      const double b = u(rng) * 52;
      const int w = static_cast<int>(b);
      const auto& lb = layout.boundaries[static_cast<std::size_t>(w)];
      const auto& rb = layout.boundaries[static_cast<std::size_t>(w + 1)];
      const double t = 0.92 + 0.06 * u(rng), f = b - w;
      const pf::Point left{lb.top.x + (lb.bottom.x - lb.top.x) * t, lb.top.y + (lb.bottom.y - lb.top.y) * t};
      const pf::Point right{rb.top.x + (rb.bottom.x - rb.top.x) * t, rb.top.y + (rb.bottom.y - rb.top.y) * t};
      const pf::Point p{left.x + (right.x - left.x) * f, left.y + (right.y - left.y) * f};
      int hits = 0, hit_pitch = 0;
      for (const auto& r : layout.regions) {
        if (!r.is_black && oracle::inside({p.x, p.y}, testsupport::to_oracle(r))) {
          ++hits;
          hit_pitch = r.pitch;
        }
      }
      REQUIRE(hits == 1);
      CHECK(pf::locate_key_at(layout, p) == hit_pitch);
    }
  }
}

TEST_CASE("a keystone placed on the interpolated line changes nothing") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    auto ks = testsupport::random_keystones(rng, {1920, 1080});
    const auto base = pf::build_layout(ks, {1920, 1080});
    std::vector<int> free;
    for (int b = 1; b < 52; ++b) {
      if (std::none_of(ks.begin(), ks.end(), [&](const pf::Keystone& k) { return k.boundary_index == b; })) {
        free.push_back(b);
      }
    }
    if (free.empty()) continue;
    const int b = free[rng() % free.size()];
    ks.push_back(base.boundaries[static_cast<std::size_t>(b)]);
    std::sort(ks.begin(), ks.end(), [](auto& a, auto& c) { return a.boundary_index < c.boundary_index; });
    const auto refined = pf::build_layout(ks, {1920, 1080});
    for (std::size_t i = 0; i < base.regions.size(); ++i) {
      for (int c = 0; c < 4; ++c) {
        REQUIRE(std::abs(base.regions[i].quad[c].x - refined.regions[i].quad[c].x) <= 1e-9);
        REQUIRE(std::abs(base.regions[i].quad[c].y - refined.regions[i].quad[c].y) <= 1e-9);
      }
      REQUIRE(std::abs(base.regions[i].width_px - refined.regions[i].width_px) <= 1e-9);
    }
  }
}

TEST_CASE("distance is zero exactly on containment and 1-Lipschitz") {
  std::mt19937_64 rng(23);
  const auto layout = pf::build_layout(testsupport::random_keystones(rng, {1280, 720}), {1280, 720});
  std::uniform_real_distribution<double> x(0, 1280), y(0, 720), step(-15, 15);
  std::uniform_int_distribution<int> pitch(21, 108);
  for (int i = 0; i < 5000; ++i) {
    const auto& r = pf::key_region(layout, pitch(rng));
    // half the samples near the key so both sides of the boundary get exercised
    pf::Point p = i % 2 ? pf::Point{x(rng), y(rng)} : testsupport::centroid(r);
    if (i % 2 == 0) p = {p.x + 2 * step(rng), p.y + 4 * step(rng)};
    const double d = pf::point_region_distance(p, r);
    CHECK((d == 0.0) == oracle::inside({p.x, p.y}, testsupport::to_oracle(r)));
    CHECK(pf::region_contains(r, p) == (d == 0.0));
    if (d > 0) CHECK(d == doctest::Approx(oracle::dist({p.x, p.y}, testsupport::to_oracle(r))));
    const pf::Point q{p.x + step(rng), p.y + step(rng)};
    CHECK(std::abs(pf::point_region_distance(q, r) - d) <= std::hypot(q.x - p.x, q.y - p.y) + 1e-9);
  }
}

TEST_CASE("top edge follows the boundary tops") {
  const std::vector<pf::Keystone> ks{{0, {0, 10}, {0, 110}}, {52, {1040, 62}, {1040, 162}}};
  const auto layout = pf::build_layout(ks, {1200, 400});
  CHECK(layout.top_edge_y(0) == doctest::Approx(10));
  CHECK(layout.top_edge_y(520) == doctest::Approx(36));
  CHECK(layout.top_edge_y(1040) == doctest::Approx(62));
  CHECK(layout.top_edge_y(-100) == doctest::Approx(5));  // extrapolated
  CHECK(layout.mean_key_height() == doctest::Approx(100));
}

TEST_CASE("calibration documents round trip") {
  std::mt19937_64 rng(41);
  const pf::Calibration cal{{1920, 1080}, testsupport::random_keystones(rng, {1920, 1080})};
  const auto back = pf::parse_calibration(pf::serialize_calibration(cal));
  CHECK(back.image_size == cal.image_size);
  CHECK(back.keystones == cal.keystones);

  for (const char* bad : {"", "{", "[]", R"({"image_size":[10],"keystones":[]})",
                          R"({"image_size":[10,10],"keystones":[{"boundary_index":0,"top":[0]}]})"}) {
    CHECK_THROWS_AS(pf::parse_calibration(bad), pf::Error);
  }
}
