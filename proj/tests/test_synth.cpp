#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <stdexcept>

#include "vtseg/synth.hpp"

using namespace vtseg;

namespace {

// Independent oracle for a straight axis-aligned tube with spherical caps:
// inside iff within radius of the segment, evaluated with direct per-case
// geometry rather than a generic closest-point routine.
bool straight_tube_oracle(double x, double y, double z, double cx, double cz, double y0,
                          double y1, double r) {
  const double r2 = r * r;
  const double dx = x - cx, dz = z - cz;
  if (y >= y0 && y <= y1) return dx * dx + dz * dz <= r2;
  const double ey = y < y0 ? y0 : y1;
  const double dy = y - ey;
  return dx * dx + dy * dy + dz * dz <= r2;
}

// 6-connected component count via breadth-first search.
int count_components(const LabelMap& m) {
  const auto [nx, ny, nz] = m.meta.dims;
  std::vector<char> seen(m.data.size(), 0);
  int components = 0;
  for (std::size_t start = 0; start < m.data.size(); ++start) {
    if (!m.data[start] || seen[start]) continue;
    ++components;
    std::queue<std::size_t> frontier;
    frontier.push(start);
    seen[start] = 1;
    while (!frontier.empty()) {
      std::size_t i = frontier.front();
      frontier.pop();
      std::size_t x = i % nx, y = (i / nx) % ny, z = i / (nx * ny);
      auto visit = [&](std::size_t j) {
        if (m.data[j] && !seen[j]) {
          seen[j] = 1;
          frontier.push(j);
        }
      };
      if (x > 0) visit(i - 1);
      if (x + 1 < nx) visit(i + 1);
      if (y > 0) visit(i - nx);
      if (y + 1 < ny) visit(i + nx);
      if (z > 0) visit(i - nx * ny);
      if (z + 1 < nz) visit(i + nx * ny);
    }
  }
  return components;
}

}  // namespace

TEST_CASE("straight tube label matches the per-voxel geometric enumeration") {
  PhantomSpec spec;
  spec.dims = {16, 16, 16};
  spec.centerline = {{8.0, 2.0, 8.0}, {8.0, 13.0, 8.0}};
  spec.radii = {2.0, 2.0};
  auto [image, label] = make_airway_phantom(spec);

  std::size_t oracle_count = 0;
  for (std::size_t z = 0; z < 16; ++z)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) {
        bool inside = straight_tube_oracle(x, y, z, 8.0, 8.0, 2.0, 13.0, 2.0);
        oracle_count += inside;
        CAPTURE(x);
        CAPTURE(y);
        CAPTURE(z);
        CHECK(label.at(x, y, z) == (inside ? 1 : 0));
      }
  CHECK(label.foreground_count() == oracle_count);
  CHECK(oracle_count > 0);
}

TEST_CASE("noiseless phantom takes exactly two intensity values") {
  PhantomSpec spec;
  spec.dims = {12, 12, 12};
  spec.centerline = {{6.0, 1.0, 6.0}, {6.0, 10.0, 6.0}};
  spec.radii = {2.0, 3.0};
  spec.noise_sigma = 0.0;
  auto [image, label] = make_airway_phantom(spec);
  std::set<float> values(image.data.begin(), image.data.end());
  CHECK(values == std::set<float>{30.0f, 200.0f});
  // the label is the exact indicator of the air intensity
  for (std::size_t i = 0; i < image.data.size(); ++i)
    CHECK(label.data[i] == (image.data[i] == 30.0f ? 1 : 0));
}

TEST_CASE("same spec produces a bit-identical pair, noise included") {
  PhantomSpec spec;
  spec.dims = {10, 12, 8};
  spec.centerline = {{5.0, 1.0, 4.0}, {4.0, 6.0, 4.0}, {6.0, 10.0, 3.5}};
  spec.radii = {1.5, 2.5, 1.5};
  spec.noise_sigma = 0.02;
  spec.seed = 99;
  auto [img1, lbl1] = make_airway_phantom(spec);
  auto [img2, lbl2] = make_airway_phantom(spec);
  CHECK(img1.data == img2.data);
  CHECK(lbl1.data == lbl2.data);

  spec.seed = 100;
  auto [img3, lbl3] = make_airway_phantom(spec);
  CHECK(lbl3.data == lbl1.data);  // label never depends on noise
  CHECK(img3.data != img1.data);
}

TEST_CASE("lung-like label equals the analytic ellipsoid indicator") {
  LungPhantomSpec spec;
  spec.dims = {32, 24, 20};
  spec.lobes = {Ellipsoid{{9.0, 12.0, 10.0}, {5.0, 8.0, 6.0}},
                Ellipsoid{{23.0, 11.0, 9.5}, {6.0, 7.0, 5.5}}};
  auto [image, label] = make_lunglike_phantom(spec);

  for (std::size_t z = 0; z < 20; ++z)
    for (std::size_t y = 0; y < 24; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        bool inside = false;
        for (const Ellipsoid& e : spec.lobes) {
          double qx = (x - e.center[0]) / e.semi_axes[0];
          double qy = (y - e.center[1]) / e.semi_axes[1];
          double qz = (z - e.center[2]) / e.semi_axes[2];
          if (qx * qx + qy * qy + qz * qz <= 1.0) inside = true;
        }
        CHECK(label.at(x, y, z) == (inside ? 1 : 0));
      }
}

TEST_CASE("disjoint lobes form exactly two 6-connected components") {
  LungPhantomSpec spec;
  spec.dims = {40, 28, 24};
  spec.lobes = {Ellipsoid{{10.0, 14.0, 12.0}, {6.0, 9.0, 8.0}},
                Ellipsoid{{29.0, 14.0, 12.0}, {6.0, 9.0, 8.0}}};
  auto [image, label] = make_lunglike_phantom(spec);
  CHECK(count_components(label) == 2);
}

TEST_CASE("lung-like phantom is deterministic per seed") {
  LungPhantomSpec spec;
  spec.noise_sigma = 0.01;
  spec.seed = 7;
  auto a = make_lunglike_phantom(spec);
  auto b = make_lunglike_phantom(spec);
  CHECK(a.first.data == b.first.data);
  CHECK(a.second.data == b.second.data);
}

TEST_CASE("invalid phantom specs are rejected") {
  PhantomSpec spec;
  spec.dims = {8, 8, 8};
  spec.centerline = {{4.0, 1.0, 4.0}};
  spec.radii = {2.0};
  CHECK_THROWS_AS(make_airway_phantom(spec), std::invalid_argument);  // one point

  spec.centerline = {{4.0, 1.0, 4.0}, {4.0, 9.0, 4.0}};  // y = 9 outside 8^3
  spec.radii = {2.0, 2.0};
  CHECK_THROWS_AS(make_airway_phantom(spec), std::invalid_argument);

  spec.centerline[1] = {4.0, 6.0, 4.0};
  spec.radii[1] = 0.0;
  CHECK_THROWS_AS(make_airway_phantom(spec), std::invalid_argument);

  LungPhantomSpec lung;
  lung.dims = {16, 16, 16};
  lung.lobes[0] = {{3.0, 8.0, 8.0}, {5.0, 4.0, 4.0}};  // pokes out at x < 0
  CHECK_THROWS_AS(make_lunglike_phantom(lung), std::invalid_argument);
}

TEST_CASE("randomized specs build valid non-empty phantoms deterministically") {
  for (std::uint64_t seed : {0ull, 1ull, 42ull}) {
    PhantomSpec a = random_airway_spec({32, 32, 32}, seed);
    PhantomSpec b = random_airway_spec({32, 32, 32}, seed);
    CHECK(a.centerline == b.centerline);
    CHECK(a.radii == b.radii);
    auto [image, label] = make_airway_phantom(a);
    CHECK(label.foreground_count() > 0);
    CHECK(label.foreground_count() < label.data.size() / 2);

    LungPhantomSpec l = random_lunglike_spec({32, 32, 32}, seed);
    auto [limg, llbl] = make_lunglike_phantom(l);
    CHECK(llbl.foreground_count() > 0);
  }
  // different seeds draw different geometry
  PhantomSpec s0 = random_airway_spec({32, 32, 32}, 1);
  PhantomSpec s1 = random_airway_spec({32, 32, 32}, 2);
  CHECK(s0.centerline != s1.centerline);
}
