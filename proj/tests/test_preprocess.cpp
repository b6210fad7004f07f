#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vtseg/preprocess.hpp"
#include "vtseg/rng.hpp"
#include "vtseg/volume.hpp"

using namespace vtseg;

namespace {

Volume make_volume(std::array<std::size_t, 3> dims, std::vector<float> data) {
  Volume v;
  v.meta.dims = dims;
  v.data = std::move(data);
  return v;
}

Volume random_volume(std::array<std::size_t, 3> dims, std::uint64_t seed, double lo, double hi) {
  Volume v;
  v.meta.dims = dims;
  v.data.resize(v.meta.voxel_count());
  Rng rng(seed);
  for (float& x : v.data) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

double sum_of(const Volume& v) {
  double s = 0.0;
  for (float x : v.data) s += x;
  return s;
}

}  // namespace

TEST_CASE("clamp_rescale maps the window endpoints and midpoint as specified") {
  Volume v = make_volume({4, 1, 1}, {-1500.0f, 0.0f, 1000.0f, 2500.0f});
  Volume out = clamp_rescale(v, -1000.0, 1000.0);
  CHECK(out.data[0] == 0.0f);
  CHECK(out.data[1] == 127.5f);
  CHECK(out.data[2] == 255.0f);
  CHECK(out.data[3] == 255.0f);
}

TEST_CASE("clamp_rescale with (0, 255) is an exact identity on in-range data") {
  Volume v = random_volume({8, 8, 8}, 11, 0.0, 255.0);
  Volume once = clamp_rescale(v, 0.0, 255.0);
  CHECK(once.data == v.data);
  // and therefore idempotent
  CHECK(clamp_rescale(once, 0.0, 255.0).data == once.data);
}

TEST_CASE("clamp_rescale is monotone non-decreasing") {
  Volume v = random_volume({10, 10, 10}, 17, -2000.0, 2000.0);
  Volume out = clamp_rescale(v, -1000.0, 1000.0);
  for (std::size_t i = 0; i + 1 < v.data.size(); ++i) {
    if (v.data[i] <= v.data[i + 1])
      CHECK(out.data[i] <= out.data[i + 1]);
    else
      CHECK(out.data[i] >= out.data[i + 1]);
  }
  CHECK_THROWS_AS(clamp_rescale(v, 10.0, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(clamp_rescale(v, 10.0, -10.0), std::invalid_argument);
}

TEST_CASE("diffusion leaves a constant volume unchanged") {
  Volume v = make_volume({5, 4, 3}, std::vector<float>(60, 42.5f));
  Volume out = diffuse_gad(v, 10, 0.125, 1.0);
  CHECK(out.data == v.data);
}

TEST_CASE("one diffusion step on [0, 100, 0] matches the hand-executed update") {
  Volume v = make_volume({3, 1, 1}, {0.0f, 100.0f, 0.0f});
  Volume out = diffuse_gad(v, 1, 0.05, 10.0);
  // flux between cells = exp(-(g/K)^2) * g with g = 100, K = 10
  const double flux = std::exp(-(100.0 * 100.0) * (1.0 / (10.0 * 10.0))) * 100.0;
  CHECK(out.data[0] == static_cast<float>(0.0 + 0.05 * flux));
  CHECK(out.data[2] == static_cast<float>(0.0 + 0.05 * flux));
  CHECK(out.data[1] == static_cast<float>(100.0 + 0.05 * (-2.0 * flux)));
}

TEST_CASE("diffusion conserves the intensity sum and obeys the maximum principle") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Volume v = random_volume({12, 11, 9}, seed, -40.0, 300.0);
    Volume out = diffuse_gad(v, 4, 1.0 / 6.0, 25.0);
    const double before = sum_of(v);
    const double after = sum_of(out);
    CHECK(std::abs(after - before) <= 1e-6 * std::abs(before));
    const auto [lo, hi] = std::minmax_element(v.data.begin(), v.data.end());
    for (float x : out.data) {
      CHECK(x >= *lo);
      CHECK(x <= *hi);
    }
  }
}

TEST_CASE("diffusion rejects time steps beyond the stability bound") {
  Volume v = make_volume({4, 4, 4}, std::vector<float>(64, 1.0f));
  CHECK_THROWS_AS(diffuse_gad(v, 1, 0.2, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(diffuse_gad(v, 1, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(diffuse_gad(v, 1, -0.05, 1.0), std::invalid_argument);
  CHECK_NOTHROW(diffuse_gad(v, 1, 1.0 / 6.0, 1.0));
}

TEST_CASE("full-fraction crop is the identity") {
  Volume v = random_volume({6, 7, 3}, 3, 0.0, 255.0);
  Volume out = crop_fraction(v, 1.0);
  CHECK(out.meta.dims == v.meta.dims);
  CHECK(out.data == v.data);
  CHECK(out.meta.origin == v.meta.origin);
}

TEST_CASE("70 percent centered crop of (10,10,4) keeps a (7,7,4) window at offset (1,1,0)") {
  Volume v = random_volume({10, 10, 4}, 5, 0.0, 255.0);
  v.meta.spacing = {0.8, 1.25, 3.0};
  v.meta.origin = {5.0, -2.0, 1.0};
  Volume out = crop_fraction(v, 0.7, CropAnchor::centered);
  REQUIRE(out.meta.dims == std::array<std::size_t, 3>{7, 7, 4});
  for (std::size_t z = 0; z < 4; ++z)
    for (std::size_t y = 0; y < 7; ++y)
      for (std::size_t x = 0; x < 7; ++x)
        CHECK(out.at(x, y, z) == v.at(x + 1, y + 1, z));
  // world coordinates of retained voxels are unchanged
  CHECK(out.meta.world(0, 0, 0) == v.meta.world(1, 1, 0));
  CHECK(out.meta.world(6, 6, 3) == v.meta.world(7, 7, 3));

  Volume tl = crop_fraction(v, 0.7, CropAnchor::anterior_superior);
  CHECK(tl.meta.dims == std::array<std::size_t, 3>{7, 7, 4});
  CHECK(tl.at(0, 0, 0) == v.at(0, 0, 0));
  CHECK(tl.meta.origin == v.meta.origin);
}

TEST_CASE("crop applies identically to label maps and rejects bad fractions") {
  LabelMap m;
  m.meta.dims = {10, 10, 2};
  m.data.assign(200, 0);
  m.at(5, 5, 1) = 1;
  LabelMap out = crop_fraction(m, 0.7);
  CHECK(out.meta.dims == std::array<std::size_t, 3>{7, 7, 2});
  CHECK(out.at(4, 4, 1) == 1);
  CHECK(out.foreground_count() == 1);

  CHECK_THROWS_AS(crop_fraction(m, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(crop_fraction(m, 1.2), std::invalid_argument);
}

TEST_CASE("resample to identical dims is bit-identical") {
  Volume v = random_volume({9, 5, 7}, 23, -100.0, 400.0);
  v.meta.spacing = {0.7, 1.1, 2.9};
  v.meta.origin = {-3.0, 4.0, 0.5};
  Volume out = resample(v, v.meta.dims);
  CHECK(out.data == v.data);
  CHECK(out.meta.spacing == v.meta.spacing);
  CHECK(out.meta.origin == v.meta.origin);
}

TEST_CASE("resampling a constant volume stays constant") {
  Volume v = make_volume({8, 8, 8}, std::vector<float>(512, 7.25f));
  for (auto dims : {std::array<std::size_t, 3>{4, 4, 4}, {16, 16, 16}, {5, 9, 3}}) {
    Volume out = resample(v, dims);
    for (float x : out.data) CHECK(x == 7.25f);
  }
}

TEST_CASE("downsampling a linear ramp evaluates the closed-form interpolant") {
  Volume v = make_volume({8, 1, 1}, {0, 1, 2, 3, 4, 5, 6, 7});
  Volume out = resample(v, {4, 1, 1});
  // output center j sits at source coordinate 2j + 0.5; the ramp interpolates
  // to exactly that coordinate
  CHECK(out.data == std::vector<float>{0.5f, 2.5f, 4.5f, 6.5f});
  // physical extent is preserved: spacing doubles, origin shifts half a voxel
  CHECK(out.meta.spacing[0] == 2.0);
  CHECK(out.meta.origin[0] == 0.5);
}

TEST_CASE("label resampling is nearest-only and stays binary") {
  LabelMap m;
  m.meta.dims = {8, 8, 8};
  m.data.assign(512, 0);
  for (std::size_t z = 2; z < 6; ++z)
    for (std::size_t y = 2; y < 6; ++y)
      for (std::size_t x = 2; x < 6; ++x) m.at(x, y, z) = 1;
  LabelMap out = resample(m, {5, 5, 5});
  for (std::uint8_t b : out.data) CHECK((b == 0 || b == 1));
  CHECK(out.foreground_count() > 0);
  CHECK_THROWS_AS(resample(m, {5, 5, 5}, ResampleMode::trilinear), std::invalid_argument);
}

TEST_CASE("binarize uses a strict greater-than rule") {
  Volume v = make_volume({4, 1, 1}, {0.0f, 0.5f, 127.0f, 255.0f});
  LabelMap out = binarize(v, 127.0);
  CHECK(out.data == std::vector<std::uint8_t>{0, 0, 0, 1});
  LabelMap at_threshold = binarize(v, 0.5);
  CHECK(at_threshold.data == std::vector<std::uint8_t>{0, 0, 1, 1});
  LabelMap empty = binarize(make_volume({2, 2, 1}, {0, 0, 0, 0}), 0.5);
  CHECK(empty.foreground_count() == 0);
}

TEST_CASE("MRI chain maps the scanner geometry to the network geometry") {
  PreprocessConfig cfg;
  cfg.gad_iterations = 1;  // keep the test quick; dims flow is what matters here
  Volume v = random_volume({320, 290, 36}, 31, 0.0, 255.0);
  Volume out = preprocess_mri(v, cfg);
  CHECK(out.meta.dims == std::array<std::size_t, 3>{256, 256, 32});
}

TEST_CASE("CT chain output stays within the display window") {
  Volume v = random_volume({24, 20, 10}, 37, -3000.0, 4000.0);
  Volume out = preprocess_ct(v);
  CHECK(out.meta.dims == std::array<std::size_t, 3>{256, 256, 32});
  for (float x : out.data) {
    CHECK(x >= 0.0f);
    CHECK(x <= 255.0f);
  }
}
