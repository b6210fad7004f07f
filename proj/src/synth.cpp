#include "vtseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vtseg/rng.hpp"

namespace vtseg {
namespace {

bool inside_grid(const std::array<double, 3>& p, const std::array<std::size_t, 3>& dims) {
  for (int a = 0; a < 3; ++a)
    if (!(p[a] >= 0.0 && p[a] <= static_cast<double>(dims[a] - 1))) return false;
  return true;
}

// Squared distance from point v to the segment p0-p1, plus the radius
// interpolated at the closest segment parameter.
struct SegmentHit {
  double dist2;
  double radius;
};

SegmentHit closest_on_segment(const std::array<double, 3>& v, const std::array<double, 3>& p0,
                              const std::array<double, 3>& p1, double r0, double r1) {
  std::array<double, 3> d{p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]};
  double len2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
  double t = 0.0;
  if (len2 > 0.0) {
    t = ((v[0] - p0[0]) * d[0] + (v[1] - p0[1]) * d[1] + (v[2] - p0[2]) * d[2]) / len2;
    t = std::clamp(t, 0.0, 1.0);
  }
  std::array<double, 3> c{p0[0] + t * d[0], p0[1] + t * d[1], p0[2] + t * d[2]};
  double dx = v[0] - c[0], dy = v[1] - c[1], dz = v[2] - c[2];
  return {dx * dx + dy * dy + dz * dz, r0 + t * (r1 - r0)};
}

// Paints tissue/air intensities from the label and adds seeded Gaussian noise
// on the normalized [0,1] scale (result clamped back into [0,255]).
Volume paint(const LabelMap& label, double tissue, double air, double sigma,
             std::uint64_t seed) {
  Volume v;
  v.meta = label.meta;
  v.data.resize(label.data.size());
  for (std::size_t i = 0; i < label.data.size(); ++i)
    v.data[i] = static_cast<float>(label.data[i] ? air : tissue);
  if (sigma > 0.0) {
    Rng rng(seed);
    for (float& x : v.data) {
      double y = x / 255.0 + sigma * rng.next_gaussian();
      x = static_cast<float>(std::clamp(y, 0.0, 1.0) * 255.0);
    }
  }
  return v;
}

void check_intensities(double tissue, double air) {
  if (!(tissue >= 0.0 && tissue <= 255.0 && air >= 0.0 && air <= 255.0))
    throw std::invalid_argument("phantom intensities must lie in [0, 255]");
}

}  // namespace

void PhantomSpec::validate() const {
  VolumeMeta m;
  m.dims = dims;
  m.validate();
  if (centerline.size() < 2)
    throw std::invalid_argument("phantom centerline needs at least 2 control points");
  if (radii.size() != centerline.size())
    throw std::invalid_argument("phantom needs one radius per control point");
  for (const auto& p : centerline)
    if (!inside_grid(p, dims))
      throw std::invalid_argument("phantom centerline leaves the grid");
  for (double r : radii)
    if (!(r > 0.0)) throw std::invalid_argument("phantom radii must be positive");
  check_intensities(tissue_intensity, air_intensity);
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be non-negative");
}

void LungPhantomSpec::validate() const {
  VolumeMeta m;
  m.dims = dims;
  m.validate();
  for (const Ellipsoid& e : lobes) {
    for (int a = 0; a < 3; ++a) {
      if (!(e.semi_axes[a] > 0.0))
        throw std::invalid_argument("ellipsoid semi-axes must be positive");
      if (e.center[a] - e.semi_axes[a] < 0.0 ||
          e.center[a] + e.semi_axes[a] > static_cast<double>(dims[a] - 1))
        throw std::invalid_argument("ellipsoid extends outside the grid");
    }
  }
  check_intensities(tissue_intensity, air_intensity);
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be non-negative");
}

std::pair<Volume, LabelMap> make_airway_phantom(const PhantomSpec& spec) {
  spec.validate();
  LabelMap label;
  label.meta.dims = spec.dims;
  label.data.assign(label.meta.voxel_count(), 0);
  const std::size_t nseg = spec.centerline.size() - 1;
  for (std::size_t z = 0; z < spec.dims[2]; ++z)
    for (std::size_t y = 0; y < spec.dims[1]; ++y)
      for (std::size_t x = 0; x < spec.dims[0]; ++x) {
        std::array<double, 3> v{static_cast<double>(x), static_cast<double>(y),
                                static_cast<double>(z)};
        for (std::size_t s = 0; s < nseg; ++s) {
          SegmentHit hit = closest_on_segment(v, spec.centerline[s], spec.centerline[s + 1],
                                              spec.radii[s], spec.radii[s + 1]);
          if (hit.dist2 <= hit.radius * hit.radius) {
            label.at(x, y, z) = 1;
            break;
          }
        }
      }
  Volume image = paint(label, spec.tissue_intensity, spec.air_intensity, spec.noise_sigma,
                       spec.seed);
  return {std::move(image), std::move(label)};
}

std::pair<Volume, LabelMap> make_lunglike_phantom(const LungPhantomSpec& spec) {
  spec.validate();
  LabelMap label;
  label.meta.dims = spec.dims;
  label.data.assign(label.meta.voxel_count(), 0);
  for (std::size_t z = 0; z < spec.dims[2]; ++z)
    for (std::size_t y = 0; y < spec.dims[1]; ++y)
      for (std::size_t x = 0; x < spec.dims[0]; ++x) {
        std::array<double, 3> v{static_cast<double>(x), static_cast<double>(y),
                                static_cast<double>(z)};
        for (const Ellipsoid& e : spec.lobes) {
          double q = 0.0;
          for (int a = 0; a < 3; ++a) {
            double u = (v[a] - e.center[a]) / e.semi_axes[a];
            q += u * u;
          }
          if (q <= 1.0) {
            label.at(x, y, z) = 1;
            break;
          }
        }
      }
  Volume image = paint(label, spec.tissue_intensity, spec.air_intensity, spec.noise_sigma,
                       spec.seed);
  return {std::move(image), std::move(label)};
}

PhantomSpec random_airway_spec(const std::array<std::size_t, 3>& dims, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xA1));
  PhantomSpec spec;
  spec.dims = dims;
  spec.seed = derive_seed(seed, 0xA2);
  spec.noise_sigma = 0.0;
  const double nx = static_cast<double>(dims[0] - 1);
  const double ny = static_cast<double>(dims[1] - 1);
  const double nz = static_cast<double>(dims[2] - 1);
  // A tube running the full axis-1 extent of the grid, bending within the
  // slice plane (axes 0, 1) with a slight cross-slice wobble.
  const int npts = 4;
  const double rmax = 0.12 * std::min(nx, ny);
  for (int k = 0; k < npts; ++k) {
    double t = static_cast<double>(k) / (npts - 1);
    std::array<double, 3> p;
    p[0] = nx * (0.35 + 0.3 * rng.next_double());
    p[1] = ny * (0.08 + 0.84 * t);
    p[2] = nz * (0.42 + 0.16 * rng.next_double());
    spec.centerline.push_back(p);
    spec.radii.push_back(rmax * (0.55 + 0.45 * rng.next_double()));
  }
  return spec;
}

LungPhantomSpec random_lunglike_spec(const std::array<std::size_t, 3>& dims, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xB1));
  LungPhantomSpec spec;
  spec.dims = dims;
  spec.seed = derive_seed(seed, 0xB2);
  spec.noise_sigma = 0.0;
  const double nx = static_cast<double>(dims[0] - 1);
  const double ny = static_cast<double>(dims[1] - 1);
  const double nz = static_cast<double>(dims[2] - 1);
  for (int side = 0; side < 2; ++side) {
    Ellipsoid& e = spec.lobes[side];
    double cx = side == 0 ? 0.30 : 0.70;
    e.center = {nx * (cx + 0.04 * (rng.next_double() - 0.5)),
                ny * (0.5 + 0.1 * (rng.next_double() - 0.5)),
                nz * (0.5 + 0.1 * (rng.next_double() - 0.5))};
    e.semi_axes = {nx * (0.13 + 0.04 * rng.next_double()),
                   ny * (0.22 + 0.08 * rng.next_double()),
                   nz * (0.20 + 0.08 * rng.next_double())};
    // keep the lobe strictly inside the grid
    for (int a = 0; a < 3; ++a) {
      double lo = e.center[a] - e.semi_axes[a];
      double hi = e.center[a] + e.semi_axes[a];
      double n = (a == 0 ? nx : a == 1 ? ny : nz);
      if (lo < 0.0) e.center[a] -= lo;
      if (hi > n) e.center[a] -= hi - n;
    }
  }
  return spec;
}

}  // namespace vtseg
