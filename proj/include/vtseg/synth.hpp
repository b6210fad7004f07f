#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "vtseg/volume.hpp"

namespace vtseg {

// Curved-tube phantom: a piecewise-linear centerline with a per-control-point
// radius profile, carved as an air-filled tube through uniform tissue. The
// label is the exact noiseless tube indicator, so every phantom ships with
// perfect ground truth.
struct PhantomSpec {
  std::array<std::size_t, 3> dims{48, 48, 48};
  // Control points in voxel coordinates; at least two, all inside the grid.
  std::vector<std::array<double, 3>> centerline;
  // One radius (in voxels) per control point, interpolated linearly along
  // each segment.
  std::vector<double> radii;
  double tissue_intensity = 200.0;  // background, 0-255 scale
  double air_intensity = 30.0;      // inside the tube, 0-255 scale
  double noise_sigma = 0.0;         // on the normalized [0,1] scale
  std::uint64_t seed = 0;

  void validate() const;
};

// Two ellipsoidal air pockets in a tissue background; the label is the exact
// analytic ellipsoid indicator.
struct Ellipsoid {
  std::array<double, 3> center;     // voxel coordinates
  std::array<double, 3> semi_axes;  // voxels, all > 0
};

struct LungPhantomSpec {
  std::array<std::size_t, 3> dims{48, 48, 48};
  std::array<Ellipsoid, 2> lobes{Ellipsoid{{16, 24, 24}, {9, 12, 10}},
                                 Ellipsoid{{34, 24, 24}, {9, 12, 10}}};
  double tissue_intensity = 200.0;
  double air_intensity = 30.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// A voxel is foreground iff its distance to some centerline segment is within
// the radius interpolated at the closest point of that segment.
std::pair<Volume, LabelMap> make_airway_phantom(const PhantomSpec& spec);

// A voxel is foreground iff it satisfies either lobe's ellipsoid inequality
// sum(((v - c) / a)^2) <= 1.
std::pair<Volume, LabelMap> make_lunglike_phantom(const LungPhantomSpec& spec);

// Deterministic randomized specs, for generating small datasets: a gently
// curved tube (resp. two separated lobes) whose geometry is drawn from the
// seed. Same (dims, seed) always yields the same spec.
PhantomSpec random_airway_spec(const std::array<std::size_t, 3>& dims, std::uint64_t seed);
LungPhantomSpec random_lunglike_spec(const std::array<std::size_t, 3>& dims, std::uint64_t seed);

}  // namespace vtseg
