#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace vtseg {

// Voxel data is linearized with axis 0 fastest:
//
//   index(x, y, z) = x + nx * (y + ny * z)
//
// Axis 2 is the slice axis (the stack direction of the acquisition);
// in-plane operations (crop, rotation) act on axes 0 and 1.
// All physical metadata is in millimeters. The origin is the world
// position of the center of voxel (0, 0, 0).
struct VolumeMeta {
  std::array<std::size_t, 3> dims{1, 1, 1};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  std::array<std::string, 3> axis_labels{"sagittal", "coronal", "axial"};
  // Unrecognized NRRD header lines, preserved verbatim so files written by
  // annotation tools survive a read/write cycle.
  std::vector<std::string> extra_header;

  std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + dims[0] * (y + dims[1] * z);
  }
  // World coordinate of a voxel center.
  std::array<double, 3> world(std::size_t x, std::size_t y, std::size_t z) const {
    return {origin[0] + static_cast<double>(x) * spacing[0],
            origin[1] + static_cast<double>(y) * spacing[1],
            origin[2] + static_cast<double>(z) * spacing[2]};
  }

  // Throws std::invalid_argument if any dim is 0 or any spacing component
  // is non-positive or non-finite.
  void validate() const;
};

bool same_geometry(const VolumeMeta& a, const VolumeMeta& b, double rel_tol = 1e-6);

// Succeeds iff dims are equal and spacing agrees within `rel_tol` relative
// tolerance; throws std::invalid_argument naming the first offending axis
// (1-based) otherwise.
void assert_compatible(const VolumeMeta& a, const VolumeMeta& b, double rel_tol = 1e-6);

// Dense scalar field. Values must be finite.
struct Volume {
  VolumeMeta meta;
  std::vector<float> data;

  Volume() = default;
  Volume(VolumeMeta m, std::vector<float> d);

  float at(std::size_t x, std::size_t y, std::size_t z) const {
    return data[meta.index(x, y, z)];
  }
  float& at(std::size_t x, std::size_t y, std::size_t z) {
    return data[meta.index(x, y, z)];
  }
  void validate() const;
};

// Dense binary field; every voxel is exactly 0 or 1.
struct LabelMap {
  VolumeMeta meta;
  std::vector<std::uint8_t> data;

  LabelMap() = default;
  LabelMap(VolumeMeta m, std::vector<std::uint8_t> d);

  std::uint8_t at(std::size_t x, std::size_t y, std::size_t z) const {
    return data[meta.index(x, y, z)];
  }
  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t z) {
    return data[meta.index(x, y, z)];
  }
  std::size_t foreground_count() const;
  void validate() const;
};

// Ordered set of manual segmentations of one volume, one per rater.
struct RaterStack {
  std::string volume_id;
  std::vector<LabelMap> raters;

  // Requires >= 2 raters, all with identical geometry.
  void validate() const;
};

}  // namespace vtseg
