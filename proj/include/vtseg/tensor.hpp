#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "vtseg/volume.hpp"

namespace vtseg {

// Dense n-dimensional array of doubles, rank 1..5, C order (last axis
// fastest). Network activations use (batch, channel, spatial...) with the
// spatial axes ordered slowest-to-fastest, so a (1, 1, nz, ny, nx) tensor has
// exactly the same linearization as a Volume (whose axis 0 is fastest).
//
// All network math is done in double so analytic gradients can be verified
// against central finite differences to tight tolerances; Volume / LabelMap
// remain the single-precision storage types at the API boundary.
struct TensorND {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  TensorND() = default;
  explicit TensorND(std::vector<std::size_t> s)
      : shape(std::move(s)), data(product(shape), 0.0) {}
  TensorND(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {}

  static std::size_t product(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }
  static TensorND zeros(std::vector<std::size_t> s) { return TensorND(std::move(s)); }

  std::size_t rank() const { return shape.size(); }
  std::size_t size() const { return data.size(); }
  bool same_shape(const TensorND& o) const { return shape == o.shape; }

  double& operator[](std::size_t i) { return data[i]; }
  const double& operator[](std::size_t i) const { return data[i]; }

  // Throws std::invalid_argument on rank outside 1..5, a zero axis, a data
  // length that disagrees with the shape, or any non-finite value.
  void validate() const;
};

// Converts between the float volume types and double tensors. The tensor
// carries a leading batch and channel axis of 1 and reverses the axis order
// ((nz, ny, nx) vs the volume's (nx, ny, nz) dims) so that the flat data
// layout is shared; no shuffling happens, only a cast.
TensorND tensor_from_volume(const Volume& v, double scale = 1.0);
TensorND tensor_from_label(const LabelMap& m);
// One sagittal slice (fixed axis-2 coordinate) as a (1, 1, ny, nx) tensor.
TensorND tensor_from_slice(const Volume& v, std::size_t z, double scale = 1.0);

}  // namespace vtseg
