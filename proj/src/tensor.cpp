#include "vtseg/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace vtseg {

void TensorND::validate() const {
  if (shape.empty() || shape.size() > 5) {
    throw std::invalid_argument("tensor rank must be between 1 and 5, got " +
                                std::to_string(shape.size()));
  }
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor axis of size 0");
  }
  if (data.size() != product(shape)) {
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape product " +
                                std::to_string(product(shape)));
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw std::invalid_argument("tensor holds a non-finite value");
  }
}

TensorND tensor_from_volume(const Volume& v, double scale) {
  v.validate();
  const auto& d = v.meta.dims;
  TensorND t({1, 1, d[2], d[1], d[0]});
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    t.data[i] = static_cast<double>(v.data[i]) * scale;
  }
  return t;
}

TensorND tensor_from_label(const LabelMap& m) {
  m.validate();
  const auto& d = m.meta.dims;
  TensorND t({1, 1, d[2], d[1], d[0]});
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    t.data[i] = static_cast<double>(m.data[i]);
  }
  return t;
}

TensorND tensor_from_slice(const Volume& v, std::size_t z, double scale) {
  v.validate();
  const auto& d = v.meta.dims;
  if (z >= d[2]) {
    throw std::invalid_argument("slice index " + std::to_string(z) +
                                " out of range for " + std::to_string(d[2]) + " slices");
  }
  TensorND t({1, 1, d[1], d[0]});
  const std::size_t plane = d[0] * d[1];
  for (std::size_t i = 0; i < plane; ++i) {
    t.data[i] = static_cast<double>(v.data[z * plane + i]) * scale;
  }
  return t;
}

}  // namespace vtseg
