#include "vtseg/volume.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vtseg {

void VolumeMeta::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1)
      throw std::invalid_argument("VolumeMeta: dim must be >= 1 on axis " +
                                  std::to_string(a + 1));
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
      throw std::invalid_argument("VolumeMeta: spacing must be positive and finite on axis " +
                                  std::to_string(a + 1));
    if (!std::isfinite(origin[a]))
      throw std::invalid_argument("VolumeMeta: origin must be finite on axis " +
                                  std::to_string(a + 1));
  }
}

bool same_geometry(const VolumeMeta& a, const VolumeMeta& b, double rel_tol) {
  for (int ax = 0; ax < 3; ++ax) {
    if (a.dims[ax] != b.dims[ax]) return false;
    const double scale = std::max(std::abs(a.spacing[ax]), std::abs(b.spacing[ax]));
    if (std::abs(a.spacing[ax] - b.spacing[ax]) > rel_tol * scale) return false;
  }
  return true;
}

void assert_compatible(const VolumeMeta& a, const VolumeMeta& b, double rel_tol) {
  for (int ax = 0; ax < 3; ++ax) {
    if (a.dims[ax] != b.dims[ax])
      throw std::invalid_argument(
          "incompatible volumes: dimension mismatch on axis " + std::to_string(ax + 1) +
          " (" + std::to_string(a.dims[ax]) + " vs " + std::to_string(b.dims[ax]) + ")");
  }
  for (int ax = 0; ax < 3; ++ax) {
    const double scale = std::max(std::abs(a.spacing[ax]), std::abs(b.spacing[ax]));
    if (std::abs(a.spacing[ax] - b.spacing[ax]) > rel_tol * scale)
      throw std::invalid_argument(
          "incompatible volumes: spacing mismatch on axis " + std::to_string(ax + 1) +
          " (" + std::to_string(a.spacing[ax]) + " vs " + std::to_string(b.spacing[ax]) + ")");
  }
}

Volume::Volume(VolumeMeta m, std::vector<float> d) : meta(std::move(m)), data(std::move(d)) {
  validate();
}

void Volume::validate() const {
  meta.validate();
  if (data.size() != meta.voxel_count())
    throw std::invalid_argument("Volume: data length " + std::to_string(data.size()) +
                                " does not match dims product " +
                                std::to_string(meta.voxel_count()));
  for (float v : data)
    if (!std::isfinite(v)) throw std::invalid_argument("Volume: non-finite voxel value");
}

LabelMap::LabelMap(VolumeMeta m, std::vector<std::uint8_t> d)
    : meta(std::move(m)), data(std::move(d)) {
  validate();
}

void LabelMap::validate() const {
  meta.validate();
  if (data.size() != meta.voxel_count())
    throw std::invalid_argument("LabelMap: data length " + std::to_string(data.size()) +
                                " does not match dims product " +
                                std::to_string(meta.voxel_count()));
  for (std::uint8_t v : data)
    if (v > 1)
      throw std::invalid_argument("LabelMap: voxel value " + std::to_string(int(v)) +
                                  " outside {0,1}");
}

std::size_t LabelMap::foreground_count() const {
  std::size_t n = 0;
  for (std::uint8_t v : data) n += v;
  return n;
}

void RaterStack::validate() const {
  if (raters.size() < 2)
    throw std::invalid_argument("RaterStack: need at least 2 raters, got " +
                                std::to_string(raters.size()));
  for (std::size_t j = 1; j < raters.size(); ++j)
    assert_compatible(raters[0].meta, raters[j].meta);
}

}  // namespace vtseg
