#include "vtseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "vtseg/rng.hpp"

namespace vtseg {
namespace {

int storage_axis(FlipAxis axis) {
  switch (axis) {
    case FlipAxis::anterior_posterior: return 0;
    case FlipAxis::superior_inferior: return 1;
    case FlipAxis::left_right: return 2;
  }
  throw std::invalid_argument("unknown flip axis");
}

template <typename Image>
Image flip_impl(const Image& in, FlipAxis axis) {
  in.validate();
  const int a = storage_axis(axis);
  Image out;
  out.meta = in.meta;
  out.data.resize(in.data.size());
  const auto [nx, ny, nz] = in.meta.dims;
  for (std::size_t z = 0; z < nz; ++z)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        std::size_t sx = a == 0 ? nx - 1 - x : x;
        std::size_t sy = a == 1 ? ny - 1 - y : y;
        std::size_t sz = a == 2 ? nz - 1 - z : z;
        out.at(x, y, z) = in.at(sx, sy, sz);
      }
  return out;
}

}  // namespace

void SamplePair::validate() const {
  image.validate();
  label.validate();
  assert_compatible(image.meta, label.meta);
}

void AugmentSpec::validate() const {
  if (!(noise_sigma_max >= 0.0))
    throw std::invalid_argument("noise_sigma_max must be non-negative");
  if (!(rotation_range_deg >= 0.0 && rotation_range_deg <= 45.0))
    throw std::invalid_argument("rotation_range_deg must lie in [0, 45]");
}

Volume add_noise(const Volume& v, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be non-negative");
  v.validate();
  Volume out = v;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (float& x : out.data) {
    double y = x / 255.0 + sigma * rng.next_gaussian();
    x = static_cast<float>(std::clamp(y, 0.0, 1.0) * 255.0);
  }
  return out;
}

Volume mirror_flip(const Volume& v, FlipAxis axis) { return flip_impl(v, axis); }
LabelMap mirror_flip(const LabelMap& m, FlipAxis axis) { return flip_impl(m, axis); }

SamplePair mirror_flip(const SamplePair& pair, FlipAxis axis) {
  return {pair.id, mirror_flip(pair.image, axis), mirror_flip(pair.label, axis)};
}

SamplePair rotate_pair(const SamplePair& pair, double angle_deg, float fill) {
  if (!(std::abs(angle_deg) <= 45.0))
    throw std::invalid_argument("rotation angle must satisfy |angle| <= 45 degrees");
  pair.validate();
  const auto [nx, ny, nz] = pair.image.meta.dims;
  const double theta = angle_deg * std::numbers::pi / 180.0;
  // output voxel -> source voxel uses the inverse rotation
  const double c = std::cos(theta), s = std::sin(theta);
  const double cx = 0.5 * static_cast<double>(nx - 1);
  const double cy = 0.5 * static_cast<double>(ny - 1);

  SamplePair out;
  out.id = pair.id;
  out.image.meta = pair.image.meta;
  out.image.data.resize(pair.image.data.size());
  out.label.meta = pair.label.meta;
  out.label.data.resize(pair.label.data.size());

  for (std::size_t z = 0; z < nz; ++z)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        const double dx = static_cast<double>(x) - cx;
        const double dy = static_cast<double>(y) - cy;
        const double sx = cx + c * dx + s * dy;
        const double sy = cy - s * dx + c * dy;

        float value = fill;
        std::uint8_t lab = 0;
        const bool in_field = sx >= 0.0 && sx <= static_cast<double>(nx - 1) &&
                              sy >= 0.0 && sy <= static_cast<double>(ny - 1);
        if (in_field) {
          const std::size_t x0 = static_cast<std::size_t>(sx);
          const std::size_t y0 = static_cast<std::size_t>(sy);
          const std::size_t x1 = std::min(x0 + 1, nx - 1);
          const std::size_t y1 = std::min(y0 + 1, ny - 1);
          const double wx = sx - static_cast<double>(x0);
          const double wy = sy - static_cast<double>(y0);
          const double v0 = pair.image.at(x0, y0, z) * (1.0 - wx) + pair.image.at(x1, y0, z) * wx;
          const double v1 = pair.image.at(x0, y1, z) * (1.0 - wx) + pair.image.at(x1, y1, z) * wx;
          value = static_cast<float>(v0 * (1.0 - wy) + v1 * wy);
          lab = pair.label.at(static_cast<std::size_t>(std::lround(sx)),
                              static_cast<std::size_t>(std::lround(sy)), z);
        }
        out.image.at(x, y, z) = value;
        out.label.at(x, y, z) = lab;
      }
  return out;
}

std::vector<SamplePair> augment_dataset(const std::vector<SamplePair>& pairs,
                                        const AugmentSpec& spec,
                                        std::vector<AugmentRecord>* records) {
  if (pairs.empty()) throw std::invalid_argument("augment_dataset needs a non-empty input");
  spec.validate();

  std::vector<SamplePair> out;
  out.reserve(pairs.size() * 4);
  auto note = [&](const std::string& id, const char* kind, double sigma, double angle) {
    if (records) records->push_back({id, kind, sigma, angle, spec.flip_axis});
  };

  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const SamplePair& p = pairs[k];
    p.validate();

    Rng params(derive_seed(spec.seed, k, 0));
    const double sigma = params.uniform(0.0, spec.noise_sigma_max);
    const double angle = params.uniform(-spec.rotation_range_deg, spec.rotation_range_deg);
    const std::uint64_t noise_seed = derive_seed(spec.seed, k, 1);

    out.push_back(p);
    note(p.id, "original", 0.0, 0.0);

    out.push_back({p.id + "_noise", add_noise(p.image, sigma, noise_seed), p.label});
    note(p.id + "_noise", "noise", sigma, 0.0);

    if (spec.flip_enabled) {
      SamplePair f = mirror_flip(p, spec.flip_axis);
      f.id = p.id + "_flip";
      out.push_back(std::move(f));
      note(p.id + "_flip", "flip", 0.0, 0.0);
    }

    SamplePair r = rotate_pair(p, angle);
    r.id = p.id + "_rot";
    out.push_back(std::move(r));
    note(p.id + "_rot", "rotate", 0.0, angle);
  }
  return out;
}

}  // namespace vtseg
