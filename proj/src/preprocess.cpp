#include "vtseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace vtseg {
namespace {

// One crop/resample axis plan shared by Volume and LabelMap overloads.
struct CropPlan {
  std::array<std::size_t, 3> start;
  std::array<std::size_t, 3> kept;
};

CropPlan plan_crop(const VolumeMeta& meta, double fraction, CropAnchor anchor) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("crop fraction must lie in (0, 1], got " +
                                std::to_string(fraction));
  CropPlan plan{{0, 0, 0}, meta.dims};
  for (int a = 0; a < 2; ++a) {  // in-plane axes only; axis 2 is the slice axis
    std::size_t n = meta.dims[a];
    std::size_t k = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(n)));
    k = std::clamp<std::size_t>(k, 1, n);
    plan.kept[a] = k;
    plan.start[a] = anchor == CropAnchor::centered ? (n - k) / 2 : 0;
  }
  return plan;
}

template <typename Image>
Image crop_impl(const Image& in, double fraction, CropAnchor anchor) {
  in.validate();
  CropPlan plan = plan_crop(in.meta, fraction, anchor);
  Image out;
  out.meta = in.meta;
  out.meta.dims = plan.kept;
  for (int a = 0; a < 3; ++a)
    out.meta.origin[a] =
        in.meta.origin[a] + static_cast<double>(plan.start[a]) * in.meta.spacing[a];
  out.data.resize(out.meta.voxel_count());
  for (std::size_t z = 0; z < plan.kept[2]; ++z)
    for (std::size_t y = 0; y < plan.kept[1]; ++y)
      for (std::size_t x = 0; x < plan.kept[0]; ++x)
        out.at(x, y, z) = in.at(x + plan.start[0], y + plan.start[1], z + plan.start[2]);
  return out;
}

struct ResamplePlan {
  VolumeMeta meta;          // output meta
  std::array<double, 3> ratio;  // n_src / n_tgt per axis
};

ResamplePlan plan_resample(const VolumeMeta& in, const std::array<std::size_t, 3>& target) {
  for (std::size_t n : target)
    if (n < 1) throw std::invalid_argument("resample target dims must be >= 1");
  ResamplePlan plan;
  plan.meta = in;
  plan.meta.dims = target;
  for (int a = 0; a < 3; ++a) {
    plan.ratio[a] = static_cast<double>(in.dims[a]) / static_cast<double>(target[a]);
    double new_spacing = in.spacing[a] * plan.ratio[a];
    plan.meta.spacing[a] = new_spacing;
    plan.meta.origin[a] = in.origin[a] + 0.5 * (new_spacing - in.spacing[a]);
  }
  return plan;
}

// Source coordinate of output voxel center j along one axis.
inline double source_coord(std::size_t j, double ratio) {
  return (static_cast<double>(j) + 0.5) * ratio - 0.5;
}

}  // namespace

void PreprocessConfig::validate() const {
  if (!(clamp_lo < clamp_hi))
    throw std::invalid_argument("clamp_lo must be strictly below clamp_hi");
  if (gad_iterations < 0) throw std::invalid_argument("gad_iterations must be >= 0");
  if (!(gad_time_step > 0.0)) throw std::invalid_argument("gad_time_step must be positive");
  if (!(gad_conductance > 0.0)) throw std::invalid_argument("gad_conductance must be positive");
  if (!(crop_fraction > 0.0 && crop_fraction <= 1.0))
    throw std::invalid_argument("crop_fraction must lie in (0, 1]");
  for (std::size_t n : target_dims)
    if (n < 1) throw std::invalid_argument("target_dims components must be >= 1");
}

Volume clamp_rescale(const Volume& v, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("clamp_rescale requires lo < hi");
  v.validate();
  Volume out;
  out.meta = v.meta;
  out.data.resize(v.data.size());
  const double scale = 255.0 / (hi - lo);
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    double x = std::clamp(static_cast<double>(v.data[i]), lo, hi);
    out.data[i] = static_cast<float>((x - lo) * scale);
  }
  return out;
}

Volume diffuse_gad(const Volume& v, int iterations, double time_step, double conductance) {
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  if (!(time_step > 0.0) || time_step > 1.0 / 6.0)
    throw std::invalid_argument("time step " + std::to_string(time_step) +
                                " violates the 3D stability bound (0, 1/6]");
  if (!(conductance > 0.0)) throw std::invalid_argument("conductance must be positive");
  v.validate();

  const auto [nx, ny, nz] = v.meta.dims;
  const std::size_t n = v.data.size();
  // Double-precision state across iterations; a single final cast back to
  // float keeps both the conservation and max-principle checks tight.
  std::vector<double> cur(v.data.begin(), v.data.end());
  std::vector<double> delta(n);
  const double inv_k2 = 1.0 / (conductance * conductance);
  const std::size_t stride[3] = {1, nx, nx * ny};

  for (int it = 0; it < iterations; ++it) {
    std::fill(delta.begin(), delta.end(), 0.0);
    for (int axis = 0; axis < 3; ++axis) {
      const std::size_t s = stride[axis];
      const std::size_t limit[3] = {axis == 0 ? nx - 1 : nx, axis == 1 ? ny - 1 : ny,
                                    axis == 2 ? nz - 1 : nz};
      for (std::size_t z = 0; z < limit[2]; ++z)
        for (std::size_t y = 0; y < limit[1]; ++y)
          for (std::size_t x = 0; x < limit[0]; ++x) {
            std::size_t i = x + nx * (y + ny * z);
            double g = cur[i + s] - cur[i];
            double flux = std::exp(-(g * g) * inv_k2) * g;
            // antisymmetric pair update: whatever one voxel gains, its
            // neighbor loses, so the global sum is conserved exactly
            delta[i] += flux;
            delta[i + s] -= flux;
          }
    }
    for (std::size_t i = 0; i < n; ++i) cur[i] += time_step * delta[i];
  }

  Volume out;
  out.meta = v.meta;
  out.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.data[i] = static_cast<float>(cur[i]);
  return out;
}

Volume crop_fraction(const Volume& v, double fraction, CropAnchor anchor) {
  return crop_impl(v, fraction, anchor);
}

LabelMap crop_fraction(const LabelMap& m, double fraction, CropAnchor anchor) {
  return crop_impl(m, fraction, anchor);
}

Volume resample(const Volume& v, const std::array<std::size_t, 3>& target_dims,
                ResampleMode mode) {
  v.validate();
  ResamplePlan plan = plan_resample(v.meta, target_dims);
  Volume out;
  out.meta = plan.meta;
  out.data.resize(out.meta.voxel_count());
  const auto [nx, ny, nz] = v.meta.dims;

  auto clamp_idx = [](long i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(n) - 1));
  };

  for (std::size_t z = 0; z < target_dims[2]; ++z)
    for (std::size_t y = 0; y < target_dims[1]; ++y)
      for (std::size_t x = 0; x < target_dims[0]; ++x) {
        double sx = source_coord(x, plan.ratio[0]);
        double sy = source_coord(y, plan.ratio[1]);
        double sz = source_coord(z, plan.ratio[2]);
        if (mode == ResampleMode::nearest) {
          out.at(x, y, z) = v.at(clamp_idx(std::lround(sx), nx), clamp_idx(std::lround(sy), ny),
                                 clamp_idx(std::lround(sz), nz));
          continue;
        }
        double fx = std::floor(sx), fy = std::floor(sy), fz = std::floor(sz);
        double wx = sx - fx, wy = sy - fy, wz = sz - fz;
        std::size_t x0 = clamp_idx(static_cast<long>(fx), nx), x1 = clamp_idx(static_cast<long>(fx) + 1, nx);
        std::size_t y0 = clamp_idx(static_cast<long>(fy), ny), y1 = clamp_idx(static_cast<long>(fy) + 1, ny);
        std::size_t z0 = clamp_idx(static_cast<long>(fz), nz), z1 = clamp_idx(static_cast<long>(fz) + 1, nz);
        double c00 = v.at(x0, y0, z0) * (1.0 - wx) + v.at(x1, y0, z0) * wx;
        double c10 = v.at(x0, y1, z0) * (1.0 - wx) + v.at(x1, y1, z0) * wx;
        double c01 = v.at(x0, y0, z1) * (1.0 - wx) + v.at(x1, y0, z1) * wx;
        double c11 = v.at(x0, y1, z1) * (1.0 - wx) + v.at(x1, y1, z1) * wx;
        double c0 = c00 * (1.0 - wy) + c10 * wy;
        double c1 = c01 * (1.0 - wy) + c11 * wy;
        out.at(x, y, z) = static_cast<float>(c0 * (1.0 - wz) + c1 * wz);
      }
  return out;
}

LabelMap resample(const LabelMap& m, const std::array<std::size_t, 3>& target_dims,
                  ResampleMode mode) {
  if (mode != ResampleMode::nearest)
    throw std::invalid_argument("label maps must be resampled with nearest mode");
  m.validate();
  ResamplePlan plan = plan_resample(m.meta, target_dims);
  LabelMap out;
  out.meta = plan.meta;
  out.data.resize(out.meta.voxel_count());
  const auto [nx, ny, nz] = m.meta.dims;
  auto clamp_idx = [](long i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(n) - 1));
  };
  for (std::size_t z = 0; z < target_dims[2]; ++z)
    for (std::size_t y = 0; y < target_dims[1]; ++y)
      for (std::size_t x = 0; x < target_dims[0]; ++x)
        out.at(x, y, z) = m.at(clamp_idx(std::lround(source_coord(x, plan.ratio[0])), nx),
                               clamp_idx(std::lround(source_coord(y, plan.ratio[1])), ny),
                               clamp_idx(std::lround(source_coord(z, plan.ratio[2])), nz));
  return out;
}

LabelMap binarize(const Volume& v, double threshold) {
  v.validate();
  LabelMap out;
  out.meta = v.meta;
  out.data.resize(v.data.size());
  for (std::size_t i = 0; i < v.data.size(); ++i)
    out.data[i] = v.data[i] > threshold ? 1 : 0;
  return out;
}

Volume preprocess_ct(const Volume& v, const PreprocessConfig& cfg) {
  cfg.validate();
  return resample(clamp_rescale(v, cfg.clamp_lo, cfg.clamp_hi), cfg.target_dims);
}

Volume preprocess_mri(const Volume& v, const PreprocessConfig& cfg) {
  cfg.validate();
  Volume s = diffuse_gad(v, cfg.gad_iterations, cfg.gad_time_step, cfg.gad_conductance);
  s = clamp_rescale(s, 0.0, 255.0);
  s = crop_fraction(s, cfg.crop_fraction, cfg.crop_anchor);
  return resample(s, cfg.target_dims);
}

}  // namespace vtseg
