#include "vtseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

namespace vtseg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower-envelope pass over one line of parabolas: out[q] = min_p f[p] +
// (pos[q] - pos[p])^2, considering only finite f[p]. Standard separable
// squared-distance-transform building block.
void envelope_pass(const std::vector<double>& f, const std::vector<double>& pos, std::size_t n,
                   std::vector<double>& out, std::vector<std::size_t>& site,
                   std::vector<double>& cross) {
  std::ptrdiff_t k = -1;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    double s = 0.0;
    while (k >= 0) {
      const std::size_t p = site[static_cast<std::size_t>(k)];
      s = ((f[q] + pos[q] * pos[q]) - (f[p] + pos[p] * pos[p])) /
          (2.0 * (pos[q] - pos[p]));
      if (s <= cross[static_cast<std::size_t>(k)])
        --k;  // the new parabola hides the current envelope segment
      else
        break;
    }
    ++k;
    site[static_cast<std::size_t>(k)] = q;
    cross[static_cast<std::size_t>(k)] = (k == 0) ? -kInf : s;
    cross[static_cast<std::size_t>(k) + 1] = kInf;
  }
  if (k < 0) {  // no finite site on this line
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), kInf);
    return;
  }
  std::size_t j = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (j < static_cast<std::size_t>(k) && cross[j + 1] < pos[q]) ++j;
    const double d = pos[q] - pos[site[j]];
    out[q] = f[site[j]] + d * d;
  }
}

// Squared Euclidean distance to the nearest seed, over the whole grid.
// Axis passes run x, then y, then z; per-axis squared terms accumulate in
// that order, which the naive Hausdorff path mirrors exactly.
std::vector<double> edt_squared(const VolumeMeta& meta,
                                const std::vector<std::array<std::size_t, 3>>& seeds,
                                const std::array<double, 3>& spacing) {
  const auto [nx, ny, nz] = meta.dims;
  std::vector<double> field(meta.voxel_count(), kInf);
  for (const auto& s : seeds) field[meta.index(s[0], s[1], s[2])] = 0.0;

  const std::size_t max_n = std::max({nx, ny, nz});
  std::vector<double> line(max_n), out(max_n), pos(max_n), cross(max_n + 1);
  std::vector<std::size_t> site(max_n);

  const std::size_t stride[3] = {1, nx, nx * ny};
  const std::size_t len[3] = {nx, ny, nz};
  for (int axis = 0; axis < 3; ++axis) {
    const std::size_t n = len[axis];
    for (std::size_t i = 0; i < n; ++i) pos[i] = static_cast<double>(i) * spacing[axis];
    const std::size_t n_u = len[(axis + 1) % 3];
    const std::size_t n_v = len[(axis + 2) % 3];
    const std::size_t stride_u = stride[(axis + 1) % 3];
    const std::size_t stride_v = stride[(axis + 2) % 3];
    for (std::size_t v = 0; v < n_v; ++v)
      for (std::size_t u = 0; u < n_u; ++u) {
        const std::size_t base = u * stride_u + v * stride_v;
        for (std::size_t i = 0; i < n; ++i) line[i] = field[base + i * stride[axis]];
        envelope_pass(line, pos, n, out, site, cross);
        for (std::size_t i = 0; i < n; ++i) field[base + i * stride[axis]] = out[i];
      }
  }
  return field;
}

std::vector<std::array<std::size_t, 3>> foreground_points(const LabelMap& m) {
  std::vector<std::array<std::size_t, 3>> pts;
  const auto [nx, ny, nz] = m.meta.dims;
  for (std::size_t z = 0; z < nz; ++z)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x)
        if (m.at(x, y, z)) pts.push_back({x, y, z});
  return pts;
}

// Largest over `from` of the squared distance to the nearest point of `to`,
// via the all-pairs definition. Folds squared axis terms x, then y, then z,
// matching the transform-based path bit-for-bit.
double directed_sq_naive(const std::vector<std::array<std::size_t, 3>>& from,
                         const std::vector<std::array<std::size_t, 3>>& to,
                         const std::array<std::vector<double>, 3>& coords) {
  double worst = 0.0;
  for (const auto& a : from) {
    double best = kInf;
    for (const auto& b : to) {
      const double dx = coords[0][a[0]] - coords[0][b[0]];
      const double dy = coords[1][a[1]] - coords[1][b[1]];
      const double dz = coords[2][a[2]] - coords[2][b[2]];
      const double d2 = (dx * dx + dy * dy) + dz * dz;
      if (d2 < best) best = d2;
    }
    if (best > worst) worst = best;
  }
  return worst;
}

double directed_sq_fast(const std::vector<std::array<std::size_t, 3>>& from,
                        const std::vector<double>& dist_sq_to, const VolumeMeta& meta) {
  double worst = 0.0;
  for (const auto& a : from) {
    const double d2 = dist_sq_to[meta.index(a[0], a[1], a[2])];
    if (d2 > worst) worst = d2;
  }
  return worst;
}

// Zero-padded separable Gaussian convolution along one axis, in place.
void blur_axis(std::vector<double>& data, const VolumeMeta& meta, int axis,
               const std::vector<double>& kernel, int radius) {
  const auto [nx, ny, nz] = meta.dims;
  const std::size_t stride[3] = {1, nx, nx * ny};
  const std::size_t len[3] = {nx, ny, nz};
  const std::size_t n = len[axis];
  const std::size_t n_u = len[(axis + 1) % 3];
  const std::size_t n_v = len[(axis + 2) % 3];
  std::vector<double> line(n);
  for (std::size_t v = 0; v < n_v; ++v)
    for (std::size_t u = 0; u < n_u; ++u) {
      const std::size_t base = u * stride[(axis + 1) % 3] + v * stride[(axis + 2) % 3];
      for (std::size_t i = 0; i < n; ++i) line[i] = data[base + i * stride[axis]];
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        const std::ptrdiff_t lo =
            std::max<std::ptrdiff_t>(-radius, -static_cast<std::ptrdiff_t>(i));
        const std::ptrdiff_t hi =
            std::min<std::ptrdiff_t>(radius, static_cast<std::ptrdiff_t>(n - 1 - i));
        for (std::ptrdiff_t k = lo; k <= hi; ++k)
          acc += kernel[static_cast<std::size_t>(k + radius)] *
                 line[i + static_cast<std::size_t>(k)];
        data[base + i * stride[axis]] = acc;
      }
    }
}

std::vector<double> gaussian_blur(std::vector<double> data, const VolumeMeta& meta,
                                  const std::vector<double>& kernel, int radius) {
  for (int axis = 0; axis < 3; ++axis) blur_axis(data, meta, axis, kernel, radius);
  return data;
}

Volume labels_as_intensities(const LabelMap& m, double level) {
  Volume v;
  v.meta = m.meta;
  v.data.resize(m.data.size());
  const float high = static_cast<float>(level);
  for (std::size_t i = 0; i < m.data.size(); ++i) v.data[i] = m.data[i] ? high : 0.0f;
  return v;
}

}  // namespace

std::vector<double> ssim3d_values(const Volume& x, const Volume& y, const SsimParams& params) {
  assert_compatible(x.meta, y.meta);
  if (!(params.luminance_range > 0.0))
    throw std::invalid_argument("ssim luminance range must be positive");
  if (!(params.window_sigma > 0.0) || params.window_radius < 0)
    throw std::invalid_argument("ssim window parameters out of range");

  const int r = params.window_radius;
  std::vector<double> kernel(static_cast<std::size_t>(2 * r + 1));
  double ksum = 0.0;
  for (int i = -r; i <= r; ++i) {
    kernel[static_cast<std::size_t>(i + r)] =
        std::exp(-(static_cast<double>(i) * i) / (2.0 * params.window_sigma * params.window_sigma));
    ksum += kernel[static_cast<std::size_t>(i + r)];
  }
  for (double& k : kernel) k /= ksum;

  const std::size_t n = x.data.size();
  std::vector<double> dx(n), dy(n), dxx(n), dyy(n), dxy(n), ones(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = x.data[i], b = y.data[i];
    dx[i] = a;
    dy[i] = b;
    dxx[i] = a * a;
    dyy[i] = b * b;
    dxy[i] = a * b;
  }
  const VolumeMeta& meta = x.meta;
  const auto s1 = gaussian_blur(std::move(dx), meta, kernel, r);
  const auto s2 = gaussian_blur(std::move(dy), meta, kernel, r);
  const auto s11 = gaussian_blur(std::move(dxx), meta, kernel, r);
  const auto s22 = gaussian_blur(std::move(dyy), meta, kernel, r);
  const auto s12 = gaussian_blur(std::move(dxy), meta, kernel, r);
  // border renormalization: each voxel divides by its in-bounds weight mass
  const auto norm = gaussian_blur(std::move(ones), meta, kernel, r);

  const double c1 = (params.k1 * params.luminance_range) * (params.k1 * params.luminance_range);
  const double c2 = (params.k2 * params.luminance_range) * (params.k2 * params.luminance_range);

  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = norm[i];
    const double mu_x = s1[i] / w;
    const double mu_y = s2[i] / w;
    const double var_x = s11[i] / w - mu_x * mu_x;
    const double var_y = s22[i] / w - mu_y * mu_y;
    const double cov = s12[i] / w - mu_x * mu_y;
    const double num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2);
    const double den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2);
    values[i] = num / den;
  }
  return values;
}

double dice(const LabelMap& a, const LabelMap& b) {
  assert_compatible(a.meta, b.meta);
  std::size_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    na += a.data[i];
    nb += b.data[i];
    inter += a.data[i] & b.data[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

std::vector<std::array<std::size_t, 3>> boundary_voxels(const LabelMap& m) {
  std::vector<std::array<std::size_t, 3>> pts;
  const auto [nx, ny, nz] = m.meta.dims;
  for (std::size_t z = 0; z < nz; ++z)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        if (!m.at(x, y, z)) continue;
        const bool exposed = x == 0 || !m.at(x - 1, y, z) || x == nx - 1 || !m.at(x + 1, y, z) ||
                             y == 0 || !m.at(x, y - 1, z) || y == ny - 1 || !m.at(x, y + 1, z) ||
                             z == 0 || !m.at(x, y, z - 1) || z == nz - 1 || !m.at(x, y, z + 1);
        if (exposed) pts.push_back({x, y, z});
      }
  return pts;
}

DistanceField edt(const LabelMap& m, const std::array<double, 3>& spacing) {
  m.validate();
  for (double s : spacing)
    if (!(s > 0.0)) throw std::invalid_argument("distance transform spacing must be positive");
  auto seeds = foreground_points(m);
  if (seeds.empty())
    throw std::invalid_argument("distance transform of an empty mask is undefined");
  DistanceField field;
  field.meta = m.meta;
  field.meta.spacing = spacing;
  field.values = edt_squared(m.meta, seeds, spacing);
  for (double& v : field.values) v = std::sqrt(v);
  return field;
}

double hausdorff(const LabelMap& a, const LabelMap& b, HausdorffMode mode, bool full_mask) {
  assert_compatible(a.meta, b.meta);
  if (a.foreground_count() == 0 || b.foreground_count() == 0)
    throw UndefinedMetric("surface distance is undefined for an empty mask");

  const auto pts_a = full_mask ? foreground_points(a) : boundary_voxels(a);
  const auto pts_b = full_mask ? foreground_points(b) : boundary_voxels(b);

  double worst_sq;
  if (mode == HausdorffMode::naive) {
    std::array<std::vector<double>, 3> coords;
    for (int axis = 0; axis < 3; ++axis) {
      coords[axis].resize(a.meta.dims[axis]);
      for (std::size_t i = 0; i < a.meta.dims[axis]; ++i)
        coords[axis][i] = static_cast<double>(i) * a.meta.spacing[axis];
    }
    worst_sq = std::max(directed_sq_naive(pts_a, pts_b, coords),
                        directed_sq_naive(pts_b, pts_a, coords));
  } else {
    const auto to_b = edt_squared(a.meta, pts_b, a.meta.spacing);
    const auto to_a = edt_squared(a.meta, pts_a, a.meta.spacing);
    worst_sq = std::max(directed_sq_fast(pts_a, to_b, a.meta),
                        directed_sq_fast(pts_b, to_a, a.meta));
  }
  return std::sqrt(worst_sq);
}

Volume ssim3d_map(const Volume& x, const Volume& y, const SsimParams& params) {
  const auto values = ssim3d_values(x, y, params);
  Volume map;
  map.meta = x.meta;
  map.data.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) map.data[i] = static_cast<float>(values[i]);
  return map;
}

double ssim3d(const Volume& x, const Volume& y, const SsimParams& params) {
  const auto values = ssim3d_values(x, y, params);
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

double ssim3d(const LabelMap& x, const LabelMap& y, const SsimParams& params) {
  return ssim3d(labels_as_intensities(x, params.luminance_range),
                labels_as_intensities(y, params.luminance_range), params);
}

MetricRecord evaluate(const LabelMap& pred, const LabelMap& reference,
                      const std::string& volume_id, const std::string& task_label) {
  assert_compatible(pred.meta, reference.meta);
  MetricRecord rec;
  rec.volume_id = volume_id;
  rec.task_label = task_label;
  rec.dice = dice(pred, reference);
  rec.ssim = ssim3d(pred, reference);
  const auto& sp = pred.meta.spacing;
  rec.hd_units = (sp[0] == 1.0 && sp[1] == 1.0 && sp[2] == 1.0) ? "voxel" : "mm";
  try {
    rec.hd = hausdorff(pred, reference);
    rec.hd_defined = true;
  } catch (const UndefinedMetric&) {
    rec.hd = 0.0;
    rec.hd_defined = false;
  }
  return rec;
}

}  // namespace vtseg
