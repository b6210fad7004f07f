#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "vtseg/volume.hpp"

namespace vtseg {

// Thrown when a metric has no defined value (e.g. a surface distance against
// an empty mask). Deliberately distinct from a zero result.
struct UndefinedMetric : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-voxel Euclidean distance (in spacing units) to the nearest foreground
// voxel center of a source mask. Zero exactly on source voxels.
struct DistanceField {
  VolumeMeta meta;
  std::vector<double> values;
};

struct MetricRecord {
  std::string volume_id;
  std::string task_label;
  double dice = 0.0;      // [0, 1]
  double hd = 0.0;        // >= 0; meaningful only when hd_defined
  std::string hd_units;   // "voxel" when spacing is isotropic 1, else "mm"
  bool hd_defined = true; // false when either mask is empty
  double ssim = 0.0;      // [-1, 1]
};

// Overlap ratio 2|A n B| / (|A| + |B|); two empty masks count as perfect
// agreement (1.0).
double dice(const LabelMap& a, const LabelMap& b);

// Foreground voxels with at least one 6-connected background (or
// out-of-grid) neighbor.
std::vector<std::array<std::size_t, 3>> boundary_voxels(const LabelMap& m);

// Exact Euclidean distance transform, computed with separable per-axis
// lower-envelope passes over squared distances; honors anisotropic spacing.
// Throws on an empty mask.
DistanceField edt(const LabelMap& m, const std::array<double, 3>& spacing);

enum class HausdorffMode { fast, naive };

// Symmetric Hausdorff distance between the two masks' boundary voxel sets
// (or the full voxel sets when full_mask is set). `fast` runs a distance
// transform per side; `naive` evaluates the all-pairs definition directly.
// Both fold squared per-axis terms in the same order and take one final
// square root, so the two modes return identical values. Throws
// UndefinedMetric when either mask is empty.
double hausdorff(const LabelMap& a, const LabelMap& b,
                 HausdorffMode mode = HausdorffMode::fast, bool full_mask = false);

struct SsimParams {
  double window_sigma = 1.5;
  int window_radius = 5;  // 11x11x11 support
  double k1 = 0.01;
  double k2 = 0.03;
  double luminance_range = 255.0;  // the L constant
};

// Mean local structural similarity over a Gaussian window, with window
// weights renormalized at the borders. Label inputs are mapped {0,1} ->
// {0, L}. The per-voxel values are exposed in full double precision for
// direct per-window formula checks; the Volume map is their float
// rendering (convenient for writing to disk).
std::vector<double> ssim3d_values(const Volume& x, const Volume& y,
                                  const SsimParams& params = {});
Volume ssim3d_map(const Volume& x, const Volume& y, const SsimParams& params = {});
double ssim3d(const Volume& x, const Volume& y, const SsimParams& params = {});
double ssim3d(const LabelMap& x, const LabelMap& y, const SsimParams& params = {});

// All three metrics for one prediction/reference pair. An empty mask on
// either side records HD as undefined instead of a number.
MetricRecord evaluate(const LabelMap& pred, const LabelMap& reference,
                      const std::string& volume_id, const std::string& task_label);

}  // namespace vtseg
