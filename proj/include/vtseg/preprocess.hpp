#pragma once

#include <array>
#include <cstddef>

#include "vtseg/volume.hpp"

namespace vtseg {

// Where crop_fraction anchors the retained in-plane window.
enum class CropAnchor {
  centered,            // start index floor((n - k) / 2) on both in-plane axes
  anterior_superior,   // start index 0 on both in-plane axes
};

enum class ResampleMode { trilinear, nearest };

struct PreprocessConfig {
  double clamp_lo = -1000.0;  // CT intensity window
  double clamp_hi = 1000.0;
  int gad_iterations = 5;
  double gad_time_step = 0.0625;
  double gad_conductance = 1.0;
  double crop_fraction = 0.7;  // fraction of the in-plane extent RETAINED
  CropAnchor crop_anchor = CropAnchor::centered;
  std::array<std::size_t, 3> target_dims{256, 256, 32};

  void validate() const;
};

// Linear window: clamp(x, lo, hi) mapped onto [0, 255]. Monotone; exact
// identity when re-applied with (0, 255) since the scale factor is then 1.
Volume clamp_rescale(const Volume& v, double lo, double hi);

// Edge-preserving smoothing: explicit per-face flux update
//   I <- I + dt * sum_faces c(g) * g,   c(g) = exp(-(g/K)^2)
// with zero-flux boundaries. dt must satisfy the 3D stability bound
// dt <= 1/6, which also yields a per-voxel discrete maximum principle and
// exact conservation of the intensity sum (to rounding).
Volume diffuse_gad(const Volume& v, int iterations, double time_step, double conductance);

// Retains ceil(fraction * n) voxels along each in-plane axis (axes 0 and 1);
// the slice axis (axis 2) is untouched. The origin shifts so retained voxels
// keep their world coordinates.
Volume crop_fraction(const Volume& v, double fraction, CropAnchor anchor = CropAnchor::centered);
LabelMap crop_fraction(const LabelMap& m, double fraction,
                       CropAnchor anchor = CropAnchor::centered);

// Cell-centered resampling onto target_dims: output center j maps to source
// coordinate (j + 0.5) * (n_src / n_tgt) - 0.5, sampled with trilinear
// (volumes) or nearest (label maps) interpolation; spacing is rescaled so the
// physical extent is preserved and the origin keeps voxel centers aligned.
// Identity target dims reproduce the input bit-for-bit.
Volume resample(const Volume& v, const std::array<std::size_t, 3>& target_dims,
                ResampleMode mode = ResampleMode::trilinear);
LabelMap resample(const LabelMap& m, const std::array<std::size_t, 3>& target_dims,
                  ResampleMode mode = ResampleMode::nearest);

// Foreground iff value strictly exceeds the threshold.
LabelMap binarize(const Volume& v, double threshold);

// CT chain: clamp_rescale(clamp_lo, clamp_hi) -> resample(target_dims).
Volume preprocess_ct(const Volume& v, const PreprocessConfig& cfg = {});

// MRI chain: diffuse_gad -> clamp_rescale(0, 255) -> crop_fraction ->
// resample(target_dims). The MRI normalization window is fixed at (0, 255);
// the configurable clamp window applies to the CT chain only.
Volume preprocess_mri(const Volume& v, const PreprocessConfig& cfg = {});

}  // namespace vtseg
