#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vtseg/volume.hpp"

namespace vtseg {

// An image/label training pair with a stable identifier used for file naming
// and deterministic parameter derivation.
struct SamplePair {
  std::string id;
  Volume image;
  LabelMap label;

  void validate() const;
};

// Anatomical mirror axes mapped onto the storage axes: anterior-posterior is
// axis 0, superior-inferior is axis 1, left-right is axis 2 (the slice axis).
enum class FlipAxis { left_right, anterior_posterior, superior_inferior };

struct AugmentSpec {
  double noise_sigma_max = 0.01;    // sigma drawn uniformly from [0, max]
  double rotation_range_deg = 10.0; // angle drawn uniformly from [-range, +range]
  bool flip_enabled = true;
  FlipAxis flip_axis = FlipAxis::left_right;
  std::uint64_t seed = 0;

  void validate() const;
};

// Parameters actually drawn for one emitted output; recorded in manifests.
struct AugmentRecord {
  std::string id;
  std::string kind;  // "original" | "noise" | "flip" | "rotate"
  double sigma = 0.0;
  double angle_deg = 0.0;
  FlipAxis axis = FlipAxis::left_right;
};

// Adds i.i.d. zero-mean Gaussian noise with the given sigma on the normalized
// [0,1] intensity scale (values divided by 255, perturbed, clamped to [0,1],
// scaled back). sigma = 0 is an exact identity.
Volume add_noise(const Volume& v, double sigma, std::uint64_t seed);

// Index reversal along the chosen anatomical axis; meta unchanged.
Volume mirror_flip(const Volume& v, FlipAxis axis = FlipAxis::left_right);
LabelMap mirror_flip(const LabelMap& m, FlipAxis axis = FlipAxis::left_right);
SamplePair mirror_flip(const SamplePair& pair, FlipAxis axis = FlipAxis::left_right);

// In-plane rotation of every slice (axes 0 and 1 rotate; the slice axis is
// untouched) about the slice center. The image is sampled bilinearly within
// the plane (the in-plane restriction of trilinear sampling), the label with
// nearest neighbor; voxels mapping outside the field of view become `fill`
// for the image and background for the label. |angle_deg| must be <= 45.
SamplePair rotate_pair(const SamplePair& pair, double angle_deg, float fill = 0.0f);

// For each input pair emits, in order: the original, a noised, a flipped
// (when enabled), and a rotated variant. Parameters derive from (spec.seed,
// pair index), never from dataset order elsewhere, so the expansion is a pure
// function of (inputs, spec). Drawn parameters are appended to `records` when
// provided.
std::vector<SamplePair> augment_dataset(const std::vector<SamplePair>& pairs,
                                        const AugmentSpec& spec,
                                        std::vector<AugmentRecord>* records = nullptr);

}  // namespace vtseg
