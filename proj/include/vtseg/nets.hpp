#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vtseg/augment.hpp"
#include "vtseg/tensor.hpp"
#include "vtseg/volume.hpp"

namespace vtseg {

// Desk-scale segmentation networks: a slice-wise 2D U-Net, a 3D U-Net, and a
// transformer encoder-decoder ("unetr"), all built from the differentiable
// primitives in nn_ops.hpp. Everything is double precision and deterministic:
// (config, seed, dataset) fixes initialization, batch order, dropout masks,
// and therefore the trained parameters, bit-exactly.
//
// Volumes entering a network are scaled by 1/255 so the working intensity
// range (0..255) maps to [0, 1]; predictions threshold the sigmoid output.

enum class NetKind { unet2d, unet3d, unetr };

std::string to_string(NetKind k);
NetKind net_kind_from_string(std::string_view s);

struct NetConfig {
  NetKind kind = NetKind::unet3d;
  // Spatial input size in volume axis order: {nx, ny} for unet2d (one
  // sagittal slice), {nx, ny, nz} otherwise.
  std::vector<std::size_t> input_dims;
  // Encoder widths, shallow to deep; the last entry is the bottleneck width.
  std::vector<std::size_t> channel_widths;
  std::size_t kernel_size = 3;
  std::size_t pool_factor = 2;
  double dropout_rate = 0.0;
  // Transformer-specific (ignored by the U-Nets).
  std::size_t patch_size = 8;
  std::size_t embed_dim = 32;
  std::size_t heads = 2;
  std::size_t depth = 2;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument when: channel_widths is empty; a spatial dim
  // is not divisible by pool_factor^(levels-1); kernel_size is even (same
  // padding needs odd kernels); for unetr, a dim is not divisible by
  // patch_size, patch_size is not a power of two >= 2, embed_dim is not
  // divisible by heads, or depth < 1; dropout_rate is outside [0, 1).
  void validate() const;
};

// One named parameter tensor. `layer` is the index of the parameterized layer
// (convolution, transposed convolution, embedding, normalization, or
// projection) that owns it, counted in forward-definition order from the
// input side; freezing operates on whole layers.
struct Param {
  std::string name;
  std::size_t layer = 0;
  bool frozen = false;
  TensorND value;
  TensorND adam_m;
  TensorND adam_v;
};

struct NetState {
  NetConfig config;
  std::vector<Param> parameters;  // forward-definition order
  std::int64_t step = 0;          // Adam step count, persists across train calls

  std::size_t layer_count() const;
  std::size_t parameter_count() const;  // total scalar parameters
  const Param* find(std::string_view name) const;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 1;
  int steps_per_epoch = 1;
  double dropout_rate = 0.0;
  double epsilon = 1.0;  // soft-Dice smoothing term
  std::uint64_t seed = 0;

  // Throws std::invalid_argument unless learning_rate >= 0 and finite (0 is
  // allowed as an explicit dry-run: moments advance, parameters do not),
  // epochs >= 1, steps_per_epoch >= 1, dropout_rate in [0, 1), epsilon > 0.
  void validate() const;
};

// --- builders ---------------------------------------------------------------
// Each builder returns a freshly initialized NetState whose parameters are a
// pure function of cfg (He/Xavier Gaussian draws from cfg.seed, consumed in
// definition order). Output head is a 1x1 convolution followed by sigmoid, so
// forward values always lie in (0, 1). Dropout sits at the bottleneck (U-Nets)
// or on the fused patch-grid features (unetr) and is active only in training.
NetState build_unet2d(const NetConfig& cfg);
NetState build_unet3d(const NetConfig& cfg);
// Transformer encoder-decoder: non-overlapping patch embedding, learned
// positional offsets, `depth` pre-normalization blocks (multi-head
// self-attention + two-layer feed-forward, residual connections). Features
// from evenly spaced blocks are reshaped to the patch grid, concatenated and
// fused by a convolution, then decoded by transposed-convolution stages back
// to the input resolution, where a convolutional skip computed from the raw
// input is concatenated before the head.
NetState build_unetr(const NetConfig& cfg);
NetState build_net(const NetConfig& cfg);  // dispatch on cfg.kind

// Evaluation-mode forward pass on an already prepared input tensor
// ((1, 1, ny, nx) or (1, 1, nz, ny, nx), values expected in roughly [0, 1]).
TensorND forward(const NetState& net, const TensorND& input);

// Per-block attention matrices (heads, tokens, tokens) and the final token
// features (tokens, embed) before any decoding; unetr only.
struct EncoderTrace {
  std::vector<TensorND> attention;
  TensorND tokens;
};
EncoderTrace transformer_encoder_trace(const NetState& net, const TensorND& input);

// --- loss -------------------------------------------------------------------
// 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps); gradient w.r.t. pred.
double soft_dice_loss(const TensorND& pred, const TensorND& target, double eps);
TensorND soft_dice_loss_backward(const TensorND& pred, const TensorND& target,
                                 double eps);

// --- freezing ---------------------------------------------------------------
// Marks the first n_layers layers (forward-definition order, input side
// first) frozen and the rest unfrozen. Frozen parameters report exactly zero
// gradient and are skipped by the optimizer, so they stay bit-identical
// across any number of update steps. Throws when n_layers exceeds the layer
// count.
NetState freeze_prefix(NetState net, std::size_t n_layers);

// --- training ---------------------------------------------------------------
struct TrainResult {
  NetState net;
  std::vector<double> history;  // per-step soft-Dice loss
};

// Adam (beta1 0.9, beta2 0.999, eps 1e-8) on the soft-Dice loss for
// epochs * steps_per_epoch steps. Items are (volume, slice) pairs for a 2D
// net and whole volumes otherwise; each epoch visits them in an order
// shuffled deterministically from tc.seed, wrapping cyclically when
// steps_per_epoch exceeds the item count. Dropout masks derive from tc.seed
// and the global step, so chained train() calls remain deterministic.
// Throws std::invalid_argument on an empty dataset or mismatched dims, and
// std::runtime_error("... non-finite loss at step N (learning rate X)") when
// the loss stops being finite.
TrainResult train(NetState net, const std::vector<SamplePair>& dataset,
                  const TrainConfig& tc);

// --- inference ---------------------------------------------------------------
// Runs every sagittal slice independently through a 2D net and restacks the
// thresholded outputs (foreground where sigmoid > threshold).
LabelMap predict_slicewise(const NetState& net2d, const Volume& v,
                           double threshold = 0.5);
// Single forward pass of a 3D net, thresholded.
LabelMap predict_volume(const NetState& net3d, const Volume& v,
                        double threshold = 0.5);

// --- verification -----------------------------------------------------------
// Analytic gradients of the soft-Dice loss for `sample` w.r.t. every
// parameter tensor, aligned with net.parameters; frozen layers yield exact
// zeros. 2D nets are evaluated on the sample's middle sagittal slice.
std::vector<TensorND> loss_gradients(const NetState& net, const SamplePair& sample,
                                     double eps = 1.0);

// Central finite differences ((L(th+h) - L(th-h)) / 2h, dropout disabled)
// against the analytic gradients on a deterministic random subset of up to
// 200 parameters per layer (all of them when a layer is smaller). Returns the
// worst relative error |fd - g| / max(|fd| + |g|, 1e-6); the floor keeps
// round-off on near-zero gradients from registering as relative error.
// Frozen layers are excluded (their defined gradient is zero, which finite
// differences of the unfrozen forward pass would not reproduce). Probes that
// push a rectifier input or a pooling selection across its decision boundary
// are also excluded: along such directions the loss is only subdifferentiable
// and a central difference measures the kink rather than the derivative.
double grad_check(const NetState& net, const SamplePair& sample, double h = 1e-5);

// --- hyperparameter grid search ----------------------------------------------
struct GridSpec {
  std::vector<int> epochs;
  std::vector<int> steps_per_epoch;
  std::vector<double> learning_rates;
  std::vector<double> dropout_rates;
  std::vector<std::size_t> frozen_layers;

  void validate() const;  // every axis non-empty
  std::size_t cell_count() const;
};

struct GridCell {
  std::size_t cell_index = 0;  // position in the row-major cell enumeration
  int epochs = 0;
  int steps_per_epoch = 0;
  double learning_rate = 0.0;
  double dropout_rate = 0.0;
  std::size_t frozen_layers = 0;
  double val_dice = 0.0;
  double final_loss = 0.0;
};

struct GridSearchResult {
  std::vector<GridCell> ranked;  // descending val_dice, ties by cell_index
  std::size_t evaluated = 0;     // == ranked.size(): one manifest row per cell
};

// Enumerates the Cartesian product of the grid axes in declaration order
// (epochs, steps, learning rate, dropout, frozen layers), evaluates the first
// min(budget, total) cells, and ranks them by mean Dice between thresholded
// predictions and labels on val_set. Every cell starts from a copy of `base`
// (so a pre-trained state can be searched as-is), applies freeze_prefix with
// the cell's frozen-layer count, and trains with the same derived seed, so
// cells differ only in the searched hyperparameters.
GridSearchResult grid_search(const NetState& base, const GridSpec& grids,
                             const std::vector<SamplePair>& train_set,
                             const std::vector<SamplePair>& val_set,
                             std::size_t budget);

// --- checkpoints --------------------------------------------------------------
// Container layout (all integers and floats little-endian):
//   bytes 0..7   magic "VTCK0001"
//   bytes 8..15  uint64 header length H
//   bytes 16..   UTF-8 JSON header: {"config": {...}, "step": N,
//                "parameters": [{"name", "shape", "layer", "frozen"}, ...]}
//   then, per parameter in order: value, adam_m, adam_v as raw float64.
// The header carries the full config including the seed, so a checkpoint
// records its own provenance; writing the same state twice produces
// byte-identical files.
void save_checkpoint(const NetState& net, const std::string& path);
NetState load_checkpoint(const std::string& path);

}  // namespace vtseg
