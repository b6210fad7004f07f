#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vtseg/augment.hpp"
#include "vtseg/metrics.hpp"
#include "vtseg/nets.hpp"
#include "vtseg/preprocess.hpp"
#include "vtseg/staple.hpp"

namespace vtseg {

// Thrown for malformed config text, unknown keys (the message names the
// offending dotted key), type mismatches, and out-of-range values.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One structured key/value document that drives every subcommand. Keys live
// in named sections ([run], [synth], ...); every field below is a printed
// default, i.e. print_config(RunConfig{}) emits the complete schema. Unknown
// keys are rejected at parse time. Command-line flags are applied after the
// file and win.
struct RunConfig {
  // [run] — global execution settings and input/output paths.
  std::uint64_t seed = 0;
  int jobs = 1;                     // worker threads for per-volume work
  std::string out;                  // output directory; empty = $VTSEG_OUT or "vtseg-out"
  std::string format = "csv";      // report rendering: csv | json | markdown
  std::vector<std::string> inputs;  // input files/directories (subcommand-specific)

  // [synth] — phantom generation.
  struct SynthSection {
    std::string kind = "airway";  // airway | lunglike
    int count = 4;
    std::array<std::size_t, 3> dims{48, 48, 48};
    double noise_sigma = 0.0;  // on the normalized [0,1] intensity scale
  } synth;

  // [preprocess] — mirrors PreprocessConfig plus the modality switch.
  struct PreprocessSection {
    std::string modality = "ct";  // ct | mri
    double clamp_lo = -1000.0;
    double clamp_hi = 1000.0;
    int gad_iterations = 5;
    double gad_time_step = 0.0625;
    double gad_conductance = 1.0;
    double crop_fraction = 0.7;
    std::string crop_anchor = "centered";  // centered | anterior_superior
    std::array<std::size_t, 3> target_dims{256, 256, 32};

    PreprocessConfig to_config() const;
  } preprocess;

  // [augment] — mirrors AugmentSpec; the stream seed comes from [run] seed.
  struct AugmentSection {
    double noise_sigma_max = 0.01;
    double rotation_range_deg = 10.0;
    bool flip_enabled = true;
    std::string flip_axis = "left_right";  // left_right | anterior_posterior | superior_inferior

    AugmentSpec to_spec(std::uint64_t seed) const;
  } augment;

  // [net] — mirrors NetConfig; the init seed comes from [run] seed.
  struct NetSection {
    std::string kind = "unet3d";  // unet2d | unet3d | unetr
    std::vector<std::size_t> input_dims{48, 48, 48};
    std::vector<std::size_t> channel_widths{8, 16, 32};
    std::size_t kernel_size = 3;
    std::size_t pool_factor = 2;
    double dropout_rate = 0.0;
    std::size_t patch_size = 8;
    std::size_t embed_dim = 32;
    std::size_t heads = 2;
    std::size_t depth = 2;

    NetConfig to_config(std::uint64_t seed) const;
  } net;

  // [train] — mirrors TrainConfig plus warm-start/transfer settings.
  struct TrainSection {
    double learning_rate = 1e-3;
    int epochs = 1;
    int steps_per_epoch = 100;
    double dropout_rate = 0.0;
    double epsilon = 1.0;
    std::size_t freeze_prefix = 0;  // freeze this many leading layers
    std::string init_checkpoint;    // warm-start checkpoint; empty = fresh net

    TrainConfig to_config(std::uint64_t seed) const;
  } train;

  // [staple] — mirrors StapleConfig plus the consensus threshold.
  struct StapleSection {
    double init_sensitivity = 0.9;
    double init_specificity = 0.9;
    double prior = -1.0;  // foreground prior; negative = derive from the raters
    double tol = 1e-7;
    int max_iter = 100;
    double threshold = 0.5;  // consensus mask threshold on the posterior

    StapleConfig to_config() const;
  } staple;

  // [metrics] — evaluation settings and the tags stamped on each record.
  struct MetricsSection {
    std::string task_label = "segmentation";
    std::string model = "model";           // model column tag on emitted records
    std::string reference;                 // reference label directory/files for eval
    std::string hausdorff_mode = "fast";  // fast | naive
    bool full_mask = false;                // boundary sets (false) or full voxel sets
    double ssim_window_sigma = 1.5;
    int ssim_window_radius = 5;
    double ssim_k1 = 0.01;
    double ssim_k2 = 0.03;
    double ssim_luminance_range = 255.0;

    SsimParams to_ssim_params() const;
    HausdorffMode to_hausdorff_mode() const;
  } metrics;

  // [predict] — inference settings.
  struct PredictSection {
    std::string checkpoint;   // trained checkpoint; required by `predict`
    double threshold = 0.5;  // foreground iff probability strictly exceeds it
  } predict;

  // [gridsearch] — hyperparameter axes, evaluation budget, validation data.
  struct GridSection {
    std::vector<int> epochs{1};
    std::vector<int> steps_per_epoch{50, 100, 150, 200};
    std::vector<double> learning_rates{1e-4, 3e-4, 3e-5, 1e-5};
    std::vector<double> dropout_rates{0.0, 0.1, 0.5};
    std::vector<std::size_t> frozen_layers{0};
    std::size_t budget = 8;  // 0 = evaluate every cell
    std::string validation;  // validation pair directory; required by `gridsearch`

    GridSpec to_spec() const;
  } gridsearch;

  // Cross-field checks on the CLI-level values (enum spellings, ranges) and
  // on every embedded module config. Throws ConfigError naming the offending
  // key.
  void validate() const;
};

// Parses a complete document on top of the defaults. Lines are `key = value`
// within `[section]` headers; `#` starts a comment; arrays are single-line
// `[a, b, c]`; strings may be double-quoted (required when they contain
// spaces, '#', or commas). Throws ConfigError with the offending line or key.
RunConfig parse_config(const std::string& text);

// Parses the document into an existing config (later layers win), same rules.
void apply_config_text(RunConfig& cfg, const std::string& text);

// Assigns one value by dotted key ("train.learning_rate"), parsing `value`
// exactly as the file parser would. Throws ConfigError on unknown keys or
// unparseable values.
void set_config_value(RunConfig& cfg, const std::string& dotted_key, const std::string& value);

// Canonical rendering: every field, grouped by section, in a fixed order,
// with round-trip-exact numbers. parse_config(print_config(c)) reproduces c.
std::string print_config(const RunConfig& cfg);

// All dotted keys in canonical order (the print_config order).
std::vector<std::string> config_keys();

}  // namespace vtseg
