#include "vtseg/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <sstream>
#include <string_view>
#include <type_traits>
#include <unordered_map>
#include <utility>

namespace vtseg {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& raw, const char* expected) {
  throw ConfigError("key \"" + key + "\": expected " + expected + ", got \"" + raw + "\"");
}

// --- scalar rendering / parsing ----------------------------------------------
// Numbers render through std::to_chars (shortest form that parses back to the
// identical value), so print_config -> parse_config is an exact round trip.

std::string render_scalar(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::string render_scalar(bool v) { return v ? "true" : "false"; }

template <class T>
  requires(std::is_integral_v<T> && !std::is_same_v<T, bool>)
std::string render_scalar(T v) {
  return std::to_string(v);
}

std::string render_scalar(const std::string& v) { return '"' + v + '"'; }

double parse_double_raw(const std::string& raw, const std::string& key) {
  double v{};
  auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc() || p != raw.data() + raw.size()) bad_value(key, raw, "a number");
  return v;
}

template <class T>
T parse_integer_raw(const std::string& raw, const std::string& key) {
  T v{};
  auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc() || p != raw.data() + raw.size()) {
    bad_value(key, raw, std::is_unsigned_v<T> ? "a non-negative integer" : "an integer");
  }
  return v;
}

std::string parse_string_raw(const std::string& raw, const std::string& key) {
  if (!raw.empty() && (raw.front() == '"' || raw.back() == '"')) {
    if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"') {
      bad_value(key, raw, "a balanced double-quoted string");
    }
    return raw.substr(1, raw.size() - 2);
  }
  return raw;
}

// Splits the bracketed list into trimmed element strings, respecting quotes;
// a trailing comma is tolerated.
std::vector<std::string> split_array_raw(const std::string& raw, const std::string& key) {
  if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') {
    bad_value(key, raw, "an array like [a, b, c]");
  }
  std::vector<std::string> items;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
    char c = raw[i];
    if (c == '"') in_quotes = !in_quotes;
    if (c == ',' && !in_quotes) {
      items.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (in_quotes) bad_value(key, raw, "balanced quotes inside the array");
  std::string last = trim(cur);
  if (!last.empty()) {
    items.push_back(last);
  } else if (!items.empty() && trim(raw.substr(1, raw.size() - 2)).back() != ',') {
    // An empty final element that is not a trailing comma means ",," appeared.
    bad_value(key, raw, "non-empty array elements");
  }
  for (const std::string& item : items) {
    if (item.empty()) bad_value(key, raw, "non-empty array elements");
  }
  return items;
}

// --- typed render / assign dispatch --------------------------------------------

template <class T>
struct is_std_vector : std::false_type {};
template <class E>
struct is_std_vector<std::vector<E>> : std::true_type {};

template <class T>
std::string render_value(const T& v) {
  if constexpr (is_std_vector<T>::value) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ", ";
      out += render_scalar(v[i]);
    }
    return out + "]";
  } else if constexpr (std::is_same_v<T, std::array<std::size_t, 3>>) {
    return "[" + render_scalar(v[0]) + ", " + render_scalar(v[1]) + ", " + render_scalar(v[2]) +
           "]";
  } else {
    return render_scalar(v);
  }
}

template <class T>
T parse_scalar(const std::string& raw, const std::string& key) {
  if constexpr (std::is_same_v<T, bool>) {
    if (raw == "true") return true;
    if (raw == "false") return false;
    bad_value(key, raw, "true or false");
  } else if constexpr (std::is_same_v<T, std::string>) {
    return parse_string_raw(raw, key);
  } else if constexpr (std::is_floating_point_v<T>) {
    return parse_double_raw(raw, key);
  } else {
    return parse_integer_raw<T>(raw, key);
  }
}

template <class T>
void assign_value(T& target, const std::string& raw, const std::string& key) {
  if constexpr (is_std_vector<T>::value) {
    using E = typename T::value_type;
    T out;
    for (const std::string& item : split_array_raw(raw, key)) {
      out.push_back(parse_scalar<E>(item, key));
    }
    target = std::move(out);
  } else if constexpr (std::is_same_v<T, std::array<std::size_t, 3>>) {
    std::vector<std::string> items = split_array_raw(raw, key);
    if (items.size() != 3) bad_value(key, raw, "an array of exactly 3 integers");
    for (std::size_t i = 0; i < 3; ++i) target[i] = parse_scalar<std::size_t>(items[i], key);
  } else {
    target = parse_scalar<T>(raw, key);
  }
}

// --- field table ----------------------------------------------------------------

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> render;
  std::function<void(RunConfig&, const std::string&)> assign;
};

template <class Acc>
Field make_field(std::string key, Acc acc) {
  using T = std::remove_reference_t<decltype(acc(std::declval<RunConfig&>()))>;
  Field f;
  f.key = key;
  // The accessor yields a mutable reference; rendering only reads through it.
  f.render = [acc](const RunConfig& c) { return render_value<T>(acc(const_cast<RunConfig&>(c))); };
  f.assign = [acc, key = std::move(key)](RunConfig& c, const std::string& raw) {
    assign_value<T>(acc(c), raw, key);
  };
  return f;
}

const std::vector<Field>& field_table() {
  auto f = [](std::string key, auto acc) { return make_field(std::move(key), acc); };
  static const std::vector<Field> kFields = {
      f("run.seed", [](RunConfig& c) -> auto& { return c.seed; }),
      f("run.jobs", [](RunConfig& c) -> auto& { return c.jobs; }),
      f("run.out", [](RunConfig& c) -> auto& { return c.out; }),
      f("run.format", [](RunConfig& c) -> auto& { return c.format; }),
      f("run.inputs", [](RunConfig& c) -> auto& { return c.inputs; }),

      f("synth.kind", [](RunConfig& c) -> auto& { return c.synth.kind; }),
      f("synth.count", [](RunConfig& c) -> auto& { return c.synth.count; }),
      f("synth.dims", [](RunConfig& c) -> auto& { return c.synth.dims; }),
      f("synth.noise_sigma", [](RunConfig& c) -> auto& { return c.synth.noise_sigma; }),

      f("preprocess.modality", [](RunConfig& c) -> auto& { return c.preprocess.modality; }),
      f("preprocess.clamp_lo", [](RunConfig& c) -> auto& { return c.preprocess.clamp_lo; }),
      f("preprocess.clamp_hi", [](RunConfig& c) -> auto& { return c.preprocess.clamp_hi; }),
      f("preprocess.gad_iterations",
        [](RunConfig& c) -> auto& { return c.preprocess.gad_iterations; }),
      f("preprocess.gad_time_step",
        [](RunConfig& c) -> auto& { return c.preprocess.gad_time_step; }),
      f("preprocess.gad_conductance",
        [](RunConfig& c) -> auto& { return c.preprocess.gad_conductance; }),
      f("preprocess.crop_fraction",
        [](RunConfig& c) -> auto& { return c.preprocess.crop_fraction; }),
      f("preprocess.crop_anchor", [](RunConfig& c) -> auto& { return c.preprocess.crop_anchor; }),
      f("preprocess.target_dims", [](RunConfig& c) -> auto& { return c.preprocess.target_dims; }),

      f("augment.noise_sigma_max",
        [](RunConfig& c) -> auto& { return c.augment.noise_sigma_max; }),
      f("augment.rotation_range_deg",
        [](RunConfig& c) -> auto& { return c.augment.rotation_range_deg; }),
      f("augment.flip_enabled", [](RunConfig& c) -> auto& { return c.augment.flip_enabled; }),
      f("augment.flip_axis", [](RunConfig& c) -> auto& { return c.augment.flip_axis; }),

      f("net.kind", [](RunConfig& c) -> auto& { return c.net.kind; }),
      f("net.input_dims", [](RunConfig& c) -> auto& { return c.net.input_dims; }),
      f("net.channel_widths", [](RunConfig& c) -> auto& { return c.net.channel_widths; }),
      f("net.kernel_size", [](RunConfig& c) -> auto& { return c.net.kernel_size; }),
      f("net.pool_factor", [](RunConfig& c) -> auto& { return c.net.pool_factor; }),
      f("net.dropout_rate", [](RunConfig& c) -> auto& { return c.net.dropout_rate; }),
      f("net.patch_size", [](RunConfig& c) -> auto& { return c.net.patch_size; }),
      f("net.embed_dim", [](RunConfig& c) -> auto& { return c.net.embed_dim; }),
      f("net.heads", [](RunConfig& c) -> auto& { return c.net.heads; }),
      f("net.depth", [](RunConfig& c) -> auto& { return c.net.depth; }),

      f("train.learning_rate", [](RunConfig& c) -> auto& { return c.train.learning_rate; }),
      f("train.epochs", [](RunConfig& c) -> auto& { return c.train.epochs; }),
      f("train.steps_per_epoch", [](RunConfig& c) -> auto& { return c.train.steps_per_epoch; }),
      f("train.dropout_rate", [](RunConfig& c) -> auto& { return c.train.dropout_rate; }),
      f("train.epsilon", [](RunConfig& c) -> auto& { return c.train.epsilon; }),
      f("train.freeze_prefix", [](RunConfig& c) -> auto& { return c.train.freeze_prefix; }),
      f("train.init_checkpoint", [](RunConfig& c) -> auto& { return c.train.init_checkpoint; }),

      f("staple.init_sensitivity",
        [](RunConfig& c) -> auto& { return c.staple.init_sensitivity; }),
      f("staple.init_specificity",
        [](RunConfig& c) -> auto& { return c.staple.init_specificity; }),
      f("staple.prior", [](RunConfig& c) -> auto& { return c.staple.prior; }),
      f("staple.tol", [](RunConfig& c) -> auto& { return c.staple.tol; }),
      f("staple.max_iter", [](RunConfig& c) -> auto& { return c.staple.max_iter; }),
      f("staple.threshold", [](RunConfig& c) -> auto& { return c.staple.threshold; }),

      f("metrics.task_label", [](RunConfig& c) -> auto& { return c.metrics.task_label; }),
      f("metrics.model", [](RunConfig& c) -> auto& { return c.metrics.model; }),
      f("metrics.reference", [](RunConfig& c) -> auto& { return c.metrics.reference; }),
      f("metrics.hausdorff_mode",
        [](RunConfig& c) -> auto& { return c.metrics.hausdorff_mode; }),
      f("metrics.full_mask", [](RunConfig& c) -> auto& { return c.metrics.full_mask; }),
      f("metrics.ssim_window_sigma",
        [](RunConfig& c) -> auto& { return c.metrics.ssim_window_sigma; }),
      f("metrics.ssim_window_radius",
        [](RunConfig& c) -> auto& { return c.metrics.ssim_window_radius; }),
      f("metrics.ssim_k1", [](RunConfig& c) -> auto& { return c.metrics.ssim_k1; }),
      f("metrics.ssim_k2", [](RunConfig& c) -> auto& { return c.metrics.ssim_k2; }),
      f("metrics.ssim_luminance_range",
        [](RunConfig& c) -> auto& { return c.metrics.ssim_luminance_range; }),

      f("predict.checkpoint", [](RunConfig& c) -> auto& { return c.predict.checkpoint; }),
      f("predict.threshold", [](RunConfig& c) -> auto& { return c.predict.threshold; }),

      f("gridsearch.epochs", [](RunConfig& c) -> auto& { return c.gridsearch.epochs; }),
      f("gridsearch.steps_per_epoch",
        [](RunConfig& c) -> auto& { return c.gridsearch.steps_per_epoch; }),
      f("gridsearch.learning_rates",
        [](RunConfig& c) -> auto& { return c.gridsearch.learning_rates; }),
      f("gridsearch.dropout_rates",
        [](RunConfig& c) -> auto& { return c.gridsearch.dropout_rates; }),
      f("gridsearch.frozen_layers",
        [](RunConfig& c) -> auto& { return c.gridsearch.frozen_layers; }),
      f("gridsearch.budget", [](RunConfig& c) -> auto& { return c.gridsearch.budget; }),
      f("gridsearch.validation", [](RunConfig& c) -> auto& { return c.gridsearch.validation; }),
  };
  return kFields;
}

const Field* find_field(const std::string& key) {
  static const std::unordered_map<std::string, const Field*> kIndex = [] {
    std::unordered_map<std::string, const Field*> m;
    for (const Field& f : field_table()) m.emplace(f.key, &f);
    return m;
  }();
  auto it = kIndex.find(key);
  return it == kIndex.end() ? nullptr : it->second;
}

bool known_section(const std::string& name) {
  for (const Field& f : field_table()) {
    if (f.key.size() > name.size() && f.key.compare(0, name.size(), name) == 0 &&
        f.key[name.size()] == '.') {
      return true;
    }
  }
  return false;
}

std::string strip_comment(const std::string& line) {
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_quotes = !in_quotes;
    if (line[i] == '#' && !in_quotes) return line.substr(0, i);
  }
  return line;
}

// Validation helpers ------------------------------------------------------------

void require(bool ok, const std::string& key, const char* message) {
  if (!ok) throw ConfigError("key \"" + key + "\": " + message);
}

// Runs a module-level validate() and prefixes its complaint with the section,
// so the user can find the offending keys.
template <class F>
void check_section(const char* section, F&& body) {
  try {
    body();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("[") + section + "] " + e.what());
  }
}

}  // namespace

// --- section converters ----------------------------------------------------------

PreprocessConfig RunConfig::PreprocessSection::to_config() const {
  PreprocessConfig out;
  out.clamp_lo = clamp_lo;
  out.clamp_hi = clamp_hi;
  out.gad_iterations = gad_iterations;
  out.gad_time_step = gad_time_step;
  out.gad_conductance = gad_conductance;
  out.crop_fraction = crop_fraction;
  if (crop_anchor == "centered") {
    out.crop_anchor = CropAnchor::centered;
  } else if (crop_anchor == "anterior_superior") {
    out.crop_anchor = CropAnchor::anterior_superior;
  } else {
    throw ConfigError("key \"preprocess.crop_anchor\": expected centered or anterior_superior, got \"" +
                      crop_anchor + "\"");
  }
  out.target_dims = target_dims;
  return out;
}

AugmentSpec RunConfig::AugmentSection::to_spec(std::uint64_t seed) const {
  AugmentSpec out;
  out.noise_sigma_max = noise_sigma_max;
  out.rotation_range_deg = rotation_range_deg;
  out.flip_enabled = flip_enabled;
  if (flip_axis == "left_right") {
    out.flip_axis = FlipAxis::left_right;
  } else if (flip_axis == "anterior_posterior") {
    out.flip_axis = FlipAxis::anterior_posterior;
  } else if (flip_axis == "superior_inferior") {
    out.flip_axis = FlipAxis::superior_inferior;
  } else {
    throw ConfigError(
        "key \"augment.flip_axis\": expected left_right, anterior_posterior, or superior_inferior, "
        "got \"" +
        flip_axis + "\"");
  }
  out.seed = seed;
  return out;
}

NetConfig RunConfig::NetSection::to_config(std::uint64_t seed) const {
  NetConfig out;
  try {
    out.kind = net_kind_from_string(kind);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("key \"net.kind\": ") + e.what());
  }
  out.input_dims = input_dims;
  out.channel_widths = channel_widths;
  out.kernel_size = kernel_size;
  out.pool_factor = pool_factor;
  out.dropout_rate = dropout_rate;
  out.patch_size = patch_size;
  out.embed_dim = embed_dim;
  out.heads = heads;
  out.depth = depth;
  out.seed = seed;
  return out;
}

TrainConfig RunConfig::TrainSection::to_config(std::uint64_t seed) const {
  TrainConfig out;
  out.learning_rate = learning_rate;
  out.epochs = epochs;
  out.steps_per_epoch = steps_per_epoch;
  out.dropout_rate = dropout_rate;
  out.epsilon = epsilon;
  out.seed = seed;
  return out;
}

StapleConfig RunConfig::StapleSection::to_config() const {
  StapleConfig out;
  out.init = RaterPerformance{init_sensitivity, init_specificity};
  if (prior >= 0.0) out.prior = prior;
  out.tol = tol;
  out.max_iter = max_iter;
  return out;
}

SsimParams RunConfig::MetricsSection::to_ssim_params() const {
  SsimParams out;
  out.window_sigma = ssim_window_sigma;
  out.window_radius = ssim_window_radius;
  out.k1 = ssim_k1;
  out.k2 = ssim_k2;
  out.luminance_range = ssim_luminance_range;
  return out;
}

HausdorffMode RunConfig::MetricsSection::to_hausdorff_mode() const {
  if (hausdorff_mode == "fast") return HausdorffMode::fast;
  if (hausdorff_mode == "naive") return HausdorffMode::naive;
  throw ConfigError("key \"metrics.hausdorff_mode\": expected fast or naive, got \"" +
                    hausdorff_mode + "\"");
}

// --- validation ------------------------------------------------------------------

void RunConfig::validate() const {
  require(jobs >= 1, "run.jobs", "must be >= 1");
  require(format == "csv" || format == "json" || format == "markdown", "run.format",
          "must be csv, json, or markdown");

  require(synth.kind == "airway" || synth.kind == "lunglike", "synth.kind",
          "must be airway or lunglike");
  require(synth.count >= 1, "synth.count", "must be >= 1");
  for (std::size_t d : synth.dims) require(d >= 8, "synth.dims", "each extent must be >= 8");
  require(synth.noise_sigma >= 0.0 && std::isfinite(synth.noise_sigma), "synth.noise_sigma",
          "must be finite and >= 0");

  require(preprocess.modality == "ct" || preprocess.modality == "mri", "preprocess.modality",
          "must be ct or mri");
  check_section("preprocess", [&] { preprocess.to_config().validate(); });
  check_section("augment", [&] { augment.to_spec(seed).validate(); });
  check_section("net", [&] { net.to_config(seed).validate(); });
  check_section("train", [&] { train.to_config(seed).validate(); });

  require(staple.prior < 1.0, "staple.prior", "must be < 1 (negative = derive from raters)");
  require(staple.threshold >= 0.0 && staple.threshold <= 1.0, "staple.threshold",
          "must be in [0, 1]");
  check_section("staple", [&] { staple.to_config().validate(); });

  check_section("metrics", [&] { metrics.to_hausdorff_mode(); });
  require(metrics.ssim_window_sigma > 0.0, "metrics.ssim_window_sigma", "must be > 0");
  require(metrics.ssim_window_radius >= 1, "metrics.ssim_window_radius", "must be >= 1");
  require(metrics.ssim_k1 > 0.0, "metrics.ssim_k1", "must be > 0");
  require(metrics.ssim_k2 > 0.0, "metrics.ssim_k2", "must be > 0");
  require(metrics.ssim_luminance_range > 0.0, "metrics.ssim_luminance_range", "must be > 0");

  require(predict.threshold >= 0.0 && predict.threshold <= 1.0, "predict.threshold",
          "must be in [0, 1]");

  check_section("gridsearch", [&] { gridsearch.to_spec().validate(); });
  for (int e : gridsearch.epochs) require(e >= 1, "gridsearch.epochs", "entries must be >= 1");
  for (int s : gridsearch.steps_per_epoch)
    require(s >= 1, "gridsearch.steps_per_epoch", "entries must be >= 1");
}

GridSpec RunConfig::GridSection::to_spec() const {
  GridSpec out;
  out.epochs = epochs;
  out.steps_per_epoch = steps_per_epoch;
  out.learning_rates = learning_rates;
  out.dropout_rates = dropout_rates;
  out.frozen_layers = frozen_layers;
  return out;
}

// --- parsing / printing ------------------------------------------------------------

void set_config_value(RunConfig& cfg, const std::string& dotted_key, const std::string& value) {
  const Field* field = find_field(dotted_key);
  if (!field) throw ConfigError("unknown key \"" + dotted_key + "\"");
  field->assign(cfg, trim(value));
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream stream(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    std::string body = trim(strip_comment(line));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      }
      section = trim(body.substr(1, body.size() - 2));
      if (!known_section(section)) {
        throw ConfigError("line " + std::to_string(line_no) + ": unknown section \"" + section +
                          "\"");
      }
      continue;
    }
    std::size_t eq = std::string::npos;
    bool in_quotes = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (body[i] == '"') in_quotes = !in_quotes;
      if (body[i] == '=' && !in_quotes) {
        eq = i;
        break;
      }
    }
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value, got \"" +
                        body + "\"");
    }
    std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": key \"" + key +
                        "\" appears outside any [section]");
    }
    set_config_value(cfg, section + "." + key, value);
  }
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  apply_config_text(cfg, text);
  return cfg;
}

std::string print_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const Field& f : field_table()) {
    std::string sec = f.key.substr(0, f.key.find('.'));
    if (sec != section) {
      if (!out.empty()) out += '\n';
      out += '[' + sec + "]\n";
      section = sec;
    }
    out += f.key.substr(sec.size() + 1) + " = " + f.render(cfg) + '\n';
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : field_table()) keys.push_back(f.key);
  return keys;
}

}  // namespace vtseg
