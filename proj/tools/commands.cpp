#include "commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "vtseg/augment.hpp"
#include "vtseg/config.hpp"
#include "vtseg/hash.hpp"
#include "vtseg/manifest.hpp"
#include "vtseg/metrics.hpp"
#include "vtseg/nets.hpp"
#include "vtseg/nrrd.hpp"
#include "vtseg/preprocess.hpp"
#include "vtseg/report.hpp"
#include "vtseg/rng.hpp"
#include "vtseg/staple.hpp"
#include "vtseg/synth.hpp"
#include "vtseg/version.hpp"
#include "vtseg/volume.hpp"

namespace vtseg::cli {

namespace fs = std::filesystem;

namespace {

// --- small utilities ---------------------------------------------------------

std::string render_num(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

double parse_num(const std::string& raw, const std::string& context) {
  double v{};
  auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc() || p != raw.data() + raw.size()) {
    throw std::runtime_error(context + ": expected a number, got \"" + raw + "\"");
  }
  return v;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_quotes) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

// Runs body(0..n-1) on up to `jobs` worker threads. Each index writes only
// its own outputs, so results are identical for every worker count; the
// first exception wins and is rethrown on the calling thread.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body) {
  std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// --- run context ---------------------------------------------------------------

struct Ctx {
  RunConfig cfg;
  std::string sub;
  fs::path out;
  std::vector<std::pair<std::string, std::string>> input_digests;
  std::vector<std::pair<std::string, std::string>> output_digests;
  std::set<std::string> input_canonical;  // guards against overwriting inputs
  nlohmann::json details;
};

fs::path must_exist(const std::string& path, const char* what) {
  fs::path p(path);
  if (!fs::exists(p)) {
    throw MissingInputError(std::string(what) + " does not exist: " + path);
  }
  return p;
}

void note_input(Ctx& ctx, const fs::path& p) {
  ctx.input_digests.emplace_back(p.string(), sha256_file_hex(p));
  std::error_code ec;
  fs::path canon = fs::weakly_canonical(p, ec);
  ctx.input_canonical.insert(ec ? p.string() : canon.string());
}

// Resolves an output file path, refusing to clobber any consumed input
// (subcommands never modify their inputs).
fs::path out_path(const Ctx& ctx, const std::string& name) {
  fs::path p = ctx.out / name;
  std::error_code ec;
  fs::path canon = fs::weakly_canonical(p, ec);
  if (ctx.input_canonical.count(ec ? p.string() : canon.string())) {
    throw ConfigError("output \"" + p.string() +
                      "\" would overwrite an input; choose a different --out");
  }
  return p;
}

void note_output(Ctx& ctx, const fs::path& p) {
  ctx.output_digests.emplace_back(p.filename().string(), sha256_file_hex(p));
}

void write_text_output(Ctx& ctx, const std::string& name, const std::string& text) {
  fs::path p = out_path(ctx, name);
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + p.string());
  out << text;
  out.close();
  if (!out) throw std::runtime_error("failed writing: " + p.string());
  note_output(ctx, p);
}

void write_run_manifest(Ctx& ctx) {
  Manifest m;
  m.tool = std::string(kToolName) + " " + kToolVersion;
  m.subcommand = ctx.sub;
  m.seed = ctx.cfg.seed;
  RunConfig snapshot = ctx.cfg;
  snapshot.jobs = 1;  // execution detail, not provenance
  snapshot.out.clear();
  m.config = print_config(snapshot);
  m.inputs = ctx.input_digests;
  m.outputs = ctx.output_digests;
  m.details = ctx.details;
  write_manifest(m, ctx.out / ("manifest_" + ctx.sub + ".json"));
}

// --- input discovery -------------------------------------------------------------

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// "phantom_000_img" -> "phantom_000"; unsuffixed stems pass through.
std::string id_of(const fs::path& p) {
  std::string stem = p.stem().string();
  for (const char* suffix : {"_img", "_lbl", "_pred", "_prob"}) {
    if (ends_with(stem, suffix)) return stem.substr(0, stem.size() - std::string(suffix).size());
  }
  return stem;
}

std::vector<fs::path> sorted_dir_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return files;
}

// Expands the input list: explicit files are taken as-is; directories
// contribute their *.nrrd files accepted by `keep` (sorted by filename).
std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs,
                                    const std::function<bool(const std::string&)>& keep,
                                    const char* what) {
  if (inputs.empty()) {
    throw ConfigError(std::string("no inputs given; pass ") + what +
                      " as arguments or set run.inputs");
  }
  std::vector<fs::path> files;
  for (const std::string& input : inputs) {
    fs::path p = must_exist(input, "input");
    if (fs::is_directory(p)) {
      std::size_t before = files.size();
      for (const fs::path& f : sorted_dir_files(p)) {
        std::string name = f.filename().string();
        if (ends_with(name, ".nrrd") && keep(name)) files.push_back(f);
      }
      if (files.size() == before) {
        throw MissingInputError("no matching .nrrd files (" + std::string(what) + ") in directory: " +
                                p.string());
      }
    } else {
      files.push_back(p);
    }
  }
  return files;
}

bool any_nrrd(const std::string&) { return true; }
bool image_nrrd(const std::string& name) {
  return !ends_with(name, "_lbl.nrrd") && !ends_with(name, "_pred.nrrd") &&
         !ends_with(name, "_prob.nrrd");
}
bool pred_nrrd(const std::string& name) { return ends_with(name, "_pred.nrrd"); }
bool label_nrrd(const std::string& name) { return ends_with(name, "_lbl.nrrd"); }

struct PairPaths {
  std::string id;
  fs::path image;
  fs::path label;
};

// Pairs <id>_img.nrrd with <id>_lbl.nrrd, sorted by id.
std::vector<PairPaths> find_pairs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> images =
      expand_inputs(inputs, [](const std::string& n) { return ends_with(n, "_img.nrrd"); },
                    "<id>_img.nrrd/<id>_lbl.nrrd pairs");
  std::vector<PairPaths> pairs;
  std::set<std::string> seen;
  for (const fs::path& img : images) {
    PairPaths pp;
    pp.id = id_of(img);
    pp.image = img;
    pp.label = img.parent_path() / (pp.id + "_lbl.nrrd");
    if (!fs::exists(pp.label)) {
      throw MissingInputError("no label for sample \"" + pp.id + "\": expected " +
                              pp.label.string());
    }
    if (!seen.insert(pp.id).second) {
      throw std::runtime_error("duplicate sample id \"" + pp.id + "\" across inputs");
    }
    pairs.push_back(std::move(pp));
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const PairPaths& a, const PairPaths& b) { return a.id < b.id; });
  return pairs;
}

std::vector<SamplePair> load_pairs(Ctx& ctx, const std::vector<std::string>& inputs) {
  std::vector<PairPaths> paths = find_pairs(inputs);
  std::vector<SamplePair> pairs;
  pairs.reserve(paths.size());
  for (const PairPaths& pp : paths) {
    note_input(ctx, pp.image);
    note_input(ctx, pp.label);
    pairs.push_back(SamplePair{pp.id, read_volume(pp.image), read_label(pp.label)});
  }
  return pairs;
}

const char* flip_axis_name(FlipAxis axis) {
  switch (axis) {
    case FlipAxis::left_right: return "left_right";
    case FlipAxis::anterior_posterior: return "anterior_posterior";
    case FlipAxis::superior_inferior: return "superior_inferior";
  }
  return "left_right";
}

// --- subcommands -----------------------------------------------------------------

void run_synth(Ctx& ctx) {
  const auto& sc = ctx.cfg.synth;
  std::size_t n = static_cast<std::size_t>(sc.count);
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "phantom_%03zu", i);
    ids[i] = buf;
  }
  parallel_for(n, ctx.cfg.jobs, [&](std::size_t i) {
    std::uint64_t seed_i = derive_seed(ctx.cfg.seed, i);
    Volume image;
    LabelMap label;
    if (sc.kind == "airway") {
      PhantomSpec spec = random_airway_spec(sc.dims, seed_i);
      spec.noise_sigma = sc.noise_sigma;
      std::tie(image, label) = make_airway_phantom(spec);
    } else {
      LungPhantomSpec spec = random_lunglike_spec(sc.dims, seed_i);
      spec.noise_sigma = sc.noise_sigma;
      std::tie(image, label) = make_lunglike_phantom(spec);
    }
    write_nrrd(image, out_path(ctx, ids[i] + "_img.nrrd"));
    write_nrrd(label, out_path(ctx, ids[i] + "_lbl.nrrd"));
  });
  for (const std::string& id : ids) {
    note_output(ctx, ctx.out / (id + "_img.nrrd"));
    note_output(ctx, ctx.out / (id + "_lbl.nrrd"));
  }
  ctx.details = {{"kind", sc.kind}, {"count", sc.count}};
}

void run_preprocess(Ctx& ctx) {
  std::vector<fs::path> files = expand_inputs(ctx.cfg.inputs, image_nrrd, "volumes");
  PreprocessConfig pc = ctx.cfg.preprocess.to_config();
  bool mri = ctx.cfg.preprocess.modality == "mri";
  struct Item {
    std::string id;
    fs::path image;
    std::optional<fs::path> label;
  };
  std::vector<Item> items;
  for (const fs::path& f : files) {
    Item item{id_of(f), f, std::nullopt};
    fs::path sibling = f.parent_path() / (item.id + "_lbl.nrrd");
    if (fs::exists(sibling)) item.label = sibling;
    note_input(ctx, f);
    if (item.label) note_input(ctx, *item.label);
    items.push_back(std::move(item));
  }
  parallel_for(items.size(), ctx.cfg.jobs, [&](std::size_t i) {
    const Item& item = items[i];
    Volume v = read_volume(item.image);
    Volume processed = mri ? preprocess_mri(v, pc) : preprocess_ct(v, pc);
    write_nrrd(processed, out_path(ctx, item.id + "_img.nrrd"));
    if (item.label) {
      // Carry the paired label through the geometric steps of the chain so
      // the output directory is a ready training dataset.
      LabelMap lbl = read_label(*item.label);
      if (mri) lbl = crop_fraction(lbl, pc.crop_fraction, pc.crop_anchor);
      lbl = resample(lbl, pc.target_dims, ResampleMode::nearest);
      write_nrrd(lbl, out_path(ctx, item.id + "_lbl.nrrd"));
    }
  });
  for (const Item& item : items) {
    note_output(ctx, ctx.out / (item.id + "_img.nrrd"));
    if (item.label) note_output(ctx, ctx.out / (item.id + "_lbl.nrrd"));
  }
  ctx.details = {{"modality", ctx.cfg.preprocess.modality},
                 {"volumes", items.size()}};
}

void run_augment(Ctx& ctx) {
  std::vector<SamplePair> pairs = load_pairs(ctx, ctx.cfg.inputs);
  AugmentSpec spec = ctx.cfg.augment.to_spec(ctx.cfg.seed);
  std::vector<AugmentRecord> records;
  std::vector<SamplePair> expanded = augment_dataset(pairs, spec, &records);
  parallel_for(expanded.size(), ctx.cfg.jobs, [&](std::size_t i) {
    const SamplePair& p = expanded[i];
    write_nrrd(p.image, out_path(ctx, p.id + "_img.nrrd"));
    write_nrrd(p.label, out_path(ctx, p.id + "_lbl.nrrd"));
  });
  for (const SamplePair& p : expanded) {
    note_output(ctx, ctx.out / (p.id + "_img.nrrd"));
    note_output(ctx, ctx.out / (p.id + "_lbl.nrrd"));
  }
  nlohmann::json draws = nlohmann::json::array();
  for (const AugmentRecord& r : records) {
    draws.push_back({{"id", r.id},
                     {"kind", r.kind},
                     {"sigma", r.sigma},
                     {"angle_deg", r.angle_deg},
                     {"axis", flip_axis_name(r.axis)}});
  }
  ctx.details = {{"inputs", pairs.size()},
                 {"outputs", expanded.size()},
                 {"augmentations", draws}};
}

void run_staple(Ctx& ctx) {
  std::vector<fs::path> files = expand_inputs(ctx.cfg.inputs, any_nrrd, "rater masks");
  if (files.size() < 2) {
    throw ConfigError("staple needs at least two rater masks, got " +
                      std::to_string(files.size()));
  }
  RaterStack stack;
  stack.volume_id = "staple";
  for (const fs::path& f : files) {
    note_input(ctx, f);
    stack.raters.push_back(read_label(f));
  }
  StapleResult result = staple_em(stack, ctx.cfg.staple.to_config());
  write_nrrd(probability_map(result), out_path(ctx, "staple_prob.nrrd"));
  note_output(ctx, ctx.out / "staple_prob.nrrd");
  write_nrrd(consensus(result, ctx.cfg.staple.threshold), out_path(ctx, "staple_consensus.nrrd"));
  note_output(ctx, ctx.out / "staple_consensus.nrrd");

  nlohmann::json performances = nlohmann::json::array();
  for (std::size_t j = 0; j < result.performances.size(); ++j) {
    performances.push_back({{"rater", files[j].filename().string()},
                            {"sensitivity", result.performances[j].sensitivity},
                            {"specificity", result.performances[j].specificity}});
  }
  nlohmann::json sidecar = {{"prior", result.prior},
                            {"iterations", result.iterations},
                            {"converged", result.converged},
                            {"threshold", ctx.cfg.staple.threshold},
                            {"performances", performances},
                            {"trace", result.trace}};
  write_text_output(ctx, "staple_result.json", sidecar.dump(2) + "\n");
  ctx.details = {{"raters", files.size()},
                 {"iterations", result.iterations},
                 {"converged", result.converged},
                 {"prior", result.prior}};
}

NetState initial_net(Ctx& ctx) {
  if (!ctx.cfg.train.init_checkpoint.empty()) {
    fs::path ckpt = must_exist(ctx.cfg.train.init_checkpoint, "checkpoint");
    note_input(ctx, ckpt);
    return load_checkpoint(ckpt.string());
  }
  return build_net(ctx.cfg.net.to_config(ctx.cfg.seed));
}

void write_history_csv(Ctx& ctx, const std::vector<double>& history) {
  std::string csv = "step,loss\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    csv += std::to_string(i + 1) + "," + render_num(history[i]) + "\n";
  }
  write_text_output(ctx, "history.csv", csv);
}

void run_train(Ctx& ctx) {
  std::vector<SamplePair> dataset = load_pairs(ctx, ctx.cfg.inputs);
  NetState net = initial_net(ctx);
  if (ctx.cfg.train.freeze_prefix > 0) {
    try {
      net = freeze_prefix(std::move(net), ctx.cfg.train.freeze_prefix);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("key \"train.freeze_prefix\": ") + e.what());
    }
  }
  TrainResult result = train(std::move(net), dataset, ctx.cfg.train.to_config(ctx.cfg.seed));
  fs::path ckpt = out_path(ctx, "checkpoint.vtck");
  save_checkpoint(result.net, ckpt.string());
  note_output(ctx, ckpt);
  write_history_csv(ctx, result.history);
  ctx.details = {{"samples", dataset.size()},
                 {"steps", result.history.size()},
                 {"final_loss", result.history.empty() ? 0.0 : result.history.back()},
                 {"frozen_layers", ctx.cfg.train.freeze_prefix}};
}

void run_predict(Ctx& ctx) {
  if (ctx.cfg.predict.checkpoint.empty()) {
    throw ConfigError("key \"predict.checkpoint\": required (path to a trained checkpoint)");
  }
  fs::path ckpt = must_exist(ctx.cfg.predict.checkpoint, "checkpoint");
  note_input(ctx, ckpt);
  NetState net = load_checkpoint(ckpt.string());
  std::vector<fs::path> files = expand_inputs(ctx.cfg.inputs, image_nrrd, "volumes");
  std::vector<std::string> ids(files.size());
  for (std::size_t i = 0; i < files.size(); ++i) {
    ids[i] = id_of(files[i]);
    note_input(ctx, files[i]);
  }
  double threshold = ctx.cfg.predict.threshold;
  parallel_for(files.size(), ctx.cfg.jobs, [&](std::size_t i) {
    Volume v = read_volume(files[i]);
    LabelMap pred = net.config.kind == NetKind::unet2d ? predict_slicewise(net, v, threshold)
                                                       : predict_volume(net, v, threshold);
    write_nrrd(pred, out_path(ctx, ids[i] + "_pred.nrrd"));
  });
  for (const std::string& id : ids) note_output(ctx, ctx.out / (id + "_pred.nrrd"));
  ctx.details = {{"volumes", files.size()},
                 {"threshold", threshold},
                 {"network", to_string(net.config.kind)}};
}

constexpr const char* kRecordsHeader =
    "volume_id,task_label,model,dice,hd,hd_units,hd_defined,ssim";

std::string record_csv_row(const LabeledRecord& lr) {
  const MetricRecord& r = lr.record;
  return csv_field(r.volume_id) + "," + csv_field(r.task_label) + "," + csv_field(lr.model) +
         "," + render_num(r.dice) + "," + render_num(r.hd) + "," + csv_field(r.hd_units) + "," +
         (r.hd_defined ? "true" : "false") + "," + render_num(r.ssim);
}

void run_eval(Ctx& ctx) {
  if (ctx.cfg.metrics.reference.empty()) {
    throw ConfigError("key \"metrics.reference\": required (reference labels for eval)");
  }
  std::vector<fs::path> preds = expand_inputs(ctx.cfg.inputs, pred_nrrd, "predicted masks");
  std::vector<fs::path> refs =
      expand_inputs({ctx.cfg.metrics.reference}, label_nrrd, "reference labels");
  std::map<std::string, fs::path> ref_by_id;
  for (const fs::path& r : refs) ref_by_id[id_of(r)] = r;

  struct Item {
    std::string id;
    fs::path pred;
    fs::path ref;
  };
  std::vector<Item> items;
  for (const fs::path& p : preds) {
    std::string id = id_of(p);
    auto it = ref_by_id.find(id);
    if (it == ref_by_id.end()) {
      throw MissingInputError("no reference label for volume \"" + id + "\" in " +
                              ctx.cfg.metrics.reference);
    }
    note_input(ctx, p);
    note_input(ctx, it->second);
    items.push_back({id, p, it->second});
  }

  HausdorffMode mode = ctx.cfg.metrics.to_hausdorff_mode();
  SsimParams ssim_params = ctx.cfg.metrics.to_ssim_params();
  std::vector<LabeledRecord> records(items.size());
  parallel_for(items.size(), ctx.cfg.jobs, [&](std::size_t i) {
    LabelMap pred = read_label(items[i].pred);
    LabelMap ref = read_label(items[i].ref);
    assert_compatible(pred.meta, ref.meta);
    MetricRecord rec;
    rec.volume_id = items[i].id;
    rec.task_label = ctx.cfg.metrics.task_label;
    rec.dice = dice(pred, ref);
    rec.ssim = ssim3d(pred, ref, ssim_params);
    const auto& sp = pred.meta.spacing;
    rec.hd_units = (sp[0] == 1.0 && sp[1] == 1.0 && sp[2] == 1.0) ? "voxel" : "mm";
    try {
      rec.hd = hausdorff(pred, ref, mode, ctx.cfg.metrics.full_mask);
      rec.hd_defined = true;
    } catch (const UndefinedMetric&) {
      rec.hd = 0.0;
      rec.hd_defined = false;
    }
    records[i] = LabeledRecord{ctx.cfg.metrics.model, std::move(rec)};
  });
  std::sort(records.begin(), records.end(), [](const LabeledRecord& a, const LabeledRecord& b) {
    return a.record.volume_id < b.record.volume_id;
  });
  std::string csv = std::string(kRecordsHeader) + "\n";
  for (const LabeledRecord& lr : records) csv += record_csv_row(lr) + "\n";
  write_text_output(ctx, "records.csv", csv);
  ctx.details = {{"records", records.size()}, {"model", ctx.cfg.metrics.model}};
}

std::vector<LabeledRecord> read_records_csv(Ctx& ctx, const fs::path& path) {
  note_input(ctx, path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open records file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kRecordsHeader) {
    throw std::runtime_error("records file " + path.string() + ": expected header \"" +
                             kRecordsHeader + "\"");
  }
  std::vector<LabeledRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    std::string where = "records file " + path.string() + " line " + std::to_string(line_no);
    if (f.size() != 8) {
      throw std::runtime_error(where + ": expected 8 fields, got " + std::to_string(f.size()));
    }
    LabeledRecord lr;
    lr.record.volume_id = f[0];
    lr.record.task_label = f[1];
    lr.model = f[2];
    lr.record.dice = parse_num(f[3], where);
    lr.record.hd = parse_num(f[4], where);
    lr.record.hd_units = f[5];
    if (f[6] != "true" && f[6] != "false") {
      throw std::runtime_error(where + ": hd_defined must be true or false");
    }
    lr.record.hd_defined = f[6] == "true";
    lr.record.ssim = parse_num(f[7], where);
    records.push_back(std::move(lr));
  }
  return records;
}

void run_report(Ctx& ctx) {
  if (ctx.cfg.inputs.empty()) {
    throw ConfigError("no inputs given; pass records.csv files or set run.inputs");
  }
  std::vector<fs::path> files;
  for (const std::string& input : ctx.cfg.inputs) {
    fs::path p = must_exist(input, "records file");
    if (fs::is_directory(p)) {
      std::size_t before = files.size();
      for (const fs::path& f : sorted_dir_files(p)) {
        if (ends_with(f.filename().string(), ".csv")) files.push_back(f);
      }
      if (files.size() == before) {
        throw MissingInputError("no .csv records in directory: " + p.string());
      }
    } else {
      files.push_back(p);
    }
  }
  std::vector<LabeledRecord> all;
  for (const fs::path& f : files) {
    std::vector<LabeledRecord> part = read_records_csv(ctx, f);
    all.insert(all.end(), part.begin(), part.end());
  }
  if (all.empty()) throw std::runtime_error("no metric records found in the given files");

  std::map<std::string, std::vector<MetricRecord>> by_model;
  for (const LabeledRecord& lr : all) by_model[lr.model].push_back(lr.record);
  std::vector<AggregateRow> rows;
  for (const auto& [model, records] : by_model) rows.push_back(aggregate(records, model));

  ReportFormat format = ReportFormat::csv;
  std::string filename = "report.csv";
  if (ctx.cfg.format == "json") {
    format = ReportFormat::json;
    filename = "report.json";
  } else if (ctx.cfg.format == "markdown") {
    format = ReportFormat::markdown;
    filename = "report.md";
  }
  write_text_output(ctx, filename, emit_table(rows, all, format));
  ctx.details = {{"records", all.size()}, {"models", rows.size()}};
}

void run_gridsearch(Ctx& ctx) {
  std::vector<SamplePair> train_set = load_pairs(ctx, ctx.cfg.inputs);
  if (ctx.cfg.gridsearch.validation.empty()) {
    throw ConfigError("key \"gridsearch.validation\": required (validation pair directory)");
  }
  std::vector<SamplePair> val_set = load_pairs(ctx, {ctx.cfg.gridsearch.validation});
  NetState base = initial_net(ctx);
  for (std::size_t fl : ctx.cfg.gridsearch.frozen_layers) {
    if (fl > base.layer_count()) {
      throw ConfigError("key \"gridsearch.frozen_layers\": " + std::to_string(fl) +
                        " exceeds the network's " + std::to_string(base.layer_count()) +
                        " layers");
    }
  }
  GridSpec spec = ctx.cfg.gridsearch.to_spec();
  std::size_t budget =
      ctx.cfg.gridsearch.budget == 0 ? spec.cell_count() : ctx.cfg.gridsearch.budget;
  GridSearchResult result = grid_search(base, spec, train_set, val_set, budget);

  std::string csv =
      "rank,cell_index,epochs,steps_per_epoch,learning_rate,dropout_rate,frozen_layers,"
      "val_dice,final_loss\n";
  for (std::size_t r = 0; r < result.ranked.size(); ++r) {
    const GridCell& c = result.ranked[r];
    csv += std::to_string(r + 1) + "," + std::to_string(c.cell_index) + "," +
           std::to_string(c.epochs) + "," + std::to_string(c.steps_per_epoch) + "," +
           render_num(c.learning_rate) + "," + render_num(c.dropout_rate) + "," +
           std::to_string(c.frozen_layers) + "," + render_num(c.val_dice) + "," +
           render_num(c.final_loss) + "\n";
  }
  write_text_output(ctx, "gridsearch.csv", csv);
  ctx.details = {{"cells_total", spec.cell_count()},
                 {"cells_evaluated", result.evaluated},
                 {"best_val_dice", result.ranked.empty() ? 0.0 : result.ranked.front().val_dice}};
}

// --- flag plumbing ---------------------------------------------------------------

struct FlagState {
  std::string config_path;
  bool print_cfg = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
  std::optional<std::string> format;
  std::vector<std::string> inputs;

  std::optional<int> synth_count;
  std::optional<std::string> synth_kind;
  std::vector<std::size_t> synth_dims;
  std::optional<double> synth_noise;

  std::optional<std::string> modality;

  std::optional<double> staple_threshold;
  std::optional<double> staple_prior;
  std::optional<double> staple_tol;
  std::optional<int> staple_max_iter;

  std::optional<double> lr;
  std::optional<int> epochs;
  std::optional<int> steps;
  std::optional<double> dropout;
  std::optional<std::size_t> freeze;
  std::optional<std::string> init_ckpt;

  std::optional<std::string> checkpoint;
  std::optional<double> pred_threshold;

  std::optional<std::string> ref;
  std::optional<std::string> model;
  std::optional<std::string> task;

  std::optional<std::string> validation;
  std::optional<std::size_t> budget;
};

void apply_flag_overrides(RunConfig& cfg, const FlagState& fl) {
  if (fl.seed) cfg.seed = *fl.seed;
  if (fl.jobs) cfg.jobs = *fl.jobs;
  if (fl.out) cfg.out = *fl.out;
  if (fl.format) cfg.format = *fl.format;
  if (!fl.inputs.empty()) cfg.inputs = fl.inputs;

  if (fl.synth_count) cfg.synth.count = *fl.synth_count;
  if (fl.synth_kind) cfg.synth.kind = *fl.synth_kind;
  if (!fl.synth_dims.empty()) {
    cfg.synth.dims = {fl.synth_dims[0], fl.synth_dims[1], fl.synth_dims[2]};
  }
  if (fl.synth_noise) cfg.synth.noise_sigma = *fl.synth_noise;

  if (fl.modality) cfg.preprocess.modality = *fl.modality;

  if (fl.staple_threshold) cfg.staple.threshold = *fl.staple_threshold;
  if (fl.staple_prior) cfg.staple.prior = *fl.staple_prior;
  if (fl.staple_tol) cfg.staple.tol = *fl.staple_tol;
  if (fl.staple_max_iter) cfg.staple.max_iter = *fl.staple_max_iter;

  if (fl.lr) cfg.train.learning_rate = *fl.lr;
  if (fl.epochs) cfg.train.epochs = *fl.epochs;
  if (fl.steps) cfg.train.steps_per_epoch = *fl.steps;
  if (fl.dropout) cfg.train.dropout_rate = *fl.dropout;
  if (fl.freeze) cfg.train.freeze_prefix = *fl.freeze;
  if (fl.init_ckpt) cfg.train.init_checkpoint = *fl.init_ckpt;

  if (fl.checkpoint) cfg.predict.checkpoint = *fl.checkpoint;
  if (fl.pred_threshold) cfg.predict.threshold = *fl.pred_threshold;

  if (fl.ref) cfg.metrics.reference = *fl.ref;
  if (fl.model) cfg.metrics.model = *fl.model;
  if (fl.task) cfg.metrics.task_label = *fl.task;

  if (fl.validation) cfg.gridsearch.validation = *fl.validation;
  if (fl.budget) cfg.gridsearch.budget = *fl.budget;
}

fs::path resolve_out_dir(const RunConfig& cfg) {
  if (!cfg.out.empty()) return fs::path(cfg.out);
  if (const char* env = std::getenv("VTSEG_OUT"); env && *env) return fs::path(env);
  return fs::path("vtseg-out");
}

constexpr const char* kDescription =
    "Deterministic volumetric segmentation toolkit: phantom synthesis,\n"
    "preprocessing, augmentation, consensus fusion, network training,\n"
    "inference, evaluation, and reporting.";

constexpr const char* kFooter =
    "Exit codes:\n"
    "  0  success\n"
    "  1  runtime failure while executing the run\n"
    "  2  usage error: unknown subcommand or malformed flags\n"
    "  3  invalid configuration: parse error, unknown key, or out-of-range value\n"
    "  4  missing input: a named input file or directory does not exist\n"
    "\n"
    "Configuration is resolved as defaults < --config file < flags. Inspect the\n"
    "effective result with --print-config. The VTSEG_OUT environment variable\n"
    "supplies the default output directory when neither --out nor run.out is set.\n"
    "\n"
    "Every run writes manifest_<subcommand>.json into the output directory,\n"
    "recording the tool version, the effective configuration, the seed, and\n"
    "SHA-256 digests of all inputs and outputs. Rerunning with the same\n"
    "configuration and seed reproduces every artifact byte for byte, and\n"
    "results never depend on --jobs. Subcommands never modify their inputs.";

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{kDescription};
  app.name("vtseg");
  app.footer(kFooter);
  app.require_subcommand(0, 1);
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);

  FlagState fl;
  app.add_option("--config", fl.config_path, "Config file (TOML-style sections; flags win)");
  app.add_option("--seed", fl.seed, "Global seed [run.seed]");
  app.add_option("--jobs", fl.jobs, "Worker threads for per-volume work [run.jobs]");
  app.add_option("--out", fl.out, "Output directory [run.out]");
  app.add_option("--format", fl.format, "Report format: csv|json|markdown [run.format]");
  app.add_flag("--print-config", fl.print_cfg,
               "Print the effective configuration and exit");

  CLI::App* synth = app.add_subcommand(
      "synth", "Generate phantom image/label pairs (<id>_img.nrrd + <id>_lbl.nrrd)");
  synth->add_option("--count", fl.synth_count, "Number of phantoms [synth.count]");
  synth->add_option("--kind", fl.synth_kind, "airway|lunglike [synth.kind]");
  synth->add_option("--dims", fl.synth_dims, "Grid extents, 3 values [synth.dims]")
      ->expected(3);
  synth->add_option("--noise", fl.synth_noise, "Gaussian noise sigma [synth.noise_sigma]");

  CLI::App* preprocess = app.add_subcommand(
      "preprocess",
      "Run the ct/mri preprocessing chain on volumes; paired <id>_lbl.nrrd files are "
      "resampled alongside so pairs stay aligned");
  preprocess->add_option("inputs", fl.inputs, "Volume files or directories");
  preprocess->add_option("--modality", fl.modality, "ct|mri [preprocess.modality]");

  CLI::App* augment = app.add_subcommand(
      "augment", "Expand a paired dataset with noised, flipped, and rotated variants");
  augment->add_option("inputs", fl.inputs, "Dataset directories or <id>_img.nrrd files");

  CLI::App* staple = app.add_subcommand(
      "staple",
      "Fuse two or more rater masks into a probabilistic consensus "
      "(staple_prob.nrrd, staple_consensus.nrrd, staple_result.json)");
  staple->add_option("inputs", fl.inputs, "Rater mask files or a directory");
  staple->add_option("--threshold", fl.staple_threshold,
                     "Consensus mask threshold [staple.threshold]");
  staple->add_option("--prior", fl.staple_prior,
                     "Foreground prior; negative derives it from the raters [staple.prior]");
  staple->add_option("--tol", fl.staple_tol, "Convergence tolerance [staple.tol]");
  staple->add_option("--max-iter", fl.staple_max_iter, "Iteration cap [staple.max_iter]");

  CLI::App* train = app.add_subcommand(
      "train", "Train a segmentation network (checkpoint.vtck + history.csv)");
  train->add_option("inputs", fl.inputs, "Dataset directories with <id>_img/_lbl pairs");
  train->add_option("--lr", fl.lr, "Learning rate [train.learning_rate]");
  train->add_option("--epochs", fl.epochs, "Epochs [train.epochs]");
  train->add_option("--steps", fl.steps, "Steps per epoch [train.steps_per_epoch]");
  train->add_option("--dropout", fl.dropout, "Dropout rate [train.dropout_rate]");
  train->add_option("--freeze", fl.freeze,
                    "Freeze this many leading layers [train.freeze_prefix]");
  train->add_option("--init", fl.init_ckpt,
                    "Warm-start checkpoint [train.init_checkpoint]");

  CLI::App* predict = app.add_subcommand(
      "predict", "Segment volumes with a trained checkpoint (<id>_pred.nrrd)");
  predict->add_option("inputs", fl.inputs, "Volume files or directories");
  predict->add_option("--checkpoint", fl.checkpoint, "Trained checkpoint [predict.checkpoint]");
  predict->add_option("--threshold", fl.pred_threshold,
                      "Foreground probability threshold [predict.threshold]");

  CLI::App* eval = app.add_subcommand(
      "eval", "Score predictions against reference labels (records.csv)");
  eval->add_option("inputs", fl.inputs, "Predicted mask files or directories");
  eval->add_option("--ref", fl.ref, "Reference label files/directory [metrics.reference]");
  eval->add_option("--model", fl.model, "Model tag stamped on records [metrics.model]");
  eval->add_option("--task", fl.task, "Task label stamped on records [metrics.task_label]");

  CLI::App* gridsearch = app.add_subcommand(
      "gridsearch", "Rank hyperparameter grid cells by validation Dice (gridsearch.csv)");
  gridsearch->add_option("inputs", fl.inputs, "Training pair directories");
  gridsearch->add_option("--val", fl.validation,
                         "Validation pair directory [gridsearch.validation]");
  gridsearch->add_option("--budget", fl.budget,
                         "Evaluate at most this many cells; 0 = all [gridsearch.budget]");
  gridsearch->add_option("--init", fl.init_ckpt,
                         "Search from this checkpoint [train.init_checkpoint]");

  CLI::App* report = app.add_subcommand(
      "report", "Aggregate metric records into a per-model summary table");
  report->add_option("inputs", fl.inputs, "records.csv files or directories");

  const std::map<std::string, void (*)(Ctx&)> kRunners = {
      {"synth", run_synth},     {"preprocess", run_preprocess},
      {"augment", run_augment}, {"staple", run_staple},
      {"train", run_train},     {"predict", run_predict},
      {"eval", run_eval},       {"gridsearch", run_gridsearch},
      {"report", run_report},
  };
  for (CLI::App* sub : {synth, preprocess, augment, staple, train, predict, eval, gridsearch,
                        report}) {
    sub->fallthrough();  // global flags may appear after the subcommand
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return kExitSuccess;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e);
    return kExitSuccess;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e);
    return kExitSuccess;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "Run 'vtseg --help' for usage.\n";
    return kExitUsage;
  }

  try {
    RunConfig cfg;
    if (!fl.config_path.empty()) {
      fs::path cfg_file = must_exist(fl.config_path, "config file");
      std::ifstream in(cfg_file, std::ios::binary);
      std::ostringstream text;
      text << in.rdbuf();
      if (!in) throw std::runtime_error("failed reading config file: " + cfg_file.string());
      apply_config_text(cfg, text.str());
    }
    apply_flag_overrides(cfg, fl);

    if (fl.print_cfg) {
      std::cout << print_config(cfg);
      return kExitSuccess;
    }

    std::vector<CLI::App*> chosen = app.get_subcommands();
    if (chosen.empty()) {
      std::cerr << "vtseg: missing subcommand\nRun 'vtseg --help' for usage.\n";
      return kExitUsage;
    }
    std::string sub = chosen.front()->get_name();

    cfg.validate();

    Ctx ctx;
    ctx.cfg = std::move(cfg);
    ctx.sub = sub;
    ctx.out = resolve_out_dir(ctx.cfg);
    fs::create_directories(ctx.out);

    kRunners.at(sub)(ctx);
    write_run_manifest(ctx);
    return kExitSuccess;
  } catch (const ConfigError& e) {
    std::cerr << "vtseg: invalid configuration: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MissingInputError& e) {
    std::cerr << "vtseg: missing input: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const std::exception& e) {
    std::cerr << "vtseg: error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace vtseg::cli
