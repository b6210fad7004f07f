// Python bindings for the volumetric segmentation toolkit.
//
// Array convention: a volume with dims (nx, ny, nz) crosses the boundary as a
// C-contiguous numpy array of shape (nz, ny, nx) — the last axis is the
// fastest-varying one in both representations, so the copy is a straight
// memcpy. Geometry keyword arguments (dims, spacing, origin) stay in
// (x, y, z) order, matching the NRRD header and the C++ API. Images are
// float32 in the 0..255 working range; label masks are uint8 with any
// non-zero value treated as foreground.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vtseg/augment.hpp"
#include "vtseg/metrics.hpp"
#include "vtseg/nets.hpp"
#include "vtseg/nrrd.hpp"
#include "vtseg/preprocess.hpp"
#include "vtseg/staple.hpp"
#include "vtseg/synth.hpp"
#include "vtseg/version.hpp"
#include "vtseg/volume.hpp"

namespace py = pybind11;
using namespace vtseg;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using Triple = std::array<double, 3>;

constexpr Triple kUnitSpacing = {1.0, 1.0, 1.0};
constexpr Triple kZeroOrigin = {0.0, 0.0, 0.0};

VolumeMeta meta_from_shape(const py::ssize_t* shape, const Triple& spacing,
                           const Triple& origin) {
  VolumeMeta m;
  m.dims = {static_cast<std::size_t>(shape[2]), static_cast<std::size_t>(shape[1]),
            static_cast<std::size_t>(shape[0])};
  m.spacing = spacing;
  m.origin = origin;
  return m;
}

Volume to_volume(const FloatArray& arr, const Triple& spacing = kUnitSpacing,
                 const Triple& origin = kZeroOrigin) {
  if (arr.ndim() != 3)
    throw std::invalid_argument("expected a 3-d image array indexed (z, y, x)");
  Volume v;
  v.meta = meta_from_shape(arr.shape(), spacing, origin);
  v.data.assign(arr.data(), arr.data() + arr.size());
  return v;
}

LabelMap to_label(const ByteArray& arr, const Triple& spacing = kUnitSpacing,
                  const Triple& origin = kZeroOrigin) {
  if (arr.ndim() != 3)
    throw std::invalid_argument("expected a 3-d label array indexed (z, y, x)");
  LabelMap m;
  m.meta = meta_from_shape(arr.shape(), spacing, origin);
  m.data.resize(static_cast<std::size_t>(arr.size()));
  const std::uint8_t* src = arr.data();
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = src[i] ? 1 : 0;
  return m;
}

py::array_t<float> from_volume(const Volume& v) {
  py::array_t<float> out(std::vector<py::ssize_t>{
      static_cast<py::ssize_t>(v.meta.dims[2]), static_cast<py::ssize_t>(v.meta.dims[1]),
      static_cast<py::ssize_t>(v.meta.dims[0])});
  std::memcpy(out.mutable_data(), v.data.data(), v.data.size() * sizeof(float));
  return out;
}

py::array_t<std::uint8_t> from_label(const LabelMap& m) {
  py::array_t<std::uint8_t> out(std::vector<py::ssize_t>{
      static_cast<py::ssize_t>(m.meta.dims[2]), static_cast<py::ssize_t>(m.meta.dims[1]),
      static_cast<py::ssize_t>(m.meta.dims[0])});
  std::memcpy(out.mutable_data(), m.data.data(), m.data.size());
  return out;
}

py::array_t<double> from_weights(const VolumeMeta& meta, const std::vector<double>& w) {
  py::array_t<double> out(std::vector<py::ssize_t>{
      static_cast<py::ssize_t>(meta.dims[2]), static_cast<py::ssize_t>(meta.dims[1]),
      static_cast<py::ssize_t>(meta.dims[0])});
  std::memcpy(out.mutable_data(), w.data(), w.size() * sizeof(double));
  return out;
}

bool integer_kind(const py::array& a) {
  const char k = a.dtype().kind();
  return k == 'u' || k == 'i' || k == 'b';
}

FlipAxis flip_axis_from(const std::string& name) {
  if (name == "left_right") return FlipAxis::left_right;
  if (name == "anterior_posterior") return FlipAxis::anterior_posterior;
  if (name == "superior_inferior") return FlipAxis::superior_inferior;
  throw std::invalid_argument("unknown flip axis '" + name +
                              "' (expected left_right, anterior_posterior, or "
                              "superior_inferior)");
}

std::vector<SamplePair> to_dataset(
    const std::vector<std::pair<FloatArray, ByteArray>>& pairs) {
  std::vector<SamplePair> ds;
  ds.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    SamplePair s;
    s.id = "sample-" + std::to_string(i);
    s.image = to_volume(pairs[i].first);
    s.label = to_label(pairs[i].second);
    ds.push_back(std::move(s));
  }
  return ds;
}

py::dict record_to_dict(const MetricRecord& r) {
  py::dict d;
  d["volume_id"] = r.volume_id;
  d["task_label"] = r.task_label;
  d["dice"] = r.dice;
  d["hd"] = r.hd;
  d["hd_units"] = r.hd_units;
  d["hd_defined"] = r.hd_defined;
  d["ssim"] = r.ssim;
  return d;
}

// Thin ownership wrapper so Python holds exactly one mutable network state.
struct PyNet {
  NetState state;
};

PyNet make_net(const std::string& kind, std::vector<std::size_t> input_dims,
               std::vector<std::size_t> channel_widths, std::size_t kernel_size,
               std::size_t pool_factor, double dropout_rate, std::size_t patch_size,
               std::size_t embed_dim, std::size_t heads, std::size_t depth,
               std::uint64_t seed) {
  NetConfig cfg;
  cfg.kind = net_kind_from_string(kind);
  cfg.input_dims = std::move(input_dims);
  cfg.channel_widths = std::move(channel_widths);
  cfg.kernel_size = kernel_size;
  cfg.pool_factor = pool_factor;
  cfg.dropout_rate = dropout_rate;
  cfg.patch_size = patch_size;
  cfg.embed_dim = embed_dim;
  cfg.heads = heads;
  cfg.depth = depth;
  cfg.seed = seed;
  return PyNet{build_net(cfg)};
}

}  // namespace

PYBIND11_MODULE(vtseg, m) {
  m.doc() =
      "Desk-scale volumetric segmentation toolkit: synthetic phantoms, CT/MRI "
      "preprocessing, multi-rater consensus fusion, segmentation metrics, and "
      "small deterministic U-Net-family models.\n\n"
      "Arrays are numpy, indexed (z, y, x); geometry keywords (dims, spacing, "
      "origin) are in (x, y, z) order. Images are float32 on the 0..255 "
      "working scale, labels uint8 with non-zero meaning foreground.";
  m.attr("__version__") = kToolVersion;

  // --- synthetic phantoms ----------------------------------------------------
  m.def(
      "make_airway_phantom",
      [](std::array<std::size_t, 3> dims, std::uint64_t seed, double noise_sigma) {
        PhantomSpec spec = random_airway_spec(dims, seed);
        spec.noise_sigma = noise_sigma;
        auto [img, lbl] = make_airway_phantom(spec);
        return py::make_tuple(from_volume(img), from_label(lbl));
      },
      py::arg("dims") = std::array<std::size_t, 3>{48, 48, 48}, py::arg("seed") = 0,
      py::arg("noise_sigma") = 0.0,
      "Curved-tube phantom with exact ground truth; returns (image, label). "
      "Geometry is drawn deterministically from the seed.");
  m.def(
      "make_lunglike_phantom",
      [](std::array<std::size_t, 3> dims, std::uint64_t seed, double noise_sigma) {
        LungPhantomSpec spec = random_lunglike_spec(dims, seed);
        spec.noise_sigma = noise_sigma;
        auto [img, lbl] = make_lunglike_phantom(spec);
        return py::make_tuple(from_volume(img), from_label(lbl));
      },
      py::arg("dims") = std::array<std::size_t, 3>{48, 48, 48}, py::arg("seed") = 0,
      py::arg("noise_sigma") = 0.0,
      "Two-lobe ellipsoid phantom with exact ground truth; returns "
      "(image, label).");

  // --- preprocessing -----------------------------------------------------------
  m.def(
      "clamp_rescale",
      [](const FloatArray& image, double lo, double hi) {
        return from_volume(clamp_rescale(to_volume(image), lo, hi));
      },
      py::arg("image"), py::arg("lo"), py::arg("hi"),
      "Clamp to [lo, hi] and rescale linearly onto [0, 255].");
  m.def(
      "diffuse_gad",
      [](const FloatArray& image, int iterations, double time_step, double conductance) {
        return from_volume(diffuse_gad(to_volume(image), iterations, time_step, conductance));
      },
      py::arg("image"), py::arg("iterations") = 5, py::arg("time_step") = 0.0625,
      py::arg("conductance") = 1.0,
      "Edge-preserving gradient-anisotropic smoothing. Conserves the global "
      "intensity sum and never exceeds the input extrema (time_step <= 1/6).");
  m.def(
      "binarize",
      [](const FloatArray& image, double threshold) {
        return from_label(binarize(to_volume(image), threshold));
      },
      py::arg("image"), py::arg("threshold"),
      "Foreground where the value strictly exceeds the threshold.");

  auto preprocess_config = [](double clamp_lo, double clamp_hi, int gad_iterations,
                              double gad_time_step, double gad_conductance,
                              double crop_fraction, const std::string& crop_anchor,
                              std::array<std::size_t, 3> target_dims) {
    PreprocessConfig cfg;
    cfg.clamp_lo = clamp_lo;
    cfg.clamp_hi = clamp_hi;
    cfg.gad_iterations = gad_iterations;
    cfg.gad_time_step = gad_time_step;
    cfg.gad_conductance = gad_conductance;
    cfg.crop_fraction = crop_fraction;
    if (crop_anchor == "centered")
      cfg.crop_anchor = CropAnchor::centered;
    else if (crop_anchor == "anterior_superior")
      cfg.crop_anchor = CropAnchor::anterior_superior;
    else
      throw std::invalid_argument("unknown crop anchor '" + crop_anchor + "'");
    cfg.target_dims = target_dims;
    return cfg;
  };
  m.def(
      "preprocess_ct",
      [preprocess_config](const FloatArray& image, const Triple& spacing, double clamp_lo,
                          double clamp_hi, std::array<std::size_t, 3> target_dims) {
        const auto cfg = preprocess_config(clamp_lo, clamp_hi, 5, 0.0625, 1.0, 0.7,
                                           "centered", target_dims);
        return from_volume(preprocess_ct(to_volume(image, spacing), cfg));
      },
      py::arg("image"), py::arg("spacing") = kUnitSpacing, py::arg("clamp_lo") = -1000.0,
      py::arg("clamp_hi") = 1000.0,
      py::arg("target_dims") = std::array<std::size_t, 3>{256, 256, 32},
      "CT chain: intensity window onto [0, 255], then trilinear resampling to "
      "target_dims (x, y, z).");
  m.def(
      "preprocess_mri",
      [preprocess_config](const FloatArray& image, const Triple& spacing, int gad_iterations,
                          double gad_time_step, double gad_conductance, double crop_fraction,
                          const std::string& crop_anchor,
                          std::array<std::size_t, 3> target_dims) {
        const auto cfg = preprocess_config(-1000.0, 1000.0, gad_iterations, gad_time_step,
                                           gad_conductance, crop_fraction, crop_anchor,
                                           target_dims);
        return from_volume(preprocess_mri(to_volume(image, spacing), cfg));
      },
      py::arg("image"), py::arg("spacing") = kUnitSpacing, py::arg("gad_iterations") = 5,
      py::arg("gad_time_step") = 0.0625, py::arg("gad_conductance") = 1.0,
      py::arg("crop_fraction") = 0.7, py::arg("crop_anchor") = "centered",
      py::arg("target_dims") = std::array<std::size_t, 3>{256, 256, 32},
      "MRI chain: edge-preserving smoothing, normalization onto [0, 255], "
      "in-plane crop retaining crop_fraction of the extent, then resampling.");

  // --- augmentation -------------------------------------------------------------
  m.def(
      "augment",
      [](const std::vector<std::tuple<std::string, FloatArray, ByteArray>>& pairs,
         double noise_sigma_max, double rotation_range_deg, bool flip_enabled,
         const std::string& flip_axis, std::uint64_t seed) {
        std::vector<SamplePair> ds;
        ds.reserve(pairs.size());
        for (const auto& [id, img, lbl] : pairs) {
          SamplePair s;
          s.id = id;
          s.image = to_volume(img);
          s.label = to_label(lbl);
          ds.push_back(std::move(s));
        }
        AugmentSpec spec;
        spec.noise_sigma_max = noise_sigma_max;
        spec.rotation_range_deg = rotation_range_deg;
        spec.flip_enabled = flip_enabled;
        spec.flip_axis = flip_axis_from(flip_axis);
        spec.seed = seed;
        py::list out;
        for (const auto& s : augment_dataset(ds, spec))
          out.append(py::make_tuple(s.id, from_volume(s.image), from_label(s.label)));
        return out;
      },
      py::arg("pairs"), py::arg("noise_sigma_max") = 0.01,
      py::arg("rotation_range_deg") = 10.0, py::arg("flip_enabled") = true,
      py::arg("flip_axis") = "left_right", py::arg("seed") = 0,
      "Expand (id, image, label) pairs into original / noised / flipped / "
      "rotated variants with deterministically drawn parameters.");

  // --- metrics -------------------------------------------------------------------
  m.def(
      "dice",
      [](const ByteArray& a, const ByteArray& b) { return dice(to_label(a), to_label(b)); },
      py::arg("a"), py::arg("b"),
      "Overlap ratio 2|A∩B| / (|A| + |B|); two empty masks score 1.0.");
  m.def(
      "hausdorff",
      [](const ByteArray& a, const ByteArray& b, const std::string& mode, bool full_mask,
         const Triple& spacing) {
        const auto hm = [&] {
          if (mode == "fast") return HausdorffMode::fast;
          if (mode == "naive") return HausdorffMode::naive;
          throw std::invalid_argument("unknown mode '" + mode + "' (fast or naive)");
        }();
        return hausdorff(to_label(a, spacing), to_label(b, spacing), hm, full_mask);
      },
      py::arg("a"), py::arg("b"), py::arg("mode") = "fast", py::arg("full_mask") = false,
      py::arg("spacing") = kUnitSpacing,
      "Symmetric boundary Hausdorff distance in spacing units; raises "
      "RuntimeError when either mask is empty.");
  m.def(
      "ssim3d",
      [](const py::array& x, const py::array& y, double window_sigma, int window_radius,
         double k1, double k2, double luminance_range) {
        SsimParams p;
        p.window_sigma = window_sigma;
        p.window_radius = window_radius;
        p.k1 = k1;
        p.k2 = k2;
        p.luminance_range = luminance_range;
        if (integer_kind(x) && integer_kind(y))
          return ssim3d(to_label(ByteArray::ensure(x)), to_label(ByteArray::ensure(y)), p);
        return ssim3d(to_volume(FloatArray::ensure(x)), to_volume(FloatArray::ensure(y)), p);
      },
      py::arg("x"), py::arg("y"), py::arg("window_sigma") = 1.5,
      py::arg("window_radius") = 5, py::arg("k1") = 0.01, py::arg("k2") = 0.03,
      py::arg("luminance_range") = 255.0,
      "Mean local structural similarity over a Gaussian window. Integer "
      "arrays are treated as binary masks and mapped to {0, luminance_range}.");
  m.def(
      "evaluate",
      [](const ByteArray& pred, const ByteArray& reference, const std::string& volume_id,
         const std::string& task_label, const Triple& spacing) {
        return record_to_dict(evaluate(to_label(pred, spacing), to_label(reference, spacing),
                                       volume_id, task_label));
      },
      py::arg("pred"), py::arg("reference"), py::arg("volume_id") = "volume",
      py::arg("task_label") = "segmentation", py::arg("spacing") = kUnitSpacing,
      "Dice, Hausdorff distance, and structural similarity for one "
      "prediction/reference pair, as a dict (hd_defined is False when a mask "
      "is empty).");

  // --- consensus fusion -------------------------------------------------------------
  m.def(
      "staple",
      [](const std::vector<ByteArray>& raters, double init_sensitivity,
         double init_specificity, std::optional<double> prior, double tol, int max_iter,
         double threshold) {
        RaterStack stack;
        stack.volume_id = "python";
        stack.raters.reserve(raters.size());
        for (const auto& r : raters) stack.raters.push_back(to_label(r));
        StapleConfig cfg;
        cfg.init = {init_sensitivity, init_specificity};
        cfg.prior = prior;
        cfg.tol = tol;
        cfg.max_iter = max_iter;
        const StapleResult res = staple_em(stack, cfg);
        py::dict d;
        d["probability"] = from_weights(res.meta, res.weights);
        d["consensus"] = from_label(consensus(res, threshold));
        py::list sens, spec;
        for (const auto& perf : res.performances) {
          sens.append(perf.sensitivity);
          spec.append(perf.specificity);
        }
        d["sensitivity"] = sens;
        d["specificity"] = spec;
        d["prior"] = res.prior;
        d["iterations"] = res.iterations;
        d["converged"] = res.converged;
        d["trace"] = res.trace;
        return d;
      },
      py::arg("raters"), py::arg("init_sensitivity") = 0.9, py::arg("init_specificity") = 0.9,
      py::arg("prior") = py::none(), py::arg("tol") = 1e-7, py::arg("max_iter") = 100,
      py::arg("threshold") = 0.5,
      "Expectation-maximization consensus over two or more binary rater "
      "masks. Returns per-voxel foreground probabilities, the thresholded "
      "consensus mask, and per-rater sensitivity/specificity estimates. "
      "prior=None uses the mean rater foreground fraction.");
  m.def(
      "simulate_raters",
      [](const ByteArray& truth, const std::vector<std::pair<double, double>>& performances,
         std::uint64_t seed) {
        std::vector<RaterPerformance> perfs;
        perfs.reserve(performances.size());
        for (const auto& [p, q] : performances) perfs.push_back({p, q});
        const RaterStack stack = simulate_raters(to_label(truth), perfs, seed);
        py::list out;
        for (const auto& r : stack.raters) out.append(from_label(r));
        return out;
      },
      py::arg("truth"), py::arg("performances"), py::arg("seed") = 0,
      "Draw noisy rater masks from a known truth; performances is a list of "
      "(sensitivity, specificity) pairs. Deterministic per seed.");

  // --- networks ------------------------------------------------------------------
  py::class_<PyNet>(m, "Net",
                    "A small deterministic segmentation network (unet2d, unet3d, "
                    "or unetr). Everything — initialization, batch order, dropout, "
                    "trained weights — is a pure function of the seeds.")
      .def(py::init(&make_net), py::arg("kind") = "unet3d", py::arg("input_dims"),
           py::arg("channel_widths") = std::vector<std::size_t>{8, 16, 32},
           py::arg("kernel_size") = 3, py::arg("pool_factor") = 2,
           py::arg("dropout_rate") = 0.0, py::arg("patch_size") = 8,
           py::arg("embed_dim") = 32, py::arg("heads") = 2, py::arg("depth") = 2,
           py::arg("seed") = 0)
      .def_property_readonly(
          "kind", [](const PyNet& n) { return to_string(n.state.config.kind); })
      .def_property_readonly("step", [](const PyNet& n) { return n.state.step; })
      .def_property_readonly("layer_count",
                             [](const PyNet& n) { return n.state.layer_count(); })
      .def_property_readonly("parameter_count",
                             [](const PyNet& n) { return n.state.parameter_count(); })
      .def_property_readonly(
          "parameters",
          [](const PyNet& n) {
            py::list out;
            for (const auto& p : n.state.parameters) {
              py::dict d;
              d["name"] = p.name;
              d["layer"] = p.layer;
              d["frozen"] = p.frozen;
              d["size"] = p.value.size();
              out.append(d);
            }
            return out;
          },
          "One dict per parameter tensor: name, owning layer, frozen flag, size.")
      .def(
          "train",
          [](PyNet& n, const std::vector<std::pair<FloatArray, ByteArray>>& pairs,
             double learning_rate, int epochs, int steps_per_epoch, double dropout_rate,
             double epsilon, std::uint64_t seed) {
            const std::vector<SamplePair> ds = to_dataset(pairs);
            TrainConfig tc;
            tc.learning_rate = learning_rate;
            tc.epochs = epochs;
            tc.steps_per_epoch = steps_per_epoch;
            tc.dropout_rate = dropout_rate;
            tc.epsilon = epsilon;
            tc.seed = seed;
            py::gil_scoped_release release;
            TrainResult tr = train(std::move(n.state), ds, tc);
            n.state = std::move(tr.net);
            return tr.history;
          },
          py::arg("pairs"), py::arg("learning_rate") = 1e-3, py::arg("epochs") = 1,
          py::arg("steps_per_epoch") = 1, py::arg("dropout_rate") = 0.0,
          py::arg("epsilon") = 1.0, py::arg("seed") = 0,
          "Adam on the soft-Dice loss over (image, label) pairs for epochs * "
          "steps_per_epoch steps; returns the per-step loss history. The "
          "optimizer step count persists, so chained calls continue training.")
      .def(
          "predict",
          [](const PyNet& n, const FloatArray& image, double threshold) {
            const Volume v = to_volume(image);
            const LabelMap out = n.state.config.kind == NetKind::unet2d
                                     ? predict_slicewise(n.state, v, threshold)
                                     : predict_volume(n.state, v, threshold);
            return from_label(out);
          },
          py::arg("image"), py::arg("threshold") = 0.5,
          "Thresholded segmentation of one image (slice-wise for unet2d).")
      .def(
          "freeze_prefix",
          [](PyNet& n, std::size_t layers) {
            n.state = freeze_prefix(std::move(n.state), layers);
          },
          py::arg("layers"),
          "Freeze the first `layers` parameterized layers (input side first); "
          "frozen weights stay bit-identical under further training.")
      .def(
          "save", [](const PyNet& n, const std::string& path) { save_checkpoint(n.state, path); },
          py::arg("path"),
          "Write a self-describing checkpoint; identical states produce "
          "byte-identical files.")
      .def_static(
          "load", [](const std::string& path) { return PyNet{load_checkpoint(path)}; },
          py::arg("path"), "Restore a network (config, weights, optimizer state).");

  m.def(
      "grad_check",
      [](const PyNet& net, const FloatArray& image, const ByteArray& label, double h) {
        SamplePair s;
        s.id = "grad-check";
        s.image = to_volume(image);
        s.label = to_label(label);
        py::gil_scoped_release release;
        return grad_check(net.state, s, h);
      },
      py::arg("net"), py::arg("image"), py::arg("label"), py::arg("h") = 1e-5,
      "Worst relative error between analytic gradients and central finite "
      "differences on a parameter subset.");

  // --- file IO --------------------------------------------------------------------
  m.def(
      "read_nrrd",
      [](const std::string& path) {
        const NrrdReadResult res = read_nrrd(path);
        const VolumeMeta& meta = res.meta();
        py::dict info;
        info["spacing"] = meta.spacing;
        info["origin"] = meta.origin;
        info["is_label"] = res.is_label();
        if (res.is_label())
          return py::make_tuple(py::object(from_label(std::get<LabelMap>(res.image))), info);
        return py::make_tuple(py::object(from_volume(std::get<Volume>(res.image))), info);
      },
      py::arg("path"),
      "Read an NRRD file. Returns (array, info); uint8 files containing only "
      "{0, 1} come back as label arrays (info['is_label'] is True).");
  m.def(
      "write_nrrd",
      [](const py::array& data, const std::string& path, const Triple& spacing,
         const Triple& origin, const std::string& encoding) {
        const NrrdEncoding enc = [&] {
          if (encoding == "raw") return NrrdEncoding::raw;
          if (encoding == "gzip") return NrrdEncoding::gzip;
          throw std::invalid_argument("unknown encoding '" + encoding + "' (raw or gzip)");
        }();
        if (integer_kind(data))
          write_nrrd(to_label(ByteArray::ensure(data), spacing, origin), path, enc);
        else
          write_nrrd(to_volume(FloatArray::ensure(data), spacing, origin), path, enc);
      },
      py::arg("data"), py::arg("path"), py::arg("spacing") = kUnitSpacing,
      py::arg("origin") = kZeroOrigin, py::arg("encoding") = "raw",
      "Write an array as NRRD. Integer arrays are written as uint8 label "
      "maps, floating arrays as float32 images.");
}
