// Release-gate suite. Each numbered check exercises one end-to-end contract
// of the toolkit against an independent oracle or a pinned tolerance and
// prints exactly one [PASS]/[FAIL] line; the exit status is the number of
// failing checks. Run with no arguments for the full gate, or pass check
// numbers to run a subset (e.g. `vtseg_acceptance 7 8`).
//
// Tolerances, seeds, and budgets are deliberately hard-coded here so the gate
// cannot drift without the diff showing it.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "benchmark_fixture.hpp"
#include "vtseg/augment.hpp"
#include "vtseg/metrics.hpp"
#include "vtseg/nets.hpp"
#include "vtseg/nn_ops.hpp"
#include "vtseg/preprocess.hpp"
#include "vtseg/report.hpp"
#include "vtseg/rng.hpp"
#include "vtseg/staple.hpp"
#include "vtseg/synth.hpp"
#include "vtseg/tensor.hpp"
#include "vtseg/volume.hpp"

using namespace vtseg;
namespace bf = benchmark_fixture;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename... Ts>
std::string str(const Ts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  return os.str();
}

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Accumulates assertions for one check; the first failure message is carried
// into the printed line.
struct Check {
  int total = 0;
  int failed = 0;
  std::string first;
  std::string detail;

  void that(bool ok, const std::string& what) {
    ++total;
    if (!ok) {
      ++failed;
      if (first.empty()) first = what;
    }
  }
};

// --- shared fixture builders -------------------------------------------------

VolumeMeta meta_of(std::size_t nx, std::size_t ny, std::size_t nz) {
  VolumeMeta m;
  m.dims = {nx, ny, nz};
  return m;
}

// Union of a few random balls: compact shapes whose boundary stays small
// enough for all-pairs distance comparisons.
LabelMap random_blob_mask(Rng& rng, const VolumeMeta& meta) {
  LabelMap m;
  m.meta = meta;
  m.data.assign(meta.voxel_count(), 0);
  const auto [nx, ny, nz] = meta.dims;
  const int balls = 1 + static_cast<int>(rng.next_below(3));
  for (int b = 0; b < balls; ++b) {
    const double cx = rng.uniform(0.0, static_cast<double>(nx - 1));
    const double cy = rng.uniform(0.0, static_cast<double>(ny - 1));
    const double cz = rng.uniform(0.0, static_cast<double>(nz - 1));
    const double r = rng.uniform(2.0, 0.3 * static_cast<double>(std::min({nx, ny, nz})));
    for (std::size_t z = 0; z < nz; ++z)
      for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t x = 0; x < nx; ++x) {
          const double dx = static_cast<double>(x) - cx;
          const double dy = static_cast<double>(y) - cy;
          const double dz = static_cast<double>(z) - cz;
          if (dx * dx + dy * dy + dz * dz <= r * r) m.data[meta.index(x, y, z)] = 1;
        }
  }
  return m;  // a ball center is always inside the grid, so never empty
}

LabelMap random_sparse_mask(Rng& rng, const VolumeMeta& meta, double density) {
  LabelMap m;
  m.meta = meta;
  m.data.assign(meta.voxel_count(), 0);
  for (auto& v : m.data) v = rng.bernoulli(density) ? 1 : 0;
  m.data[rng.next_below(m.data.size())] = 1;  // ensure non-empty
  return m;
}

// Direct weighted-moment evaluation of the similarity formula for one window
// centered at (cx, cy, cz), clipped to the grid.
double ssim_window_oracle(const Volume& x, const Volume& y, std::size_t cx, std::size_t cy,
                          std::size_t cz, const SsimParams& p) {
  const auto [nx, ny, nz] = x.meta.dims;
  const int r = p.window_radius;
  auto g = [&](int d) {
    return std::exp(-(static_cast<double>(d) * d) / (2.0 * p.window_sigma * p.window_sigma));
  };
  double wsum = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const long long ix = static_cast<long long>(cx) + dx;
        const long long iy = static_cast<long long>(cy) + dy;
        const long long iz = static_cast<long long>(cz) + dz;
        if (ix < 0 || iy < 0 || iz < 0 || ix >= static_cast<long long>(nx) ||
            iy >= static_cast<long long>(ny) || iz >= static_cast<long long>(nz))
          continue;
        const double w = g(dx) * g(dy) * g(dz);
        const double a = x.at(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy),
                              static_cast<std::size_t>(iz));
        const double b = y.at(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy),
                              static_cast<std::size_t>(iz));
        wsum += w;
        sx += w * a;
        sy += w * b;
        sxx += w * a * a;
        syy += w * b * b;
        sxy += w * a * b;
      }
  const double mu_x = sx / wsum;
  const double mu_y = sy / wsum;
  const double var_x = sxx / wsum - mu_x * mu_x;
  const double var_y = syy / wsum - mu_y * mu_y;
  const double cov = sxy / wsum - mu_x * mu_y;
  const double c1 = (p.k1 * p.luminance_range) * (p.k1 * p.luminance_range);
  const double c2 = (p.k2 * p.luminance_range) * (p.k2 * p.luminance_range);
  return ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) /
         ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2));
}

// Independent brute-force EM in plain probability space (no logs, no pattern
// caching): what the library must match to 1e-12.
struct EmOracleState {
  std::vector<double> w;
  std::vector<double> p, q;
};

EmOracleState em_oracle(const std::vector<std::vector<std::uint8_t>>& d, double gamma,
                        double p0, double q0, int iters) {
  const std::size_t k = d.size();
  const std::size_t n = d[0].size();
  auto clamp = [](double v) { return std::clamp(v, 1e-6, 1.0 - 1e-6); };
  EmOracleState st;
  st.p.assign(k, clamp(p0));
  st.q.assign(k, clamp(q0));
  st.w.assign(n, 0.0);
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double a = gamma, b = 1.0 - gamma;
      for (std::size_t j = 0; j < k; ++j) {
        if (d[j][i]) {
          a *= st.p[j];
          b *= 1.0 - st.q[j];
        } else {
          a *= 1.0 - st.p[j];
          b *= st.q[j];
        }
      }
      st.w[i] = a / (a + b);
    }
    double sum_w = 0.0, sum_iw = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_w += st.w[i];
      sum_iw += 1.0 - st.w[i];
    }
    for (std::size_t j = 0; j < k; ++j) {
      double swd = 0.0, siq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d[j][i])
          swd += st.w[i];
        else
          siq += 1.0 - st.w[i];
      }
      st.p[j] = clamp(swd / sum_w);
      st.q[j] = clamp(siq / sum_iw);
    }
  }
  return st;
}

// --- finite-difference harness -----------------------------------------------

double dot(const TensorND& a, const TensorND& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

double rel_err(double fd, double g) {
  return std::abs(fd - g) / std::max(std::abs(fd) + std::abs(g), 1e-6);
}

// Max relative error between an analytic gradient tensor and central finite
// differences over every entry of `x`.
template <typename Loss>
double fd_max(TensorND& x, const TensorND& grad, double h, Loss loss) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x.data[i];
    x.data[i] = saved + h;
    const double lp = loss();
    x.data[i] = saved - h;
    const double lm = loss();
    x.data[i] = saved;
    worst = std::max(worst, rel_err((lp - lm) / (2.0 * h), grad.data[i]));
  }
  return worst;
}

TensorND rand_t(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  TensorND t(std::move(shape));
  for (double& v : t.data) v = (rng.next_double() * 2.0 - 1.0) * scale;
  return t;
}

bool tensor_bits_equal(const TensorND& a, const TensorND& b) {
  return a.shape == b.shape &&
         std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(double)) == 0;
}

// A seed-jittered curved tube with exact ground truth, sized for tiny nets.
SamplePair tube_sample(const std::array<std::size_t, 3>& dims, std::uint64_t seed) {
  PhantomSpec spec;
  spec.dims = dims;
  Rng rng(derive_seed(seed, 0x7e57));
  const double d0 = static_cast<double>(dims[0]);
  const double d1 = static_cast<double>(dims[1]);
  const double d2 = static_cast<double>(dims[2]);
  const double jy = rng.next_double() * 0.2 - 0.1;
  const double jz = rng.next_double() * 0.2 - 0.1;
  spec.centerline = {{d0 * 0.25, d1 * (0.45 + jy), d2 * 0.35},
                     {d0 * 0.75, d1 * 0.55, d2 * (0.65 + jz)}};
  const double r = std::max(1.2, d0 * 0.1);
  spec.radii = {r, r * 1.2};
  spec.seed = seed;
  auto [img, lab] = make_airway_phantom(spec);
  SamplePair s;
  s.id = "tube-" + std::to_string(seed);
  s.image = std::move(img);
  s.label = std::move(lab);
  return s;
}

// --- check 1: metric oracle equivalence --------------------------------------

void metric_oracles(Check& c) {
  const auto t0 = Clock::now();
  Rng rng(20260815);
  int trials = 0;
  for (int trial = 0; trial < 200; ++trial) {
    VolumeMeta meta;
    LabelMap a, b;
    if (trial % 2 == 0) {
      // compact shapes on grids up to 24^3
      meta = meta_of(12 + rng.next_below(13), 12 + rng.next_below(13), 12 + rng.next_below(13));
      a = random_blob_mask(rng, meta);
      b = random_blob_mask(rng, meta);
    } else {
      // unstructured noise on smaller grids
      meta = meta_of(4 + rng.next_below(9), 4 + rng.next_below(9), 4 + rng.next_below(9));
      a = random_sparse_mask(rng, meta, 0.15);
      b = random_sparse_mask(rng, meta, 0.15);
    }

    // surface distance: the transform-based mode must equal the all-pairs
    // definition bit for bit, both directions
    const double fast = hausdorff(a, b, HausdorffMode::fast);
    const double naive = hausdorff(a, b, HausdorffMode::naive);
    c.that(fast == naive, str("trial ", trial, ": fast ", fast, " vs all-pairs ", naive));
    c.that(hausdorff(b, a, HausdorffMode::fast) == fast, str("trial ", trial, ": asymmetric"));

    // overlap ratio: direct set counts
    std::size_t inter = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      na += a.data[i];
      nb += b.data[i];
      inter += a.data[i] & b.data[i];
    }
    const double direct =
        na + nb == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
    c.that(dice(a, b) == direct, str("trial ", trial, ": overlap ratio mismatch"));

    // structural similarity: one window against the direct weighted-moment
    // formula, within 1e-9 (labels enter as 0/255 intensities)
    Volume va, vb;
    va.meta = vb.meta = meta;
    va.data.resize(meta.voxel_count());
    vb.data.resize(meta.voxel_count());
    for (std::size_t i = 0; i < va.data.size(); ++i) {
      va.data[i] = a.data[i] ? 255.0f : 0.0f;
      vb.data[i] = b.data[i] ? 255.0f : 0.0f;
    }
    const auto values = ssim3d_values(va, vb);
    const std::size_t cx = rng.next_below(meta.dims[0]);
    const std::size_t cy = rng.next_below(meta.dims[1]);
    const std::size_t cz = rng.next_below(meta.dims[2]);
    const double window = ssim_window_oracle(va, vb, cx, cy, cz, SsimParams{});
    c.that(std::abs(values[meta.index(cx, cy, cz)] - window) <= 1e-9,
           str("trial ", trial, ": window value off by ",
               std::abs(values[meta.index(cx, cy, cz)] - window)));
    ++trials;
  }
  const double dt = seconds_since(t0);
  c.that(trials == 200, "expected 200 mask pairs");
  c.that(dt < 60.0, str("runtime ", fmt(dt, 1), "s exceeds the 60s budget"));
  c.detail = str("200 mask pairs up to 24^3, ", c.total, " comparisons, ", fmt(dt, 1), "s");
}

// --- check 2: summary-table arithmetic ---------------------------------------

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_pm(const std::string& cell, double& mean, double& sd) {
  const std::string pm = "±";
  const auto pos = cell.find(pm);
  if (pos == std::string::npos) return false;
  try {
    mean = std::stod(cell.substr(0, pos));
    sd = std::stod(cell.substr(pos + pm.size()));
  } catch (...) {
    return false;
  }
  return true;
}

void summary_table(Check& c) {
  auto model = [](const char* name) -> const bf::ModelResults* {
    for (const auto& m : bf::kModels)
      if (std::string(name) == m.model) return &m;
    return nullptr;
  };

  // per-volume values -> aggregate -> every rounded mean/std cell, at each
  // cell's own displayed precision, with the sample (n-1) standard deviation
  for (const auto& m : bf::kModels) {
    const auto row = aggregate(bf::records_for(m), m.model);
    c.that(row.n == 8, str(m.model, ": expected 8 volumes"));
    c.that(row.hd_n == 8, str(m.model, ": expected 8 defined distances"));
    c.that(bf::matches_printed(row.dice_mean, m.dice_mean),
           str(m.model, " overlap mean ", row.dice_mean, " vs printed ", m.dice_mean));
    c.that(bf::matches_printed(row.dice_std, m.dice_std),
           str(m.model, " overlap std ", row.dice_std, " vs printed ", m.dice_std));
    c.that(bf::matches_printed(row.hd_mean, m.hd_mean),
           str(m.model, " distance mean ", row.hd_mean, " vs printed ", m.hd_mean));
    c.that(bf::matches_printed(row.hd_std, m.hd_std),
           str(m.model, " distance std ", row.hd_std, " vs printed ", m.hd_std));
    c.that(bf::matches_printed(row.ssim_mean, m.ssim_mean),
           str(m.model, " similarity mean ", row.ssim_mean, " vs printed ", m.ssim_mean));
    c.that(bf::matches_printed(row.ssim_std, m.ssim_std),
           str(m.model, " similarity std ", row.ssim_std, " vs printed ", m.ssim_std));
  }

  // headline cells pinned as literals so a fixture edit cannot silently
  // weaken this check
  const auto* u3 = model("unet3d");
  const auto* s2 = model("slice2d");
  const auto* tl = model("unet3d_tl");
  c.that(u3 && std::string(u3->dice_mean) == "0.896" && std::string(u3->dice_std) == "0.05",
         "pinned unet3d overlap cell 0.896 ± 0.05");
  c.that(u3 && std::string(u3->hd_mean) == "14" && std::string(u3->hd_std) == "28",
         "pinned unet3d distance cell 14 ± 28");
  c.that(s2 && std::string(s2->hd_mean) == "11.33" && std::string(s2->hd_std) == "5.4",
         "pinned slice2d distance cell 11.33 ± 5.4");
  c.that(tl && std::string(tl->hd_mean) == "3.95" && std::string(tl->hd_std) == "5.2",
         "pinned unet3d_tl distance cell 3.95 ± 5.2");

  // the emitted table's summary row carries the same rounded cells
  std::vector<AggregateRow> rows;
  for (const auto& m : bf::kModels) rows.push_back(aggregate(bf::records_for(m), m.model));
  const auto text = emit_table(rows, bf::all_labeled_records(), ReportFormat::markdown);
  std::string avg_line;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
      if (line.rfind("| Average", 0) == 0) avg_line = line;
  }
  c.that(!avg_line.empty(), "emitted table has a summary row");
  const auto cells = split(avg_line, '|');
  const std::vector<std::string> order = {"slice2d", "unet3d", "unet3d_tl", "unetr"};
  c.that(cells.size() >= 3 + 3 * order.size(), "summary row has every model's cells");
  if (cells.size() >= 3 + 3 * order.size()) {
    for (std::size_t mi = 0; mi < order.size(); ++mi) {
      const auto* m = model(order[mi].c_str());
      const std::size_t base = 3 + 3 * mi;
      double mean = 0.0, sd = 0.0;
      c.that(parse_pm(cells[base], mean, sd) && bf::matches_printed(mean, m->dice_mean) &&
                 bf::matches_printed(sd, m->dice_std),
             str("emitted overlap summary for ", order[mi]));
      c.that(parse_pm(cells[base + 1], mean, sd) && bf::matches_printed(mean, m->hd_mean) &&
                 bf::matches_printed(sd, m->hd_std),
             str("emitted distance summary for ", order[mi]));
      c.that(parse_pm(cells[base + 2], mean, sd) && bf::matches_printed(mean, m->ssim_mean) &&
                 bf::matches_printed(sd, m->ssim_std),
             str("emitted similarity summary for ", order[mi]));
    }
  }
  c.detail = str("4 models x 3 metrics x 8 volumes, ", c.total, " cell checks");
}

// --- check 3: consensus EM micro-oracle --------------------------------------

RaterStack stack_of(const VolumeMeta& meta, const std::vector<std::vector<std::uint8_t>>& d) {
  RaterStack s;
  for (const auto& bits : d) {
    LabelMap m;
    m.meta = meta;
    m.data = bits;
    s.raters.push_back(std::move(m));
  }
  return s;
}

void em_micro_oracle(Check& c) {
  const auto meta = meta_of(2, 2, 1);
  const std::vector<std::vector<std::uint8_t>> d = {{1, 1, 0, 0}, {1, 0, 0, 0}};
  const auto stack = stack_of(meta, d);

  StapleConfig cfg;
  cfg.prior = 0.25;
  cfg.tol = 1e-300;  // never converge early: every sweep must run

  for (int iters = 1; iters <= 8; ++iters) {
    cfg.max_iter = iters;
    const auto res = staple_em(stack, cfg);
    c.that(res.iterations == iters, str("iterate ", iters, ": wrong sweep count"));
    const auto oracle = em_oracle(d, 0.25, 0.9, 0.9, iters);
    for (std::size_t i = 0; i < 4; ++i)
      c.that(std::abs(res.weights[i] - oracle.w[i]) <= 1e-12,
             str("iterate ", iters, ": weight ", i, " off by ",
                 std::abs(res.weights[i] - oracle.w[i])));
    for (std::size_t j = 0; j < 2; ++j) {
      c.that(std::abs(res.performances[j].sensitivity - oracle.p[j]) <= 1e-12,
             str("iterate ", iters, ": sensitivity ", j));
      c.that(std::abs(res.performances[j].specificity - oracle.q[j]) <= 1e-12,
             str("iterate ", iters, ": specificity ", j));
    }
  }

  // first-iteration values frozen as literals (exact rationals:
  // p = (1037/1044, 183/232), q = (1701/2372, 4683/4744))
  cfg.max_iter = 1;
  const auto res = staple_em(stack, cfg);
  c.that(std::abs(res.weights[0] - 0.9642857142857143) <= 1e-12, "frozen weight 0");
  c.that(std::abs(res.weights[1] - 0.25) <= 1e-12, "frozen weight 1");
  c.that(std::abs(res.weights[2] - 0.004098360655737705) <= 1e-12, "frozen weight 2");
  c.that(std::abs(res.weights[3] - 0.004098360655737705) <= 1e-12, "frozen weight 3");
  c.that(std::abs(res.performances[0].sensitivity - 0.9932950191570882) <= 1e-12, "frozen p0");
  c.that(std::abs(res.performances[1].sensitivity - 0.7887931034482759) <= 1e-12, "frozen p1");
  c.that(std::abs(res.performances[0].specificity - 0.7171163575042159) <= 1e-12, "frozen q0");
  c.that(std::abs(res.performances[1].specificity - 0.987141652613828) <= 1e-12, "frozen q1");
  c.detail = "4-voxel 2-rater fixture, 8 iterates within 1e-12 of brute force";
}

// --- check 4: rater error-rate recovery --------------------------------------

void em_recovery(Check& c) {
  const auto t0 = Clock::now();
  // two-lobe phantom sized for roughly 10% foreground on a 48^3 grid
  LungPhantomSpec phantom;
  phantom.lobes = {Ellipsoid{{14, 24, 24}, {9, 12.5, 11.7}},
                   Ellipsoid{{34, 24, 24}, {9, 12.5, 11.7}}};
  const auto [image, truth] = make_lunglike_phantom(phantom);
  const double fraction =
      static_cast<double>(truth.foreground_count()) / static_cast<double>(truth.data.size());
  c.that(fraction >= 0.08 && fraction <= 0.12, str("foreground fraction ", fmt(fraction)));

  const std::vector<RaterPerformance> true_perfs = {{0.95, 0.99}, {0.90, 0.97}, {0.80, 0.99}};
  const auto stack = simulate_raters(truth, true_perfs, 20240815);
  const auto res = staple_em(stack);
  c.that(res.converged, "EM converged");

  double worst = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    const double ep = std::abs(res.performances[j].sensitivity - true_perfs[j].sensitivity);
    const double eq = std::abs(res.performances[j].specificity - true_perfs[j].specificity);
    worst = std::max({worst, ep, eq});
    c.that(ep <= 0.03, str("rater ", j, " sensitivity off by ", fmt(ep, 4)));
    c.that(eq <= 0.03, str("rater ", j, " specificity off by ", fmt(eq, 4)));
  }

  // the weighted consensus must do at least as well as an unweighted vote
  const auto fused = consensus(res);
  LabelMap majority;
  majority.meta = truth.meta;
  majority.data.resize(truth.data.size());
  for (std::size_t i = 0; i < truth.data.size(); ++i) {
    const int votes =
        stack.raters[0].data[i] + stack.raters[1].data[i] + stack.raters[2].data[i];
    majority.data[i] = votes >= 2 ? 1 : 0;
  }
  const double fused_dice = dice(fused, truth);
  const double majority_dice = dice(majority, truth);
  c.that(fused_dice >= majority_dice,
         str("consensus ", fmt(fused_dice, 4), " < majority vote ", fmt(majority_dice, 4)));

  const double dt = seconds_since(t0);
  c.that(dt < 30.0, str("runtime ", fmt(dt, 1), "s exceeds the 30s budget"));
  c.detail = str("3 raters on 48^3, worst rate error ", fmt(worst, 4), ", consensus dice ",
                 fmt(fused_dice, 4), " >= vote ", fmt(majority_dice, 4), ", ", fmt(dt, 1), "s");
}

// --- check 5: unanimity fixpoint ----------------------------------------------

void unanimity_fixpoint(Check& c) {
  Rng rng(7);
  const auto meta = meta_of(8, 8, 4);
  LabelMap m;
  m.meta = meta;
  m.data.resize(meta.voxel_count());
  for (auto& v : m.data) v = rng.bernoulli(0.3) ? 1 : 0;

  RaterStack stack;
  stack.volume_id = "unanimous";
  stack.raters = {m, m, m};
  const auto res = staple_em(stack);
  c.that(res.converged, "converged");
  c.that(res.iterations <= 5, str("took ", res.iterations, " iterations (> 5)"));
  c.that(consensus(res).data == m.data, "consensus differs from the unanimous input");
  bool weights_exact = true;
  for (std::size_t i = 0; i < m.data.size(); ++i)
    weights_exact = weights_exact && res.weights[i] == (m.data[i] ? 1.0 : 0.0);
  c.that(weights_exact, "weights are not exactly 0/1");
  c.detail = str("3 identical raters, fixpoint in ", res.iterations, " iteration(s)");
}

// --- check 6: gradient verification -------------------------------------------

void gradient_checks(Check& c) {
  Rng rng(606);
  const double kTol = 1e-4;     // every primitive and builder
  const double kLinTol = 1e-8;  // exactly-linear maps, checked strictly

  {  // 3-d same-padded convolution
    TensorND x = rand_t({1, 2, 4, 4, 3}, rng);
    TensorND w = rand_t({3, 2, 3, 3, 3}, rng);
    TensorND b = rand_t({3}, rng);
    TensorND g = rand_t(nn::conv_nd(x, w, b).shape, rng);
    auto loss = [&] { return dot(nn::conv_nd(x, w, b), g); };
    const auto grads = nn::conv_nd_backward(g, x, w);
    c.that(fd_max(x, grads.input, 1e-3, loss) < kTol, "conv3d input gradient");
    c.that(fd_max(w, grads.weights, 1e-3, loss) < kTol, "conv3d weight gradient");
    c.that(fd_max(b, grads.bias, 1e-3, loss) < kTol, "conv3d bias gradient");
  }
  {  // 2-d same-padded convolution
    TensorND x = rand_t({1, 2, 5, 4}, rng);
    TensorND w = rand_t({2, 2, 3, 3}, rng);
    TensorND b = rand_t({2}, rng);
    TensorND g = rand_t(nn::conv_nd(x, w, b).shape, rng);
    auto loss = [&] { return dot(nn::conv_nd(x, w, b), g); };
    const auto grads = nn::conv_nd_backward(g, x, w);
    c.that(fd_max(x, grads.input, 1e-3, loss) < kTol, "conv2d input gradient");
    c.that(fd_max(w, grads.weights, 1e-3, loss) < kTol, "conv2d weight gradient");
    c.that(fd_max(b, grads.bias, 1e-3, loss) < kTol, "conv2d bias gradient");
  }
  {  // 1x1x1 convolution (channel mixing): exactly linear, strict bound
    TensorND x = rand_t({1, 2, 3, 3, 2}, rng);
    TensorND w = rand_t({3, 2, 1, 1, 1}, rng);
    TensorND b = rand_t({3}, rng);
    TensorND g = rand_t(nn::conv_nd(x, w, b).shape, rng);
    auto loss = [&] { return dot(nn::conv_nd(x, w, b), g); };
    const auto grads = nn::conv_nd_backward(g, x, w);
    c.that(fd_max(x, grads.input, 1e-2, loss) < kLinTol, "pointwise conv input gradient");
    c.that(fd_max(w, grads.weights, 1e-2, loss) < kLinTol, "pointwise conv weight gradient");
    c.that(fd_max(b, grads.bias, 1e-2, loss) < kLinTol, "pointwise conv bias gradient");
  }
  {  // strided valid convolution (patch embedding)
    TensorND x = rand_t({1, 1, 4, 4, 4}, rng);
    TensorND w = rand_t({5, 1, 2, 2, 2}, rng);
    TensorND b = rand_t({5}, rng);
    TensorND g = rand_t(nn::conv_nd(x, w, b, 2, nn::Pad::valid).shape, rng);
    auto loss = [&] { return dot(nn::conv_nd(x, w, b, 2, nn::Pad::valid), g); };
    const auto grads = nn::conv_nd_backward(g, x, w, 2, nn::Pad::valid);
    c.that(fd_max(x, grads.input, 1e-3, loss) < kTol, "patch-embed input gradient");
    c.that(fd_max(w, grads.weights, 1e-3, loss) < kTol, "patch-embed weight gradient");
    c.that(fd_max(b, grads.bias, 1e-3, loss) < kTol, "patch-embed bias gradient");
  }
  {  // transposed convolution (learned upsampling)
    TensorND x = rand_t({1, 2, 3, 3, 2}, rng);
    TensorND w = rand_t({2, 3, 2, 2, 2}, rng);
    TensorND b = rand_t({3}, rng);
    TensorND g = rand_t(nn::tconv_nd(x, w, b, 2).shape, rng);
    auto loss = [&] { return dot(nn::tconv_nd(x, w, b, 2), g); };
    const auto grads = nn::tconv_nd_backward(g, x, w, 2);
    c.that(fd_max(x, grads.input, 1e-3, loss) < kTol, "tconv input gradient");
    c.that(fd_max(w, grads.weights, 1e-3, loss) < kTol, "tconv weight gradient");
    c.that(fd_max(b, grads.bias, 1e-3, loss) < kTol, "tconv bias gradient");
  }
  {  // max pooling, values well separated so probes never cross a selection
    TensorND x({1, 2, 4, 4});
    for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = 0.5 * static_cast<double>(i);
    rng.shuffle(x.data);
    std::vector<std::size_t> argmax;
    const TensorND y = nn::maxpool_nd(x, 2, argmax);
    TensorND g = rand_t(y.shape, rng);
    auto loss = [&] {
      std::vector<std::size_t> scratch;
      return dot(nn::maxpool_nd(x, 2, scratch), g);
    };
    const TensorND gx = nn::maxpool_nd_backward(g, argmax, x.shape);
    c.that(fd_max(x, gx, 1e-4, loss) < kTol, "max-pool gradient");
  }
  {  // rectifier, inputs kept away from the kink
    TensorND x({2, 3, 5});
    for (double& v : x.data) v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.05, 1.0);
    TensorND g = rand_t(x.shape, rng);
    auto loss = [&] { return dot(nn::relu(x), g); };
    const TensorND gx = nn::relu_backward(g, x);
    c.that(fd_max(x, gx, 1e-3, loss) < kTol, "relu gradient");
  }
  {  // sigmoid
    TensorND x = rand_t({2, 3, 4}, rng, 2.0);
    TensorND g = rand_t(x.shape, rng);
    auto loss = [&] { return dot(nn::sigmoid(x), g); };
    const TensorND gx = nn::sigmoid_backward(g, nn::sigmoid(x));
    c.that(fd_max(x, gx, 1e-4, loss) < kTol, "sigmoid gradient");
  }
  {  // fully connected layer: exactly linear, strict bound
    TensorND x = rand_t({4, 5}, rng);
    TensorND w = rand_t({5, 3}, rng);
    TensorND b = rand_t({3}, rng);
    TensorND g = rand_t({4, 3}, rng);
    auto loss = [&] { return dot(nn::linear(x, w, b), g); };
    const auto grads = nn::linear_backward(g, x, w);
    c.that(fd_max(x, grads.input, 1e-2, loss) < kLinTol, "linear input gradient");
    c.that(fd_max(w, grads.weights, 1e-2, loss) < kLinTol, "linear weight gradient");
    c.that(fd_max(b, grads.bias, 1e-2, loss) < kLinTol, "linear bias gradient");
  }
  {  // token matrix products (bilinear: strict in each argument)
    TensorND a = rand_t({3, 4}, rng);
    TensorND b = rand_t({4, 5}, rng);
    TensorND g = rand_t({3, 5}, rng);
    auto loss = [&] { return dot(nn::matmul(a, b), g); };
    c.that(fd_max(a, nn::matmul_bt(g, b), 1e-2, loss) < kLinTol, "matmul lhs gradient");
    c.that(fd_max(b, nn::matmul_at(a, g), 1e-2, loss) < kLinTol, "matmul rhs gradient");
  }
  {  // layer normalization
    TensorND x = rand_t({4, 6}, rng);
    TensorND gamma({6});
    TensorND beta({6});
    for (double& v : gamma.data) v = rng.uniform(0.5, 1.5);
    for (double& v : beta.data) v = rng.uniform(-0.5, 0.5);
    TensorND g = rand_t({4, 6}, rng);
    auto loss = [&] { return dot(nn::layernorm(x, gamma, beta), g); };
    const auto grads = nn::layernorm_backward(g, x, gamma, beta);
    c.that(fd_max(x, grads.input, 1e-5, loss) < kTol, "layernorm input gradient");
    c.that(fd_max(gamma, grads.gamma, 1e-5, loss) < kTol, "layernorm scale gradient");
    c.that(fd_max(beta, grads.beta, 1e-5, loss) < kTol, "layernorm shift gradient");
  }
  {  // row-wise softmax
    TensorND x = rand_t({4, 6}, rng);
    TensorND g = rand_t({4, 6}, rng);
    auto loss = [&] { return dot(nn::softmax_rows(x), g); };
    const TensorND gx = nn::softmax_rows_backward(g, nn::softmax_rows(x));
    c.that(fd_max(x, gx, 1e-5, loss) < kTol, "softmax gradient");
  }
  {  // channel concatenation / split routing: exact, strict bound
    TensorND a = rand_t({1, 2, 3, 3}, rng);
    TensorND b = rand_t({1, 3, 3, 3}, rng);
    TensorND g = rand_t(nn::concat_channels(a, b).shape, rng);
    auto loss = [&] { return dot(nn::concat_channels(a, b), g); };
    TensorND ga, gb;
    nn::split_channels(g, 2, ga, gb);
    c.that(fd_max(a, ga, 1e-2, loss) < kLinTol, "concat first-input gradient");
    c.that(fd_max(b, gb, 1e-2, loss) < kLinTol, "concat second-input gradient");
  }
  {  // elementwise mask application (how dropout scales activations)
    TensorND a = rand_t({2, 3, 4}, rng);
    Rng mask_rng(11);
    const TensorND mask = nn::dropout_mask(a.shape, 0.25, mask_rng);
    TensorND g = rand_t(a.shape, rng);
    auto loss = [&] { return dot(nn::hadamard(a, mask), g); };
    const TensorND ga = nn::hadamard(g, mask);
    c.that(fd_max(a, ga, 1e-2, loss) < kLinTol, "masked-activation gradient");
  }
  {  // soft-Dice loss
    TensorND p({1, 1, 3, 4, 4});
    TensorND t({1, 1, 3, 4, 4});
    for (double& v : p.data) v = rng.uniform(0.05, 0.95);
    for (double& v : t.data) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
    auto loss = [&] { return soft_dice_loss(p, t, 1.0); };
    const TensorND gp = soft_dice_loss_backward(p, t, 1.0);
    c.that(fd_max(p, gp, 1e-5, loss) < kTol, "soft-dice loss gradient");
  }

  // whole networks at toy size, via the kink-aware whole-model checker
  {
    NetConfig cfg;
    cfg.kind = NetKind::unet2d;
    cfg.input_dims = {16, 16};
    cfg.channel_widths = {4, 8};
    cfg.seed = 47;
    const double err = grad_check(build_unet2d(cfg), tube_sample({16, 16, 16}, 1));
    c.that(err < kTol, str("unet2d builder gradient error ", err));
  }
  {
    NetConfig cfg;
    cfg.kind = NetKind::unet3d;
    cfg.input_dims = {8, 8, 8};
    cfg.channel_widths = {4, 8};
    cfg.seed = 53;
    const double err = grad_check(build_unet3d(cfg), tube_sample({8, 8, 8}, 2));
    c.that(err < kTol, str("unet3d builder gradient error ", err));
  }
  {
    NetConfig cfg;
    cfg.kind = NetKind::unetr;
    cfg.input_dims = {16, 16, 16};
    cfg.patch_size = 8;
    cfg.embed_dim = 16;
    cfg.heads = 2;
    cfg.depth = 1;
    cfg.seed = 59;
    const double err = grad_check(build_unetr(cfg), tube_sample({16, 16, 16}, 3));
    c.that(err < kTol, str("transformer builder gradient error ", err));
  }
  c.detail = str("13 primitives + 3 builders, ", c.total,
                 " gradient checks (<1e-4, linear maps <1e-8)");
}

// --- check 7: single-phantom overfit -----------------------------------------

void overfit_smoke(Check& c) {
  const auto t0 = Clock::now();
  const PhantomSpec spec = random_airway_spec({32, 32, 32}, 7);
  auto [img, lbl] = make_airway_phantom(spec);
  SamplePair s;
  s.id = "phantom";
  s.image = std::move(img);
  s.label = std::move(lbl);
  c.that(s.label.foreground_count() > 0, "phantom has foreground");
  const std::vector<SamplePair> ds = {s};

  NetConfig cfg;
  cfg.kind = NetKind::unet3d;
  cfg.input_dims = {32, 32, 32};
  cfg.channel_widths = {8, 16, 32};
  cfg.seed = 2026;  // recorded: rerunning reproduces the same trajectory
  NetState net = build_net(cfg);

  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.epochs = 1;
  tc.steps_per_epoch = 25;
  tc.seed = 2026;

  // chained 25-step rounds (the Adam step count persists, so this is
  // identical to one long run) with early exit once the target is reached
  double loss = std::numeric_limits<double>::infinity();
  while (net.step < 300) {
    TrainResult tr = train(std::move(net), ds, tc);
    net = std::move(tr.net);
    loss = tr.history.back();
    if (loss < 0.05) break;
  }
  const double dt = seconds_since(t0);
  c.that(loss < 0.05, str("loss ", fmt(loss, 5), " after ", net.step, " steps"));
  c.that(net.step <= 300, "step budget exceeded");
  c.that(dt < 300.0, str("runtime ", fmt(dt, 1), "s exceeds the 5-minute budget"));
  c.detail = str("loss ", fmt(loss, 5), " at step ", net.step, " (seed 2026, lr 1e-3, ",
                 fmt(dt, 1), "s)");
}

// --- check 8: frozen-prefix transfer ------------------------------------------

void transfer_contract(Check& c) {
  const auto t0 = Clock::now();
  const std::array<std::size_t, 3> dims = {24, 24, 24};

  auto lung_sample = [&](std::uint64_t seed, int i) {
    LungPhantomSpec sp = random_lunglike_spec(dims, seed);
    sp.noise_sigma = 0.1;
    auto [img, lbl] = make_lunglike_phantom(sp);
    SamplePair s;
    s.id = "pre-" + std::to_string(i);
    s.image = std::move(img);
    s.label = std::move(lbl);
    return s;
  };
  auto airway_sample = [&](std::uint64_t seed, const char* prefix, int i) {
    PhantomSpec sp = random_airway_spec(dims, seed);
    sp.noise_sigma = 0.1;
    auto [img, lbl] = make_airway_phantom(sp);
    SamplePair s;
    s.id = std::string(prefix) + "-" + std::to_string(i);
    s.image = std::move(img);
    s.label = std::move(lbl);
    return s;
  };

  std::vector<SamplePair> pre, ft, val;
  for (int i = 0; i < 8; ++i) pre.push_back(lung_sample(100 + i, i));
  for (int i = 0; i < 4; ++i) ft.push_back(airway_sample(200 + i, "ft", i));
  for (int i = 0; i < 3; ++i) val.push_back(airway_sample(300 + i, "val", i));

  auto val_dice = [&](const NetState& net) {
    double sum = 0.0;
    for (const auto& s : val) sum += dice(predict_volume(net, s.image, 0.5), s.label);
    return sum / static_cast<double>(val.size());
  };

  double margin_sum = 0.0;
  std::string margins;
  for (std::uint64_t s = 1; s <= 3; ++s) {
    NetConfig cfg;
    cfg.kind = NetKind::unet3d;
    cfg.input_dims = {24, 24, 24};
    cfg.channel_widths = {8, 16, 32};
    cfg.seed = 9000 + s;

    TrainConfig pre_tc;
    pre_tc.learning_rate = 1e-3;
    pre_tc.epochs = 6;
    pre_tc.steps_per_epoch = 10;
    pre_tc.seed = 5000 + s;
    const TrainResult pretrained = train(build_unet3d(cfg), pre, pre_tc);

    TrainConfig ft_tc;
    ft_tc.learning_rate = 1e-3;
    ft_tc.epochs = 2;
    ft_tc.steps_per_epoch = 10;
    ft_tc.seed = 6000 + s;

    const NetState frozen = freeze_prefix(pretrained.net, 3);
    const TrainResult transferred = train(frozen, ft, ft_tc);

    // the frozen prefix must be bit-identical to the pre-trained weights
    int frozen_tensors = 0;
    bool identical = true;
    for (std::size_t i = 0; i < frozen.parameters.size(); ++i) {
      if (frozen.parameters[i].layer >= 3) continue;
      ++frozen_tensors;
      identical = identical && tensor_bits_equal(transferred.net.parameters[i].value,
                                                 pretrained.net.parameters[i].value);
    }
    c.that(frozen_tensors > 0, "frozen prefix is non-empty");
    c.that(identical, str("seed ", s, ": frozen prefix drifted during fine-tuning"));

    // fresh initialization trained with the identical fine-tune budget
    NetConfig base_cfg = cfg;
    base_cfg.seed = 9100 + s;
    const TrainResult baseline = train(build_unet3d(base_cfg), ft, ft_tc);

    const double margin = val_dice(transferred.net) - val_dice(baseline.net);
    margin_sum += margin;
    margins += (margins.empty() ? "" : "/") + fmt(margin, 3);
  }
  const double mean_margin = margin_sum / 3.0;
  c.that(mean_margin >= 0.02,
         str("mean held-out dice margin ", fmt(mean_margin, 4), " < 0.02"));
  const double dt = seconds_since(t0);
  c.detail = str("margins ", margins, " over 3 seeds, mean ", fmt(mean_margin, 3),
                 " >= 0.02; frozen prefix bit-identical (", fmt(dt, 1), "s)");
}

// --- check 9: diffusion invariants --------------------------------------------

void diffusion_invariants(Check& c) {
  const std::array<std::array<std::size_t, 3>, 4> dims_cycle = {
      {{12, 11, 9}, {14, 10, 8}, {9, 9, 9}, {16, 7, 5}}};
  int volumes = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Volume v;
    v.meta.dims = dims_cycle[seed % dims_cycle.size()];
    v.data.resize(v.meta.voxel_count());
    Rng rng(derive_seed(20260901, seed));
    for (float& x : v.data) x = static_cast<float>(rng.uniform(-40.0, 300.0));

    const Volume out = diffuse_gad(v, 4, 1.0 / 6.0, 25.0);

    double before = 0.0, after = 0.0;
    for (float x : v.data) before += x;
    for (float x : out.data) after += x;
    c.that(std::abs(after - before) <= 1e-6 * std::abs(before),
           str("seed ", seed, ": sum drifted by ", std::abs(after - before)));

    const auto [lo, hi] = std::minmax_element(v.data.begin(), v.data.end());
    bool inside = true;
    for (float x : out.data) inside = inside && x >= *lo && x <= *hi;
    c.that(inside, str("seed ", seed, ": a voxel left the input's [min, max] range"));
    ++volumes;
  }
  c.that(volumes == 100, "expected 100 volumes");
  c.detail = "100 random volumes, sum conserved to 1e-6 relative, extrema bounded";
}

// --- check 10: command-line determinism ----------------------------------------

int run_in(const fs::path& dir, const std::string& cmd) {
  const std::string full = "cd '" + dir.string() + "' && " + cmd + " >>cmd.log 2>&1";
  const int rc = std::system(full.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

constexpr const char* kPipelineConfig = R"([synth]
count = 3
dims = [16, 16, 16]
noise_sigma = 0.05

[net]
input_dims = [16, 16, 16]
channel_widths = [4, 8]

[train]
steps_per_epoch = 10

[predict]
checkpoint = "model/checkpoint.vtck"

[metrics]
reference = "data"
model = "toy3d"
)";

void run_pipeline(Check& c, const fs::path& root, int jobs) {
  fs::create_directories(root);
  std::ofstream(root / "accept.toml") << kPipelineConfig;
  const std::string bin = std::string("'") + VTSEG_CLI_PATH + "'";
  const std::string j = " --jobs " + std::to_string(jobs);
  const std::vector<std::string> steps = {
      bin + " synth --config accept.toml --seed 77" + j + " --out data",
      bin + " augment data --config accept.toml --seed 77" + j + " --out aug",
      bin + " train data --config accept.toml --seed 77 --out model",
      bin + " predict data --config accept.toml --seed 77" + j + " --out preds",
      bin + " eval preds --config accept.toml --seed 77" + j + " --out scores",
      bin + " report scores/records.csv --config accept.toml --seed 77 --format markdown"
            " --out report",
  };
  for (const auto& step : steps) {
    const int rc = run_in(root, step);
    c.that(rc == 0, str("exit ", rc, " from: ", step));
    if (rc != 0) return;
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::map<std::string, fs::path> tree_files(const fs::path& root) {
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) {
      const auto rel = fs::relative(e.path(), root).generic_string();
      if (rel == "cmd.log") continue;  // free-form command log, not an artifact
      out.emplace(rel, e.path());
    }
  return out;
}

int compare_trees(const fs::path& a, const fs::path& b, Check& c, const std::string& what) {
  const auto fa = tree_files(a);
  const auto fb = tree_files(b);
  std::vector<std::string> ka, kb;
  for (const auto& [k, p] : fa) ka.push_back(k);
  for (const auto& [k, p] : fb) kb.push_back(k);
  c.that(ka == kb, what + ": the two runs produced different file sets");
  if (ka != kb) return 0;
  int compared = 0;
  for (const auto& [k, pa] : fa) {
    c.that(slurp(pa) == slurp(fb.at(k)), what + ": bytes differ for " + k);
    ++compared;
  }
  return compared;
}

void cli_determinism(Check& c) {
  const fs::path base = fs::temp_directory_path() / "vtseg_acceptance";
  std::error_code ec;
  fs::remove_all(base, ec);

  // three identical pipelines in sibling roots: every path inside a run is
  // relative, so even the provenance manifests must come out byte-identical
  run_pipeline(c, base / "run_a", 1);
  run_pipeline(c, base / "run_b", 1);
  run_pipeline(c, base / "run_j4", 4);
  if (c.failed > 0) return;

  for (const char* must :
       {"data/phantom_000_img.nrrd", "data/phantom_000_lbl.nrrd", "model/checkpoint.vtck",
        "model/history.csv", "preds/phantom_000_pred.nrrd", "scores/records.csv",
        "report/report.md", "model/manifest_train.json"})
    c.that(fs::exists(base / "run_a" / must), str("missing artifact ", must));

  const int rerun = compare_trees(base / "run_a", base / "run_b", c, "rerun");
  const int jobs = compare_trees(base / "run_a", base / "run_j4", c, "--jobs 4");
  c.that(rerun >= 20, str("only ", rerun, " files produced"));
  c.that(jobs == rerun, "job-count comparison covered a different file set");
  c.detail = str(rerun, " files (reports, checkpoints, volumes, manifests) byte-identical",
                 " across reruns and across --jobs 1 vs 4");
}

// --- registry -------------------------------------------------------------------

struct Criterion {
  int id;
  const char* title;
  void (*body)(Check&);
};

constexpr Criterion kCriteria[] = {
    {1, "distance/overlap/similarity metrics match independent oracles", metric_oracles},
    {2, "aggregation reproduces every rounded summary cell", summary_table},
    {3, "consensus EM tracks a brute-force oracle at every iterate", em_micro_oracle},
    {4, "consensus EM recovers simulated rater error rates within 0.03", em_recovery},
    {5, "unanimous raters are a consensus fixpoint within 5 iterations", unanimity_fixpoint},
    {6, "every differentiable primitive and builder passes FD checks", gradient_checks},
    {7, "a toy 3-d net overfits one phantom below 0.05 soft-dice loss", overfit_smoke},
    {8, "frozen-prefix transfer beats fresh initialization by >= 0.02", transfer_contract},
    {9, "diffusion conserves intensity sum and respects input extrema", diffusion_invariants},
    {10, "CLI pipeline is byte-identical across reruns and --jobs", cli_determinism},
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int ran = 0;
  int failures = 0;
  for (const auto& cr : kCriteria) {
    if (!only.empty() && only.count(cr.id) == 0) continue;
    ++ran;
    Check c;
    const auto t0 = Clock::now();
    try {
      cr.body(c);
    } catch (const std::exception& e) {
      c.that(false, str("unexpected exception: ", e.what()));
    }
    const double dt = seconds_since(t0);
    if (c.failed == 0) {
      std::printf("[PASS] %2d  %s — %s [%.1fs]\n", cr.id, cr.title, c.detail.c_str(), dt);
    } else {
      ++failures;
      std::printf("[FAIL] %2d  %s — %d of %d assertions failed; first: %s [%.1fs]\n", cr.id,
                  cr.title, c.failed, c.total, c.first.c_str(), dt);
    }
    std::fflush(stdout);
  }
  std::printf("%d/%d checks passed\n", ran - failures, ran);
  return failures;
}
