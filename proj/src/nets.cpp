#include "vtseg/nets.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "vtseg/metrics.hpp"
#include "vtseg/nn_ops.hpp"
#include "vtseg/rng.hpp"

namespace vtseg {
namespace {

using nn::Pad;

constexpr double kIntensityScale = 1.0 / 255.0;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

// Substream tags for deriving independent RNG streams from one seed.
constexpr std::uint64_t kStreamInit = 0x696e6974;      // parameter initialization
constexpr std::uint64_t kStreamOrder = 0x6f726472;     // epoch shuffles
constexpr std::uint64_t kStreamDropout = 0x64726f70;   // per-step dropout masks
constexpr std::uint64_t kStreamGradCheck = 0x67636b;   // finite-difference sampling
constexpr std::uint64_t kStreamGridSearch = 0x67726964;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

bool is_power_of_two(std::size_t v) { return v >= 1 && (v & (v - 1)) == 0; }

std::size_t ilog2(std::size_t v) {
  std::size_t r = 0;
  while (v > 1) {
    v >>= 1;
    ++r;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Parameter bookkeeping shared by the builders and the forward/backward code.

struct ParamWriter {
  NetState& net;
  Rng rng;

  std::size_t tensor(std::string name, std::size_t layer, std::vector<std::size_t> shape,
                     double gauss_std, double constant = 0.0) {
    Param p;
    p.name = std::move(name);
    p.layer = layer;
    p.value = TensorND(shape);
    if (gauss_std > 0.0) {
      for (double& v : p.value.data) v = rng.next_gaussian() * gauss_std;
    } else {
      std::fill(p.value.data.begin(), p.value.data.end(), constant);
    }
    p.adam_m = TensorND(shape);
    p.adam_v = TensorND(std::move(shape));
    net.parameters.push_back(std::move(p));
    return net.parameters.size() - 1;
  }

  // Biases start at a small positive constant rather than zero. With zero
  // biases, any grid position whose incoming activations are all zeroed by a
  // relu produces a pre-activation of exactly 0.0 downstream, parking the
  // function on the relu kink where finite differences and the subgradient
  // legitimately disagree; the offset keeps initialization off the kink.
  static constexpr double kBiasInit = 0.01;

  // weight + bias pair for a convolution-like layer; `gain` 2 for He
  // (ReLU follows), 1 for Xavier-style (linear output).
  void conv_layer(const std::string& name, std::size_t layer,
                  std::vector<std::size_t> wshape, std::size_t fan_in, double gain) {
    const double std_dev = std::sqrt(gain / static_cast<double>(fan_in));
    const std::size_t cout_axis = wshape[0];
    tensor(name + ".weight", layer, std::move(wshape), std_dev);
    tensor(name + ".bias", layer, {cout_axis}, 0.0, kBiasInit);
  }

  void tconv_layer(const std::string& name, std::size_t layer,
                   std::vector<std::size_t> wshape, std::size_t fan_in, double gain) {
    const double std_dev = std::sqrt(gain / static_cast<double>(fan_in));
    const std::size_t cout_axis = wshape[1];
    tensor(name + ".weight", layer, std::move(wshape), std_dev);
    tensor(name + ".bias", layer, {cout_axis}, 0.0, kBiasInit);
  }

  void linear_layer(const std::string& name, std::size_t layer, std::size_t in,
                    std::size_t out, double gain) {
    const double std_dev = std::sqrt(gain / static_cast<double>(in));
    tensor(name + ".weight", layer, {in, out}, std_dev);
    tensor(name + ".bias", layer, {out}, 0.0, kBiasInit);
  }

  void norm_layer(const std::string& name, std::size_t layer, std::size_t width) {
    tensor(name + ".scale", layer, {width}, 0.0, 1.0);
    tensor(name + ".shift", layer, {width}, 0.0, 0.0);
  }
};

// ---------------------------------------------------------------------------
// U-Net (2D and 3D share the code; the spatial rank comes from the config).
//
// Layer sequence (forward-definition order), L = channel_widths.size():
//   encoder level i in [0, L-2]: conv1, conv2        (layers 2i, 2i+1)
//   bottleneck: conv1, conv2                          (layers 2L-2, 2L-1)
//   decoder level i from L-2 down to 0: up, conv1, conv2
//   head (1x1 convolution)
// Every layer owns a weight and a bias, so parameter indices are
// (2*layer, 2*layer + 1).

std::size_t unet_layer_count(const NetConfig& cfg) {
  return 5 * cfg.channel_widths.size() - 2;
}

std::vector<std::size_t> unet_kernel(const NetConfig& cfg, std::size_t k) {
  return cfg.kind == NetKind::unet2d ? std::vector<std::size_t>{k, k}
                                     : std::vector<std::size_t>{k, k, k};
}

NetState build_unet(const NetConfig& cfg) {
  NetState net;
  net.config = cfg;
  ParamWriter w{net, Rng(derive_seed(cfg.seed, kStreamInit))};
  const auto& widths = cfg.channel_widths;
  const std::size_t L = widths.size();
  const std::size_t k = cfg.kernel_size;
  const std::size_t f = cfg.pool_factor;
  const std::size_t kvol = cfg.kind == NetKind::unet2d ? k * k : k * k * k;
  const std::size_t fvol = cfg.kind == NetKind::unet2d ? f * f : f * f * f;

  auto wshape = [&](std::size_t co, std::size_t ci, std::size_t kk) {
    std::vector<std::size_t> s{co, ci};
    auto sp = unet_kernel(cfg, kk);
    s.insert(s.end(), sp.begin(), sp.end());
    return s;
  };

  std::size_t layer = 0;
  std::size_t cin = 1;
  for (std::size_t i = 0; i + 1 < L; ++i) {
    const std::string base = "enc" + std::to_string(i);
    w.conv_layer(base + ".conv1", layer++, wshape(widths[i], cin, k), cin * kvol, 2.0);
    w.conv_layer(base + ".conv2", layer++, wshape(widths[i], widths[i], k),
                 widths[i] * kvol, 2.0);
    cin = widths[i];
  }
  w.conv_layer("bottleneck.conv1", layer++, wshape(widths[L - 1], cin, k), cin * kvol,
               2.0);
  w.conv_layer("bottleneck.conv2", layer++, wshape(widths[L - 1], widths[L - 1], k),
               widths[L - 1] * kvol, 2.0);
  for (std::size_t down = 0; down + 1 < L; ++down) {
    const std::size_t i = L - 2 - down;  // decoder runs deep to shallow
    const std::string base = "dec" + std::to_string(i);
    std::vector<std::size_t> tshape{widths[i + 1], widths[i]};
    auto sp = unet_kernel(cfg, f);
    tshape.insert(tshape.end(), sp.begin(), sp.end());
    w.tconv_layer(base + ".up", layer++, std::move(tshape), widths[i + 1] * fvol, 1.0);
    w.conv_layer(base + ".conv1", layer++, wshape(widths[i], 2 * widths[i], k),
                 2 * widths[i] * kvol, 2.0);
    w.conv_layer(base + ".conv2", layer++, wshape(widths[i], widths[i], k),
                 widths[i] * kvol, 2.0);
  }
  w.conv_layer("head", layer++, wshape(1, widths[0], 1), widths[0], 1.0);
  return net;
}

struct UnetCache {
  std::vector<TensorND> conv_in;  // input to the conv/tconv of each layer
  std::vector<TensorND> act_pre;  // pre-ReLU values where a ReLU follows
  std::vector<std::vector<std::size_t>> pool_argmax;
  std::vector<std::vector<std::size_t>> pool_in_shape;
  std::vector<TensorND> skips;
  std::vector<std::size_t> up_channels;  // decoder-path channels at each concat
  TensorND drop_mask;
  TensorND out;
};

const TensorND& pw(const NetState& net, std::size_t layer) {
  return net.parameters[2 * layer].value;
}
const TensorND& pb(const NetState& net, std::size_t layer) {
  return net.parameters[2 * layer + 1].value;
}

TensorND unet_forward(const NetState& net, const TensorND& x, double dropout_rate,
                      Rng* drop_rng, UnetCache& cc) {
  const NetConfig& cfg = net.config;
  const std::size_t L = cfg.channel_widths.size();
  const std::size_t n_layers = unet_layer_count(cfg);
  cc.conv_in.assign(n_layers, {});
  cc.act_pre.assign(n_layers, {});
  cc.pool_argmax.assign(L - 1, {});
  cc.pool_in_shape.assign(L - 1, {});
  cc.skips.assign(L - 1, {});
  cc.up_channels.assign(L - 1, 0);

  std::size_t li = 0;
  TensorND t = x;
  auto conv_relu = [&](TensorND in) {
    cc.conv_in[li] = std::move(in);
    cc.act_pre[li] = nn::conv_nd(cc.conv_in[li], pw(net, li), pb(net, li));
    TensorND out = nn::relu(cc.act_pre[li]);
    ++li;
    return out;
  };

  for (std::size_t i = 0; i + 1 < L; ++i) {
    t = conv_relu(std::move(t));
    t = conv_relu(std::move(t));
    cc.skips[i] = t;
    cc.pool_in_shape[i] = t.shape;
    t = nn::maxpool_nd(t, cfg.pool_factor, cc.pool_argmax[i]);
  }
  t = conv_relu(std::move(t));
  t = conv_relu(std::move(t));
  if (dropout_rate > 0.0 && drop_rng != nullptr) {
    cc.drop_mask = nn::dropout_mask(t.shape, dropout_rate, *drop_rng);
    t = nn::hadamard(t, cc.drop_mask);
  }
  for (std::size_t down = 0; down + 1 < L; ++down) {
    const std::size_t i = L - 2 - down;
    cc.conv_in[li] = std::move(t);
    TensorND up = nn::tconv_nd(cc.conv_in[li], pw(net, li), pb(net, li), cfg.pool_factor);
    ++li;
    cc.up_channels[i] = up.shape[1];
    t = nn::concat_channels(up, cc.skips[i]);
    t = conv_relu(std::move(t));
    t = conv_relu(std::move(t));
  }
  cc.conv_in[li] = std::move(t);
  TensorND logits = nn::conv_nd(cc.conv_in[li], pw(net, li), pb(net, li));
  cc.out = nn::sigmoid(logits);
  return cc.out;
}

void unet_backward(const NetState& net, const UnetCache& cc, const TensorND& dout,
                   std::vector<TensorND>& grads) {
  const NetConfig& cfg = net.config;
  const std::size_t L = cfg.channel_widths.size();
  std::size_t li = unet_layer_count(cfg) - 1;

  auto conv_back = [&](const TensorND& g) {
    nn::ConvGrads cg = nn::conv_nd_backward(g, cc.conv_in[li], pw(net, li));
    grads[2 * li] = nn::add(grads[2 * li], cg.weights);
    grads[2 * li + 1] = nn::add(grads[2 * li + 1], cg.bias);
    --li;
    return std::move(cg.input);
  };
  auto conv_relu_back = [&](const TensorND& g) {
    return conv_back(nn::relu_backward(g, cc.act_pre[li]));
  };

  TensorND g = nn::sigmoid_backward(dout, cc.out);
  g = conv_back(g);  // head

  std::vector<TensorND> skip_grad(L - 1);
  for (std::size_t i = 0; i + 1 < L; ++i) {  // decoder levels, reverse of forward
    g = conv_relu_back(g);
    g = conv_relu_back(g);
    TensorND g_up, g_skip;
    nn::split_channels(g, cc.up_channels[i], g_up, g_skip);
    skip_grad[i] = std::move(g_skip);
    nn::ConvGrads tg =
        nn::tconv_nd_backward(g_up, cc.conv_in[li], pw(net, li), cfg.pool_factor);
    grads[2 * li] = nn::add(grads[2 * li], tg.weights);
    grads[2 * li + 1] = nn::add(grads[2 * li + 1], tg.bias);
    --li;
    g = std::move(tg.input);
  }
  if (cc.drop_mask.size() > 0) g = nn::hadamard(g, cc.drop_mask);
  g = conv_relu_back(g);
  g = conv_relu_back(g);
  for (std::size_t down = 0; down + 1 < L; ++down) {
    const std::size_t i = L - 2 - down;  // encoder levels, reverse of forward
    g = nn::maxpool_nd_backward(g, cc.pool_argmax[i], cc.pool_in_shape[i]);
    g = nn::add(g, skip_grad[i]);
    g = conv_relu_back(g);
    g = conv_relu_back(g);
  }
}

// ---------------------------------------------------------------------------
// Transformer encoder-decoder.
//
// Layer sequence: patch.proj (0), pos (1), then per block b:
//   enc{b}.attn.norm, .attn.q, .attn.k, .attn.v, .attn.proj,
//   enc{b}.ff.norm, .ff.fc1, .ff.fc2                  (8 layers per block)
// then fuse.conv, dec{0..S-1}.up, skip.conv, merge.conv, head, where
// S = log2(patch_size) transposed-convolution stages return the patch grid to
// the input resolution.

struct UnetrLayout {
  std::array<std::size_t, 3> grid{};  // (gz, gy, gx)
  std::size_t tokens = 0;
  std::size_t embed = 0;
  std::size_t head_dim = 0;
  std::size_t stages = 0;                 // transposed-conv upsampling stages
  std::vector<std::size_t> tap_blocks;    // 0-based indices of tapped blocks
  std::vector<std::size_t> dec_channels;  // channels entering/leaving each stage

  // parameter indices
  std::size_t patch_w = 0, patch_b = 0, pos = 0;
  struct Block {
    std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t ln2_g, ln2_b, w1, b1, w2, b2;
  };
  std::vector<Block> blocks;
  std::size_t fuse_w = 0, fuse_b = 0;
  std::vector<std::array<std::size_t, 2>> dec;
  std::size_t skip_w = 0, skip_b = 0, merge_w = 0, merge_b = 0;
  std::size_t head_w = 0, head_b = 0;

  // layer indices
  std::size_t fuse_layer = 0, skip_layer = 0, merge_layer = 0, head_layer = 0;
  std::vector<std::size_t> dec_layer;
};

UnetrLayout unetr_layout(const NetConfig& cfg) {
  UnetrLayout lo;
  const std::size_t p = cfg.patch_size;
  lo.grid = {cfg.input_dims[2] / p, cfg.input_dims[1] / p, cfg.input_dims[0] / p};
  lo.tokens = lo.grid[0] * lo.grid[1] * lo.grid[2];
  lo.embed = cfg.embed_dim;
  lo.head_dim = cfg.embed_dim / cfg.heads;
  lo.stages = ilog2(p);
  const std::size_t n_taps = std::min(cfg.depth, lo.stages);
  for (std::size_t i = 1; i <= n_taps; ++i) {
    // evenly spaced, rounding up, so the deepest block is always tapped
    lo.tap_blocks.push_back((cfg.depth * i + n_taps - 1) / n_taps - 1);
  }
  lo.dec_channels.push_back(lo.embed);
  for (std::size_t s = 1; s <= lo.stages; ++s) {
    lo.dec_channels.push_back(std::max<std::size_t>(lo.embed >> s, 8));
  }

  std::size_t idx = 0;
  lo.patch_w = idx++;
  lo.patch_b = idx++;
  lo.pos = idx++;
  for (std::size_t b = 0; b < cfg.depth; ++b) {
    UnetrLayout::Block blk;
    blk.ln1_g = idx++;
    blk.ln1_b = idx++;
    blk.wq = idx++;
    blk.bq = idx++;
    blk.wk = idx++;
    blk.bk = idx++;
    blk.wv = idx++;
    blk.bv = idx++;
    blk.wo = idx++;
    blk.bo = idx++;
    blk.ln2_g = idx++;
    blk.ln2_b = idx++;
    blk.w1 = idx++;
    blk.b1 = idx++;
    blk.w2 = idx++;
    blk.b2 = idx++;
    lo.blocks.push_back(blk);
  }
  lo.fuse_w = idx++;
  lo.fuse_b = idx++;
  for (std::size_t s = 0; s < lo.stages; ++s) {
    lo.dec.push_back({idx, idx + 1});
    idx += 2;
  }
  lo.skip_w = idx++;
  lo.skip_b = idx++;
  lo.merge_w = idx++;
  lo.merge_b = idx++;
  lo.head_w = idx++;
  lo.head_b = idx++;

  const std::size_t blocks_base = 2;
  lo.fuse_layer = blocks_base + 8 * cfg.depth;
  lo.dec_layer.resize(lo.stages);
  for (std::size_t s = 0; s < lo.stages; ++s) lo.dec_layer[s] = lo.fuse_layer + 1 + s;
  lo.skip_layer = lo.fuse_layer + 1 + lo.stages;
  lo.merge_layer = lo.skip_layer + 1;
  lo.head_layer = lo.merge_layer + 1;
  return lo;
}

std::size_t unetr_layer_count(const NetConfig& cfg) {
  return unetr_layout(cfg).head_layer + 1;
}

NetState build_unetr_state(const NetConfig& cfg) {
  NetState net;
  net.config = cfg;
  ParamWriter w{net, Rng(derive_seed(cfg.seed, kStreamInit))};
  const UnetrLayout lo = unetr_layout(cfg);
  const std::size_t E = lo.embed;
  const std::size_t p = cfg.patch_size;
  const std::size_t pvol = p * p * p;

  w.conv_layer("patch.proj", 0, {E, 1, p, p, p}, pvol, 1.0);
  w.tensor("pos", 1, {lo.tokens, E}, 0.02);
  for (std::size_t b = 0; b < cfg.depth; ++b) {
    const std::string base = "enc" + std::to_string(b);
    const std::size_t layer0 = 2 + 8 * b;
    w.norm_layer(base + ".attn.norm", layer0, E);
    w.linear_layer(base + ".attn.q", layer0 + 1, E, E, 1.0);
    w.linear_layer(base + ".attn.k", layer0 + 2, E, E, 1.0);
    w.linear_layer(base + ".attn.v", layer0 + 3, E, E, 1.0);
    w.linear_layer(base + ".attn.proj", layer0 + 4, E, E, 1.0);
    w.norm_layer(base + ".ff.norm", layer0 + 5, E);
    w.linear_layer(base + ".ff.fc1", layer0 + 6, E, 2 * E, 2.0);
    w.linear_layer(base + ".ff.fc2", layer0 + 7, 2 * E, E, 1.0);
  }
  const std::size_t n_taps = lo.tap_blocks.size();
  w.conv_layer("fuse.conv", lo.fuse_layer, {E, n_taps * E, 3, 3, 3}, n_taps * E * 27,
               2.0);
  for (std::size_t s = 0; s < lo.stages; ++s) {
    const std::size_t ci = lo.dec_channels[s], co = lo.dec_channels[s + 1];
    w.tconv_layer("dec" + std::to_string(s) + ".up", lo.dec_layer[s], {ci, co, 2, 2, 2},
                  ci * 8, 2.0);
  }
  const std::size_t cs = lo.dec_channels.back();
  w.conv_layer("skip.conv", lo.skip_layer, {cs, 1, 3, 3, 3}, 27, 2.0);
  w.conv_layer("merge.conv", lo.merge_layer, {cs, 2 * cs, 3, 3, 3}, 2 * cs * 27, 2.0);
  w.conv_layer("head", lo.head_layer, {1, cs, 1, 1, 1}, cs, 1.0);
  return net;
}

TensorND take_cols(const TensorND& x, std::size_t c0, std::size_t w) {
  const std::size_t m = x.shape[0], n = x.shape[1];
  TensorND r({m, w});
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(x.data.begin() + i * n + c0, x.data.begin() + i * n + c0 + w,
              r.data.begin() + i * w);
  }
  return r;
}

void put_cols(TensorND& dst, const TensorND& src, std::size_t c0) {
  const std::size_t m = dst.shape[0], n = dst.shape[1], w = src.shape[1];
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(src.data.begin() + i * w, src.data.begin() + (i + 1) * w,
              dst.data.begin() + i * n + c0);
  }
}

void add_cols(TensorND& dst, const TensorND& src, std::size_t c0) {
  const std::size_t m = dst.shape[0], n = dst.shape[1], w = src.shape[1];
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < w; ++j) dst.data[i * n + c0 + j] += src.data[i * w + j];
  }
}

// (1, E, gz, gy, gx) channel-major grid -> (T, E) token matrix and back.
TensorND grid_to_tokens(const TensorND& grid) {
  const std::size_t e = grid.shape[1];
  const std::size_t t = grid.shape[2] * grid.shape[3] * grid.shape[4];
  TensorND tok({t, e});
  for (std::size_t c = 0; c < e; ++c) {
    for (std::size_t i = 0; i < t; ++i) tok.data[i * e + c] = grid.data[c * t + i];
  }
  return tok;
}

TensorND tokens_to_grid(const TensorND& tok, const std::array<std::size_t, 3>& g) {
  const std::size_t t = tok.shape[0], e = tok.shape[1];
  TensorND grid({1, e, g[0], g[1], g[2]});
  for (std::size_t c = 0; c < e; ++c) {
    for (std::size_t i = 0; i < t; ++i) grid.data[c * t + i] = tok.data[i * e + c];
  }
  return grid;
}

struct UnetrBlockCache {
  TensorND t0, xn1, q, k, v;
  std::vector<TensorND> attn;  // per head, (T, T)
  TensorND attn_cat, t1, xn2, ff_pre, ff_act;
};

struct UnetrCache {
  TensorND x_input;
  TensorND tokens_final;
  std::vector<UnetrBlockCache> blocks;
  TensorND fuse_in, fuse_pre;
  TensorND drop_mask;
  std::vector<TensorND> dec_in, dec_pre;
  TensorND skip_pre;
  TensorND merge_in, merge_pre;
  std::size_t merge_up_channels = 0;
  TensorND head_in;
  TensorND out;
};

const TensorND& pv(const NetState& net, std::size_t idx) {
  return net.parameters[idx].value;
}

TensorND unetr_blocks_forward(const NetState& net, const UnetrLayout& lo,
                              const TensorND& x, std::vector<UnetrBlockCache>& blocks) {
  TensorND emb = nn::conv_nd(x, pv(net, lo.patch_w), pv(net, lo.patch_b),
                             net.config.patch_size, Pad::valid);
  TensorND tokens = nn::add(grid_to_tokens(emb), pv(net, lo.pos));
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(lo.head_dim));
  blocks.clear();
  for (std::size_t b = 0; b < net.config.depth; ++b) {
    const auto& ix = lo.blocks[b];
    UnetrBlockCache bc;
    bc.t0 = std::move(tokens);
    bc.xn1 = nn::layernorm(bc.t0, pv(net, ix.ln1_g), pv(net, ix.ln1_b));
    bc.q = nn::linear(bc.xn1, pv(net, ix.wq), pv(net, ix.bq));
    bc.k = nn::linear(bc.xn1, pv(net, ix.wk), pv(net, ix.bk));
    bc.v = nn::linear(bc.xn1, pv(net, ix.wv), pv(net, ix.bv));
    bc.attn_cat = TensorND({lo.tokens, lo.embed});
    for (std::size_t h = 0; h < net.config.heads; ++h) {
      const std::size_t c0 = h * lo.head_dim;
      TensorND qh = take_cols(bc.q, c0, lo.head_dim);
      TensorND kh = take_cols(bc.k, c0, lo.head_dim);
      TensorND vh = take_cols(bc.v, c0, lo.head_dim);
      TensorND a = nn::softmax_rows(nn::scale(nn::matmul_bt(qh, kh), att_scale));
      put_cols(bc.attn_cat, nn::matmul(a, vh), c0);
      bc.attn.push_back(std::move(a));
    }
    TensorND proj = nn::linear(bc.attn_cat, pv(net, ix.wo), pv(net, ix.bo));
    bc.t1 = nn::add(bc.t0, proj);
    bc.xn2 = nn::layernorm(bc.t1, pv(net, ix.ln2_g), pv(net, ix.ln2_b));
    bc.ff_pre = nn::linear(bc.xn2, pv(net, ix.w1), pv(net, ix.b1));
    bc.ff_act = nn::relu(bc.ff_pre);
    TensorND h2 = nn::linear(bc.ff_act, pv(net, ix.w2), pv(net, ix.b2));
    tokens = nn::add(bc.t1, h2);
    blocks.push_back(std::move(bc));
  }
  return tokens;
}

TensorND unetr_forward(const NetState& net, const TensorND& x, double dropout_rate,
                       Rng* drop_rng, UnetrCache& cc) {
  const UnetrLayout lo = unetr_layout(net.config);
  cc.x_input = x;
  cc.tokens_final = unetr_blocks_forward(net, lo, x, cc.blocks);

  auto block_output = [&](std::size_t b) -> const TensorND& {
    return b + 1 < cc.blocks.size() ? cc.blocks[b + 1].t0 : cc.tokens_final;
  };
  TensorND fused;
  for (std::size_t i = 0; i < lo.tap_blocks.size(); ++i) {
    TensorND grid = tokens_to_grid(block_output(lo.tap_blocks[i]), lo.grid);
    fused = i == 0 ? std::move(grid) : nn::concat_channels(fused, grid);
  }
  cc.fuse_in = std::move(fused);
  cc.fuse_pre = nn::conv_nd(cc.fuse_in, pv(net, lo.fuse_w), pv(net, lo.fuse_b));
  TensorND u = nn::relu(cc.fuse_pre);
  if (dropout_rate > 0.0 && drop_rng != nullptr) {
    cc.drop_mask = nn::dropout_mask(u.shape, dropout_rate, *drop_rng);
    u = nn::hadamard(u, cc.drop_mask);
  }
  cc.dec_in.assign(lo.stages, {});
  cc.dec_pre.assign(lo.stages, {});
  for (std::size_t s = 0; s < lo.stages; ++s) {
    cc.dec_in[s] = std::move(u);
    cc.dec_pre[s] =
        nn::tconv_nd(cc.dec_in[s], pv(net, lo.dec[s][0]), pv(net, lo.dec[s][1]), 2);
    u = nn::relu(cc.dec_pre[s]);
  }
  cc.skip_pre = nn::conv_nd(x, pv(net, lo.skip_w), pv(net, lo.skip_b));
  TensorND skip = nn::relu(cc.skip_pre);
  cc.merge_up_channels = u.shape[1];
  cc.merge_in = nn::concat_channels(u, skip);
  cc.merge_pre = nn::conv_nd(cc.merge_in, pv(net, lo.merge_w), pv(net, lo.merge_b));
  cc.head_in = nn::relu(cc.merge_pre);
  TensorND logits = nn::conv_nd(cc.head_in, pv(net, lo.head_w), pv(net, lo.head_b));
  cc.out = nn::sigmoid(logits);
  return cc.out;
}

void unetr_backward(const NetState& net, const UnetrCache& cc, const TensorND& dout,
                    std::vector<TensorND>& grads) {
  const UnetrLayout lo = unetr_layout(net.config);
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(lo.head_dim));
  auto acc = [&](std::size_t idx, const TensorND& g) {
    grads[idx] = nn::add(grads[idx], g);
  };

  TensorND g = nn::sigmoid_backward(dout, cc.out);
  {
    nn::ConvGrads cg = nn::conv_nd_backward(g, cc.head_in, pv(net, lo.head_w));
    acc(lo.head_w, cg.weights);
    acc(lo.head_b, cg.bias);
    g = std::move(cg.input);
  }
  g = nn::relu_backward(g, cc.merge_pre);
  {
    nn::ConvGrads cg = nn::conv_nd_backward(g, cc.merge_in, pv(net, lo.merge_w));
    acc(lo.merge_w, cg.weights);
    acc(lo.merge_b, cg.bias);
    g = std::move(cg.input);
  }
  TensorND g_u, g_skip;
  nn::split_channels(g, cc.merge_up_channels, g_u, g_skip);
  {
    TensorND gs = nn::relu_backward(g_skip, cc.skip_pre);
    nn::ConvGrads cg = nn::conv_nd_backward(gs, cc.x_input, pv(net, lo.skip_w));
    acc(lo.skip_w, cg.weights);
    acc(lo.skip_b, cg.bias);
  }
  for (std::size_t s = lo.stages; s-- > 0;) {
    g_u = nn::relu_backward(g_u, cc.dec_pre[s]);
    nn::ConvGrads cg = nn::tconv_nd_backward(g_u, cc.dec_in[s], pv(net, lo.dec[s][0]), 2);
    acc(lo.dec[s][0], cg.weights);
    acc(lo.dec[s][1], cg.bias);
    g_u = std::move(cg.input);
  }
  if (cc.drop_mask.size() > 0) g_u = nn::hadamard(g_u, cc.drop_mask);
  g_u = nn::relu_backward(g_u, cc.fuse_pre);
  nn::ConvGrads fuse_g = nn::conv_nd_backward(g_u, cc.fuse_in, pv(net, lo.fuse_w));
  acc(lo.fuse_w, fuse_g.weights);
  acc(lo.fuse_b, fuse_g.bias);

  // Tap gradients: split the fused-input gradient back into per-tap grids and
  // turn each into a token-matrix gradient at its block's output.
  std::vector<TensorND> tap_grad(net.config.depth);
  {
    TensorND rest = std::move(fuse_g.input);
    for (std::size_t i = 0; i < lo.tap_blocks.size(); ++i) {
      TensorND first = std::move(rest);
      if (i + 1 < lo.tap_blocks.size()) {
        TensorND a, b;
        nn::split_channels(first, lo.embed, a, b);
        first = std::move(a);
        rest = std::move(b);
      }
      tap_grad[lo.tap_blocks[i]] = grid_to_tokens(first);
    }
  }

  TensorND g_tok({lo.tokens, lo.embed});
  for (std::size_t b = net.config.depth; b-- > 0;) {
    if (tap_grad[b].size() > 0) g_tok = nn::add(g_tok, tap_grad[b]);
    const auto& ix = lo.blocks[b];
    const UnetrBlockCache& bc = cc.blocks[b];
    // feed-forward branch
    TensorND dt1 = g_tok;
    {
      nn::LinearGrads lg2 = nn::linear_backward(g_tok, bc.ff_act, pv(net, ix.w2));
      acc(ix.w2, lg2.weights);
      acc(ix.b2, lg2.bias);
      TensorND dff = nn::relu_backward(lg2.input, bc.ff_pre);
      nn::LinearGrads lg1 = nn::linear_backward(dff, bc.xn2, pv(net, ix.w1));
      acc(ix.w1, lg1.weights);
      acc(ix.b1, lg1.bias);
      nn::LayerNormGrads ln2 = nn::layernorm_backward(lg1.input, bc.t1,
                                                      pv(net, ix.ln2_g), pv(net, ix.ln2_b));
      acc(ix.ln2_g, ln2.gamma);
      acc(ix.ln2_b, ln2.beta);
      dt1 = nn::add(dt1, ln2.input);
    }
    // attention branch
    TensorND dt0 = dt1;
    {
      nn::LinearGrads pg = nn::linear_backward(dt1, bc.attn_cat, pv(net, ix.wo));
      acc(ix.wo, pg.weights);
      acc(ix.bo, pg.bias);
      TensorND dq({lo.tokens, lo.embed}), dk({lo.tokens, lo.embed}),
          dv({lo.tokens, lo.embed});
      for (std::size_t h = 0; h < net.config.heads; ++h) {
        const std::size_t c0 = h * lo.head_dim;
        TensorND d_oh = take_cols(pg.input, c0, lo.head_dim);
        TensorND qh = take_cols(bc.q, c0, lo.head_dim);
        TensorND kh = take_cols(bc.k, c0, lo.head_dim);
        TensorND vh = take_cols(bc.v, c0, lo.head_dim);
        const TensorND& a = bc.attn[h];
        TensorND da = nn::matmul_bt(d_oh, vh);
        TensorND dvh = nn::matmul_at(a, d_oh);
        TensorND ds = nn::scale(nn::softmax_rows_backward(da, a), att_scale);
        TensorND dqh = nn::matmul(ds, kh);
        TensorND dkh = nn::matmul_at(ds, qh);
        add_cols(dq, dqh, c0);
        add_cols(dk, dkh, c0);
        add_cols(dv, dvh, c0);
      }
      nn::LinearGrads lq = nn::linear_backward(dq, bc.xn1, pv(net, ix.wq));
      acc(ix.wq, lq.weights);
      acc(ix.bq, lq.bias);
      nn::LinearGrads lk = nn::linear_backward(dk, bc.xn1, pv(net, ix.wk));
      acc(ix.wk, lk.weights);
      acc(ix.bk, lk.bias);
      nn::LinearGrads lv = nn::linear_backward(dv, bc.xn1, pv(net, ix.wv));
      acc(ix.wv, lv.weights);
      acc(ix.bv, lv.bias);
      TensorND dxn1 = nn::add(nn::add(lq.input, lk.input), lv.input);
      nn::LayerNormGrads ln1 = nn::layernorm_backward(dxn1, bc.t0, pv(net, ix.ln1_g),
                                                      pv(net, ix.ln1_b));
      acc(ix.ln1_g, ln1.gamma);
      acc(ix.ln1_b, ln1.beta);
      dt0 = nn::add(dt0, ln1.input);
    }
    g_tok = std::move(dt0);
  }
  acc(lo.pos, g_tok);
  TensorND d_emb = tokens_to_grid(g_tok, lo.grid);
  nn::ConvGrads cg = nn::conv_nd_backward(d_emb, cc.x_input, pv(net, lo.patch_w),
                                          net.config.patch_size, Pad::valid);
  acc(lo.patch_w, cg.weights);
  acc(lo.patch_b, cg.bias);
}

// ---------------------------------------------------------------------------
// Kind-dispatching forward/backward wrappers.

struct ForwardCache {
  UnetCache unet;
  UnetrCache unetr;
};

TensorND net_forward(const NetState& net, const TensorND& x, double dropout_rate,
                     Rng* drop_rng, ForwardCache& cc) {
  if (net.config.kind == NetKind::unetr) {
    return unetr_forward(net, x, dropout_rate, drop_rng, cc.unetr);
  }
  return unet_forward(net, x, dropout_rate, drop_rng, cc.unet);
}

std::vector<TensorND> net_backward(const NetState& net, const ForwardCache& cc,
                                   const TensorND& dout) {
  std::vector<TensorND> grads;
  grads.reserve(net.parameters.size());
  for (const Param& p : net.parameters) grads.push_back(TensorND(p.value.shape));
  if (net.config.kind == NetKind::unetr) {
    unetr_backward(net, cc.unetr, dout, grads);
  } else {
    unet_backward(net, cc.unet, dout, grads);
  }
  // Frozen layers report exactly zero gradient.
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (net.parameters[i].frozen) {
      std::fill(grads[i].data.begin(), grads[i].data.end(), 0.0);
    }
  }
  return grads;
}

void check_input_dims(const NetState& net, const VolumeMeta& meta) {
  const auto& want = net.config.input_dims;
  if (net.config.kind == NetKind::unet2d) {
    if (meta.dims[0] != want[0] || meta.dims[1] != want[1]) {
      fail("volume in-plane dims (" + std::to_string(meta.dims[0]) + ", " +
           std::to_string(meta.dims[1]) + ") do not match the network input (" +
           std::to_string(want[0]) + ", " + std::to_string(want[1]) + ")");
    }
    return;
  }
  for (int a = 0; a < 3; ++a) {
    if (meta.dims[a] != want[a]) {
      fail("volume dims do not match the network input on axis " + std::to_string(a + 1));
    }
  }
}

TensorND sample_input_tensor(const NetState& net, const SamplePair& sample) {
  check_input_dims(net, sample.image.meta);
  if (net.config.kind == NetKind::unet2d) {
    return tensor_from_slice(sample.image, sample.image.meta.dims[2] / 2,
                             kIntensityScale);
  }
  return tensor_from_volume(sample.image, kIntensityScale);
}

TensorND sample_target_tensor(const NetState& net, const SamplePair& sample) {
  if (net.config.kind == NetKind::unet2d) {
    const auto& d = sample.label.meta.dims;
    const std::size_t z = d[2] / 2;
    TensorND t({1, 1, d[1], d[0]});
    const std::size_t plane = d[0] * d[1];
    for (std::size_t i = 0; i < plane; ++i) {
      t.data[i] = static_cast<double>(sample.label.data[z * plane + i]);
    }
    return t;
  }
  return tensor_from_label(sample.label);
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(NetKind k) {
  switch (k) {
    case NetKind::unet2d: return "unet2d";
    case NetKind::unet3d: return "unet3d";
    case NetKind::unetr: return "unetr";
  }
  return "unknown";
}

NetKind net_kind_from_string(std::string_view s) {
  if (s == "unet2d") return NetKind::unet2d;
  if (s == "unet3d") return NetKind::unet3d;
  if (s == "unetr") return NetKind::unetr;
  fail("unknown network kind '" + std::string(s) + "'");
}

void NetConfig::validate() const {
  const std::size_t want_dims = kind == NetKind::unet2d ? 2 : 3;
  if (input_dims.size() != want_dims) {
    fail("input_dims must have " + std::to_string(want_dims) + " entries for " +
         to_string(kind));
  }
  for (std::size_t d : input_dims) {
    if (d == 0) fail("input dims must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    fail("dropout_rate must lie in [0, 1)");
  }
  if (kind != NetKind::unetr) {
    if (channel_widths.empty()) fail("channel_widths must not be empty");
    for (std::size_t w : channel_widths) {
      if (w == 0) fail("channel widths must be positive");
    }
    if (kernel_size == 0 || kernel_size % 2 == 0) {
      fail("kernel_size must be odd (same padding)");
    }
    if (pool_factor < 2) fail("pool_factor must be at least 2");
    std::size_t divisor = 1;
    for (std::size_t i = 1; i < channel_widths.size(); ++i) divisor *= pool_factor;
    for (std::size_t d : input_dims) {
      if (d % divisor != 0) {
        fail("input dims must be divisible by pool_factor^(levels-1) = " +
             std::to_string(divisor));
      }
    }
  }
  if (kind == NetKind::unetr) {
    if (!is_power_of_two(patch_size) || patch_size < 2) {
      fail("patch_size must be a power of two >= 2 (the decoder doubles "
           "resolution per stage)");
    }
    for (std::size_t d : input_dims) {
      if (d % patch_size != 0) fail("input dims must be divisible by patch_size");
    }
    if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0) {
      fail("embed_dim must be divisible by heads");
    }
    if (depth < 1) fail("depth must be at least 1");
  }
}

std::size_t NetState::layer_count() const {
  std::size_t n = 0;
  for (const Param& p : parameters) n = std::max(n, p.layer + 1);
  return n;
}

std::size_t NetState::parameter_count() const {
  std::size_t n = 0;
  for (const Param& p : parameters) n += p.value.size();
  return n;
}

const Param* NetState::find(std::string_view name) const {
  for (const Param& p : parameters) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    fail("learning_rate must be finite and >= 0");
  }
  if (epochs < 1) fail("epochs must be at least 1");
  if (steps_per_epoch < 1) fail("steps_per_epoch must be at least 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    fail("dropout_rate must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) fail("epsilon must be positive");
}

NetState build_unet2d(const NetConfig& cfg) {
  if (cfg.kind != NetKind::unet2d) fail("build_unet2d requires kind unet2d");
  cfg.validate();
  return build_unet(cfg);
}

NetState build_unet3d(const NetConfig& cfg) {
  if (cfg.kind != NetKind::unet3d) fail("build_unet3d requires kind unet3d");
  cfg.validate();
  return build_unet(cfg);
}

NetState build_unetr(const NetConfig& cfg) {
  if (cfg.kind != NetKind::unetr) fail("build_unetr requires kind unetr");
  cfg.validate();
  return build_unetr_state(cfg);
}

NetState build_net(const NetConfig& cfg) {
  switch (cfg.kind) {
    case NetKind::unet2d: return build_unet2d(cfg);
    case NetKind::unet3d: return build_unet3d(cfg);
    case NetKind::unetr: return build_unetr(cfg);
  }
  fail("unknown network kind");
}

TensorND forward(const NetState& net, const TensorND& input) {
  ForwardCache cc;
  return net_forward(net, input, 0.0, nullptr, cc);
}

EncoderTrace transformer_encoder_trace(const NetState& net, const TensorND& input) {
  if (net.config.kind != NetKind::unetr) {
    fail("encoder traces exist only for the transformer network");
  }
  const UnetrLayout lo = unetr_layout(net.config);
  std::vector<UnetrBlockCache> blocks;
  EncoderTrace tr;
  tr.tokens = unetr_blocks_forward(net, lo, input, blocks);
  for (const UnetrBlockCache& bc : blocks) {
    TensorND a({net.config.heads, lo.tokens, lo.tokens});
    for (std::size_t h = 0; h < net.config.heads; ++h) {
      std::copy(bc.attn[h].data.begin(), bc.attn[h].data.end(),
                a.data.begin() + h * lo.tokens * lo.tokens);
    }
    tr.attention.push_back(std::move(a));
  }
  return tr;
}

double soft_dice_loss(const TensorND& pred, const TensorND& target, double eps) {
  if (!pred.same_shape(target)) fail("soft_dice_loss: shape mismatch");
  if (!(eps > 0.0)) fail("soft_dice_loss: eps must be positive");
  double inter = 0.0, psum = 0.0, tsum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred.data[i] * target.data[i];
    psum += pred.data[i];
    tsum += target.data[i];
  }
  return 1.0 - (2.0 * inter + eps) / (psum + tsum + eps);
}

TensorND soft_dice_loss_backward(const TensorND& pred, const TensorND& target,
                                 double eps) {
  if (!pred.same_shape(target)) fail("soft_dice_loss: shape mismatch");
  if (!(eps > 0.0)) fail("soft_dice_loss: eps must be positive");
  double inter = 0.0, psum = 0.0, tsum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred.data[i] * target.data[i];
    psum += pred.data[i];
    tsum += target.data[i];
  }
  const double denom = psum + tsum + eps;
  const double num = 2.0 * inter + eps;
  TensorND g(pred.shape);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    g.data[i] = -(2.0 * target.data[i] * denom - num) / (denom * denom);
  }
  return g;
}

NetState freeze_prefix(NetState net, std::size_t n_layers) {
  const std::size_t total = net.layer_count();
  if (n_layers > total) {
    fail("freeze_prefix: " + std::to_string(n_layers) + " exceeds the " +
         std::to_string(total) + " parameterized layers");
  }
  for (Param& p : net.parameters) p.frozen = p.layer < n_layers;
  return net;
}

TrainResult train(NetState net, const std::vector<SamplePair>& dataset,
                  const TrainConfig& tc) {
  tc.validate();
  if (dataset.empty()) fail("train: dataset must not be empty");
  for (const SamplePair& s : dataset) {
    s.validate();
    check_input_dims(net, s.image.meta);
  }

  // One work item is a whole volume for the 3D nets and a single sagittal
  // slice for the 2D net.
  struct Item {
    std::size_t sample;
    std::size_t slice;
  };
  std::vector<Item> items;
  if (net.config.kind == NetKind::unet2d) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      for (std::size_t z = 0; z < dataset[i].image.meta.dims[2]; ++z) {
        items.push_back({i, z});
      }
    }
  } else {
    for (std::size_t i = 0; i < dataset.size(); ++i) items.push_back({i, 0});
  }

  Rng order_rng(derive_seed(tc.seed, kStreamOrder));
  TrainResult result;
  result.history.reserve(static_cast<std::size_t>(tc.epochs) *
                         static_cast<std::size_t>(tc.steps_per_epoch));

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    order_rng.shuffle(items);
    for (int step = 0; step < tc.steps_per_epoch; ++step) {
      const Item& it = items[static_cast<std::size_t>(step) % items.size()];
      const SamplePair& sample = dataset[it.sample];

      TensorND input, target;
      if (net.config.kind == NetKind::unet2d) {
        input = tensor_from_slice(sample.image, it.slice, kIntensityScale);
        const auto& d = sample.label.meta.dims;
        target = TensorND({1, 1, d[1], d[0]});
        const std::size_t plane = d[0] * d[1];
        for (std::size_t i = 0; i < plane; ++i) {
          target.data[i] = static_cast<double>(sample.label.data[it.slice * plane + i]);
        }
      } else {
        input = tensor_from_volume(sample.image, kIntensityScale);
        target = tensor_from_label(sample.label);
      }

      Rng drop_rng(derive_seed(tc.seed, kStreamDropout,
                               static_cast<std::uint64_t>(net.step)));
      ForwardCache cc;
      TensorND pred = net_forward(net, input, tc.dropout_rate, &drop_rng, cc);
      const double loss = soft_dice_loss(pred, target, tc.epsilon);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "training aborted: non-finite loss at step "
            << (result.history.size() + 1) << " (learning rate " << tc.learning_rate
            << ")";
        throw std::runtime_error(msg.str());
      }
      result.history.push_back(loss);

      const TensorND dloss = soft_dice_loss_backward(pred, target, tc.epsilon);
      const std::vector<TensorND> grads = net_backward(net, cc, dloss);

      ++net.step;
      const double t = static_cast<double>(net.step);
      const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
      const double bc2 = 1.0 - std::pow(kAdamBeta2, t);
      for (std::size_t pi = 0; pi < net.parameters.size(); ++pi) {
        Param& p = net.parameters[pi];
        if (p.frozen) continue;
        const TensorND& g = grads[pi];
        for (std::size_t i = 0; i < g.size(); ++i) {
          double& m = p.adam_m.data[i];
          double& v = p.adam_v.data[i];
          m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g.data[i];
          v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g.data[i] * g.data[i];
          const double mhat = m / bc1;
          const double vhat = v / bc2;
          p.value.data[i] -= tc.learning_rate * mhat / (std::sqrt(vhat) + kAdamEps);
        }
      }
    }
  }
  result.net = std::move(net);
  return result;
}

LabelMap predict_slicewise(const NetState& net2d, const Volume& v, double threshold) {
  if (net2d.config.kind != NetKind::unet2d) {
    fail("predict_slicewise requires a unet2d network");
  }
  v.validate();
  check_input_dims(net2d, v.meta);
  LabelMap out;
  out.meta = v.meta;
  out.data.assign(v.meta.voxel_count(), 0);
  const std::size_t plane = v.meta.dims[0] * v.meta.dims[1];
  for (std::size_t z = 0; z < v.meta.dims[2]; ++z) {
    ForwardCache cc;
    TensorND pred =
        net_forward(net2d, tensor_from_slice(v, z, kIntensityScale), 0.0, nullptr, cc);
    for (std::size_t i = 0; i < plane; ++i) {
      out.data[z * plane + i] = pred.data[i] > threshold ? 1 : 0;
    }
  }
  return out;
}

LabelMap predict_volume(const NetState& net3d, const Volume& v, double threshold) {
  if (net3d.config.kind == NetKind::unet2d) {
    fail("predict_volume requires a 3D network");
  }
  v.validate();
  check_input_dims(net3d, v.meta);
  ForwardCache cc;
  TensorND pred =
      net_forward(net3d, tensor_from_volume(v, kIntensityScale), 0.0, nullptr, cc);
  LabelMap out;
  out.meta = v.meta;
  out.data.assign(v.meta.voxel_count(), 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out.data[i] = pred.data[i] > threshold ? 1 : 0;
  }
  return out;
}

std::vector<TensorND> loss_gradients(const NetState& net, const SamplePair& sample,
                                     double eps) {
  sample.validate();
  const TensorND input = sample_input_tensor(net, sample);
  const TensorND target = sample_target_tensor(net, sample);
  ForwardCache cc;
  TensorND pred = net_forward(net, input, 0.0, nullptr, cc);
  return net_backward(net, cc, soft_dice_loss_backward(pred, target, eps));
}

namespace {

std::uint64_t fnv_bytes(std::uint64_t h, const void* data, std::size_t n) {
  const unsigned char* b = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t hash_signs(std::uint64_t h, const TensorND& t) {
  for (double v : t.data) {
    const unsigned char bit = v > 0.0 ? 1 : 0;
    h = fnv_bytes(h, &bit, 1);
  }
  return h;
}

// Hash of every decision the forward pass makes that is not differentiable:
// which side of zero each rectifier input falls on and which element each
// pooling window selects. Two evaluations with equal signatures lie on the
// same smooth piece of the loss.
std::uint64_t kink_signature(const NetState& net, const ForwardCache& cc) {
  std::uint64_t h = 1469598103934665603ull;  // FNV offset basis
  if (net.config.kind == NetKind::unetr) {
    for (const UnetrBlockCache& bc : cc.unetr.blocks) h = hash_signs(h, bc.ff_pre);
    h = hash_signs(h, cc.unetr.fuse_pre);
    for (const TensorND& t : cc.unetr.dec_pre) h = hash_signs(h, t);
    h = hash_signs(h, cc.unetr.skip_pre);
    h = hash_signs(h, cc.unetr.merge_pre);
    return h;
  }
  for (const TensorND& t : cc.unet.act_pre) h = hash_signs(h, t);
  for (const auto& am : cc.unet.pool_argmax) {
    h = fnv_bytes(h, am.data(), am.size() * sizeof(std::size_t));
  }
  return h;
}

}  // namespace

double grad_check(const NetState& net, const SamplePair& sample, double h) {
  if (!(h > 0.0)) fail("grad_check: h must be positive");
  sample.validate();
  NetState work = net;  // parameters are perturbed in place and restored
  const TensorND input = sample_input_tensor(work, sample);
  const TensorND target = sample_target_tensor(work, sample);
  const double eps = 1.0;

  ForwardCache cc;
  TensorND pred = net_forward(work, input, 0.0, nullptr, cc);
  const std::vector<TensorND> grads =
      net_backward(work, cc, soft_dice_loss_backward(pred, target, eps));
  const std::uint64_t base_sig = kink_signature(work, cc);

  auto loss_at = [&]() {
    ForwardCache fc;
    TensorND p = net_forward(work, input, 0.0, nullptr, fc);
    return std::make_pair(soft_dice_loss(p, target, eps), kink_signature(work, fc));
  };

  Rng rng(derive_seed(net.config.seed, kStreamGradCheck));
  double worst = 0.0;
  const std::size_t n_layers = work.layer_count();
  for (std::size_t layer = 0; layer < n_layers; ++layer) {
    // (param index, flat offset) positions of this layer's scalars
    std::vector<std::pair<std::size_t, std::size_t>> positions;
    bool frozen = false;
    for (std::size_t pi = 0; pi < work.parameters.size(); ++pi) {
      if (work.parameters[pi].layer != layer) continue;
      frozen = frozen || work.parameters[pi].frozen;
      for (std::size_t i = 0; i < work.parameters[pi].value.size(); ++i) {
        positions.emplace_back(pi, i);
      }
    }
    if (frozen) continue;  // defined gradient is zero; nothing to difference
    const std::size_t want = std::min<std::size_t>(200, positions.size());
    for (std::size_t i = 0; i < want; ++i) {  // partial Fisher-Yates
      const std::size_t j = i + static_cast<std::size_t>(
                                    rng.next_below(positions.size() - i));
      std::swap(positions[i], positions[j]);
    }
    for (std::size_t i = 0; i < want; ++i) {
      const auto [pi, off] = positions[i];
      double& theta = work.parameters[pi].value.data[off];
      const double saved = theta;
      theta = saved + h;
      const auto [lp, sig_p] = loss_at();
      theta = saved - h;
      const auto [lm, sig_m] = loss_at();
      theta = saved;
      if (sig_p != base_sig || sig_m != base_sig) {
        // The probe pushed some rectifier or pooling decision across its
        // boundary; the loss is not differentiable along this direction, so
        // a central difference would measure the kink, not the derivative.
        continue;
      }
      const double fd = (lp - lm) / (2.0 * h);
      const double g = grads[pi].data[off];
      const double rel = std::abs(fd - g) / std::max(std::abs(fd) + std::abs(g), 1e-6);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

void GridSpec::validate() const {
  if (epochs.empty() || steps_per_epoch.empty() || learning_rates.empty() ||
      dropout_rates.empty() || frozen_layers.empty()) {
    fail("grid_search: empty grid axis");
  }
}

std::size_t GridSpec::cell_count() const {
  return epochs.size() * steps_per_epoch.size() * learning_rates.size() *
         dropout_rates.size() * frozen_layers.size();
}

GridSearchResult grid_search(const NetState& base, const GridSpec& grids,
                             const std::vector<SamplePair>& train_set,
                             const std::vector<SamplePair>& val_set,
                             std::size_t budget) {
  grids.validate();
  if (budget == 0) fail("grid_search: budget must be at least 1");
  if (train_set.empty() || val_set.empty()) {
    fail("grid_search: training and validation sets must not be empty");
  }
  const std::uint64_t cell_seed = derive_seed(base.config.seed, kStreamGridSearch);

  GridSearchResult res;
  std::size_t cell_index = 0;
  for (int ep : grids.epochs) {
    for (int st : grids.steps_per_epoch) {
      for (double lr : grids.learning_rates) {
        for (double dr : grids.dropout_rates) {
          for (std::size_t fl : grids.frozen_layers) {
            if (res.ranked.size() >= budget) goto done;
            GridCell cell;
            cell.cell_index = cell_index++;
            cell.epochs = ep;
            cell.steps_per_epoch = st;
            cell.learning_rate = lr;
            cell.dropout_rate = dr;
            cell.frozen_layers = fl;

            TrainConfig tc;
            tc.learning_rate = lr;
            tc.epochs = ep;
            tc.steps_per_epoch = st;
            tc.dropout_rate = dr;
            tc.seed = cell_seed;
            TrainResult tr = train(freeze_prefix(base, fl), train_set, tc);
            cell.final_loss = tr.history.back();

            double dice_sum = 0.0;
            for (const SamplePair& s : val_set) {
              const LabelMap pred =
                  tr.net.config.kind == NetKind::unet2d
                      ? predict_slicewise(tr.net, s.image)
                      : predict_volume(tr.net, s.image);
              dice_sum += dice(pred, s.label);
            }
            cell.val_dice = dice_sum / static_cast<double>(val_set.size());
            res.ranked.push_back(cell);
          }
        }
      }
    }
  }
done:
  res.evaluated = res.ranked.size();
  std::stable_sort(res.ranked.begin(), res.ranked.end(),
                   [](const GridCell& a, const GridCell& b) {
                     return a.val_dice > b.val_dice;
                   });
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoints.

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

constexpr char kCheckpointMagic[8] = {'V', 'T', 'C', 'K', '0', '0', '0', '1'};

nlohmann::json config_to_json(const NetConfig& cfg) {
  return nlohmann::json{{"kind", to_string(cfg.kind)},
                        {"input_dims", cfg.input_dims},
                        {"channel_widths", cfg.channel_widths},
                        {"kernel_size", cfg.kernel_size},
                        {"pool_factor", cfg.pool_factor},
                        {"dropout_rate", cfg.dropout_rate},
                        {"patch_size", cfg.patch_size},
                        {"embed_dim", cfg.embed_dim},
                        {"heads", cfg.heads},
                        {"depth", cfg.depth},
                        {"seed", cfg.seed}};
}

NetConfig config_from_json(const nlohmann::json& j) {
  NetConfig cfg;
  cfg.kind = net_kind_from_string(j.at("kind").get<std::string>());
  cfg.input_dims = j.at("input_dims").get<std::vector<std::size_t>>();
  cfg.channel_widths = j.at("channel_widths").get<std::vector<std::size_t>>();
  cfg.kernel_size = j.at("kernel_size").get<std::size_t>();
  cfg.pool_factor = j.at("pool_factor").get<std::size_t>();
  cfg.dropout_rate = j.at("dropout_rate").get<double>();
  cfg.patch_size = j.at("patch_size").get<std::size_t>();
  cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
  cfg.heads = j.at("heads").get<std::size_t>();
  cfg.depth = j.at("depth").get<std::size_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::vector<double>& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated checkpoint payload");
}

}  // namespace

void save_checkpoint(const NetState& net, const std::string& path) {
  nlohmann::json params = nlohmann::json::array();
  for (const Param& p : net.parameters) {
    params.push_back(nlohmann::json{{"name", p.name},
                                    {"shape", p.value.shape},
                                    {"layer", p.layer},
                                    {"frozen", p.frozen}});
  }
  const nlohmann::json header{{"config", config_to_json(net.config)},
                              {"step", net.step},
                              {"parameters", params}};
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint64_t len = hs.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const Param& p : net.parameters) {
    write_doubles(out, p.value.data);
    write_doubles(out, p.adam_m.data);
    write_doubles(out, p.adam_v.data);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

NetState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("'" + path + "' is not a checkpoint file");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw std::runtime_error("truncated checkpoint header");
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed checkpoint header: ") + e.what());
  }

  NetState net;
  net.config = config_from_json(header.at("config"));
  net.config.validate();
  net.step = header.at("step").get<std::int64_t>();
  for (const auto& pj : header.at("parameters")) {
    Param p;
    p.name = pj.at("name").get<std::string>();
    p.layer = pj.at("layer").get<std::size_t>();
    p.frozen = pj.at("frozen").get<bool>();
    const auto shape = pj.at("shape").get<std::vector<std::size_t>>();
    p.value = TensorND(shape);
    p.adam_m = TensorND(shape);
    p.adam_v = TensorND(shape);
    net.parameters.push_back(std::move(p));
  }
  for (Param& p : net.parameters) {
    read_doubles(in, p.value.data);
    read_doubles(in, p.adam_m.data);
    read_doubles(in, p.adam_v.data);
    p.value.validate();
  }
  return net;
}

}  // namespace vtseg
