#include "vtseg/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace vtseg::nn {
namespace {

// The 2D and 3D code paths are unified by treating a 2D tensor
// (N, C, Y, X) as (N, C, 1, Y, X): a singleton leading spatial axis with a
// kernel extent of 1 changes neither the arithmetic nor the layout.
struct Sp3 {
  std::size_t z = 1, y = 1, x = 1;
  std::size_t count() const { return z * y * x; }
};

Sp3 spatial_of(const std::vector<std::size_t>& shape) {
  Sp3 s;
  if (shape.size() == 4) {
    s.y = shape[2];
    s.x = shape[3];
  } else {
    s.z = shape[2];
    s.y = shape[3];
    s.x = shape[4];
  }
  return s;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void require_activation_rank(const TensorND& t, const char* who) {
  require(t.rank() == 4 || t.rank() == 5,
          std::string(who) + ": activations must be rank 4 (2D) or rank 5 (3D)");
  require(t.size() == TensorND::product(t.shape) && t.size() > 0,
          std::string(who) + ": tensor data does not match its shape");
}

struct ConvPlan {
  std::size_t n, cin, cout;
  Sp3 in, k, pad, out;
  std::size_t stride;
};

ConvPlan plan_conv(const TensorND& input, const TensorND& weights, std::size_t stride,
                   Pad padding) {
  require_activation_rank(input, "conv_nd");
  require(weights.rank() == input.rank(),
          "conv_nd: kernel rank must match the input rank");
  require(stride >= 1, "conv_nd: stride must be >= 1");
  ConvPlan p;
  p.n = input.shape[0];
  p.cin = input.shape[1];
  p.cout = weights.shape[0];
  require(weights.shape[1] == p.cin, "conv_nd: input channels disagree with the kernel");
  p.in = spatial_of(input.shape);
  p.k = spatial_of(weights.shape);
  p.stride = stride;
  const std::size_t ins[3] = {p.in.z, p.in.y, p.in.x};
  const std::size_t ks[3] = {p.k.z, p.k.y, p.k.x};
  std::size_t pads[3] = {0, 0, 0};
  std::size_t outs[3] = {0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    if (padding == Pad::same) {
      require(stride == 1, "conv_nd: same padding requires stride 1");
      require(ks[a] % 2 == 1, "conv_nd: same padding requires odd kernels");
      pads[a] = (ks[a] - 1) / 2;
      outs[a] = ins[a];
    } else {
      require(ins[a] >= ks[a], "conv_nd: kernel larger than the input");
      require((ins[a] - ks[a]) % stride == 0,
              "conv_nd: stride does not tile the input exactly");
      outs[a] = (ins[a] - ks[a]) / stride + 1;
    }
  }
  p.pad = {pads[0], pads[1], pads[2]};
  p.out = {outs[0], outs[1], outs[2]};
  return p;
}

// Copies (N, C, spatial) activations into a zero-padded buffer.
std::vector<double> pad_activations(const TensorND& t, std::size_t channels, Sp3 sp,
                                    Sp3 pad) {
  const std::size_t pz = sp.z + 2 * pad.z, py = sp.y + 2 * pad.y, px = sp.x + 2 * pad.x;
  const std::size_t n = t.shape[0];
  std::vector<double> out(n * channels * pz * py * px, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double* src = t.data.data() + ((b * channels + c) * sp.count());
      double* dst = out.data() + ((b * channels + c) * pz * py * px);
      for (std::size_t z = 0; z < sp.z; ++z) {
        for (std::size_t y = 0; y < sp.y; ++y) {
          const double* s = src + (z * sp.y + y) * sp.x;
          double* d = dst + ((z + pad.z) * py + (y + pad.y)) * px + pad.x;
          std::copy(s, s + sp.x, d);
        }
      }
    }
  }
  return out;
}

std::vector<std::size_t> activation_shape(std::size_t rank, std::size_t n, std::size_t c,
                                          Sp3 sp) {
  if (rank == 4) return {n, c, sp.y, sp.x};
  return {n, c, sp.z, sp.y, sp.x};
}

}  // namespace

TensorND conv_nd(const TensorND& input, const TensorND& weights, const TensorND& bias,
                 std::size_t stride, Pad padding) {
  const ConvPlan p = plan_conv(input, weights, stride, padding);
  require(bias.rank() == 1 && bias.shape[0] == p.cout,
          "conv_nd: bias length must equal the output channel count");
  const std::vector<double> padded = pad_activations(input, p.cin, p.in, p.pad);
  const std::size_t pz = p.in.z + 2 * p.pad.z, py = p.in.y + 2 * p.pad.y,
                    px = p.in.x + 2 * p.pad.x;
  TensorND out(activation_shape(input.rank(), p.n, p.cout, p.out));
  for (std::size_t b = 0; b < p.n; ++b) {
    for (std::size_t co = 0; co < p.cout; ++co) {
      double* dst = out.data.data() + (b * p.cout + co) * p.out.count();
      std::fill(dst, dst + p.out.count(), bias.data[co]);
      for (std::size_t ci = 0; ci < p.cin; ++ci) {
        const double* src = padded.data() + (b * p.cin + ci) * pz * py * px;
        for (std::size_t kz = 0; kz < p.k.z; ++kz) {
          for (std::size_t ky = 0; ky < p.k.y; ++ky) {
            for (std::size_t kx = 0; kx < p.k.x; ++kx) {
              const double w =
                  weights.data[(((co * p.cin + ci) * p.k.z + kz) * p.k.y + ky) * p.k.x + kx];
              for (std::size_t z = 0; z < p.out.z; ++z) {
                for (std::size_t y = 0; y < p.out.y; ++y) {
                  const double* s =
                      src + ((z * p.stride + kz) * py + (y * p.stride + ky)) * px + kx;
                  double* d = dst + (z * p.out.y + y) * p.out.x;
                  if (p.stride == 1) {
                    for (std::size_t x = 0; x < p.out.x; ++x) d[x] += w * s[x];
                  } else {
                    for (std::size_t x = 0; x < p.out.x; ++x) d[x] += w * s[x * p.stride];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

ConvGrads conv_nd_backward(const TensorND& grad_out, const TensorND& input,
                           const TensorND& weights, std::size_t stride, Pad padding) {
  const ConvPlan p = plan_conv(input, weights, stride, padding);
  require(grad_out.shape == activation_shape(input.rank(), p.n, p.cout, p.out),
          "conv_nd_backward: upstream gradient shape mismatch");
  const std::size_t pz = p.in.z + 2 * p.pad.z, py = p.in.y + 2 * p.pad.y,
                    px = p.in.x + 2 * p.pad.x;
  const std::vector<double> padded = pad_activations(input, p.cin, p.in, p.pad);

  ConvGrads g;
  g.bias = TensorND({p.cout});
  g.weights = TensorND(weights.shape);
  g.input = TensorND(input.shape);

  for (std::size_t b = 0; b < p.n; ++b) {
    for (std::size_t co = 0; co < p.cout; ++co) {
      const double* gsrc = grad_out.data.data() + (b * p.cout + co) * p.out.count();
      double acc = 0.0;
      for (std::size_t i = 0; i < p.out.count(); ++i) acc += gsrc[i];
      g.bias.data[co] += acc;
    }
  }

  for (std::size_t b = 0; b < p.n; ++b) {
    for (std::size_t co = 0; co < p.cout; ++co) {
      const double* gsrc = grad_out.data.data() + (b * p.cout + co) * p.out.count();
      for (std::size_t ci = 0; ci < p.cin; ++ci) {
        const double* src = padded.data() + (b * p.cin + ci) * pz * py * px;
        for (std::size_t kz = 0; kz < p.k.z; ++kz) {
          for (std::size_t ky = 0; ky < p.k.y; ++ky) {
            for (std::size_t kx = 0; kx < p.k.x; ++kx) {
              double acc = 0.0;
              for (std::size_t z = 0; z < p.out.z; ++z) {
                for (std::size_t y = 0; y < p.out.y; ++y) {
                  const double* s =
                      src + ((z * p.stride + kz) * py + (y * p.stride + ky)) * px + kx;
                  const double* d = gsrc + (z * p.out.y + y) * p.out.x;
                  if (p.stride == 1) {
                    for (std::size_t x = 0; x < p.out.x; ++x) acc += d[x] * s[x];
                  } else {
                    for (std::size_t x = 0; x < p.out.x; ++x) acc += d[x] * s[x * p.stride];
                  }
                }
              }
              g.weights.data[(((co * p.cin + ci) * p.k.z + kz) * p.k.y + ky) * p.k.x + kx] +=
                  acc;
            }
          }
        }
      }
    }
  }

  // d_input is accumulated in the padded frame (so border clipping needs no
  // branches) and cropped at the end.
  std::vector<double> dpad(p.n * p.cin * pz * py * px, 0.0);
  for (std::size_t b = 0; b < p.n; ++b) {
    for (std::size_t ci = 0; ci < p.cin; ++ci) {
      double* dst = dpad.data() + (b * p.cin + ci) * pz * py * px;
      for (std::size_t co = 0; co < p.cout; ++co) {
        const double* gsrc = grad_out.data.data() + (b * p.cout + co) * p.out.count();
        for (std::size_t kz = 0; kz < p.k.z; ++kz) {
          for (std::size_t ky = 0; ky < p.k.y; ++ky) {
            for (std::size_t kx = 0; kx < p.k.x; ++kx) {
              const double w =
                  weights.data[(((co * p.cin + ci) * p.k.z + kz) * p.k.y + ky) * p.k.x + kx];
              for (std::size_t z = 0; z < p.out.z; ++z) {
                for (std::size_t y = 0; y < p.out.y; ++y) {
                  double* d =
                      dst + ((z * p.stride + kz) * py + (y * p.stride + ky)) * px + kx;
                  const double* s = gsrc + (z * p.out.y + y) * p.out.x;
                  if (p.stride == 1) {
                    for (std::size_t x = 0; x < p.out.x; ++x) d[x] += w * s[x];
                  } else {
                    for (std::size_t x = 0; x < p.out.x; ++x) d[x * p.stride] += w * s[x];
                  }
                }
              }
            }
          }
        }
      }
      double* gin = g.input.data.data() + (b * p.cin + ci) * p.in.count();
      for (std::size_t z = 0; z < p.in.z; ++z) {
        for (std::size_t y = 0; y < p.in.y; ++y) {
          const double* s = dst + ((z + p.pad.z) * py + (y + p.pad.y)) * px + p.pad.x;
          double* d = gin + (z * p.in.y + y) * p.in.x;
          std::copy(s, s + p.in.x, d);
        }
      }
    }
  }
  return g;
}

namespace {

struct TconvPlan {
  std::size_t n, cin, cout, stride;
  Sp3 in, k, out;
};

TconvPlan plan_tconv(const TensorND& input, const TensorND& weights, std::size_t stride) {
  require_activation_rank(input, "tconv_nd");
  require(weights.rank() == input.rank(),
          "tconv_nd: kernel rank must match the input rank");
  require(stride >= 1, "tconv_nd: stride must be >= 1");
  TconvPlan p;
  p.n = input.shape[0];
  p.cin = input.shape[1];
  p.cout = weights.shape[1];
  require(weights.shape[0] == p.cin, "tconv_nd: input channels disagree with the kernel");
  p.in = spatial_of(input.shape);
  p.k = spatial_of(weights.shape);
  p.stride = stride;
  require(p.k.z >= stride || input.rank() == 4, "tconv_nd: kernel smaller than stride");
  require(p.k.y >= stride && p.k.x >= stride, "tconv_nd: kernel smaller than stride");
  p.out.z = input.rank() == 4 ? 1 : (p.in.z - 1) * stride + p.k.z;
  p.out.y = (p.in.y - 1) * stride + p.k.y;
  p.out.x = (p.in.x - 1) * stride + p.k.x;
  return p;
}

}  // namespace

TensorND tconv_nd(const TensorND& input, const TensorND& weights, const TensorND& bias,
                  std::size_t stride) {
  const TconvPlan p = plan_tconv(input, weights, stride);
  require(bias.rank() == 1 && bias.shape[0] == p.cout,
          "tconv_nd: bias length must equal the output channel count");
  TensorND out(activation_shape(input.rank(), p.n, p.cout, p.out));
  for (std::size_t b = 0; b < p.n; ++b) {
    for (std::size_t co = 0; co < p.cout; ++co) {
      double* dst = out.data.data() + (b * p.cout + co) * p.out.count();
      std::fill(dst, dst + p.out.count(), bias.data[co]);
    }
    for (std::size_t ci = 0; ci < p.cin; ++ci) {
      const double* src = input.data.data() + (b * p.cin + ci) * p.in.count();
      for (std::size_t co = 0; co < p.cout; ++co) {
        double* dst = out.data.data() + (b * p.cout + co) * p.out.count();
        for (std::size_t kz = 0; kz < p.k.z; ++kz) {
          for (std::size_t ky = 0; ky < p.k.y; ++ky) {
            for (std::size_t kx = 0; kx < p.k.x; ++kx) {
              const double w =
                  weights.data[(((ci * p.cout + co) * p.k.z + kz) * p.k.y + ky) * p.k.x + kx];
              for (std::size_t z = 0; z < p.in.z; ++z) {
                for (std::size_t y = 0; y < p.in.y; ++y) {
                  const double* s = src + (z * p.in.y + y) * p.in.x;
                  double* d = dst + ((z * p.stride + kz) * p.out.y + (y * p.stride + ky)) *
                                        p.out.x +
                              kx;
                  for (std::size_t x = 0; x < p.in.x; ++x) d[x * p.stride] += w * s[x];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

ConvGrads tconv_nd_backward(const TensorND& grad_out, const TensorND& input,
                            const TensorND& weights, std::size_t stride) {
  const TconvPlan p = plan_tconv(input, weights, stride);
  require(grad_out.shape == activation_shape(input.rank(), p.n, p.cout, p.out),
          "tconv_nd_backward: upstream gradient shape mismatch");
  ConvGrads g;
  g.bias = TensorND({p.cout});
  g.weights = TensorND(weights.shape);
  g.input = TensorND(input.shape);
  for (std::size_t b = 0; b < p.n; ++b) {
    for (std::size_t co = 0; co < p.cout; ++co) {
      const double* gsrc = grad_out.data.data() + (b * p.cout + co) * p.out.count();
      double acc = 0.0;
      for (std::size_t i = 0; i < p.out.count(); ++i) acc += gsrc[i];
      g.bias.data[co] += acc;
    }
    for (std::size_t ci = 0; ci < p.cin; ++ci) {
      const double* src = input.data.data() + (b * p.cin + ci) * p.in.count();
      double* gin = g.input.data.data() + (b * p.cin + ci) * p.in.count();
      for (std::size_t co = 0; co < p.cout; ++co) {
        const double* gsrc = grad_out.data.data() + (b * p.cout + co) * p.out.count();
        for (std::size_t kz = 0; kz < p.k.z; ++kz) {
          for (std::size_t ky = 0; ky < p.k.y; ++ky) {
            for (std::size_t kx = 0; kx < p.k.x; ++kx) {
              const std::size_t widx =
                  (((ci * p.cout + co) * p.k.z + kz) * p.k.y + ky) * p.k.x + kx;
              const double w = weights.data[widx];
              double wacc = 0.0;
              for (std::size_t z = 0; z < p.in.z; ++z) {
                for (std::size_t y = 0; y < p.in.y; ++y) {
                  const double* s = src + (z * p.in.y + y) * p.in.x;
                  double* gi = gin + (z * p.in.y + y) * p.in.x;
                  const double* go = gsrc + ((z * p.stride + kz) * p.out.y +
                                             (y * p.stride + ky)) *
                                                p.out.x +
                                     kx;
                  for (std::size_t x = 0; x < p.in.x; ++x) {
                    const double gv = go[x * p.stride];
                    wacc += s[x] * gv;
                    gi[x] += w * gv;
                  }
                }
              }
              g.weights.data[widx] += wacc;
            }
          }
        }
      }
    }
  }
  return g;
}

TensorND maxpool_nd(const TensorND& input, std::size_t factor,
                    std::vector<std::size_t>& argmax) {
  require_activation_rank(input, "maxpool_nd");
  require(factor >= 1, "maxpool_nd: factor must be >= 1");
  const std::size_t n = input.shape[0], c = input.shape[1];
  const Sp3 in = spatial_of(input.shape);
  const std::size_t fz = input.rank() == 4 ? 1 : factor;
  require(in.z % fz == 0 && in.y % factor == 0 && in.x % factor == 0,
          "maxpool_nd: spatial dims must be divisible by the pooling factor");
  const Sp3 out{in.z / fz, in.y / factor, in.x / factor};
  TensorND res(activation_shape(input.rank(), n, c, out));
  argmax.assign(res.size(), 0);
  for (std::size_t bc = 0; bc < n * c; ++bc) {
    const double* src = input.data.data() + bc * in.count();
    double* dst = res.data.data() + bc * out.count();
    std::size_t* am = argmax.data() + bc * out.count();
    for (std::size_t z = 0; z < out.z; ++z) {
      for (std::size_t y = 0; y < out.y; ++y) {
        for (std::size_t x = 0; x < out.x; ++x) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          for (std::size_t dz = 0; dz < fz; ++dz) {
            for (std::size_t dy = 0; dy < factor; ++dy) {
              for (std::size_t dx = 0; dx < factor; ++dx) {
                const std::size_t idx =
                    ((z * fz + dz) * in.y + (y * factor + dy)) * in.x + (x * factor + dx);
                if (src[idx] > best) {
                  best = src[idx];
                  best_idx = idx;
                }
              }
            }
          }
          dst[(z * out.y + y) * out.x + x] = best;
          am[(z * out.y + y) * out.x + x] = bc * in.count() + best_idx;
        }
      }
    }
  }
  return res;
}

TensorND maxpool_nd_backward(const TensorND& grad_out,
                             const std::vector<std::size_t>& argmax,
                             const std::vector<std::size_t>& input_shape) {
  require(grad_out.size() == argmax.size(),
          "maxpool_nd_backward: gradient and argmax sizes disagree");
  TensorND g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g.data[argmax[i]] += grad_out.data[i];
  return g;
}

TensorND relu(const TensorND& x) {
  TensorND y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

TensorND relu_backward(const TensorND& grad_out, const TensorND& pre_activation) {
  require(grad_out.same_shape(pre_activation), "relu_backward: shape mismatch");
  TensorND g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (pre_activation.data[i] <= 0.0) g.data[i] = 0.0;
  }
  return g;
}

TensorND sigmoid(const TensorND& x) {
  TensorND y = x;
  for (double& v : y.data) v = 1.0 / (1.0 + std::exp(-v));
  return y;
}

TensorND sigmoid_backward(const TensorND& grad_out, const TensorND& output) {
  require(grad_out.same_shape(output), "sigmoid_backward: shape mismatch");
  TensorND g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.data[i] *= output.data[i] * (1.0 - output.data[i]);
  }
  return g;
}

TensorND dropout_mask(const std::vector<std::size_t>& shape, double rate, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout_mask: rate must lie in [0, 1)");
  TensorND m(shape);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : m.data) v = rng.bernoulli(1.0 - rate) ? keep_scale : 0.0;
  return m;
}

TensorND hadamard(const TensorND& a, const TensorND& b) {
  require(a.same_shape(b), "hadamard: shape mismatch");
  TensorND r = a;
  for (std::size_t i = 0; i < r.size(); ++i) r.data[i] *= b.data[i];
  return r;
}

TensorND concat_channels(const TensorND& a, const TensorND& b) {
  require_activation_rank(a, "concat_channels");
  require(a.rank() == b.rank() && a.shape[0] == b.shape[0],
          "concat_channels: batch/rank mismatch");
  for (std::size_t i = 2; i < a.rank(); ++i) {
    require(a.shape[i] == b.shape[i], "concat_channels: spatial shape mismatch");
  }
  const std::size_t n = a.shape[0], ca = a.shape[1], cb = b.shape[1];
  const std::size_t plane = spatial_of(a.shape).count();
  TensorND r(activation_shape(a.rank(), n, ca + cb, spatial_of(a.shape)));
  for (std::size_t bidx = 0; bidx < n; ++bidx) {
    std::copy(a.data.begin() + bidx * ca * plane, a.data.begin() + (bidx + 1) * ca * plane,
              r.data.begin() + bidx * (ca + cb) * plane);
    std::copy(b.data.begin() + bidx * cb * plane, b.data.begin() + (bidx + 1) * cb * plane,
              r.data.begin() + (bidx * (ca + cb) + ca) * plane);
  }
  return r;
}

void split_channels(const TensorND& grad, std::size_t channels_a, TensorND& grad_a,
                    TensorND& grad_b) {
  require_activation_rank(grad, "split_channels");
  const std::size_t n = grad.shape[0], c = grad.shape[1];
  require(channels_a >= 1 && channels_a < c, "split_channels: split point out of range");
  const std::size_t cb = c - channels_a;
  const std::size_t plane = spatial_of(grad.shape).count();
  grad_a = TensorND(activation_shape(grad.rank(), n, channels_a, spatial_of(grad.shape)));
  grad_b = TensorND(activation_shape(grad.rank(), n, cb, spatial_of(grad.shape)));
  for (std::size_t bidx = 0; bidx < n; ++bidx) {
    std::copy(grad.data.begin() + bidx * c * plane,
              grad.data.begin() + bidx * c * plane + channels_a * plane,
              grad_a.data.begin() + bidx * channels_a * plane);
    std::copy(grad.data.begin() + bidx * c * plane + channels_a * plane,
              grad.data.begin() + (bidx + 1) * c * plane,
              grad_b.data.begin() + bidx * cb * plane);
  }
}

TensorND matmul(const TensorND& a, const TensorND& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.shape[1] == b.shape[0],
          "matmul: incompatible shapes");
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  TensorND c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data.data() + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = a.data[i * k + kk];
      const double* brow = b.data.data() + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

TensorND matmul_at(const TensorND& a, const TensorND& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.shape[0] == b.shape[0],
          "matmul_at: incompatible shapes");
  const std::size_t k = a.shape[0], m = a.shape[1], n = b.shape[1];
  TensorND c({m, n});
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* arow = a.data.data() + kk * m;
    const double* brow = b.data.data() + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c.data.data() + i * n;
      const double av = arow[i];
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

TensorND matmul_bt(const TensorND& a, const TensorND& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.shape[1] == b.shape[1],
          "matmul_bt: incompatible shapes");
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
  TensorND c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data.data() + i * k;
    double* crow = c.data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data.data() + j * k;
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] = acc;
    }
  }
  return c;
}

TensorND linear(const TensorND& x, const TensorND& w, const TensorND& b) {
  require(x.rank() == 2 && w.rank() == 2 && x.shape[1] == w.shape[0],
          "linear: incompatible shapes");
  require(b.rank() == 1 && b.shape[0] == w.shape[1],
          "linear: bias length must equal the output width");
  TensorND y = matmul(x, w);
  const std::size_t m = y.shape[0], n = y.shape[1];
  for (std::size_t i = 0; i < m; ++i) {
    double* row = y.data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += b.data[j];
  }
  return y;
}

LinearGrads linear_backward(const TensorND& grad_out, const TensorND& x,
                            const TensorND& w) {
  require(grad_out.rank() == 2 && grad_out.shape[0] == x.shape[0] &&
              grad_out.shape[1] == w.shape[1],
          "linear_backward: upstream gradient shape mismatch");
  LinearGrads g;
  g.input = matmul_bt(grad_out, w);
  g.weights = matmul_at(x, grad_out);
  g.bias = TensorND({w.shape[1]});
  const std::size_t m = grad_out.shape[0], n = grad_out.shape[1];
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = grad_out.data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) g.bias.data[j] += row[j];
  }
  return g;
}

TensorND layernorm(const TensorND& x, const TensorND& gamma, const TensorND& beta,
                   double eps) {
  require(x.rank() == 2, "layernorm: expects rank-2 (rows, features)");
  const std::size_t m = x.shape[0], c = x.shape[1];
  require(gamma.rank() == 1 && gamma.shape[0] == c && beta.rank() == 1 &&
              beta.shape[0] == c,
          "layernorm: scale/shift length must equal the feature width");
  TensorND y({m, c});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data.data() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    double* out = y.data.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      out[j] = (row[j] - mean) * inv * gamma.data[j] + beta.data[j];
    }
  }
  return y;
}

LayerNormGrads layernorm_backward(const TensorND& grad_out, const TensorND& x,
                                  const TensorND& gamma, const TensorND& beta,
                                  double eps) {
  require(grad_out.same_shape(x), "layernorm_backward: shape mismatch");
  (void)beta;
  const std::size_t m = x.shape[0], c = x.shape[1];
  LayerNormGrads g;
  g.input = TensorND({m, c});
  g.gamma = TensorND({c});
  g.beta = TensorND({c});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data.data() + i * c;
    const double* go = grad_out.data.data() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    // xhat = (x - mean) * inv; dL/dx = (gs - mean(gs) - xhat * mean(gs*xhat)) * inv
    // where gs = grad_out * gamma.
    double gs_mean = 0.0, gsx_mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double xhat = (row[j] - mean) * inv;
      const double gs = go[j] * gamma.data[j];
      gs_mean += gs;
      gsx_mean += gs * xhat;
      g.gamma.data[j] += go[j] * xhat;
      g.beta.data[j] += go[j];
    }
    gs_mean /= static_cast<double>(c);
    gsx_mean /= static_cast<double>(c);
    double* gi = g.input.data.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      const double xhat = (row[j] - mean) * inv;
      const double gs = go[j] * gamma.data[j];
      gi[j] = (gs - gs_mean - xhat * gsx_mean) * inv;
    }
  }
  return g;
}

TensorND softmax_rows(const TensorND& x) {
  require(x.rank() == 2, "softmax_rows: expects rank-2 (rows, cols)");
  const std::size_t m = x.shape[0], n = x.shape[1];
  TensorND y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data.data() + i * n;
    double* out = y.data.data() + i * n;
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = std::exp(row[j] - mx);
      sum += out[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
  }
  return y;
}

TensorND softmax_rows_backward(const TensorND& grad_out, const TensorND& y) {
  require(grad_out.same_shape(y), "softmax_rows_backward: shape mismatch");
  const std::size_t m = y.shape[0], n = y.shape[1];
  TensorND g({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* go = grad_out.data.data() + i * n;
    const double* yr = y.data.data() + i * n;
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += go[j] * yr[j];
    double* gr = g.data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) gr[j] = yr[j] * (go[j] - dot);
  }
  return g;
}

TensorND add(const TensorND& a, const TensorND& b) {
  require(a.same_shape(b), "add: shape mismatch");
  TensorND r = a;
  for (std::size_t i = 0; i < r.size(); ++i) r.data[i] += b.data[i];
  return r;
}

TensorND scale(const TensorND& a, double s) {
  TensorND r = a;
  for (double& v : r.data) v *= s;
  return r;
}

}  // namespace vtseg::nn
