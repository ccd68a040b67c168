#include "depthfuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "depthfuse/error.hpp"

namespace depthfuse {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
bool any_requires_grad(std::span<const Var<T>> vars) {
  return std::any_of(vars.begin(), vars.end(),
                     [](const Var<T>& v) { return v.tape->requires_grad(v); });
}

template <typename T>
Tape<T>& tape_of(std::span<const Var<T>> vars) {
  if (vars.empty()) throw UsageError("operation needs at least one input");
  Tape<T>* tape = vars.front().tape;
  for (const auto& v : vars) {
    if (v.tape != tape) throw UsageError("inputs recorded on different tapes");
  }
  return *tape;
}

struct ConvGeometry {
  std::size_t in_c, in_h, in_w;
  std::size_t out_h, out_w;
  ConvSpec spec;

  std::size_t patch() const { return in_c * spec.kernel_h * spec.kernel_w; }
  std::size_t positions() const { return out_h * out_w; }
  bool pointwise() const {
    return spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride == 1 && spec.padding == 0;
  }
};

// Unrolls one image into a (C_in*kH*kW) x (H_out*W_out) matrix.
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
  const auto& s = g.spec;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(s.padding);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_c; ++c) {
    const T* plane = image + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_w; ++kx, ++row) {
        T* out = col + row * g.positions();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky * s.dilation) - pad;
          T* out_row = out + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill(out_row, out_row + g.out_w, T{0});
            continue;
          }
          const T* in_row = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * s.stride + kx * s.dilation) - pad;
            out_row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w))
                              ? T{0}
                              : in_row[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column entries back onto the image.
template <typename T>
void col2im_accumulate(const T* col, const ConvGeometry& g, T* image) {
  const auto& s = g.spec;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(s.padding);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_c; ++c) {
    T* plane = image + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < s.kernel_w; ++kx, ++row) {
        const T* in = col + row * g.positions();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky * s.dilation) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          T* img_row = plane + static_cast<std::size_t>(iy) * g.in_w;
          const T* col_row = in + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * s.stride + kx * s.dilation) - pad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            img_row[static_cast<std::size_t>(ix)] += col_row[ox];
          }
        }
      }
    }
  }
}

struct BilinearTap {
  std::size_t lo, hi;
  double w_lo, w_hi;
};

std::vector<BilinearTap> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<BilinearTap> taps(in * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::max(src, 0.0);
    auto lo = static_cast<std::size_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    const std::size_t hi = std::min(lo + 1, in - 1);
    const double frac = src - static_cast<double>(lo);
    taps[o] = BilinearTap{lo, hi, 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

ConvSpec ConvSpec::same(std::size_t kernel, std::size_t dilation) {
  if (kernel % 2 == 0) throw ConfigError("same-padding needs an odd kernel, got " + std::to_string(kernel));
  return ConvSpec{kernel, kernel, 1, dilation * (kernel - 1) / 2, dilation};
}

void ConvSpec::validate() const {
  if (kernel_h == 0 || kernel_w == 0) throw ConfigError("conv kernel size must be positive");
  if (stride == 0) throw ConfigError("conv stride must be positive");
  if (dilation == 0) throw ConfigError("conv dilation must be positive");
}

std::size_t ConvSpec::output_h(std::size_t in) const {
  validate();
  if (in + 2 * padding < extent_h()) {
    throw ConfigError("conv output height < 1: input height " + std::to_string(in) +
                      ", padding " + std::to_string(padding) + ", dilated kernel extent " +
                      std::to_string(extent_h()));
  }
  return (in + 2 * padding - extent_h()) / stride + 1;
}

std::size_t ConvSpec::output_w(std::size_t in) const {
  validate();
  if (in + 2 * padding < extent_w()) {
    throw ConfigError("conv output width < 1: input width " + std::to_string(in) +
                      ", padding " + std::to_string(padding) + ", dilated kernel extent " +
                      std::to_string(extent_w()));
  }
  return (in + 2 * padding - extent_w()) / stride + 1;
}

template <std::floating_point T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, const ConvSpec& spec) {
  const Var<T> vars[] = {input, weight, bias};
  Tape<T>& tape = tape_of<T>(vars);
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  const Shape& bs = bias.shape();
  spec.validate();
  if (ws.c != xs.c) {
    throw ConfigError("conv2d: weight expects " + std::to_string(ws.c) +
                      " input channels (dimension C_in), input has " + std::to_string(xs.c));
  }
  if (ws.h != spec.kernel_h || ws.w != spec.kernel_w) {
    throw ConfigError("conv2d: weight kernel " + std::to_string(ws.h) + "x" + std::to_string(ws.w) +
                      " (dimension kH/kW) disagrees with spec " + std::to_string(spec.kernel_h) +
                      "x" + std::to_string(spec.kernel_w));
  }
  if (bs.numel() != ws.n) {
    throw ConfigError("conv2d: bias has " + std::to_string(bs.numel()) +
                      " elements, expected C_out = " + std::to_string(ws.n));
  }

  ConvGeometry g{xs.c, xs.h, xs.w, spec.output_h(xs.h), spec.output_w(xs.w), spec};
  const std::size_t c_out = ws.n;
  const std::size_t k = g.patch();
  const std::size_t p = g.positions();

  Tensor<T> out(Shape{xs.n, c_out, g.out_h, g.out_w});
  AlignedVector<T> col(g.pointwise() ? 0 : k * p);
  Eigen::Map<const RowMat<T>> w_mat(weight.value().raw(), c_out, k);
  const T* b = bias.value().raw();
  for (std::size_t n = 0; n < xs.n; ++n) {
    const T* image = input.value().raw() + n * xs.c * xs.plane();
    const T* col_ptr = image;
    if (!g.pointwise()) {
      im2col(image, g, col.data());
      col_ptr = col.data();
    }
    Eigen::Map<const RowMat<T>> col_mat(col_ptr, k, p);
    Eigen::Map<RowMat<T>> out_mat(out.raw() + n * c_out * p, c_out, p);
    out_mat.noalias() = w_mat * col_mat;
    for (std::size_t co = 0; co < c_out; ++co) out_mat.row(co).array() += b[co];
  }

  const bool needs_grad = any_requires_grad<T>(vars);
  const std::size_t xi = input.id, wi = weight.id, bi = bias.id;
  return tape.record(std::move(out), needs_grad, [g, xi, wi, bi](Tape<T>& t, std::size_t self) {
    const Tensor<T>& go = t.grad_of(self);
    const Tensor<T>& x = t.value_of(xi);
    const Tensor<T>& w = t.value_of(wi);
    const std::size_t batch = x.shape().n;
    const std::size_t c_out = w.shape().n;
    const std::size_t k = g.patch();
    const std::size_t p = g.positions();
    const std::size_t in_size = g.in_c * g.in_h * g.in_w;
    const bool want_x = t.requires_grad(xi);
    const bool want_w = t.requires_grad(wi);
    const bool want_b = t.requires_grad(bi);

    AlignedVector<T> col(g.pointwise() ? 0 : k * p);
    AlignedVector<T> gcol(want_x && !g.pointwise() ? k * p : 0);
    Eigen::Map<const RowMat<T>> w_mat(w.raw(), c_out, k);
    for (std::size_t n = 0; n < batch; ++n) {
      Eigen::Map<const RowMat<T>> go_mat(go.raw() + n * c_out * p, c_out, p);
      if (want_w) {
        const T* image = x.raw() + n * in_size;
        const T* col_ptr = image;
        if (!g.pointwise()) {
          im2col(image, g, col.data());
          col_ptr = col.data();
        }
        Eigen::Map<const RowMat<T>> col_mat(col_ptr, k, p);
        Eigen::Map<RowMat<T>> gw(t.grad_buffer(wi).raw(), c_out, k);
        gw.noalias() += go_mat * col_mat.transpose();
      }
      if (want_b) {
        T* gb = t.grad_buffer(bi).raw();
        for (std::size_t co = 0; co < c_out; ++co) {
          const T* row = go.raw() + (n * c_out + co) * p;
          T acc = T{0};
          for (std::size_t i = 0; i < p; ++i) acc += row[i];
          gb[co] += acc;
        }
      }
      if (want_x) {
        T* gx = t.grad_buffer(xi).raw() + n * in_size;
        if (g.pointwise()) {
          Eigen::Map<RowMat<T>> gx_mat(gx, k, p);
          gx_mat.noalias() += w_mat.transpose() * go_mat;
        } else {
          Eigen::Map<RowMat<T>> gcol_mat(gcol.data(), k, p);
          gcol_mat.noalias() = w_mat.transpose() * go_mat;
          col2im_accumulate(gcol.data(), g, gx);
        }
      }
    }
  });
}

template <std::floating_point T>
Var<T> concat_channels(std::span<const Var<T>> inputs) {
  Tape<T>& tape = tape_of<T>(inputs);
  const Shape first = inputs.front().shape();
  std::size_t channels = 0;
  for (const auto& v : inputs) {
    const Shape& s = v.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ConfigError("concat_channels: input " + s.str() + " does not match " + first.str() +
                        " in batch/height/width");
    }
    channels += s.c;
  }
  Tensor<T> out(Shape{first.n, channels, first.h, first.w});
  const std::size_t plane = first.plane();
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (std::size_t n = 0; n < first.n; ++n) {
    std::size_t c0 = 0;
    for (const auto& v : inputs) {
      const std::size_t block = v.shape().c * plane;
      const T* src = v.value().raw() + n * block;
      std::copy(src, src + block, out.raw() + (n * channels + c0) * plane);
      c0 += v.shape().c;
    }
  }
  for (const auto& v : inputs) {
    ids.push_back(v.id);
    offsets.push_back(offset);
    offset += v.shape().c;
  }
  const bool needs_grad = any_requires_grad<T>(inputs);
  return tape.record(std::move(out), needs_grad,
                     [ids, offsets, channels, plane](Tape<T>& t, std::size_t self) {
                       const Tensor<T>& go = t.grad_of(self);
                       const std::size_t batch = go.shape().n;
                       for (std::size_t i = 0; i < ids.size(); ++i) {
                         if (!t.requires_grad(ids[i])) continue;
                         Tensor<T>& gi = t.grad_buffer(ids[i]);
                         const std::size_t block = gi.shape().c * plane;
                         for (std::size_t n = 0; n < batch; ++n) {
                           const T* src = go.raw() + (n * channels + offsets[i]) * plane;
                           T* dst = gi.raw() + n * block;
                           for (std::size_t j = 0; j < block; ++j) dst[j] += src[j];
                         }
                       }
                     });
}

template <std::floating_point T>
Var<T> relu(Var<T> input) {
  Tensor<T> out = input.value();
  for (T& x : out.data()) x = x > T{0} ? x : T{0};
  const std::size_t xi = input.id;
  return input.tape->record(std::move(out), input.tape->requires_grad(input),
                            [xi](Tape<T>& t, std::size_t self) {
                              const auto go = t.grad_of(self).data();
                              const auto x = t.value_of(xi).data();
                              auto gx = t.grad_buffer(xi).data();
                              for (std::size_t i = 0; i < gx.size(); ++i) {
                                if (x[i] > T{0}) gx[i] += go[i];
                              }
                            });
}

template <std::floating_point T>
Var<T> softplus(Var<T> input) {
  Tensor<T> out = input.value();
  // Floored at the smallest normal value so very negative inputs stay > 0.
  for (T& x : out.data()) {
    x = std::max(std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x))), std::numeric_limits<T>::min());
  }
  const std::size_t xi = input.id;
  return input.tape->record(std::move(out), input.tape->requires_grad(input),
                            [xi](Tape<T>& t, std::size_t self) {
                              const auto go = t.grad_of(self).data();
                              const auto x = t.value_of(xi).data();
                              auto gx = t.grad_buffer(xi).data();
                              for (std::size_t i = 0; i < gx.size(); ++i) {
                                gx[i] += go[i] / (T{1} + std::exp(-x[i]));
                              }
                            });
}

template <std::floating_point T>
Var<T> group_norm(Var<T> input, Var<T> gamma, Var<T> beta, std::size_t groups, T epsilon) {
  const Var<T> vars[] = {input, gamma, beta};
  Tape<T>& tape = tape_of<T>(vars);
  const Shape s = input.shape();
  const Shape affine{1, s.c, 1, 1};
  if (groups == 0 || s.c % groups != 0) {
    throw ConfigError("group_norm: " + std::to_string(s.c) + " channels cannot be split into " +
                      std::to_string(groups) + " groups");
  }
  if (gamma.shape() != affine || beta.shape() != affine) {
    throw ConfigError("group_norm: scale and shift must have shape " + affine.str());
  }
  if (!(epsilon > T{0})) throw ConfigError("group_norm: epsilon must be > 0");
  const std::size_t per_group = s.c / groups;
  const std::size_t plane = s.h * s.w;
  const std::size_t group_size = per_group * plane;

  auto normalized = std::make_shared<Tensor<T>>(s);
  auto inv_std = std::make_shared<std::vector<T>>(s.n * groups);
  Tensor<T> out(s);
  const T* ga = gamma.value().raw();
  const T* be = beta.value().raw();
  for (std::size_t ng = 0; ng < s.n * groups; ++ng) {
    const T* x = input.value().raw() + ng * group_size;
    T* xh = normalized->raw() + ng * group_size;
    T* y = out.raw() + ng * group_size;
    T mean = T{0};
    for (std::size_t i = 0; i < group_size; ++i) mean += x[i];
    mean /= static_cast<T>(group_size);
    T var = T{0};
    for (std::size_t i = 0; i < group_size; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<T>(group_size);
    const T r = T{1} / std::sqrt(var + epsilon);
    (*inv_std)[ng] = r;
    for (std::size_t k = 0; k < per_group; ++k) {
      const std::size_t c = ng % groups * per_group + k;
      for (std::size_t i = k * plane; i < (k + 1) * plane; ++i) {
        xh[i] = (x[i] - mean) * r;
        y[i] = ga[c] * xh[i] + be[c];
      }
    }
  }

  const std::size_t xi = input.id, gi = gamma.id, bi = beta.id;
  return tape.record(std::move(out), any_requires_grad<T>(vars),
                     [=](Tape<T>& t, std::size_t self) {
                       const T* ga_v = t.value_of(gi).raw();
                       const bool want_g = t.requires_grad(gi);
                       const bool want_b = t.requires_grad(bi);
                       const bool want_x = t.requires_grad(xi);
                       for (std::size_t ng = 0; ng < s.n * groups; ++ng) {
                         const T* go = t.grad_of(self).raw() + ng * group_size;
                         const T* xh = normalized->raw() + ng * group_size;
                         T mean_g = T{0}, mean_gx = T{0};
                         for (std::size_t k = 0; k < per_group; ++k) {
                           const std::size_t c = ng % groups * per_group + k;
                           T dg = T{0}, db = T{0};
                           for (std::size_t i = k * plane; i < (k + 1) * plane; ++i) {
                             dg += go[i] * xh[i];
                             db += go[i];
                           }
                           if (want_g) t.grad_buffer(gi).raw()[c] += dg;
                           if (want_b) t.grad_buffer(bi).raw()[c] += db;
                           mean_g += ga_v[c] * db;
                           mean_gx += ga_v[c] * dg;
                         }
                         if (!want_x) continue;
                         const T count = static_cast<T>(group_size);
                         mean_g /= count;
                         mean_gx /= count;
                         const T r = (*inv_std)[ng];
                         T* gx = t.grad_buffer(xi).raw() + ng * group_size;
                         for (std::size_t k = 0; k < per_group; ++k) {
                           const T gc = ga_v[ng % groups * per_group + k];
                           for (std::size_t i = k * plane; i < (k + 1) * plane; ++i) {
                             gx[i] += r * (gc * go[i] - mean_g - xh[i] * mean_gx);
                           }
                         }
                       }
                     });
}

template <std::floating_point T>
Var<T> add(Var<T> a, Var<T> b) {
  const Var<T> vars[] = {a, b};
  return add_n<T>(vars);
}

template <std::floating_point T>
Var<T> add_n(std::span<const Var<T>> inputs) {
  Tape<T>& tape = tape_of<T>(inputs);
  const Shape shape = inputs.front().shape();
  Tensor<T> out = inputs.front().value();
  std::vector<std::size_t> ids{inputs.front().id};
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    if (inputs[i].shape() != shape) {
      throw ConfigError("add: shape " + inputs[i].shape().str() + " does not match " + shape.str());
    }
    const auto src = inputs[i].value().data();
    auto dst = out.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    ids.push_back(inputs[i].id);
  }
  return tape.record(std::move(out), any_requires_grad<T>(inputs),
                     [ids](Tape<T>& t, std::size_t self) {
                       const auto go = t.grad_of(self).data();
                       for (std::size_t id : ids) {
                         if (!t.requires_grad(id)) continue;
                         auto g = t.grad_buffer(id).data();
                         for (std::size_t j = 0; j < g.size(); ++j) g[j] += go[j];
                       }
                     });
}

template <std::floating_point T>
Var<T> avg_pool2(Var<T> input) {
  const Shape s = input.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ConfigError("avg_pool2: spatial size " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                      " must be even");
  }
  const std::size_t oh = s.h / 2, ow = s.w / 2;
  Tensor<T> out(Shape{s.n, s.c, oh, ow});
  const T* x = input.value().raw();
  T* y = out.raw();
  for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
    const T* xp = x + plane * s.h * s.w;
    T* yp = y + plane * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const T* r0 = xp + 2 * oy * s.w;
      const T* r1 = r0 + s.w;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        yp[oy * ow + ox] = T{0.25} * (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]);
      }
    }
  }
  const std::size_t xi = input.id;
  return input.tape->record(std::move(out), input.tape->requires_grad(input),
                            [xi, s, oh, ow](Tape<T>& t, std::size_t self) {
                              const T* go = t.grad_of(self).raw();
                              T* gx = t.grad_buffer(xi).raw();
                              for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
                                T* gp = gx + plane * s.h * s.w;
                                const T* gop = go + plane * oh * ow;
                                for (std::size_t oy = 0; oy < oh; ++oy) {
                                  T* r0 = gp + 2 * oy * s.w;
                                  T* r1 = r0 + s.w;
                                  for (std::size_t ox = 0; ox < ow; ++ox) {
                                    const T v = T{0.25} * gop[oy * ow + ox];
                                    r0[2 * ox] += v;
                                    r0[2 * ox + 1] += v;
                                    r1[2 * ox] += v;
                                    r1[2 * ox + 1] += v;
                                  }
                                }
                              }
                            });
}

template <std::floating_point T>
Var<T> upsample_bilinear(Var<T> input, std::size_t factor) {
  if (factor == 0) throw ConfigError("upsample_bilinear: factor must be >= 1");
  const Shape s = input.shape();
  if (factor == 1) {
    const std::size_t xi = input.id;
    return input.tape->record(input.value(), input.tape->requires_grad(input),
                              [xi](Tape<T>& t, std::size_t self) {
                                const auto go = t.grad_of(self).data();
                                auto gx = t.grad_buffer(xi).data();
                                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
                              });
  }
  const std::size_t oh = s.h * factor, ow = s.w * factor;
  const auto ty = bilinear_taps(s.h, factor);
  const auto tx = bilinear_taps(s.w, factor);
  Tensor<T> out(Shape{s.n, s.c, oh, ow});
  const T* x = input.value().raw();
  T* y = out.raw();
  for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
    const T* xp = x + plane * s.h * s.w;
    T* yp = y + plane * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const auto& a = ty[oy];
      const T* r0 = xp + a.lo * s.w;
      const T* r1 = xp + a.hi * s.w;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const auto& b = tx[ox];
        const T top = static_cast<T>(b.w_lo) * r0[b.lo] + static_cast<T>(b.w_hi) * r0[b.hi];
        const T bottom = static_cast<T>(b.w_lo) * r1[b.lo] + static_cast<T>(b.w_hi) * r1[b.hi];
        yp[oy * ow + ox] = static_cast<T>(a.w_lo) * top + static_cast<T>(a.w_hi) * bottom;
      }
    }
  }
  const std::size_t xi = input.id;
  return input.tape->record(
      std::move(out), input.tape->requires_grad(input),
      [xi, s, oh, ow, ty, tx](Tape<T>& t, std::size_t self) {
        const T* go = t.grad_of(self).raw();
        T* gx = t.grad_buffer(xi).raw();
        for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
          T* gp = gx + plane * s.h * s.w;
          const T* gop = go + plane * oh * ow;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const auto& a = ty[oy];
            T* r0 = gp + a.lo * s.w;
            T* r1 = gp + a.hi * s.w;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const auto& b = tx[ox];
              const T g = gop[oy * ow + ox];
              const T g0 = static_cast<T>(a.w_lo) * g;
              const T g1 = static_cast<T>(a.w_hi) * g;
              r0[b.lo] += static_cast<T>(b.w_lo) * g0;
              r0[b.hi] += static_cast<T>(b.w_hi) * g0;
              r1[b.lo] += static_cast<T>(b.w_lo) * g1;
              r1[b.hi] += static_cast<T>(b.w_hi) * g1;
            }
          }
        }
      });
}

template <std::floating_point T>
Var<T> sum(Var<T> input) {
  T total{0};
  for (T x : input.value().data()) total += x;
  const std::size_t xi = input.id;
  return input.tape->record(Tensor<T>::scalar(total), input.tape->requires_grad(input),
                            [xi](Tape<T>& t, std::size_t self) {
                              const T g = t.grad_of(self).raw()[0];
                              for (T& gx : t.grad_buffer(xi).data()) gx += g;
                            });
}

template <std::floating_point T>
Var<T> mean(Var<T> input) {
  const std::size_t count = input.value().numel();
  if (count == 0) throw EvaluationError("mean of an empty tensor");
  return scale(sum(input), T{1} / static_cast<T>(count));
}

template <std::floating_point T>
Var<T> scale(Var<T> input, T factor) {
  Tensor<T> out = input.value();
  for (T& x : out.data()) x *= factor;
  const std::size_t xi = input.id;
  return input.tape->record(std::move(out), input.tape->requires_grad(input),
                            [xi, factor](Tape<T>& t, std::size_t self) {
                              const auto go = t.grad_of(self).data();
                              auto gx = t.grad_buffer(xi).data();
                              for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * go[i];
                            });
}

template <std::floating_point T>
Var<T> dot(Var<T> input, const Tensor<T>& weights) {
  if (weights.shape() != input.shape()) {
    throw ConfigError("dot: weights " + weights.shape().str() + " vs input " + input.shape().str());
  }
  T total{0};
  const auto x = input.value().data();
  const auto w = weights.data();
  for (std::size_t i = 0; i < x.size(); ++i) total += x[i] * w[i];
  const std::size_t xi = input.id;
  return input.tape->record(Tensor<T>::scalar(total), input.tape->requires_grad(input),
                            [xi, weights](Tape<T>& t, std::size_t self) {
                              const T g = t.grad_of(self).raw()[0];
                              const auto w = weights.data();
                              auto gx = t.grad_buffer(xi).data();
                              for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * w[i];
                            });
}

template <std::floating_point T>
Var<T> weighted_sum(std::span<const Var<T>> scalars, std::span<const T> weights) {
  Tape<T>& tape = tape_of<T>(scalars);
  if (scalars.size() != weights.size()) {
    throw ConfigError("weighted_sum: " + std::to_string(scalars.size()) + " terms but " +
                      std::to_string(weights.size()) + " weights");
  }
  T total{0};
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    total += weights[i] * scalars[i].value().item();
    ids.push_back(scalars[i].id);
  }
  std::vector<T> w(weights.begin(), weights.end());
  return tape.record(Tensor<T>::scalar(total), any_requires_grad<T>(scalars),
                     [ids, w](Tape<T>& t, std::size_t self) {
                       const T g = t.grad_of(self).raw()[0];
                       for (std::size_t i = 0; i < ids.size(); ++i) {
                         if (t.requires_grad(ids[i])) t.grad_buffer(ids[i]).raw()[0] += w[i] * g;
                       }
                     });
}

#define DEPTHFUSE_INSTANTIATE_OPS(T)                                                      \
  template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>, const ConvSpec&);                     \
  template Var<T> concat_channels<T>(std::span<const Var<T>>);                            \
  template Var<T> relu<T>(Var<T>);                                                        \
  template Var<T> softplus<T>(Var<T>);                                                    \
  template Var<T> group_norm<T>(Var<T>, Var<T>, Var<T>, std::size_t, T);                  \
  template Var<T> add<T>(Var<T>, Var<T>);                                                 \
  template Var<T> add_n<T>(std::span<const Var<T>>);                                      \
  template Var<T> avg_pool2<T>(Var<T>);                                                   \
  template Var<T> upsample_bilinear<T>(Var<T>, std::size_t);                              \
  template Var<T> sum<T>(Var<T>);                                                         \
  template Var<T> mean<T>(Var<T>);                                                        \
  template Var<T> scale<T>(Var<T>, T);                                                    \
  template Var<T> dot<T>(Var<T>, const Tensor<T>&);                                       \
  template Var<T> weighted_sum<T>(std::span<const Var<T>>, std::span<const T>);

DEPTHFUSE_INSTANTIATE_OPS(float)
DEPTHFUSE_INSTANTIATE_OPS(double)

#undef DEPTHFUSE_INSTANTIATE_OPS

}  // namespace depthfuse
