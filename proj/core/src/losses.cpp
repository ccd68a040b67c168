#include "depthfuse/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "depthfuse/error.hpp"
#include "depthfuse/ops.hpp"

namespace depthfuse {
namespace {

bool pixel_valid(MaskView mask, std::size_t i) { return mask.empty() || mask[i] != 0; }

void check_mask(MaskView mask, std::size_t expected, const char* who) {
  if (!mask.empty() && mask.size() != expected) {
    throw ConfigError(std::string(who) + ": mask has " + std::to_string(mask.size()) +
                      " entries, expected " + std::to_string(expected));
  }
}

// Window statistics at one position, two-pass so that x == y gives
// bit-identical numerator and denominator.
struct WindowStats {
  double mu_x, mu_y, var_x, var_y, cov;
};

WindowStats window_stats(const double* x, const double* y, std::size_t stride, std::size_t win) {
  const double n = static_cast<double>(win * win);
  double sx = 0.0, sy = 0.0;
  for (std::size_t r = 0; r < win; ++r) {
    for (std::size_t c = 0; c < win; ++c) {
      sx += x[r * stride + c];
      sy += y[r * stride + c];
    }
  }
  const double mx = sx / n, my = sy / n;
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (std::size_t r = 0; r < win; ++r) {
    for (std::size_t c = 0; c < win; ++c) {
      const double dx = x[r * stride + c] - mx;
      const double dy = y[r * stride + c] - my;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
  }
  return WindowStats{mx, my, vx / n, vy / n, cxy / n};
}

double ssim_value(const WindowStats& s, const SsimParams& p) {
  const double a1 = 2.0 * s.mu_x * s.mu_y + p.c1;
  const double a2 = 2.0 * s.cov + p.c2;
  const double b1 = s.mu_x * s.mu_x + s.mu_y * s.mu_y + p.c1;
  const double b2 = s.var_x + s.var_y + p.c2;
  return (a1 * a2) / (b1 * b2);
}

// Integral image over invalid pixels, used to test whole windows.
std::vector<std::size_t> invalid_integral(MaskView mask, std::size_t offset, std::size_t h,
                                          std::size_t w) {
  std::vector<std::size_t> ii((h + 1) * (w + 1), 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t bad = pixel_valid(mask, offset + y * w + x) ? 0 : 1;
      ii[(y + 1) * (w + 1) + x + 1] = bad + ii[y * (w + 1) + x + 1] + ii[(y + 1) * (w + 1) + x] -
                                      ii[y * (w + 1) + x];
    }
  }
  return ii;
}

template <typename T>
SsimMap ssim_impl(const Tensor<T>& xt, const Tensor<T>& yt, MaskView mask,
                  const SsimParams& params) {
  params.validate();
  const Shape s = xt.shape();
  if (yt.shape() != s) {
    throw ConfigError("ssim: shapes " + s.str() + " and " + yt.shape().str() + " differ");
  }
  check_mask(mask, s.n * s.h * s.w, "ssim");
  const std::size_t win = params.window;
  if (win > s.h || win > s.w) {
    throw ConfigError("ssim: window " + std::to_string(win) + " larger than image " +
                      std::to_string(s.h) + "x" + std::to_string(s.w));
  }
  SsimMap map;
  map.planes = s.n * s.c;
  map.height = s.h - win + 1;
  map.width = s.w - win + 1;
  map.values.assign(map.planes * map.height * map.width, 0.0);
  map.valid.assign(map.values.size(), 0);

  std::vector<double> xp(s.plane()), yp(s.plane());
  double total = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    const auto ii = invalid_integral(mask, n * s.plane(), s.h, s.w);
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t plane = n * s.c + c;
      std::copy_n(xt.raw() + plane * s.plane(), s.plane(), xp.begin());
      std::copy_n(yt.raw() + plane * s.plane(), s.plane(), yp.begin());
      for (std::size_t py = 0; py < map.height; ++py) {
        for (std::size_t px = 0; px < map.width; ++px) {
          const std::size_t bad = ii[(py + win) * (s.w + 1) + px + win] -
                                  ii[py * (s.w + 1) + px + win] - ii[(py + win) * (s.w + 1) + px] +
                                  ii[py * (s.w + 1) + px];
          if (bad != 0) continue;
          const auto st = window_stats(&xp[py * s.w + px], &yp[py * s.w + px], s.w, win);
          const double v = std::clamp(ssim_value(st, params), -1.0, 1.0);
          const std::size_t m = (plane * map.height + py) * map.width + px;
          map.values[m] = v;
          map.valid[m] = 1;
          ++map.valid_count;
          total += v;
        }
      }
    }
  }
  if (map.valid_count == 0) throw EvaluationError("ssim: no window lies entirely on valid pixels");
  map.mean = total / static_cast<double>(map.valid_count);
  return map;
}

}  // namespace

void DiscretizationSpec::validate() const {
  if (bins < 1) throw ConfigError("discretization: bins must be >= 1");
  if (!(d_min > 0.0)) throw ConfigError("discretization: d_min must be positive");
  if (!(d_min < d_max)) throw ConfigError("discretization: d_min must be < d_max");
}

double DiscretizationSpec::edge(std::size_t i) const {
  if (i == 0) return d_min;
  if (i >= bins) return d_max;
  return d_min * std::exp(std::log(d_max / d_min) * static_cast<double>(i) / static_cast<double>(bins));
}

double DiscretizationSpec::center(std::size_t bin) const {
  return std::sqrt(edge(bin) * edge(bin + 1));
}

std::int32_t DiscretizationSpec::bin_of(double depth) const {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw DataError("discretize: depth " + std::to_string(depth) + " is not a positive finite value");
  }
  const double t = std::log(depth / d_min) / std::log(d_max / d_min);
  const double raw = std::floor(static_cast<double>(bins) * t);
  const double clamped = std::clamp(raw, 0.0, static_cast<double>(bins - 1));
  return static_cast<std::int32_t>(clamped);
}

void LossWeights::validate() const {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) throw ConfigError("loss weights must be non-negative");
  if (!(alpha + beta + gamma > 0.0)) throw ConfigError("loss weights must not all be zero");
  if (ssim_window == 0 || ssim_window % 2 == 0) throw ConfigError("ssim_window must be odd");
}

SsimParams SsimParams::from(const LossWeights& weights, double dynamic_range) {
  SsimParams p;
  p.window = weights.ssim_window;
  p.c1 = weights.ssim_c1.value_or((weights.ssim_k1 * dynamic_range) * (weights.ssim_k1 * dynamic_range));
  p.c2 = weights.ssim_c2.value_or((weights.ssim_k2 * dynamic_range) * (weights.ssim_k2 * dynamic_range));
  return p;
}

void SsimParams::validate() const {
  if (window == 0 || window % 2 == 0) throw ConfigError("ssim: window must be odd");
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw ConfigError("ssim: C1 and C2 must be positive");
}

template <std::floating_point T>
SsimMap ssim(const Tensor<T>& x, const Tensor<T>& y, MaskView mask, const SsimParams& params) {
  return ssim_impl(x, y, mask, params);
}

template <std::floating_point T>
Var<T> l1_depth_loss(Var<T> pred, const Tensor<T>& truth, MaskView mask) {
  const Shape s = pred.shape();
  if (truth.shape() != s) {
    throw ConfigError("l1_depth_loss: prediction " + s.str() + " vs truth " + truth.shape().str());
  }
  const std::size_t per_item = s.c * s.plane();
  check_mask(mask, s.n * s.plane(), "l1_depth_loss");
  const auto p = pred.value().data();
  const auto t = truth.data();
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::size_t pix = (i / per_item) * s.plane() + i % s.plane();
    if (!pixel_valid(mask, pix)) continue;
    total += std::abs(static_cast<double>(p[i]) - static_cast<double>(t[i]));
    ++count;
  }
  if (count == 0) throw EvaluationError("l1_depth_loss: mask has no valid pixels");
  const T inv = T{1} / static_cast<T>(count);
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  const std::size_t pi = pred.id;
  return pred.tape->record(
      Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(count))),
      pred.tape->requires_grad(pred), [pi, truth, m, inv, s, per_item](Tape<T>& tp, std::size_t self) {
        const T g = tp.grad_of(self).raw()[0] * inv;
        const auto p = tp.value_of(pi).data();
        const auto t = truth.data();
        auto gp = tp.grad_buffer(pi).data();
        for (std::size_t i = 0; i < gp.size(); ++i) {
          const std::size_t pix = (i / per_item) * s.plane() + i % s.plane();
          if (!pixel_valid(m, pix)) continue;
          if (p[i] > t[i]) gp[i] += g;
          else if (p[i] < t[i]) gp[i] -= g;
        }
      });
}

template <std::floating_point T>
Var<T> ssim_loss(Var<T> pred, const Tensor<T>& truth, MaskView mask, const SsimParams& params) {
  const SsimMap map = ssim_impl(pred.value(), truth, mask, params);
  const T loss = static_cast<T>((1.0 - map.mean) / 2.0);
  const std::size_t pi = pred.id;
  std::vector<std::uint8_t> valid = map.valid;
  const std::size_t mh = map.height, mw = map.width, count = map.valid_count;
  return pred.tape->record(
      Tensor<T>::scalar(loss), pred.tape->requires_grad(pred),
      [pi, truth, params, valid, mh, mw, count](Tape<T>& tp, std::size_t self) {
        const Tensor<T>& x = tp.value_of(pi);
        const Shape s = x.shape();
        const std::size_t win = params.window;
        const double n = static_cast<double>(win * win);
        // d loss / d S at each valid position
        const double upstream =
            static_cast<double>(tp.grad_of(self).raw()[0]) * (-0.5 / static_cast<double>(count));
        T* gx = tp.grad_buffer(pi).raw();
        std::vector<double> xp(s.plane()), yp(s.plane()), acc(s.plane());
        for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
          std::copy_n(x.raw() + plane * s.plane(), s.plane(), xp.begin());
          std::copy_n(truth.raw() + plane * s.plane(), s.plane(), yp.begin());
          std::fill(acc.begin(), acc.end(), 0.0);
          for (std::size_t py = 0; py < mh; ++py) {
            for (std::size_t px = 0; px < mw; ++px) {
              if (!valid[(plane * mh + py) * mw + px]) continue;
              const double* xw = &xp[py * s.w + px];
              const double* yw = &yp[py * s.w + px];
              const auto st = window_stats(xw, yw, s.w, win);
              const double a1 = 2.0 * st.mu_x * st.mu_y + params.c1;
              const double a2 = 2.0 * st.cov + params.c2;
              const double b1 = st.mu_x * st.mu_x + st.mu_y * st.mu_y + params.c1;
              const double b2 = st.var_x + st.var_y + params.c2;
              const double value = (a1 * a2) / (b1 * b2);
              const double d_mu = 2.0 * st.mu_y * a2 / (b1 * b2) - value * 2.0 * st.mu_x / b1;
              const double d_var = -value / b2;
              const double d_cov = 2.0 * a1 / (b1 * b2);
              const double k = upstream / n;
              for (std::size_t r = 0; r < win; ++r) {
                for (std::size_t c = 0; c < win; ++c) {
                  const std::size_t q = (py + r) * s.w + px + c;
                  acc[q] += k * (d_mu + d_var * 2.0 * (xp[q] - st.mu_x) + d_cov * (yp[q] - st.mu_y));
                }
              }
            }
          }
          T* g = gx + plane * s.plane();
          for (std::size_t q = 0; q < s.plane(); ++q) g[q] += static_cast<T>(acc[q]);
        }
      });
}

template <std::floating_point T>
std::vector<std::int32_t> discretize_depth(const Tensor<T>& depth, MaskView mask,
                                           const DiscretizationSpec& spec) {
  spec.validate();
  const Shape s = depth.shape();
  if (s.c != 1) throw ConfigError("discretize_depth: expected a single-channel depth map, got " + s.str());
  check_mask(mask, s.numel(), "discretize_depth");
  std::vector<std::int32_t> labels(s.numel(), -1);
  const auto d = depth.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (pixel_valid(mask, i)) labels[i] = spec.bin_of(static_cast<double>(d[i]));
  }
  return labels;
}

template <std::floating_point T>
Var<T> multinomial_logistic_loss(Var<T> logits, std::span<const std::int32_t> labels,
                                 MaskView mask) {
  const Shape s = logits.shape();
  const std::size_t pixels = s.n * s.plane();
  if (labels.size() != pixels) {
    throw ConfigError("multinomial_logistic_loss: " + std::to_string(labels.size()) +
                      " labels for " + std::to_string(pixels) + " pixels");
  }
  check_mask(mask, pixels, "multinomial_logistic_loss");
  const auto z = logits.value().data();
  const std::size_t k = s.c;
  // softmax probabilities, kept for the backward pass
  std::vector<T> prob(z.size(), T{0});
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t q = 0; q < s.plane(); ++q) {
      const std::size_t pix = n * s.plane() + q;
      if (!pixel_valid(mask, pix)) continue;
      const std::int32_t label = labels[pix];
      if (label < 0 || static_cast<std::size_t>(label) >= k) {
        throw DataError("multinomial_logistic_loss: label " + std::to_string(label) +
                        " outside [0, " + std::to_string(k - 1) + "] at pixel " + std::to_string(pix));
      }
      const std::size_t base = n * k * s.plane() + q;
      double zmax = -INFINITY;
      for (std::size_t c = 0; c < k; ++c) zmax = std::max(zmax, static_cast<double>(z[base + c * s.plane()]));
      double denom = 0.0;
      for (std::size_t c = 0; c < k; ++c) denom += std::exp(static_cast<double>(z[base + c * s.plane()]) - zmax);
      for (std::size_t c = 0; c < k; ++c) {
        prob[base + c * s.plane()] =
            static_cast<T>(std::exp(static_cast<double>(z[base + c * s.plane()]) - zmax) / denom);
      }
      total += std::log(denom) - (static_cast<double>(z[base + static_cast<std::size_t>(label) * s.plane()]) - zmax);
      ++count;
    }
  }
  if (count == 0) throw EvaluationError("multinomial_logistic_loss: mask has no valid pixels");
  const T inv = T{1} / static_cast<T>(count);
  std::vector<std::int32_t> lab(labels.begin(), labels.end());
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  const std::size_t li = logits.id;
  return logits.tape->record(
      Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(count))),
      logits.tape->requires_grad(logits),
      [li, prob = std::move(prob), lab = std::move(lab), m = std::move(m), inv, s](Tape<T>& tp, std::size_t self) {
        const T g = tp.grad_of(self).raw()[0] * inv;
        T* gz = tp.grad_buffer(li).raw();
        for (std::size_t n = 0; n < s.n; ++n) {
          for (std::size_t q = 0; q < s.plane(); ++q) {
            const std::size_t pix = n * s.plane() + q;
            if (!pixel_valid(m, pix)) continue;
            const std::size_t base = n * s.c * s.plane() + q;
            for (std::size_t c = 0; c < s.c; ++c) {
              const T onehot = static_cast<std::size_t>(lab[pix]) == c ? T{1} : T{0};
              gz[base + c * s.plane()] += g * (prob[base + c * s.plane()] - onehot);
            }
          }
        }
      });
}

template <std::floating_point T>
CombinedLoss<T> combined_loss(Var<T> pred_depth, Var<T> logits, const Tensor<T>& truth,
                              MaskView mask, const LossWeights& weights,
                              const DiscretizationSpec& spec) {
  weights.validate();
  spec.validate();
  const Var<T> l_depth = l1_depth_loss(pred_depth, truth, mask);
  const Var<T> l_ssim = ssim_loss(pred_depth, truth, mask, SsimParams::from(weights, spec.d_max));
  const auto labels = discretize_depth(truth, mask, spec);
  const Var<T> l_logistic = multinomial_logistic_loss<T>(logits, labels, mask);

  const Var<T> terms[] = {l_depth, l_ssim, l_logistic};
  const T w[] = {static_cast<T>(weights.alpha), static_cast<T>(weights.beta),
                 static_cast<T>(weights.gamma)};
  const Var<T> total = weighted_sum<T>(terms, w);

  LossBreakdown b;
  b.depth = l_depth.value().item();
  b.ssim = l_ssim.value().item();
  b.logistic = l_logistic.value().item();
  const T wd = w[0] * l_depth.value().item();
  const T ws = w[1] * l_ssim.value().item();
  const T wl = w[2] * l_logistic.value().item();
  b.weighted_depth = wd;
  b.weighted_ssim = ws;
  b.weighted_logistic = wl;
  b.total = total.value().item();
  return CombinedLoss<T>{total, b};
}

#define DEPTHFUSE_INSTANTIATE_LOSSES(T)                                                        \
  template SsimMap ssim<T>(const Tensor<T>&, const Tensor<T>&, MaskView, const SsimParams&);   \
  template Var<T> l1_depth_loss<T>(Var<T>, const Tensor<T>&, MaskView);                        \
  template Var<T> ssim_loss<T>(Var<T>, const Tensor<T>&, MaskView, const SsimParams&);         \
  template std::vector<std::int32_t> discretize_depth<T>(const Tensor<T>&, MaskView,           \
                                                         const DiscretizationSpec&);           \
  template Var<T> multinomial_logistic_loss<T>(Var<T>, std::span<const std::int32_t>, MaskView); \
  template CombinedLoss<T> combined_loss<T>(Var<T>, Var<T>, const Tensor<T>&, MaskView,        \
                                            const LossWeights&, const DiscretizationSpec&);

DEPTHFUSE_INSTANTIATE_LOSSES(float)
DEPTHFUSE_INSTANTIATE_LOSSES(double)

#undef DEPTHFUSE_INSTANTIATE_LOSSES

}  // namespace depthfuse
