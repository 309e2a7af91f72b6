// Serial reference kernels, written as plainly as possible: explicit loops
// over a virtually zero-padded input, no parallelism, no restructuring for
// speed. Templated on the scalar so the same code doubles as a 64-bit
// precision oracle (Grid<double>) and as a serial float baseline whose
// accumulation order matches the production kernels (Grid<float>).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "bbnn/tensor.hpp"

namespace bbnn::ref {

template <class S>
struct Grid {
  Shape4 shape{0, 0, 0, 0};
  std::vector<S> v;

  Grid() = default;
  explicit Grid(Shape4 s) : shape(s), v(static_cast<std::size_t>(s.numel()), S(0)) {}
  Grid(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c)
      : Grid(Shape4{n, h, w, c}) {}

  S& at(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) {
    return v[static_cast<std::size_t>(
        ((n * shape.h + h) * shape.w + w) * shape.c + c)];
  }
  S at(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) const {
    return v[static_cast<std::size_t>(
        ((n * shape.h + h) * shape.w + w) * shape.c + c)];
  }
};

template <class S>
Grid<S> from_tensor(const Tensor& t) {
  Grid<S> g(t.shape());
  for (std::int64_t i = 0; i < t.size(); ++i) g.v[static_cast<std::size_t>(i)] = S(t[i]);
  return g;
}

template <class S>
Tensor to_tensor(const Grid<S>& g) {
  Tensor t(g.shape);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(g.v[static_cast<std::size_t>(i)]);
  return t;
}

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

// SAME convolution; w is (kh, kw, c_in, c_out), b is (1, 1, 1, c_out).
template <class S>
Grid<S> conv2d(const Grid<S>& x, const Grid<S>& w, const Grid<S>& b,
               std::int64_t sh, std::int64_t sw) {
  const std::int64_t kh = w.shape.n, kw = w.shape.h;
  const std::int64_t ci_n = w.shape.w, co_n = w.shape.c;
  const std::int64_t out_h = ceil_div(x.shape.h, sh);
  const std::int64_t out_w = ceil_div(x.shape.w, sw);
  const std::int64_t pt = std::max<std::int64_t>((out_h - 1) * sh + kh - x.shape.h, 0) / 2;
  const std::int64_t pl = std::max<std::int64_t>((out_w - 1) * sw + kw - x.shape.w, 0) / 2;

  Grid<S> out(x.shape.n, out_h, out_w, co_n);
  for (std::int64_t n = 0; n < x.shape.n; ++n)
    for (std::int64_t oh = 0; oh < out_h; ++oh)
      for (std::int64_t ow = 0; ow < out_w; ++ow)
        for (std::int64_t co = 0; co < co_n; ++co) {
          S acc = b.v[static_cast<std::size_t>(co)];
          for (std::int64_t dh = 0; dh < kh; ++dh)
            for (std::int64_t dw = 0; dw < kw; ++dw)
              for (std::int64_t ci = 0; ci < ci_n; ++ci) {
                const std::int64_t ih = oh * sh - pt + dh;
                const std::int64_t iw = ow * sw - pl + dw;
                if (ih < 0 || ih >= x.shape.h || iw < 0 || iw >= x.shape.w) continue;
                acc += x.at(n, ih, iw, ci) * w.at(dh, dw, ci, co);
              }
          out.at(n, oh, ow, co) = acc;
        }
  return out;
}

template <class S>
Grid<S> maxpool(const Grid<S>& x, std::int64_t ph, std::int64_t pw,
                std::int64_t sh, std::int64_t sw, bool same = false) {
  const std::int64_t out_h = same ? ceil_div(x.shape.h, sh) : (x.shape.h - ph) / sh + 1;
  const std::int64_t out_w = same ? ceil_div(x.shape.w, sw) : (x.shape.w - pw) / sw + 1;
  const std::int64_t pt = same ? std::max<std::int64_t>((out_h - 1) * sh + ph - x.shape.h, 0) / 2 : 0;
  const std::int64_t pl = same ? std::max<std::int64_t>((out_w - 1) * sw + pw - x.shape.w, 0) / 2 : 0;

  Grid<S> out(x.shape.n, out_h, out_w, x.shape.c);
  for (std::int64_t n = 0; n < x.shape.n; ++n)
    for (std::int64_t oh = 0; oh < out_h; ++oh)
      for (std::int64_t ow = 0; ow < out_w; ++ow)
        for (std::int64_t c = 0; c < x.shape.c; ++c) {
          S best = -std::numeric_limits<S>::infinity();
          for (std::int64_t dh = 0; dh < ph; ++dh)
            for (std::int64_t dw = 0; dw < pw; ++dw) {
              const std::int64_t ih = oh * sh - pt + dh;
              const std::int64_t iw = ow * sw - pl + dw;
              if (ih < 0 || ih >= x.shape.h || iw < 0 || iw >= x.shape.w) continue;
              best = std::max(best, x.at(n, ih, iw, c));
            }
          out.at(n, oh, ow, c) = best;
        }
  return out;
}

template <class S>
Grid<S> avgpool(const Grid<S>& x, std::int64_t ph, std::int64_t pw,
                std::int64_t sh, std::int64_t sw) {
  const std::int64_t out_h = (x.shape.h - ph) / sh + 1;
  const std::int64_t out_w = (x.shape.w - pw) / sw + 1;
  const S inv = S(1) / S(ph * pw);
  Grid<S> out(x.shape.n, out_h, out_w, x.shape.c);
  for (std::int64_t n = 0; n < x.shape.n; ++n)
    for (std::int64_t oh = 0; oh < out_h; ++oh)
      for (std::int64_t ow = 0; ow < out_w; ++ow)
        for (std::int64_t c = 0; c < x.shape.c; ++c) {
          S acc = S(0);
          for (std::int64_t dh = 0; dh < ph; ++dh)
            for (std::int64_t dw = 0; dw < pw; ++dw)
              acc += x.at(n, oh * sh + dh, ow * sw + dw, c);
          out.at(n, oh, ow, c) = acc * inv;
        }
  return out;
}

template <class S>
Grid<S> global_avg_pool(const Grid<S>& x) {
  Grid<S> out(x.shape.n, 1, 1, x.shape.c);
  const S inv = S(1) / S(x.shape.h * x.shape.w);
  for (std::int64_t n = 0; n < x.shape.n; ++n)
    for (std::int64_t c = 0; c < x.shape.c; ++c) {
      S acc = S(0);
      for (std::int64_t h = 0; h < x.shape.h; ++h)
        for (std::int64_t w = 0; w < x.shape.w; ++w) acc += x.at(n, h, w, c);
      out.at(n, 0, 0, c) = acc * inv;
    }
  return out;
}

template <class S>
Grid<S> relu(const Grid<S>& x) {
  Grid<S> out(x.shape);
  for (std::size_t i = 0; i < x.v.size(); ++i) out.v[i] = x.v[i] > S(0) ? x.v[i] : S(0);
  return out;
}

template <class S>
Grid<S> concat_channels(const std::vector<Grid<S>>& xs) {
  std::int64_t c_sum = 0;
  for (const auto& x : xs) c_sum += x.shape.c;
  Grid<S> out(xs[0].shape.n, xs[0].shape.h, xs[0].shape.w, c_sum);
  for (std::int64_t n = 0; n < out.shape.n; ++n)
    for (std::int64_t h = 0; h < out.shape.h; ++h)
      for (std::int64_t w = 0; w < out.shape.w; ++w) {
        std::int64_t co = 0;
        for (const auto& x : xs)
          for (std::int64_t c = 0; c < x.shape.c; ++c) out.at(n, h, w, co++) = x.at(n, h, w, c);
      }
  return out;
}

// Batch normalization in training mode: biased batch variance over (n, h, w).
template <class S>
Grid<S> batchnorm_train(const Grid<S>& x, const std::vector<S>& gamma,
                        const std::vector<S>& beta, S eps) {
  const std::int64_t C = x.shape.c;
  const std::int64_t m = x.shape.n * x.shape.h * x.shape.w;
  std::vector<S> mean(static_cast<std::size_t>(C), S(0));
  std::vector<S> var(static_cast<std::size_t>(C), S(0));
  for (std::int64_t n = 0; n < x.shape.n; ++n)
    for (std::int64_t h = 0; h < x.shape.h; ++h)
      for (std::int64_t w = 0; w < x.shape.w; ++w)
        for (std::int64_t c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] += x.at(n, h, w, c);
  for (std::int64_t c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] /= S(m);
  for (std::int64_t n = 0; n < x.shape.n; ++n)
    for (std::int64_t h = 0; h < x.shape.h; ++h)
      for (std::int64_t w = 0; w < x.shape.w; ++w)
        for (std::int64_t c = 0; c < C; ++c) {
          const S d = x.at(n, h, w, c) - mean[static_cast<std::size_t>(c)];
          var[static_cast<std::size_t>(c)] += d * d;
        }
  for (std::int64_t c = 0; c < C; ++c) var[static_cast<std::size_t>(c)] /= S(m);

  Grid<S> out(x.shape);
  for (std::int64_t n = 0; n < x.shape.n; ++n)
    for (std::int64_t h = 0; h < x.shape.h; ++h)
      for (std::int64_t w = 0; w < x.shape.w; ++w)
        for (std::int64_t c = 0; c < C; ++c) {
          const std::size_t cc = static_cast<std::size_t>(c);
          const S xhat = (x.at(n, h, w, c) - mean[cc]) / std::sqrt(var[cc] + eps);
          out.at(n, h, w, c) = gamma[cc] * xhat + beta[cc];
        }
  return out;
}

}  // namespace bbnn::ref
