#include "bbnn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace bbnn {
namespace {

// SAME padding before the first cell; the remainder goes to the bottom/right.
std::int64_t same_pad_before(std::int64_t in, std::int64_t out, std::int64_t k,
                             std::int64_t stride) {
  const std::int64_t total = std::max<std::int64_t>((out - 1) * stride + k - in, 0);
  return total / 2;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace

ConvKernel::ConvKernel(std::int64_t kh, std::int64_t kw, std::int64_t c_in,
                       std::int64_t c_out, std::int64_t sh, std::int64_t sw)
    : w(kh, kw, c_in, c_out), b(1, 1, 1, c_out), sh(sh), sw(sw) {
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ShapeError("conv kernel dims must be odd for SAME padding, got " +
                     std::to_string(kh) + "x" + std::to_string(kw));
  }
  if (sh < 1 || sw < 1) throw ShapeError("conv stride must be positive");
}

void ConvKernel::init_he_uniform(Rng& rng) {
  const float fan_in = static_cast<float>(kh() * kw() * c_in());
  const float limit = std::sqrt(6.0f / fan_in);
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-limit, limit);
  b.fill(0.0f);
}

Shape4 conv2d_output_shape(const Shape4& x, const ConvKernel& k) {
  if (x.numel() == 0) {
    throw ShapeError("conv2d: zero-sized input " + x.str());
  }
  if (x.c != k.c_in()) {
    throw ShapeError("conv2d: input channels " + x.str() +
                     " do not match kernel " + k.w.shape().str());
  }
  return Shape4{x.n, ceil_div(x.h, k.sh), ceil_div(x.w, k.sw), k.c_out()};
}

Tensor conv2d(const Tensor& x, const ConvKernel& k) {
  const Shape4 os = conv2d_output_shape(x.shape(), k);
  Tensor out(os);

  const std::int64_t kh = k.kh(), kw = k.kw(), ci_n = k.c_in(), co_n = k.c_out();
  const std::int64_t pt = same_pad_before(x.h(), os.h, kh, k.sh);
  const std::int64_t pl = same_pad_before(x.w(), os.w, kw, k.sw);

  const float* xd = x.data();
  const float* wd = k.w.data();
  const float* bd = k.b.data();
  float* od = out.data();

#pragma omp parallel for
  for (std::int64_t row = 0; row < os.n * os.h; ++row) {
    const std::int64_t n = row / os.h;
    const std::int64_t oh = row % os.h;
    std::vector<float> acc(static_cast<std::size_t>(co_n));
    for (std::int64_t ow = 0; ow < os.w; ++ow) {
      for (std::int64_t co = 0; co < co_n; ++co) acc[co] = bd[co];
      for (std::int64_t dh = 0; dh < kh; ++dh) {
        const std::int64_t ih = oh * k.sh - pt + dh;
        if (ih < 0 || ih >= x.h()) continue;
        for (std::int64_t dw = 0; dw < kw; ++dw) {
          const std::int64_t iw = ow * k.sw - pl + dw;
          if (iw < 0 || iw >= x.w()) continue;
          const float* xr = xd + ((n * x.h() + ih) * x.w() + iw) * ci_n;
          const float* wr = wd + (dh * kw + dw) * ci_n * co_n;
          for (std::int64_t ci = 0; ci < ci_n; ++ci) {
            const float xv = xr[ci];
            const float* wc = wr + ci * co_n;
            for (std::int64_t co = 0; co < co_n; ++co) acc[co] += xv * wc[co];
          }
        }
      }
      float* orow = od + ((n * os.h + oh) * os.w + ow) * co_n;
      for (std::int64_t co = 0; co < co_n; ++co) orow[co] = acc[co];
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& x, const ConvKernel& k,
                          const Tensor& grad_out) {
  const Shape4 os = conv2d_output_shape(x.shape(), k);
  require_same_shape("conv2d_backward", os, grad_out.shape());

  const std::int64_t kh = k.kh(), kw = k.kw(), ci_n = k.c_in(), co_n = k.c_out();
  const std::int64_t pt = same_pad_before(x.h(), os.h, kh, k.sh);
  const std::int64_t pl = same_pad_before(x.w(), os.w, kw, k.sw);

  ConvGrads g{Tensor(x.shape()), Tensor(k.w.shape()), Tensor(k.b.shape())};
  const float* xd = x.data();
  const float* wd = k.w.data();
  const float* gd = grad_out.data();

  {  // bias: plain column sums
    float* gb = g.gb.data();
    for (std::int64_t cell = 0; cell < os.n * os.h * os.w; ++cell) {
      const float* gr = gd + cell * co_n;
      for (std::int64_t co = 0; co < co_n; ++co) gb[co] += gr[co];
    }
  }

  // weights: one (dh,dw) tap per task, serial sums inside
  float* gw = g.gw.data();
#pragma omp parallel for collapse(2)
  for (std::int64_t dh = 0; dh < kh; ++dh) {
    for (std::int64_t dw = 0; dw < kw; ++dw) {
      float* gwt = gw + (dh * kw + dw) * ci_n * co_n;
      for (std::int64_t n = 0; n < os.n; ++n) {
        for (std::int64_t oh = 0; oh < os.h; ++oh) {
          const std::int64_t ih = oh * k.sh - pt + dh;
          if (ih < 0 || ih >= x.h()) continue;
          for (std::int64_t ow = 0; ow < os.w; ++ow) {
            const std::int64_t iw = ow * k.sw - pl + dw;
            if (iw < 0 || iw >= x.w()) continue;
            const float* xr = xd + ((n * x.h() + ih) * x.w() + iw) * ci_n;
            const float* gr = gd + ((n * os.h + oh) * os.w + ow) * co_n;
            for (std::int64_t ci = 0; ci < ci_n; ++ci) {
              float* gwr = gwt + ci * co_n;
              const float xv = xr[ci];
              for (std::int64_t co = 0; co < co_n; ++co) gwr[co] += xv * gr[co];
            }
          }
        }
      }
    }
  }

  // input: gather form, each input cell sums its own contributions
  float* gx = g.gx.data();
#pragma omp parallel for
  for (std::int64_t row = 0; row < x.n() * x.h(); ++row) {
    const std::int64_t n = row / x.h();
    const std::int64_t ih = row % x.h();
    for (std::int64_t iw = 0; iw < x.w(); ++iw) {
      float* gxr = gx + ((n * x.h() + ih) * x.w() + iw) * ci_n;
      for (std::int64_t dh = 0; dh < kh; ++dh) {
        const std::int64_t oh_num = ih + pt - dh;
        if (oh_num < 0 || oh_num % k.sh != 0) continue;
        const std::int64_t oh = oh_num / k.sh;
        if (oh >= os.h) continue;
        for (std::int64_t dw = 0; dw < kw; ++dw) {
          const std::int64_t ow_num = iw + pl - dw;
          if (ow_num < 0 || ow_num % k.sw != 0) continue;
          const std::int64_t ow = ow_num / k.sw;
          if (ow >= os.w) continue;
          const float* gr = gd + ((n * os.h + oh) * os.w + ow) * co_n;
          const float* wr = wd + (dh * kw + dw) * ci_n * co_n;
          for (std::int64_t ci = 0; ci < ci_n; ++ci) {
            const float* wc = wr + ci * co_n;
            float acc = 0.0f;
            for (std::int64_t co = 0; co < co_n; ++co) acc += wc[co] * gr[co];
            gxr[ci] += acc;
          }
        }
      }
    }
  }
  return g;
}

Shape4 pool_output_shape(const Shape4& x, std::int64_t ph, std::int64_t pw,
                         std::int64_t sh, std::int64_t sw, PoolPad pad) {
  if (x.numel() == 0) throw ShapeError("pool: zero-sized input " + x.str());
  if (sh < 1 || sw < 1) throw ShapeError("pool: stride must be positive");
  if (pad == PoolPad::same) {
    return Shape4{x.n, ceil_div(x.h, sh), ceil_div(x.w, sw), x.c};
  }
  if (ph > x.h || pw > x.w) {
    throw ShapeError("pool: window " + std::to_string(ph) + "x" +
                     std::to_string(pw) + " larger than input " + x.str());
  }
  return Shape4{x.n, (x.h - ph) / sh + 1, (x.w - pw) / sw + 1, x.c};
}

Tensor maxpool2d(const Tensor& x, std::int64_t ph, std::int64_t pw,
                 std::int64_t sh, std::int64_t sw, PoolPad pad) {
  const Shape4 os = pool_output_shape(x.shape(), ph, pw, sh, sw, pad);
  const std::int64_t pt = pad == PoolPad::same ? same_pad_before(x.h(), os.h, ph, sh) : 0;
  const std::int64_t pl = pad == PoolPad::same ? same_pad_before(x.w(), os.w, pw, sw) : 0;
  Tensor out(os);
  const std::int64_t C = x.c();
  const float* xd = x.data();
  float* od = out.data();

#pragma omp parallel for
  for (std::int64_t row = 0; row < os.n * os.h; ++row) {
    const std::int64_t n = row / os.h;
    const std::int64_t oh = row % os.h;
    for (std::int64_t ow = 0; ow < os.w; ++ow) {
      float* orow = od + ((n * os.h + oh) * os.w + ow) * C;
      for (std::int64_t c = 0; c < C; ++c) {
        orow[c] = -std::numeric_limits<float>::infinity();
      }
      for (std::int64_t dh = 0; dh < ph; ++dh) {
        const std::int64_t ih = oh * sh - pt + dh;
        if (ih < 0 || ih >= x.h()) continue;
        for (std::int64_t dw = 0; dw < pw; ++dw) {
          const std::int64_t iw = ow * sw - pl + dw;
          if (iw < 0 || iw >= x.w()) continue;
          const float* xr = xd + ((n * x.h() + ih) * x.w() + iw) * C;
          for (std::int64_t c = 0; c < C; ++c) {
            orow[c] = std::max(orow[c], xr[c]);
          }
        }
      }
    }
  }
  return out;
}

Tensor maxpool2d_backward(const Tensor& x, std::int64_t ph, std::int64_t pw,
                          std::int64_t sh, std::int64_t sw, PoolPad pad,
                          const Tensor& grad_out) {
  const Shape4 os = pool_output_shape(x.shape(), ph, pw, sh, sw, pad);
  require_same_shape("maxpool2d_backward", os, grad_out.shape());
  const std::int64_t pt = pad == PoolPad::same ? same_pad_before(x.h(), os.h, ph, sh) : 0;
  const std::int64_t pl = pad == PoolPad::same ? same_pad_before(x.w(), os.w, pw, sw) : 0;
  const std::int64_t C = x.c();
  const float* xd = x.data();
  const float* gd = grad_out.data();

  // Per-window argmax map (first maximal cell in row-major window order),
  // then a gather over input cells. No concurrent writes anywhere.
  std::vector<std::int32_t> argmax(
      static_cast<std::size_t>(os.numel()), -1);
#pragma omp parallel for
  for (std::int64_t row = 0; row < os.n * os.h; ++row) {
    const std::int64_t n = row / os.h;
    const std::int64_t oh = row % os.h;
    for (std::int64_t ow = 0; ow < os.w; ++ow) {
      std::int32_t* arow =
          argmax.data() + ((n * os.h + oh) * os.w + ow) * C;
      std::vector<float> best(static_cast<std::size_t>(C),
                              -std::numeric_limits<float>::infinity());
      for (std::int64_t dh = 0; dh < ph; ++dh) {
        const std::int64_t ih = oh * sh - pt + dh;
        if (ih < 0 || ih >= x.h()) continue;
        for (std::int64_t dw = 0; dw < pw; ++dw) {
          const std::int64_t iw = ow * sw - pl + dw;
          if (iw < 0 || iw >= x.w()) continue;
          const float* xr = xd + ((n * x.h() + ih) * x.w() + iw) * C;
          const std::int32_t spatial = static_cast<std::int32_t>(ih * x.w() + iw);
          for (std::int64_t c = 0; c < C; ++c) {
            if (xr[c] > best[c]) {
              best[c] = xr[c];
              arow[c] = spatial;
            }
          }
        }
      }
    }
  }

  Tensor gx(x.shape());
  float* gxd = gx.data();
#pragma omp parallel for
  for (std::int64_t row = 0; row < x.n() * x.h(); ++row) {
    const std::int64_t n = row / x.h();
    const std::int64_t ih = row % x.h();
    const std::int64_t oh_lo = std::max<std::int64_t>(0, ceil_div(ih + pt - ph + 1, sh));
    const std::int64_t oh_hi = std::min(os.h - 1, (ih + pt) / sh);
    for (std::int64_t iw = 0; iw < x.w(); ++iw) {
      float* gxr = gxd + ((n * x.h() + ih) * x.w() + iw) * C;
      const std::int32_t spatial = static_cast<std::int32_t>(ih * x.w() + iw);
      const std::int64_t ow_lo = std::max<std::int64_t>(0, ceil_div(iw + pl - pw + 1, sw));
      const std::int64_t ow_hi = std::min(os.w - 1, (iw + pl) / sw);
      for (std::int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
        for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow) {
          const std::int64_t base = ((n * os.h + oh) * os.w + ow) * C;
          const std::int32_t* arow = argmax.data() + base;
          const float* grow = gd + base;
          for (std::int64_t c = 0; c < C; ++c) {
            if (arow[c] == spatial) gxr[c] += grow[c];
          }
        }
      }
    }
  }
  return gx;
}

Tensor avgpool2d(const Tensor& x, std::int64_t ph, std::int64_t pw,
                 std::int64_t sh, std::int64_t sw) {
  const Shape4 os = pool_output_shape(x.shape(), ph, pw, sh, sw, PoolPad::valid);
  Tensor out(os);
  const std::int64_t C = x.c();
  const float inv = 1.0f / static_cast<float>(ph * pw);
  const float* xd = x.data();
  float* od = out.data();

#pragma omp parallel for
  for (std::int64_t row = 0; row < os.n * os.h; ++row) {
    const std::int64_t n = row / os.h;
    const std::int64_t oh = row % os.h;
    std::vector<float> acc(static_cast<std::size_t>(C));
    for (std::int64_t ow = 0; ow < os.w; ++ow) {
      std::fill(acc.begin(), acc.end(), 0.0f);
      for (std::int64_t dh = 0; dh < ph; ++dh) {
        const std::int64_t ih = oh * sh + dh;
        for (std::int64_t dw = 0; dw < pw; ++dw) {
          const std::int64_t iw = ow * sw + dw;
          const float* xr = xd + ((n * x.h() + ih) * x.w() + iw) * C;
          for (std::int64_t c = 0; c < C; ++c) acc[c] += xr[c];
        }
      }
      float* orow = od + ((n * os.h + oh) * os.w + ow) * C;
      for (std::int64_t c = 0; c < C; ++c) orow[c] = acc[c] * inv;
    }
  }
  return out;
}

Tensor avgpool2d_backward(const Shape4& x_shape, std::int64_t ph,
                          std::int64_t pw, std::int64_t sh, std::int64_t sw,
                          const Tensor& grad_out) {
  const Shape4 os = pool_output_shape(x_shape, ph, pw, sh, sw, PoolPad::valid);
  require_same_shape("avgpool2d_backward", os, grad_out.shape());
  const std::int64_t C = x_shape.c;
  const float inv = 1.0f / static_cast<float>(ph * pw);
  Tensor gx(x_shape);
  const float* gd = grad_out.data();
  float* gxd = gx.data();

#pragma omp parallel for
  for (std::int64_t row = 0; row < x_shape.n * x_shape.h; ++row) {
    const std::int64_t n = row / x_shape.h;
    const std::int64_t ih = row % x_shape.h;
    const std::int64_t oh_lo = std::max<std::int64_t>(0, ceil_div(ih - ph + 1, sh));
    const std::int64_t oh_hi = std::min(os.h - 1, ih / sh);
    for (std::int64_t iw = 0; iw < x_shape.w; ++iw) {
      const std::int64_t ow_lo = std::max<std::int64_t>(0, ceil_div(iw - pw + 1, sw));
      const std::int64_t ow_hi = std::min(os.w - 1, iw / sw);
      float* gxr = gxd + ((n * x_shape.h + ih) * x_shape.w + iw) * C;
      for (std::int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
        for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow) {
          const float* grow = gd + ((n * os.h + oh) * os.w + ow) * C;
          for (std::int64_t c = 0; c < C; ++c) gxr[c] += grow[c] * inv;
        }
      }
    }
  }
  return gx;
}

Tensor concat_channels(const std::vector<const Tensor*>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: empty input list");
  const Shape4 base = xs[0]->shape();
  std::int64_t c_sum = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Shape4 s = xs[i]->shape();
    if (s.n != base.n || s.h != base.h || s.w != base.w) {
      throw ShapeError("concat_channels: input " + std::to_string(i) +
                       " has shape " + s.str() + ", expected spatial " +
                       base.str());
    }
    c_sum += s.c;
  }
  Tensor out(base.n, base.h, base.w, c_sum);
  float* od = out.data();
  const std::int64_t cells = base.n * base.h * base.w;

#pragma omp parallel for
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    float* orow = od + cell * c_sum;
    for (const Tensor* x : xs) {
      const std::int64_t c = x->c();
      const float* xr = x->data() + cell * c;
      std::copy(xr, xr + c, orow);
      orow += c;
    }
  }
  return out;
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(xs.size());
  for (const Tensor& x : xs) ptrs.push_back(&x);
  return concat_channels(ptrs);
}

Tensor slice_channels(const Tensor& x, std::int64_t from, std::int64_t count) {
  if (from < 0 || count < 0 || from + count > x.c()) {
    throw ShapeError("slice_channels: range [" + std::to_string(from) + "," +
                     std::to_string(from + count) + ") outside " +
                     x.shape().str());
  }
  Tensor out(x.n(), x.h(), x.w(), count);
  const std::int64_t cells = x.n() * x.h() * x.w();
  const float* xd = x.data();
  float* od = out.data();
#pragma omp parallel for
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    const float* xr = xd + cell * x.c() + from;
    std::copy(xr, xr + count, od + cell * count);
  }
  return out;
}

std::vector<Tensor> split_channels(const Tensor& x,
                                   const std::vector<std::int64_t>& widths) {
  std::int64_t total = 0;
  for (std::int64_t w : widths) total += w;
  if (total != x.c()) {
    throw ShapeError("split_channels: widths sum " + std::to_string(total) +
                     " != channels of " + x.shape().str());
  }
  std::vector<Tensor> parts;
  parts.reserve(widths.size());
  std::int64_t from = 0;
  for (std::int64_t w : widths) {
    parts.push_back(slice_channels(x, from, w));
    from += w;
  }
  return parts;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.h() < 1 || x.w() < 1) {
    throw ShapeError("global_avg_pool: empty spatial extent " + x.shape().str());
  }
  Tensor out(x.n(), 1, 1, x.c());
  const std::int64_t C = x.c();
  const float inv = 1.0f / static_cast<float>(x.h() * x.w());
  const float* xd = x.data();
  float* od = out.data();

#pragma omp parallel for
  for (std::int64_t n = 0; n < x.n(); ++n) {
    // row partials keep the 32-bit accumulation error down
    std::vector<float> total(static_cast<std::size_t>(C), 0.0f);
    std::vector<float> rowsum(static_cast<std::size_t>(C));
    for (std::int64_t h = 0; h < x.h(); ++h) {
      std::fill(rowsum.begin(), rowsum.end(), 0.0f);
      for (std::int64_t w = 0; w < x.w(); ++w) {
        const float* xr = xd + ((n * x.h() + h) * x.w() + w) * C;
        for (std::int64_t c = 0; c < C; ++c) rowsum[c] += xr[c];
      }
      for (std::int64_t c = 0; c < C; ++c) total[c] += rowsum[c];
    }
    for (std::int64_t c = 0; c < C; ++c) od[n * C + c] = total[c] * inv;
  }
  return out;
}

Tensor global_avg_pool_backward(const Shape4& x_shape, const Tensor& grad_out) {
  require_same_shape("global_avg_pool_backward",
                     Shape4{x_shape.n, 1, 1, x_shape.c}, grad_out.shape());
  Tensor gx(x_shape);
  const std::int64_t C = x_shape.c;
  const float inv = 1.0f / static_cast<float>(x_shape.h * x_shape.w);
  const float* gd = grad_out.data();
  float* gxd = gx.data();
  const std::int64_t cells = x_shape.n * x_shape.h * x_shape.w;
#pragma omp parallel for
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    const std::int64_t n = cell / (x_shape.h * x_shape.w);
    float* gxr = gxd + cell * C;
    const float* grow = gd + n * C;
    for (std::int64_t c = 0; c < C; ++c) gxr[c] = grow[c] * inv;
  }
  return gx;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  const float* xd = x.data();
  float* od = out.data();
  const std::int64_t sz = x.size();
#pragma omp parallel for
  for (std::int64_t i = 0; i < sz; ++i) od[i] = xd[i] > 0.0f ? xd[i] : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  require_same_shape("relu_backward", x.shape(), grad_out.shape());
  Tensor gx(x.shape());
  const float* xd = x.data();
  const float* gd = grad_out.data();
  float* gxd = gx.data();
  const std::int64_t sz = x.size();
#pragma omp parallel for
  for (std::int64_t i = 0; i < sz; ++i) gxd[i] = xd[i] > 0.0f ? gd[i] : 0.0f;
  return gx;
}

}  // namespace bbnn
