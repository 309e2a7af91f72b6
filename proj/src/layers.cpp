#include "bbnn/layers.hpp"

#include <cmath>
#include <string>

namespace bbnn {

BatchNorm::BatchNorm(std::int64_t channels)
    : gamma(Shape4{1, 1, 1, channels}, 1.0f),
      beta(Shape4{1, 1, 1, channels}, 0.0f),
      running_mean(1, 1, 1, channels, 0.0f),
      running_var(1, 1, 1, channels, 1.0f) {
  if (channels < 1) throw ShapeError("batchnorm needs at least one channel");
}

void BatchNorm::check_channels(const Tensor& x) const {
  if (x.c() != channels()) {
    throw ShapeError("batchnorm: input " + x.shape().str() + " has " +
                     std::to_string(x.c()) + " channels, layer expects " +
                     std::to_string(channels()));
  }
}

Tensor BatchNorm::forward_train(const Tensor& x, Cache& cache) {
  check_channels(x);
  const std::int64_t C = channels();
  const std::int64_t m = x.n() * x.h() * x.w();
  if (m < 2) {
    throw ShapeError("batchnorm training needs at least 2 cells per channel, input " +
                     x.shape().str());
  }

  // channel statistics in 64-bit; m can reach ~160k cells
  std::vector<double> mean(static_cast<std::size_t>(C), 0.0);
  std::vector<double> var(static_cast<std::size_t>(C), 0.0);
  const float* xd = x.data();
  for (std::int64_t cell = 0; cell < m; ++cell) {
    const float* xr = xd + cell * C;
    for (std::int64_t c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] += xr[c];
  }
  for (std::int64_t c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] /= static_cast<double>(m);
  for (std::int64_t cell = 0; cell < m; ++cell) {
    const float* xr = xd + cell * C;
    for (std::int64_t c = 0; c < C; ++c) {
      const double d = xr[c] - mean[static_cast<std::size_t>(c)];
      var[static_cast<std::size_t>(c)] += d * d;
    }
  }
  for (std::int64_t c = 0; c < C; ++c) var[static_cast<std::size_t>(c)] /= static_cast<double>(m);

  cache.inv_std.resize(static_cast<std::size_t>(C));
  std::vector<float> mean_f(static_cast<std::size_t>(C));
  for (std::int64_t c = 0; c < C; ++c) {
    const std::size_t cc = static_cast<std::size_t>(c);
    cache.inv_std[cc] = static_cast<float>(1.0 / std::sqrt(var[cc] + kEps));
    mean_f[cc] = static_cast<float>(mean[cc]);
  }

  cache.xhat = Tensor(x.shape());
  Tensor out(x.shape());
  float* hd = cache.xhat.data();
  float* od = out.data();
  const float* gd = gamma.v.data();
  const float* bd = beta.v.data();
#pragma omp parallel for
  for (std::int64_t cell = 0; cell < m; ++cell) {
    const float* xr = xd + cell * C;
    float* hr = hd + cell * C;
    float* orow = od + cell * C;
    for (std::int64_t c = 0; c < C; ++c) {
      const std::size_t cc = static_cast<std::size_t>(c);
      hr[c] = (xr[c] - mean_f[cc]) * cache.inv_std[cc];
      orow[c] = gd[c] * hr[c] + bd[c];
    }
  }

  for (std::int64_t c = 0; c < C; ++c) {
    const std::size_t cc = static_cast<std::size_t>(c);
    running_mean[c] = kMomentum * running_mean[c] +
                      (1.0f - kMomentum) * static_cast<float>(mean[cc]);
    running_var[c] = kMomentum * running_var[c] +
                     (1.0f - kMomentum) * static_cast<float>(var[cc]);
  }
  return out;
}

Tensor BatchNorm::forward_infer(const Tensor& x) const {
  check_channels(x);
  const std::int64_t C = channels();
  // fixed per-channel affine map from the running statistics
  std::vector<float> scale(static_cast<std::size_t>(C));
  std::vector<float> shift(static_cast<std::size_t>(C));
  for (std::int64_t c = 0; c < C; ++c) {
    const std::size_t cc = static_cast<std::size_t>(c);
    scale[cc] = gamma.v[c] / std::sqrt(running_var[c] + kEps);
    shift[cc] = beta.v[c] - scale[cc] * running_mean[c];
  }
  Tensor out(x.shape());
  const float* xd = x.data();
  float* od = out.data();
  const std::int64_t cells = x.size() / C;
#pragma omp parallel for
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    const float* xr = xd + cell * C;
    float* orow = od + cell * C;
    for (std::int64_t c = 0; c < C; ++c) {
      orow[c] = scale[static_cast<std::size_t>(c)] * xr[c] +
                shift[static_cast<std::size_t>(c)];
    }
  }
  return out;
}

Tensor BatchNorm::backward(const Cache& cache, const Tensor& grad_out) {
  require_same_shape("batchnorm_backward", cache.xhat.shape(), grad_out.shape());
  const std::int64_t C = channels();
  const std::int64_t m = grad_out.size() / C;

  std::vector<double> sum_g(static_cast<std::size_t>(C), 0.0);
  std::vector<double> sum_gx(static_cast<std::size_t>(C), 0.0);
  const float* gd = grad_out.data();
  const float* hd = cache.xhat.data();
  for (std::int64_t cell = 0; cell < m; ++cell) {
    const float* gr = gd + cell * C;
    const float* hr = hd + cell * C;
    for (std::int64_t c = 0; c < C; ++c) {
      sum_g[static_cast<std::size_t>(c)] += gr[c];
      sum_gx[static_cast<std::size_t>(c)] += static_cast<double>(gr[c]) * hr[c];
    }
  }
  for (std::int64_t c = 0; c < C; ++c) {
    beta.g[c] += static_cast<float>(sum_g[static_cast<std::size_t>(c)]);
    gamma.g[c] += static_cast<float>(sum_gx[static_cast<std::size_t>(c)]);
  }

  // dx = gamma*inv_std/m * (m*g - sum_g - xhat*sum_gx), batch-stat form
  std::vector<float> k0(static_cast<std::size_t>(C));
  std::vector<float> kg(static_cast<std::size_t>(C));
  std::vector<float> kx(static_cast<std::size_t>(C));
  for (std::int64_t c = 0; c < C; ++c) {
    const std::size_t cc = static_cast<std::size_t>(c);
    const float s = gamma.v[c] * cache.inv_std[cc] / static_cast<float>(m);
    kg[cc] = s * static_cast<float>(m);
    k0[cc] = s * static_cast<float>(sum_g[cc]);
    kx[cc] = s * static_cast<float>(sum_gx[cc]);
  }
  Tensor gx(cache.xhat.shape());
  float* gxd = gx.data();
#pragma omp parallel for
  for (std::int64_t cell = 0; cell < m; ++cell) {
    const float* gr = gd + cell * C;
    const float* hr = hd + cell * C;
    float* gxr = gxd + cell * C;
    for (std::int64_t c = 0; c < C; ++c) {
      const std::size_t cc = static_cast<std::size_t>(c);
      gxr[c] = kg[cc] * gr[c] - k0[cc] - hr[c] * kx[cc];
    }
  }
  return gx;
}

void BatchNorm::register_tensors(const std::string& prefix, TensorRegistry& reg) {
  reg.add_param(prefix + ".gamma", &gamma.v, &gamma.g);
  reg.add_param(prefix + ".beta", &beta.v, &beta.g);
  reg.add_state(prefix + ".running_mean", &running_mean);
  reg.add_state(prefix + ".running_var", &running_var);
}

BnConvUnit::BnConvUnit(std::int64_t kh, std::int64_t kw, std::int64_t c_in,
                       std::int64_t c_out, std::int64_t sh, std::int64_t sw)
    : bn(c_in), conv(kh, kw, c_in, c_out, sh, sw),
      conv_gw(conv.w.shape()), conv_gb(conv.b.shape()) {}

Tensor BnConvUnit::forward_train(const Tensor& x, Cache& cache) {
  cache.bn_out = bn.forward_train(x, cache.bn);
  cache.act = relu(cache.bn_out);
  return conv2d(cache.act, conv);
}

Tensor BnConvUnit::forward_infer(const Tensor& x) const {
  return conv2d(relu(bn.forward_infer(x)), conv);
}

Tensor BnConvUnit::backward(const Cache& cache, const Tensor& grad_out) {
  ConvGrads cg = conv2d_backward(cache.act, conv, grad_out);
  add_inplace(conv_gw, cg.gw);
  add_inplace(conv_gb, cg.gb);
  Tensor g_bn = relu_backward(cache.bn_out, cg.gx);
  return bn.backward(cache.bn, g_bn);
}

void BnConvUnit::init_params(Rng& rng) { conv.init_he_uniform(rng); }

void BnConvUnit::register_tensors(const std::string& prefix, TensorRegistry& reg) {
  bn.register_tensors(prefix + ".bn", reg);
  reg.add_param(prefix + ".conv.w", &conv.w, &conv_gw);
  reg.add_param(prefix + ".conv.b", &conv.b, &conv_gb);
}

DenseHead::DenseHead(std::int64_t c_in, std::int64_t n_classes)
    : w(Shape4{1, 1, c_in, n_classes}), b(Shape4{1, 1, 1, n_classes}) {
  if (c_in < 1 || n_classes < 2) {
    throw ShapeError("dense head needs c_in >= 1 and n_classes >= 2");
  }
}

Tensor DenseHead::forward(const Tensor& x, Cache* cache) const {
  if (x.h() != 1 || x.w() != 1 || x.c() != c_in()) {
    throw ShapeError("dense head: input " + x.shape().str() +
                     " must be (N,1,1," + std::to_string(c_in()) + ")");
  }
  if (cache) cache->x = x;
  const std::int64_t C = c_in(), K = n_classes();
  Tensor out(x.n(), 1, 1, K);
  const float* xd = x.data();
  const float* wd = w.v.data();
  const float* bd = b.v.data();
  float* od = out.data();
#pragma omp parallel for
  for (std::int64_t n = 0; n < x.n(); ++n) {
    float* orow = od + n * K;
    for (std::int64_t k = 0; k < K; ++k) orow[k] = bd[k];
    const float* xr = xd + n * C;
    for (std::int64_t c = 0; c < C; ++c) {
      const float xv = xr[c];
      const float* wr = wd + c * K;
      for (std::int64_t k = 0; k < K; ++k) orow[k] += xv * wr[k];
    }
  }
  return out;
}

Tensor DenseHead::backward(const Cache& cache, const Tensor& grad_out) {
  const Tensor& x = cache.x;
  require_same_shape("dense_backward", Shape4{x.n(), 1, 1, n_classes()},
                     grad_out.shape());
  const std::int64_t C = c_in(), K = n_classes();
  const float* xd = x.data();
  const float* gd = grad_out.data();
  const float* wd = w.v.data();
  for (std::int64_t n = 0; n < x.n(); ++n) {
    const float* xr = xd + n * C;
    const float* gr = gd + n * K;
    for (std::int64_t c = 0; c < C; ++c) {
      float* gwr = w.g.data() + c * K;
      const float xv = xr[c];
      for (std::int64_t k = 0; k < K; ++k) gwr[k] += xv * gr[k];
    }
    for (std::int64_t k = 0; k < K; ++k) b.g[k] += gr[k];
  }
  Tensor gx(x.shape());
  float* gxd = gx.data();
#pragma omp parallel for
  for (std::int64_t n = 0; n < x.n(); ++n) {
    const float* gr = gd + n * K;
    float* gxr = gxd + n * C;
    for (std::int64_t c = 0; c < C; ++c) {
      const float* wr = wd + c * K;
      float acc = 0.0f;
      for (std::int64_t k = 0; k < K; ++k) acc += wr[k] * gr[k];
      gxr[c] = acc;
    }
  }
  return gx;
}

void DenseHead::init_params(Rng& rng) {
  // fan-in-scaled uniform, zero bias
  const float limit = std::sqrt(6.0f / static_cast<float>(c_in()));
  for (std::int64_t i = 0; i < w.v.size(); ++i) w.v[i] = rng.uniform(-limit, limit);
  b.v.fill(0.0f);
}

void DenseHead::register_tensors(const std::string& prefix, TensorRegistry& reg) {
  reg.add_param(prefix + ".w", &w.v, &w.g);
  reg.add_param(prefix + ".b", &b.v, &b.g);
}

Tensor softmax_rows(const Tensor& logits) {
  const std::int64_t C = logits.c();
  if (C < 1) throw ShapeError("softmax: no channels in " + logits.shape().str());
  Tensor out(logits.shape());
  const float* ld = logits.data();
  float* od = out.data();
  const std::int64_t rows = logits.size() / C;
#pragma omp parallel for
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* lr = ld + r * C;
    float* orow = od + r * C;
    float mx = lr[0];
    for (std::int64_t c = 1; c < C; ++c) mx = std::max(mx, lr[c]);
    float sum = 0.0f;
    for (std::int64_t c = 0; c < C; ++c) {
      orow[c] = std::exp(lr[c] - mx);
      sum += orow[c];
    }
    const float inv = 1.0f / sum;
    for (std::int64_t c = 0; c < C; ++c) orow[c] *= inv;
  }
  return out;
}

Tensor dense_softmax_forward(const Tensor& x, const DenseHead& head) {
  return softmax_rows(head.forward(x));
}

}  // namespace bbnn
