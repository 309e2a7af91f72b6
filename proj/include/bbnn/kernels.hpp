#pragma once

#include <vector>

#include "bbnn/rng.hpp"
#include "bbnn/tensor.hpp"

namespace bbnn {

// 2-D cross-correlation kernel with SAME zero padding. Weights are stored
// (kh, kw, c_in, c_out); an odd kernel extent is required so the padding is
// well defined (the extra zero of an even total goes to the bottom/right).
struct ConvKernel {
  Tensor w;  // (kh, kw, c_in, c_out)
  Tensor b;  // (1, 1, 1, c_out)
  std::int64_t sh = 1;
  std::int64_t sw = 1;

  ConvKernel() = default;
  ConvKernel(std::int64_t kh, std::int64_t kw, std::int64_t c_in,
             std::int64_t c_out, std::int64_t sh = 1, std::int64_t sw = 1);

  std::int64_t kh() const { return w.n(); }
  std::int64_t kw() const { return w.h(); }
  std::int64_t c_in() const { return w.w(); }
  std::int64_t c_out() const { return w.c(); }
  std::int64_t param_count() const { return w.size() + b.size(); }

  // Fan-in scaled uniform init for the weights, zero bias.
  void init_he_uniform(Rng& rng);
};

struct ConvGrads {
  Tensor gx;
  Tensor gw;
  Tensor gb;
};

Shape4 conv2d_output_shape(const Shape4& x, const ConvKernel& k);
Tensor conv2d(const Tensor& x, const ConvKernel& k);
ConvGrads conv2d_backward(const Tensor& x, const ConvKernel& k,
                          const Tensor& grad_out);

enum class PoolPad { valid, same };

Shape4 pool_output_shape(const Shape4& x, std::int64_t ph, std::int64_t pw,
                         std::int64_t sh, std::int64_t sw, PoolPad pad);

// Window max; SAME mode considers only in-bounds cells. Ties break to the
// first maximal cell in row-major window order.
Tensor maxpool2d(const Tensor& x, std::int64_t ph, std::int64_t pw,
                 std::int64_t sh, std::int64_t sw,
                 PoolPad pad = PoolPad::valid);
Tensor maxpool2d_backward(const Tensor& x, std::int64_t ph, std::int64_t pw,
                          std::int64_t sh, std::int64_t sw, PoolPad pad,
                          const Tensor& grad_out);

// Unpadded window mean; backward spreads the gradient uniformly.
Tensor avgpool2d(const Tensor& x, std::int64_t ph, std::int64_t pw,
                 std::int64_t sh, std::int64_t sw);
Tensor avgpool2d_backward(const Shape4& x_shape, std::int64_t ph,
                          std::int64_t pw, std::int64_t sh, std::int64_t sw,
                          const Tensor& grad_out);

Tensor concat_channels(const std::vector<const Tensor*>& xs);
Tensor concat_channels(const std::vector<Tensor>& xs);
Tensor slice_channels(const Tensor& x, std::int64_t from, std::int64_t count);
// Inverse of concat_channels for the backward pass.
std::vector<Tensor> split_channels(const Tensor& x,
                                   const std::vector<std::int64_t>& widths);

Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Shape4& x_shape, const Tensor& grad_out);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

}  // namespace bbnn
