#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bbnn/kernels.hpp"
#include "bbnn/rng.hpp"
#include "bbnn/tensor.hpp"

namespace bbnn {

// A learnable tensor and its gradient accumulator.
struct Param {
  Tensor v;
  Tensor g;
  explicit Param(const Shape4& s, float fill = 0.0f) : v(s, fill), g(s) {}
};

struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

// Collects every tensor a model owns: `params` in optimizer order (trainable
// only), `state` in checkpoint order (params plus BN running statistics).
struct TensorRegistry {
  std::vector<ParamRef> params;
  std::vector<NamedTensor> state;

  void add_param(const std::string& name, Tensor* value, Tensor* grad) {
    params.push_back({name, value, grad});
    state.push_back({name, value});
  }
  void add_state(const std::string& name, Tensor* tensor) {
    state.push_back({name, tensor});
  }
};

// Per-channel batch normalization over (N,H,W) with running statistics for
// inference. Training mode needs at least 2 cells per channel.
class BatchNorm {
 public:
  static constexpr float kEps = 1e-5f;
  static constexpr float kMomentum = 0.99f;

  explicit BatchNorm(std::int64_t channels);

  struct Cache {
    Tensor xhat;
    std::vector<float> inv_std;  // per channel
  };

  // Batch statistics; updates running averages and fills the backward cache.
  Tensor forward_train(const Tensor& x, Cache& cache);
  // Running statistics only: a fixed per-channel affine map, no mutation.
  Tensor forward_infer(const Tensor& x) const;
  // Accumulates into gamma.g / beta.g, returns grad w.r.t. x.
  Tensor backward(const Cache& cache, const Tensor& grad_out);

  std::int64_t channels() const { return gamma.v.c(); }
  void register_tensors(const std::string& prefix, TensorRegistry& reg);

  Param gamma, beta;               // (1,1,1,C)
  Tensor running_mean, running_var;  // (1,1,1,C)

 private:
  void check_channels(const Tensor& x) const;
};

// Pre-activation unit: BN -> ReLU -> SAME convolution.
class BnConvUnit {
 public:
  BnConvUnit(std::int64_t kh, std::int64_t kw, std::int64_t c_in,
             std::int64_t c_out, std::int64_t sh = 1, std::int64_t sw = 1);

  struct Cache {
    BatchNorm::Cache bn;
    Tensor bn_out;  // pre-ReLU
    Tensor act;     // post-ReLU, the convolution input
  };

  Tensor forward_train(const Tensor& x, Cache& cache);
  Tensor forward_infer(const Tensor& x) const;
  Tensor backward(const Cache& cache, const Tensor& grad_out);

  void init_params(Rng& rng);
  std::int64_t conv_param_count() const { return conv.param_count(); }
  std::int64_t c_in() const { return conv.c_in(); }
  std::int64_t c_out() const { return conv.c_out(); }
  void register_tensors(const std::string& prefix, TensorRegistry& reg);

  BatchNorm bn;
  ConvKernel conv;
  Tensor conv_gw, conv_gb;
};

// Fully connected classifier head over globally pooled features.
class DenseHead {
 public:
  DenseHead(std::int64_t c_in, std::int64_t n_classes);

  struct Cache {
    Tensor x;
  };

  // x must be (N,1,1,c_in); returns logits (N,1,1,n_classes).
  Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
  Tensor backward(const Cache& cache, const Tensor& grad_out);

  void init_params(Rng& rng);
  std::int64_t c_in() const { return w.v.w(); }
  std::int64_t n_classes() const { return w.v.c(); }
  std::int64_t param_count() const { return w.v.size() + b.v.size(); }
  void register_tensors(const std::string& prefix, TensorRegistry& reg);

  Param w;  // (1,1,c_in,n_classes)
  Param b;  // (1,1,1,n_classes)
};

// Row-wise stable softmax over the channel axis; rows are (n,h,w) cells.
Tensor softmax_rows(const Tensor& logits);

// Convenience composition: pooled features -> probabilities.
Tensor dense_softmax_forward(const Tensor& x, const DenseHead& head);

}  // namespace bbnn
