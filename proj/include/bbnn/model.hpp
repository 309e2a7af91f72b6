#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bbnn/layers.hpp"

namespace bbnn {

// 180458 -> "180,458"
std::string format_thousands(std::int64_t v);

struct ModelConfig {
  std::int64_t n_classes = 10;
  std::int64_t input_h = 647;  // time frames
  std::int64_t input_w = 128;  // mel bands
  std::int64_t blocks = 3;     // L
  bool tl_max_pool = false;    // transition pooling: avg by default, max for ablation
};

// Four parallel branches over one input: 1x1 direct, 1x1->3x3, 1x1->5x5,
// and 3x3/1 SAME max-pool -> 1x1. Outputs concatenate to 4*32 = 128 channels
// at unchanged spatial size.
class InceptionBlock {
 public:
  static constexpr std::int64_t kBranch = 32;
  static constexpr std::int64_t kGrowth = 4 * kBranch;

  explicit InceptionBlock(std::int64_t c_in);

  struct Cache {
    Tensor input;
    BnConvUnit::Cache p1x1, reduce3, conv3, reduce5, conv5, pool_proj;
  };

  Tensor forward_train(const Tensor& x, Cache& cache);
  Tensor forward_infer(const Tensor& x) const;
  Tensor backward(const Cache& cache, const Tensor& grad_out);

  void init_params(Rng& rng);
  std::int64_t c_in() const { return p1x1.c_in(); }
  std::int64_t top_param_count() const;     // the three 1x1 convolutions
  std::int64_t bottom_param_count() const;  // 3x3, 5x5, and post-pool 1x1
  void register_tensors(const std::string& prefix, TensorRegistry& reg);

  BnConvUnit p1x1, reduce3, conv3, reduce5, conv5, pool_proj;
};

// Full network: shallow conv+pool (SL), L densely connected Inception blocks
// (BM), transition conv+pool (TL), global average pool + dense head (DL).
class BbnnModel {
 public:
  explicit BbnnModel(const ModelConfig& cfg);

  struct Cache {
    BnConvUnit::Cache sl;
    Tensor sl_conv_out;                        // pre-pool
    std::vector<Tensor> feats;                 // [X_SL, X_1, ..., X_L]
    std::vector<InceptionBlock::Cache> block_caches;
    Tensor tl_in;
    BnConvUnit::Cache tl;
    Tensor tl_conv_out;                        // pre-pool
    Tensor tl_pool_out;
    Tensor gap_out;
    DenseHead::Cache dl;
    Tensor logits;
  };

  void init_params(Rng& rng);

  // Returns probabilities (N,1,1,n_classes). The trace, when given, records
  // the shape after SL pooling and after each block's concatenation plus the
  // TL/DL stages.
  Tensor forward_train(const Tensor& x, Cache& cache);
  Tensor forward_infer(const Tensor& x, std::vector<Shape4>* trace = nullptr) const;

  // grad_logits is d(loss)/d(logits); accumulates every parameter gradient.
  void backward(const Cache& cache, const Tensor& grad_logits);

  void zero_grads();

  // Trainable parameters (optimizer order) and persisted tensors (checkpoint
  // order). Pointers are valid while the model object stays alive and unmoved.
  TensorRegistry collect_tensors();

  // Upstream feature maps broadcast into block l (1-based): [X_SL, ..., X_{l-1}].
  std::vector<const Tensor*> dense_inputs(const Cache& cache, std::int64_t l) const;

  struct TableRow {
    std::string type;     // SL / BM / TL / DL
    std::string layer;    // row description
    std::string out_size; // formatted output size or "-"
    std::string filters;  // filter size / stride (number)
    std::int64_t params;  // conv+dense parameters, 0 where none
  };
  std::vector<TableRow> param_table() const;
  // Conv+dense parameters only ("table" mode reproduces the architecture
  // table); full mode adds BN gamma/beta.
  std::int64_t count_params(bool full = false) const;

  void save(const std::string& path);
  // n_classes and L come from the file; input dims and TL pooling from `base`.
  static BbnnModel load(const std::string& path, ModelConfig base = {});

  const ModelConfig& config() const { return cfg_; }

 private:
  void check_input(const Tensor& x) const;
  Tensor tl_pool(const Tensor& x) const;

  ModelConfig cfg_;
  BnConvUnit sl_unit_;
  std::vector<InceptionBlock> blocks_;
  BnConvUnit tl_unit_;
  DenseHead head_;
};

}  // namespace bbnn
