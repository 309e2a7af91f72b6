#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bbnn/dsp.hpp"
#include "bbnn/model.hpp"

namespace bbnn {

struct TrainConfig {
  std::int64_t batch_size = 8;
  int max_epochs = 100;
  double lr0 = 0.01;
  double plateau_factor = 0.5;
  int plateau_patience = 3;
  int early_stop_patience = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double min_lr = 1e-5;

  void validate() const;
};

// Loss threshold: changes smaller than this don't count as improvement, for
// both the plateau scheduler and early stopping.
constexpr double kImproveThreshold = 1e-4;

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;  // in effect during this epoch's updates
};

struct CeResult {
  double loss = 0.0;
  Tensor grad_logits;  // (probs - onehot)/N
};

// probs is (N,1,1,C) with rows summing to 1 within 1e-5.
CeResult cross_entropy(const Tensor& probs, const std::vector<int>& labels);

class Adam {
 public:
  Adam(std::vector<ParamRef> params, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(double lr);
  std::int64_t t() const { return t_; }

 private:
  struct Slot {
    Tensor* value;
    Tensor* grad;
    std::vector<float> m, v;
  };
  std::vector<Slot> slots_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

class PlateauScheduler {
 public:
  PlateauScheduler(double lr0, double factor, int patience, double min_lr,
                   double threshold = kImproveThreshold);
  // Feed one epoch's validation loss; returns the rate for the next epoch.
  double observe(double val_loss);
  double lr() const { return lr_; }

 private:
  double lr_, factor_, min_lr_, threshold_;
  int patience_, bad_ = 0;
  double best_;
  bool has_best_ = false;
};

// True when the last `patience` entries brought no improvement over the
// running best (threshold kImproveThreshold).
bool early_stop(const std::vector<double>& val_losses, int patience);

struct Dataset {
  std::int64_t frames = 0;
  std::int64_t bands = 0;
  std::vector<std::vector<float>> mels;  // each frames*bands
  std::vector<int> labels;
  std::vector<std::string> genres;  // index -> label name
  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
};

Dataset dataset_from_cache(const std::vector<CachedClip>& clips,
                           const MelConfig& cfg);

// (B, frames, bands, 1) tensor from the rows named by idx[from, from+count).
Tensor make_batch(const Dataset& data, const std::vector<std::int64_t>& idx,
                  std::int64_t from, std::int64_t count);

struct FitResult {
  std::vector<EpochLog> logs;
  double best_val_loss = 0.0;
  int best_epoch = 0;
};

// Trains in place; on return the model carries the best-validation-loss
// epoch's parameters and BN statistics. `progress` gets one line per epoch.
FitResult fit(BbnnModel& model, const Dataset& data,
              const std::vector<std::int64_t>& train_idx,
              const std::vector<std::int64_t>& val_idx, const TrainConfig& cfg,
              std::ostream* progress = nullptr);

// Inference over the listed rows: mean loss and top-1 accuracy.
struct EvalStats {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> preds;
};
EvalStats evaluate_split(const BbnnModel& model, const Dataset& data,
                         const std::vector<std::int64_t>& idx,
                         std::int64_t batch_size);

void write_epoch_csv(const std::string& path, const std::vector<EpochLog>& logs);

}  // namespace bbnn
