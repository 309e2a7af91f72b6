#include "bbnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace bbnn {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ShapeError("train config: batch_size must be >= 1");
  if (max_epochs < 1) throw ShapeError("train config: max_epochs must be >= 1");
  if (lr0 <= 0 || min_lr <= 0) throw ShapeError("train config: rates must be positive");
  if (plateau_factor <= 0 || plateau_factor >= 1) {
    throw ShapeError("train config: plateau_factor must be in (0,1)");
  }
  if (plateau_patience < 1 || early_stop_patience < 1) {
    throw ShapeError("train config: patience must be >= 1");
  }
}

CeResult cross_entropy(const Tensor& probs, const std::vector<int>& labels) {
  const std::int64_t N = probs.n();
  const std::int64_t C = probs.c();
  if (probs.h() != 1 || probs.w() != 1 || N < 1) {
    throw ShapeError("cross_entropy: probabilities must be (N,1,1,C), got " +
                     probs.shape().str());
  }
  if (static_cast<std::int64_t>(labels.size()) != N) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(N) + " rows");
  }

  CeResult r;
  r.grad_logits = Tensor(probs.shape());
  const float* pd = probs.data();
  float* gd = r.grad_logits.data();
  const float inv_n = 1.0f / static_cast<float>(N);
  double loss = 0.0;
  for (std::int64_t i = 0; i < N; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= C) {
      throw ShapeError("cross_entropy: label " + std::to_string(y) +
                       " outside [0," + std::to_string(C) + ") at row " +
                       std::to_string(i));
    }
    const float* prow = pd + i * C;
    double sum = 0.0;
    for (std::int64_t c = 0; c < C; ++c) sum += prow[c];
    if (std::abs(sum - 1.0) > 1e-5) {
      throw NumericError("cross_entropy: row " + std::to_string(i) +
                         " sums to " + std::to_string(sum));
    }
    loss -= std::log(std::max(static_cast<double>(prow[y]), 1e-30));
    float* grow = gd + i * C;
    for (std::int64_t c = 0; c < C; ++c) grow[c] = prow[c] * inv_n;
    grow[y] -= inv_n;
  }
  r.loss = loss / static_cast<double>(N);
  return r;
}

Adam::Adam(std::vector<ParamRef> params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  slots_.reserve(params.size());
  for (const auto& p : params) {
    Slot s;
    s.value = p.value;
    s.grad = p.grad;
    s.m.assign(static_cast<std::size_t>(p.value->size()), 0.0f);
    s.v.assign(static_cast<std::size_t>(p.value->size()), 0.0f);
    slots_.push_back(std::move(s));
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& s : slots_) {
    float* theta = s.value->data();
    const float* g = s.grad->data();
    const std::int64_t n = s.value->size();
    for (std::int64_t i = 0; i < n; ++i) {
      const double gi = g[i];
      const double m = beta1_ * s.m[static_cast<std::size_t>(i)] + (1.0 - beta1_) * gi;
      const double v = beta2_ * s.v[static_cast<std::size_t>(i)] + (1.0 - beta2_) * gi * gi;
      s.m[static_cast<std::size_t>(i)] = static_cast<float>(m);
      s.v[static_cast<std::size_t>(i)] = static_cast<float>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      theta[i] = static_cast<float>(theta[i] - lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

PlateauScheduler::PlateauScheduler(double lr0, double factor, int patience,
                                   double min_lr, double threshold)
    : lr_(lr0), factor_(factor), min_lr_(min_lr), threshold_(threshold),
      patience_(patience), best_(0.0) {}

double PlateauScheduler::observe(double val_loss) {
  if (!has_best_ || val_loss < best_ - threshold_) {
    best_ = val_loss;
    has_best_ = true;
    bad_ = 0;
    return lr_;
  }
  if (++bad_ >= patience_) {
    lr_ = std::max(lr_ * factor_, min_lr_);
    bad_ = 0;
  }
  return lr_;
}

bool early_stop(const std::vector<double>& val_losses, int patience) {
  if (val_losses.empty()) throw ShapeError("early_stop: empty history");
  double best = val_losses[0];
  int bad = 0;
  for (std::size_t i = 1; i < val_losses.size(); ++i) {
    if (val_losses[i] < best - kImproveThreshold) {
      best = val_losses[i];
      bad = 0;
    } else {
      ++bad;
    }
  }
  return bad >= patience;
}

Dataset dataset_from_cache(const std::vector<CachedClip>& clips,
                           const MelConfig& cfg) {
  Dataset d;
  d.frames = cfg.target_frames;
  d.bands = cfg.n_mels;
  d.genres = genres_from_cache(clips);
  d.mels.reserve(clips.size());
  d.labels.reserve(clips.size());
  for (const auto& c : clips) {
    d.mels.push_back(c.mel);
    d.labels.push_back(c.genre_idx);
  }
  return d;
}

Tensor make_batch(const Dataset& data, const std::vector<std::int64_t>& idx,
                  std::int64_t from, std::int64_t count) {
  Tensor x(count, data.frames, data.bands, 1);
  const std::size_t cells = static_cast<std::size_t>(data.frames * data.bands);
  for (std::int64_t i = 0; i < count; ++i) {
    const auto& mel = data.mels[static_cast<std::size_t>(
        idx[static_cast<std::size_t>(from + i)])];
    if (mel.size() != cells) {
      throw ShapeError("batch: clip holds " + std::to_string(mel.size()) +
                       " cells, expected " + std::to_string(cells));
    }
    std::memcpy(x.data() + static_cast<std::size_t>(i) * cells, mel.data(),
                cells * sizeof(float));
  }
  return x;
}

namespace {

std::vector<int> batch_labels(const Dataset& data,
                              const std::vector<std::int64_t>& idx,
                              std::int64_t from, std::int64_t count) {
  std::vector<int> y(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    y[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(
        idx[static_cast<std::size_t>(from + i)])];
  }
  return y;
}

std::vector<std::vector<float>> snapshot_state(TensorRegistry& reg) {
  std::vector<std::vector<float>> snap;
  snap.reserve(reg.state.size());
  for (const auto& nt : reg.state) {
    snap.emplace_back(nt.tensor->data(), nt.tensor->data() + nt.tensor->size());
  }
  return snap;
}

void restore_state(TensorRegistry& reg, const std::vector<std::vector<float>>& snap) {
  for (std::size_t i = 0; i < reg.state.size(); ++i) {
    std::copy(snap[i].begin(), snap[i].end(), reg.state[i].tensor->data());
  }
}

}  // namespace

EvalStats evaluate_split(const BbnnModel& model, const Dataset& data,
                         const std::vector<std::int64_t>& idx,
                         std::int64_t batch_size) {
  EvalStats st;
  const std::int64_t n = static_cast<std::int64_t>(idx.size());
  if (n == 0) throw DataError("evaluate: empty index list");
  double loss_sum = 0.0;
  std::int64_t correct = 0;
  st.preds.reserve(static_cast<std::size_t>(n));
  for (std::int64_t from = 0; from < n; from += batch_size) {
    const std::int64_t count = std::min(batch_size, n - from);
    Tensor x = make_batch(data, idx, from, count);
    std::vector<int> y = batch_labels(data, idx, from, count);
    Tensor probs = model.forward_infer(x);
    CeResult ce = cross_entropy(probs, y);
    loss_sum += ce.loss * static_cast<double>(count);
    const std::int64_t C = probs.c();
    for (std::int64_t i = 0; i < count; ++i) {
      const float* row = probs.data() + i * C;
      int arg = 0;
      for (std::int64_t c = 1; c < C; ++c) {
        if (row[c] > row[arg]) arg = static_cast<int>(c);
      }
      st.preds.push_back(arg);
      if (arg == y[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  st.loss = loss_sum / static_cast<double>(n);
  st.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return st;
}

FitResult fit(BbnnModel& model, const Dataset& data,
              const std::vector<std::int64_t>& train_idx,
              const std::vector<std::int64_t>& val_idx, const TrainConfig& cfg,
              std::ostream* progress) {
  cfg.validate();
  if (train_idx.empty() || val_idx.empty()) {
    throw DataError("fit: training and validation sets must be nonempty");
  }
  const std::int64_t C = model.config().n_classes;
  for (std::int64_t i : train_idx) {
    if (data.labels[static_cast<std::size_t>(i)] >= C) {
      throw DataError("fit: label " +
                      std::to_string(data.labels[static_cast<std::size_t>(i)]) +
                      " outside the model's " + std::to_string(C) + " classes");
    }
  }

  TensorRegistry reg = model.collect_tensors();
  Adam adam(reg.params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  PlateauScheduler sched(cfg.lr0, cfg.plateau_factor, cfg.plateau_patience,
                         cfg.min_lr);
  Rng rng(cfg.seed);

  FitResult result;
  std::vector<std::vector<float>> best_state = snapshot_state(reg);
  double best_val = 0.0;
  bool has_best = false;
  std::vector<double> val_history;
  std::vector<std::int64_t> order = train_idx;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr = sched.lr();
    rng.shuffle(order);

    const std::int64_t n_train = static_cast<std::int64_t>(order.size());
    double loss_sum = 0.0;
    std::int64_t batch_no = 0;
    for (std::int64_t from = 0; from < n_train; from += cfg.batch_size) {
      ++batch_no;
      const std::int64_t count = std::min(cfg.batch_size, n_train - from);
      Tensor x = make_batch(data, order, from, count);
      std::vector<int> y = batch_labels(data, order, from, count);

      model.zero_grads();
      BbnnModel::Cache cache;
      Tensor probs = model.forward_train(x, cache);
      CeResult ce = cross_entropy(probs, y);
      if (!std::isfinite(ce.loss)) {
        throw NumericError("fit: loss is not finite at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no));
      }
      model.backward(cache, ce.grad_logits);
      adam.step(lr);
      loss_sum += ce.loss * static_cast<double>(count);
    }
    const double train_loss = loss_sum / static_cast<double>(n_train);

    EvalStats val = evaluate_split(model, data, val_idx, cfg.batch_size);
    if (!std::isfinite(val.loss)) {
      throw NumericError("fit: validation loss is not finite at epoch " +
                         std::to_string(epoch));
    }

    result.logs.push_back({epoch, train_loss, val.loss, val.accuracy, lr});
    if (progress) {
      *progress << "epoch " << epoch << "/" << cfg.max_epochs << "  train "
                << std::fixed << std::setprecision(4) << train_loss << "  val "
                << val.loss << "  acc " << val.accuracy << "  lr "
                << std::setprecision(6) << lr << std::defaultfloat << "\n";
    }

    if (!has_best || val.loss < best_val) {
      best_val = val.loss;
      has_best = true;
      best_state = snapshot_state(reg);
      result.best_val_loss = best_val;
      result.best_epoch = epoch;
    }

    val_history.push_back(val.loss);
    sched.observe(val.loss);
    if (early_stop(val_history, cfg.early_stop_patience)) break;
  }

  restore_state(reg, best_state);
  return result;
}

void write_epoch_csv(const std::string& path, const std::vector<EpochLog>& logs) {
  std::ofstream os(path);
  if (!os) throw DataError("epoch csv: cannot open " + path + " for writing");
  os << "epoch,train_loss,val_loss,val_acc,lr\n";
  os << std::setprecision(10);
  for (const auto& l : logs) {
    os << l.epoch << "," << l.train_loss << "," << l.val_loss << ","
       << l.val_acc << "," << l.lr << "\n";
  }
  if (!os) throw DataError("epoch csv: write failed for " + path);
}

}  // namespace bbnn
