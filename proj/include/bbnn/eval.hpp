#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bbnn/train.hpp"

namespace bbnn {

struct FoldPlan {
  int fold = 0;
  std::vector<std::int64_t> train, val, test;
};

// Stratified k-fold plans: per class, seeded shuffle then round-robin deal
// into k test buckets; fold i tests bucket i, validates bucket (i+1) mod k,
// trains on the rest (8/1/1 for k=10). Classes with fewer than k samples are
// dealt as evenly as possible, with a warning line to `warn`.
std::vector<FoldPlan> make_folds(const std::vector<int>& labels, int k,
                                 std::uint64_t seed,
                                 std::ostream* warn = nullptr);

struct ConfusionMatrix {
  std::int64_t classes = 0;
  std::vector<std::int64_t> counts;  // classes x classes, rows = truth

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::int64_t c)
      : classes(c), counts(static_cast<std::size_t>(c * c), 0) {}
  std::int64_t& at(std::int64_t truth, std::int64_t pred) {
    return counts[static_cast<std::size_t>(truth * classes + pred)];
  }
  std::int64_t at(std::int64_t truth, std::int64_t pred) const {
    return counts[static_cast<std::size_t>(truth * classes + pred)];
  }
  std::int64_t total() const;
  std::int64_t trace() const;
  void add(const ConfusionMatrix& other);
};

ConfusionMatrix confusion(const std::vector<int>& preds,
                          const std::vector<int>& truths, std::int64_t classes);

// All values in percent. A zero denominator yields 0 with the flag set.
struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
  bool zero_denominator = false;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;  // percent
};

MetricsReport metrics(const ConfusionMatrix& cm);

struct FoldReport {
  int fold = 0;
  double test_accuracy = 0.0;  // percent
  ConfusionMatrix cm;
  std::vector<EpochLog> logs;
};

struct CvReport {
  std::vector<std::string> genres;
  std::vector<FoldReport> folds;
  ConfusionMatrix pooled;
  MetricsReport pooled_metrics;
  double mean_accuracy = 0.0;    // unweighted mean of fold accuracies, percent
  double pooled_accuracy = 0.0;  // percent
};

// One fresh model per fold plan; test predictions pool into one confusion
// matrix. Fold f trains with seed = tcfg.seed ^ f.
CvReport cross_validate(const Dataset& data, const ModelConfig& mcfg,
                        const TrainConfig& tcfg,
                        const std::vector<FoldPlan>& plans,
                        std::ostream* progress = nullptr);
// Derives the fold plans from the dataset labels (seed = tcfg.seed).
CvReport cross_validate(const Dataset& data, const ModelConfig& mcfg,
                        const TrainConfig& tcfg, int k,
                        std::ostream* progress = nullptr);

void write_cv_json(const std::string& path, const CvReport& report);
// genre,precision,recall,f_score per class plus an unweighted Average row.
void write_cv_csv(const std::string& path, const CvReport& report);

}  // namespace bbnn
