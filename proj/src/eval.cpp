#include "bbnn/eval.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>

#include <json.hpp>

#include "bbnn/rng.hpp"

namespace bbnn {

std::vector<FoldPlan> make_folds(const std::vector<int>& labels, int k,
                                 std::uint64_t seed, std::ostream* warn) {
  if (k < 2) throw ShapeError("folds: k must be at least 2");
  if (labels.empty()) throw DataError("folds: no labels");
  int max_label = 0;
  for (int y : labels) {
    if (y < 0) throw DataError("folds: negative label");
    max_label = std::max(max_label, y);
  }
  const int C = max_label + 1;

  // per class: seeded shuffle, deal round-robin into k test buckets
  std::vector<std::vector<std::int64_t>> buckets(static_cast<std::size_t>(k));
  Rng rng(seed);
  for (int c = 0; c < C; ++c) {
    std::vector<std::int64_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(static_cast<std::int64_t>(i));
    }
    if (members.size() < static_cast<std::size_t>(k) && warn) {
      *warn << "warning: class " << c << " has " << members.size()
            << " samples for " << k << " folds; dealing as evenly as possible\n";
    }
    rng.shuffle(members);
    for (std::size_t j = 0; j < members.size(); ++j) {
      buckets[j % static_cast<std::size_t>(k)].push_back(members[j]);
    }
  }

  std::vector<FoldPlan> plans(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    FoldPlan& plan = plans[static_cast<std::size_t>(f)];
    plan.fold = f;
    plan.test = buckets[static_cast<std::size_t>(f)];
    plan.val = buckets[static_cast<std::size_t>((f + 1) % k)];
    for (int b = 0; b < k; ++b) {
      if (b == f || b == (f + 1) % k) continue;
      plan.train.insert(plan.train.end(), buckets[static_cast<std::size_t>(b)].begin(),
                        buckets[static_cast<std::size_t>(b)].end());
    }
    std::sort(plan.train.begin(), plan.train.end());
    std::sort(plan.val.begin(), plan.val.end());
    std::sort(plan.test.begin(), plan.test.end());
  }
  return plans;
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (std::int64_t v : counts) t += v;
  return t;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (std::int64_t c = 0; c < classes; ++c) t += at(c, c);
  return t;
}

void ConfusionMatrix::add(const ConfusionMatrix& other) {
  if (other.classes != classes) {
    throw ShapeError("confusion: cannot pool " + std::to_string(other.classes) +
                     " classes into " + std::to_string(classes));
  }
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

ConfusionMatrix confusion(const std::vector<int>& preds,
                          const std::vector<int>& truths,
                          std::int64_t classes) {
  if (preds.size() != truths.size()) {
    throw ShapeError("confusion: " + std::to_string(preds.size()) +
                     " predictions for " + std::to_string(truths.size()) +
                     " truths");
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= classes || truths[i] < 0 ||
        truths[i] >= classes) {
      throw ShapeError("confusion: label outside [0," + std::to_string(classes) +
                       ") at sample " + std::to_string(i));
    }
    ++cm.at(truths[i], preds[i]);
  }
  return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total == 0) throw ShapeError("metrics: empty confusion matrix");
  MetricsReport rep;
  rep.per_class.resize(static_cast<std::size_t>(cm.classes));
  for (std::int64_t c = 0; c < cm.classes; ++c) {
    std::int64_t colsum = 0, rowsum = 0;
    for (std::int64_t i = 0; i < cm.classes; ++i) {
      colsum += cm.at(i, c);
      rowsum += cm.at(c, i);
    }
    ClassMetrics& m = rep.per_class[static_cast<std::size_t>(c)];
    const double diag = static_cast<double>(cm.at(c, c));
    if (colsum == 0 || rowsum == 0) m.zero_denominator = true;
    m.precision = colsum == 0 ? 0.0 : 100.0 * diag / static_cast<double>(colsum);
    m.recall = rowsum == 0 ? 0.0 : 100.0 * diag / static_cast<double>(rowsum);
    if (m.precision + m.recall <= 0.0) {
      m.f_score = 0.0;
      m.zero_denominator = true;
    } else {
      m.f_score = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
  }
  rep.accuracy = 100.0 * static_cast<double>(cm.trace()) / static_cast<double>(total);
  return rep;
}

CvReport cross_validate(const Dataset& data, const ModelConfig& mcfg,
                        const TrainConfig& tcfg,
                        const std::vector<FoldPlan>& plans,
                        std::ostream* progress) {
  if (plans.empty()) throw ShapeError("cross-validation: no fold plans");
  CvReport report;
  report.genres = data.genres;
  const std::int64_t C = static_cast<std::int64_t>(data.genres.size());
  report.pooled = ConfusionMatrix(C);

  double acc_sum = 0.0;
  for (const FoldPlan& plan : plans) {
    ModelConfig cfg = mcfg;
    cfg.n_classes = C;
    TrainConfig fold_tcfg = tcfg;
    fold_tcfg.seed = tcfg.seed ^ static_cast<std::uint64_t>(plan.fold);

    if (progress) {
      *progress << "fold " << plan.fold << ": train " << plan.train.size()
                << " val " << plan.val.size() << " test " << plan.test.size()
                << "\n";
    }

    BbnnModel model(cfg);
    Rng init_rng(fold_tcfg.seed);
    model.init_params(init_rng);
    FitResult ft = fit(model, data, plan.train, plan.val, fold_tcfg, progress);

    EvalStats test = evaluate_split(model, data, plan.test, fold_tcfg.batch_size);
    std::vector<int> truths;
    truths.reserve(plan.test.size());
    for (std::int64_t i : plan.test) {
      truths.push_back(data.labels[static_cast<std::size_t>(i)]);
    }

    FoldReport fr;
    fr.fold = plan.fold;
    fr.test_accuracy = 100.0 * test.accuracy;
    fr.cm = confusion(test.preds, truths, C);
    fr.logs = std::move(ft.logs);
    report.pooled.add(fr.cm);
    acc_sum += fr.test_accuracy;
    report.folds.push_back(std::move(fr));

    if (progress) {
      *progress << "fold " << plan.fold << ": test accuracy " << std::fixed
                << std::setprecision(1) << report.folds.back().test_accuracy
                << "%" << std::defaultfloat << "\n";
    }
  }

  report.mean_accuracy = acc_sum / static_cast<double>(plans.size());
  report.pooled_metrics = metrics(report.pooled);
  report.pooled_accuracy = report.pooled_metrics.accuracy;
  return report;
}

CvReport cross_validate(const Dataset& data, const ModelConfig& mcfg,
                        const TrainConfig& tcfg, int k,
                        std::ostream* progress) {
  std::vector<FoldPlan> plans = make_folds(data.labels, k, tcfg.seed, progress);
  return cross_validate(data, mcfg, tcfg, plans, progress);
}

void write_cv_json(const std::string& path, const CvReport& report) {
  nlohmann::json j;
  j["genres"] = report.genres;
  j["mean_accuracy"] = report.mean_accuracy;
  j["pooled_accuracy"] = report.pooled_accuracy;

  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : report.folds) {
    folds.push_back({{"fold", f.fold}, {"test_accuracy", f.test_accuracy},
                     {"epochs", f.logs.size()}});
  }
  j["folds"] = folds;

  nlohmann::json cm = nlohmann::json::array();
  for (std::int64_t t = 0; t < report.pooled.classes; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::int64_t p = 0; p < report.pooled.classes; ++p) {
      row.push_back(report.pooled.at(t, p));
    }
    cm.push_back(row);
  }
  j["pooled_confusion"] = cm;

  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < report.pooled_metrics.per_class.size(); ++c) {
    const auto& m = report.pooled_metrics.per_class[c];
    per_class.push_back({{"genre", report.genres[c]},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f_score", m.f_score},
                         {"zero_denominator", m.zero_denominator}});
  }
  j["per_class"] = per_class;

  std::ofstream os(path);
  if (!os || !(os << j.dump(2) << "\n")) {
    throw DataError("report: cannot write " + path);
  }
}

void write_cv_csv(const std::string& path, const CvReport& report) {
  std::ofstream os(path);
  if (!os) throw DataError("report: cannot write " + path);
  os << "genre,precision,recall,f_score\n" << std::fixed << std::setprecision(1);
  double p = 0.0, r = 0.0, f = 0.0;
  for (std::size_t c = 0; c < report.pooled_metrics.per_class.size(); ++c) {
    const auto& m = report.pooled_metrics.per_class[c];
    os << report.genres[c] << "," << m.precision << "," << m.recall << ","
       << m.f_score << "\n";
    p += m.precision;
    r += m.recall;
    f += m.f_score;
  }
  const double n = static_cast<double>(report.pooled_metrics.per_class.size());
  os << "Average," << p / n << "," << r / n << "," << f / n << "\n";
  if (!os) throw DataError("report: write failed for " + path);
}

}  // namespace bbnn
