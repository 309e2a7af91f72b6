#include "bbnn/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bbnn/dsp.hpp"
#include "bbnn/eval.hpp"
#include "bbnn/model.hpp"
#include "bbnn/train.hpp"

namespace bbnn {
namespace {

namespace fs = std::filesystem;

struct Opts {
  std::string corpus;
  std::string cache;
  std::string out = ".";
  std::string checkpoint;
  std::string audio;
  MelConfig mel;
  TrainConfig train;
  double val_frac = 0.1;
  int folds = 10;
  std::int64_t classes = 10;
  std::int64_t blocks = 3;
  std::string tl_pool = "avg";
};

ModelConfig model_config(const Opts& o, std::int64_t n_classes) {
  ModelConfig m;
  m.n_classes = n_classes;
  m.input_h = o.mel.target_frames;
  m.input_w = o.mel.n_mels;
  m.blocks = o.blocks;
  m.tl_max_pool = o.tl_pool == "max";
  return m;
}

// Stratified validation split: per class, seeded shuffle, first chunk out.
void split_train_val(const Dataset& data, double val_frac, std::uint64_t seed,
                     std::vector<std::int64_t>& train_idx,
                     std::vector<std::int64_t>& val_idx) {
  if (val_frac <= 0.0 || val_frac >= 1.0) {
    throw ShapeError("val fraction must be in (0,1)");
  }
  Rng rng(seed);
  const int C = static_cast<int>(data.genres.size());
  for (int c = 0; c < C; ++c) {
    std::vector<std::int64_t> members;
    for (std::int64_t i = 0; i < data.size(); ++i) {
      if (data.labels[static_cast<std::size_t>(i)] == c) members.push_back(i);
    }
    if (members.empty()) continue;
    rng.shuffle(members);
    std::int64_t n_val = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(
               std::llround(val_frac * static_cast<double>(members.size()))));
    if (n_val >= static_cast<std::int64_t>(members.size())) {
      n_val = static_cast<std::int64_t>(members.size()) - 1;
    }
    if (n_val < 1) {
      throw DataError("class '" + data.genres[static_cast<std::size_t>(c)] +
                      "' has too few clips to hold out validation data");
    }
    val_idx.insert(val_idx.end(), members.begin(), members.begin() + n_val);
    train_idx.insert(train_idx.end(), members.begin() + n_val, members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
}

void print_class_table(std::ostream& out, const std::vector<std::string>& genres,
                       const MetricsReport& rep) {
  std::size_t width = 8;
  for (const auto& g : genres) width = std::max(width, g.size() + 2);
  out << std::left << std::setw(static_cast<int>(width)) << "Genre"
      << std::right << std::setw(11) << "Precision" << std::setw(9) << "Recall"
      << std::setw(10) << "F-score" << "\n";
  out << std::fixed << std::setprecision(1);
  double p = 0, r = 0, f = 0;
  for (std::size_t c = 0; c < genres.size(); ++c) {
    const auto& m = rep.per_class[c];
    out << std::left << std::setw(static_cast<int>(width)) << genres[c]
        << std::right << std::setw(11) << m.precision << std::setw(9)
        << m.recall << std::setw(10) << m.f_score
        << (m.zero_denominator ? "  (empty class or column)" : "") << "\n";
    p += m.precision;
    r += m.recall;
    f += m.f_score;
  }
  const double n = static_cast<double>(genres.size());
  out << std::left << std::setw(static_cast<int>(width)) << "Average"
      << std::right << std::setw(11) << p / n << std::setw(9) << r / n
      << std::setw(10) << f / n << "\n";
  out << std::defaultfloat;
}

int cmd_preprocess(const Opts& o, std::ostream& out, std::ostream& err) {
  o.mel.validate();
  CorpusScan scan = scan_corpus(o.corpus);
  if (scan.genres.empty()) {
    throw DataError("no genres found in " + o.corpus +
                    " (expected <root>/<genre>/*.wav)");
  }
  if (scan.genres.size() < 2) {
    throw DataError("need at least 2 genres, found only '" + scan.genres[0] + "'");
  }

  std::vector<CachedClip> clips;
  clips.reserve(scan.files.size());
  std::size_t skipped = 0;
  for (const CorpusFile& f : scan.files) {
    try {
      MelSpectrogram mel = extract_logmel(f.path, o.mel);
      clips.push_back({f.genre_idx, f.genre, std::move(mel.v)});
    } catch (const DataError& e) {
      err << "warning: skipping " << f.path << ": " << e.what() << "\n";
      ++skipped;
    }
  }
  if (clips.empty()) throw DataError("no decodable clips in " + o.corpus);
  write_mel_cache(o.cache, clips);

  std::map<std::string, std::int64_t> counts;
  for (const auto& c : clips) ++counts[c.genre_label];
  std::size_t width = 8;
  for (const auto& g : scan.genres) width = std::max(width, g.size() + 2);
  out << std::left << std::setw(static_cast<int>(width)) << "Genre"
      << std::right << std::setw(8) << "Tracks" << "\n";
  for (const auto& [genre, n] : counts) {
    out << std::left << std::setw(static_cast<int>(width)) << genre
        << std::right << std::setw(8) << n << "\n";
  }
  out << std::left << std::setw(static_cast<int>(width)) << "Total"
      << std::right << std::setw(8) << clips.size() << "\n";
  out << "cache written to " << o.cache << "\n";

  if (skipped * 20 > scan.files.size()) {  // more than 5%
    err << "error: skipped " << skipped << " of " << scan.files.size()
        << " files (more than 5%)\n";
    return 2;
  }
  return 0;
}

int cmd_inspect(const Opts& o, std::ostream& out) {
  BbnnModel model(model_config(o, o.classes));
  const auto rows = model.param_table();

  std::size_t w_layer = 6, w_out = 11, w_filt = 27;
  for (const auto& r : rows) {
    w_layer = std::max(w_layer, r.layer.size());
    w_out = std::max(w_out, r.out_size.size());
    w_filt = std::max(w_filt, r.filters.size());
  }
  out << std::left << std::setw(6) << "Type"
      << std::setw(static_cast<int>(w_layer + 2)) << "Layers"
      << std::setw(static_cast<int>(w_out + 2)) << "Output Size"
      << std::setw(static_cast<int>(w_filt + 2)) << "Filter Size/Stride (Number)"
      << std::right << std::setw(10) << "Params" << "\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(6) << r.type
        << std::setw(static_cast<int>(w_layer + 2)) << r.layer
        << std::setw(static_cast<int>(w_out + 2)) << r.out_size
        << std::setw(static_cast<int>(w_filt + 2)) << r.filters << std::right
        << std::setw(10) << (r.params > 0 ? format_thousands(r.params) : "-")
        << "\n";
  }
  out << "Full Params (incl. BN) " << format_thousands(model.count_params(true))
      << "\n";
  out << "Total Params " << format_thousands(model.count_params(false)) << "\n";
  return 0;
}

int cmd_train(const Opts& o, std::ostream& out, std::ostream& err) {
  o.mel.validate();
  Dataset data = dataset_from_cache(read_mel_cache(o.cache, o.mel), o.mel);
  if (data.genres.size() < 2) throw DataError("cache holds fewer than 2 genres");

  std::vector<std::int64_t> train_idx, val_idx;
  split_train_val(data, o.val_frac, o.train.seed, train_idx, val_idx);
  err << "training on " << train_idx.size() << " clips, validating on "
      << val_idx.size() << "\n";

  BbnnModel model(model_config(o, static_cast<std::int64_t>(data.genres.size())));
  Rng rng(o.train.seed);
  model.init_params(rng);
  FitResult fr = fit(model, data, train_idx, val_idx, o.train, &err);

  fs::create_directories(o.out);
  const std::string ckpt = (fs::path(o.out) / "checkpoint.bbnn").string();
  const std::string csv = (fs::path(o.out) / "epochs.csv").string();
  model.save(ckpt);
  write_epoch_csv(csv, fr.logs);

  const EpochLog& best = fr.logs[static_cast<std::size_t>(fr.best_epoch - 1)];
  out << "epochs run      " << fr.logs.size() << "\n";
  out << "best epoch      " << fr.best_epoch << "\n";
  out << std::fixed << std::setprecision(4);
  out << "best val loss   " << fr.best_val_loss << "\n";
  out << "val accuracy    " << std::setprecision(1) << 100.0 * best.val_acc
      << "%\n" << std::defaultfloat;
  out << "checkpoint      " << ckpt << "\n";
  out << "epoch log       " << csv << "\n";
  return 0;
}

int cmd_cv(const Opts& o, std::ostream& out, std::ostream& err) {
  o.mel.validate();
  Dataset data = dataset_from_cache(read_mel_cache(o.cache, o.mel), o.mel);
  if (data.genres.size() < 2) throw DataError("cache holds fewer than 2 genres");

  CvReport report = cross_validate(
      data, model_config(o, static_cast<std::int64_t>(data.genres.size())),
      o.train, o.folds, &err);

  fs::create_directories(o.out);
  const std::string json_path = (fs::path(o.out) / "cv_report.json").string();
  const std::string csv_path = (fs::path(o.out) / "cv_report.csv").string();
  write_cv_json(json_path, report);
  write_cv_csv(csv_path, report);

  out << std::fixed << std::setprecision(1);
  for (const auto& f : report.folds) {
    out << "fold " << f.fold << " accuracy " << f.test_accuracy << "%\n";
  }
  out << "mean accuracy   " << report.mean_accuracy << "%\n";
  out << "pooled accuracy " << report.pooled_accuracy << "%\n"
      << std::defaultfloat;
  print_class_table(out, report.genres, report.pooled_metrics);
  out << "reports written to " << json_path << " and " << csv_path << "\n";
  return 0;
}

int cmd_evaluate(const Opts& o, std::ostream& out) {
  o.mel.validate();
  BbnnModel model = BbnnModel::load(o.checkpoint, model_config(o, 2));
  Dataset data = dataset_from_cache(read_mel_cache(o.cache, o.mel), o.mel);
  if (static_cast<std::int64_t>(data.genres.size()) != model.config().n_classes) {
    throw DataError("class-count mismatch: checkpoint has " +
                    std::to_string(model.config().n_classes) +
                    " classes, cache has " + std::to_string(data.genres.size()) +
                    " genres");
  }
  std::vector<std::int64_t> idx(static_cast<std::size_t>(data.size()));
  std::iota(idx.begin(), idx.end(), 0);
  EvalStats st = evaluate_split(model, data, idx, o.train.batch_size);
  ConfusionMatrix cm = confusion(st.preds, data.labels,
                                 static_cast<std::int64_t>(data.genres.size()));
  MetricsReport rep = metrics(cm);
  out << std::fixed << std::setprecision(1) << "accuracy " << rep.accuracy
      << "% over " << data.size() << " clips\n" << std::defaultfloat;
  print_class_table(out, data.genres, rep);
  return 0;
}

int cmd_predict(const Opts& o, std::ostream& out) {
  o.mel.validate();
  BbnnModel model = BbnnModel::load(o.checkpoint, model_config(o, 2));
  const std::int64_t C = model.config().n_classes;

  std::vector<std::string> names;
  if (!o.cache.empty()) {
    names = genres_from_cache(read_mel_cache(o.cache, o.mel));
    if (static_cast<std::int64_t>(names.size()) != C) {
      throw DataError("class-count mismatch: checkpoint has " +
                      std::to_string(C) + " classes, cache has " +
                      std::to_string(names.size()) + " genres");
    }
  } else {
    for (std::int64_t c = 0; c < C; ++c) names.push_back("class" + std::to_string(c));
  }

  MelSpectrogram mel = extract_logmel(o.audio, o.mel);
  Tensor x(1, mel.frames, mel.bands, 1);
  std::copy(mel.v.begin(), mel.v.end(), x.data());
  Tensor probs = model.forward_infer(x);

  std::vector<std::int64_t> order(static_cast<std::size_t>(C));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return probs[a] > probs[b];
  });
  std::size_t width = 8;
  for (const auto& n : names) width = std::max(width, n.size() + 2);
  out << std::fixed << std::setprecision(4);
  for (std::int64_t c : order) {
    out << std::left << std::setw(static_cast<int>(width))
        << names[static_cast<std::size_t>(c)] << probs[c] << "\n";
  }
  out << std::defaultfloat;
  return 0;
}

void add_mel_flags(CLI::App* cmd, Opts& o) {
  cmd->add_option("--sample-rate", o.mel.sample_rate, "target sample rate (Hz)");
  cmd->add_option("--n-fft", o.mel.n_fft, "FFT frame length");
  cmd->add_option("--hop", o.mel.hop, "hop size");
  cmd->add_option("--mels", o.mel.n_mels, "mel band count");
  cmd->add_option("--fmin", o.mel.fmin, "lowest filter frequency (Hz)");
  cmd->add_option("--fmax", o.mel.fmax, "highest filter frequency (Hz)");
  cmd->add_option("--frames", o.mel.target_frames, "fixed time-axis length");
}

void add_train_flags(CLI::App* cmd, Opts& o) {
  cmd->add_option("--seed", o.train.seed, "RNG seed");
  cmd->add_option("--epochs", o.train.max_epochs, "epoch budget");
  cmd->add_option("--batch", o.train.batch_size, "mini-batch size");
  cmd->add_option("--lr", o.train.lr0, "initial learning rate");
  cmd->add_option("--blocks", o.blocks, "Inception block count L");
  cmd->add_option("--tl-pool", o.tl_pool, "transition pooling")
      ->check(CLI::IsMember({"avg", "max"}));
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  Opts o;
  CLI::App app{"BBNN music genre classifier"};
  app.require_subcommand(1);

  CLI::App* pre = app.add_subcommand("preprocess",
                                     "decode a corpus into a mel-spectrogram cache");
  pre->add_option("--corpus", o.corpus, "corpus root: <root>/<genre>/*.wav")->required();
  pre->add_option("--cache", o.cache, "cache file to write")->required();
  add_mel_flags(pre, o);

  CLI::App* ins = app.add_subcommand("inspect", "print the architecture table");
  ins->add_option("--classes", o.classes, "genre count");
  ins->add_option("--blocks", o.blocks, "Inception block count L");
  ins->add_option("--tl-pool", o.tl_pool, "transition pooling")
      ->check(CLI::IsMember({"avg", "max"}));
  add_mel_flags(ins, o);

  CLI::App* tr = app.add_subcommand("train", "train on a preprocessed cache");
  tr->add_option("--cache", o.cache, "mel cache file")->required();
  tr->add_option("--out", o.out, "output directory");
  tr->add_option("--val-frac", o.val_frac, "held-out validation fraction");
  add_train_flags(tr, o);
  add_mel_flags(tr, o);

  CLI::App* cv = app.add_subcommand("cv", "k-fold cross-validation");
  cv->add_option("--cache", o.cache, "mel cache file")->required();
  cv->add_option("--out", o.out, "output directory");
  cv->add_option("--folds", o.folds, "fold count");
  add_train_flags(cv, o);
  add_mel_flags(cv, o);

  CLI::App* ev = app.add_subcommand("evaluate", "score a checkpoint on a cache");
  ev->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  ev->add_option("--cache", o.cache, "mel cache file")->required();
  ev->add_option("--batch", o.train.batch_size, "inference batch size");
  ev->add_option("--tl-pool", o.tl_pool, "transition pooling")
      ->check(CLI::IsMember({"avg", "max"}));
  add_mel_flags(ev, o);

  CLI::App* pr = app.add_subcommand("predict", "classify one audio file");
  pr->add_option("audio", o.audio, "WAV file")->required();
  pr->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  pr->add_option("--cache", o.cache, "mel cache supplying genre names");
  pr->add_option("--tl-pool", o.tl_pool, "transition pooling")
      ->check(CLI::IsMember({"avg", "max"}));
  add_mel_flags(pr, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (pre->parsed()) return cmd_preprocess(o, out, err);
    if (ins->parsed()) return cmd_inspect(o, out);
    if (tr->parsed()) return cmd_train(o, out, err);
    if (cv->parsed()) return cmd_cv(o, out, err);
    if (ev->parsed()) return cmd_evaluate(o, out);
    if (pr->parsed()) return cmd_predict(o, out);
  } catch (const NumericError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace bbnn
