// Acceptance gate: ten go/no-go checks over the public surface, one PASS/FAIL
// line each, nonzero exit if anything fails. Tolerances are pinned here, not
// configurable.
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bbnn/cli.hpp"
#include "bbnn/dsp.hpp"
#include "bbnn/eval.hpp"
#include "bbnn/model.hpp"
#include "bbnn/rng.hpp"
#include "bbnn/train.hpp"

using namespace bbnn;

namespace {

int g_failures = 0;
std::vector<std::string> g_notes;

void note(const std::string& line) { g_notes.push_back(line); }

void criterion(int id, const std::string& title,
               const std::function<bool()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  g_notes.clear();
  bool ok = false;
  try {
    ok = body();
  } catch (const std::exception& e) {
    note(std::string("exception: ") + e.what());
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::ostringstream line;
  line.setf(std::ios::fixed);
  line.precision(2);
  line << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << title
       << " (" << secs << " s)";
  std::cout << line.str() << "\n";
  for (const auto& n : g_notes) std::cout << "       " << n << "\n";
  if (!ok) ++g_failures;
}

bool within_budget(double t0_epoch_secs, double limit, const char* what) {
  if (t0_epoch_secs < limit) return true;
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << what << " took " << t0_epoch_secs << " s, budget " << limit << " s";
  note(os.str());
  return false;
}

double elapsed_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// ---- criterion bodies ------------------------------------------------------

bool check_param_table() {
  const auto t0 = std::chrono::steady_clock::now();
  BbnnModel model{ModelConfig{}};

  const std::vector<std::int64_t> expected{320,   3168,  35936, 15456, 40032,
                                           27744, 44128, 13344, 330};
  std::vector<std::int64_t> got;
  for (const auto& row : model.param_table()) {
    if (row.params > 0) got.push_back(row.params);
  }
  bool ok = got == expected;
  if (!ok) {
    std::ostringstream os;
    os << "weighted rows:";
    for (auto v : got) os << " " << v;
    note(os.str());
  }
  if (model.count_params(false) != 180458) {
    ok = false;
    note("total " + format_thousands(model.count_params(false)) +
         ", expected 180,458");
  }

  std::ostringstream out, err;
  const char* argv[] = {"bbnn", "inspect"};
  if (run_cli(2, argv, out, err) != 0 ||
      out.str().find("Total Params 180,458") == std::string::npos) {
    ok = false;
    note("inspect command did not report Total Params 180,458");
  }
  return ok && within_budget(elapsed_since(t0), 1.0, "table check");
}

bool check_shapes() {
  const auto t0 = std::chrono::steady_clock::now();
  BbnnModel model{ModelConfig{}};
  Rng rng(1);
  model.init_params(rng);

  Tensor x(1, 647, 128, 1);
  for (std::int64_t i = 0; i < x.size(); ++i) {
    x[i] = rng.uniform(0.0f, 1.0f);
  }
  std::vector<Shape4> trace;
  Tensor probs = model.forward_infer(x, &trace);

  const std::vector<Shape4> expected{
      {1, 161, 128, 32},  {1, 161, 128, 160}, {1, 161, 128, 288},
      {1, 161, 128, 416}, {1, 80, 64, 32},    {1, 1, 1, 32},
      {1, 1, 1, 10}};
  bool ok = true;
  for (const auto& want : expected) {
    bool found = false;
    for (const auto& s : trace) found = found || s == want;
    if (!found) {
      ok = false;
      note("missing stage shape " + want.str());
    }
  }
  double sum = 0.0;
  for (std::int64_t c = 0; c < 10; ++c) sum += probs[c];
  if (!(probs.shape() == Shape4{1, 1, 1, 10}) || std::fabs(sum - 1.0) > 1e-5) {
    ok = false;
    note("output is not a 10-class distribution");
  }
  return ok && within_budget(elapsed_since(t0), 30.0, "full-size forward");
}

bool check_channel_growth() {
  bool ok = true;
  for (std::int64_t L = 1; L <= 5; ++L) {
    ModelConfig cfg;
    cfg.n_classes = 3;
    cfg.input_h = 16;
    cfg.input_w = 8;
    cfg.blocks = L;
    BbnnModel model(cfg);
    Rng rng(40 + static_cast<std::uint64_t>(L));
    model.init_params(rng);
    Tensor x(1, 16, 8, 1);
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0f, 1.0f);
    std::vector<Shape4> trace;
    model.forward_infer(x, &trace);
    // trace[1] is the shallow output, trace[1+l] the concatenation after
    // block l; block l therefore consumes 32 + 128*(l-1) channels.
    for (std::int64_t l = 0; l <= L; ++l) {
      const std::int64_t want = 32 + 128 * l;
      if (trace[static_cast<std::size_t>(1 + l)].c != want) {
        ok = false;
        note("L=" + std::to_string(L) + " stage " + std::to_string(l) +
             ": " + std::to_string(trace[static_cast<std::size_t>(1 + l)].c) +
             " channels, expected " + std::to_string(want));
      }
    }
  }
  return ok;
}

bool check_frontend_size() {
  MelConfig cfg;  // 22050 Hz, 2048/1024, 128 mels, 647 frames
  auto tone = [](std::size_t n) {
    std::vector<float> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = 0.4f * std::sin(2.0 * 3.14159265358979 * 440.0 *
                             static_cast<double>(i) / 22050.0) +
             0.1f * std::sin(2.0 * 3.14159265358979 * 3000.0 *
                             static_cast<double>(i) / 22050.0);
    }
    return v;
  };

  bool ok = true;
  PowerSpec ps = stft_power(tone(661794), cfg);
  if (ps.frames != 647) {
    ok = false;
    note("661794 samples -> " + std::to_string(ps.frames) + " frames");
  }
  MelSpectrogram mel = to_logmel(ps, cfg);
  if (mel.frames != 647 || mel.bands != 128 ||
      mel.v.size() != static_cast<std::size_t>(647 * 128)) {
    ok = false;
    note("full clip image is " + std::to_string(mel.frames) + "x" +
         std::to_string(mel.bands));
  }

  // 645*1024 samples give 646 frames; the image pads to 647 by repeating
  // the final frame.
  PowerSpec short_ps = stft_power(tone(660480), cfg);
  if (short_ps.frames != 646) {
    ok = false;
    note("660480 samples -> " + std::to_string(short_ps.frames) + " frames");
  }
  MelSpectrogram padded = to_logmel(short_ps, cfg);
  if (padded.frames != 647) {
    ok = false;
    note("short clip image is " + std::to_string(padded.frames) + " frames");
  }
  for (std::int64_t m = 0; m < padded.bands; ++m) {
    if (padded.at(646, m) != padded.at(645, m)) {
      ok = false;
      note("pad frame differs from final real frame at band " +
           std::to_string(m));
      break;
    }
  }
  return ok;
}

// Analytic gradient vs central difference of a scalar loss. The forward runs
// in float32, so the workable step is coordinate-dependent: small steps sit
// on the rounding floor, large steps pick up bias from ReLU/max-pool kink
// crossings. A short step bracket covers both regimes; the analytic value
// must agree with the best step's quotient. Tolerance stays at 1e-3.
double grad_probe(const std::function<double()>& loss, float* coord,
                  double analytic) {
  const float kept = *coord;
  double best = 1e30;
  for (double h : {1e-4, 3e-4, 1e-3}) {
    *coord = static_cast<float>(kept + h);
    const double up = loss();
    *coord = static_cast<float>(kept - h);
    const double down = loss();
    *coord = kept;
    const double fd = (up - down) / (2.0 * h);
    best = std::min(best, std::fabs(fd - analytic) /
                              std::max({1.0, std::fabs(fd),
                                        std::fabs(analytic)}));
  }
  return best;
}

double dot(const Tensor& cot, const Tensor& y) {
  double s = 0.0;
  for (std::int64_t i = 0; i < y.size(); ++i) s += static_cast<double>(cot[i]) * y[i];
  return s;
}

double layer_fd_worst(std::uint64_t seed) {
  Rng rng(seed);
  auto fill = [&](Tensor& t, float lo, float hi) {
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  };
  double worst = 0.0;
  auto probe_tensor = [&](const std::function<double()>& loss, Tensor& value,
                          const Tensor& grad) {
    for (std::int64_t i = 0; i < value.size(); ++i) {
      worst = std::max(worst, grad_probe(loss, &value[i], grad[i]));
    }
  };

  {  // strided convolution: x, w, b
    Tensor x(2, 6, 5, 2);
    fill(x, -1.0f, 1.0f);
    ConvKernel k(3, 3, 2, 3, 2, 1);
    k.init_he_uniform(rng);
    Tensor cot(conv2d_output_shape(x.shape(), k));
    fill(cot, -1.0f, 1.0f);
    auto loss = [&] { return dot(cot, conv2d(x, k)); };
    ConvGrads g = conv2d_backward(x, k, cot);
    probe_tensor(loss, x, g.gx);
    probe_tensor(loss, k.w, g.gw);
    probe_tensor(loss, k.b, g.gb);
  }
  {  // max pool, SAME window (distinct values keep the argmax stable)
    Tensor x(1, 6, 6, 2);
    std::vector<std::int64_t> order(static_cast<std::size_t>(x.size()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int64_t>(i);
    rng.shuffle(order);
    for (std::int64_t i = 0; i < x.size(); ++i) {
      x[i] = 0.05f * static_cast<float>(order[static_cast<std::size_t>(i)]);
    }
    Tensor cot(pool_output_shape(x.shape(), 3, 3, 1, 1, PoolPad::same));
    fill(cot, -1.0f, 1.0f);
    auto loss = [&] { return dot(cot, maxpool2d(x, 3, 3, 1, 1, PoolPad::same)); };
    Tensor gx = maxpool2d_backward(x, 3, 3, 1, 1, PoolPad::same, cot);
    probe_tensor(loss, x, gx);
  }
  {  // average pool
    Tensor x(2, 4, 4, 3);
    fill(x, -1.0f, 1.0f);
    Tensor cot(pool_output_shape(x.shape(), 2, 2, 2, 2, PoolPad::valid));
    fill(cot, -1.0f, 1.0f);
    auto loss = [&] { return dot(cot, avgpool2d(x, 2, 2, 2, 2)); };
    Tensor gx = avgpool2d_backward(x.shape(), 2, 2, 2, 2, cot);
    probe_tensor(loss, x, gx);
  }
  {  // global average pool
    Tensor x(2, 5, 4, 3);
    fill(x, -1.0f, 1.0f);
    Tensor cot(Shape4{2, 1, 1, 3});
    fill(cot, -1.0f, 1.0f);
    auto loss = [&] { return dot(cot, global_avg_pool(x)); };
    Tensor gx = global_avg_pool_backward(x.shape(), cot);
    probe_tensor(loss, x, gx);
  }
  {  // relu (keep inputs away from the kink)
    Tensor x(1, 4, 4, 2);
    for (std::int64_t i = 0; i < x.size(); ++i) {
      const float v = rng.uniform(0.1f, 1.0f);
      x[i] = rng.uniform(0.0f, 1.0f) < 0.5f ? -v : v;
    }
    Tensor cot(x.shape());
    fill(cot, -1.0f, 1.0f);
    auto loss = [&] { return dot(cot, relu(x)); };
    Tensor gx = relu_backward(x, cot);
    probe_tensor(loss, x, gx);
  }
  {  // batch norm: x, gamma, beta
    BatchNorm bn(3);
    fill(bn.gamma.v, 0.5f, 1.5f);
    fill(bn.beta.v, -0.5f, 0.5f);
    Tensor x(3, 4, 4, 3);
    fill(x, -2.0f, 2.0f);
    Tensor cot(x.shape());
    fill(cot, -1.0f, 1.0f);
    auto loss = [&] {
      BatchNorm::Cache c;
      return dot(cot, bn.forward_train(x, c));
    };
    BatchNorm::Cache cache;
    bn.forward_train(x, cache);
    bn.gamma.g = Tensor(bn.gamma.g.shape());
    bn.beta.g = Tensor(bn.beta.g.shape());
    Tensor gx = bn.backward(cache, cot);
    probe_tensor(loss, x, gx);
    probe_tensor(loss, bn.gamma.v, bn.gamma.g);
    probe_tensor(loss, bn.beta.v, bn.beta.g);
  }
  {  // dense head + softmax cross-entropy on logits
    DenseHead head(6, 4);
    head.init_params(rng);
    Tensor x(3, 1, 1, 6);
    fill(x, -1.0f, 1.0f);
    const std::vector<int> labels{0, 2, 3};
    auto loss = [&] {
      Tensor probs = softmax_rows(head.forward(x));
      return cross_entropy(probs, labels).loss;
    };
    DenseHead::Cache cache;
    Tensor logits = head.forward(x, &cache);
    CeResult ce = cross_entropy(softmax_rows(logits), labels);
    head.w.g = Tensor(head.w.g.shape());
    head.b.g = Tensor(head.b.g.shape());
    Tensor gx = head.backward(cache, ce.grad_logits);
    probe_tensor(loss, x, gx);
    probe_tensor(loss, head.w.v, head.w.g);
    probe_tensor(loss, head.b.v, head.b.g);
  }
  return worst;
}

bool check_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const double kTol = 1e-3;
  bool ok = true;
  double worst_layer = 0.0, worst_model = 0.0;

  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    worst_layer = std::max(worst_layer, layer_fd_worst(seed));
  }
  if (worst_layer >= kTol) {
    ok = false;
  }

  // End-to-end: two-class model on 64x32 inputs, spot checks on the
  // largest-gradient coordinate of a rotating selection of parameters.
  ModelConfig cfg;
  cfg.n_classes = 2;
  cfg.input_h = 64;
  cfg.input_w = 32;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    BbnnModel model(cfg);
    Rng rng(seed);
    model.init_params(rng);
    Tensor x(2, 64, 32, 1);
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.0f, 1.0f);
    const std::vector<int> labels{0, 1};

    auto loss = [&] {
      BbnnModel::Cache cache;
      Tensor probs = model.forward_train(x, cache);
      return cross_entropy(probs, labels).loss;
    };

    BbnnModel::Cache cache;
    Tensor probs = model.forward_train(x, cache);
    CeResult ce = cross_entropy(probs, labels);
    model.zero_grads();
    model.backward(cache, ce.grad_logits);

    TensorRegistry reg = model.collect_tensors();
    const std::size_t n_params = reg.params.size();
    for (std::size_t j = 0; j < 4; ++j) {
      const ParamRef& p =
          reg.params[(static_cast<std::size_t>(seed - 1) * 4 + j) % n_params];
      std::int64_t pick = 0;
      for (std::int64_t i = 0; i < p.grad->size(); ++i) {
        if (std::fabs((*p.grad)[i]) > std::fabs((*p.grad)[pick])) pick = i;
      }
      const double rel =
          grad_probe(loss, &(*p.value)[pick], (*p.grad)[pick]);
      if (rel > worst_model) worst_model = rel;
      if (rel >= kTol) {
        ok = false;
        note("seed " + std::to_string(seed) + " " + p.name +
             ": relative error " + std::to_string(rel));
      }
    }
  }

  std::ostringstream os;
  os << "worst relative error: layers " << worst_layer << ", model "
     << worst_model << " (tolerance 1e-3)";
  note(os.str());
  return ok && within_budget(elapsed_since(t0), 300.0, "gradient checks");
}

bool check_training_protocol() {
  bool ok = true;

  PlateauScheduler halver(0.01, 0.5, 3, 1e-5);
  halver.observe(1.0);  // establishes the best
  halver.observe(1.0);
  halver.observe(1.0);
  const double after3 = halver.observe(1.0);  // third non-improving epoch
  if (after3 != 0.005) {
    ok = false;
    note("lr after 3 non-improving epochs: " + std::to_string(after3));
  }

  PlateauScheduler twice(0.01, 0.5, 3, 1e-5);
  for (int i = 0; i < 7; ++i) twice.observe(1.0);
  if (twice.lr() != 0.0025) {
    ok = false;
    note("lr after 7 flat epochs: " + std::to_string(twice.lr()));
  }

  PlateauScheduler keeps(0.01, 0.5, 3, 1e-5);
  keeps.observe(1.0);
  keeps.observe(0.9);
  keeps.observe(0.8);
  keeps.observe(0.7);
  if (keeps.lr() != 0.01) {
    ok = false;
    note("improving run still decayed the rate");
  }

  std::vector<double> flat(11, 1.0);
  if (!early_stop(flat, 10)) {
    ok = false;
    note("10 stale epochs did not stop");
  }
  std::vector<double> improving{1.0, 0.9, 0.8, 0.7};
  if (early_stop(improving, 10) ||
      early_stop(std::vector<double>(10, 1.0), 10)) {
    ok = false;
    note("early stop fired too soon");
  }

  for (std::int64_t C : {2, 10}) {
    Tensor probs(1, 1, 1, C, 1.0f / static_cast<float>(C));
    const double loss = cross_entropy(probs, {0}).loss;
    const double expect = std::log(static_cast<double>(C));
    if (std::fabs(loss - expect) > 1e-6) {
      ok = false;
      note("uniform " + std::to_string(C) + "-class loss " +
           std::to_string(loss) + " != ln C");
    }
  }
  return ok;
}

bool check_metric_formula() {
  struct Row {
    const char* name;
    double p, r, f;
  };
  // 31 class rows: reported precision, recall, f-score.
  const Row rows[] = {
      {"Blues", 90.8, 97.0, 93.8},      {"Classical", 98.9, 97.9, 98.4},
      {"Country", 89.8, 97.7, 93.6},    {"Disco", 98.2, 91.8, 94.9},
      {"Hip-hop", 93.0, 94.9, 93.9},    {"Jazz", 99.0, 99.0, 99.0},
      {"Metal", 86.1, 98.7, 92.0},      {"Pop", 94.3, 94.3, 94.3},
      {"Reggae", 94.2, 88.1, 91.1},     {"Rock", 93.3, 80.7, 86.6},
      {"ChaCha", 100.0, 96.2, 98.0},    {"Jive", 97.9, 94.1, 96.0},
      {"Quickstep", 96.4, 100.0, 98.1}, {"Rumba", 97.0, 94.2, 95.6},
      {"Samba", 95.0, 97.4, 96.2},      {"Tango", 98.8, 98.8, 98.8},
      {"VienneseWaltz", 98.5, 94.3, 96.4}, {"SlowWaltz", 94.3, 100.0, 97.0},
      {"ChaCha", 98.1, 98.5, 98.3},     {"Foxtrot", 98.8, 99.6, 99.2},
      {"Jive", 98.5, 99.4, 98.9},       {"Pasodoble", 96.0, 94.2, 95.1},
      {"Quickstep", 99.6, 99.0, 99.3},  {"Rumba", 96.7, 94.5, 95.6},
      {"Salsa", 94.9, 91.8, 93.3},      {"Samba", 97.5, 98.7, 98.1},
      {"SlowWalz", 80.7, 71.1, 75.6},   {"Tango", 99.0, 95.3, 97.1},
      {"VienneseWalz", 96.8, 97.7, 97.3}, {"Walz", 93.1, 98.1, 95.5},
      {"Wcswing", 78.5, 57.8, 66.6},
  };
  bool ok = true;
  int bad = 0;
  for (const auto& row : rows) {
    const double f = 2.0 * row.p * row.r / (row.p + row.r);
    const double dev = std::fabs(f - row.f);
    if (dev > 0.05) {
      ok = false;
      ++bad;
      std::ostringstream os;
      os.setf(std::ios::fixed);
      os.precision(3);
      os << row.name << ": P " << row.p << " R " << row.r << " gives F " << f
         << ", reported " << row.f << " (off by " << dev << ")";
      note(os.str());
    }
  }
  if (!ok) {
    note(std::to_string(bad) +
         " of 31 rows sit outside +-0.05 of the recomputed f-score; the "
         "reported columns round P and R independently, which can move the "
         "recomputed value by up to ~0.1.");
  }
  return ok;
}

bool check_fold_protocol() {
  std::vector<int> labels;
  for (int c = 0; c < 10; ++c) {
    for (int i = 0; i < 100; ++i) labels.push_back(c);
  }
  auto plans = make_folds(labels, 10, 2024);
  bool ok = plans.size() == 10;

  std::set<std::int64_t> all_test;
  for (const auto& plan : plans) {
    if (plan.train.size() != 800 || plan.val.size() != 100 ||
        plan.test.size() != 100) {
      ok = false;
      note("fold " + std::to_string(plan.fold) + " split " +
           std::to_string(plan.train.size()) + "/" +
           std::to_string(plan.val.size()) + "/" +
           std::to_string(plan.test.size()));
    }
    std::vector<int> per_class(10, 0);
    for (std::int64_t i : plan.test) {
      if (!all_test.insert(i).second) {
        ok = false;
        note("test sets overlap at sample " + std::to_string(i));
      }
      ++per_class[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < 10; ++c) {
      if (per_class[static_cast<std::size_t>(c)] != 10) {
        ok = false;
        note("fold " + std::to_string(plan.fold) + " class " +
             std::to_string(c) + " has " +
             std::to_string(per_class[static_cast<std::size_t>(c)]) +
             " test samples");
      }
    }
  }
  if (all_test.size() != labels.size()) {
    ok = false;
    note("test sets cover " + std::to_string(all_test.size()) + " of 1000");
  }
  return ok;
}

Dataset banded_dataset(int classes, std::int64_t per_class, std::int64_t bands,
                       std::uint64_t seed) {
  Dataset d;
  d.frames = 16;
  d.bands = bands;
  Rng rng(seed);
  for (int cls = 0; cls < classes; ++cls) {
    d.genres.push_back("class" + std::to_string(cls));
    for (std::int64_t i = 0; i < per_class; ++i) {
      std::vector<float> mel(static_cast<std::size_t>(d.frames * d.bands));
      for (std::int64_t t = 0; t < d.frames; ++t) {
        for (std::int64_t m = 0; m < d.bands; ++m) {
          const bool hot = m / 2 == cls;
          mel[static_cast<std::size_t>(t * d.bands + m)] =
              (hot ? 0.9f : 0.1f) + rng.uniform(-0.05f, 0.05f);
        }
      }
      d.mels.push_back(std::move(mel));
      d.labels.push_back(cls);
    }
  }
  return d;
}

bool check_learning() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;

  {  // overfit: 8 samples, 2 classes, training loss under 0.05
    Dataset d = banded_dataset(2, 4, 8, 77);
    ModelConfig mcfg;
    mcfg.n_classes = 2;
    mcfg.input_h = d.frames;
    mcfg.input_w = d.bands;
    mcfg.blocks = 1;
    TrainConfig tcfg;
    tcfg.seed = 42;
    tcfg.max_epochs = 200;
    tcfg.batch_size = 8;

    std::vector<std::int64_t> idx{0, 1, 2, 3, 4, 5, 6, 7};
    BbnnModel model(mcfg);
    Rng rng(tcfg.seed);
    model.init_params(rng);
    FitResult fr = fit(model, d, idx, idx, tcfg);
    double best_train = fr.logs.front().train_loss;
    for (const auto& log : fr.logs) {
      best_train = std::min(best_train, log.train_loss);
    }
    if (best_train >= 0.05) {
      ok = false;
      std::ostringstream os;
      os << "overfit floor " << best_train << " after " << fr.logs.size()
         << " epochs";
      note(os.str());
    }
  }

  {  // separable 5-class corpus cross-validates at 100%
    Dataset d = banded_dataset(5, 9, 10, 99);
    ModelConfig mcfg;
    mcfg.n_classes = 5;
    mcfg.input_h = d.frames;
    mcfg.input_w = d.bands;
    mcfg.blocks = 1;
    TrainConfig tcfg;
    tcfg.seed = 9;
    tcfg.max_epochs = 80;
    tcfg.batch_size = 5;
    CvReport report = cross_validate(d, mcfg, tcfg, 3);
    if (report.mean_accuracy != 100.0) {
      ok = false;
      std::ostringstream os;
      os << "mean cross-validation accuracy " << report.mean_accuracy << "%";
      note(os.str());
    }
  }
  return ok && within_budget(elapsed_since(t0), 600.0, "learning checks");
}

bool check_headline_scope() {
  // Benchmark-corpus accuracies need external data and long training runs;
  // criteria 1-9 stand in for them. When a corpus is supplied, the
  // cross-validation command must still run end to end.
  const char* root = std::getenv("BBNN_GTZAN");
  if (root == nullptr || !std::filesystem::exists(root)) {
    note("no external corpus supplied (set BBNN_GTZAN=<root> to exercise "
         "end-to-end cross-validation); headline accuracies are documented, "
         "not asserted");
    return true;
  }
  const std::filesystem::path work =
      std::filesystem::temp_directory_path() / "bbnn-acceptance-cv";
  std::filesystem::create_directories(work);
  const std::string cache = (work / "corpus.melc").string();
  const std::string out_dir = work.string();

  std::ostringstream out, err;
  {
    const char* argv[] = {"bbnn", "preprocess", "--corpus", root,
                          "--cache", cache.c_str()};
    if (run_cli(6, argv, out, err) != 0) {
      note("preprocess failed: " + err.str());
      return false;
    }
  }
  {
    const char* argv[] = {"bbnn", "cv", "--cache", cache.c_str(),
                          "--out", out_dir.c_str()};
    if (run_cli(6, argv, out, err) != 0) {
      note("cross-validation failed: " + err.str());
      return false;
    }
  }
  const bool ok = std::filesystem::exists(work / "cv_report.json") &&
                  std::filesystem::exists(work / "cv_report.csv");
  if (!ok) note("report files missing after cross-validation");
  note("external corpus run completed; accuracy intentionally not asserted");
  return ok;
}

}  // namespace

int main() {
  std::cout << "acceptance gate\n";
  criterion(1, "architecture table parameter counts (exact)",
            check_param_table);
  criterion(2, "stage output shapes on a 647x128 input (exact)", check_shapes);
  criterion(3, "dense channel growth 32+128*(l-1) for L=1..5 (exact)",
            check_channel_growth);
  criterion(4, "front-end emits 647x128 with repeat-frame padding (exact)",
            check_frontend_size);
  criterion(5, "finite-difference gradients, 20 seeds (rel err < 1e-3)",
            check_gradients);
  criterion(6, "plateau schedule, early stop, uniform loss ln C (1e-6)",
            check_training_protocol);
  criterion(7, "f-score column recomputes from P/R within +-0.05",
            check_metric_formula);
  criterion(8, "stratified 10-fold protocol on 1000x10 labels (exact)",
            check_fold_protocol);
  criterion(9, "overfit floor < 0.05 and separable CV at 100%",
            check_learning);
  criterion(10, "headline benchmark accuracies are out of scope",
            check_headline_scope);

  if (g_failures == 0) {
    std::cout << "all criteria passed\n";
    return 0;
  }
  std::cout << g_failures << (g_failures == 1 ? " criterion" : " criteria")
            << " failed\n";
  return 1;
}
