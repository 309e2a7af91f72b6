// Timing harness: OpenMP kernels vs the serial reference implementation on
// the tensor shapes the network actually sees.  Conv results should be
// bit-identical (same accumulation order); pools and GAP within float noise.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bbnn/kernels.hpp"
#include "bbnn/reference.hpp"
#include "bbnn/rng.hpp"

using namespace bbnn;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch())
      .count();
}

double time_best_of(int reps, const std::function<void()>& fn) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now_ms();
    fn();
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  float m = 0.0f;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::fabs(a[i] - b[i]));
  }
  return m;
}

void fill_random(Tensor& t, Rng& rng) {
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
}

void report(const char* label, double serial_ms, double parallel_ms, float dmax) {
  std::printf(
      "%-28s serial %9.2f ms   parallel %9.2f ms   speedup %5.2fx   max|d| %.3g\n",
      label, serial_ms, parallel_ms, serial_ms / parallel_ms, dmax);
}

void bench_conv(const char* label, Shape4 in_shape, std::int64_t kh,
                std::int64_t kw, std::int64_t c_out, Rng& rng, int reps) {
  Tensor x(in_shape);
  fill_random(x, rng);
  ConvKernel k(kh, kw, in_shape.c, c_out, 1, 1);
  k.init_he_uniform(rng);

  Tensor fast;
  const double tp = time_best_of(reps, [&] { fast = conv2d(x, k); });

  ref::Grid<float> gx = ref::from_tensor<float>(x);
  ref::Grid<float> gw = ref::from_tensor<float>(k.w);
  ref::Grid<float> gb = ref::from_tensor<float>(k.b);
  ref::Grid<float> slow;
  const double ts = time_best_of(reps, [&] { slow = ref::conv2d(gx, gw, gb, 1, 1); });

  report(label, ts, tp, max_abs_diff(fast, ref::to_tensor(slow)));
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP: not enabled\n");
#endif
  Rng rng(20240915);
  const int reps = 3;

  // The shapes below mirror the forward pass on one 647x128 clip.
  bench_conv("conv 3x3 647x128x1->32", Shape4{1, 647, 128, 1}, 3, 3, 32, rng, reps);
  bench_conv("conv 1x1 161x128x160->32", Shape4{1, 161, 128, 160}, 1, 1, 32, rng, reps);
  bench_conv("conv 3x3 161x128x32->32", Shape4{1, 161, 128, 32}, 3, 3, 32, rng, reps);
  bench_conv("conv 5x5 161x128x32->32", Shape4{1, 161, 128, 32}, 5, 5, 32, rng, reps);
  bench_conv("conv 1x1 161x128x416->32", Shape4{1, 161, 128, 416}, 1, 1, 32, rng, reps);

  {
    Tensor x(1, 647, 128, 32);
    fill_random(x, rng);
    Tensor fast;
    const double tp =
        time_best_of(reps, [&] { fast = maxpool2d(x, 4, 1, 4, 1, PoolPad::valid); });
    ref::Grid<float> gx = ref::from_tensor<float>(x);
    ref::Grid<float> slow;
    const double ts =
        time_best_of(reps, [&] { slow = ref::maxpool(gx, 4, 1, 4, 1, false); });
    report("maxpool 4x1 647x128x32", ts, tp, max_abs_diff(fast, ref::to_tensor(slow)));
  }
  {
    Tensor x(1, 161, 128, 416);
    fill_random(x, rng);
    Tensor fast;
    const double tp =
        time_best_of(reps, [&] { fast = maxpool2d(x, 3, 3, 1, 1, PoolPad::same); });
    ref::Grid<float> gx = ref::from_tensor<float>(x);
    ref::Grid<float> slow;
    const double ts =
        time_best_of(reps, [&] { slow = ref::maxpool(gx, 3, 3, 1, 1, true); });
    report("maxpool 3x3/1 161x128x416", ts, tp,
           max_abs_diff(fast, ref::to_tensor(slow)));
  }
  {
    Tensor x(1, 161, 128, 32);
    fill_random(x, rng);
    Tensor fast;
    const double tp =
        time_best_of(reps, [&] { fast = avgpool2d(x, 2, 2, 2, 2); });
    ref::Grid<float> gx = ref::from_tensor<float>(x);
    ref::Grid<float> slow;
    const double ts = time_best_of(reps, [&] { slow = ref::avgpool(gx, 2, 2, 2, 2); });
    report("avgpool 2x2 161x128x32", ts, tp, max_abs_diff(fast, ref::to_tensor(slow)));
  }
  {
    Tensor x(8, 80, 64, 32);
    fill_random(x, rng);
    Tensor fast;
    const double tp = time_best_of(reps, [&] { fast = global_avg_pool(x); });
    ref::Grid<float> gx = ref::from_tensor<float>(x);
    ref::Grid<float> slow;
    const double ts = time_best_of(reps, [&] { slow = ref::global_avg_pool(gx); });
    report("GAP 8x80x64x32", ts, tp, max_abs_diff(fast, ref::to_tensor(slow)));
  }
  return 0;
}
