#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "bbnn/rng.hpp"
#include "bbnn/tensor.hpp"

namespace testutil {

inline void fill_uniform(bbnn::Tensor& t, bbnn::Rng& rng, float lo = -1.0f,
                         float hi = 1.0f) {
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
}

// |a-b| / max(1, |a|, |b|), worst element.
inline double max_rel_diff(const bbnn::Tensor& a, const bbnn::Tensor& b) {
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double da = a[i], db = b[i];
    const double denom = std::max({1.0, std::fabs(da), std::fabs(db)});
    worst = std::max(worst, std::fabs(da - db) / denom);
  }
  return worst;
}

inline double max_abs_diff(const bbnn::Tensor& a, const bbnn::Tensor& b) {
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::fabs(static_cast<double>(a[i]) - b[i]));
  }
  return worst;
}

// Unique scratch directory, removed when the object dies.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           (tag + "-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

}  // namespace testutil
