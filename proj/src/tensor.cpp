#include "bbnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace bbnn {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(h) + "," +
         std::to_string(w) + "," + std::to_string(c) + ")";
}

Tensor::Tensor(Shape4 s, float fill) : shape_(s) {
  if (s.n < 0 || s.h < 0 || s.w < 0 || s.c < 0) {
    throw ShapeError("negative tensor dimension " + s.str());
  }
  data_.assign(static_cast<std::size_t>(s.numel()), fill);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::same_bytes(const Tensor& other) const {
  return shape_ == other.shape_ &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(),
                      data_.size() * sizeof(float)) == 0);
}

void require_same_shape(const char* what, const Shape4& a, const Shape4& b) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() +
                     " vs " + b.str());
  }
}

void add_inplace(Tensor& dst, const Tensor& src) {
  require_same_shape("add_inplace", dst.shape(), src.shape());
  float* d = dst.data();
  const float* s = src.data();
  const std::int64_t sz = dst.size();
  for (std::int64_t i = 0; i < sz; ++i) d[i] += s[i];
}

}  // namespace bbnn
