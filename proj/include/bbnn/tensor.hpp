#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bbnn {

struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Unusable input data: bad file formats, undecodable audio, corrupt caches.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required (e.g. NaN training loss).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// (batch, time, frequency, channels), matching the row-major storage order.
struct Shape4 {
  std::int64_t n = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::int64_t c = 0;

  std::int64_t numel() const { return n * h * w * c; }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

// Dense rank-4 float tensor, contiguous row-major in (N,H,W,C) order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape4 s, float fill = 0.0f);
  Tensor(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c,
         float fill = 0.0f)
      : Tensor(Shape4{n, h, w, c}, fill) {}

  const Shape4& shape() const { return shape_; }
  std::int64_t n() const { return shape_.n; }
  std::int64_t h() const { return shape_.h; }
  std::int64_t w() const { return shape_.w; }
  std::int64_t c() const { return shape_.c; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  std::int64_t index(std::int64_t n, std::int64_t h, std::int64_t w,
                     std::int64_t c) const {
    return ((n * shape_.h + h) * shape_.w + w) * shape_.c + c;
  }
  float& at(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) {
    return data_[static_cast<std::size_t>(index(n, h, w, c))];
  }
  float at(std::int64_t n, std::int64_t h, std::int64_t w, std::int64_t c) const {
    return data_[static_cast<std::size_t>(index(n, h, w, c))];
  }

  void fill(float v);
  bool all_finite() const;

  bool same_bytes(const Tensor& other) const;

 private:
  Shape4 shape_{};
  std::vector<float> data_;
};

// Throws ShapeError unless both shapes match; `what` names the operation.
void require_same_shape(const char* what, const Shape4& a, const Shape4& b);

// dst += src, elementwise; shapes must match.
void add_inplace(Tensor& dst, const Tensor& src);

}  // namespace bbnn
