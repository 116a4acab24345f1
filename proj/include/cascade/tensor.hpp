#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cascade {

/// Four-dimensional NCHW shape. Vectors are stored as {n, c, 1, 1}.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

/// Dense float32 NCHW array with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f)
      : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> span() { return data_; }
  std::span<const float> span() const { return data_; }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(int n, int c, int y, int x) {
    return data_[index(n, c, y, x)];
  }
  float at(int n, int c, int y, int x) const {
    return data_[index(n, c, y, x)];
  }

  /// Pointer to the (n, c) plane.
  float* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const float* plane(int n, int c) const {
    return data_.data() + index(n, c, 0, 0);
  }

  /// Copy of sample n as a batch-of-one tensor.
  Tensor sample(int n) const;
  /// Same data, different shape with equal element count.
  Tensor reshaped(Shape s) const;

  void fill(float v);
  void zero() { fill(0.0f); }

  static Tensor stack(std::span<const Tensor> items);

 private:
  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) *
               shape_.w +
           x;
  }

  Shape shape_{};
  std::vector<float> data_;
};

/// Element-wise helpers used outside the autograd graph.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, float s);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

}  // namespace cascade
