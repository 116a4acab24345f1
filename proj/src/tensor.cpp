#include "cascade/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace cascade {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
         std::to_string(h) + "," + std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw std::invalid_argument("tensor data size does not match shape " +
                                shape_.str());
  }
}

Tensor Tensor::sample(int n) const {
  if (n < 0 || n >= shape_.n) throw std::out_of_range("sample index");
  Shape s{1, shape_.c, shape_.h, shape_.w};
  Tensor out(s);
  std::memcpy(out.data(), data_.data() + static_cast<std::size_t>(n) * s.numel(),
              s.numel() * sizeof(float));
  return out;
}

Tensor Tensor::reshaped(Shape s) const {
  if (s.numel() != shape_.numel()) {
    throw std::invalid_argument("reshape " + shape_.str() + " -> " + s.str());
  }
  return Tensor(s, data_);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::stack(std::span<const Tensor> items) {
  if (items.empty()) return {};
  Shape s = items.front().shape();
  const std::size_t per = s.numel();
  int total = 0;
  for (const auto& t : items) {
    if (t.shape().c != s.c || t.shape().h != s.h || t.shape().w != s.w) {
      throw std::invalid_argument("stack: shape mismatch");
    }
    total += t.shape().n;
  }
  Tensor out({total, s.c, s.h, s.w});
  std::size_t off = 0;
  for (const auto& t : items) {
    std::memcpy(out.data() + off, t.data(), t.size() * sizeof(float));
    off += t.size();
  }
  (void)per;
  return out;
}

namespace {
void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape().str() + " vs " + b.shape().str());
  }
}
}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor operator*(const Tensor& a, float s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  }
  return m;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.vec().begin(), t.vec().end(),
                     [](float v) { return std::isfinite(v); });
}

}  // namespace cascade
