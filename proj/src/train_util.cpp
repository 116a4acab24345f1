#include "cascade/train_util.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "cascade/io.hpp"

namespace cascade {

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ostringstream os;
  os.precision(9);
  for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
  os << "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << "\n";
  }
  io::write_text(path, os.str());
}

float lr_factor(int step, int total, int warmup) {
  if (step < warmup) return static_cast<float>(step + 1) / warmup;
  const double p = std::clamp(static_cast<double>(step - warmup) / std::max(1, total - warmup), 0.0, 1.0);
  return static_cast<float>(0.05 + 0.95 * 0.5 * (1.0 + std::cos(std::numbers::pi * p)));
}

void for_chunks(int n, int chunk, const std::function<void(int, int)>& fn) {
  for (int b = 0; b < n; b += chunk) fn(b, std::min(n, b + chunk));
}

Tensor slice_batch(const Tensor& t, int begin, int end) {
  Shape s = t.shape();
  if (begin < 0 || end > s.n || begin > end) throw std::out_of_range("slice_batch");
  const std::size_t per = s.c * s.plane();
  s.n = end - begin;
  return Tensor(s, std::vector<float>(t.vec().begin() + begin * per, t.vec().begin() + end * per));
}

Tensor concat_batch(const std::vector<Tensor>& parts) {
  if (parts.empty()) return {};
  Shape s = parts[0].shape();
  s.n = 0;
  std::vector<float> data;
  for (const auto& p : parts) {
    if (p.shape().c != s.c || p.shape().h != s.h || p.shape().w != s.w) {
      throw std::invalid_argument("concat_batch: shape mismatch");
    }
    s.n += p.shape().n;
    data.insert(data.end(), p.vec().begin(), p.vec().end());
  }
  return Tensor(s, std::move(data));
}

}  // namespace cascade
