#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cascade/tensor.hpp"

namespace cascade {

/// Loss curve; one row per logged step.
struct TrainLog {
  std::vector<std::string> columns{"step", "loss"};
  std::vector<std::vector<double>> rows;
  void add(std::vector<double> row) { rows.push_back(std::move(row)); }
  void write_csv(const std::filesystem::path& path) const;
};

/// Called with (step, total, loss) at every logging step.
using ProgressFn = std::function<void(int, int, double)>;

/// Cosine decay from 1 to 0.05 with a short linear warmup.
float lr_factor(int step, int total, int warmup = 50);

/// Runs fn over [0, n) in chunks of at most `chunk`, handing (begin, end).
void for_chunks(int n, int chunk, const std::function<void(int, int)>& fn);

/// Rows [begin, end) of a batched tensor.
Tensor slice_batch(const Tensor& t, int begin, int end);
/// Concatenates batches along N.
Tensor concat_batch(const std::vector<Tensor>& parts);

}  // namespace cascade
