#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cascade/config.hpp"
#include "cascade/edit_plan.hpp"
#include "cascade/synthdata.hpp"

namespace cascade::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kDependency = 3,
  kDivergence = 4,
  kIo = 5,
};

/// Parses argv-style arguments (without the program name) and runs one
/// subcommand. Errors are printed to err and mapped onto exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

DatasetOptions dataset_options(const RunConfig& cfg);

/// Builds the dataset under cfg.data_dir and returns its manifest.
DatasetManifest cmd_gen_data(const RunConfig& cfg);

/// Trains one stage ("ae", "stage1", "warp", "stage2") and returns the
/// checkpoint path. Writes <stage>.loss.csv and <stage>.config.json beside it.
/// variant only matters for stage2; non-default variants get their own file.
std::filesystem::path cmd_train(const std::string& stage, const RunConfig& cfg,
                                const std::string& variant = "full",
                                std::ostream* progress = nullptr);

struct EditRequest {
  std::filesystem::path clip;
  std::filesystem::path ckpt_dir;
  std::filesystem::path out;
  EditSpec spec;
  /// Also render the synthetic ground truth of the edit here.
  std::optional<std::filesystem::path> reference_out;
};

std::filesystem::path cmd_edit(const RunConfig& cfg, const EditRequest& req);

/// Writes report.json, report.txt and config.json into out and returns the
/// report path. The edited clip must carry edit_plan.json.
std::filesystem::path cmd_eval(const RunConfig& cfg, const std::filesystem::path& edited,
                               const std::filesystem::path& reference,
                               const std::filesystem::path& ckpt_dir,
                               const std::filesystem::path& out);

/// Seed from CASCADE_EDIT_SEED, or fallback when unset.
std::uint64_t env_seed(std::uint64_t fallback);

}  // namespace cascade::cli
