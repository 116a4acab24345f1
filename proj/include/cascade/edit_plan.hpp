#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace cascade {

enum class EditOp { Insert, Delete, Substitute };

std::string to_string(EditOp op);
EditOp parse_edit_op(const std::string& name);

/// One requested edit. interval is inclusive, in original-clip frame indices.
/// Inserts go between interval.first and interval.first + 1 and require
/// interval.first == interval.second.
struct EditSpec {
  EditOp op = EditOp::Substitute;
  int start = 0;
  int end = 0;
  int new_len = 0;
  std::uint64_t seed = 0;
};

/// Resolved edit: anchors are original indices of the last kept frame before
/// and the first kept frame after the generated segment.
struct EditPlan {
  EditOp op = EditOp::Substitute;
  int start = 0;
  int end = 0;
  int anchor_before = 0;
  int anchor_after = 0;
  int bs = 0;
  int original_length = 0;
  int output_length = 0;
  /// (original index, output index) for every unedited frame, increasing.
  std::vector<std::pair<int, int>> output_index_map;

  /// Output index of the first generated frame.
  int generated_begin() const { return anchor_before + 1; }
  int anchor_before_output() const { return anchor_before; }
  int anchor_after_output() const { return anchor_before + 1 + bs; }
  /// Output index for original index, or -1 if the frame was removed.
  int output_index(int original) const;
};

EditPlan plan_edit(int clip_len, const EditSpec& spec);

nlohmann::json to_json(const EditPlan& plan);
EditPlan edit_plan_from_json(const nlohmann::json& j);

}  // namespace cascade
