#include "cascade/edit_plan.hpp"

#include <stdexcept>

namespace cascade {

std::string to_string(EditOp op) {
  switch (op) {
    case EditOp::Insert: return "insert";
    case EditOp::Delete: return "delete";
    case EditOp::Substitute: return "substitute";
  }
  return "?";
}

EditOp parse_edit_op(const std::string& name) {
  if (name == "insert") return EditOp::Insert;
  if (name == "delete") return EditOp::Delete;
  if (name == "substitute") return EditOp::Substitute;
  throw std::invalid_argument("unknown edit op '" + name + "'");
}

int EditPlan::output_index(int original) const {
  if (original <= anchor_before) return original;
  if (original >= anchor_after) return anchor_after_output() + (original - anchor_after);
  return -1;
}

EditPlan plan_edit(int clip_len, const EditSpec& spec) {
  if (spec.new_len < 0) throw std::invalid_argument("new_len must be >= 0");
  if (spec.start <= 0 || spec.end < spec.start || spec.end >= clip_len - 1) {
    throw std::invalid_argument(
        "edit interval (" + std::to_string(spec.start) + "," +
        std::to_string(spec.end) + ") needs anchor frames on both sides in a clip of " +
        std::to_string(clip_len) + " frames");
  }
  EditPlan p;
  p.op = spec.op;
  p.start = spec.start;
  p.end = spec.end;
  p.original_length = clip_len;
  int removed = 0;
  switch (spec.op) {
    case EditOp::Insert:
      if (spec.end != spec.start) {
        throw std::invalid_argument("insert takes a single position (start == end)");
      }
      p.anchor_before = spec.start;
      p.anchor_after = spec.start + 1;
      p.bs = spec.new_len;
      break;
    case EditOp::Delete:
      if (spec.new_len != 0) throw std::invalid_argument("delete takes new_len = 0");
      p.anchor_before = spec.start - 1;
      p.anchor_after = spec.end + 1;
      p.bs = 0;
      removed = spec.end - spec.start + 1;
      break;
    case EditOp::Substitute:
      p.anchor_before = spec.start - 1;
      p.anchor_after = spec.end + 1;
      p.bs = spec.new_len;
      removed = spec.end - spec.start + 1;
      break;
  }
  p.output_length = clip_len - removed + p.bs;
  for (int i = 0; i < clip_len; ++i) {
    const int o = p.output_index(i);
    if (o >= 0) p.output_index_map.emplace_back(i, o);
  }
  return p;
}

nlohmann::json to_json(const EditPlan& plan) {
  return {{"op", to_string(plan.op)},
          {"start", plan.start},
          {"end", plan.end},
          {"anchor_before", plan.anchor_before},
          {"anchor_after", plan.anchor_after},
          {"bs", plan.bs},
          {"original_length", plan.original_length},
          {"output_length", plan.output_length},
          {"output_index_map", plan.output_index_map}};
}

EditPlan edit_plan_from_json(const nlohmann::json& j) {
  EditPlan p;
  p.op = parse_edit_op(j.at("op").get<std::string>());
  p.start = j.at("start");
  p.end = j.at("end");
  p.anchor_before = j.at("anchor_before");
  p.anchor_after = j.at("anchor_after");
  p.bs = j.at("bs");
  p.original_length = j.at("original_length");
  p.output_length = j.at("output_length");
  p.output_index_map = j.at("output_index_map").get<std::vector<std::pair<int, int>>>();
  return p;
}

}  // namespace cascade
