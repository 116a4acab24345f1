#include <doctest.h>

#include "cascade/edit_plan.hpp"
#include "cascade/rng.hpp"

using namespace cascade;

TEST_SUITE("edit_plan") {
  TEST_CASE("delete splices the interval out") {
    const auto p = plan_edit(50, {EditOp::Delete, 10, 19, 0, 1});
    CHECK(p.anchor_before == 9);
    CHECK(p.anchor_after == 20);
    CHECK(p.bs == 0);
    CHECK(p.output_length == 40);
    CHECK(p.output_index(9) == 9);
    CHECK(p.output_index(20) == 10);
    CHECK(p.output_index(15) == -1);
  }

  TEST_CASE("substitute with a longer segment") {
    const auto p = plan_edit(50, {EditOp::Substitute, 10, 19, 15, 1});
    CHECK(p.bs == 15);
    CHECK(p.output_length == 55);
    CHECK(p.anchor_before == 9);
    CHECK(p.anchor_after == 20);
    CHECK(p.anchor_after_output() == 25);
  }

  TEST_CASE("insert between two frames") {
    const auto p = plan_edit(50, {EditOp::Insert, 10, 10, 5, 1});
    CHECK(p.anchor_before == 10);
    CHECK(p.anchor_after == 11);
    CHECK(p.output_length == 55);
    CHECK(p.generated_begin() == 11);
    CHECK(p.output_index(11) == 16);
  }

  TEST_CASE("edits without anchors on both sides are rejected") {
    CHECK_THROWS_AS(plan_edit(50, {EditOp::Delete, 0, 5, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(plan_edit(50, {EditOp::Substitute, 40, 49, 3, 0}), std::invalid_argument);
    CHECK_THROWS_AS(plan_edit(50, {EditOp::Substitute, 12, 11, 3, 0}), std::invalid_argument);
    CHECK_THROWS_AS(plan_edit(50, {EditOp::Substitute, 10, 12, -1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(plan_edit(50, {EditOp::Insert, 10, 12, 3, 0}), std::invalid_argument);
    CHECK_THROWS_AS(plan_edit(50, {EditOp::Delete, 10, 12, 3, 0}), std::invalid_argument);
    CHECK_THROWS_AS(parse_edit_op("swap"), std::invalid_argument);
  }

  TEST_CASE("length law and index map over random edits") {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = rng.integer(5, 80);
      EditSpec s;
      s.op = static_cast<EditOp>(rng.integer(0, 2));
      s.start = rng.integer(1, n - 2);
      s.end = s.op == EditOp::Insert ? s.start : rng.integer(s.start, n - 2);
      s.new_len = s.op == EditOp::Delete ? 0 : rng.integer(0, 20);
      const auto p = plan_edit(n, s);
      const int removed = s.op == EditOp::Insert ? 0 : s.end - s.start + 1;
      CHECK(p.output_length == n - removed + s.new_len);
      CHECK(static_cast<int>(p.output_index_map.size()) == n - removed);
      for (std::size_t k = 1; k < p.output_index_map.size(); ++k)
        CHECK(p.output_index_map[k].second > p.output_index_map[k - 1].second);
      CHECK(p.output_index_map.back().second == p.output_length - 1);
    }
  }

  TEST_CASE("plan json round trip") {
    const auto p = plan_edit(30, {EditOp::Substitute, 4, 9, 7, 5});
    const auto q = edit_plan_from_json(to_json(p));
    CHECK(q.op == p.op);
    CHECK(q.bs == p.bs);
    CHECK(q.output_length == p.output_length);
    CHECK(q.output_index_map == p.output_index_map);
  }
}
