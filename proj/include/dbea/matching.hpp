#pragma once

#include <utility>
#include <vector>

#include "dbea/model.hpp"
#include "dbea/tensor.hpp"
#include "dbea/world.hpp"

namespace dbea {

struct MatchAssignment {
  std::vector<std::pair<int, int>> pairs;  // (query, ground truth), sorted by query
  std::vector<int> unmatched_queries;      // ascending
  std::vector<int> gt_for_query;           // per query: matched gt index or -1

  bool is_matched(int query) const { return gt_for_query[static_cast<std::size_t>(query)] >= 0; }
};

struct MatchCostWeights {
  double w_cls = 2.0;
  double w_l1 = 5.0;
  double w_giou = 2.0;
};

// Minimum-cost assignment of every column (ground truth) to a distinct row (query) of a
// rows x cols cost matrix with rows >= cols. Returns, per column, the chosen row.
std::vector<int> hungarian_assign(const Matrix& cost);

// cost(q, g) = w_cls * (1 - prob_q[class_g]) + w_l1 * L1(box_q, box_g) + w_giou * (1 - GIoU(box_q, box_g))
Matrix match_cost(const FusedDetections& det, const std::vector<SceneObject>& gt, const MatchCostWeights& w);

MatchAssignment hungarian_match(const FusedDetections& det, const std::vector<SceneObject>& gt,
                                const MatchCostWeights& w);

MatchAssignment assignment_from_columns(int num_queries, const std::vector<int>& row_for_col);

}  // namespace dbea
