#include "dbea/matching.hpp"

#include <algorithm>
#include <limits>

#include "dbea/errors.hpp"

namespace dbea {

// Shortest augmenting path with row/column potentials, O(cols^2 * rows). Columns (ground truth)
// are inserted one at a time and each is routed to a free row.
std::vector<int> hungarian_assign(const Matrix& cost) {
  const int n_rows = static_cast<int>(cost.rows());
  const int n_cols = static_cast<int>(cost.cols());
  if (n_cols > n_rows) throw ConfigError("hungarian: more ground truths than queries");
  if (n_cols == 0) return {};
  if (!cost.allFinite()) throw DataError("hungarian: non-finite cost");

  const double inf = std::numeric_limits<double>::infinity();
  // 1-based internal indexing; index 0 is the virtual source.
  std::vector<double> u(static_cast<std::size_t>(n_cols) + 1, 0.0), v(static_cast<std::size_t>(n_rows) + 1, 0.0);
  std::vector<int> owner(static_cast<std::size_t>(n_rows) + 1, 0);  // column owning each row
  std::vector<int> way(static_cast<std::size_t>(n_rows) + 1, 0);

  for (int c = 1; c <= n_cols; ++c) {
    owner[0] = c;
    int r0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n_rows) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n_rows) + 1, 0);
    do {
      used[static_cast<std::size_t>(r0)] = 1;
      const int c0 = owner[static_cast<std::size_t>(r0)];
      double delta = inf;
      int r1 = 0;
      for (int r = 1; r <= n_rows; ++r) {
        if (used[static_cast<std::size_t>(r)]) continue;
        const double cur = cost(r - 1, c0 - 1) - u[static_cast<std::size_t>(c0)] - v[static_cast<std::size_t>(r)];
        if (cur < minv[static_cast<std::size_t>(r)]) {
          minv[static_cast<std::size_t>(r)] = cur;
          way[static_cast<std::size_t>(r)] = r0;
        }
        if (minv[static_cast<std::size_t>(r)] < delta) {
          delta = minv[static_cast<std::size_t>(r)];
          r1 = r;
        }
      }
      for (int r = 0; r <= n_rows; ++r) {
        if (used[static_cast<std::size_t>(r)]) {
          u[static_cast<std::size_t>(owner[static_cast<std::size_t>(r)])] += delta;
          v[static_cast<std::size_t>(r)] -= delta;
        } else {
          minv[static_cast<std::size_t>(r)] -= delta;
        }
      }
      r0 = r1;
    } while (owner[static_cast<std::size_t>(r0)] != 0);
    do {
      const int r1 = way[static_cast<std::size_t>(r0)];
      owner[static_cast<std::size_t>(r0)] = owner[static_cast<std::size_t>(r1)];
      r0 = r1;
    } while (r0 != 0);
  }

  std::vector<int> row_for_col(static_cast<std::size_t>(n_cols), -1);
  for (int r = 1; r <= n_rows; ++r) {
    const int c = owner[static_cast<std::size_t>(r)];
    if (c > 0) row_for_col[static_cast<std::size_t>(c - 1)] = r - 1;
  }
  return row_for_col;
}

Matrix match_cost(const FusedDetections& det, const std::vector<SceneObject>& gt, const MatchCostWeights& w) {
  const Eigen::Index q = det.size();
  Matrix cost(q, static_cast<Eigen::Index>(gt.size()));
  for (Eigen::Index r = 0; r < q; ++r) {
    const Box pb = det.box(r);
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const int cls = gt[g].class_id;
      if (cls < 0 || cls >= det.class_probs.cols()) throw ShapeError("ground-truth class outside the logit range");
      cost(r, static_cast<Eigen::Index>(g)) = w.w_cls * (1.0 - det.class_probs(r, cls)) +
                                              w.w_l1 * l1_distance(pb, gt[g].box) +
                                              w.w_giou * (1.0 - giou(pb, gt[g].box));
    }
  }
  return cost;
}

MatchAssignment assignment_from_columns(int num_queries, const std::vector<int>& row_for_col) {
  MatchAssignment m;
  m.gt_for_query.assign(static_cast<std::size_t>(num_queries), -1);
  for (std::size_t g = 0; g < row_for_col.size(); ++g) {
    const int r = row_for_col[g];
    if (r < 0 || r >= num_queries) throw ShapeError("assignment row out of range");
    if (m.gt_for_query[static_cast<std::size_t>(r)] >= 0) throw ShapeError("assignment is not injective");
    m.gt_for_query[static_cast<std::size_t>(r)] = static_cast<int>(g);
  }
  for (int q = 0; q < num_queries; ++q) {
    const int g = m.gt_for_query[static_cast<std::size_t>(q)];
    if (g >= 0) {
      m.pairs.emplace_back(q, g);
    } else {
      m.unmatched_queries.push_back(q);
    }
  }
  return m;
}

MatchAssignment hungarian_match(const FusedDetections& det, const std::vector<SceneObject>& gt,
                                const MatchCostWeights& w) {
  if (static_cast<Eigen::Index>(gt.size()) > det.size()) {
    throw ConfigError("hungarian_match: " + std::to_string(gt.size()) + " ground truths but only " +
                      std::to_string(det.size()) + " queries");
  }
  return assignment_from_columns(static_cast<int>(det.size()), hungarian_assign(match_cost(det, gt, w)));
}

}  // namespace dbea
