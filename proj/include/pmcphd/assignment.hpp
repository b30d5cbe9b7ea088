#pragma once

#include <vector>

#include <Eigen/Dense>

namespace pmcphd {

struct Assignment {
  std::vector<int> row_to_col;  // one column per row
  double cost = 0.0;
};

/// Exact minimum-cost assignment of every row to a distinct column for a
/// rows <= cols cost matrix (Hungarian method with potentials, O(rows^2 cols)).
Assignment solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace pmcphd
