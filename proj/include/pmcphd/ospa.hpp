#pragma once

#include <vector>

#include <Eigen/Dense>

namespace pmcphd {

struct OspaParams {
  double cutoff = 100.0;
  double order = 1.0;

  void validate() const;
};

/// OSPA distance between two finite sets of equal-dimension vectors.
/// Two empty sets are at distance 0; the result always lies in [0, cutoff].
double ospa_distance(const std::vector<Eigen::VectorXd>& x, const std::vector<Eigen::VectorXd>& y,
                     const OspaParams& params);

}  // namespace pmcphd
