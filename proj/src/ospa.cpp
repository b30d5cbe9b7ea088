#include "pmcphd/ospa.hpp"

#include <algorithm>
#include <cmath>

#include "pmcphd/assignment.hpp"
#include "pmcphd/errors.hpp"

namespace pmcphd {

namespace {

bool vector_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

// Orders equal-size sets so that ospa(X, Y) and ospa(Y, X) run the solver on
// the same cost matrix and agree bit for bit.
bool canonically_less(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b) {
  auto sa = a;
  auto sb = b;
  std::sort(sa.begin(), sa.end(), vector_less);
  std::sort(sb.begin(), sb.end(), vector_less);
  return std::lexicographical_compare(sa.begin(), sa.end(), sb.begin(), sb.end(), vector_less);
}

}  // namespace

void OspaParams::validate() const {
  if (!(cutoff > 0.0) || !std::isfinite(cutoff)) throw ConfigError("OSPA cutoff must be positive");
  if (!(order >= 1.0) || !std::isfinite(order)) throw ConfigError("OSPA order must be >= 1");
}

double ospa_distance(const std::vector<Eigen::VectorXd>& x, const std::vector<Eigen::VectorXd>& y,
                     const OspaParams& params) {
  params.validate();
  bool x_first = x.size() < y.size() || (x.size() == y.size() && !canonically_less(y, x));
  const auto& small = x_first ? x : y;
  const auto& large = x_first ? y : x;
  const std::size_t m = small.size();
  const std::size_t n = large.size();
  if (n == 0) return 0.0;
  const Eigen::Index dim = large.front().size();
  for (const auto& v : x) {
    if (v.size() != dim) throw DimensionError("ospa_distance: dimension mismatch");
  }
  for (const auto& v : y) {
    if (v.size() != dim) throw DimensionError("ospa_distance: dimension mismatch");
  }
  const double c = params.cutoff;
  const double p = params.order;
  double localisation = 0.0;
  if (m > 0) {
    Eigen::MatrixXd cost(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double d = std::min(c, (small[i] - large[j]).norm());
        cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::pow(d, p);
      }
    }
    localisation = solve_assignment(cost).cost;
  }
  const double cardinality = std::pow(c, p) * static_cast<double>(n - m);
  const double d = std::pow((localisation + cardinality) / static_cast<double>(n), 1.0 / p);
  return std::min(d, c);
}

}  // namespace pmcphd
