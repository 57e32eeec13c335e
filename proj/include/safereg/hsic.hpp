#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace safereg {

struct HsicResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Median pairwise distance of the rows of `x` (zero distances excluded); 1 if degenerate.
double median_heuristic(const Eigen::Ref<const Eigen::MatrixXd>& x);

/// Centered Gaussian Gram matrix H K H for the rows of `x`, median-heuristic bandwidth.
Eigen::MatrixXd centered_gram(const Eigen::Ref<const Eigen::MatrixXd>& x);

/// Biased HSIC estimate trace(K H L H) / n^2.
double hsic_statistic(const Eigen::Ref<const Eigen::VectorXd>& x,
                      const Eigen::Ref<const Eigen::VectorXd>& y);

/// Permutation test of independence. p-value = (1 + #{perm >= observed}) / (permutations + 1).
/// Throws LengthMismatch, TooFewSamples (n < 10 or permutations < 100).
HsicResult hsic_test(const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& y, std::size_t permutations,
                     std::uint64_t seed = 0);

}  // namespace safereg
