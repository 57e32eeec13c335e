#include "safereg/hsic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "safereg/error.hpp"

namespace safereg {

double median_heuristic(const Eigen::Ref<const Eigen::MatrixXd>& x) {
  const auto n = x.rows();
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (x.row(i) - x.row(j)).norm();
      if (d > 0) dists.push_back(d);
    }
  if (dists.empty()) return 1.0;
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid;
}

Eigen::MatrixXd centered_gram(const Eigen::Ref<const Eigen::MatrixXd>& x) {
  const auto n = x.rows();
  const double bw = median_heuristic(x);
  const double inv = 1.0 / (2.0 * bw * bw);
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = std::exp(-(x.row(i) - x.row(j)).squaredNorm() * inv);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  // H K H with H = I - 11^T / n, via row/column mean removal.
  const Eigen::VectorXd row_mean = k.rowwise().mean();
  const double total_mean = row_mean.mean();
  k.colwise() -= row_mean;
  k.rowwise() -= row_mean.transpose();
  k.array() += total_mean;
  return k;
}

double hsic_statistic(const Eigen::Ref<const Eigen::VectorXd>& x,
                      const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "hsic inputs differ in length");
  const auto n = static_cast<double>(x.size());
  const Eigen::MatrixXd kc = centered_gram(x);
  const Eigen::MatrixXd lc = centered_gram(y);
  return kc.cwiseProduct(lc).sum() / (n * n);
}

HsicResult hsic_test(const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& y, std::size_t permutations,
                     std::uint64_t seed) {
  if (x.size() != y.size())
    throw Error(ErrorCode::LengthMismatch, "hsic inputs have " + std::to_string(x.size()) +
                                               " and " + std::to_string(y.size()) + " samples");
  if (x.size() < 10) throw Error(ErrorCode::TooFewSamples, "hsic needs at least 10 samples");
  if (permutations < 100) throw Error(ErrorCode::TooFewSamples, "hsic needs at least 100 permutations");

  const auto n = x.size();
  const double nn = static_cast<double>(n) * static_cast<double>(n);
  const Eigen::MatrixXd kc = centered_gram(x);
  // Permuting y permutes rows and columns of the centered L alike.
  const Eigen::MatrixXd lc = centered_gram(y);

  HsicResult result;
  result.statistic = kc.cwiseProduct(lc).sum() / nn;

  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::size_t exceed = 0;
  for (std::size_t p = 0; p < permutations; ++p) {
    std::shuffle(perm.begin(), perm.end(), rng);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto pj = perm[static_cast<std::size_t>(j)];
      for (Eigen::Index i = 0; i < n; ++i) acc += kc(i, j) * lc(perm[static_cast<std::size_t>(i)], pj);
    }
    if (acc / nn >= result.statistic) ++exceed;
  }
  result.p_value = static_cast<double>(exceed + 1) / static_cast<double>(permutations + 1);
  return result;
}

}  // namespace safereg
