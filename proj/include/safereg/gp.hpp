#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "safereg/error.hpp"

namespace safereg {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// k(u, v) = s(u) s(v) exp(-|u - v|^2 / (2 l^2)); points live in the unit box.
template <typename Scalar>
class PriorScaledKernel {
 public:
  using StdFn = std::function<Scalar(const Eigen::Ref<const Vec<Scalar>>&)>;

  PriorScaledKernel(StdFn sigma, Scalar lengthscale = Scalar(1))
      : sigma_(std::move(sigma)), lengthscale_(lengthscale) {}

  Scalar sigma(const Eigen::Ref<const Vec<Scalar>>& u) const { return sigma_(u); }
  Scalar lengthscale() const noexcept { return lengthscale_; }

  Scalar correlation(const Eigen::Ref<const Vec<Scalar>>& u, const Eigen::Ref<const Vec<Scalar>>& v) const {
    return std::exp(-(u - v).squaredNorm() / (Scalar(2) * lengthscale_ * lengthscale_));
  }

  Scalar operator()(const Eigen::Ref<const Vec<Scalar>>& u, const Eigen::Ref<const Vec<Scalar>>& v) const {
    return sigma(u) * sigma(v) * correlation(u, v);
  }

  /// Cross-covariance between the rows of `a` and `b`, given their prior stds.
  Mat<Scalar> cross(const Mat<Scalar>& a, const Vec<Scalar>& sa, const Mat<Scalar>& b,
                    const Vec<Scalar>& sb) const {
    const Scalar inv = Scalar(1) / (Scalar(2) * lengthscale_ * lengthscale_);
    Mat<Scalar> k(a.rows(), b.rows());
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      for (Eigen::Index i = 0; i < a.rows(); ++i)
        k(i, j) = sa(i) * sb(j) * std::exp(-(a.row(i) - b.row(j)).squaredNorm() * inv);
    return k;
  }

 private:
  StdFn sigma_;
  Scalar lengthscale_;
};

template <typename Scalar>
struct Observation {
  Vec<Scalar> point;
  Scalar value;
  Scalar noise_std;
};

template <typename Scalar>
struct Posterior {
  Vec<Scalar> mean;
  Vec<Scalar> variance;
};

/// Exact GP regression with heteroscedastic noise. Value type: update() returns a new
/// process and leaves the original untouched.
template <typename Scalar>
class GaussianProcess {
 public:
  using MeanFn = std::function<Scalar(const Eigen::Ref<const Vec<Scalar>>&)>;

  static constexpr Scalar initial_jitter = Scalar(1e-10);
  static constexpr Scalar max_jitter = Scalar(1e-4);

  GaussianProcess(MeanFn mean, PriorScaledKernel<Scalar> kernel)
      : mean_(std::move(mean)), kernel_(std::move(kernel)) {}

  GaussianProcess(MeanFn mean, PriorScaledKernel<Scalar> kernel, std::vector<Observation<Scalar>> obs)
      : mean_(std::move(mean)), kernel_(std::move(kernel)), obs_(std::move(obs)) {
    refactor();
  }

  const std::vector<Observation<Scalar>>& observations() const noexcept { return obs_; }
  const PriorScaledKernel<Scalar>& kernel() const noexcept { return kernel_; }
  const MeanFn& mean_fn() const noexcept { return mean_; }
  Scalar prior_mean(const Eigen::Ref<const Vec<Scalar>>& u) const { return mean_(u); }
  Scalar prior_std(const Eigen::Ref<const Vec<Scalar>>& u) const { return kernel_.sigma(u); }
  Scalar jitter() const noexcept { return jitter_; }

  /// Mean and variance at each row of `query`; variances are floored at zero.
  Posterior<Scalar> posterior(const Mat<Scalar>& query) const {
    const auto q = query.rows();
    Vec<Scalar> prior_m(q), prior_s(q);
    for (Eigen::Index i = 0; i < q; ++i) {
      prior_m(i) = mean_(query.row(i).transpose());
      prior_s(i) = kernel_.sigma(query.row(i).transpose());
    }
    return posterior(query, prior_m, prior_s);
  }

  /// Same, with the prior mean/std at the query points supplied by the caller.
  Posterior<Scalar> posterior(const Mat<Scalar>& query, const Vec<Scalar>& prior_m,
                              const Vec<Scalar>& prior_s) const {
    Posterior<Scalar> out{prior_m, prior_s.array().square().matrix()};
    if (obs_.empty()) return out;
    const Mat<Scalar> cross = kernel_.cross(points_, obs_std_, query, prior_s);  // n x q
    out.mean.noalias() += cross.transpose() * alpha_;
    const Mat<Scalar> v = llt_.matrixL().solve(cross);
    out.variance -= v.colwise().squaredNorm().transpose();
    out.variance = out.variance.cwiseMax(Scalar(0));
    return out;
  }

  template <typename S>
  friend GaussianProcess<S> update(const GaussianProcess<S>& gp, const Vec<S>& point, S value, S noise_std);

 private:
  void refactor() {
    const auto n = static_cast<Eigen::Index>(obs_.size());
    const auto d = obs_.empty() ? Eigen::Index{0} : obs_.front().point.size();
    points_.resize(n, d);
    obs_std_.resize(n);
    Vec<Scalar> residual(n), noise_var(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& o = obs_[static_cast<std::size_t>(i)];
      points_.row(i) = o.point.transpose();
      obs_std_(i) = kernel_.sigma(o.point);
      residual(i) = o.value - mean_(o.point);
      noise_var(i) = o.noise_std * o.noise_std;
    }
    if (n == 0) return;

    Mat<Scalar> k = kernel_.cross(points_, obs_std_, points_, obs_std_);
    k.diagonal() += noise_var;
    // A well-conditioned matrix (no pivot collapses relative to the diagonal) is factorized
    // as is; otherwise escalate the diagonal jitter.
    llt_.compute(k);
    if (llt_.info() == Eigen::Success && llt_.matrixLLT().allFinite() &&
        llt_.matrixLLT().diagonal().array().square().minCoeff() >= Scalar(1e-8) * k.diagonal().maxCoeff()) {
      jitter_ = Scalar(0);
      alpha_ = llt_.solve(residual);
      return;
    }
    for (Scalar jitter = initial_jitter; jitter <= max_jitter * Scalar(1.0001); jitter *= Scalar(10)) {
      Mat<Scalar> kj = k;
      kj.diagonal().array() += jitter;
      llt_.compute(kj);
      if (llt_.info() == Eigen::Success && llt_.matrixLLT().diagonal().minCoeff() > Scalar(0) &&
          llt_.matrixLLT().allFinite()) {
        jitter_ = jitter;
        alpha_ = llt_.solve(residual);
        return;
      }
    }
    throw Error(ErrorCode::SingularFactorization,
                "covariance of " + std::to_string(n) + " observations is singular even with jitter 1e-4");
  }

  MeanFn mean_;
  PriorScaledKernel<Scalar> kernel_;
  std::vector<Observation<Scalar>> obs_;
  Mat<Scalar> points_;
  Vec<Scalar> obs_std_;
  Eigen::LLT<Mat<Scalar>> llt_;
  Vec<Scalar> alpha_;
  Scalar jitter_ = Scalar(0);
};

template <typename Scalar>
Posterior<Scalar> posterior(const GaussianProcess<Scalar>& gp, const Mat<Scalar>& query) {
  return gp.posterior(query);
}

/// Bayes-rule update with one more observation. Throws NonFiniteValue.
template <typename Scalar>
GaussianProcess<Scalar> update(const GaussianProcess<Scalar>& gp, const Vec<Scalar>& point, Scalar value,
                               Scalar noise_std) {
  if (!std::isfinite(value) || !point.allFinite())
    throw Error(ErrorCode::NonFiniteValue, "observation must be finite");
  if (!(noise_std >= Scalar(0)) || !std::isfinite(noise_std))
    throw Error(ErrorCode::NonFiniteValue, "noise std must be finite and nonnegative");
  auto obs = gp.obs_;
  obs.push_back({point, value, noise_std});
  return GaussianProcess<Scalar>(gp.mean_, gp.kernel_, std::move(obs));
}

/// Keeps only the most recent `window` observations (all of them when window == 0).
template <typename Scalar>
GaussianProcess<Scalar> retain_recent(const GaussianProcess<Scalar>& gp, std::size_t window) {
  const auto& all = gp.observations();
  if (window == 0 || all.size() <= window) return gp;
  std::vector<Observation<Scalar>> kept(all.end() - static_cast<std::ptrdiff_t>(window), all.end());
  return GaussianProcess<Scalar>(gp.mean_fn(), gp.kernel(), std::move(kept));
}

/// 0.5 ln det(I + K / noise^2). Throws NotPSD if K has an eigenvalue below -1e-8.
template <typename Derived>
typename Derived::Scalar information_gain(const Eigen::MatrixBase<Derived>& k, typename Derived::Scalar noise) {
  using Scalar = typename Derived::Scalar;
  if (k.rows() != k.cols()) throw Error(ErrorCode::NotPSD, "kernel matrix is not square");
  if (k.rows() == 0) return Scalar(0);
  const Mat<Scalar> sym = (k + k.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> eig(sym, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < Scalar(-1e-8))
    throw Error(ErrorCode::NotPSD, "kernel matrix has a negative eigenvalue");
  const Scalar inv = Scalar(1) / (noise * noise);
  return Scalar(0.5) * (Scalar(1) + eig.eigenvalues().array().max(Scalar(0)) * inv).log().sum();
}

enum class ConfidenceMode { theoretical, practical };

struct ConfidenceParams {
  double rkhs_bound = 1.0;
  double alpha = 0.8;
  double noise_bound = 0.25;
  ConfidenceMode mode = ConfidenceMode::practical;
  double beta_sqrt = 2.0;
};

/// Theoretical: 2 B^2 + 300 gamma_t ln^3(t / (1 - alpha)), with the cube term 0 when the
/// log argument is <= 1. Practical: beta_sqrt^2. Throws InvalidStep for t < 1.
template <typename Scalar = double>
Scalar beta(std::size_t t, const ConfidenceParams& params, Scalar gamma_t) {
  if (params.mode == ConfidenceMode::practical) return Scalar(params.beta_sqrt * params.beta_sqrt);
  if (t < 1) throw Error(ErrorCode::InvalidStep, "theoretical beta needs t >= 1");
  const Scalar b = Scalar(params.rkhs_bound);
  const Scalar arg = Scalar(t) / Scalar(1 - params.alpha);
  const Scalar lg = arg > Scalar(1) ? std::log(arg) : Scalar(0);
  return Scalar(2) * b * b + Scalar(300) * gamma_t * lg * lg * lg;
}

template <typename Scalar>
Scalar kappa(Scalar beta_t, Scalar variance) {
  return std::sqrt(beta_t) * std::sqrt(std::max(variance, Scalar(0)));
}

template <typename Scalar>
nlohmann::json gp_to_json(const GaussianProcess<Scalar>& gp) {
  nlohmann::json obs = nlohmann::json::array();
  for (const auto& o : gp.observations()) {
    std::vector<double> p(o.point.data(), o.point.data() + o.point.size());
    obs.push_back({{"point", p}, {"value", double(o.value)}, {"noise_std", double(o.noise_std)}});
  }
  return {{"lengthscale", double(gp.kernel().lengthscale())},
          {"jitter", double(gp.jitter())},
          {"observations", obs}};
}

}  // namespace safereg
