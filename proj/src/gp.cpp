// Copyright 2026 The taskstream Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "taskstream/gp.hpp"

#include <cmath>
#include <numbers>

namespace taskstream {

namespace {
const double kSqrt5 = std::sqrt(5.0);
}

Eigen::MatrixXd matern52(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                         const GpHyperparameters& h) {
  const Eigen::RowVectorXd inv_l = (-h.log_lengthscales.array()).exp().matrix().transpose();
  const Eigen::MatrixXd as = a.array().rowwise() * inv_l.array();
  const Eigen::MatrixXd bs = b.array().rowwise() * inv_l.array();
  const double s2 = std::exp(h.log_signal_variance);
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const double r = (as.row(i) - bs.row(j)).norm();
      k(i, j) = s2 * (1.0 + kSqrt5 * r + 5.0 / 3.0 * r * r) * std::exp(-kSqrt5 * r);
    }
  return k;
}

bool GaussianProcess::factorize() {
  const Eigen::Index n = x_.rows();
  Eigen::MatrixXd k = matern52(x_, x_, hyper_);
  for (double jitter = options_.noise_variance; jitter < 1.0; jitter *= 10.0) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    llt_.compute(kj);
    if (llt_.info() == Eigen::Success && llt_.matrixL().toDenseMatrix().diagonal().minCoeff() > 0) {
      jitter_ = jitter;
      alpha_ = llt_.solve(y_);
      const double log_det = 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
      lml_ = -0.5 * y_.dot(alpha_) - 0.5 * log_det -
             0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
      return std::isfinite(lml_);
    }
  }
  return false;
}

bool GaussianProcess::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() == 0 || x.rows() != y.size()) return false;
  x_ = x;
  y_mean_ = y.mean();
  const double var = (y.array() - y_mean_).square().mean();
  y_scale_ = var > 1e-24 ? std::sqrt(var) : 1.0;
  y_ = (y.array() - y_mean_) / y_scale_;
  hyper_.log_lengthscales = Eigen::VectorXd::Constant(x.cols(), std::log(0.5));
  hyper_.log_signal_variance = 0.0;
  if (!factorize()) return false;
  if (!options_.fit || x.rows() < 2) return true;

  // Gradient ascent on the log marginal likelihood in log-parameter space.
  const Eigen::Index n = x_.rows(), d = x_.cols();
  GpHyperparameters best = hyper_;
  double best_lml = lml_;
  for (int it = 0; it < options_.fit_iterations; ++it) {
    const Eigen::MatrixXd kinv = llt_.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd inner = alpha_ * alpha_.transpose() - kinv;
    const Eigen::VectorXd inv_l = (-hyper_.log_lengthscales.array()).exp();
    const double s2 = std::exp(hyper_.log_signal_variance);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
    double grad_s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::VectorXd scaled =
            ((x_.row(i) - x_.row(j)).transpose().array() * inv_l.array()).matrix();
        const double r = scaled.norm();
        const double e = std::exp(-kSqrt5 * r);
        const double kij = s2 * (1.0 + kSqrt5 * r + 5.0 / 3.0 * r * r) * e;
        const double common = s2 * 5.0 / 3.0 * (1.0 + kSqrt5 * r) * e;
        grad += 0.5 * inner(i, j) * common * scaled.array().square().matrix();
        grad_s += 0.5 * inner(i, j) * kij;
      }
    const GpHyperparameters prev = hyper_;
    const double norm = std::max(1.0, std::sqrt(grad.squaredNorm() + grad_s * grad_s));
    hyper_.log_lengthscales =
        (hyper_.log_lengthscales + options_.fit_step * grad / norm)
            .cwiseMax(options_.min_log_lengthscale)
            .cwiseMin(options_.max_log_lengthscale);
    hyper_.log_signal_variance =
        std::clamp(hyper_.log_signal_variance + options_.fit_step * grad_s / norm, -4.0, 4.0);
    if (!factorize()) {
      hyper_ = prev;
      break;
    }
    if (lml_ > best_lml) {
      best_lml = lml_;
      best = hyper_;
    }
  }
  hyper_ = best;
  return factorize();
}

void GaussianProcess::predict(const Eigen::MatrixXd& x, Eigen::VectorXd& mean,
                              Eigen::VectorXd& stddev) const {
  const Eigen::MatrixXd ks = matern52(x, x_, hyper_);
  mean = (ks * alpha_).array() * y_scale_ + y_mean_;
  const Eigen::MatrixXd v = llt_.matrixL().solve(ks.transpose());
  const double s2 = std::exp(hyper_.log_signal_variance);
  const Eigen::VectorXd var = (s2 - v.colwise().squaredNorm().transpose().array()).max(0.0);
  stddev = var.array().sqrt() * y_scale_;
}

}  // namespace taskstream
