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

// Gaussian-process regression with a Matern-5/2 ARD kernel.

#ifndef TASKSTREAM_GP_HPP_
#define TASKSTREAM_GP_HPP_

#include <Eigen/Dense>
#include <optional>

namespace taskstream {

struct GpHyperparameters {
  Eigen::VectorXd log_lengthscales;
  double log_signal_variance = 0.0;
};

// Matern-5/2 covariance between the rows of `a` and `b`.
Eigen::MatrixXd matern52(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                         const GpHyperparameters& h);

class GaussianProcess {
 public:
  struct Options {
    double noise_variance = 1e-10;
    int fit_iterations = 150;
    double fit_step = 0.05;
    double min_log_lengthscale = -4.6;  // ~0.01
    double max_log_lengthscale = 2.3;   // ~10
    bool fit = true;
  };

  GaussianProcess() = default;
  explicit GaussianProcess(Options options) : options_(options) {}

  // Fits on rows of `x` against `y`; outputs are standardised internally.
  // Returns false when no stable factorisation was found.
  bool fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

  // Posterior mean and standard deviation in the original output units.
  void predict(const Eigen::MatrixXd& x, Eigen::VectorXd& mean, Eigen::VectorXd& stddev) const;

  double log_marginal_likelihood() const { return lml_; }
  const GpHyperparameters& hyperparameters() const { return hyper_; }

 private:
  bool factorize();

  Options options_;
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;  // standardised
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  double jitter_ = 0.0;
  GpHyperparameters hyper_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double lml_ = 0.0;
};

}  // namespace taskstream

#endif  // TASKSTREAM_GP_HPP_
