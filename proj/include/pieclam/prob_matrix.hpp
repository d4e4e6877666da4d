#pragma once

#include <Eigen/Dense>

namespace pieclam {

/// Symmetric matrix of independent Bernoulli edge probabilities with a zero
/// diagonal. Construction validates shape, range and symmetry.
class ProbMatrix {
 public:
  ProbMatrix() = default;
  explicit ProbMatrix(Eigen::MatrixXd values);

  static ProbMatrix zeros(int n) { return ProbMatrix(Eigen::MatrixXd::Zero(n, n)); }

  int size() const noexcept { return static_cast<int>(values_.rows()); }
  const Eigen::MatrixXd& values() const noexcept { return values_; }
  double operator()(int n, int m) const { return values_(n, m); }

 private:
  Eigen::MatrixXd values_;
};

}  // namespace pieclam
