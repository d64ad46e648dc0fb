#ifndef ORBITSTAB_FOURIER_HPP_
#define ORBITSTAB_FOURIER_HPP_

#include <Eigen/Core>

#include <functional>
#include <vector>

namespace orbitstab {

/// Trigonometric interpolant of a vector-valued periodic function sampled on a
/// uniform grid t_k = k*T/K, k = 0..K-1.  The interpolant passes through the
/// samples to machine precision and is exactly T-periodic, so it can be
/// differentiated spectrally.
class TrigInterpolant {
 public:
  TrigInterpolant() = default;

  /// samples: dim x K matrix, column k = value at t_k = k*period/K.
  static TrigInterpolant fit(const Eigen::MatrixXd& samples, double period);

  Eigen::VectorXd operator()(double t) const { return evaluate(t, 0); }
  Eigen::VectorXd derivative(double t) const { return evaluate(t, 1); }
  Eigen::VectorXd second_derivative(double t) const { return evaluate(t, 2); }

  double period() const { return period_; }
  int dim() const { return static_cast<int>(cos_coef_.rows()); }
  int sample_count() const { return sample_count_; }
  bool empty() const { return sample_count_ == 0; }

 private:
  Eigen::VectorXd evaluate(double t, int deriv_order) const;

  // cos_coef_.col(j), sin_coef_.col(j) multiply cos(j*w*t), sin(j*w*t).
  Eigen::MatrixXd cos_coef_;
  Eigen::MatrixXd sin_coef_;
  double period_ = 0.0;
  int sample_count_ = 0;
};

/// Periodic matrix-valued function A(t) stored as node values on a uniform
/// grid plus a trigonometric interpolant of the entries.
class PeriodicMatrix {
 public:
  PeriodicMatrix() = default;

  static PeriodicMatrix fit(const std::vector<Eigen::MatrixXd>& node_values, double period);
  static PeriodicMatrix from_function(const std::function<Eigen::MatrixXd(double)>& fn,
                                      int rows, int cols, double period, int nodes);

  Eigen::MatrixXd operator()(double t) const;
  Eigen::MatrixXd derivative(double t) const;
  Eigen::MatrixXd second_derivative(double t) const;

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double period() const { return interp_.period(); }
  int node_count() const { return interp_.sample_count(); }
  double node_time(int k) const;
  const Eigen::MatrixXd& node_value(int k) const { return node_values_[static_cast<size_t>(k)]; }
  const std::vector<Eigen::MatrixXd>& node_values() const { return node_values_; }
  bool empty() const { return interp_.empty(); }

  std::function<Eigen::MatrixXd(double)> as_function() const;

 private:
  TrigInterpolant interp_;
  std::vector<Eigen::MatrixXd> node_values_;
  int rows_ = 0;
  int cols_ = 0;
};

}  // namespace orbitstab

#endif  // ORBITSTAB_FOURIER_HPP_
