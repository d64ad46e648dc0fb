#include "orbitstab/fourier.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace orbitstab {

TrigInterpolant TrigInterpolant::fit(const Eigen::MatrixXd& samples, double period) {
  const int dim = static_cast<int>(samples.rows());
  const int K = static_cast<int>(samples.cols());
  if (dim < 1 || K < 2) throw std::invalid_argument("TrigInterpolant::fit: need at least 2 samples");
  if (!(period > 0.0)) throw std::invalid_argument("TrigInterpolant::fit: period must be positive");

  const int M = K / 2;  // highest retained mode
  TrigInterpolant out;
  out.period_ = period;
  out.sample_count_ = K;
  out.cos_coef_ = Eigen::MatrixXd::Zero(dim, M + 1);
  out.sin_coef_ = Eigen::MatrixXd::Zero(dim, M + 1);

  // Direct DFT; K is small enough that O(K^2) is irrelevant here.
  const double w0 = 2.0 * std::numbers::pi / static_cast<double>(K);
  for (int j = 0; j <= M; ++j) {
    Eigen::VectorXd cj = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd sj = Eigen::VectorXd::Zero(dim);
    for (int k = 0; k < K; ++k) {
      const double ang = w0 * static_cast<double>(j) * static_cast<double>(k);
      cj += std::cos(ang) * samples.col(k);
      sj += std::sin(ang) * samples.col(k);
    }
    double scale = 2.0 / static_cast<double>(K);
    if (j == 0 || (K % 2 == 0 && j == M)) scale = 1.0 / static_cast<double>(K);
    out.cos_coef_.col(j) = scale * cj;
    out.sin_coef_.col(j) = scale * sj;
  }
  if (K % 2 == 0) out.sin_coef_.col(M).setZero();  // Nyquist sine vanishes at the nodes
  return out;
}

Eigen::VectorXd TrigInterpolant::evaluate(double t, int deriv_order) const {
  if (sample_count_ == 0) throw std::logic_error("TrigInterpolant: not fitted");
  // Wrap the phase first: this makes the interpolant bitwise T-periodic and
  // keeps the mode recurrence accurate far outside [0, T).
  t -= period_ * std::floor(t / period_);
  const int M = static_cast<int>(cos_coef_.cols()) - 1;
  const double w = 2.0 * std::numbers::pi / period_;
  const double c1 = std::cos(w * t);
  const double s1 = std::sin(w * t);

  Eigen::VectorXd y = Eigen::VectorXd::Zero(cos_coef_.rows());
  double cj = 1.0;  // cos(j w t), starting at j = 0
  double sj = 0.0;
  for (int j = 0; j <= M; ++j) {
    const double jw = static_cast<double>(j) * w;
    double cw, sw;  // weights of the cos/sin coefficient columns
    switch (deriv_order) {
      case 0: cw = cj;            sw = sj;            break;
      case 1: cw = -jw * sj;      sw = jw * cj;       break;
      case 2: cw = -jw * jw * cj; sw = -jw * jw * sj; break;
      default:
        throw std::invalid_argument("TrigInterpolant: derivative order must be 0..2");
    }
    if (cw != 0.0) y += cw * cos_coef_.col(j);
    if (sw != 0.0) y += sw * sin_coef_.col(j);
    const double cn = cj * c1 - sj * s1;  // angle-addition recurrence
    sj = sj * c1 + cj * s1;
    cj = cn;
  }
  return y;
}

PeriodicMatrix PeriodicMatrix::fit(const std::vector<Eigen::MatrixXd>& node_values, double period) {
  if (node_values.size() < 2) throw std::invalid_argument("PeriodicMatrix::fit: need at least 2 nodes");
  PeriodicMatrix out;
  out.rows_ = static_cast<int>(node_values.front().rows());
  out.cols_ = static_cast<int>(node_values.front().cols());
  out.node_values_ = node_values;

  Eigen::MatrixXd flat(out.rows_ * out.cols_, static_cast<Eigen::Index>(node_values.size()));
  for (size_t k = 0; k < node_values.size(); ++k) {
    if (node_values[k].rows() != out.rows_ || node_values[k].cols() != out.cols_)
      throw std::invalid_argument("PeriodicMatrix::fit: inconsistent node shapes");
    flat.col(static_cast<Eigen::Index>(k)) =
        Eigen::Map<const Eigen::VectorXd>(node_values[k].data(), out.rows_ * out.cols_);
  }
  out.interp_ = TrigInterpolant::fit(flat, period);
  return out;
}

PeriodicMatrix PeriodicMatrix::from_function(const std::function<Eigen::MatrixXd(double)>& fn,
                                             int rows, int cols, double period, int nodes) {
  std::vector<Eigen::MatrixXd> values;
  values.reserve(static_cast<size_t>(nodes));
  for (int k = 0; k < nodes; ++k) {
    Eigen::MatrixXd v = fn(period * static_cast<double>(k) / static_cast<double>(nodes));
    if (v.rows() != rows || v.cols() != cols)
      throw std::invalid_argument("PeriodicMatrix::from_function: wrong shape from evaluator");
    values.push_back(std::move(v));
  }
  return fit(values, period);
}

Eigen::MatrixXd PeriodicMatrix::operator()(double t) const {
  Eigen::VectorXd flat = interp_(t);
  return Eigen::Map<const Eigen::MatrixXd>(flat.data(), rows_, cols_);
}

Eigen::MatrixXd PeriodicMatrix::derivative(double t) const {
  Eigen::VectorXd flat = interp_.derivative(t);
  return Eigen::Map<const Eigen::MatrixXd>(flat.data(), rows_, cols_);
}

Eigen::MatrixXd PeriodicMatrix::second_derivative(double t) const {
  Eigen::VectorXd flat = interp_.second_derivative(t);
  return Eigen::Map<const Eigen::MatrixXd>(flat.data(), rows_, cols_);
}

double PeriodicMatrix::node_time(int k) const {
  return period() * static_cast<double>(k) / static_cast<double>(node_count());
}

std::function<Eigen::MatrixXd(double)> PeriodicMatrix::as_function() const {
  return [self = *this](double t) { return self(t); };
}

}  // namespace orbitstab
