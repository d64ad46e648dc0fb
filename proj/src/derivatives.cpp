#include "orbitstab/derivatives.hpp"

namespace orbitstab {

Eigen::VectorXd partial_central4(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, int i, double h) {
  Eigen::VectorXd xp = x;
  xp(i) = x(i) + h;
  Eigen::VectorXd f1 = f(xp);
  xp(i) = x(i) - h;
  Eigen::VectorXd fm1 = f(xp);
  xp(i) = x(i) + 2.0 * h;
  Eigen::VectorXd f2 = f(xp);
  xp(i) = x(i) - 2.0 * h;
  Eigen::VectorXd fm2 = f(xp);
  return (8.0 * (f1 - fm1) - (f2 - fm2)) / (12.0 * h);
}

Eigen::MatrixXd jacobian_central4(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& x, double h) {
  if (h <= 0.0) h = fd_step(x);
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  for (int i = 0; i < x.size(); ++i) J.col(i) = partial_central4(f, x, i, h);
  return J;
}

Eigen::VectorXd gradient_central4(const std::function<double(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& x, double h) {
  auto wrapped = [&f](const Eigen::VectorXd& p) {
    Eigen::VectorXd v(1);
    v(0) = f(p);
    return v;
  };
  if (h <= 0.0) h = fd_step(x);
  Eigen::VectorXd g(x.size());
  for (int i = 0; i < x.size(); ++i) g(i) = partial_central4(wrapped, x, i, h)(0);
  return g;
}

Eigen::MatrixXd hessian_central2(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd H(n, n);
  const double f0 = f(x);
  Eigen::VectorXd xp = x;
  for (int i = 0; i < n; ++i) {
    xp = x;
    xp(i) = x(i) + h;
    const double fp = f(xp);
    xp(i) = x(i) - h;
    const double fm = f(xp);
    H(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
    for (int j = i + 1; j < n; ++j) {
      xp = x;
      xp(i) = x(i) + h;
      xp(j) = x(j) + h;
      const double fpp = f(xp);
      xp(j) = x(j) - h;
      const double fpm = f(xp);
      xp(i) = x(i) - h;
      const double fmm = f(xp);
      xp(j) = x(j) + h;
      const double fmp = f(xp);
      H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
    }
  }
  return 0.5 * (H + H.transpose());
}

}  // namespace orbitstab
