#include "orbitstab/ode.hpp"

#include "orbitstab/errors.hpp"

#include <algorithm>
#include <cmath>

namespace orbitstab {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
constexpr double kB5[7] = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0};
constexpr double kB4[7] = {5179.0 / 57600, 0.0,           7571.0 / 16695, 393.0 / 640,
                           -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};

double error_norm(const Eigen::VectorXd& err, const Eigen::VectorXd& y0, const Eigen::VectorXd& y1,
                  double atol, double rtol) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double scale = atol + rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    const double e = err(i) / scale;
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

}  // namespace

OdeResult integrate_dopri(const OdeRhs& rhs, double t0, const Eigen::VectorXd& y0,
                          const std::vector<double>& sample_times, const IntegrateOptions& opts) {
  if (sample_times.empty()) throw std::invalid_argument("integrate_dopri: no sample times");
  const double dir = sample_times.back() >= t0 ? 1.0 : -1.0;
  for (size_t i = 0; i < sample_times.size(); ++i) {
    const double prev = i == 0 ? t0 : sample_times[i - 1];
    if (dir * (sample_times[i] - prev) < 0.0)
      throw std::invalid_argument("integrate_dopri: sample times not monotone");
  }

  OdeResult out;
  out.times.reserve(sample_times.size());
  out.states.reserve(sample_times.size());

  double t = t0;
  Eigen::VectorXd y = y0;
  Eigen::VectorXd k[7];
  k[0] = rhs(t, y);
  if (!k[0].allFinite()) throw IntegrationFailure("integrate_dopri: non-finite RHS at start");

  const double span = std::abs(sample_times.back() - t0);
  double h = dir * std::min(opts.max_step, std::max(1e-8, 1e-3 * span));
  long steps = 0;

  for (double t_out : sample_times) {
    if (out.stopped) break;
    while (dir * (t_out - t) > 0.0) {
      if (++steps > opts.max_steps)
        throw IntegrationFailure("integrate_dopri: exceeded max step count");
      if (std::abs(h) > opts.max_step) h = dir * opts.max_step;
      bool clipped = false;
      if (dir * (t + h - t_out) > 0.0) {
        h = t_out - t;
        clipped = true;
      }
      if (std::abs(h) < 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t)))
        throw IntegrationFailure("integrate_dopri: step size collapsed at t=" + std::to_string(t));

      for (int s = 1; s < 7; ++s) {
        Eigen::VectorXd ys = y;
        for (int j = 0; j < s; ++j) ys += h * kA[s][j] * k[j];
        k[s] = rhs(t + kC[s] * h, ys);
      }
      Eigen::VectorXd y5 = y;
      Eigen::VectorXd err = Eigen::VectorXd::Zero(y.size());
      for (int s = 0; s < 7; ++s) {
        if (kB5[s] != 0.0) y5 += h * kB5[s] * k[s];
        err += h * (kB5[s] - kB4[s]) * k[s];
      }

      if (!y5.allFinite()) {
        h *= 0.5;
        continue;
      }
      const double en = error_norm(err, y, y5, opts.abs_tol, opts.rel_tol);
      if (en <= 1.0) {
        t = clipped ? t_out : t + h;
        y = std::move(y5);
        k[0] = k[6];  // FSAL
        if (opts.stop && opts.stop(t, y)) {
          out.stopped = true;
          out.times.push_back(t);
          out.states.push_back(y);
          break;
        }
      }
      const double factor = en > 0.0 ? 0.9 * std::pow(en, -0.2) : 5.0;
      h *= std::clamp(factor, 0.2, 5.0);
    }
    if (out.stopped) break;
    out.times.push_back(t_out);
    out.states.push_back(y);
  }
  out.steps = steps;
  return out;
}

Eigen::VectorXd integrate_to(const OdeRhs& rhs, double t0, const Eigen::VectorXd& y0, double t1,
                             const IntegrateOptions& opts) {
  if (t1 == t0) return y0;
  return integrate_dopri(rhs, t0, y0, {t1}, opts).back();
}

}  // namespace orbitstab
