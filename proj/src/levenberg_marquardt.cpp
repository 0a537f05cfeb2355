#include "beable/levenberg_marquardt.hpp"

#include <algorithm>
#include <cmath>

namespace beable {

LmResult levenberg_marquardt(const ResidualFunction& fn, Eigen::VectorXd x0,
                             const LmOptions& options) {
  LmResult out;
  out.x = std::move(x0);
  const Eigen::Index n = out.x.size();

  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  fn(out.x, r, &jac);
  const Eigen::Index m = r.size();
  out.cost = 0.5 * r.squaredNorm();
  if (!std::isfinite(out.cost)) return out;

  Eigen::VectorXd scale = jac.colwise().norm().transpose();
  double mu = options.initial_damping;
  double nu = 2.0;
  Eigen::MatrixXd augmented(m + n, n);
  Eigen::VectorXd rhs(m + n);
  Eigen::VectorXd r_trial;

  for (out.iterations = 0; out.iterations < options.max_iterations; ++out.iterations) {
    const Eigen::VectorXd grad = jac.transpose() * r;
    if (grad.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance || out.cost == 0.0) {
      out.converged = true;
      break;
    }
    for (Eigen::Index k = 0; k < n; ++k)
      scale[k] = std::max({scale[k], jac.col(k).norm(), 1e-300});

    augmented.topRows(m) = jac;
    augmented.bottomRows(n) = (std::sqrt(mu) * scale).asDiagonal();
    rhs.head(m) = -r;
    rhs.tail(n).setZero();
    const Eigen::VectorXd dx = augmented.colPivHouseholderQr().solve(rhs);
    if (!dx.allFinite()) break;

    if (dx.norm() <= options.step_tolerance * (out.x.norm() + options.step_tolerance)) {
      out.converged = true;
      break;
    }

    const Eigen::VectorXd x_trial = out.x + dx;
    fn(x_trial, r_trial, nullptr);
    const double cost_trial = 0.5 * r_trial.squaredNorm();
    const Eigen::VectorXd jdx = jac * dx;
    const double predicted = -grad.dot(dx) - 0.5 * jdx.squaredNorm();
    const double rho = predicted > 0.0 ? (out.cost - cost_trial) / predicted : -1.0;

    if (std::isfinite(cost_trial) && rho > 0.0) {
      out.x = x_trial;
      out.cost = cost_trial;
      fn(out.x, r, &jac);
      mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = 2.0;
    } else {
      mu *= nu;
      nu *= 2.0;
      if (!std::isfinite(mu) || mu > 1e300) break;
    }
  }
  return out;
}

}  // namespace beable
