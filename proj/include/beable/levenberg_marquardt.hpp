#pragma once

#include <functional>

#include <Eigen/Dense>

namespace beable {

struct LmOptions {
  int max_iterations = 400;
  double gradient_tolerance = 1e-15;
  /// Relative step size below which the iteration stops.
  double step_tolerance = 1e-14;
  double initial_damping = 1e-3;
};

struct LmResult {
  Eigen::VectorXd x;
  double cost = 0.0;  // 0.5 * |r|^2
  int iterations = 0;
  bool converged = false;
};

/// Fills residuals r(x) and, when `jacobian` is non-null, dr/dx.
using ResidualFunction =
    std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& residuals,
                       Eigen::MatrixXd* jacobian)>;

/// Levenberg-Marquardt with Marquardt diagonal scaling and Nielsen's damping
/// update. Each damped step solves [J; sqrt(mu) D] dx = -[r; 0] by QR.
LmResult levenberg_marquardt(const ResidualFunction& fn, Eigen::VectorXd x0,
                             const LmOptions& options = {});

}  // namespace beable
