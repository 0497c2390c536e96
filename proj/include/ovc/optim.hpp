#pragma once

#include <Eigen/Dense>
#include <functional>

namespace ovc {

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;

/// Central finite-difference gradient with per-coordinate step
/// h_i = rel_step * max(1, |x_i|).
Eigen::VectorXd fd_gradient(const ObjectiveFn& f, const Eigen::VectorXd& x,
                            double rel_step = 1e-4);

struct AdamResult {
  Eigen::VectorXd x;        // best iterate seen
  double value;             // objective at x
  double initial_value;
};

/// Moment-adaptive first-order ascent on f. Gradients are central finite
/// differences; the best iterate encountered (including the start) is
/// returned, so the result never falls below the initial objective.
AdamResult adam_ascent(const ObjectiveFn& f, const Eigen::VectorXd& x0, int steps, double lr,
                       double fd_rel_step = 1e-4);

struct BoxOptimResult {
  Eigen::VectorXd x;
  double value;
  bool converged;
};

/// Local ascent of f inside [lower, upper]: BFGS direction with Armijo
/// backtracking and projection onto the box, finite-difference gradients.
BoxOptimResult box_ascent(const ObjectiveFn& f, const Eigen::VectorXd& x0,
                          const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                          int max_iters = 60, double grad_rel_step = 1e-5);

}  // namespace ovc
