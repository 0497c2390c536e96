#pragma once

#include <Eigen/Dense>
#include <utility>

#include "ovc/rng.hpp"

namespace ovc {

/// Negated Hartmann-6 on [0,1]^6 (maximization form, optimum ~3.32237) with
/// the 1-norm feasibility flag ||x||_1 <= 3.
std::pair<double, bool> objective_hartmann6_constrained(const Eigen::VectorXd& x);

/// The raw negated Hartmann-6 value (no constraint, bounds still enforced).
double hartmann6(const Eigen::VectorXd& x);

/// Seeded Poisson draw with rate exp(f(x)).
int objective_poisson_hartmann6(const Eigen::VectorXd& x, Rng& rng);

/// Branin on the native domain [-5,10] x [0,15] (minimization, optimum
/// ~0.397887); callers negate for maximization.
double branin(double x1, double x2);

/// 1D bimodal toy on [0,1]: two peaks of different height.
double bimodal1d(double x);

}  // namespace ovc
