#include "ovc/optim.hpp"

#include <cmath>

#include "ovc/errors.hpp"

namespace ovc {

Eigen::VectorXd fd_gradient(const ObjectiveFn& f, const Eigen::VectorXd& x, double rel_step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

AdamResult adam_ascent(const ObjectiveFn& f, const Eigen::VectorXd& x0, int steps, double lr,
                       double fd_rel_step) {
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Eigen::VectorXd x = x0;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(x.size());

  double best_val = f(x0);
  if (!std::isfinite(best_val)) {
    throw NumericalError("adam_ascent: objective not finite at the initial point");
  }
  const double initial = best_val;
  Eigen::VectorXd best_x = x0;

  for (int t = 1; t <= steps; ++t) {
    const Eigen::VectorXd g = fd_gradient(f, x, fd_rel_step);
    if (!g.allFinite()) throw NumericalError("adam_ascent: non-finite gradient");
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    // ascent step
    x += (lr * (m / bc1).array() / ((v / bc2).array().sqrt() + eps)).matrix();
    const double val = f(x);
    if (!std::isfinite(val)) throw NumericalError("adam_ascent: objective became non-finite");
    if (val > best_val) {
      best_val = val;
      best_x = x;
    }
  }
  return {std::move(best_x), best_val, initial};
}

namespace {

Eigen::VectorXd clamp_box(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                          const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

BoxOptimResult box_ascent(const ObjectiveFn& f, const Eigen::VectorXd& x0,
                          const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                          int max_iters, double grad_rel_step) {
  const Eigen::Index d = x0.size();
  Eigen::VectorXd x = clamp_box(x0, lower, upper);
  double fx = f(x);
  if (!std::isfinite(fx)) return {x, fx, false};

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(d, d);  // inverse-Hessian approximation
  Eigen::VectorXd g = fd_gradient(f, x, grad_rel_step);
  const double span = (upper - lower).maxCoeff();
  const double tol = 1e-9 * std::max(span, 1.0);

  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd dir = H * g;
    if (dir.dot(g) <= 0.0) {
      H.setIdentity();
      dir = g;
    }
    const double dn = dir.norm();
    if (dn < 1e-14) return {x, fx, true};
    // cap the first trial step at a fraction of the box
    double step = std::min(1.0, 0.25 * span / dn);
    bool improved = false;
    Eigen::VectorXd xn;
    double fn = fx;
    for (int ls = 0; ls < 12; ++ls) {
      xn = clamp_box(x + step * dir, lower, upper);
      fn = f(xn);
      if (std::isfinite(fn) && fn > fx + 1e-12 * std::abs(fx)) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) return {x, fx, true};
    const Eigen::VectorXd gn = fd_gradient(f, xn, grad_rel_step);
    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd yv = g - gn;  // ascent: curvature pair uses -delta g
    const double sy = s.dot(yv);
    if (sy > 1e-12) {
      // BFGS update of the inverse Hessian (maximization form).
      const Eigen::VectorXd Hy = H * yv;
      const double yHy = yv.dot(Hy);
      H += ((sy + yHy) / (sy * sy)) * (s * s.transpose());
      H -= (Hy * s.transpose() + s * Hy.transpose()) / sy;
    } else {
      H.setIdentity();
    }
    if (s.norm() < tol) return {xn, fn, true};
    x = xn;
    fx = fn;
    g = gn;
  }
  return {x, fx, false};
}

}  // namespace ovc
