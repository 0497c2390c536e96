#include "ovc/objectives.hpp"

#include <cmath>
#include <numbers>

#include "ovc/errors.hpp"

namespace ovc {

namespace {

const double kAlpha[4] = {1.0, 1.2, 3.0, 3.2};

const double kA[4][6] = {{10.0, 3.0, 17.0, 3.5, 1.7, 8.0},
                         {0.05, 10.0, 17.0, 0.1, 8.0, 14.0},
                         {3.0, 3.5, 1.7, 10.0, 17.0, 8.0},
                         {17.0, 8.0, 0.05, 10.0, 0.1, 14.0}};

const double kP[4][6] = {{0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886},
                         {0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991},
                         {0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650},
                         {0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381}};

}  // namespace

double hartmann6(const Eigen::VectorXd& x) {
  if (x.size() != 6) throw DimensionError("hartmann6: need a 6-vector");
  if ((x.array() < 0.0).any() || (x.array() > 1.0).any()) {
    throw DimensionError("hartmann6: input outside [0,1]^6");
  }
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) {
    double inner = 0.0;
    for (int j = 0; j < 6; ++j) {
      const double d = x[j] - kP[i][j];
      inner += kA[i][j] * d * d;
    }
    acc += kAlpha[i] * std::exp(-inner);
  }
  return acc;
}

std::pair<double, bool> objective_hartmann6_constrained(const Eigen::VectorXd& x) {
  return {hartmann6(x), x.lpNorm<1>() <= 3.0};
}

int objective_poisson_hartmann6(const Eigen::VectorXd& x, Rng& rng) {
  return rng.poisson(std::exp(hartmann6(x)));
}

double branin(double x1, double x2) {
  const double a = 1.0;
  const double b = 5.1 / (4.0 * std::numbers::pi * std::numbers::pi);
  const double c = 5.0 / std::numbers::pi;
  const double r = 6.0;
  const double s = 10.0;
  const double t = 1.0 / (8.0 * std::numbers::pi);
  const double u = x2 - b * x1 * x1 + c * x1 - r;
  return a * u * u + s * (1.0 - t) * std::cos(x1) + s;
}

double bimodal1d(double x) {
  const double left = 0.7 * std::exp(-80.0 * (x - 0.25) * (x - 0.25));
  const double right = 1.0 * std::exp(-60.0 * (x - 0.75) * (x - 0.75));
  return left + right;
}

}  // namespace ovc
