#pragma once

#include "subdyn/common.hpp"

namespace subdyn {

struct MaterialParams {
  double youngs_modulus = 1e6;
  double poisson_ratio = 0.3;  // in (0, 0.5)
  double density = 1e3;
  double rod_radius = 0.0;
  double shell_thickness = 0.0;
  Vec3 gravity{0.0, -9.81, 0.0};

  double mu() const { return youngs_modulus / (2.0 * (1.0 + poisson_ratio)); }
  double lambda() const {
    return youngs_modulus * poisson_ratio /
           ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio));
  }
  double rod_stretch_stiffness() const {
    return youngs_modulus * M_PI * rod_radius * rod_radius;
  }
  double rod_bend_stiffness() const {
    double r2 = rod_radius * rod_radius;
    return youngs_modulus * M_PI * r2 * r2 / 4.0;
  }
  double hinge_stiffness() const {
    double h = shell_thickness;
    return youngs_modulus * h * h * h / (12.0 * (1.0 - poisson_ratio * poisson_ratio));
  }
};

}  // namespace subdyn
