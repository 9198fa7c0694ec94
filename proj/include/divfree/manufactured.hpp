#pragma once

/// \file manufactured.hpp
/// \brief Closed-form Stokes solutions on the unit square/cube with their
/// source terms f = -nu Laplace(u) + grad(p).

#include <cmath>
#include <functional>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "divfree/errors.hpp"

namespace divfree {

template <int Dim>
struct ManufacturedSolution {
  using Vec = Eigen::Matrix<double, Dim, 1>;
  using Mat = Eigen::Matrix<double, Dim, Dim>;  // grad(i, j) = d u_i / d x_j

  std::string name;
  double nu = 1.0;
  std::function<Vec(const Vec&)> u;
  std::function<Mat(const Vec&)> grad_u;
  std::function<double(const Vec&)> p;
  std::function<Vec(const Vec&)> f;
};

/// u = (pi sin^2(pi x) sin(2 pi y), -pi sin^2(pi y) sin(2 pi x)),
/// p = cos(pi x) cos(pi y).
inline ManufacturedSolution<2> make_ps2d(double nu) {
  using std::cos;
  using std::sin;
  constexpr double pi = std::numbers::pi;
  using M = ManufacturedSolution<2>;
  M ms;
  ms.name = "ps2d";
  ms.nu = nu;
  ms.u = [](const M::Vec& x) {
    const double s1 = sin(pi * x[0]), s2 = sin(pi * x[1]);
    return M::Vec(pi * s1 * s1 * sin(2 * pi * x[1]), -pi * s2 * s2 * sin(2 * pi * x[0]));
  };
  ms.grad_u = [](const M::Vec& x) {
    const double s1 = sin(pi * x[0]), s2 = sin(pi * x[1]);
    const double sx = sin(2 * pi * x[0]), sy = sin(2 * pi * x[1]);
    M::Mat g;
    g << pi * pi * sx * sy, 2 * pi * pi * s1 * s1 * cos(2 * pi * x[1]),
        -2 * pi * pi * s2 * s2 * cos(2 * pi * x[0]), -pi * pi * sx * sy;
    return g;
  };
  ms.p = [](const M::Vec& x) { return cos(pi * x[0]) * cos(pi * x[1]); };
  ms.f = [nu](const M::Vec& x) {
    const double s1 = sin(pi * x[0]), s2 = sin(pi * x[1]);
    const double pi3 = pi * pi * pi;
    const double lap1 = 2 * pi3 * sin(2 * pi * x[1]) * (1 - 4 * s1 * s1);
    const double lap2 = -2 * pi3 * sin(2 * pi * x[0]) * (1 - 4 * s2 * s2);
    return M::Vec(-nu * lap1 - pi * s1 * cos(pi * x[1]), -nu * lap2 - pi * cos(pi * x[0]) * s2);
  };
  return ms;
}

/// Same velocity as ps2d with zero third component,
/// p = cos(pi x) cos(pi y) cos(pi z).
inline ManufacturedSolution<3> make_wf3d(double nu) {
  using std::cos;
  using std::sin;
  constexpr double pi = std::numbers::pi;
  using M = ManufacturedSolution<3>;
  const auto base = make_ps2d(nu);
  M ms;
  ms.name = "wf3d";
  ms.nu = nu;
  ms.u = [base](const M::Vec& x) {
    const auto v = base.u(x.head<2>());
    return M::Vec(v[0], v[1], 0.0);
  };
  ms.grad_u = [base](const M::Vec& x) {
    M::Mat g = M::Mat::Zero();
    g.topLeftCorner<2, 2>() = base.grad_u(x.head<2>());
    return g;
  };
  ms.p = [](const M::Vec& x) { return cos(pi * x[0]) * cos(pi * x[1]) * cos(pi * x[2]); };
  ms.f = [nu](const M::Vec& x) {
    const double s1 = sin(pi * x[0]), s2 = sin(pi * x[1]);
    const double c1 = cos(pi * x[0]), c2 = cos(pi * x[1]), c3 = cos(pi * x[2]);
    const double pi3 = pi * pi * pi;
    const double lap1 = 2 * pi3 * sin(2 * pi * x[1]) * (1 - 4 * s1 * s1);
    const double lap2 = -2 * pi3 * sin(2 * pi * x[0]) * (1 - 4 * s2 * s2);
    return M::Vec(-nu * lap1 - pi * s1 * c2 * c3, -nu * lap2 - pi * c1 * s2 * c3,
                  -pi * c1 * c2 * sin(pi * x[2]));
  };
  return ms;
}

namespace detail {

/// k-th derivative of w(t) = (t - t^2)^2.
inline double bubble1d(double t, int k) {
  switch (k) {
    case 0: return t * t * (1 - t) * (1 - t);
    case 1: return 2 * t - 6 * t * t + 4 * t * t * t;
    case 2: return 2 - 12 * t + 12 * t * t;
    case 3: return -12 + 24 * t;
    case 4: return 24.0;
    default: return 0.0;
  }
}

}  // namespace detail

/// u = curl(0, g, g), p = (1/9) d^2 g / dx dy with
/// g = 2^12 (x - x^2)^2 (y - y^2)^2 (z - z^2)^2, so
/// u = (g_y - g_z, -g_x, g_x).
inline ManufacturedSolution<3> make_wf3d_curl(double nu) {
  using M = ManufacturedSolution<3>;
  // D(a, b, c) = d^{a+b+c} g / dx^a dy^b dz^c
  auto D = [](const M::Vec& x, int a, int b, int c) {
    return 4096.0 * detail::bubble1d(x[0], a) * detail::bubble1d(x[1], b) *
           detail::bubble1d(x[2], c);
  };
  M ms;
  ms.name = "wf3d-curl";
  ms.nu = nu;
  ms.u = [D](const M::Vec& x) {
    return M::Vec(D(x, 0, 1, 0) - D(x, 0, 0, 1), -D(x, 1, 0, 0), D(x, 1, 0, 0));
  };
  ms.grad_u = [D](const M::Vec& x) {
    M::Mat g;
    g << D(x, 1, 1, 0) - D(x, 1, 0, 1), D(x, 0, 2, 0) - D(x, 0, 1, 1), D(x, 0, 1, 1) - D(x, 0, 0, 2),
        -D(x, 2, 0, 0), -D(x, 1, 1, 0), -D(x, 1, 0, 1),
        D(x, 2, 0, 0), D(x, 1, 1, 0), D(x, 1, 0, 1);
    return g;
  };
  ms.p = [D](const M::Vec& x) { return D(x, 1, 1, 0) / 9.0; };
  ms.f = [D, nu](const M::Vec& x) {
    // Laplacian of a derivative of g: sum of the three pure second derivatives.
    auto lap = [&](int a, int b, int c) {
      return D(x, a + 2, b, c) + D(x, a, b + 2, c) + D(x, a, b, c + 2);
    };
    const double l1 = lap(0, 1, 0) - lap(0, 0, 1);
    const double l2 = -lap(1, 0, 0);
    const double l3 = lap(1, 0, 0);
    return M::Vec(-nu * l1 + D(x, 2, 1, 0) / 9.0, -nu * l2 + D(x, 1, 2, 0) / 9.0,
                  -nu * l3 + D(x, 1, 1, 1) / 9.0);
  };
  return ms;
}

}  // namespace divfree
