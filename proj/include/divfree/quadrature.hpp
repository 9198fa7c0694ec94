#pragma once

/// \file quadrature.hpp
/// \brief Collapsed-coordinate (conical product) Gauss rules on the
/// reference triangle and tetrahedron, exact to any requested degree.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace divfree {

/// Gauss-Legendre nodes and weights on [0, 1].
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;

  explicit GaussLegendre(int n) : nodes(n), weights(n) {
    if (n < 1) throw std::invalid_argument("GaussLegendre: n >= 1");
    // P_n(x) and P_n'(x) by the three-term recurrence.
    auto legendre = [n](double x, double& dp) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      return p1;
    };
    for (int i = 0; i < n; ++i) {
      double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        const double dx = legendre(x, dp) / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      legendre(x, dp);
      // [-1, 1] -> [0, 1]
      nodes[i] = 0.5 * (1.0 - x);
      weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
  }
};

/// Points in barycentric coordinates (Dim+1 entries) on the reference simplex;
/// weights sum to its measure (1/2 or 1/6).
template <int Dim>
struct QuadratureRule {
  using Bary = Eigen::Matrix<double, Dim + 1, 1>;
  std::vector<Bary> points;
  std::vector<double> weights;
  int degree = 0;

  std::size_t size() const { return points.size(); }
};

/// Rule exact for polynomials of total degree <= `degree` on the reference
/// simplex, from Gauss-Legendre rules on the Duffy-collapsed cube.
template <int Dim>
QuadratureRule<Dim> simplex_rule(int degree) {
  static_assert(Dim == 2 || Dim == 3);
  if (degree < 0) throw std::invalid_argument("simplex_rule: degree >= 0");
  QuadratureRule<Dim> q;
  q.degree = degree;
  auto npts = [degree](int jac_power) { return (degree + jac_power) / 2 + 1; };
  if constexpr (Dim == 2) {
    // x = u, y = (1-u) v; dx dy = (1-u) du dv
    const GaussLegendre gu(npts(1)), gv(npts(0));
    for (std::size_t i = 0; i < gu.nodes.size(); ++i)
      for (std::size_t j = 0; j < gv.nodes.size(); ++j) {
        const double u = gu.nodes[i], v = gv.nodes[j];
        const double x = u, y = (1.0 - u) * v;
        q.points.push_back(typename QuadratureRule<2>::Bary(1.0 - x - y, x, y));
        q.weights.push_back(gu.weights[i] * gv.weights[j] * (1.0 - u));
      }
  } else {
    // x = u, y = (1-u) v, z = (1-u)(1-v) w; dV = (1-u)^2 (1-v) du dv dw
    const GaussLegendre gu(npts(2)), gv(npts(1)), gw(npts(0));
    for (std::size_t i = 0; i < gu.nodes.size(); ++i)
      for (std::size_t j = 0; j < gv.nodes.size(); ++j)
        for (std::size_t k = 0; k < gw.nodes.size(); ++k) {
          const double u = gu.nodes[i], v = gv.nodes[j], w = gw.nodes[k];
          const double x = u, y = (1.0 - u) * v, z = (1.0 - u) * (1.0 - v) * w;
          q.points.push_back(typename QuadratureRule<3>::Bary(1.0 - x - y - z, x, y, z));
          q.weights.push_back(gu.weights[i] * gv.weights[j] * gw.weights[k] * (1.0 - u) *
                              (1.0 - u) * (1.0 - v));
        }
  }
  return q;
}

/// Default degree for manufactured data.
inline constexpr int kDefaultQuadratureDegree = 6;

}  // namespace divfree
