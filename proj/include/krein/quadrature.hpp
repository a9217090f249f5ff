#pragma once

#include "krein/common.hpp"

#include <vector>

namespace krein::quad {

struct Node1D {
    double x;   // on [-1, 1]
    double w;
};

/// Gauss-Legendre rule with n points on [-1, 1]. Cached per n.
const std::vector<Node1D>& gauss_legendre(int n);

struct TriNode {
    std::array<double, 3> bary;
    double w;   // weights sum to 1; multiply by the triangle area
};

/// Seven-point rule, exact for polynomials of degree 5.
const std::array<TriNode, 7>& triangle7();

/// Integrate g over [a, b] with an n-point Gauss rule on each of `panels` equal panels.
template <class G>
double integrate_1d(G&& g, double a, double b, int n = 10, int panels = 1)
{
    const auto& rule = gauss_legendre(n);
    const double h = (b - a) / panels;
    double s = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * h;
        const double mid = lo + 0.5 * h;
        double ps = 0.0;
        for (const auto& nd : rule) ps += nd.w * g(mid + 0.5 * h * nd.x);
        s += 0.5 * h * ps;
    }
    return s;
}

/// Integrate g over a triangle with the seven-point rule.
template <class G>
double integrate_triangle(G&& g, const Tri2& t)
{
    const double area = std::abs(signed_area(t));
    double s = 0.0;
    for (const auto& nd : triangle7()) {
        const Vec2 p = nd.bary[0] * t[0] + nd.bary[1] * t[1] + nd.bary[2] * t[2];
        s += nd.w * g(p);
    }
    return s * area;
}

} // namespace krein::quad
