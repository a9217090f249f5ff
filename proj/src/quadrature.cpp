#include "krein/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace krein::quad {

namespace {

std::vector<Node1D> build_gauss_legendre(int n)
{
    std::vector<Node1D> nodes(n);
    for (int i = 0; i < n; ++i) {
        // Newton on P_n starting from the Chebyshev-like guess.
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) { p1 = x; p0 = 1.0; }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        nodes[i] = {x, 2.0 / ((1.0 - x * x) * dp * dp)};
    }
    return nodes;
}

} // namespace

const std::vector<Node1D>& gauss_legendre(int n)
{
    if (n < 1) throw Error(ErrorKind::InvalidInput, "gauss_legendre: n must be >= 1");
    static std::mutex mu;
    static std::map<int, std::vector<Node1D>> cache;
    std::lock_guard lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, build_gauss_legendre(n)).first;
    return it->second;
}

const std::array<TriNode, 7>& triangle7()
{
    static const std::array<TriNode, 7> rule = [] {
        const double s15 = std::sqrt(15.0);
        const double w0 = 9.0 / 40.0;
        const double w1 = (155.0 + s15) / 1200.0;
        const double w2 = (155.0 - s15) / 1200.0;
        const double b1 = (6.0 + s15) / 21.0, a1 = 1.0 - 2.0 * b1;
        const double b2 = (6.0 - s15) / 21.0, a2 = 1.0 - 2.0 * b2;
        return std::array<TriNode, 7>{{
            {{1.0 / 3, 1.0 / 3, 1.0 / 3}, w0},
            {{a1, b1, b1}, w1}, {{b1, a1, b1}, w1}, {{b1, b1, a1}, w1},
            {{a2, b2, b2}, w2}, {{b2, a2, b2}, w2}, {{b2, b2, a2}, w2},
        }};
    }();
    return rule;
}

} // namespace krein::quad
