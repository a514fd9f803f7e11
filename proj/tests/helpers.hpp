// Shared test utilities: independent oracles (grid quadrature, finite
// differences, term-by-term summation) kept free of the library's own
// spectral code paths wherever they act as a cross-check.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "torusflow/geometry.hpp"
#include "torusflow/philox.hpp"
#include "torusflow/trig_poly.hpp"

namespace tftest {

using torusflow::kTwoPi;
using torusflow::TorusPoint;
using torusflow::TrigPoly;
using torusflow::Wave;

/// Plain list-of-terms polynomial evaluated by direct summation; the
/// independent oracle for TrigPoly evaluation and quadrature.
struct RawTerm {
    int k1, k2;
    double c, s;
};

inline double raw_eval(const std::vector<RawTerm>& terms, const TorusPoint& p) {
    double v = 0.0;
    for (const auto& t : terms) {
        double a = t.k1 * p.theta1 + t.k2 * p.theta2;
        v += t.c * std::cos(a) + t.s * std::sin(a);
    }
    return v;
}

inline TrigPoly from_raw(const std::vector<RawTerm>& terms) {
    TrigPoly f;
    for (const auto& t : terms) f.add_term({t.k1, t.k2}, t.c, t.s);
    return f;
}

/// Random polynomial over the full (uncanonicalized) lattice |k|_inf <= deg.
inline std::vector<RawTerm> random_raw_poly(int deg, std::uint64_t seed) {
    using torusflow::RngStream;
    std::vector<RawTerm> terms;
    std::uint32_t n = 0;
    for (int k1 = -deg; k1 <= deg; ++k1) {
        for (int k2 = -deg; k2 <= deg; ++k2) {
            double c = torusflow::counter_normal(seed, RngStream::kScatter, 7, 0, n++);
            double s = torusflow::counter_normal(seed, RngStream::kScatter, 7, 1, n++);
            terms.push_back({k1, k2, 0.3 * c, 0.3 * s});
        }
    }
    return terms;
}

inline TorusPoint random_point(std::uint64_t seed, std::uint32_t i) {
    using torusflow::RngStream;
    return TorusPoint(
        kTwoPi * torusflow::counter_uniform(seed, RngStream::kScatter, 11, 0, i),
        kTwoPi * torusflow::counter_uniform(seed, RngStream::kScatter, 11, 1, i));
}

/// Uniform-grid quadrature of an arbitrary function, normalized measure.
inline double grid_quadrature(const std::function<double(const TorusPoint&)>& f, int n) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            acc += f(TorusPoint(kTwoPi * i / n, kTwoPi * j / n));
    return acc / (double(n) * n);
}

/// 4th-order central second-difference Laplacian at p.
inline double fd_laplacian(const std::function<double(const TorusPoint&)>& f,
                           const TorusPoint& p, double h) {
    auto second = [&](int axis) {
        auto at = [&](double off) {
            return axis == 0 ? f(TorusPoint(p.theta1 + off, p.theta2))
                             : f(TorusPoint(p.theta1, p.theta2 + off));
        };
        return (-at(2 * h) + 16 * at(h) - 30 * at(0) + 16 * at(-h) - at(-2 * h)) /
               (12 * h * h);
    };
    return second(0) + second(1);
}

/// Central first differences for the gradient.
inline torusflow::Vec2 fd_gradient(const std::function<double(const TorusPoint&)>& f,
                                   const TorusPoint& p, double h) {
    double g1 = (f(TorusPoint(p.theta1 + h, p.theta2)) -
                 f(TorusPoint(p.theta1 - h, p.theta2))) / (2 * h);
    double g2 = (f(TorusPoint(p.theta1, p.theta2 + h)) -
                 f(TorusPoint(p.theta1, p.theta2 - h))) / (2 * h);
    return {g1, g2};
}

}  // namespace tftest
