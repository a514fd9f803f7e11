#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "torusflow/spectral_field.hpp"

using namespace torusflow;
using tftest::random_point;

namespace {

VectorTrigPoly random_field(int deg, std::uint64_t seed) {
    return {tftest::from_raw(tftest::random_raw_poly(deg, seed)),
            tftest::from_raw(tftest::random_raw_poly(deg, seed + 1))};
}

/// Test-side per-mode projector, independent of the library implementation.
Vec2 project_coef(const Wave& k, Vec2 coef) {
    double n2 = k.norm_sq();
    if (n2 == 0.0) return coef;
    double p = (coef.x * k.k1 + coef.y * k.k2) / n2;
    return {coef.x - p * k.k1, coef.y - p * k.k2};
}

}  // namespace

TEST_CASE("leray projection") {
    SECTION("divergence-free fields are fixed points") {
        VectorTrigPoly V(TrigPoly::harmonic(1, 2, 2.0, -0.5) * 2.0,
                         TrigPoly::harmonic(1, 2, -1.0, 0.25) * 2.0);
        VectorTrigPoly P = leray_project(V);
        for (std::uint32_t i = 0; i < 10; ++i) {
            TorusPoint p = random_point(201, i);
            CHECK(norm(P.eval(p) - V.eval(p)) <= 1e-13);
        }
    }
    SECTION("gradients are annihilated") {
        TrigPoly h = tftest::from_raw(tftest::random_raw_poly(3, 202));
        VectorTrigPoly P = leray_project(h.gradient());
        for (std::uint32_t i = 0; i < 10; ++i)
            CHECK(norm(P.eval(random_point(203, i))) <= 1e-12);
    }
    SECTION("(cos t2, cos t1) is unchanged") {
        VectorTrigPoly V(TrigPoly::harmonic(0, 1, 1.0, 0.0),
                         TrigPoly::harmonic(1, 0, 1.0, 0.0));
        VectorTrigPoly P = leray_project(V);
        for (std::uint32_t i = 0; i < 10; ++i) {
            TorusPoint p = random_point(204, i);
            CHECK(norm(P.eval(p) - V.eval(p)) <= 1e-14);
        }
    }
    SECTION("matches a per-mode projection oracle on random input") {
        VectorTrigPoly V = random_field(3, 205);
        VectorTrigPoly P = leray_project(V);
        // rebuild the projection wave by wave from the raw coefficients
        VectorTrigPoly expect;
        std::map<Wave, std::pair<Vec2, Vec2>> coefs;  // wave -> (cos vec, sin vec)
        for (const auto& [k, h] : V.u1().terms()) {
            coefs[k].first.x = h.c;
            coefs[k].second.x = h.s;
        }
        for (const auto& [k, h] : V.u2().terms()) {
            coefs[k].first.y = h.c;
            coefs[k].second.y = h.s;
        }
        for (const auto& [k, cs] : coefs) {
            Vec2 pc = project_coef(k, cs.first);
            Vec2 ps = project_coef(k, cs.second);
            expect.u1().add_term(k, pc.x, ps.x);
            expect.u2().add_term(k, pc.y, ps.y);
        }
        for (std::uint32_t i = 0; i < 20; ++i) {
            TorusPoint p = random_point(206, i);
            CHECK(norm(P.eval(p) - expect.eval(p)) <= 1e-12);
        }
    }
    SECTION("idempotent and divergence-free output") {
        SpectralField b = SpectralField::single_bin(random_field(4, 207), 1.0);
        SpectralField pb = leray_project(b);
        SpectralField ppb = leray_project(pb);
        CHECK(space_time_l2_distance(pb, ppb) <= 1e-13);
        CHECK(max_pointwise_divergence(pb) <= 1e-10);
    }
}

TEST_CASE("hodge regularization") {
    SECTION("eps = 0 is the identity") {
        VectorTrigPoly V = random_field(3, 210);
        VectorTrigPoly H = hodge_regularize(V, 0.0);
        for (std::uint32_t i = 0; i < 10; ++i) {
            TorusPoint p = random_point(211, i);
            CHECK(norm(H.eval(p) - V.eval(p)) <= 1e-14);
        }
    }
    SECTION("single mode |k|^2 = 5 is damped by exp(-eps 5)") {
        VectorTrigPoly V(TrigPoly::harmonic(2, 1, 1.0, 0.0),
                         TrigPoly::harmonic(2, 1, 0.0, -2.0));
        VectorTrigPoly H = hodge_regularize(V, 0.1);
        double damp = std::exp(-0.5);
        for (std::uint32_t i = 0; i < 10; ++i) {
            TorusPoint p = random_point(212, i);
            CHECK(norm(H.eval(p) - damp * V.eval(p)) <= 1e-13);
        }
    }
    SECTION("strict energy contraction for nonconstant fields") {
        SpectralField b = SpectralField::single_bin(leray_project(random_field(3, 213)), 0.7);
        double e0 = drift_energy(b).value;
        double prev = e0;
        for (double eps : {0.05, 0.1, 0.2}) {
            double e = drift_energy(hodge_regularize(b, eps)).value;
            CHECK(e < e0);
            CHECK(e <= prev + 1e-15);  // nonincreasing in eps
            prev = e;
        }
    }
    SECTION("commutes with leray projection and preserves divergence-freeness") {
        VectorTrigPoly V = random_field(3, 214);
        VectorTrigPoly a = hodge_regularize(leray_project(V), 0.3);
        VectorTrigPoly c = leray_project(hodge_regularize(V, 0.3));
        for (std::uint32_t i = 0; i < 10; ++i) {
            TorusPoint p = random_point(215, i);
            CHECK(norm(a.eval(p) - c.eval(p)) <= 1e-13);
        }
        SpectralField lb =
            SpectralField::single_bin(hodge_regularize(leray_project(V), 0.3), 1.0);
        CHECK(max_pointwise_divergence(lb) <= 1e-10);
    }
}

TEST_CASE("drift energy") {
    SECTION("zero drift") {
        CHECK(drift_energy(SpectralField::zero(1.0)).value == 0.0);
    }
    SECTION("constant drift (c1,c2) on [0,T] gives T(c1^2+c2^2)/2") {
        SpectralField b = SpectralField::constant({0.3, -0.4}, 2.0);
        CHECK(drift_energy(b).value == Catch::Approx(2.0 * 0.25 / 2.0));
    }
    SECTION("single cosine mode on [0,1] via quadrature oracle") {
        // field (0,-1) cos(theta1); grid quadrature of its squared norm
        VectorTrigPoly A(TrigPoly(), TrigPoly::harmonic(1, 0, -1.0, 0.0));
        SpectralField b = SpectralField::single_bin(A, 1.0);
        double quad = tftest::grid_quadrature(
            [&](const TorusPoint& p) {
                Vec2 v = A.eval(p);
                return dot(v, v);
            },
            256);
        CHECK(drift_energy(b).value == Catch::Approx(0.5 * quad).margin(1e-12));
        CHECK(drift_energy(b).value == Catch::Approx(0.25));
    }
    SECTION("matches Monte Carlo quadrature within 3 standard errors") {
        SpectralField b = SpectralField::piecewise(
            {leray_project(random_field(2, 220)), leray_project(random_field(2, 221))}, 0.8);
        double exact = drift_energy(b).value;
        const int n = 100000;
        double acc = 0.0;
        double acc2 = 0.0;
        for (const auto& bin : b.bins()) {
            double sum = 0.0, sum2 = 0.0;
            for (int i = 0; i < n; ++i) {
                TorusPoint p = random_point(222, static_cast<std::uint32_t>(i));
                Vec2 v = bin.field.eval(p);
                double q = dot(v, v);
                sum += q;
                sum2 += q * q;
            }
            double mean = sum / n;
            double var = (sum2 / n - mean * mean) / n;
            acc += 0.5 * bin.width() * mean;
            acc2 += 0.25 * bin.width() * bin.width() * var;
        }
        CHECK(std::abs(exact - acc) <= 3.0 * std::sqrt(acc2) + 1e-12);
    }
}

TEST_CASE("time mollification") {
    SECTION("constant-in-time drift unchanged away from the boundary") {
        VectorTrigPoly f = leray_project(random_field(2, 230));
        SpectralField b = SpectralField::piecewise({f, f, f, f}, 1.0);
        double eps = 0.2;
        SpectralField m = time_mollify(b, eps);
        for (const auto& bin : m.bins()) {
            if (bin.t_start < eps / 2 || bin.t_end > 1.0 - eps / 2) continue;
            CHECK(space_time_l2_distance(
                      SpectralField::single_bin(bin.field, 1.0),
                      SpectralField::single_bin(f, 1.0)) <= 1e-10);
        }
    }
    SECTION("step in time smooths over a window of width eps, vs direct quadrature") {
        VectorTrigPoly f = VectorTrigPoly::constant({1.0, 0.0});
        SpectralField b =
            SpectralField::piecewise({VectorTrigPoly(), f}, 1.0);  // jump at t = 1/2
        double eps = 0.2;
        SpectralField m = time_mollify(b, eps);

        // direct quadrature of the convolution for the step's first component:
        // (step * psi)(t) = integral of psi over {s : t - s >= 1/2}
        auto blurred = [&](double t) {
            const int n = 20000;
            double tot = 0.0, hit = 0.0;
            for (int i = 0; i < n; ++i) {
                double s = -eps / 2 + eps * (i + 0.5) / n;
                double d = 1.0 - (2 * s / eps) * (2 * s / eps);
                double w = d > 0 ? std::exp(-1.0 / d) : 0.0;
                tot += w;
                double u = t - s;
                if (u >= 0.5 && u <= 1.0) hit += w;
            }
            return hit / tot;
        };
        for (double t : {0.42, 0.48, 0.5, 0.55, 0.61}) {
            int idx = m.bin_index(t);
            const auto& bin = m.bins()[idx];
            double got = bin.field.u1().mass();
            // compare against the bin average of the directly computed convolution
            double expect = 0.0;
            const int q = 64;
            for (int i = 0; i < q; ++i)
                expect += blurred(bin.t_start + (bin.t_end - bin.t_start) * (i + 0.5) / q);
            expect /= q;
            CHECK(got == Catch::Approx(expect).margin(2e-4));
        }
        // fully before / after the transition window: exact 0 / 1
        CHECK(m.at_time(0.3).u1().mass() == Catch::Approx(0.0).margin(1e-12));
        CHECK(m.at_time(0.8).u1().mass() == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("L2 distance to the original decreases monotonically as eps -> 0") {
        SpectralField b = make_rough_drift(4, 8, 1.0, 404, 0.6);
        double prev = -1.0;
        for (double eps : {0.2, 0.1, 0.05}) {
            double d = space_time_l2_distance(time_mollify(b, eps), b);
            if (prev >= 0.0) CHECK(d <= prev * 1.05);  // monotone within 5%
            prev = d;
        }
    }
    SECTION("mollification never increases the energy") {
        SpectralField b = make_rough_drift(6, 10, 0.5, 405, 1.0);
        double e0 = drift_energy(b).value;
        for (double eps : {0.3, 0.1, 0.04})
            CHECK(drift_energy(time_mollify(b, eps)).value <= e0 * (1.0 + 1e-12));
    }
}

TEST_CASE("rough drift fixture") {
    SpectralField b = make_rough_drift(8, 6, 0.5, 77, 1.0);
    CHECK(b.bin_count() == 6);
    CHECK(b.max_degree() == 8);
    CHECK(max_pointwise_divergence(b, 9) <= 1e-10);
    // energy is sign-independent: sum over waves of amplitude^2/|k|^2, per bin
    double per_bin = 0.0;
    for (const Wave& k : canonical_waves(8)) per_bin += 1.0 / k.norm_sq();
    CHECK(drift_energy(b).value == Catch::Approx(0.5 * 0.5 * per_bin).epsilon(1e-12));
    // deterministic per seed, different across seeds
    SpectralField b2 = make_rough_drift(8, 6, 0.5, 77, 1.0);
    CHECK(space_time_l2_distance(b, b2) == 0.0);
    SpectralField b3 = make_rough_drift(8, 6, 0.5, 78, 1.0);
    CHECK(space_time_l2_distance(b, b3) > 0.1);
}
