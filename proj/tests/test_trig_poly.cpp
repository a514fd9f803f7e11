#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "torusflow/trig_poly.hpp"

using namespace torusflow;
using tftest::random_point;

TEST_CASE("evaluation at simple points") {
    TrigPoly f = TrigPoly::harmonic(1, 0, 1.0, 0.0);  // cos(theta1)
    CHECK(f.eval(TorusPoint(0.0, 0.0)) == Catch::Approx(1.0));

    TrigPoly g = f + TrigPoly::harmonic(0, 1, 0.0, 1.0);  // cos t1 + sin t2
    CHECK(g.eval(TorusPoint(std::numbers::pi, std::numbers::pi / 2)) ==
          Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("evaluation matches direct term-by-term summation") {
    auto raw = tftest::random_raw_poly(3, 41);
    TrigPoly f = tftest::from_raw(raw);
    for (std::uint32_t i = 0; i < 40; ++i) {
        TorusPoint p = random_point(41, i);
        CHECK(f.eval(p) == Catch::Approx(tftest::raw_eval(raw, p)).margin(1e-12));
    }
}

TEST_CASE("canonicalization folds antipodal waves") {
    // cos(-k.theta) = cos(k.theta), sin(-k.theta) = -sin(k.theta)
    TrigPoly f = TrigPoly::harmonic(-1, 2, 0.7, 0.4);
    TrigPoly g = TrigPoly::harmonic(1, -2, 0.7, -0.4);
    for (std::uint32_t i = 0; i < 10; ++i) {
        TorusPoint p = random_point(7, i);
        CHECK(f.eval(p) == Catch::Approx(g.eval(p)).margin(1e-15));
    }
    CHECK(f.terms().size() == 1);
    CHECK(f.terms().begin()->first == Wave{1, -2});
}

TEST_CASE("spectral laplacian") {
    SECTION("single mode k=(1,0)") {
        TrigPoly f = TrigPoly::harmonic(1, 0, 1.0, 0.0);
        TrigPoly lap = f.laplacian();
        for (std::uint32_t i = 0; i < 10; ++i) {
            TorusPoint p = random_point(3, i);
            CHECK(lap.eval(p) == Catch::Approx(-f.eval(p)).margin(1e-15));
        }
    }
    SECTION("constants are annihilated") {
        TrigPoly f = TrigPoly::constant(2.5);
        CHECK(f.laplacian().empty());
        CHECK(f.gradient().u1().empty());
        CHECK(f.gradient().u2().empty());
    }
    SECTION("sin(2 t1 + t2) has laplacian -5 f, cross-checked by finite differences") {
        TrigPoly f = TrigPoly::harmonic(2, 1, 0.0, 1.0);
        TrigPoly lap = f.laplacian();
        auto eval = [&](const TorusPoint& p) { return f.eval(p); };
        double h = kTwoPi / 256;
        double max_err = 0.0;
        double max_vs_minus5 = 0.0;
        for (int i = 0; i < 256; i += 3) {
            for (int j = 0; j < 256; j += 3) {
                TorusPoint p(kTwoPi * i / 256, kTwoPi * j / 256);
                double fd = tftest::fd_laplacian(eval, p, h);
                max_err = std::max(max_err, std::abs(fd - lap.eval(p)));
                max_vs_minus5 = std::max(max_vs_minus5, std::abs(lap.eval(p) + 5.0 * f.eval(p)));
            }
        }
        CHECK(max_err <= 1e-6);
        CHECK(max_vs_minus5 <= 1e-14);
    }
}

TEST_CASE("gradient and laplacian agree with central differences on random input") {
    auto raw = tftest::random_raw_poly(3, 99);
    TrigPoly f = tftest::from_raw(raw);
    VectorTrigPoly grad = f.gradient();
    auto eval = [&](const TorusPoint& p) { return f.eval(p); };
    for (std::uint32_t i = 0; i < 25; ++i) {
        TorusPoint p = random_point(99, i);
        Vec2 g_fd = tftest::fd_gradient(eval, p, 1e-4);
        Vec2 g = grad.eval(p);
        CHECK(std::abs(g.x - g_fd.x) <= 1e-6);
        CHECK(std::abs(g.y - g_fd.y) <= 1e-6);
    }
}

TEST_CASE("div_product") {
    SECTION("psi = 1 against a divergence-free field gives the zero polynomial") {
        // (k2,-k1)cos(k.theta) is divergence-free
        VectorTrigPoly V(TrigPoly::harmonic(1, 2, 2.0, 0.0),
                         TrigPoly::harmonic(1, 2, -1.0, 0.0));
        TrigPoly d = div_product(TrigPoly::constant(1.0), V);
        CHECK(d.empty());
    }
    SECTION("psi = cos t1 against (1,0) cos t2") {
        TrigPoly psi = TrigPoly::harmonic(1, 0, 1.0, 0.0);
        VectorTrigPoly V(TrigPoly::harmonic(0, 1, 1.0, 0.0), TrigPoly());
        TrigPoly d = div_product(psi, V);
        // d/dt1 (cos t1 cos t2) = -sin t1 cos t2
        TrigPoly expect =
            TrigPoly::harmonic(1, 1, 0.0, -0.5) + TrigPoly::harmonic(1, -1, 0.0, -0.5);
        for (std::uint32_t i = 0; i < 20; ++i) {
            TorusPoint p = random_point(13, i);
            CHECK(d.eval(p) == Catch::Approx(expect.eval(p)).margin(1e-14));
            CHECK(d.eval(p) ==
                  Catch::Approx(-std::sin(p.theta1) * std::cos(p.theta2)).margin(1e-14));
        }
    }
    SECTION("gradient field: div(psi grad h) = <grad psi, grad h> + psi lap h") {
        TrigPoly psi = tftest::from_raw(tftest::random_raw_poly(2, 5));
        TrigPoly h = tftest::from_raw(tftest::random_raw_poly(2, 6));
        VectorTrigPoly gh = h.gradient();
        TrigPoly d = div_product(psi, gh);
        auto expect = [&](const TorusPoint& p) {
            Vec2 gp = psi.gradient().eval(p);
            Vec2 ghv = gh.eval(p);
            return dot(gp, ghv) + psi.eval(p) * h.laplacian().eval(p);
        };
        // pointwise finite-difference variant of the same identity
        auto psi_gh = [&](int axis, const TorusPoint& p) {
            return psi.eval(p) * (axis == 0 ? gh.u1().eval(p) : gh.u2().eval(p));
        };
        for (std::uint32_t i = 0; i < 15; ++i) {
            TorusPoint p = random_point(17, i);
            CHECK(d.eval(p) == Catch::Approx(expect(p)).margin(1e-12));
            double hstep = 1e-4;
            double fd =
                (psi_gh(0, TorusPoint(p.theta1 + hstep, p.theta2)) -
                 psi_gh(0, TorusPoint(p.theta1 - hstep, p.theta2))) / (2 * hstep) +
                (psi_gh(1, TorusPoint(p.theta1, p.theta2 + hstep)) -
                 psi_gh(1, TorusPoint(p.theta1, p.theta2 - hstep))) / (2 * hstep);
            CHECK(d.eval(p) == Catch::Approx(fd).margin(1e-6));
        }
    }
    SECTION("divergence theorem: integral of div(psi V) vanishes") {
        TrigPoly psi = tftest::from_raw(tftest::random_raw_poly(3, 8));
        VectorTrigPoly V(tftest::from_raw(tftest::random_raw_poly(2, 9)),
                         tftest::from_raw(tftest::random_raw_poly(2, 10)));
        CHECK(std::abs(div_product(psi, V).mass()) <= 1e-13);
    }
    SECTION("div_product against 1 recovers the divergence of any field") {
        VectorTrigPoly V(tftest::from_raw(tftest::random_raw_poly(3, 11)),
                         tftest::from_raw(tftest::random_raw_poly(3, 12)));
        TrigPoly d = div_product(TrigPoly::constant(1.0), V);
        TrigPoly expect = V.divergence();
        for (std::uint32_t i = 0; i < 15; ++i) {
            TorusPoint p = random_point(14, i);
            CHECK(d.eval(p) == Catch::Approx(expect.eval(p)).margin(1e-12));
        }
    }
}

TEST_CASE("l2 inner product") {
    TrigPoly c1 = TrigPoly::harmonic(1, 0, 1.0, 0.0);
    TrigPoly s1 = TrigPoly::harmonic(1, 0, 0.0, 1.0);

    SECTION("cos^2 integrates to 1/2 under the normalized measure") {
        CHECK(l2_inner(c1, c1) == Catch::Approx(0.5));
    }
    SECTION("cos and sin of the same wave are orthogonal") {
        CHECK(l2_inner(c1, s1) == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("random degree-4 pair matches 512^2-point quadrature") {
        TrigPoly f = tftest::from_raw(tftest::random_raw_poly(4, 21));
        TrigPoly g = tftest::from_raw(tftest::random_raw_poly(4, 22));
        double quad = tftest::grid_quadrature(
            [&](const TorusPoint& p) { return f.eval(p) * g.eval(p); }, 512);
        CHECK(l2_inner(f, g) == Catch::Approx(quad).margin(1e-10));
    }
    SECTION("symmetry, bilinearity, positivity") {
        TrigPoly f = tftest::from_raw(tftest::random_raw_poly(3, 31));
        TrigPoly g = tftest::from_raw(tftest::random_raw_poly(3, 32));
        TrigPoly h = tftest::from_raw(tftest::random_raw_poly(3, 33));
        CHECK(l2_inner(f, g) == Catch::Approx(l2_inner(g, f)));
        CHECK(l2_inner(f + 2.0 * g, h) ==
              Catch::Approx(l2_inner(f, h) + 2.0 * l2_inner(g, h)).margin(1e-12));
        CHECK(l2_inner(f, f) > 0.0);
    }
    SECTION("norm matches grid quadrature up to degree 8") {
        TrigPoly f = tftest::from_raw(tftest::random_raw_poly(8, 35));
        double quad = tftest::grid_quadrature(
            [&](const TorusPoint& p) { return f.eval(p) * f.eval(p); }, 64);
        CHECK(l2_inner(f, f) == Catch::Approx(quad).margin(1e-9));
    }
}

TEST_CASE("product is exact convolution") {
    TrigPoly f = tftest::from_raw(tftest::random_raw_poly(2, 51));
    TrigPoly g = tftest::from_raw(tftest::random_raw_poly(3, 52));
    TrigPoly fg = f * g;
    CHECK(fg.degree() <= f.degree() + g.degree());
    for (std::uint32_t i = 0; i < 25; ++i) {
        TorusPoint p = random_point(53, i);
        CHECK(fg.eval(p) == Catch::Approx(f.eval(p) * g.eval(p)).margin(1e-12));
    }
}

TEST_CASE("translation and heat damping") {
    TrigPoly f = tftest::from_raw(tftest::random_raw_poly(3, 61));
    Vec2 a{0.7, -1.3};
    TrigPoly ft = f.translated(a);
    for (std::uint32_t i = 0; i < 20; ++i) {
        TorusPoint p = random_point(62, i);
        CHECK(ft.eval(p) == Catch::Approx(f.eval(p.shifted(a))).margin(1e-12));
    }
    // heat semigroup: single mode decays at rate |k|^2/2
    TrigPoly m = TrigPoly::harmonic(2, 1, 1.0, 0.0);
    TrigPoly mh = m.heat(0.4);
    double damp = std::exp(-0.5 * 0.4 * 5.0);
    for (std::uint32_t i = 0; i < 10; ++i) {
        TorusPoint p = random_point(63, i);
        CHECK(mh.eval(p) == Catch::Approx(damp * m.eval(p)).margin(1e-14));
    }
}
