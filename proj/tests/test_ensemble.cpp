#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "helpers.hpp"
#include "torusflow/ensemble.hpp"

using namespace torusflow;

namespace {

NoiseBasis empty_basis() { return NoiseBasis(0, 0.0, 1.0, {}); }

}  // namespace

TEST_CASE("frozen flow: no noise, no drift") {
    SimConfig cfg;
    cfg.grid_side = 8;
    cfg.dt = 0.01;
    cfg.T = 0.1;
    cfg.replicas = 1;
    PathEnsemble e = simulate_replica(empty_basis(), SpectralField::zero(cfg.T), cfg, 0);
    for (int rec = 0; rec < e.recorded(); ++rec)
        for (int i = 0; i < e.particles; ++i)
            CHECK(torus_distance(e.point(rec, i), e.point(0, i)) == 0.0);
}

TEST_CASE("pure constant drift advances the grid exactly") {
    SimConfig cfg;
    cfg.grid_side = 6;
    cfg.dt = 0.005;
    cfg.T = 0.4;
    Vec2 c{0.3, -0.7};
    PathEnsemble e =
        simulate_replica(empty_basis(), SpectralField::constant(c, cfg.T), cfg, 0);
    for (int i = 0; i < e.particles; ++i) {
        TorusPoint expect(e.initial[2 * i] + cfg.T * c.x, e.initial[2 * i + 1] + cfg.T * c.y);
        CHECK(torus_distance(e.point(e.recorded() - 1, i), expect) <= 1e-10);
    }
}

TEST_CASE("identical seeds give bit-identical ensembles under any partitioning") {
    NoiseBasis basis = build_noise_basis(2, 2.0);
    SpectralField drift = SpectralField::constant({0.2, 0.1}, 0.1);
    SimConfig cfg;
    cfg.grid_side = 4;
    cfg.dt = 1e-3;
    cfg.T = 0.1;
    cfg.seed = 99;
    cfg.replicas = 4;

    auto a = simulate_ensemble(basis, drift, cfg);
    std::vector<PathEnsemble> b(cfg.replicas);
    // force serial execution: same result expected bit for bit
    parallel_for(cfg.replicas,
                 [&](int r) { b[r] = simulate_replica(basis, drift, cfg, r); }, 1);
    for (int r = 0; r < cfg.replicas; ++r) {
        REQUIRE(a[r].positions.size() == b[r].positions.size());
        CHECK(a[r].positions == b[r].positions);
        CHECK(a[r].noise == b[r].noise);
    }
}

TEST_CASE("one noise path per replica: coincident particles stay together") {
    NoiseBasis basis = build_noise_basis(2, 2.0);
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.T = 0.2;
    cfg.seed = 5;
    std::vector<double> pts = {1.0, 2.0, 1.0, 2.0, 4.0, 0.5};  // first two coincide
    PathEnsemble e = simulate_replica(basis, SpectralField::zero(cfg.T), cfg, 0,
                                      Scheme::EulerMaruyama, &pts);
    for (int rec = 0; rec < e.recorded(); ++rec) {
        CHECK(torus_distance(e.point(rec, 0), e.point(rec, 1)) == 0.0);
    }
    // and a different replica genuinely differs
    PathEnsemble e2 = simulate_replica(basis, SpectralField::zero(cfg.T), cfg, 1,
                                       Scheme::EulerMaruyama, &pts);
    CHECK(torus_distance(e.point(e.recorded() - 1, 2), e2.point(e2.recorded() - 1, 2)) > 1e-4);
}

TEST_CASE("noise increments have small pooled mean") {
    NoiseBasis basis = build_noise_basis(3, 2.0);
    SimConfig cfg;
    cfg.grid_side = 2;
    cfg.dt = 1e-3;
    cfg.T = 0.5;
    cfg.seed = 12;
    PathEnsemble e = simulate_replica(basis, SpectralField::zero(cfg.T), cfg, 0);
    double m = noise_mean_statistic(e);
    CHECK(std::abs(m) <= 4.0 / std::sqrt(double(e.steps) * e.mode_count));
}

TEST_CASE("heat-kernel oracle for the pure-noise flow") {
    // generator is Laplacian/2 once sigma sigma^T = Id, so
    // E[e^{i k.g_T(x)}] = e^{i k.x} e^{-|k|^2 T / 2}
    NoiseBasis basis = build_noise_basis(1, 2.0);
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.T = 0.5;
    cfg.seed = 31;
    cfg.replicas = 1024;
    cfg.thin = 500;  // endpoints only
    std::vector<double> pts = {0.7, 1.9, 3.3, 5.1, 2.2, 0.4};
    SpectralField none = SpectralField::zero(cfg.T);

    SimConfig cfg_pts = cfg;
    for (Wave k : {Wave{1, 0}, Wave{0, 1}}) {
        for (int which = 0; which < 3; ++which) {
            std::vector<std::complex<double>> vals(cfg.replicas);
            parallel_for(cfg.replicas, [&](int r) {
                PathEnsemble e = simulate_replica(basis, none, cfg_pts, r,
                                                  Scheme::EulerMaruyama, &pts);
                TorusPoint p = e.point(e.recorded() - 1, which);
                vals[r] = std::exp(std::complex<double>(0.0, k.dot(p)));
            });
            std::complex<double> mean{0.0, 0.0};
            for (auto& v : vals) mean += v;
            mean /= static_cast<double>(cfg.replicas);
            double var = 0.0;
            for (auto& v : vals) var += std::norm(v - mean);
            double se = std::sqrt(var / (cfg.replicas - 1.0) / cfg.replicas);

            TorusPoint x(pts[2 * which], pts[2 * which + 1]);
            std::complex<double> oracle =
                std::exp(std::complex<double>(0.0, k.dot(x))) *
                std::exp(-0.5 * k.norm_sq() * cfg.T);
            CHECK(std::abs(mean - oracle) <= 3.0 * se);
        }
    }
}

TEST_CASE("weak-error consistency across step sizes") {
    std::vector<double> pts = {1.3, 0.8};
    TorusPoint x(pts[0], pts[1]);
    const double T = 0.5;

    SECTION("pure noise: the stepper is weakly exact for harmonics at every dt") {
        // one Euler step maps e^{ik.x} to e^{ik.x} e^{-dt|k|^2/2} exactly
        // (Gaussian increment, identity covariance), so the heat oracle is
        // matched at each step size up to Monte Carlo noise alone
        NoiseBasis basis = build_noise_basis(1, 2.0);
        Wave k{1, 1};
        const int R = 1024;
        for (double dt : {4e-3, 2e-3, 1e-3}) {
            SimConfig cfg;
            cfg.dt = dt;
            cfg.T = T;
            cfg.seed = 77;
            cfg.replicas = R;
            cfg.thin = steps_for(T, dt);
            std::vector<std::complex<double>> vals(R);
            parallel_for(R, [&](int r) {
                PathEnsemble e = simulate_replica(basis, SpectralField::zero(T), cfg, r,
                                                  Scheme::EulerMaruyama, &pts);
                TorusPoint p = e.point(e.recorded() - 1, 0);
                vals[r] = std::exp(std::complex<double>(0.0, k.dot(p)));
            });
            std::complex<double> mean{0.0, 0.0};
            for (auto& v : vals) mean += v;
            mean /= static_cast<double>(R);
            double var = 0.0;
            for (auto& v : vals) var += std::norm(v - mean);
            double se = std::sqrt(var / (R - 1.0) / R);
            std::complex<double> oracle = std::exp(std::complex<double>(0.0, k.dot(x))) *
                                          std::exp(-0.5 * k.norm_sq() * T);
            INFO("dt " << dt << ": dev " << std::abs(mean - oracle) << " vs 3se " << 3 * se);
            CHECK(std::abs(mean - oracle) <= 3.0 * se);
        }
    }
    SECTION("nonlinear drift: discretization error halves when dt does") {
        // with a position-dependent drift the one-step exactness is gone;
        // the deterministic flow isolates the O(dt) error without any
        // Monte Carlo floor
        NoiseBasis none(0, 0.0, 1.0, {});
        VectorTrigPoly f(TrigPoly::harmonic(0, 1, 1.2, 0.0),
                         TrigPoly::harmonic(1, 0, 0.0, 1.2));
        SpectralField drift = SpectralField::single_bin(leray_project(f), T);
        SimConfig ref;
        ref.grid_side = 8;
        ref.dt = 6.25e-5;
        ref.T = T;
        PathEnsemble reference = simulate_replica(none, drift, ref, 0);
        double errs[3];
        int idx = 0;
        for (double dt : {4e-3, 2e-3, 1e-3}) {
            SimConfig cfg = ref;
            cfg.dt = dt;
            PathEnsemble e = simulate_replica(none, drift, cfg, 0);
            double worst = 0.0;
            for (int i = 0; i < e.particles; ++i)
                worst = std::max(worst,
                                 torus_distance(e.point(e.recorded() - 1, i),
                                                reference.point(reference.recorded() - 1, i)));
            errs[idx++] = worst;
        }
        INFO("errors " << errs[0] << " " << errs[1] << " " << errs[2]);
        CHECK(errs[1] <= 0.6 * errs[0]);
        CHECK(errs[2] <= 0.6 * errs[1]);
    }
}

TEST_CASE("incompressibility report") {
    SECTION("constant test function deviates by exactly zero") {
        SimConfig cfg;
        cfg.grid_side = 8;
        cfg.dt = 0.01;
        cfg.T = 0.05;
        NoiseBasis basis = build_noise_basis(1, 2.0);
        PathEnsemble e = simulate_replica(basis, SpectralField::zero(cfg.T), cfg, 0);
        auto rep = incompressibility_report(e, {TrigPoly::constant(1.0)});
        CHECK(rep.worst == 0.0);
    }
    SECTION("frozen flow: grid quadrature of cos is exact") {
        SimConfig cfg;
        cfg.grid_side = 8;
        cfg.dt = 0.01;
        cfg.T = 0.05;
        PathEnsemble e = simulate_replica(empty_basis(), SpectralField::zero(cfg.T), cfg, 0);
        auto rep = incompressibility_report(e, {TrigPoly::harmonic(1, 0, 1.0, 0.0)});
        CHECK(rep.worst <= 1e-14);
    }
    SECTION("noisy flow stays near-uniform at moderate resolution") {
        SimConfig cfg;
        cfg.grid_side = 32;
        cfg.dt = 2e-3;
        cfg.T = 0.25;
        cfg.seed = 3;
        NoiseBasis basis = build_noise_basis(3, 2.0);
        SpectralField drift = SpectralField::single_bin(
            leray_project(VectorTrigPoly(TrigPoly::harmonic(0, 1, 0.5, 0.0),
                                         TrigPoly::harmonic(1, 0, 0.0, 0.5))),
            cfg.T);
        PathEnsemble e = simulate_replica(basis, drift, cfg, 0);
        std::vector<TrigPoly> embedding = {
            TrigPoly::harmonic(1, 0, 1.0, 0.0), TrigPoly::harmonic(1, 0, 0.0, 1.0),
            TrigPoly::harmonic(0, 1, 1.0, 0.0), TrigPoly::harmonic(0, 1, 0.0, 1.0)};
        auto rep = incompressibility_report(e, embedding);
        CHECK(rep.worst <= 0.05);
    }
}

TEST_CASE("endpoint coupling") {
    SECTION("frozen flow concentrates on the diagonal") {
        SimConfig cfg;
        cfg.grid_side = 4;
        cfg.dt = 0.01;
        cfg.T = 0.04;
        PathEnsemble e = simulate_replica(empty_basis(), SpectralField::zero(cfg.T), cfg, 0);
        std::vector<PathEnsemble> es;
        es.push_back(std::move(e));
        EmpiricalCoupling c = endpoint_coupling(es);
        for (int i = 0; i < c.size(); ++i)
            CHECK(torus_distance(c.source(i), c.target(i)) == 0.0);
    }
    SECTION("constant drift concentrates on the shifted diagonal") {
        SimConfig cfg;
        cfg.grid_side = 4;
        cfg.dt = 0.01;
        cfg.T = 0.5;
        Vec2 a{0.4, 0.2};
        PathEnsemble e =
            simulate_replica(empty_basis(), SpectralField::constant(a, cfg.T), cfg, 0);
        std::vector<PathEnsemble> es;
        es.push_back(std::move(e));
        EmpiricalCoupling c = endpoint_coupling(es);
        for (int i = 0; i < c.size(); ++i) {
            TorusPoint expect = c.source(i).shifted(cfg.T * a);
            CHECK(torus_distance(expect, c.target(i)) <= 1e-10);
        }
    }
}

TEST_CASE("configuration errors are rejected") {
    SimConfig cfg;
    cfg.grid_side = 4;
    cfg.dt = 0.003;  // does not divide T
    cfg.T = 0.1;
    CHECK_THROWS_AS(
        simulate_replica(build_noise_basis(1, 2.0), SpectralField::zero(0.1), cfg, 0),
        std::invalid_argument);
}
