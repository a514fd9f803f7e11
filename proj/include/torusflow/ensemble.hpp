// Lagrangian particle ensembles: every particle in a replica is driven by
// the same Brownian path (it is one stochastic flow, not independent
// diffusions), so randomness across replicas comes from the replica index
// alone.  Increments are counter-keyed by (seed, replica, mode, step),
// which makes runs bit-identical under any worker partitioning.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "torusflow/harmonics.hpp"
#include "torusflow/noise_basis.hpp"
#include "torusflow/parallel.hpp"
#include "torusflow/philox.hpp"
#include "torusflow/spectral_field.hpp"

namespace torusflow {

struct SimConfig {
    int grid_side = 64;
    double dt = 1e-3;
    double T = 0.5;
    std::uint64_t seed = 0;
    int replicas = 64;
    int thin = 1;  // record every thin-th step (plus the initial state)
};

inline int steps_for(double T, double dt) {
    if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
    long long s = std::llround(T / dt);
    if (s < 1 || std::abs(s * dt - T) > 1e-9 * std::max(1.0, T))
        throw std::invalid_argument("dt must divide the horizon T");
    return static_cast<int>(s);
}

enum class Scheme {
    EulerMaruyama,     // Ito form; the correction field vanishes for this basis
    StratonovichHeun,  // midpoint predictor-corrector on the Stratonovich form
};

struct PathEnsemble {
    int grid_side = 0;
    int particles = 0;
    int steps = 0;
    int thin = 1;
    double dt = 0.0;
    double horizon = 0.0;
    std::uint64_t seed = 0;
    int replica = 0;
    std::string basis_id;
    std::string drift_id;
    int mode_count = 0;

    std::vector<double> initial;    // 2 * particles
    std::vector<double> positions;  // recorded() * 2 * particles
    std::vector<double> noise;      // steps * mode_count, raw Brownian increments

    int recorded() const { return steps / thin + 1; }

    std::span<const double> slice(int rec) const {
        return {positions.data() + static_cast<std::size_t>(rec) * 2 * particles,
                static_cast<std::size_t>(2) * particles};
    }

    TorusPoint point(int rec, int i) const {
        auto s = slice(rec);
        return TorusPoint(s[2 * i], s[2 * i + 1]);
    }

    double dw(int step, int mode) const {
        return noise[static_cast<std::size_t>(step) * mode_count + mode];
    }

    double time_of(int rec) const { return static_cast<double>(rec) * thin * dt; }
};

namespace detail {

struct BasisTable {
    std::vector<int> k1, k2;
    std::vector<double> vx, vy;  // lambda * (k2, -k1) per canonical wave
    int wave_count = 0;
    int max1 = 0, max2 = 0;

    static BasisTable build(const NoiseBasis& basis) {
        BasisTable t;
        // modes come in (A, B) pairs per wave, in construction order
        for (int i = 0; i < basis.size(); i += 2) {
            const NoiseMode& a = basis.mode(i);
            t.k1.push_back(a.k.k1);
            t.k2.push_back(a.k.k2);
            t.vx.push_back(a.weight * a.k.k2);
            t.vy.push_back(-a.weight * a.k.k1);
            t.max1 = std::max(t.max1, a.k.k1);
            t.max2 = std::max(t.max2, std::abs(a.k.k2));
        }
        t.wave_count = static_cast<int>(t.k1.size());
        return t;
    }
};

struct DriftTerm {
    int k1, k2;
    double c1, c2, s1, s2;
};

struct DriftTable {
    std::vector<std::vector<DriftTerm>> bins;
    const SpectralField* field = nullptr;
    int max1 = 0, max2 = 0;

    static DriftTable build(const SpectralField& drift) {
        DriftTable t;
        t.field = &drift;
        for (const auto& bin : drift.bins()) {
            auto waves = gather_waves(bin.field);
            std::vector<DriftTerm> terms;
            terms.reserve(waves.size());
            for (const auto& [k, w] : waves) {
                terms.push_back({k.k1, k.k2, w.c1, w.c2, w.s1, w.s2});
                t.max1 = std::max(t.max1, k.k1);
                t.max2 = std::max(t.max2, std::abs(k.k2));
            }
            t.bins.push_back(std::move(terms));
        }
        return t;
    }
};

/// Powers of e^{i theta} up to fixed exponents; evaluates the combined
/// displacement sigma(theta) dW + b(theta) dt for one particle step.
class StepWorkspace {
  public:
    StepWorkspace(const BasisTable& basis, const DriftTable& drift, double dt)
        : basis_(basis), drift_(drift), dt_(dt) {
        int m1 = std::max(basis.max1, drift.max1);
        int m2 = std::max(basis.max2, drift.max2);
        p1_.resize(m1 + 1);
        p2_.resize(m2 + 1);
    }

    Vec2 displacement(double t1, double t2, const double* dw, int bin) {
        powers(t1, t2);
        double ux = 0.0, uy = 0.0;
        for (int w = 0; w < basis_.wave_count; ++w) {
            Cx v = wave_val(basis_.k1[w], basis_.k2[w]);
            double amp = v.re * dw[2 * w] + v.im * dw[2 * w + 1];
            ux += basis_.vx[w] * amp;
            uy += basis_.vy[w] * amp;
        }
        if (bin >= 0) {
            double bx = 0.0, by = 0.0;
            for (const DriftTerm& t : drift_.bins[bin]) {
                Cx v = wave_val(t.k1, t.k2);
                bx += t.c1 * v.re + t.s1 * v.im;
                by += t.c2 * v.re + t.s2 * v.im;
            }
            ux += bx * dt_;
            uy += by * dt_;
        }
        return {ux, uy};
    }

  private:
    void powers(double t1, double t2) {
        Cx z1{std::cos(t1), std::sin(t1)};
        Cx z2{std::cos(t2), std::sin(t2)};
        p1_[0] = {1.0, 0.0};
        for (std::size_t a = 1; a < p1_.size(); ++a) p1_[a] = cmul(p1_[a - 1], z1);
        p2_[0] = {1.0, 0.0};
        for (std::size_t a = 1; a < p2_.size(); ++a) p2_[a] = cmul(p2_[a - 1], z2);
    }

    Cx wave_val(int k1, int k2) const {
        Cx b = k2 >= 0 ? p2_[k2] : Cx{p2_[-k2].re, -p2_[-k2].im};
        return cmul(p1_[k1], b);
    }

    const BasisTable& basis_;
    const DriftTable& drift_;
    double dt_;
    std::vector<Cx> p1_, p2_;
};

}  // namespace detail

inline std::vector<double> uniform_grid_points(int grid_side) {
    std::vector<double> pts;
    pts.reserve(static_cast<std::size_t>(grid_side) * grid_side * 2);
    for (int i = 0; i < grid_side; ++i) {
        for (int j = 0; j < grid_side; ++j) {
            pts.push_back(kTwoPi * i / grid_side);
            pts.push_back(kTwoPi * j / grid_side);
        }
    }
    return pts;
}

/// Simulate one replica.  All particles share the replica's Brownian path.
/// `noise_override` (steps x modes raw increments) replaces the counter
/// stream; refinement studies use it to couple runs across step sizes.
inline PathEnsemble simulate_replica(const NoiseBasis& basis, const SpectralField& drift,
                                     const SimConfig& cfg, int replica,
                                     Scheme scheme = Scheme::EulerMaruyama,
                                     const std::vector<double>* initial_points = nullptr,
                                     const std::vector<double>* noise_override = nullptr) {
    const int S = steps_for(cfg.T, cfg.dt);
    if (cfg.thin < 1 || S % cfg.thin != 0)
        throw std::invalid_argument("thin must divide the step count");
    if (!initial_points && cfg.grid_side < 2)
        throw std::invalid_argument("grid_side must be >= 2");

    PathEnsemble out;
    out.grid_side = initial_points ? 0 : cfg.grid_side;
    out.initial = initial_points ? *initial_points : uniform_grid_points(cfg.grid_side);
    out.particles = static_cast<int>(out.initial.size() / 2);
    out.steps = S;
    out.thin = cfg.thin;
    out.dt = cfg.dt;
    out.horizon = cfg.T;
    out.seed = cfg.seed;
    out.replica = replica;
    out.basis_id = basis.id();
    out.drift_id = drift.id();
    out.mode_count = basis.size();

    const int N = out.particles;
    const int M = out.mode_count;

    if (noise_override) {
        if (static_cast<int>(noise_override->size()) != S * M)
            throw std::invalid_argument("noise override size mismatch");
        out.noise = *noise_override;
    } else {
        out.noise.resize(static_cast<std::size_t>(S) * M);
        const double root_dt = std::sqrt(cfg.dt);
        for (int s = 0; s < S; ++s)
            for (int m = 0; m < M; ++m)
                out.noise[static_cast<std::size_t>(s) * M + m] =
                    root_dt * counter_normal(cfg.seed, RngStream::kNoise,
                                             static_cast<std::uint32_t>(replica),
                                             static_cast<std::uint32_t>(m),
                                             static_cast<std::uint32_t>(s));
    }

    out.positions.resize(static_cast<std::size_t>(out.recorded()) * 2 * N);
    std::vector<double> cur = out.initial;
    std::copy(cur.begin(), cur.end(), out.positions.begin());

    detail::BasisTable btab = detail::BasisTable::build(basis);
    detail::DriftTable dtab = detail::DriftTable::build(drift);
    detail::StepWorkspace work(btab, dtab, cfg.dt);
    const bool has_drift = !drift.is_zero();

    int rec = 1;
    for (int s = 0; s < S; ++s) {
        const double* dw = out.noise.data() + static_cast<std::size_t>(s) * M;
        int bin = has_drift ? drift.bin_index(s * cfg.dt) : -1;
        for (int i = 0; i < N; ++i) {
            double t1 = cur[2 * i], t2 = cur[2 * i + 1];
            Vec2 u = work.displacement(t1, t2, dw, bin);
            if (scheme == Scheme::StratonovichHeun) {
                Vec2 u2 = work.displacement(t1 + u.x, t2 + u.y, dw, bin);
                u = 0.5 * (u + u2);
            }
            double n1 = wrap_angle(t1 + u.x);
            double n2 = wrap_angle(t2 + u.y);
            if (!std::isfinite(n1) || !std::isfinite(n2))
                throw std::runtime_error("nonfinite particle state at step " +
                                         std::to_string(s));
            cur[2 * i] = n1;
            cur[2 * i + 1] = n2;
        }
        if ((s + 1) % cfg.thin == 0) {
            std::copy(cur.begin(), cur.end(),
                      out.positions.begin() + static_cast<std::size_t>(rec) * 2 * N);
            ++rec;
        }
    }
    return out;
}

inline std::vector<PathEnsemble> simulate_ensemble(const NoiseBasis& basis,
                                                   const SpectralField& drift,
                                                   const SimConfig& cfg,
                                                   Scheme scheme = Scheme::EulerMaruyama) {
    std::vector<PathEnsemble> out(cfg.replicas);
    parallel_for(cfg.replicas,
                 [&](int r) { out[r] = simulate_replica(basis, drift, cfg, r, scheme); });
    return out;
}

inline std::vector<PathEnsemble> simulate_ensemble(const NoiseBasis& basis,
                                                   const SpectralField& drift,
                                                   int grid_side, double dt,
                                                   std::uint64_t seed, int replicas) {
    SimConfig cfg;
    cfg.grid_side = grid_side;
    cfg.dt = dt;
    cfg.T = drift.horizon();
    cfg.seed = seed;
    cfg.replicas = replicas;
    return simulate_ensemble(basis, drift, cfg);
}

/// Stream replicas through `fn(replica_index, ensemble)` without keeping
/// them all in memory; fn runs on worker threads, one replica at a time.
template <class F>
void for_each_replica(const NoiseBasis& basis, const SpectralField& drift,
                      const SimConfig& cfg, F&& fn,
                      Scheme scheme = Scheme::EulerMaruyama) {
    parallel_for(cfg.replicas, [&](int r) {
        PathEnsemble e = simulate_replica(basis, drift, cfg, r, scheme);
        fn(r, e);
    });
}

/// Pooled empirical mean of the standardized increments; should be within
/// 4 / sqrt(steps * modes) of zero for healthy noise.
inline double noise_mean_statistic(const PathEnsemble& e) {
    if (e.noise.empty()) return 0.0;
    double acc = 0.0;
    for (double v : e.noise) acc += v;
    return acc / (std::sqrt(e.dt) * static_cast<double>(e.noise.size()));
}

struct IncompressibilityReport {
    std::vector<double> max_abs_deviation;  // per test function
    std::vector<double> at_time;            // argmax time per test
    double worst = 0.0;
};

/// Deviation of the empirical quadrature (1/N) sum f(g_t(x_i)) from the
/// exact integral of f, at every recorded time.
inline IncompressibilityReport incompressibility_report(const PathEnsemble& paths,
                                                        const std::vector<TrigPoly>& tests) {
    WaveSet ws;
    for (const auto& f : tests) ws.add(f);
    ws.add(Wave{0, 0});
    ws.finalize();

    std::vector<PackedPoly> packed;
    packed.reserve(tests.size());
    for (const auto& f : tests) packed.push_back(PackedPoly::pack(f, ws));

    std::vector<std::vector<double>> unit(1, std::vector<double>(paths.particles, 1.0));
    MomentAccumulator acc(ws, paths.particles);
    acc.set_dense_weights(&unit);

    IncompressibilityReport rep;
    rep.max_abs_deviation.assign(tests.size(), 0.0);
    rep.at_time.assign(tests.size(), 0.0);
    std::vector<double> mc(ws.size()), msn(ws.size());
    for (int rec = 0; rec < paths.recorded(); ++rec) {
        acc.run(paths.slice(rec), mc.data(), msn.data());
        for (std::size_t t = 0; t < tests.size(); ++t) {
            double dev = std::abs(packed[t].pair(mc.data(), msn.data()) - tests[t].mass());
            if (dev > rep.max_abs_deviation[t]) {
                rep.max_abs_deviation[t] = dev;
                rep.at_time[t] = paths.time_of(rec);
            }
            rep.worst = std::max(rep.worst, dev);
        }
    }
    return rep;
}

/// Pooled (initial, terminal) pairs across replicas.
struct EmpiricalCoupling {
    std::vector<double> x;  // 2 * n
    std::vector<double> y;  // 2 * n

    int size() const { return static_cast<int>(x.size() / 2); }

    TorusPoint source(int i) const { return TorusPoint(x[2 * i], x[2 * i + 1]); }
    TorusPoint target(int i) const { return TorusPoint(y[2 * i], y[2 * i + 1]); }
};

inline EmpiricalCoupling endpoint_coupling(std::span<const PathEnsemble> ensembles) {
    EmpiricalCoupling c;
    for (const auto& e : ensembles) {
        auto last = e.slice(e.recorded() - 1);
        c.x.insert(c.x.end(), e.initial.begin(), e.initial.end());
        c.y.insert(c.y.end(), last.begin(), last.end());
    }
    return c;
}

}  // namespace torusflow
