// Factorization of a drifted flow into a drift-free stochastic flow
// composed with a random finite-variation flow:
//   g(t) = g~(t) o psi(t),   d psi = b~(t, psi) dt,
//   b~(t, y) = (T_y g~(t))^{-1} b(t, g~(t)(y)).
//
// g~ and its tangent flow are integrated with a Stratonovich midpoint
// (Heun) scheme: the Ito/Euler shortcut valid for the position flow does
// not extend to the Jacobian, whose noise fields do not have vanishing
// self-advection.  The pullback drift b~ lives on the Lagrangian grid of
// initial points; psi-integration and the transport solve interpolate it
// bilinearly and treat it as constant across each step.
#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "torusflow/ensemble.hpp"
#include "torusflow/test_functions.hpp"
#include "torusflow/transport.hpp"

namespace torusflow {

struct MartingaleFlowRecord {
    int grid_side = 0;
    int particles = 0;
    int steps = 0;
    double dt = 0.0;
    double horizon = 0.0;
    std::uint64_t seed = 0;
    int replica = 0;
    int mode_count = 0;

    std::vector<double> initial;    // 2N
    std::vector<double> positions;  // (S+1) * 2N
    std::vector<double> jacobians;  // (S+1) * 4N, row-major (J11 J12 J21 J22)
    std::vector<double> noise;      // S * M

    double min_det = 1.0;
    double max_det = 1.0;
    bool det_positive = true;

    TorusPoint point(int step, int i) const {
        const double* p = positions.data() + (static_cast<std::size_t>(step) * particles + i) * 2;
        return TorusPoint(p[0], p[1]);
    }

    Mat2 jacobian(int step, int i) const {
        const double* p = jacobians.data() + (static_cast<std::size_t>(step) * particles + i) * 4;
        return {p[0], p[1], p[2], p[3]};
    }

    std::span<const double> slice(int step) const {
        return {positions.data() + static_cast<std::size_t>(step) * 2 * particles,
                static_cast<std::size_t>(2) * particles};
    }

    double dw(int step, int mode) const {
        return noise[static_cast<std::size_t>(step) * mode_count + mode];
    }
};

namespace detail {

/// Gradient of the combined noise displacement: sum_i grad sigma_i dW_i.
/// For A_k the matrix is -lambda (v x k) sin(k.theta), for B_k it is
/// +lambda (v x k) cos(k.theta), with v = (k2, -k1).
struct JacobianWorkspace {
    const BasisTable& basis;
    std::vector<Cx> p1, p2;

    explicit JacobianWorkspace(const BasisTable& b) : basis(b) {
        p1.resize(b.max1 + 1);
        p2.resize(b.max2 + 1);
    }

    void powers(double t1, double t2) {
        Cx z1{std::cos(t1), std::sin(t1)};
        Cx z2{std::cos(t2), std::sin(t2)};
        p1[0] = {1.0, 0.0};
        for (std::size_t a = 1; a < p1.size(); ++a) p1[a] = cmul(p1[a - 1], z1);
        p2[0] = {1.0, 0.0};
        for (std::size_t a = 1; a < p2.size(); ++a) p2[a] = cmul(p2[a - 1], z2);
    }

    Cx wave_val(int k1, int k2) const {
        Cx b = k2 >= 0 ? p2[k2] : Cx{p2[-k2].re, -p2[-k2].im};
        return cmul(p1[k1], b);
    }

    /// displacement = sum sigma_i dW_i; grad = its spatial Jacobian.
    void combined(double t1, double t2, const double* dw, Vec2& disp, Mat2& grad) {
        powers(t1, t2);
        disp = {0.0, 0.0};
        grad = {0.0, 0.0, 0.0, 0.0};
        for (int w = 0; w < basis.wave_count; ++w) {
            Cx v = wave_val(basis.k1[w], basis.k2[w]);
            double amp_a = dw[2 * w];
            double amp_b = dw[2 * w + 1];
            double vx = basis.vx[w], vy = basis.vy[w];
            disp.x += vx * (v.re * amp_a + v.im * amp_b);
            disp.y += vy * (v.re * amp_a + v.im * amp_b);
            // derivative: -sin for the cosine field, +cos for the sine field
            double d = -v.im * amp_a + v.re * amp_b;
            grad.a11 += vx * basis.k1[w] * d;
            grad.a12 += vx * basis.k2[w] * d;
            grad.a21 += vy * basis.k1[w] * d;
            grad.a22 += vy * basis.k2[w] * d;
        }
    }
};

}  // namespace detail

/// Drift-free flow with its tangent (variational) flow, Heun-stepped.
/// Pass `noise_override` to drive the flow with prescribed increments
/// (refinement studies); it must hold steps * mode_count values.
inline MartingaleFlowRecord martingale_flow_with_jacobian(
    const NoiseBasis& basis, int grid_side, double dt, double T, std::uint64_t seed,
    int replica = 0, const std::vector<double>* noise_override = nullptr) {
    const int S = steps_for(T, dt);
    MartingaleFlowRecord rec;
    rec.grid_side = grid_side;
    rec.initial = uniform_grid_points(grid_side);
    rec.particles = static_cast<int>(rec.initial.size() / 2);
    rec.steps = S;
    rec.dt = dt;
    rec.horizon = T;
    rec.seed = seed;
    rec.replica = replica;
    rec.mode_count = basis.size();

    const int N = rec.particles;
    const int M = rec.mode_count;
    if (noise_override) {
        if (static_cast<int>(noise_override->size()) != S * M)
            throw std::invalid_argument("noise override size mismatch");
        rec.noise = *noise_override;
    } else {
        rec.noise.resize(static_cast<std::size_t>(S) * M);
        const double root_dt = std::sqrt(dt);
        for (int s = 0; s < S; ++s)
            for (int m = 0; m < M; ++m)
                rec.noise[static_cast<std::size_t>(s) * M + m] =
                    root_dt * counter_normal(seed, RngStream::kNoise,
                                             static_cast<std::uint32_t>(replica),
                                             static_cast<std::uint32_t>(m),
                                             static_cast<std::uint32_t>(s));
    }

    rec.positions.resize(static_cast<std::size_t>(S + 1) * 2 * N);
    rec.jacobians.resize(static_cast<std::size_t>(S + 1) * 4 * N);
    std::copy(rec.initial.begin(), rec.initial.end(), rec.positions.begin());
    for (int i = 0; i < N; ++i) {
        double* J = rec.jacobians.data() + static_cast<std::size_t>(i) * 4;
        J[0] = 1.0;
        J[1] = 0.0;
        J[2] = 0.0;
        J[3] = 1.0;
    }

    detail::BasisTable btab = detail::BasisTable::build(basis);
    detail::JacobianWorkspace work(btab);

    for (int s = 0; s < S; ++s) {
        const double* dw = rec.noise.data() + static_cast<std::size_t>(s) * M;
        const double* cur_p = rec.positions.data() + static_cast<std::size_t>(s) * 2 * N;
        const double* cur_j = rec.jacobians.data() + static_cast<std::size_t>(s) * 4 * N;
        double* nxt_p = rec.positions.data() + static_cast<std::size_t>(s + 1) * 2 * N;
        double* nxt_j = rec.jacobians.data() + static_cast<std::size_t>(s + 1) * 4 * N;
        for (int i = 0; i < N; ++i) {
            double t1 = cur_p[2 * i], t2 = cur_p[2 * i + 1];
            Mat2 J{cur_j[4 * i], cur_j[4 * i + 1], cur_j[4 * i + 2], cur_j[4 * i + 3]};

            Vec2 d1;
            Mat2 g1;
            work.combined(t1, t2, dw, d1, g1);
            Mat2 Jbar = J + g1 * J;
            Vec2 d2;
            Mat2 g2;
            work.combined(t1 + d1.x, t2 + d1.y, dw, d2, g2);

            double n1 = wrap_angle(t1 + 0.5 * (d1.x + d2.x));
            double n2 = wrap_angle(t2 + 0.5 * (d1.y + d2.y));
            Mat2 Jn = J + 0.5 * (g1 * J + g2 * Jbar);

            nxt_p[2 * i] = n1;
            nxt_p[2 * i + 1] = n2;
            nxt_j[4 * i] = Jn.a11;
            nxt_j[4 * i + 1] = Jn.a12;
            nxt_j[4 * i + 2] = Jn.a21;
            nxt_j[4 * i + 3] = Jn.a22;

            double det = Jn.det();
            rec.min_det = std::min(rec.min_det, det);
            rec.max_det = std::max(rec.max_det, det);
            if (det <= 0.0) rec.det_positive = false;
        }
    }
    return rec;
}

/// Pullback drift on the Lagrangian grid: b~(t_s, y_i) = J^{-1} b(t_s, g~(y_i)).
inline std::vector<double> pullback_drift_grid(const MartingaleFlowRecord& rec,
                                               const SpectralField& b, int step) {
    std::vector<double> out(static_cast<std::size_t>(rec.particles) * 2);
    double t = step * rec.dt;
    const VectorTrigPoly& field = b.at_time(std::min(t, rec.horizon));
    for (int i = 0; i < rec.particles; ++i) {
        Vec2 bv = field.eval(rec.point(step, i));
        Vec2 pb = rec.jacobian(step, i).inverse().apply(bv);
        out[2 * i] = pb.x;
        out[2 * i + 1] = pb.y;
    }
    return out;
}

namespace detail {

/// Periodic bilinear interpolation of a vector field given at the nodes of
/// a uniform n x n grid (values interleaved, node (a,b) at index b + n*a).
inline Vec2 bilinear_vec(std::span<const double> values, int n, double t1, double t2) {
    double x = wrap_angle(t1) * n / kTwoPi;
    double y = wrap_angle(t2) * n / kTwoPi;
    int a0 = static_cast<int>(x) % n;
    int b0 = static_cast<int>(y) % n;
    double fx = x - std::floor(x);
    double fy = y - std::floor(y);
    int a1 = (a0 + 1) % n;
    int b1 = (b0 + 1) % n;
    auto at = [&](int a, int b) {
        const double* p = values.data() + (static_cast<std::size_t>(a) * n + b) * 2;
        return Vec2{p[0], p[1]};
    };
    Vec2 v00 = at(a0, b0), v01 = at(a0, b1), v10 = at(a1, b0), v11 = at(a1, b1);
    return {(1 - fx) * ((1 - fy) * v00.x + fy * v01.x) + fx * ((1 - fy) * v10.x + fy * v11.x),
            (1 - fx) * ((1 - fy) * v00.y + fy * v01.y) + fx * ((1 - fy) * v10.y + fy * v11.y)};
}

/// Scalar version, in grid-index coordinates (xi = theta1 * n / 2pi); the
/// call sites keep departure points in index space so that zero
/// displacement reproduces nodal values exactly.
inline double bilinear_scalar_idx(std::span<const double> values, int n, double xi,
                                  double yi) {
    double x = xi - std::floor(xi / n) * n;
    double y = yi - std::floor(yi / n) * n;
    int a0 = static_cast<int>(x);
    int b0 = static_cast<int>(y);
    double fx = x - a0;
    double fy = y - b0;
    a0 %= n;
    b0 %= n;
    int a1 = (a0 + 1) % n;
    int b1 = (b0 + 1) % n;
    auto at = [&](int a, int b) { return values[static_cast<std::size_t>(a) * n + b]; };
    return (1 - fx) * ((1 - fy) * at(a0, b0) + fy * at(a0, b1)) +
           fx * ((1 - fy) * at(a1, b0) + fy * at(a1, b1));
}

}  // namespace detail

struct FactorizationReport {
    double max_distance = 0.0;
    double mean_distance = 0.0;
    double min_det = 0.0;
    double max_det = 0.0;
    bool det_positive = true;
};

/// Companion drifted flow with the same Heun discretization, driven by the
/// record's own noise increments (so refinement studies with prescribed
/// noise stay coupled).
inline PathEnsemble companion_flow(const NoiseBasis& basis, const SpectralField& drift,
                                   const MartingaleFlowRecord& rec) {
    PathEnsemble out;
    out.grid_side = rec.grid_side;
    out.initial = rec.initial;
    out.particles = rec.particles;
    out.steps = rec.steps;
    out.thin = 1;
    out.dt = rec.dt;
    out.horizon = rec.horizon;
    out.seed = rec.seed;
    out.replica = rec.replica;
    out.basis_id = basis.id();
    out.drift_id = drift.id();
    out.mode_count = rec.mode_count;
    out.noise = rec.noise;
    out.positions.resize(static_cast<std::size_t>(rec.steps + 1) * 2 * rec.particles);
    std::copy(out.initial.begin(), out.initial.end(), out.positions.begin());

    detail::BasisTable btab = detail::BasisTable::build(basis);
    detail::DriftTable dtab = detail::DriftTable::build(drift);
    detail::StepWorkspace work(btab, dtab, rec.dt);
    const bool has_drift = !drift.is_zero();
    const int N = rec.particles;
    std::vector<double> cur = out.initial;
    for (int s = 0; s < rec.steps; ++s) {
        const double* dw = rec.noise.data() + static_cast<std::size_t>(s) * rec.mode_count;
        int bin = has_drift ? drift.bin_index(s * rec.dt) : -1;
        for (int i = 0; i < N; ++i) {
            double t1 = cur[2 * i], t2 = cur[2 * i + 1];
            Vec2 u = work.displacement(t1, t2, dw, bin);
            Vec2 u2 = work.displacement(t1 + u.x, t2 + u.y, dw, bin);
            cur[2 * i] = wrap_angle(t1 + 0.5 * (u.x + u2.x));
            cur[2 * i + 1] = wrap_angle(t2 + 0.5 * (u.y + u2.y));
        }
        std::copy(cur.begin(), cur.end(),
                  out.positions.begin() + static_cast<std::size_t>(s + 1) * 2 * N);
    }
    return out;
}

/// Integrates d psi = b~(t, psi) dt with a classical 4th-order step
/// (b~ bilinear in space, frozen across each step) and measures the torus
/// distance between g_T and g~_T o psi_T.
///
/// `stride` factorizes only the sub-lattice of every stride-th grid line;
/// the pullback drift keeps the full record resolution either way.
inline FactorizationReport factorize(const SpectralField& drift,
                                     const MartingaleFlowRecord& rec,
                                     const PathEnsemble& companion, int stride = 1) {
    if (companion.particles != rec.particles || companion.steps != rec.steps)
        throw std::invalid_argument("companion flow does not match the record");
    const int n = rec.grid_side;
    if (stride < 1 || n % stride != 0)
        throw std::invalid_argument("stride must divide the grid side");

    std::vector<int> subset;
    for (int a = 0; a < n; a += stride)
        for (int c = 0; c < n; c += stride) subset.push_back(a * n + c);
    const int Ns = static_cast<int>(subset.size());

    std::vector<double> psi(static_cast<std::size_t>(Ns) * 2);
    for (int i = 0; i < Ns; ++i) {
        psi[2 * i] = rec.initial[2 * subset[i]];
        psi[2 * i + 1] = rec.initial[2 * subset[i] + 1];
    }

    for (int s = 0; s < rec.steps; ++s) {
        std::vector<double> bt = pullback_drift_grid(rec, drift, s);
        auto vel = [&](double t1, double t2) { return detail::bilinear_vec(bt, n, t1, t2); };
        for (int i = 0; i < Ns; ++i) {
            double x = psi[2 * i], y = psi[2 * i + 1];
            Vec2 k1 = vel(x, y);
            Vec2 k2 = vel(x + 0.5 * rec.dt * k1.x, y + 0.5 * rec.dt * k1.y);
            Vec2 k3 = vel(x + 0.5 * rec.dt * k2.x, y + 0.5 * rec.dt * k2.y);
            Vec2 k4 = vel(x + rec.dt * k3.x, y + rec.dt * k3.y);
            psi[2 * i] = wrap_angle(x + rec.dt / 6.0 *
                                            (k1.x + 2 * k2.x + 2 * k3.x + k4.x));
            psi[2 * i + 1] = wrap_angle(y + rec.dt / 6.0 *
                                                (k1.y + 2 * k2.y + 2 * k3.y + k4.y));
            if (!std::isfinite(psi[2 * i]) || !std::isfinite(psi[2 * i + 1]))
                throw std::runtime_error("nonfinite psi state");
        }
    }

    // displacement field of g~_T on the grid; assumes displacements < pi,
    // valid for the short horizons used here
    const int N = rec.particles;
    std::vector<double> disp(static_cast<std::size_t>(N) * 2);
    for (int i = 0; i < N; ++i) {
        TorusPoint gT = rec.point(rec.steps, i);
        disp[2 * i] = angle_diff(gT.theta1, rec.initial[2 * i]);
        disp[2 * i + 1] = angle_diff(gT.theta2, rec.initial[2 * i + 1]);
    }

    FactorizationReport rep;
    rep.min_det = rec.min_det;
    rep.max_det = rec.max_det;
    rep.det_positive = rec.det_positive;
    double acc = 0.0;
    for (int i = 0; i < Ns; ++i) {
        Vec2 d = detail::bilinear_vec(disp, n, psi[2 * i], psi[2 * i + 1]);
        TorusPoint composed(psi[2 * i] + d.x, psi[2 * i + 1] + d.y);
        double dist =
            torus_distance(companion.point(companion.recorded() - 1, subset[i]), composed);
        rep.max_distance = std::max(rep.max_distance, dist);
        acc += dist;
    }
    rep.mean_distance = acc / Ns;
    return rep;
}

/// dt-refinement of the factorization error with a common Brownian path:
/// increments are drawn at the fine resolution and pair-summed for the
/// coarse run.
struct FactorizationRefinement {
    FactorizationReport coarse;
    FactorizationReport fine;
    double ratio = 0.0;  // fine max distance / coarse max distance
};

inline FactorizationRefinement factorization_refinement(const NoiseBasis& basis,
                                                        const SpectralField& drift,
                                                        int grid_side, double dt,
                                                        std::uint64_t seed, int replica = 0,
                                                        int stride = 1) {
    const double T = drift.horizon();
    const int S = steps_for(T, dt);
    const int M = basis.size();
    const double fine_dt = 0.5 * dt;
    std::vector<double> fine_noise(static_cast<std::size_t>(2 * S) * M);
    const double root = std::sqrt(fine_dt);
    for (int s = 0; s < 2 * S; ++s)
        for (int m = 0; m < M; ++m)
            fine_noise[static_cast<std::size_t>(s) * M + m] =
                root * counter_normal(seed, RngStream::kNoise,
                                      static_cast<std::uint32_t>(replica),
                                      static_cast<std::uint32_t>(m),
                                      static_cast<std::uint32_t>(s));
    std::vector<double> coarse_noise(static_cast<std::size_t>(S) * M);
    for (int s = 0; s < S; ++s)
        for (int m = 0; m < M; ++m)
            coarse_noise[static_cast<std::size_t>(s) * M + m] =
                fine_noise[static_cast<std::size_t>(2 * s) * M + m] +
                fine_noise[static_cast<std::size_t>(2 * s + 1) * M + m];

    FactorizationRefinement out;
    MartingaleFlowRecord rc = martingale_flow_with_jacobian(basis, grid_side, dt, T, seed,
                                                            replica, &coarse_noise);
    out.coarse = factorize(drift, rc, companion_flow(basis, drift, rc), stride);
    MartingaleFlowRecord rf = martingale_flow_with_jacobian(basis, grid_side, fine_dt, T,
                                                            seed, replica, &fine_noise);
    out.fine = factorize(drift, rf, companion_flow(basis, drift, rf), stride);
    out.ratio = out.coarse.max_distance > 0.0
                    ? out.fine.max_distance / out.coarse.max_distance
                    : 0.0;
    return out;
}

/// One-pass factorization without stored history: g~, its tangent flow, the
/// companion drifted flow and psi advance together step by step.  This is
/// what makes fine pullback grids affordable, and fine grids are what let
/// the time-discretization error dominate the spatial interpolation error
/// in refinement studies.
inline FactorizationReport fused_factorization(const NoiseBasis& basis,
                                               const SpectralField& drift, int grid_side,
                                               int stride, double dt, std::uint64_t seed,
                                               int replica = 0,
                                               const std::vector<double>* noise_override =
                                                   nullptr) {
    const double T = drift.horizon();
    const int S = steps_for(T, dt);
    const int n = grid_side;
    const int N = n * n;
    const int M = basis.size();
    if (stride < 1 || n % stride != 0)
        throw std::invalid_argument("stride must divide the grid side");

    std::vector<double> noise;
    if (noise_override) {
        if (static_cast<int>(noise_override->size()) != S * M)
            throw std::invalid_argument("noise override size mismatch");
        noise = *noise_override;
    } else {
        noise.resize(static_cast<std::size_t>(S) * M);
        const double root_dt = std::sqrt(dt);
        for (int s = 0; s < S; ++s)
            for (int m = 0; m < M; ++m)
                noise[static_cast<std::size_t>(s) * M + m] =
                    root_dt * counter_normal(seed, RngStream::kNoise,
                                             static_cast<std::uint32_t>(replica),
                                             static_cast<std::uint32_t>(m),
                                             static_cast<std::uint32_t>(s));
    }

    std::vector<double> initial = uniform_grid_points(n);
    std::vector<double> gt = initial;                                   // g~
    std::vector<double> jac(static_cast<std::size_t>(N) * 4);           // tangent flow
    for (int i = 0; i < N; ++i) {
        jac[4 * i] = 1.0;
        jac[4 * i + 3] = 1.0;
    }
    std::vector<double> comp = initial;  // companion g

    std::vector<int> subset;
    for (int a = 0; a < n; a += stride)
        for (int c = 0; c < n; c += stride) subset.push_back(a * n + c);
    const int Ns = static_cast<int>(subset.size());
    std::vector<double> psi(static_cast<std::size_t>(Ns) * 2);
    for (int i = 0; i < Ns; ++i) {
        psi[2 * i] = initial[2 * subset[i]];
        psi[2 * i + 1] = initial[2 * subset[i] + 1];
    }

    detail::BasisTable btab = detail::BasisTable::build(basis);
    detail::DriftTable dtab = detail::DriftTable::build(drift);
    detail::JacobianWorkspace jwork(btab);
    detail::StepWorkspace cwork(btab, dtab, dt);
    const bool has_drift = !drift.is_zero();

    FactorizationReport rep;
    std::vector<double> bt(static_cast<std::size_t>(N) * 2);
    for (int s = 0; s < S; ++s) {
        const double* dw = noise.data() + static_cast<std::size_t>(s) * M;
        int bin = has_drift ? drift.bin_index(s * dt) : -1;

        // pullback drift from the current state, then advance psi
        const VectorTrigPoly& field = drift.at_time(s * dt);
        for (int i = 0; i < N; ++i) {
            Mat2 J{jac[4 * i], jac[4 * i + 1], jac[4 * i + 2], jac[4 * i + 3]};
            Vec2 bv = field.eval(TorusPoint(gt[2 * i], gt[2 * i + 1]));
            Vec2 pb = J.inverse().apply(bv);
            bt[2 * i] = pb.x;
            bt[2 * i + 1] = pb.y;
        }
        auto vel = [&](double t1, double t2) { return detail::bilinear_vec(bt, n, t1, t2); };
        for (int i = 0; i < Ns; ++i) {
            double x = psi[2 * i], y = psi[2 * i + 1];
            Vec2 k1 = vel(x, y);
            Vec2 k2 = vel(x + 0.5 * dt * k1.x, y + 0.5 * dt * k1.y);
            Vec2 k3 = vel(x + 0.5 * dt * k2.x, y + 0.5 * dt * k2.y);
            Vec2 k4 = vel(x + dt * k3.x, y + dt * k3.y);
            psi[2 * i] = wrap_angle(x + dt / 6.0 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x));
            psi[2 * i + 1] = wrap_angle(y + dt / 6.0 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y));
        }

        // advance g~, the tangent flow, and the companion
        for (int i = 0; i < N; ++i) {
            double t1 = gt[2 * i], t2 = gt[2 * i + 1];
            Mat2 J{jac[4 * i], jac[4 * i + 1], jac[4 * i + 2], jac[4 * i + 3]};
            Vec2 d1;
            Mat2 g1;
            jwork.combined(t1, t2, dw, d1, g1);
            Mat2 Jbar = J + g1 * J;
            Vec2 d2;
            Mat2 g2;
            jwork.combined(t1 + d1.x, t2 + d1.y, dw, d2, g2);
            gt[2 * i] = wrap_angle(t1 + 0.5 * (d1.x + d2.x));
            gt[2 * i + 1] = wrap_angle(t2 + 0.5 * (d1.y + d2.y));
            Mat2 Jn = J + 0.5 * (g1 * J + g2 * Jbar);
            jac[4 * i] = Jn.a11;
            jac[4 * i + 1] = Jn.a12;
            jac[4 * i + 2] = Jn.a21;
            jac[4 * i + 3] = Jn.a22;
            double det = Jn.det();
            rep.min_det = s == 0 && i == 0 ? det : std::min(rep.min_det, det);
            rep.max_det = s == 0 && i == 0 ? det : std::max(rep.max_det, det);
            if (det <= 0.0) rep.det_positive = false;

            double c1 = comp[2 * i], c2 = comp[2 * i + 1];
            Vec2 u = cwork.displacement(c1, c2, dw, bin);
            Vec2 u2 = cwork.displacement(c1 + u.x, c2 + u.y, dw, bin);
            comp[2 * i] = wrap_angle(c1 + 0.5 * (u.x + u2.x));
            comp[2 * i + 1] = wrap_angle(c2 + 0.5 * (u.y + u2.y));
        }
    }

    std::vector<double> disp(static_cast<std::size_t>(N) * 2);
    for (int i = 0; i < N; ++i) {
        disp[2 * i] = angle_diff(gt[2 * i], initial[2 * i]);
        disp[2 * i + 1] = angle_diff(gt[2 * i + 1], initial[2 * i + 1]);
    }
    double acc = 0.0;
    for (int i = 0; i < Ns; ++i) {
        Vec2 d = detail::bilinear_vec(disp, n, psi[2 * i], psi[2 * i + 1]);
        TorusPoint composed(psi[2 * i] + d.x, psi[2 * i + 1] + d.y);
        TorusPoint gT(comp[2 * subset[i]], comp[2 * subset[i] + 1]);
        double dist = torus_distance(gT, composed);
        rep.max_distance = std::max(rep.max_distance, dist);
        acc += dist;
    }
    rep.mean_distance = acc / Ns;
    return rep;
}

/// Refinement with a common Brownian path through the fused route.
inline FactorizationRefinement fused_factorization_refinement(const NoiseBasis& basis,
                                                              const SpectralField& drift,
                                                              int grid_side, int stride,
                                                              double dt, std::uint64_t seed,
                                                              int replica = 0) {
    const double T = drift.horizon();
    const int S = steps_for(T, dt);
    const int M = basis.size();
    const double fine_dt = 0.5 * dt;
    std::vector<double> fine_noise(static_cast<std::size_t>(2 * S) * M);
    const double root = std::sqrt(fine_dt);
    for (int s = 0; s < 2 * S; ++s)
        for (int m = 0; m < M; ++m)
            fine_noise[static_cast<std::size_t>(s) * M + m] =
                root * counter_normal(seed, RngStream::kNoise,
                                      static_cast<std::uint32_t>(replica),
                                      static_cast<std::uint32_t>(m),
                                      static_cast<std::uint32_t>(s));
    std::vector<double> coarse_noise(static_cast<std::size_t>(S) * M);
    for (int s = 0; s < S; ++s)
        for (int m = 0; m < M; ++m)
            coarse_noise[static_cast<std::size_t>(s) * M + m] =
                fine_noise[static_cast<std::size_t>(2 * s) * M + m] +
                fine_noise[static_cast<std::size_t>(2 * s + 1) * M + m];

    FactorizationRefinement out;
    out.coarse = fused_factorization(basis, drift, grid_side, stride, dt, seed, replica,
                                     &coarse_noise);
    out.fine = fused_factorization(basis, drift, grid_side, stride, fine_dt, seed, replica,
                                   &fine_noise);
    out.ratio = out.coarse.max_distance > 0.0
                    ? out.fine.max_distance / out.coarse.max_distance
                    : 0.0;
    return out;
}

struct WeakDivergenceReport {
    std::vector<double> residuals;  // per test function, worst over sampled times
    double max_abs = 0.0;
};

/// Weak divergence of b~ against test functions: quadrature of
/// <grad phi, b~(t, .)> over the grid, which vanishes when div b = 0.
inline WeakDivergenceReport lemma_5_1_check(const MartingaleFlowRecord& rec,
                                            const SpectralField& drift,
                                            const std::vector<TrigPoly>& tests,
                                            int time_samples = 9) {
    WeakDivergenceReport rep;
    rep.residuals.assign(tests.size(), 0.0);
    std::vector<VectorTrigPoly> grads;
    grads.reserve(tests.size());
    for (const auto& f : tests) grads.push_back(f.gradient());
    for (int q = 0; q < time_samples; ++q) {
        int s = rec.steps * q / std::max(1, time_samples - 1);
        std::vector<double> bt = pullback_drift_grid(rec, drift, s);
        for (std::size_t t = 0; t < tests.size(); ++t) {
            double acc = 0.0;
            for (int i = 0; i < rec.particles; ++i) {
                TorusPoint y(rec.initial[2 * i], rec.initial[2 * i + 1]);
                acc += dot(grads[t].eval(y), Vec2{bt[2 * i], bt[2 * i + 1]});
            }
            acc /= rec.particles;
            rep.residuals[t] = std::max(rep.residuals[t], std::abs(acc));
            rep.max_abs = std::max(rep.max_abs, std::abs(acc));
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// semi-Lagrangian transport
// ---------------------------------------------------------------------------

/// theta(t + dt, y) = theta(t, y - dt v(y)) with periodic bilinear lookups.
class TransportPde {
  public:
    explicit TransportPde(int grid_n = 128) : n_(grid_n) {}

    int grid_n() const { return n_; }

    template <class F>
    std::vector<double> sample(const F& f) const {
        std::vector<double> out(static_cast<std::size_t>(n_) * n_);
        for (int a = 0; a < n_; ++a)
            for (int b = 0; b < n_; ++b)
                out[static_cast<std::size_t>(a) * n_ + b] =
                    f(TorusPoint(kTwoPi * a / n_, kTwoPi * b / n_));
        return out;
    }

    /// velocity: interleaved pairs at the PDE nodes.
    void step(std::vector<double>& theta, std::span<const double> velocity,
              double dt) const {
        std::vector<double> next(theta.size());
        const double scale = n_ / kTwoPi;
        for (int a = 0; a < n_; ++a) {
            for (int b = 0; b < n_; ++b) {
                const double* v = velocity.data() + (static_cast<std::size_t>(a) * n_ + b) * 2;
                next[static_cast<std::size_t>(a) * n_ + b] = detail::bilinear_scalar_idx(
                    theta, n_, a - dt * v[0] * scale, b - dt * v[1] * scale);
            }
        }
        theta = std::move(next);
    }

    double mean(std::span<const double> theta) const {
        double acc = 0.0;
        for (double v : theta) acc += v;
        return acc / static_cast<double>(theta.size());
    }

    double mean_sq(std::span<const double> theta) const {
        double acc = 0.0;
        for (double v : theta) acc += v * v;
        return acc / static_cast<double>(theta.size());
    }

  private:
    int n_;
};

/// b~ sampled on the PDE grid (bilinear from the Lagrangian grid).
inline std::vector<double> pullback_to_pde_grid(const MartingaleFlowRecord& rec,
                                                const SpectralField& drift, int step,
                                                int pde_n) {
    std::vector<double> coarse = pullback_drift_grid(rec, drift, step);
    std::vector<double> out(static_cast<std::size_t>(pde_n) * pde_n * 2);
    for (int a = 0; a < pde_n; ++a) {
        double t1 = kTwoPi * a / pde_n;
        for (int b = 0; b < pde_n; ++b) {
            double t2 = kTwoPi * b / pde_n;
            Vec2 v = detail::bilinear_vec(coarse, rec.grid_side, t1, t2);
            out[(static_cast<std::size_t>(a) * pde_n + b) * 2] = v.x;
            out[(static_cast<std::size_t>(a) * pde_n + b) * 2 + 1] = v.y;
        }
    }
    return out;
}

struct PdeAudit {
    double mass_drift = 0.0;    // max |mean(theta) - mean(theta_0)|
    double l2_decay = 0.0;      // relative loss of mean(theta^2), clamped at 0
};

/// Full solve of the advection equation for one initial condition,
/// returning theta at every step (row t of the result).
template <class F>
std::vector<std::vector<double>> solve_transport_pde(const MartingaleFlowRecord& rec,
                                                     const SpectralField& drift,
                                                     const F& initial, int pde_n,
                                                     PdeAudit* audit = nullptr) {
    TransportPde pde(pde_n);
    std::vector<std::vector<double>> fields;
    fields.reserve(rec.steps + 1);
    fields.push_back(pde.sample(initial));
    double m0 = pde.mean(fields[0]);
    double e0 = pde.mean_sq(fields[0]);
    std::vector<double> theta = fields[0];
    for (int s = 0; s < rec.steps; ++s) {
        std::vector<double> vel = pullback_to_pde_grid(rec, drift, s, pde_n);
        pde.step(theta, vel, rec.dt);
        fields.push_back(theta);
        if (audit) {
            audit->mass_drift = std::max(audit->mass_drift, std::abs(pde.mean(theta) - m0));
            if (e0 > 1e-14)
                audit->l2_decay =
                    std::max(audit->l2_decay, (e0 - pde.mean_sq(theta)) / e0);
        }
    }
    return fields;
}

// ---------------------------------------------------------------------------
// the section-5 transport Theta^{sigma,b}
// ---------------------------------------------------------------------------

struct SigmaBOptions {
    int grid_side = 64;
    double dt = 1e-3;
    std::uint64_t seed = 0;
    int replicas = 8;
    int pde_factor = 2;  // PDE grid = pde_factor * grid_side (nodes align)
    int partition_m = 4;
    double slack = 0.05;
};

struct SigmaBReport {
    double energy_b = 0.0;
    double identity_rel_error = 0.0;  // drift part of the decomposition
    double energy_lb = 0.0;
    double energy_lb_se = 0.0;
    bool lb_ok = false;
    double max_match_deviation = 0.0;  // vs the flow-built Theta, unit-norm pairs
    double mass_drift = 0.0;
    double l2_decay = 0.0;
    double min_det = 1.0, max_det = 1.0;
};

/// Builds Theta^{sigma,b}_t(phi, psi) = (1/N) sum theta_t(y_i) psi(g~_t(y_i))
/// from transport-equation solutions, verifies its semimartingale
/// decomposition (martingale part from the noise modes, drift part paired
/// with b), the transport-level energy bound, and pathwise agreement with
/// the flow-built Theta of the same noise and drift.
inline SigmaBReport theta_sigma_b_study(const NoiseBasis& basis, const SpectralField& b,
                                        const SigmaBOptions& opt) {
    SigmaBReport rep;
    rep.energy_b = drift_energy(b).value;
    const double T = b.horizon();
    const int S = steps_for(T, opt.dt);
    const int n = opt.grid_side;
    const int pde_n = opt.pde_factor * n;
    const int N = n * n;
    const int M = basis.size();

    std::vector<TrigPoly> psis = GradientFamily::functions();
    std::vector<TrigPoly> phis = GradientFamily::functions();
    const int K = static_cast<int>(psis.size());
    const int J = static_cast<int>(phis.size());
    PartitionFamily bumps(opt.partition_m);
    const int G_b = bumps.count();

    // packed pairing polynomials over one wave set
    WaveSet ws;
    ws.add(Wave{0, 0});
    std::vector<TrigPoly> laps;
    std::vector<std::vector<TrigPoly>> ddrift(K), dmode(K);
    auto fields = basis.fields();
    for (int k = 0; k < K; ++k) {
        laps.push_back(psis[k].laplacian());
        for (const auto& bin : b.bins()) ddrift[k].push_back(div_product(psis[k], bin.field));
        for (int i = 0; i < M; ++i) dmode[k].push_back(div_product(psis[k], fields[i]));
        ws.add(psis[k]);
        ws.add(laps[k]);
        for (const auto& d : ddrift[k]) ws.add(d);
        for (const auto& d : dmode[k]) ws.add(d);
    }
    ws.finalize();
    const int W = ws.size();
    std::vector<PackedPoly> p_psi, p_lap;
    std::vector<std::vector<PackedPoly>> p_drift(K), p_mode(K);
    for (int k = 0; k < K; ++k) {
        p_psi.push_back(PackedPoly::pack(psis[k], ws));
        p_lap.push_back(PackedPoly::pack(laps[k], ws));
        for (const auto& d : ddrift[k]) p_drift[k].push_back(PackedPoly::pack(d, ws));
        for (const auto& d : dmode[k]) p_mode[k].push_back(PackedPoly::pack(d, ws));
    }

    const int R = opt.replicas;
    struct ReplicaOut {
        std::vector<double> lhs, rhs;  // J*K decomposition identity sides
        double match = 0.0;
        double lb_sum = 0.0;
        double mass_drift = 0.0, l2_decay = 0.0;
        double min_det = 1.0, max_det = 1.0;
    };
    std::vector<ReplicaOut> outs(R);

    parallel_for(R, [&](int r) {
        MartingaleFlowRecord rec =
            martingale_flow_with_jacobian(basis, n, opt.dt, T, opt.seed, r);
        PathEnsemble comp = companion_flow(basis, b, rec);

        TransportPde pde(pde_n);
        // theta fields: J embedding initial conditions + the partition bumps
        std::vector<std::vector<double>> theta(J + G_b);
        for (int j = 0; j < J; ++j)
            theta[j] = pde.sample([&](const TorusPoint& p) { return phis[j].eval(p); });
        for (int g = 0; g < G_b; ++g)
            theta[J + g] = pde.sample([&](const TorusPoint& p) { return bumps.value(g, p); });
        std::vector<double> mass0(J + G_b), esq0(J + G_b);
        for (int f = 0; f < J + G_b; ++f) {
            mass0[f] = pde.mean(theta[f]);
            esq0[f] = pde.mean_sq(theta[f]);
        }

        // dynamic weights: theta at the particle nodes (even PDE nodes)
        std::vector<std::vector<double>> weights(J + G_b, std::vector<double>(N));
        auto refresh_weights = [&]() {
            for (int f = 0; f < J + G_b; ++f)
                for (int a = 0; a < n; ++a)
                    for (int c = 0; c < n; ++c)
                        weights[f][static_cast<std::size_t>(a) * n + c] =
                            theta[f][(static_cast<std::size_t>(a) * opt.pde_factor) * pde_n +
                                     static_cast<std::size_t>(c) * opt.pde_factor];
        };

        std::vector<std::vector<double>> phi_weights(J, std::vector<double>(N));
        for (int j = 0; j < J; ++j)
            for (int i = 0; i < N; ++i)
                phi_weights[j][i] =
                    phis[j].eval(TorusPoint(rec.initial[2 * i], rec.initial[2 * i + 1]));

        MomentAccumulator acc_tilde(ws, N);
        acc_tilde.set_dense_weights(&weights);
        MomentAccumulator acc_comp(ws, N);
        acc_comp.set_dense_weights(&phi_weights);

        std::vector<double> mc(static_cast<std::size_t>(J + G_b) * W);
        std::vector<double> ms(static_cast<std::size_t>(J + G_b) * W);
        std::vector<double> cc(static_cast<std::size_t>(J) * W);
        std::vector<double> cs(static_cast<std::size_t>(J) * W);

        ReplicaOut& out = outs[r];
        out.lhs.assign(static_cast<std::size_t>(J) * K, 0.0);
        out.rhs.assign(static_cast<std::size_t>(J) * K, 0.0);
        out.min_det = rec.min_det;
        out.max_det = rec.max_det;
        std::vector<double> theta0(static_cast<std::size_t>(J) * K, 0.0);
        std::vector<double> lap_int(static_cast<std::size_t>(J) * K, 0.0);
        std::vector<double> mart(static_cast<std::size_t>(J) * K, 0.0);
        std::vector<double> last(static_cast<std::size_t>(J) * K, 0.0);

        for (int t = 0; t <= S; ++t) {
            refresh_weights();
            acc_tilde.run(rec.slice(t), mc.data(), ms.data());
            acc_comp.run(comp.slice(t), cc.data(), cs.data());
            int bin = b.bin_index(t * opt.dt);
            double trap = (t == 0 || t == S) ? 0.5 : 1.0;

            for (int j = 0; j < J; ++j) {
                const double* jc = mc.data() + static_cast<std::size_t>(j) * W;
                const double* js = ms.data() + static_cast<std::size_t>(j) * W;
                const double* gc = cc.data() + static_cast<std::size_t>(j) * W;
                const double* gs = cs.data() + static_cast<std::size_t>(j) * W;
                for (int k = 0; k < K; ++k) {
                    std::size_t jk = static_cast<std::size_t>(j) * K + k;
                    double v = p_psi[k].pair(jc, js);
                    double v_flow = p_psi[k].pair(gc, gs);
                    double norm_pair = l2_norm(phis[j]) * l2_norm(psis[k]);
                    out.match = std::max(out.match, std::abs(v - v_flow) / norm_pair);
                    if (t == 0) theta0[jk] = v;
                    last[jk] = v;
                    if (t < S) {
                        lap_int[jk] += p_lap[k].pair(jc, js) * opt.dt;
                        out.rhs[jk] += p_drift[k][bin].pair(jc, js) * opt.dt;
                        double m_inc = 0.0;
                        for (int i = 0; i < M; ++i)
                            m_inc += p_mode[k][i].pair(jc, js) * rec.dw(t, i);
                        mart[jk] += m_inc;
                    }
                }
            }
            // energy lower bound from the bump fields
            for (int g = 0; g < G_b; ++g) {
                const double* gc2 = mc.data() + static_cast<std::size_t>(J + g) * W;
                const double* gs2 = ms.data() + static_cast<std::size_t>(J + g) * W;
                double contrib = 0.0;
                for (int k = 0; k < K; ++k) {
                    double d = p_drift[k][bin].pair(gc2, gs2);
                    contrib += d * d;
                }
                out.lb_sum += trap * opt.dt * contrib / bumps.mass(g);
            }

            if (t < S) {
                std::vector<double> vel = pullback_to_pde_grid(rec, b, t, pde_n);
                for (int f = 0; f < J + G_b; ++f) {
                    pde.step(theta[f], vel, opt.dt);
                    out.mass_drift =
                        std::max(out.mass_drift, std::abs(pde.mean(theta[f]) - mass0[f]));
                    if (esq0[f] > 1e-14)
                        out.l2_decay = std::max(
                            out.l2_decay, (esq0[f] - pde.mean_sq(theta[f])) / esq0[f]);
                }
            }
        }
        // Ito correction only when the basis realizes identity covariance
        double lap_w = M > 0 ? 0.5 : 0.0;
        for (int j = 0; j < J; ++j)
            for (int k = 0; k < K; ++k) {
                std::size_t jk = static_cast<std::size_t>(j) * K + k;
                out.lhs[jk] = last[jk] - theta0[jk] - lap_w * lap_int[jk] - mart[jk];
            }
    });

    // aggregate: identity over replica means, bound and audits over worst case
    double num = 0.0, den = 0.0;
    for (int jk = 0; jk < J * K; ++jk) {
        double ml = 0.0, mr = 0.0;
        for (const auto& o : outs) {
            ml += o.lhs[jk];
            mr += o.rhs[jk];
        }
        ml /= R;
        mr /= R;
        num += (ml - mr) * (ml - mr);
        den += mr * mr;
    }
    rep.identity_rel_error = den > 1e-20 ? std::sqrt(num / den) : 0.0;

    double mean_lb = 0.0;
    for (const auto& o : outs) mean_lb += 0.5 * o.lb_sum;
    mean_lb /= R;
    rep.energy_lb = mean_lb;
    if (R > 1) {
        double var = 0.0;
        for (const auto& o : outs) {
            double d = 0.5 * o.lb_sum - mean_lb;
            var += d * d;
        }
        rep.energy_lb_se = std::sqrt(var / (R - 1.0) / R);
    }
    rep.lb_ok = rep.energy_lb <= rep.energy_b * (1.0 + opt.slack);

    for (const auto& o : outs) {
        rep.max_match_deviation = std::max(rep.max_match_deviation, o.match);
        rep.mass_drift = std::max(rep.mass_drift, o.mass_drift);
        rep.l2_decay = std::max(rep.l2_decay, o.l2_decay);
        rep.min_det = std::min(rep.min_det, o.min_det);
        rep.max_det = std::max(rep.max_det, o.max_det);
    }
    return rep;
}

}  // namespace torusflow
