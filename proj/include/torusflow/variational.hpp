// Variational experiments: energy minimization under a prescribed final
// configuration (penalty method over a finite-dimensional divergence-free
// drift family, common random numbers throughout) and the construction of
// transports with a prescribed rough drift via mollification ladders.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "torusflow/energy.hpp"
#include "torusflow/transport.hpp"

namespace torusflow {

// ---------------------------------------------------------------------------
// final configurations and moment targets
// ---------------------------------------------------------------------------

/// Prescribed joint law of (x, g_T(x)): an empirical coupling or an
/// analytic moment table over declared test families.
struct FinalConfiguration {
    bool has_coupling = false;
    EmpiricalCoupling coupling;
    MomentTable analytic;

    static FinalConfiguration from_coupling(EmpiricalCoupling c) {
        FinalConfiguration f;
        f.has_coupling = true;
        f.coupling = std::move(c);
        return f;
    }
    static FinalConfiguration from_table(MomentTable t) {
        FinalConfiguration f;
        f.analytic = std::move(t);
        return f;
    }
};

/// The documented residual family: 4 partition bumps (2x2 grid) crossed
/// with the 4 embedding functions plus 3 degree-2 harmonics; 28 moments.
struct ConstraintSet {
    PartitionFamily bumps{2};
    std::vector<TrigPoly> psis;

    static ConstraintSet standard() {
        ConstraintSet s;
        s.psis = GradientFamily::functions();
        s.psis.push_back(TrigPoly::harmonic(1, 1, 1.0, 0.0));   // cos(t1 + t2)
        s.psis.push_back(TrigPoly::harmonic(1, 1, 0.0, 1.0));   // sin(t1 + t2)
        s.psis.push_back(TrigPoly::harmonic(1, -1, 1.0, 0.0));  // cos(t1 - t2)
        return s;
    }

    int J() const { return bumps.count(); }
    int K() const { return static_cast<int>(psis.size()); }
    int moments() const { return J() * K(); }
};

/// Empirical moments of a coupling: average of phi_j(x) psi_k(y) over pairs.
inline MomentTable moment_targets(const EmpiricalCoupling& eta, const ConstraintSet& set) {
    MomentTable t(set.J(), set.K());
    WaveSet ws;
    ws.add(Wave{0, 0});
    for (const auto& psi : set.psis) ws.add(psi);
    ws.finalize();
    std::vector<PackedPoly> packed;
    for (const auto& psi : set.psis) packed.push_back(PackedPoly::pack(psi, ws));
    WaveEvaluator eval(ws);
    const int n = eta.size();
    for (int i = 0; i < n; ++i) {
        TorusPoint x = eta.source(i);
        const auto& vals = eval.at(eta.y[2 * i], eta.y[2 * i + 1]);
        for (int j = 0; j < set.J(); ++j) {
            double w = set.bumps.value(j, x);
            if (w == 0.0) continue;
            for (int k = 0; k < set.K(); ++k) {
                double v = 0.0;
                for (std::size_t a = 0; a < packed[k].idx.size(); ++a)
                    v += packed[k].c[a] * vals[packed[k].idx[a]].re +
                         packed[k].s[a] * vals[packed[k].idx[a]].im;
                t.at(j, k) += w * v;
            }
        }
    }
    for (auto& v : t.values) v /= n;
    return t;
}

inline MomentTable moment_targets(const FinalConfiguration& eta, const ConstraintSet& set) {
    if (eta.has_coupling) return moment_targets(eta.coupling, set);
    if (eta.analytic.J != set.J() || eta.analytic.K != set.K())
        throw std::invalid_argument("analytic moment table does not match the family");
    return eta.analytic;
}

/// Worst deviation of the coupling's first marginal from the bump masses.
inline double first_marginal_deviation(const EmpiricalCoupling& eta,
                                       const ConstraintSet& set) {
    double worst = 0.0;
    for (int j = 0; j < set.J(); ++j) {
        double acc = 0.0;
        for (int i = 0; i < eta.size(); ++i) acc += set.bumps.value(j, eta.source(i));
        worst = std::max(worst, std::abs(acc / eta.size() - set.bumps.mass(j)));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// divergence-free drift parameterization
// ---------------------------------------------------------------------------

/// Coefficients live directly in the divergence-free subspace: per time bin,
/// a constant vector (2 dof) plus, for every canonical wave, cos and sin
/// amplitudes along the unit direction orthogonal to k (2 dof per wave).
struct DriftParameterization {
    int K_b = 1;
    int bins = 1;
    double T = 0.5;

    std::vector<Wave> waves() const { return canonical_waves(K_b); }

    int dof() const { return bins * (2 * static_cast<int>(waves().size()) + 2); }

    SpectralField unpack(std::span<const double> x) const {
        auto wv = waves();
        const int per_bin = 2 * static_cast<int>(wv.size()) + 2;
        if (static_cast<int>(x.size()) != bins * per_bin)
            throw std::invalid_argument("parameter vector size mismatch");
        std::vector<VectorTrigPoly> fields;
        fields.reserve(bins);
        for (int b = 0; b < bins; ++b) {
            const double* p = x.data() + static_cast<std::size_t>(b) * per_bin;
            VectorTrigPoly f(TrigPoly::constant(p[0]), TrigPoly::constant(p[1]));
            for (std::size_t w = 0; w < wv.size(); ++w) {
                const Wave& k = wv[w];
                double kn = std::sqrt(k.norm_sq());
                Vec2 dir{k.k2 / kn, -k.k1 / kn};
                double ac = p[2 + 2 * w];
                double as = p[3 + 2 * w];
                f.u1().add_term(k, ac * dir.x, as * dir.x);
                f.u2().add_term(k, ac * dir.y, as * dir.y);
            }
            f.u1().prune(0.0);
            f.u2().prune(0.0);
            fields.push_back(std::move(f));
        }
        return SpectralField::piecewise(std::move(fields), T);
    }
};

// ---------------------------------------------------------------------------
// penalized objective with common random numbers
// ---------------------------------------------------------------------------

struct ObjectiveSetup {
    const NoiseBasis* basis = nullptr;
    SimConfig sim;  // seed shared across evaluations (common random numbers)
    ConstraintSet constraints = ConstraintSet::standard();
    MomentTable target;

    // built once
    std::vector<double> grid;
    std::vector<std::vector<double>> bump_weights;
    WaveSet ws;
    std::vector<PackedPoly> packed_psis;

    void prepare() {
        grid = uniform_grid_points(sim.grid_side);
        bump_weights.clear();
        for (int j = 0; j < constraints.J(); ++j) {
            std::vector<double> w(grid.size() / 2);
            for (std::size_t i = 0; i < w.size(); ++i)
                w[i] = constraints.bumps.value(j, TorusPoint(grid[2 * i], grid[2 * i + 1]));
            bump_weights.push_back(std::move(w));
        }
        ws = WaveSet();
        ws.add(Wave{0, 0});
        for (const auto& psi : constraints.psis) ws.add(psi);
        ws.finalize();
        packed_psis.clear();
        for (const auto& psi : constraints.psis)
            packed_psis.push_back(PackedPoly::pack(psi, ws));
    }
};

struct ObjectiveValue {
    double objective = 0.0;
    double energy = 0.0;
    double residual = 0.0;  // sqrt of the summed squared moment mismatch
    MomentTable moments;
};

/// One Monte Carlo evaluation of F(b) = E(b) + lambda * residual(b)^2.
inline ObjectiveValue evaluate_objective(const ObjectiveSetup& setup, const SpectralField& b,
                                         double lambda) {
    const int J = setup.constraints.J();
    const int K = setup.constraints.K();
    const int W = setup.ws.size();
    SimConfig cfg = setup.sim;
    cfg.thin = steps_for(cfg.T, cfg.dt);  // endpoints only

    std::vector<MomentTable> per_replica(cfg.replicas);
    for_each_replica(*setup.basis, b, cfg, [&](int r, const PathEnsemble& e) {
        MomentAccumulator acc(setup.ws, e.particles);
        acc.set_dense_weights(&setup.bump_weights);
        std::vector<double> mc(static_cast<std::size_t>(J) * W);
        std::vector<double> ms(static_cast<std::size_t>(J) * W);
        acc.run(e.slice(e.recorded() - 1), mc.data(), ms.data());
        MomentTable t(J, K);
        for (int j = 0; j < J; ++j)
            for (int k = 0; k < K; ++k)
                t.at(j, k) = setup.packed_psis[k].pair(
                    mc.data() + static_cast<std::size_t>(j) * W,
                    ms.data() + static_cast<std::size_t>(j) * W);
        per_replica[r] = std::move(t);
    });

    ObjectiveValue out;
    out.moments = MomentTable(J, K);
    for (const auto& t : per_replica)
        for (std::size_t i = 0; i < t.values.size(); ++i)
            out.moments.values[i] += t.values[i];
    for (auto& v : out.moments.values) v /= cfg.replicas;

    double sq = 0.0;
    for (std::size_t i = 0; i < out.moments.values.size(); ++i) {
        double d = out.moments.values[i] - setup.target.values[i];
        sq += d * d;
    }
    out.residual = std::sqrt(sq);
    out.energy = drift_energy(b).value;
    out.objective = out.energy + lambda * sq;
    return out;
}

// ---------------------------------------------------------------------------
// the optimizer
// ---------------------------------------------------------------------------

struct OptimizerConfig {
    std::uint64_t seed = 1;
    int max_evals = 400;
    std::vector<double> lambda_schedule = {10.0, 100.0};
    double fd_step = 0.02;
    double init_step = 0.5;
    double min_step = 1e-4;
    double residual_threshold = 0.05;
};

struct IterRow {
    int iter = 0;
    int evals = 0;
    double lambda = 0.0;
    double objective = 0.0;
    double energy = 0.0;
    double residual = 0.0;
};

struct MinimizationResult {
    std::vector<double> best_params;
    SpectralField best_drift;
    double best_objective = 0.0;
    double best_energy = 0.0;
    double best_residual = 0.0;
    int evaluations = 0;
    bool converged = false;
    std::uint64_t seed = 0;
    std::vector<IterRow> telemetry;
};

/// Penalty minimization of the flow energy subject to the final
/// configuration moments.  Deterministic for a fixed seed: evaluations
/// re-use one set of replica noise paths (common random numbers), so the
/// objective is a smooth deterministic function of the coefficients.
/// Finite-difference gradient descent for small coefficient counts,
/// simultaneous perturbation above 40 dof.  Non-convergence (budget
/// exhausted above the residual threshold) is flagged, not thrown.
inline MinimizationResult minimize_energy(const MomentTable& target, const NoiseBasis& basis,
                                          const DriftParameterization& param,
                                          const OptimizerConfig& opt, SimConfig sim,
                                          ConstraintSet constraints = ConstraintSet::standard()) {
    ObjectiveSetup setup;
    setup.basis = &basis;
    sim.T = param.T;
    sim.seed = opt.seed;
    setup.sim = sim;
    setup.constraints = std::move(constraints);
    setup.target = target;
    setup.prepare();

    const int n = param.dof();
    std::vector<double> x(n, 0.0);
    int evals = 0;

    struct Cached {
        double energy, residual;
    };
    auto raw_eval = [&](std::span<const double> p) -> Cached {
        ObjectiveValue v = evaluate_objective(setup, param.unpack(p), 0.0);
        ++evals;
        return {v.energy, v.residual};
    };
    auto F = [](const Cached& c, double lambda) {
        return c.energy + lambda * c.residual * c.residual;
    };

    MinimizationResult res;
    res.seed = opt.seed;

    Cached cur = raw_eval(x);
    std::vector<double> best_x = x;
    Cached best = cur;
    int iter = 0;

    const bool use_fd = n <= 40;
    for (std::size_t phase = 0; phase < opt.lambda_schedule.size(); ++phase) {
        double lambda = opt.lambda_schedule[phase];
        int budget = opt.max_evals * static_cast<int>(phase + 1) /
                     static_cast<int>(opt.lambda_schedule.size());
        double step = opt.init_step;
        // warm restart from the incumbent
        x = best_x;
        cur = best;
        while (evals < budget) {
            ++iter;
            std::vector<double> g(n, 0.0);
            if (use_fd) {
                if (evals + 2 * n > budget) break;
                for (int i = 0; i < n; ++i) {
                    std::vector<double> xp = x, xm = x;
                    xp[i] += opt.fd_step;
                    xm[i] -= opt.fd_step;
                    Cached cp = raw_eval(xp);
                    Cached cm = raw_eval(xm);
                    g[i] = (F(cp, lambda) - F(cm, lambda)) / (2.0 * opt.fd_step);
                }
            } else {
                // simultaneous perturbation: two evaluations per iteration
                if (evals + 2 > budget) break;
                double ck = std::max(opt.fd_step, opt.fd_step * 4.0 /
                                                      std::pow(iter + 1.0, 0.101));
                std::vector<double> xp = x, xm = x;
                std::vector<double> delta(n);
                for (int i = 0; i < n; ++i) {
                    delta[i] = counter_sign(opt.seed, RngStream::kPerturbation,
                                            static_cast<std::uint32_t>(iter),
                                            static_cast<std::uint32_t>(i), 0);
                    xp[i] += ck * delta[i];
                    xm[i] -= ck * delta[i];
                }
                Cached cp = raw_eval(xp);
                Cached cm = raw_eval(xm);
                double slope = (F(cp, lambda) - F(cm, lambda)) / (2.0 * ck);
                for (int i = 0; i < n; ++i) g[i] = slope * delta[i];
            }

            double gn = 0.0;
            for (double v : g) gn += v * v;
            gn = std::sqrt(gn);
            if (gn < 1e-12) break;

            // backtracking descent step
            bool accepted = false;
            double trial_step = step;
            for (int bt = 0; bt < 6 && evals < budget; ++bt) {
                std::vector<double> xt(n);
                for (int i = 0; i < n; ++i) xt[i] = x[i] - trial_step * g[i];
                Cached ct = raw_eval(xt);
                if (F(ct, lambda) < F(cur, lambda)) {
                    x = std::move(xt);
                    cur = ct;
                    step = std::min(trial_step * 1.5, opt.init_step * 4.0);
                    accepted = true;
                    break;
                }
                trial_step *= 0.5;
            }
            if (!accepted) {
                step *= 0.25;
                if (step < opt.min_step) break;
            }
            if (F(cur, lambda) < F(best, lambda)) {
                best = cur;
                best_x = x;
            }
            res.telemetry.push_back(
                {iter, evals, lambda, F(best, lambda), best.energy, best.residual});
        }
        if (F(cur, lambda) < F(best, lambda)) {
            best = cur;
            best_x = x;
        }
    }

    res.best_params = best_x;
    res.best_drift = param.unpack(best_x);
    res.best_energy = best.energy;
    res.best_residual = best.residual;
    res.best_objective = F(best, opt.lambda_schedule.back());
    res.evaluations = evals;
    res.converged = best.residual <= opt.residual_threshold;
    return res;
}

// ---------------------------------------------------------------------------
// prescribed-drift construction (mollification ladder)
// ---------------------------------------------------------------------------

struct PrescribedDriftRung {
    double eps = 0.0;
    double energy_mollified = 0.0;
    double identity_rel_error = 0.0;
    double energy_lb = 0.0;
    double energy_lb_se = 0.0;
};

struct PrescribedDriftReport {
    double energy_rough = 0.0;
    std::vector<PrescribedDriftRung> rungs;
    bool energies_bounded = false;   // E(b_eps) <= E(b), every rung
    bool energies_monotone = false;  // nondecreasing as eps decreases
    bool identity_decreasing = false;
    double final_identity_error = 0.0;
    bool lb_bounded = false;  // every lower bound <= E(b) (1 + slack)

    bool pass(double identity_tol) const {
        return energies_bounded && identity_decreasing &&
               final_identity_error <= identity_tol && lb_bounded;
    }
};

struct PrescribedDriftOptions {
    SimConfig sim;
    int partition_m = 4;
    double slack = 0.05;
};

/// First-argument family for the drift-identity table: the embedding
/// functions plus the degree-2 harmonics, whose pairings against
/// div(psi b) pick up the least-damped low modes of the drift.
inline std::vector<TrigPoly> identity_phi_family() {
    std::vector<TrigPoly> fam = GradientFamily::functions();
    fam.push_back(TrigPoly::harmonic(1, 1, 1.0, 0.0));
    fam.push_back(TrigPoly::harmonic(1, 1, 0.0, 1.0));
    fam.push_back(TrigPoly::harmonic(1, -1, 1.0, 0.0));
    fam.push_back(TrigPoly::harmonic(1, -1, 0.0, 1.0));
    return fam;
}

/// For each epsilon: mollify the rough drift (heat damping on modes, then
/// time convolution), run the flow, and compare the integrated drift
/// derivative against the same series paired with the rough drift.  The
/// energies of the mollified drifts never exceed the rough energy, and the
/// transport-level energy bound holds with the configured slack.
inline PrescribedDriftReport prescribed_drift_flow(const SpectralField& b_rough,
                                                   const std::vector<double>& eps_ladder,
                                                   const NoiseBasis& basis,
                                                   const PrescribedDriftOptions& opt) {
    PrescribedDriftReport rep;
    rep.energy_rough = drift_energy(b_rough).value;

    std::vector<TrigPoly> psis = GradientFamily::functions();
    const int K = static_cast<int>(psis.size());
    std::vector<double> grid = uniform_grid_points(opt.sim.grid_side);

    // first-argument family for the identity table (dense weights)
    std::vector<std::vector<double>> phi_weights;
    std::vector<TrigPoly> phi_polys = identity_phi_family();
    const int J = static_cast<int>(phi_polys.size());
    for (const auto& phi : phi_polys) {
        std::vector<double> w(grid.size() / 2);
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] = phi.eval(TorusPoint(grid[2 * i], grid[2 * i + 1]));
        phi_weights.push_back(std::move(w));
    }
    // partition stack for the energy lower bound
    detail::PartitionStack stack = detail::PartitionStack::build({opt.partition_m}, grid);
    const int G_bumps = stack.sparse.group_count;

    double prev_energy = -1.0;
    double prev_err = std::numeric_limits<double>::infinity();
    rep.energies_bounded = true;
    rep.energies_monotone = true;
    rep.identity_decreasing = true;
    rep.lb_bounded = true;

    for (double eps : eps_ladder) {
        SpectralField b_eps = time_mollify(hodge_regularize(b_rough, eps), eps);
        PrescribedDriftRung rung;
        rung.eps = eps;
        rung.energy_mollified = drift_energy(b_eps).value;
        rep.energies_bounded =
            rep.energies_bounded && rung.energy_mollified <= rep.energy_rough * (1 + 1e-12);
        if (prev_energy >= 0.0)
            rep.energies_monotone =
                rep.energies_monotone && rung.energy_mollified >= prev_energy - 1e-12;
        prev_energy = rung.energy_mollified;

        // pairing polynomials for both the mollified and the rough drift
        WaveSet ws;
        ws.add(Wave{0, 0});
        std::vector<std::vector<TrigPoly>> div_eps(K), div_rough(K);
        for (int k = 0; k < K; ++k) {
            for (const auto& bin : b_eps.bins()) div_eps[k].push_back(div_product(psis[k], bin.field));
            for (const auto& bin : b_rough.bins())
                div_rough[k].push_back(div_product(psis[k], bin.field));
            for (const auto& d : div_eps[k]) ws.add(d);
            for (const auto& d : div_rough[k]) ws.add(d);
        }
        ws.finalize();
        const int W = ws.size();
        std::vector<std::vector<PackedPoly>> p_eps(K), p_rough(K);
        for (int k = 0; k < K; ++k) {
            for (const auto& d : div_eps[k]) p_eps[k].push_back(PackedPoly::pack(d, ws));
            for (const auto& d : div_rough[k]) p_rough[k].push_back(PackedPoly::pack(d, ws));
        }

        SimConfig cfg = opt.sim;
        cfg.T = b_rough.horizon();
        const int S = steps_for(cfg.T, cfg.dt);
        const int R = cfg.replicas;

        // per replica: integrated drift identities and the energy-lb sum
        std::vector<std::vector<double>> I_eps(R), I_rough(R);
        std::vector<double> lb_sum(R, 0.0);
        for_each_replica(basis, b_eps, cfg, [&](int r, const PathEnsemble& e) {
            MomentAccumulator acc(ws, e.particles);
            acc.set_dense_weights(&phi_weights);
            acc.set_sparse_weights(&stack.sparse);
            const int G = J + G_bumps;
            std::vector<double> mc(static_cast<std::size_t>(G) * W);
            std::vector<double> ms(static_cast<std::size_t>(G) * W);
            I_eps[r].assign(static_cast<std::size_t>(J) * K, 0.0);
            I_rough[r].assign(static_cast<std::size_t>(J) * K, 0.0);
            for (int t = 0; t <= S; ++t) {
                acc.run(e.slice(t), mc.data(), ms.data());
                double tt = e.time_of(t);
                int bin_e = b_eps.bin_index(tt);
                int bin_r = b_rough.bin_index(tt);
                double w = (t == 0 || t == S) ? 0.5 : 1.0;
                for (int j = 0; j < J; ++j) {
                    const double* jc = mc.data() + static_cast<std::size_t>(j) * W;
                    const double* js = ms.data() + static_cast<std::size_t>(j) * W;
                    for (int k = 0; k < K; ++k) {
                        I_eps[r][static_cast<std::size_t>(j) * K + k] +=
                            w * cfg.dt * p_eps[k][bin_e].pair(jc, js);
                        I_rough[r][static_cast<std::size_t>(j) * K + k] +=
                            w * cfg.dt * p_rough[k][bin_r].pair(jc, js);
                    }
                }
                for (int g = 0; g < G_bumps; ++g) {
                    const double* gc = mc.data() + static_cast<std::size_t>(J + g) * W;
                    const double* gs = ms.data() + static_cast<std::size_t>(J + g) * W;
                    double contrib = 0.0;
                    for (int k = 0; k < K; ++k) {
                        double d = p_eps[k][bin_e].pair(gc, gs);
                        contrib += d * d;
                    }
                    lb_sum[r] += w * cfg.dt * contrib / stack.mass_of_group[g];
                }
            }
        });

        // replica means of the identity integrals, then the relative gap
        double num = 0.0, den = 0.0;
        for (int j = 0; j < J; ++j) {
            for (int k = 0; k < K; ++k) {
                double me = 0.0, mr = 0.0;
                for (int r = 0; r < R; ++r) {
                    me += I_eps[r][static_cast<std::size_t>(j) * K + k];
                    mr += I_rough[r][static_cast<std::size_t>(j) * K + k];
                }
                me /= R;
                mr /= R;
                num += (me - mr) * (me - mr);
                den += mr * mr;
            }
        }
        rung.identity_rel_error = den > 1e-20 ? std::sqrt(num / den) : 0.0;
        if (rung.identity_rel_error > prev_err + 1e-12) rep.identity_decreasing = false;
        prev_err = rung.identity_rel_error;

        double mean_lb = 0.0;
        for (int r = 0; r < R; ++r) mean_lb += 0.5 * lb_sum[r];
        mean_lb /= R;
        rung.energy_lb = mean_lb;
        if (R > 1) {
            double var = 0.0;
            for (int r = 0; r < R; ++r) {
                double d = 0.5 * lb_sum[r] - mean_lb;
                var += d * d;
            }
            rung.energy_lb_se = std::sqrt(var / (R - 1.0) / R);
        }
        rep.lb_bounded =
            rep.lb_bounded && rung.energy_lb <= rep.energy_rough * (1.0 + opt.slack);

        rep.rungs.push_back(rung);
    }
    if (!rep.rungs.empty()) rep.final_identity_error = rep.rungs.back().identity_rel_error;
    return rep;
}

// ---------------------------------------------------------------------------
// convexity probe: fair-coin mixture of two flows
// ---------------------------------------------------------------------------

struct MixtureProbeReport {
    double e1 = 0.0, e2 = 0.0;
    double mixture_energy = 0.0;
    double mixture_energy_se = 0.0;
    double energy_bound = 0.0;  // (e1 + e2) / 2
    bool energy_ok = false;
    double max_moment_z = 0.0;
    bool moments_ok = false;
};

/// Per replica a fair coin selects which drift drives the flow; the
/// mixture's estimated energy is the average of the chosen drifts'
/// energies, and its endpoint moments must still match the target.
inline MixtureProbeReport convexity_probe(const SpectralField& b1, const SpectralField& b2,
                                          const NoiseBasis& basis, const SimConfig& sim,
                                          const MomentTable& target,
                                          const std::vector<TrigPoly>& phi_polys,
                                          const std::vector<TrigPoly>& psis) {
    MixtureProbeReport rep;
    rep.e1 = drift_energy(b1).value;
    rep.e2 = drift_energy(b2).value;
    rep.energy_bound = 0.5 * (rep.e1 + rep.e2);

    const int J = static_cast<int>(phi_polys.size());
    const int K = static_cast<int>(psis.size());
    std::vector<double> grid = uniform_grid_points(sim.grid_side);
    std::vector<std::vector<double>> weights;
    for (const auto& phi : phi_polys) {
        std::vector<double> w(grid.size() / 2);
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] = phi.eval(TorusPoint(grid[2 * i], grid[2 * i + 1]));
        weights.push_back(std::move(w));
    }
    WaveSet ws;
    ws.add(Wave{0, 0});
    for (const auto& psi : psis) ws.add(psi);
    ws.finalize();
    const int W = ws.size();
    std::vector<PackedPoly> packed;
    for (const auto& psi : psis) packed.push_back(PackedPoly::pack(psi, ws));

    SimConfig cfg = sim;
    cfg.thin = steps_for(cfg.T, cfg.dt);
    const int R = cfg.replicas;
    std::vector<double> energies(R);
    std::vector<std::vector<double>> moments(R);

    parallel_for(R, [&](int r) {
        bool first = counter_uniform(cfg.seed, RngStream::kCoin,
                                     static_cast<std::uint32_t>(r), 0, 0) < 0.5;
        const SpectralField& b = first ? b1 : b2;
        energies[r] = first ? rep.e1 : rep.e2;
        PathEnsemble e = simulate_replica(basis, b, cfg, r);
        MomentAccumulator acc(ws, e.particles);
        acc.set_dense_weights(&weights);
        std::vector<double> mc(static_cast<std::size_t>(J) * W);
        std::vector<double> ms(static_cast<std::size_t>(J) * W);
        acc.run(e.slice(e.recorded() - 1), mc.data(), ms.data());
        moments[r].assign(static_cast<std::size_t>(J) * K, 0.0);
        for (int j = 0; j < J; ++j)
            for (int k = 0; k < K; ++k)
                moments[r][static_cast<std::size_t>(j) * K + k] =
                    packed[k].pair(mc.data() + static_cast<std::size_t>(j) * W,
                                   ms.data() + static_cast<std::size_t>(j) * W);
    });

    double mean_e = 0.0;
    for (double e : energies) mean_e += e;
    mean_e /= R;
    double var_e = 0.0;
    for (double e : energies) var_e += (e - mean_e) * (e - mean_e);
    var_e /= (R - 1.0);
    rep.mixture_energy = mean_e;
    rep.mixture_energy_se = std::sqrt(var_e / R);
    rep.energy_ok = rep.mixture_energy <= rep.energy_bound + 3.0 * rep.mixture_energy_se + 1e-12;

    for (int j = 0; j < J; ++j) {
        for (int k = 0; k < K; ++k) {
            double mean = 0.0, var = 0.0;
            for (int r = 0; r < R; ++r) mean += moments[r][static_cast<std::size_t>(j) * K + k];
            mean /= R;
            for (int r = 0; r < R; ++r) {
                double d = moments[r][static_cast<std::size_t>(j) * K + k] - mean;
                var += d * d;
            }
            var /= (R - 1.0);
            double se = std::sqrt(var / R);
            double dev = std::abs(mean - target.at(j, k));
            double z = se > 1e-14 ? dev / se : (dev < 1e-10 ? 0.0 : 1e9);
            rep.max_moment_z = std::max(rep.max_moment_z, z);
        }
    }
    rep.moments_ok = rep.max_moment_z <= 3.0;
    return rep;
}

}  // namespace torusflow
