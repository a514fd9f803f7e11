// The transport functional Theta_t(phi, psi) of an ensemble, its drift and
// bracket integrands, and the full axiom verification for generalized flows.
//
// Theta is computed by forward quadrature over the initial grid,
//   Theta_t(phi, psi) ~ (1/N) sum_i phi(x_i) psi(g_t(x_i)),
// never by inverting the flow map; measure preservation makes the two
// agree.  Everything that composes with the flow is reduced to weighted
// trigonometric moments of the particle cloud, so one pass per time step
// serves every test function, drift integrand and per-mode integrand.
#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "torusflow/ensemble.hpp"
#include "torusflow/harmonics.hpp"
#include "torusflow/test_functions.hpp"

namespace torusflow {

struct MomentTable {
    int J = 0, K = 0;
    std::vector<double> values;

    MomentTable() = default;
    MomentTable(int j, int k) : J(j), K(k), values(static_cast<std::size_t>(j) * k, 0.0) {}

    double& at(int j, int k) { return values[static_cast<std::size_t>(j) * K + k]; }
    double at(int j, int k) const { return values[static_cast<std::size_t>(j) * K + k]; }
};

/// Targets for the diagonal coupling: (phi_j, psi_k)_{L2}.
inline MomentTable diagonal_targets(const std::vector<TrigPoly>& phis,
                                    const std::vector<TrigPoly>& psis) {
    MomentTable t(static_cast<int>(phis.size()), static_cast<int>(psis.size()));
    for (int j = 0; j < t.J; ++j)
        for (int k = 0; k < t.K; ++k) t.at(j, k) = l2_inner(phis[j], psis[k]);
    return t;
}

/// Targets for the deterministic shift y = x + a.
inline MomentTable shifted_targets(const std::vector<TrigPoly>& phis,
                                   const std::vector<TrigPoly>& psis, const Vec2& a) {
    MomentTable t(static_cast<int>(phis.size()), static_cast<int>(psis.size()));
    for (int j = 0; j < t.J; ++j)
        for (int k = 0; k < t.K; ++k) t.at(j, k) = l2_inner(phis[j], psis[k].translated(a));
    return t;
}

/// Targets for the flow with identity covariance noise plus a constant
/// drift c: the generator splits into heat damping and a shift, so
/// E[psi(g_T(x))] = (H_T psi)(x + T c).
inline MomentTable heat_drift_targets(const std::vector<TrigPoly>& phis,
                                      const std::vector<TrigPoly>& psis, double T,
                                      const Vec2& c = {0.0, 0.0}) {
    MomentTable t(static_cast<int>(phis.size()), static_cast<int>(psis.size()));
    for (int j = 0; j < t.J; ++j)
        for (int k = 0; k < t.K; ++k)
            t.at(j, k) = l2_inner(phis[j], psis[k].heat(T).translated(T * c));
    return t;
}

struct TransportRequest {
    std::vector<FirstArgFunction> phis;
    std::vector<TrigPoly> psis;
    const NoiseBasis* basis = nullptr;   // required for per-mode integrands
    const SpectralField* drift = nullptr;  // required for drift integrands
    bool mode_integrands = false;
    int max_product_degree = 24;
};

/// Time series attached to one replica.
class TransportSeries {
  public:
    int J = 0, K = 0, M = 0;
    int records = 0;
    double record_dt = 0.0;  // spacing between recorded values
    double horizon = 0.0;
    // Ito-correction weight on Theta(phi, lap psi): 1/2 when the driving
    // basis realizes identity covariance, 0 for a noiseless flow.
    double laplace_weight = 0.5;

    // metadata snapshots of the families
    std::vector<double> phi_mass, phi_l2, phi_sup;
    std::vector<double> psi_mass, psi_l2, psi_grad_l2, psi_grad_sup;
    std::vector<bool> phi_nonneg, psi_nonneg;

    double theta(int j, int k, int t) const { return theta_[idx(j, k, t)]; }
    double drift_integrand(int j, int k, int t) const { return drift_[idx(j, k, t)]; }
    double laplace_integrand(int j, int k, int t) const { return laplace_[idx(j, k, t)]; }
    double mode_integrand(int j, int k, int i, int t) const { return modes_[midx(j, k, i, t)]; }

    bool has_modes() const { return modes_requested; }
    bool modes_requested = false;

    /// Drift-corrected (martingale) increment of Theta over step t -> t+1.
    double martingale_increment(int j, int k, int t) const {
        double drift_part =
            (drift_integrand(j, k, t) + laplace_weight * laplace_integrand(j, k, t)) *
            record_dt;
        return theta(j, k, t + 1) - theta(j, k, t) - drift_part;
    }

    std::vector<double> theta_, drift_, laplace_, modes_;

    std::size_t idx(int j, int k, int t) const {
        return (static_cast<std::size_t>(j) * K + k) * records + t;
    }

    std::size_t midx(int j, int k, int i, int t) const {
        return ((static_cast<std::size_t>(j) * K + k) * M + i) * records + t;
    }
};

inline TransportSeries theta_series(const PathEnsemble& paths, const TransportRequest& req) {
    const int J = static_cast<int>(req.phis.size());
    const int K = static_cast<int>(req.psis.size());
    const int M = req.mode_integrands && req.basis ? req.basis->size() : 0;
    if (req.mode_integrands && !req.basis)
        throw std::invalid_argument("mode integrands need a basis");

    TransportSeries out;
    out.J = J;
    out.K = K;
    out.M = M;
    out.modes_requested = req.mode_integrands;
    out.records = paths.recorded();
    out.record_dt = paths.dt * paths.thin;
    out.horizon = paths.horizon;
    out.laplace_weight = paths.mode_count > 0 ? 0.5 : 0.0;

    for (const auto& phi : req.phis) {
        if (static_cast<int>(phi.grid_values.size()) != paths.particles)
            throw std::invalid_argument("phi grid values do not match the ensemble");
        out.phi_mass.push_back(phi.mass);
        out.phi_l2.push_back(phi.l2);
        out.phi_sup.push_back(phi.sup);
        out.phi_nonneg.push_back(phi.nonneg);
    }
    for (const auto& psi : req.psis) {
        out.psi_mass.push_back(psi.mass());
        out.psi_l2.push_back(l2_norm(psi));
        out.psi_grad_l2.push_back(std::sqrt(l2_norm_sq(psi.gradient())));
        out.psi_grad_sup.push_back(sup_gradient_norm(psi));
        double min_seen = 0.0;
        for (int a = 0; a < 64; ++a)
            for (int b = 0; b < 64; ++b)
                min_seen = std::min(min_seen, psi.eval(TorusPoint(kTwoPi * a / 64,
                                                                  kTwoPi * b / 64)));
        out.psi_nonneg.push_back(min_seen >= -1e-12);
    }

    // second-argument polynomials: psi, lap psi, div(psi b) per bin,
    // div(psi sigma_i) per mode
    std::vector<TrigPoly> laps;
    laps.reserve(K);
    for (const auto& psi : req.psis) laps.push_back(psi.laplacian());

    const int bins = req.drift ? req.drift->bin_count() : 0;
    std::vector<std::vector<TrigPoly>> drift_div(K);
    if (req.drift) {
        for (int k = 0; k < K; ++k) {
            drift_div[k].reserve(bins);
            for (const auto& bin : req.drift->bins()) {
                TrigPoly d = div_product(req.psis[k], bin.field);
                if (d.degree() > req.max_product_degree)
                    throw std::runtime_error("div_product degree overflow: " +
                                             std::to_string(d.degree()));
                drift_div[k].push_back(std::move(d));
            }
        }
    }

    std::vector<std::vector<TrigPoly>> mode_div(K);
    if (M > 0) {
        auto fields = req.basis->fields();
        for (int k = 0; k < K; ++k) {
            mode_div[k].reserve(M);
            for (int i = 0; i < M; ++i)
                mode_div[k].push_back(div_product(req.psis[k], fields[i]));
        }
    }

    WaveSet ws;
    ws.add(Wave{0, 0});
    for (const auto& psi : req.psis) ws.add(psi);
    for (const auto& lap : laps) ws.add(lap);
    for (const auto& group : drift_div)
        for (const auto& d : group) ws.add(d);
    for (const auto& group : mode_div)
        for (const auto& d : group) ws.add(d);
    ws.finalize();
    const int W = ws.size();

    std::vector<PackedPoly> p_psi, p_lap;
    for (const auto& psi : req.psis) p_psi.push_back(PackedPoly::pack(psi, ws));
    for (const auto& lap : laps) p_lap.push_back(PackedPoly::pack(lap, ws));
    std::vector<std::vector<PackedPoly>> p_drift(K), p_mode(K);
    for (int k = 0; k < K; ++k) {
        for (const auto& d : drift_div[k]) p_drift[k].push_back(PackedPoly::pack(d, ws));
        for (const auto& d : mode_div[k]) p_mode[k].push_back(PackedPoly::pack(d, ws));
    }

    std::vector<std::vector<double>> weights;
    weights.reserve(J);
    for (const auto& phi : req.phis) weights.push_back(phi.grid_values);

    MomentAccumulator acc(ws, paths.particles);
    acc.set_dense_weights(&weights);

    const int R = out.records;
    out.theta_.assign(static_cast<std::size_t>(J) * K * R, 0.0);
    out.drift_.assign(static_cast<std::size_t>(J) * K * R, 0.0);
    out.laplace_.assign(static_cast<std::size_t>(J) * K * R, 0.0);
    if (M > 0) out.modes_.assign(static_cast<std::size_t>(J) * K * M * R, 0.0);

    std::vector<double> mc(static_cast<std::size_t>(J) * W);
    std::vector<double> ms(static_cast<std::size_t>(J) * W);
    for (int t = 0; t < R; ++t) {
        acc.run(paths.slice(t), mc.data(), ms.data());
        int bin = req.drift ? req.drift->bin_index(paths.time_of(t)) : -1;
        for (int j = 0; j < J; ++j) {
            const double* jc = mc.data() + static_cast<std::size_t>(j) * W;
            const double* js = ms.data() + static_cast<std::size_t>(j) * W;
            for (int k = 0; k < K; ++k) {
                out.theta_[out.idx(j, k, t)] = p_psi[k].pair(jc, js);
                out.laplace_[out.idx(j, k, t)] = p_lap[k].pair(jc, js);
                if (bin >= 0)
                    out.drift_[out.idx(j, k, t)] = p_drift[k][bin].pair(jc, js);
                for (int i = 0; i < M; ++i)
                    out.modes_[out.midx(j, k, i, t)] = p_mode[k][i].pair(jc, js);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// per-replica statistics
// ---------------------------------------------------------------------------

struct BracketStat {
    double realized = 0.0;
    double predicted = 0.0;
    double max_predicted_rate = 0.0;
};

/// Realized covariation of two Theta series (drift-corrected increments)
/// against the integrated predicted bracket rate.
inline BracketStat bracket_stat(const TransportSeries& s, int j1, int k1, int j2, int k2) {
    if (!s.has_modes()) throw std::invalid_argument("bracket needs mode integrands");
    BracketStat out;
    for (int t = 0; t < s.records - 1; ++t) {
        out.realized += s.martingale_increment(j1, k1, t) * s.martingale_increment(j2, k2, t);
        double rate = 0.0;
        for (int i = 0; i < s.M; ++i)
            rate += s.mode_integrand(j1, k1, i, t) * s.mode_integrand(j2, k2, i, t);
        out.predicted += rate * s.record_dt;
        out.max_predicted_rate = std::max(out.max_predicted_rate, std::abs(rate));
    }
    return out;
}

/// Residual of the semimartingale reconstruction
///   R_T = Theta_T - Theta_0 - int (D + lap/2) ds - sum_i int Theta(.,div(psi sigma_i)) dW_i
/// computed with the stored increments; O(dt) for the exact quadrature flow.
inline double reconstruction_residual(const TransportSeries& s, const PathEnsemble& paths,
                                      int j, int k) {
    if (!s.has_modes()) throw std::invalid_argument("residual needs mode integrands");
    if (paths.thin != 1) throw std::invalid_argument("residual needs full-resolution paths");
    double acc = 0.0;
    for (int t = 0; t < s.records - 1; ++t) {
        acc += (s.drift_integrand(j, k, t) +
                s.laplace_weight * s.laplace_integrand(j, k, t)) *
               s.record_dt;
        for (int i = 0; i < s.M; ++i)
            acc += s.mode_integrand(j, k, i, t) * paths.dw(t, i);
    }
    return s.theta(j, k, s.records - 1) - s.theta(j, k, 0) - acc;
}

// ---------------------------------------------------------------------------
// multi-replica reports (spec-facing surfaces)
// ---------------------------------------------------------------------------

struct BracketPair {
    int j1, k1, j2, k2;
};

struct BracketReport {
    struct Row {
        BracketPair pair;
        double mean_realized = 0.0;
        double mean_predicted = 0.0;
        double mean_abs_error = 0.0;   // mean over replicas of |realized - predicted|
        double rel_error = 0.0;        // mean_abs_error / |mean_predicted| (scale-guarded)
        double bound = 0.0;            // |phi1||grad psi1||phi2||grad psi2| rate bound
        double max_rate = 0.0;
        bool rate_ok = true;
    };
    std::vector<Row> rows;
    double mean_rel_error = 0.0;
    bool rate_bound_ok = true;

    bool pass(double tol) const { return mean_rel_error <= tol && rate_bound_ok; }
};

inline BracketReport bracket_check(std::span<const TransportSeries> series,
                                   const std::vector<BracketPair>& pairs,
                                   double rate_slack = 0.10) {
    BracketReport rep;
    for (const auto& p : pairs) {
        BracketReport::Row row;
        row.pair = p;
        double abs_err = 0.0;
        for (const auto& s : series) {
            BracketStat st = bracket_stat(s, p.j1, p.k1, p.j2, p.k2);
            row.mean_realized += st.realized;
            row.mean_predicted += st.predicted;
            abs_err += std::abs(st.realized - st.predicted);
            row.max_rate = std::max(row.max_rate, st.max_predicted_rate);
        }
        double n = static_cast<double>(series.size());
        row.mean_realized /= n;
        row.mean_predicted /= n;
        row.mean_abs_error = abs_err / n;

        const auto& s0 = series[0];
        row.bound = s0.phi_l2[p.j1] * s0.psi_grad_l2[p.k1] * s0.phi_l2[p.j2] *
                    s0.psi_grad_l2[p.k2];
        // scale guard: Cauchy-Schwarz caps the bracket by the norm product
        double scale = std::max(std::abs(row.mean_predicted), 1e-3 * row.bound * s0.horizon);
        row.rel_error = scale > 0.0 ? row.mean_abs_error / scale : 0.0;
        row.rate_ok = row.max_rate <= row.bound * (1.0 + rate_slack) + 1e-15;
        rep.rate_bound_ok = rep.rate_bound_ok && row.rate_ok;
        rep.rows.push_back(row);
    }
    for (const auto& r : rep.rows) rep.mean_rel_error += r.rel_error;
    if (!rep.rows.empty()) rep.mean_rel_error /= static_cast<double>(rep.rows.size());
    return rep;
}

struct FinalConfigReport {
    struct Row {
        int j, k;
        double mean, se, target, z;
    };
    std::vector<Row> rows;
    double max_abs_z = 0.0;
    bool pass = true;  // every |z| <= 3
};

inline FinalConfigReport final_configuration_check(std::span<const TransportSeries> series,
                                                   const MomentTable& target) {
    if (series.size() < 2) throw std::invalid_argument("need >= 2 replicas");
    FinalConfigReport rep;
    const int J = series[0].J, K = series[0].K;
    const int T = series[0].records - 1;
    for (int j = 0; j < J; ++j) {
        for (int k = 0; k < K; ++k) {
            double mean = 0.0, var = 0.0;
            for (const auto& s : series) mean += s.theta(j, k, T);
            mean /= static_cast<double>(series.size());
            for (const auto& s : series) {
                double d = s.theta(j, k, T) - mean;
                var += d * d;
            }
            var /= (series.size() - 1.0);
            double se = std::sqrt(var / series.size());
            double z = se > 1e-14 ? (mean - target.at(j, k)) / se
                                  : (std::abs(mean - target.at(j, k)) < 1e-12 ? 0.0 : 1e9);
            rep.rows.push_back({j, k, mean, se, target.at(j, k), z});
            rep.max_abs_z = std::max(rep.max_abs_z, std::abs(z));
        }
    }
    rep.pass = rep.max_abs_z <= 3.0;
    return rep;
}

struct ResidualReport {
    double max_abs = 0.0;
    double max_normalized = 0.0;  // divided by |phi| |psi|
};

inline ResidualReport martingale_residual(std::span<const TransportSeries> series,
                                          std::span<const PathEnsemble> paths) {
    ResidualReport rep;
    for (std::size_t r = 0; r < series.size(); ++r) {
        const auto& s = series[r];
        for (int j = 0; j < s.J; ++j) {
            for (int k = 0; k < s.K; ++k) {
                double res = std::abs(reconstruction_residual(s, paths[r], j, k));
                rep.max_abs = std::max(rep.max_abs, res);
                double denom = s.phi_l2[j] * s.psi_l2[k];
                if (denom > 1e-14)
                    rep.max_normalized = std::max(rep.max_normalized, res / denom);
            }
        }
    }
    return rep;
}

/// Conservative quadrature slack: O(N^{-1/2}) per unit test-function norm.
inline double quadrature_slack(int particles) { return 2.0 / std::sqrt(double(particles)); }

// ---------------------------------------------------------------------------
// axiom sweep
// ---------------------------------------------------------------------------

struct AxiomCheck {
    std::string name;
    double stat = 0.0;
    double tol = 0.0;
    bool pass = false;
};

struct AxiomReport {
    std::vector<AxiomCheck> checks;

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

/// Random sweep family: the constant, an exactly nonnegative square, and
/// four degree-2 polynomials with pseudorandom coefficients.
inline std::vector<TrigPoly> sweep_family(std::uint64_t seed, std::uint32_t tag) {
    std::vector<TrigPoly> fam;
    fam.push_back(TrigPoly::constant(1.0));
    TrigPoly root = TrigPoly::constant(0.9) + TrigPoly::harmonic(1, 0, 0.35, 0.0) +
                    TrigPoly::harmonic(0, 1, 0.0, tag == 0 ? 0.3 : -0.25);
    fam.push_back(root * root);  // nonnegative by construction
    for (std::uint32_t f = 0; f < 4; ++f) {
        TrigPoly g;
        std::uint32_t n = 0;
        for (int k1 = 0; k1 <= 2; ++k1) {
            for (int k2 = -2; k2 <= 2; ++k2) {
                Wave k{k1, k2};
                if (!k.is_canonical()) continue;
                double c = 0.25 * counter_normal(seed, RngStream::kScatter, 100 + tag, f, n++);
                double s = (k.inf_norm() == 0)
                               ? 0.0
                               : 0.25 * counter_normal(seed, RngStream::kScatter, 100 + tag,
                                                       f, n++);
                g.add_term(k, c, s);
            }
        }
        fam.push_back(g);
    }
    return fam;
}

/// Runs a noise + constant-drift flow at the given configuration and checks
/// all eight defining properties of a generalized flow against their
/// stated tolerances.  Streaming over replicas; memory stays per-replica.
inline AxiomReport axiom_sweep(const NoiseBasis& basis, const Vec2& drift_c,
                               const SimConfig& cfg, std::uint64_t family_seed = 7) {
    std::vector<TrigPoly> phi_polys = sweep_family(family_seed, 0);
    std::vector<TrigPoly> psi_polys = sweep_family(family_seed, 1);
    const int J = static_cast<int>(phi_polys.size());
    const int K = static_cast<int>(psi_polys.size());
    SpectralField drift = SpectralField::constant(drift_c, cfg.T);

    std::vector<double> grid = uniform_grid_points(cfg.grid_side);
    TransportRequest req;
    for (int j = 0; j < J; ++j)
        req.phis.push_back(first_arg_from_poly(phi_polys[j], grid, "phi" + std::to_string(j)));
    req.psis = psi_polys;
    req.basis = &basis;
    req.drift = &drift;
    req.mode_integrands = true;

    MomentTable target = heat_drift_targets(phi_polys, psi_polys, cfg.T, drift_c);
    MomentTable inner0 = diagonal_targets(phi_polys, psi_polys);

    // bracket pair set: nonconstant diagonals plus a few cross quadruples
    std::vector<BracketPair> pairs;
    for (int j = 1; j < J; ++j)
        for (int k = 1; k < K; ++k) pairs.push_back({j, k, j, k});
    std::vector<BracketPair> cross = {{1, 1, 2, 2}, {1, 2, 2, 1}, {3, 4, 4, 3}};

    const int R = cfg.replicas;
    struct ReplicaStats {
        std::vector<double> theta_T;           // J*K
        double worst_psi1 = 0.0;               // axiom 2, psi = 1
        double worst_phi1 = 0.0;               // axiom 2, phi = 1 (per unit psi norm)
        std::vector<BracketStat> brackets;     // diag pairs then cross
        double worst_qv_excess = 0.0;          // axiom 4 realized total vs bound*T
        std::vector<double> dtilde_sq;         // J*K, trapezoid of D-tilde^2
        double worst_start = 0.0;              // axiom 6
        double min_nonneg = 0.0;               // axiom 7
        double worst_bound_excess = -1e300;    // axiom 8: max |theta| - |phi||psi|
    };
    std::vector<ReplicaStats> stats(R);

    for_each_replica(basis, drift, cfg, [&](int r, const PathEnsemble& e) {
        TransportSeries s = theta_series(e, req);
        ReplicaStats& st = stats[r];
        st.theta_T.resize(static_cast<std::size_t>(J) * K);
        st.dtilde_sq.assign(static_cast<std::size_t>(J) * K, 0.0);

        for (int j = 0; j < J; ++j) {
            for (int k = 0; k < K; ++k) {
                st.theta_T[static_cast<std::size_t>(j) * K + k] = s.theta(j, k, s.records - 1);
                // trapezoid of the squared drift-derivative
                double acc = 0.0;
                for (int t = 0; t < s.records; ++t) {
                    double d = s.drift_integrand(j, k, t);
                    double w = (t == 0 || t == s.records - 1) ? 0.5 : 1.0;
                    acc += w * d * d;
                }
                st.dtilde_sq[static_cast<std::size_t>(j) * K + k] = acc * s.record_dt;

                st.worst_start = std::max(
                    st.worst_start, std::abs(s.theta(j, k, 0) - inner0.at(j, k)));
                double nb = s.phi_l2[j] * s.psi_l2[k];
                for (int t = 0; t < s.records; ++t) {
                    double v = s.theta(j, k, t);
                    st.worst_bound_excess = std::max(st.worst_bound_excess, std::abs(v) - nb);
                    if (k == 0)  // psi = 1
                        st.worst_psi1 = std::max(st.worst_psi1, std::abs(v - s.phi_mass[j]));
                    if (j == 0 && s.psi_l2[k] > 1e-14)  // phi = 1
                        st.worst_phi1 = std::max(
                            st.worst_phi1, std::abs(v - s.psi_mass[k]) / s.psi_l2[k]);
                    if (j == 1 && k == 1)  // the nonnegative pair
                        st.min_nonneg = std::min(st.min_nonneg, v);
                }
            }
        }

        st.brackets.reserve(pairs.size() + cross.size());
        for (const auto& p : pairs) {
            BracketStat b = bracket_stat(s, p.j1, p.k1, p.j2, p.k2);
            st.brackets.push_back(b);
            if (p.j1 == p.j2 && p.k1 == p.k2) {
                double bound = s.phi_l2[p.j1] * s.phi_l2[p.j1] * s.psi_grad_l2[p.k1] *
                               s.psi_grad_l2[p.k1];
                double excess = std::max(b.realized, b.predicted) -
                                bound * s.horizon * 1.10;
                st.worst_qv_excess = std::max(st.worst_qv_excess, excess);
            }
        }
        for (const auto& p : cross)
            st.brackets.push_back(bracket_stat(s, p.j1, p.k1, p.j2, p.k2));
    });

    AxiomReport rep;
    auto add = [&](const std::string& name, double stat, double tol, bool less_equal = true) {
        rep.checks.push_back({name, stat, tol, less_equal ? stat <= tol : stat >= tol});
    };

    // (1) expected final configuration vs the analytic eta moments, 3 SE
    {
        double worst_z = 0.0;
        for (int j = 0; j < J; ++j) {
            for (int k = 0; k < K; ++k) {
                double mean = 0.0, var = 0.0;
                for (const auto& st : stats)
                    mean += st.theta_T[static_cast<std::size_t>(j) * K + k];
                mean /= R;
                for (const auto& st : stats) {
                    double d = st.theta_T[static_cast<std::size_t>(j) * K + k] - mean;
                    var += d * d;
                }
                double se = std::sqrt(var / (R - 1.0) / R);
                double dev = std::abs(mean - target.at(j, k));
                worst_z = std::max(worst_z, se > 1e-14 ? dev / se : (dev > 1e-10 ? 1e9 : 0.0));
            }
        }
        add("(1) final configuration within 3 SE", worst_z, 3.0);
    }
    // (2) marginals
    {
        double w1 = 0.0, w2 = 0.0;
        for (const auto& st : stats) {
            w1 = std::max(w1, st.worst_psi1);
            w2 = std::max(w2, st.worst_phi1);
        }
        add("(2a) Theta_t(phi,1) constant", w1, 1e-12);
        add("(2b) Theta_t(1,psi) incompressibility", w2,
            quadrature_slack(cfg.grid_side * cfg.grid_side));
    }
    // (3) brackets: realized vs predicted, averaged over replicas
    {
        double rel_sum = 0.0;
        int counted = 0;
        for (std::size_t p = 0; p < pairs.size() + cross.size(); ++p) {
            double abs_err = 0.0, pred = 0.0;
            for (const auto& st : stats) {
                abs_err += std::abs(st.brackets[p].realized - st.brackets[p].predicted);
                pred += std::abs(st.brackets[p].predicted);
            }
            abs_err /= R;
            pred /= R;
            if (pred < 1e-6) continue;  // degenerate pair, no scale to compare against
            rel_sum += abs_err / pred;
            ++counted;
        }
        add("(3) bracket identity, mean relative error", counted ? rel_sum / counted : 0.0,
            0.10);
    }
    // (4) bracket bound with 10% slack (worst integrated excess)
    {
        double w = -1e300;
        for (const auto& st : stats) w = std::max(w, st.worst_qv_excess);
        add("(4) quadratic variation bound", w, 0.0);
    }
    // (5) energy bound on the drift derivative:
    //   E int (D Theta~)^2 dt <= 2 E' |phi|_{L2}^2 |grad psi|_{Linf}^2,
    // with E' equal to the flow energy for a flow-built transport.
    {
        double worst_ratio = 0.0;
        double energy = drift_energy(drift).value;
        for (int j = 0; j < J; ++j) {
            for (int k = 0; k < K; ++k) {
                double mean = 0.0;
                for (const auto& st : stats)
                    mean += st.dtilde_sq[static_cast<std::size_t>(j) * K + k];
                mean /= R;
                double phi_l2 = l2_norm(phi_polys[j]);
                double grad_sup = sup_gradient_norm(psi_polys[k]);
                double cap = 2.0 * energy * phi_l2 * phi_l2 * grad_sup * grad_sup;
                if (cap > 1e-14) worst_ratio = std::max(worst_ratio, mean / cap);
            }
        }
        add("(5) drift-derivative energy bound (ratio)", worst_ratio, 1.10);
    }
    // (6) starting point
    {
        double w = 0.0;
        for (const auto& st : stats) w = std::max(w, st.worst_start);
        add("(6) Theta_0 = (phi,psi)_L2", w, 1e-6);
    }
    // (7) nonnegativity
    {
        double w = 0.0;
        for (const auto& st : stats) w = std::min(w, st.min_nonneg);
        add("(7) nonnegativity of Theta", w, -1e-9, /*less_equal=*/false);
    }
    // (8) Cauchy-Schwarz bound
    {
        double w = -1e300;
        for (const auto& st : stats) w = std::max(w, st.worst_bound_excess);
        add("(8) |Theta| <= |phi||psi|", w, 1e-6);
    }
    return rep;
}

}  // namespace torusflow
