// Kinetic energy of a flow and its transport-level extension.
//
// The flow energy is exact (drift_energy).  The transport energy is a
// supremum over partition/gradient test families; any concrete family
// yields a lower bound
//   1/2 sum_{j,k} E[ int (Theta_t(phi_j, div(psi_k b_t)))^2 dt ] / mass_j,
// and refining the partition drives the bound toward the flow energy.
// The bound direction holds for every admissible family; only the
// terminal gap of the refinement ladder is asserted to shrink.
#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "torusflow/transport.hpp"

namespace torusflow {

/// For a deterministic drift the omega- and x-integrals collapse.
inline EnergyValue flow_energy(const SpectralField& drift) { return drift_energy(drift); }

struct EnergyLowerBound {
    double value = 0.0;
    double se = 0.0;  // replica-mean standard error
};

/// Lower bound from series whose first-argument family is a partition of
/// unity and whose second-argument family satisfies the gradient
/// constraint.  Theta_t(phi_j, 1) is replaced by the constant mass of
/// phi_j, and the time integral uses the trapezoid rule.
inline EnergyLowerBound generalized_energy_lb(std::span<const TransportSeries> series) {
    if (series.empty()) throw std::invalid_argument("no replicas");
    std::vector<double> per_replica;
    per_replica.reserve(series.size());
    for (const auto& s : series) {
        double acc = 0.0;
        for (int j = 0; j < s.J; ++j) {
            if (s.phi_mass[j] < 1e-12)
                throw std::invalid_argument("partition mass too small");
            for (int k = 0; k < s.K; ++k) {
                double t_int = 0.0;
                for (int t = 0; t < s.records; ++t) {
                    double d = s.drift_integrand(j, k, t);
                    double w = (t == 0 || t == s.records - 1) ? 0.5 : 1.0;
                    t_int += w * d * d;
                }
                acc += t_int * s.record_dt / s.phi_mass[j];
            }
        }
        per_replica.push_back(0.5 * acc);
    }
    EnergyLowerBound out;
    for (double v : per_replica) out.value += v;
    out.value /= static_cast<double>(per_replica.size());
    if (per_replica.size() > 1) {
        double var = 0.0;
        for (double v : per_replica) var += (v - out.value) * (v - out.value);
        var /= (per_replica.size() - 1.0);
        out.se = std::sqrt(var / per_replica.size());
    }
    return out;
}

struct LadderRung {
    int m = 0;
    double radius_periods = 0.0;
    double value = 0.0;
    double se = 0.0;
};

namespace detail {

/// Precomputed sparse partition weights over a particle grid, for several
/// refinement levels at once.
struct PartitionStack {
    MomentAccumulator::Sparse sparse;
    std::vector<int> level_of_group;   // group -> ladder level
    std::vector<double> mass_of_group;
    std::vector<int> ms;

    static PartitionStack build(const std::vector<int>& ms, std::span<const double> pts) {
        PartitionStack out;
        out.ms = ms;
        int n = static_cast<int>(pts.size() / 2);
        std::vector<PartitionFamily> fams;
        std::vector<int> group_base;
        int groups = 0;
        for (int m : ms) {
            fams.emplace_back(m);
            group_base.push_back(groups);
            groups += fams.back().count();
        }
        for (std::size_t lvl = 0; lvl < fams.size(); ++lvl)
            for (int j = 0; j < fams[lvl].count(); ++j) {
                out.level_of_group.push_back(static_cast<int>(lvl));
                out.mass_of_group.push_back(fams[lvl].mass(j));
            }
        out.sparse.group_count = groups;
        out.sparse.offsets.assign(n + 1, 0);
        for (int i = 0; i < n; ++i) {
            out.sparse.offsets[i] = static_cast<int>(out.sparse.group.size());
            TorusPoint p(pts[2 * i], pts[2 * i + 1]);
            for (std::size_t lvl = 0; lvl < fams.size(); ++lvl) {
                for (int j = 0; j < fams[lvl].count(); ++j) {
                    if (!fams[lvl].in_support(j, p)) continue;
                    double v = fams[lvl].value(j, p);
                    if (v <= 0.0) continue;
                    out.sparse.group.push_back(group_base[lvl] + j);
                    out.sparse.weight.push_back(v);
                }
            }
        }
        out.sparse.offsets[n] = static_cast<int>(out.sparse.group.size());
        return out;
    }
};

}  // namespace detail

struct Prop25Report {
    double flow_energy = 0.0;
    std::vector<LadderRung> rungs;
    double slack = 0.05;
    bool all_bounded = false;  // every rung <= E (1 + slack)
    bool gap_shrinks = false;  // terminal gap below the first rung's gap
    bool pass = false;
};

/// Simulates the flow of (basis, drift), evaluates the lower bound on a
/// refinement ladder of partitions crossed with the embedding gradient
/// family, and checks both directions numerically: bound below the flow
/// energy for every family, terminal gap shrinking along the ladder.
inline Prop25Report proposition_2_5_check(const NoiseBasis& basis, const SpectralField& drift,
                                          const SimConfig& cfg,
                                          const std::vector<int>& ms = {4, 8, 16},
                                          double slack = 0.05) {
    std::vector<double> grid = uniform_grid_points(cfg.grid_side);
    detail::PartitionStack stack = detail::PartitionStack::build(ms, grid);
    std::vector<TrigPoly> psis = GradientFamily::functions();
    const int K = static_cast<int>(psis.size());
    const int levels = static_cast<int>(ms.size());

    // div(psi_k b) per drift bin, packed over a shared wave set
    WaveSet ws;
    ws.add(Wave{0, 0});
    std::vector<std::vector<TrigPoly>> div_polys(K);
    for (int k = 0; k < K; ++k)
        for (const auto& bin : drift.bins())
            div_polys[k].push_back(div_product(psis[k], bin.field));
    for (const auto& group : div_polys)
        for (const auto& d : group) ws.add(d);
    ws.finalize();
    std::vector<std::vector<PackedPoly>> packed(K);
    for (int k = 0; k < K; ++k)
        for (const auto& d : div_polys[k]) packed[k].push_back(PackedPoly::pack(d, ws));

    const int S = steps_for(cfg.T, cfg.dt);
    const int W = ws.size();
    const int G = stack.sparse.group_count;

    // per replica, per ladder level: sum over (j,k) of trapezoid(D^2)/mass
    std::vector<std::vector<double>> level_sum(cfg.replicas,
                                               std::vector<double>(levels, 0.0));
    for_each_replica(basis, drift, cfg, [&](int r, const PathEnsemble& e) {
        MomentAccumulator acc(ws, e.particles);
        acc.set_sparse_weights(&stack.sparse);
        std::vector<double> mc(static_cast<std::size_t>(G) * W);
        std::vector<double> msn(static_cast<std::size_t>(G) * W);
        for (int t = 0; t <= S; ++t) {
            acc.run(e.slice(t), mc.data(), msn.data());
            int bin = drift.bin_index(e.time_of(t));
            double w = (t == 0 || t == S) ? 0.5 : 1.0;
            for (int g = 0; g < G; ++g) {
                const double* gc = mc.data() + static_cast<std::size_t>(g) * W;
                const double* gs = msn.data() + static_cast<std::size_t>(g) * W;
                double contrib = 0.0;
                for (int k = 0; k < K; ++k) {
                    double d = packed[k][bin].pair(gc, gs);
                    contrib += d * d;
                }
                level_sum[r][stack.level_of_group[g]] +=
                    w * cfg.dt * contrib / stack.mass_of_group[g];
            }
        }
    });

    Prop25Report rep;
    rep.flow_energy = flow_energy(drift).value;
    rep.slack = slack;
    rep.all_bounded = true;
    for (int lvl = 0; lvl < levels; ++lvl) {
        LadderRung rung;
        rung.m = ms[lvl];
        rung.radius_periods = PartitionFamily(ms[lvl]).radius_periods();
        double mean = 0.0;
        for (int r = 0; r < cfg.replicas; ++r) mean += 0.5 * level_sum[r][lvl];
        mean /= cfg.replicas;
        rung.value = mean;
        if (cfg.replicas > 1) {
            double var = 0.0;
            for (int r = 0; r < cfg.replicas; ++r) {
                double d = 0.5 * level_sum[r][lvl] - mean;
                var += d * d;
            }
            var /= (cfg.replicas - 1.0);
            rung.se = std::sqrt(var / cfg.replicas);
        }
        rep.all_bounded =
            rep.all_bounded && rung.value <= rep.flow_energy * (1.0 + slack) + 1e-12;
        rep.rungs.push_back(rung);
    }
    if (rep.rungs.size() >= 2) {
        double first_gap = std::abs(rep.flow_energy - rep.rungs.front().value);
        double last_gap = std::abs(rep.flow_energy - rep.rungs.back().value);
        rep.gap_shrinks = last_gap <= first_gap + 1e-12;
    } else {
        rep.gap_shrinks = true;
    }
    rep.pass = rep.all_bounded && rep.gap_shrinks;
    return rep;
}

}  // namespace torusflow
