// Divergence-free noise basis on the torus.
//
// For each wave vector k the two fields
//   A_k(theta) = (k2, -k1) cos(k.theta),   B_k(theta) = (k2, -k1) sin(k.theta)
// are divergence-free ((k2,-k1) is orthogonal to k).  One representative per
// antipodal pair {k, -k} is kept, since A_{-k} = A_k and B_{-k} = -B_k.
// Weights lambda_k = |k|^(-decay) are rescaled globally so that
// sum_i sigma_i(x) (x) sigma_i(x)^T equals the identity at every point,
// which the symmetric mode set attains exactly.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "torusflow/geometry.hpp"
#include "torusflow/philox.hpp"
#include "torusflow/trig_poly.hpp"

namespace torusflow {

enum class Parity { A, B };  // A: cosine field, B: sine field

struct NoiseMode {
    Wave k;
    Parity parity = Parity::A;
    double weight = 0.0;

    Vec2 direction() const { return {double(k.k2), double(-k.k1)}; }

    VectorTrigPoly field() const {
        double c = parity == Parity::A ? weight : 0.0;
        double s = parity == Parity::B ? weight : 0.0;
        return {TrigPoly::harmonic(k.k1, k.k2, c * k.k2, s * k.k2),
                TrigPoly::harmonic(k.k1, k.k2, -c * k.k1, -s * k.k1)};
    }
};

class NoiseBasis {
  public:
    NoiseBasis() = default;
    NoiseBasis(int cutoff, double decay, double normalization,
               std::vector<NoiseMode> modes)
        : cutoff_(cutoff), decay_(decay), normalization_(normalization),
          modes_(std::move(modes)) {}

    int cutoff() const { return cutoff_; }
    double decay() const { return decay_; }
    double normalization() const { return normalization_; }
    int size() const { return static_cast<int>(modes_.size()); }
    bool empty() const { return modes_.empty(); }
    const NoiseMode& mode(int i) const { return modes_[i]; }
    const std::vector<NoiseMode>& modes() const { return modes_; }

    std::vector<VectorTrigPoly> fields() const {
        std::vector<VectorTrigPoly> out;
        out.reserve(modes_.size());
        for (const auto& m : modes_) out.push_back(m.field());
        return out;
    }

    std::string id() const {
        return "basis-K" + std::to_string(cutoff_) + "-d" + std::to_string(decay_);
    }

  private:
    int cutoff_ = 0;
    double decay_ = 0.0;
    double normalization_ = 1.0;
    std::vector<NoiseMode> modes_;
};

/// Canonical wave vectors with 0 < |k|_inf <= K, ordered lexicographically.
inline std::vector<Wave> canonical_waves(int K) {
    std::vector<Wave> out;
    for (int k1 = 0; k1 <= K; ++k1) {
        for (int k2 = -K; k2 <= K; ++k2) {
            Wave k{k1, k2};
            if (k.inf_norm() == 0 || !k.is_canonical()) continue;
            out.push_back(k);
        }
    }
    return out;
}

inline NoiseBasis build_noise_basis(int K, double decay = 2.0) {
    if (K < 1) throw std::invalid_argument("noise basis cutoff must be >= 1");
    if (decay < 0.0) throw std::invalid_argument("noise basis decay must be >= 0");

    std::vector<NoiseMode> modes;
    double trace = 0.0;
    for (const Wave& k : canonical_waves(K)) {
        double lambda = std::pow(k.norm_sq(), -0.5 * decay);
        modes.push_back({k, Parity::A, lambda});
        modes.push_back({k, Parity::B, lambda});
        // cos^2 + sin^2 collapses each {A_k, B_k} pair to lambda^2 v_k v_k^T
        trace += lambda * lambda * k.norm_sq();
    }
    double c = 0.5 * trace;  // sum_i sigma_i sigma_i^T = c * Id before rescale
    double scale = 1.0 / std::sqrt(c);
    for (auto& m : modes) m.weight *= scale;
    return NoiseBasis(K, decay, c, std::move(modes));
}

struct StructureReport {
    double max_divergence = 0.0;       // max |div sigma_i| over the grid
    double max_identity_deviation = 0.0;  // max |sum sigma sigma^T - Id|
    double max_self_advection = 0.0;   // max |sum (sigma_i . grad) sigma_i|

    bool valid(double tol = 1e-10) const {
        return max_divergence <= tol && max_identity_deviation <= tol &&
               max_self_advection <= tol;
    }
};

/// Structure check over explicit fields; lets tests tamper with a basis.
inline StructureReport check_structure_fields(const std::vector<VectorTrigPoly>& fields,
                                              int grid_n = 17,
                                              int random_points = 100,
                                              std::uint64_t seed = 2024) {
    std::vector<TorusPoint> pts;
    pts.reserve(static_cast<std::size_t>(grid_n) * grid_n + random_points);
    for (int i = 0; i < grid_n; ++i)
        for (int j = 0; j < grid_n; ++j)
            pts.emplace_back(kTwoPi * i / grid_n, kTwoPi * j / grid_n);
    for (int i = 0; i < random_points; ++i)
        pts.emplace_back(kTwoPi * counter_uniform(seed, RngStream::kScatter, 0, 0, 2 * i),
                         kTwoPi * counter_uniform(seed, RngStream::kScatter, 0, 0, 2 * i + 1));

    std::vector<TrigPoly> divs;
    std::vector<VectorTrigPoly> self_adv;  // (V . grad) V per field
    divs.reserve(fields.size());
    self_adv.reserve(fields.size());
    for (const auto& V : fields) {
        divs.push_back(V.divergence());
        TrigPoly a1 = V.u1() * V.u1().dtheta(0) + V.u2() * V.u1().dtheta(1);
        TrigPoly a2 = V.u1() * V.u2().dtheta(0) + V.u2() * V.u2().dtheta(1);
        self_adv.emplace_back(a1, a2);
    }

    StructureReport rep;
    for (const auto& p : pts) {
        Mat2 cov{};
        Vec2 adv{};
        for (std::size_t i = 0; i < fields.size(); ++i) {
            Vec2 v = fields[i].eval(p);
            cov += outer(v, v);
            adv += self_adv[i].eval(p);
            rep.max_divergence = std::max(rep.max_divergence, std::abs(divs[i].eval(p)));
        }
        double dev = std::max({std::abs(cov.a11 - 1.0), std::abs(cov.a22 - 1.0),
                               std::abs(cov.a12), std::abs(cov.a21)});
        rep.max_identity_deviation = std::max(rep.max_identity_deviation, dev);
        rep.max_self_advection = std::max(rep.max_self_advection, norm(adv));
    }
    return rep;
}

inline StructureReport check_structure(const NoiseBasis& basis, int grid_n = 17,
                                       int random_points = 100,
                                       std::uint64_t seed = 2024) {
    return check_structure_fields(basis.fields(), grid_n, random_points, seed);
}

}  // namespace torusflow
