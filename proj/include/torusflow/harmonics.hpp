// Batched evaluation of many torus harmonics at many points.
//
// e^{i k.theta} = (e^{i theta1})^{k1} (e^{i theta2})^{k2}, so one sincos pair
// per coordinate plus cheap complex multiplies yields cos/sin of every wave
// in a set.  This is the inner engine behind transport-series quadrature:
// the weighted trigonometric moments of an empirical measure determine
// Theta_t(phi, psi) for every test polynomial psi at once.
#pragma once

#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "torusflow/trig_poly.hpp"

namespace torusflow {

struct Cx {
    double re = 0.0;
    double im = 0.0;
};

inline Cx cmul(const Cx& a, const Cx& b) {
    return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}

/// Ordered set of canonical waves with index lookup.
class WaveSet {
  public:
    void add(Wave k) {
        if (!k.is_canonical()) k = k.negated();
        if (index_.count(k)) return;
        index_[k] = -1;  // assigned in finalize
    }

    void add(const TrigPoly& f) {
        for (const auto& [k, h] : f.terms()) add(k);
    }

    void add(const VectorTrigPoly& V) {
        add(V.u1());
        add(V.u2());
    }

    /// All canonical waves with |k|_inf <= deg (plus the constant).
    void add_full_lattice(int deg) {
        add(Wave{0, 0});
        for (int k1 = 0; k1 <= deg; ++k1)
            for (int k2 = -deg; k2 <= deg; ++k2)
                if (Wave{k1, k2}.is_canonical()) add(Wave{k1, k2});
    }

    void finalize() {
        waves_.clear();
        waves_.reserve(index_.size());
        max1_ = max2_ = 0;
        for (auto& [k, idx] : index_) {
            idx = static_cast<int>(waves_.size());
            waves_.push_back(k);
            max1_ = std::max(max1_, k.k1);
            max2_ = std::max(max2_, std::abs(k.k2));
        }
        finalized_ = true;
    }

    int size() const { return static_cast<int>(waves_.size()); }
    const std::vector<Wave>& waves() const { return waves_; }
    int max_exp1() const { return max1_; }
    int max_exp2() const { return max2_; }

    int index_of(Wave k) const {
        if (!k.is_canonical()) k = k.negated();
        auto it = index_.find(k);
        if (it == index_.end()) throw std::out_of_range("wave not in WaveSet");
        return it->second;
    }

    bool finalized() const { return finalized_; }

  private:
    std::map<Wave, int> index_;
    std::vector<Wave> waves_;
    int max1_ = 0;
    int max2_ = 0;
    bool finalized_ = false;
};

/// Per-thread workspace evaluating every wave of a set at one point.
class WaveEvaluator {
  public:
    explicit WaveEvaluator(const WaveSet& ws) : ws_(ws) {
        p1_.resize(ws.max_exp1() + 1);
        p2_.resize(ws.max_exp2() + 1);
        vals_.resize(ws.size());
    }

    /// vals[w] = e^{i k_w . theta}; real part = cos, imaginary = sin.
    const std::vector<Cx>& at(double theta1, double theta2) {
        Cx z1{std::cos(theta1), std::sin(theta1)};
        Cx z2{std::cos(theta2), std::sin(theta2)};
        p1_[0] = {1.0, 0.0};
        for (std::size_t a = 1; a < p1_.size(); ++a) p1_[a] = cmul(p1_[a - 1], z1);
        p2_[0] = {1.0, 0.0};
        for (std::size_t a = 1; a < p2_.size(); ++a) p2_[a] = cmul(p2_[a - 1], z2);
        const auto& waves = ws_.waves();
        for (std::size_t w = 0; w < waves.size(); ++w) {
            const Wave& k = waves[w];
            Cx b = k.k2 >= 0 ? p2_[k.k2] : Cx{p2_[-k.k2].re, -p2_[-k.k2].im};
            vals_[w] = cmul(p1_[k.k1], b);
        }
        return vals_;
    }

  private:
    const WaveSet& ws_;
    std::vector<Cx> p1_, p2_, vals_;
};

/// TrigPoly restricted to a WaveSet: index/coefficient triples for fast
/// pairing against trigonometric moments.
struct PackedPoly {
    std::vector<int> idx;
    std::vector<double> c;
    std::vector<double> s;

    static PackedPoly pack(const TrigPoly& f, const WaveSet& ws) {
        PackedPoly p;
        for (const auto& [k, h] : f.terms()) {
            p.idx.push_back(ws.index_of(k));
            p.c.push_back(h.c);
            p.s.push_back(h.s);
        }
        return p;
    }

    /// sum of c_w mom_cos[w] + s_w mom_sin[w].
    double pair(const double* mom_cos, const double* mom_sin) const {
        double acc = 0.0;
        for (std::size_t t = 0; t < idx.size(); ++t)
            acc += c[t] * mom_cos[idx[t]] + s[t] * mom_sin[idx[t]];
        return acc;
    }
};

/// Weighted trigonometric moments of a point cloud:
///   mom_cos[g][w] = (1/N) sum_i weight_g(i) cos(k_w . p_i)   (same for sin).
///
/// Dense groups carry one weight per particle; the sparse block is CSR by
/// particle for small-support weights (partition bumps).
class MomentAccumulator {
  public:
    MomentAccumulator(const WaveSet& ws, int particles)
        : ws_(ws), particles_(particles), eval_(ws) {}

    void set_dense_weights(const std::vector<std::vector<double>>* dense) { dense_ = dense; }

    struct Sparse {
        std::vector<int> offsets;  // size particles + 1
        std::vector<int> group;
        std::vector<double> weight;
        int group_count = 0;
    };
    void set_sparse_weights(const Sparse* sparse) { sparse_ = sparse; }

    int dense_groups() const { return dense_ ? static_cast<int>(dense_->size()) : 0; }
    int sparse_groups() const { return sparse_ ? sparse_->group_count : 0; }
    int total_groups() const { return dense_groups() + sparse_groups(); }

    /// positions: interleaved (theta1, theta2) pairs, length 2*particles.
    /// mom_cos/mom_sin: [total_groups][W], zeroed here.
    void run(std::span<const double> positions, double* mom_cos, double* mom_sin) {
        const int W = ws_.size();
        const int G = total_groups();
        std::fill(mom_cos, mom_cos + static_cast<std::size_t>(G) * W, 0.0);
        std::fill(mom_sin, mom_sin + static_cast<std::size_t>(G) * W, 0.0);
        const int dg = dense_groups();
        for (int i = 0; i < particles_; ++i) {
            const auto& vals = eval_.at(positions[2 * i], positions[2 * i + 1]);
            for (int g = 0; g < dg; ++g) {
                double wgt = (*dense_)[g][i];
                if (wgt == 0.0) continue;
                double* mc = mom_cos + static_cast<std::size_t>(g) * W;
                double* ms = mom_sin + static_cast<std::size_t>(g) * W;
                for (int w = 0; w < W; ++w) {
                    mc[w] += wgt * vals[w].re;
                    ms[w] += wgt * vals[w].im;
                }
            }
            if (sparse_) {
                for (int e = sparse_->offsets[i]; e < sparse_->offsets[i + 1]; ++e) {
                    int g = dg + sparse_->group[e];
                    double wgt = sparse_->weight[e];
                    double* mc = mom_cos + static_cast<std::size_t>(g) * W;
                    double* ms = mom_sin + static_cast<std::size_t>(g) * W;
                    for (int w = 0; w < W; ++w) {
                        mc[w] += wgt * vals[w].re;
                        ms[w] += wgt * vals[w].im;
                    }
                }
            }
        }
        double inv = 1.0 / particles_;
        for (std::size_t t = 0; t < static_cast<std::size_t>(G) * W; ++t) {
            mom_cos[t] *= inv;
            mom_sin[t] *= inv;
        }
    }

  private:
    const WaveSet& ws_;
    int particles_;
    WaveEvaluator eval_;
    const std::vector<std::vector<double>>* dense_ = nullptr;
    const Sparse* sparse_ = nullptr;
};

}  // namespace torusflow
