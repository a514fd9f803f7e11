// Time-dependent divergence-free drifts b(t, x): piecewise constant in time,
// one divergence-free VectorTrigPoly per bin.  The representation keeps the
// kinetic energy exact (Parseval per bin) and is directly consumable by the
// particle steppers.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "torusflow/noise_basis.hpp"
#include "torusflow/philox.hpp"
#include "torusflow/quadrature.hpp"
#include "torusflow/trig_poly.hpp"

namespace torusflow {

/// Nonnegative kinetic-energy value (squared speed x time).
struct EnergyValue {
    double value = 0.0;
};

struct DriftBin {
    double t_start = 0.0;
    double t_end = 0.0;
    VectorTrigPoly field;

    double width() const { return t_end - t_start; }
};

class SpectralField {
  public:
    SpectralField() = default;

    static SpectralField zero(double T) {
        SpectralField b;
        b.horizon_ = T;
        b.bins_.push_back({0.0, T, VectorTrigPoly()});
        return b;
    }

    static SpectralField constant(const Vec2& c, double T) {
        SpectralField b;
        b.horizon_ = T;
        b.bins_.push_back({0.0, T, VectorTrigPoly::constant(c)});
        return b;
    }

    static SpectralField single_bin(VectorTrigPoly f, double T) {
        SpectralField b;
        b.horizon_ = T;
        b.bins_.push_back({0.0, T, std::move(f)});
        return b;
    }

    /// Uniform grid of `count` bins over [0, T].
    static SpectralField piecewise(std::vector<VectorTrigPoly> fields, double T) {
        if (fields.empty()) throw std::invalid_argument("piecewise drift needs >= 1 bin");
        SpectralField b;
        b.horizon_ = T;
        int n = static_cast<int>(fields.size());
        for (int i = 0; i < n; ++i)
            b.bins_.push_back({T * i / n, T * (i + 1) / n, std::move(fields[i])});
        return b;
    }

    static SpectralField from_bins(std::vector<DriftBin> bins) {
        if (bins.empty()) throw std::invalid_argument("drift needs >= 1 bin");
        SpectralField b;
        b.bins_ = std::move(bins);
        b.horizon_ = b.bins_.back().t_end;
        return b;
    }

    double horizon() const { return horizon_; }
    const std::vector<DriftBin>& bins() const { return bins_; }
    int bin_count() const { return static_cast<int>(bins_.size()); }

    bool is_zero() const {
        for (const auto& b : bins_)
            if (!b.field.u1().empty() || !b.field.u2().empty()) return false;
        return true;
    }

    /// Piecewise-constant-in-time evaluation convention [t_i, t_{i+1}).
    int bin_index(double t) const {
        if (t <= bins_.front().t_start) return 0;
        if (t >= bins_.back().t_start) return bin_count() - 1;
        int lo = 0, hi = bin_count() - 1;
        while (lo < hi) {
            int mid = (lo + hi + 1) / 2;
            if (bins_[mid].t_start <= t) lo = mid; else hi = mid - 1;
        }
        return lo;
    }

    const VectorTrigPoly& at_time(double t) const { return bins_[bin_index(t)].field; }

    Vec2 eval(double t, const TorusPoint& p) const { return at_time(t).eval(p); }

    int max_degree() const {
        int d = 0;
        for (const auto& b : bins_) d = std::max(d, b.field.degree());
        return d;
    }

    std::string id() const {
        return "drift-B" + std::to_string(bins_.size()) + "-deg" +
               std::to_string(max_degree());
    }

  private:
    double horizon_ = 0.0;
    std::vector<DriftBin> bins_;
};

namespace detail {

/// Per-wave vector coefficients of a VectorTrigPoly: (cos1, cos2, sin1, sin2).
struct WaveCoef {
    double c1 = 0, c2 = 0, s1 = 0, s2 = 0;
};

inline std::map<Wave, WaveCoef> gather_waves(const VectorTrigPoly& V) {
    std::map<Wave, WaveCoef> out;
    for (const auto& [k, h] : V.u1().terms()) {
        out[k].c1 = h.c;
        out[k].s1 = h.s;
    }
    for (const auto& [k, h] : V.u2().terms()) {
        out[k].c2 = h.c;
        out[k].s2 = h.s;
    }
    return out;
}

inline VectorTrigPoly scatter_waves(const std::map<Wave, WaveCoef>& waves) {
    VectorTrigPoly V;
    for (const auto& [k, w] : waves) {
        V.u1().add_term(k, w.c1, w.s1);
        V.u2().add_term(k, w.c2, w.s2);
    }
    V.u1().prune(0.0);
    V.u2().prune(0.0);
    return V;
}

}  // namespace detail

/// Spectral projection of each mode onto the orthogonal complement of its
/// wave vector: the divergence-free part.  Idempotent; annihilates gradients.
inline VectorTrigPoly leray_project(const VectorTrigPoly& V) {
    auto waves = detail::gather_waves(V);
    for (auto& [k, w] : waves) {
        double n2 = k.norm_sq();
        if (n2 == 0.0) continue;  // constant fields are divergence-free
        double pc = (w.c1 * k.k1 + w.c2 * k.k2) / n2;
        double ps = (w.s1 * k.k1 + w.s2 * k.k2) / n2;
        w.c1 -= pc * k.k1;
        w.c2 -= pc * k.k2;
        w.s1 -= ps * k.k1;
        w.s2 -= ps * k.k2;
    }
    return detail::scatter_waves(waves);
}

inline SpectralField leray_project(const SpectralField& b) {
    std::vector<DriftBin> bins = b.bins();
    for (auto& bin : bins) bin.field = leray_project(bin.field);
    return SpectralField::from_bins(std::move(bins));
}

/// Heat damping on 1-forms: mode k scaled by exp(-eps |k|^2).  On the flat
/// torus the Hodge Laplacian acts componentwise, so divergence-free fields
/// stay divergence-free.
inline VectorTrigPoly hodge_regularize(const VectorTrigPoly& V, double eps) {
    if (eps < 0.0) throw std::invalid_argument("hodge_regularize needs eps >= 0");
    auto waves = detail::gather_waves(V);
    for (auto& [k, w] : waves) {
        double d = std::exp(-eps * k.norm_sq());
        w.c1 *= d;
        w.c2 *= d;
        w.s1 *= d;
        w.s2 *= d;
    }
    return detail::scatter_waves(waves);
}

inline SpectralField hodge_regularize(const SpectralField& b, double eps) {
    std::vector<DriftBin> bins = b.bins();
    for (auto& bin : bins) bin.field = hodge_regularize(bin.field, eps);
    return SpectralField::from_bins(std::move(bins));
}

/// E(b) = 1/2 integral over [0,T] of ||b(t,.)||^2_{L2}, exact per bin.
inline EnergyValue drift_energy(const SpectralField& b) {
    double acc = 0.0;
    for (const auto& bin : b.bins()) acc += bin.width() * l2_norm_sq(bin.field);
    return {0.5 * acc};
}

namespace detail {

/// CDF of the normalized bump exp(-1/(1-(2s/eps)^2)) on (-eps/2, eps/2).
class BumpKernel {
  public:
    explicit BumpKernel(double eps, int gauss_points = 64)
        : eps_(eps), rule_(gauss_legendre(gauss_points)) {
        total_ = gauss_integrate([](double u) { return bump_u(u); }, -1.0, 1.0, rule_);
    }

    double cdf(double s) const {
        double u = 2.0 * s / eps_;
        if (u <= -1.0) return 0.0;
        if (u >= 1.0) return 1.0;
        return gauss_integrate([](double v) { return bump_u(v); }, -1.0, u, rule_) / total_;
    }

  private:
    static double bump_u(double u) {
        double d = 1.0 - u * u;
        return d > 0.0 ? std::exp(-1.0 / d) : 0.0;
    }

    double eps_;
    GaussRule rule_;
    double total_;
};

}  // namespace detail

/// Convolve the per-mode coefficients in time against the normalized bump of
/// support eps (zero-extension outside [0, T]) and re-sample as bin averages
/// on a refined uniform grid.
///
/// The resampling weights w_ij are nonnegative with row sums <= 1 and column
/// mass <= the source bin width, so the space-time L2 norm cannot increase.
inline SpectralField time_mollify(const SpectralField& b, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("time_mollify needs eps > 0");
    const double T = b.horizon();
    const auto& src = b.bins();

    double min_width = T;
    for (const auto& bin : src) min_width = std::min(min_width, bin.width());
    double target = std::min(min_width, eps / 8.0);
    int out_bins = std::min<int>(4096, static_cast<int>(std::ceil(T / target)));

    detail::BumpKernel kernel(eps);
    GaussRule rule = gauss_legendre(64);

    std::vector<DriftBin> out;
    out.reserve(out_bins);
    for (int i = 0; i < out_bins; ++i) {
        double alpha = T * i / out_bins;
        double beta = T * (i + 1) / out_bins;
        std::vector<double> w(src.size(), 0.0);
        double row_sum = 0.0;
        for (std::size_t j = 0; j < src.size(); ++j) {
            // skip bins with no kernel overlap anywhere in [alpha, beta]
            if (src[j].t_end < alpha - eps / 2 || src[j].t_start > beta + eps / 2) continue;
            auto overlap = [&](double t) {
                return kernel.cdf(t - src[j].t_start) - kernel.cdf(t - src[j].t_end);
            };
            w[j] = gauss_integrate(overlap, alpha, beta, rule) / (beta - alpha);
            w[j] = std::max(0.0, w[j]);
            row_sum += w[j];
        }
        if (row_sum > 1.0)
            for (auto& v : w) v /= row_sum;

        VectorTrigPoly f;
        for (std::size_t j = 0; j < src.size(); ++j)
            if (w[j] != 0.0) f += w[j] * src[j].field;
        f.u1().prune(0.0);
        f.u2().prune(0.0);
        out.push_back({alpha, beta, std::move(f)});
    }
    return SpectralField::from_bins(std::move(out));
}

/// Space-time L2 distance between two piecewise-constant drifts.
inline double space_time_l2_distance(const SpectralField& a, const SpectralField& b) {
    std::vector<double> cuts;
    for (const auto& bin : a.bins()) {
        cuts.push_back(bin.t_start);
        cuts.push_back(bin.t_end);
    }
    for (const auto& bin : b.bins()) {
        cuts.push_back(bin.t_start);
        cuts.push_back(bin.t_end);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        double mid = 0.5 * (cuts[i] + cuts[i + 1]);
        VectorTrigPoly diff = a.at_time(mid) - b.at_time(mid);
        acc += (cuts[i + 1] - cuts[i]) * l2_norm_sq(diff);
    }
    return std::sqrt(acc);
}

/// Max pointwise |div b| over a verification grid, across all bins.
inline double max_pointwise_divergence(const SpectralField& b, int grid_n = 17) {
    double worst = 0.0;
    for (const auto& bin : b.bins()) {
        TrigPoly div = bin.field.divergence();
        for (int i = 0; i < grid_n; ++i)
            for (int j = 0; j < grid_n; ++j)
                worst = std::max(worst, std::abs(div.eval(TorusPoint(
                                             kTwoPi * i / grid_n, kTwoPi * j / grid_n))));
    }
    return worst;
}

/// Rough fixture: coefficients |k|^(-1) with deterministic pseudorandom signs
/// up to |k|_inf = max_mode, drawn independently per time bin.  Lies in
/// L2([0,T] x M) but is rough in space and discontinuous in time.
inline SpectralField make_rough_drift(int max_mode, int bins, double T,
                                      std::uint64_t seed, double amplitude = 1.0) {
    std::vector<VectorTrigPoly> fields;
    fields.reserve(bins);
    auto waves = canonical_waves(max_mode);
    for (int b = 0; b < bins; ++b) {
        VectorTrigPoly f;
        for (std::size_t w = 0; w < waves.size(); ++w) {
            const Wave& k = waves[w];
            double kn = std::sqrt(k.norm_sq());
            Vec2 dir{k.k2 / kn, -k.k1 / kn};
            double ac = amplitude / kn *
                        counter_sign(seed, RngStream::kSigns, b, static_cast<std::uint32_t>(w), 0);
            double as = amplitude / kn *
                        counter_sign(seed, RngStream::kSigns, b, static_cast<std::uint32_t>(w), 1);
            f.u1().add_term(k, ac * dir.x, as * dir.x);
            f.u2().add_term(k, ac * dir.y, as * dir.y);
        }
        fields.push_back(std::move(f));
    }
    return SpectralField::piecewise(std::move(fields), T);
}

}  // namespace torusflow
