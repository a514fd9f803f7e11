// Real trigonometric polynomials on the 2-torus with exact calculus:
// evaluation, differentiation, products by coefficient convolution, and
// L2 inner products under the normalized volume measure (total mass 1).
//
// A polynomial is stored as one (cos, sin) pair per canonical wave vector;
// the canonical representative of {k, -k} has k1 > 0, or k1 == 0 and
// k2 >= 0.  cos is even and sin is odd under k -> -k, so this loses
// nothing, and at k = (0,0) the sine basis function vanishes identically.
#pragma once

#include <cmath>
#include <cstdlib>
#include <map>
#include <stdexcept>
#include <vector>

#include "torusflow/geometry.hpp"

namespace torusflow {

struct Wave {
    int k1 = 0;
    int k2 = 0;

    bool operator==(const Wave& o) const { return k1 == o.k1 && k2 == o.k2; }
    bool operator<(const Wave& o) const {
        return k1 != o.k1 ? k1 < o.k1 : k2 < o.k2;
    }

    bool is_canonical() const { return k1 > 0 || (k1 == 0 && k2 >= 0); }
    Wave negated() const { return {-k1, -k2}; }
    int inf_norm() const { return std::max(std::abs(k1), std::abs(k2)); }
    double norm_sq() const { return double(k1) * k1 + double(k2) * k2; }
    double dot(const TorusPoint& p) const { return k1 * p.theta1 + k2 * p.theta2; }
};

/// Coefficients of c*cos(k.theta) + s*sin(k.theta).
struct Harmonic {
    double c = 0.0;
    double s = 0.0;
};

class VectorTrigPoly;

class TrigPoly {
  public:
    TrigPoly() = default;

    static TrigPoly constant(double a) {
        TrigPoly f;
        f.add_term({0, 0}, a, 0.0);
        return f;
    }

    static TrigPoly harmonic(int k1, int k2, double cos_coef, double sin_coef) {
        TrigPoly f;
        f.add_term({k1, k2}, cos_coef, sin_coef);
        return f;
    }

    /// Accumulate a term; non-canonical waves are folded onto their
    /// canonical partner (cos even, sin odd).
    TrigPoly& add_term(Wave k, double c, double s) {
        if (!k.is_canonical()) {
            k = k.negated();
            s = -s;
        }
        if (k.k1 == 0 && k.k2 == 0) s = 0.0;  // sin(0) basis function is 0
        if (c == 0.0 && s == 0.0) return *this;
        Harmonic& h = terms_[k];
        h.c += c;
        h.s += s;
        return *this;
    }

    const std::map<Wave, Harmonic>& terms() const { return terms_; }
    bool empty() const { return terms_.empty(); }

    int degree() const {
        int d = 0;
        for (const auto& [k, h] : terms_) d = std::max(d, k.inf_norm());
        return d;
    }

    double eval(const TorusPoint& p) const {
        double v = 0.0;
        for (const auto& [k, h] : terms_) {
            double a = k.dot(p);
            v += h.c * std::cos(a) + h.s * std::sin(a);
        }
        return v;
    }

    /// Mean value; the normalized measure makes this the constant coefficient.
    double mass() const {
        auto it = terms_.find({0, 0});
        return it == terms_.end() ? 0.0 : it->second.c;
    }

    TrigPoly& operator+=(const TrigPoly& g) {
        for (const auto& [k, h] : g.terms_) add_term(k, h.c, h.s);
        return *this;
    }
    TrigPoly& operator-=(const TrigPoly& g) {
        for (const auto& [k, h] : g.terms_) add_term(k, -h.c, -h.s);
        return *this;
    }
    TrigPoly& operator*=(double a) {
        for (auto& [k, h] : terms_) {
            h.c *= a;
            h.s *= a;
        }
        return *this;
    }

    /// Partial derivative along coordinate axis (0 or 1).
    TrigPoly dtheta(int axis) const {
        TrigPoly out;
        for (const auto& [k, h] : terms_) {
            double ki = axis == 0 ? k.k1 : k.k2;
            if (ki == 0.0) continue;
            // d/dt [c cos(kt) + s sin(kt)] = s k cos(kt) - c k sin(kt)
            out.add_term(k, h.s * ki, -h.c * ki);
        }
        return out;
    }

    TrigPoly laplacian() const {
        TrigPoly out;
        for (const auto& [k, h] : terms_) {
            double m = -k.norm_sq();
            if (m != 0.0) out.add_term(k, m * h.c, m * h.s);
        }
        return out;
    }

    VectorTrigPoly gradient() const;

    /// f(theta + a): rotates each harmonic's phase.
    TrigPoly translated(const Vec2& a) const {
        TrigPoly out;
        for (const auto& [k, h] : terms_) {
            double ka = k.k1 * a.x + k.k2 * a.y;
            double ca = std::cos(ka), sa = std::sin(ka);
            out.add_term(k, h.c * ca + h.s * sa, -h.c * sa + h.s * ca);
        }
        return out;
    }

    /// Heat semigroup e^{t Laplacian/2}: damps mode k by exp(-t|k|^2/2).
    TrigPoly heat(double t) const {
        TrigPoly out;
        for (const auto& [k, h] : terms_) {
            double d = std::exp(-0.5 * t * k.norm_sq());
            out.add_term(k, d * h.c, d * h.s);
        }
        return out;
    }

    /// Drop terms with both coefficients below tol in magnitude.
    TrigPoly& prune(double tol = 0.0) {
        for (auto it = terms_.begin(); it != terms_.end();) {
            if (std::abs(it->second.c) <= tol && std::abs(it->second.s) <= tol)
                it = terms_.erase(it);
            else
                ++it;
        }
        return *this;
    }

  private:
    std::map<Wave, Harmonic> terms_;
};

inline TrigPoly operator+(TrigPoly f, const TrigPoly& g) { return f += g; }
inline TrigPoly operator-(TrigPoly f, const TrigPoly& g) { return f -= g; }
inline TrigPoly operator*(double a, TrigPoly f) { return f *= a; }
inline TrigPoly operator*(TrigPoly f, double a) { return f *= a; }

/// Exact product via the product-to-sum identities, one canonical
/// convolution term per pair of waves.
inline TrigPoly operator*(const TrigPoly& f, const TrigPoly& g) {
    TrigPoly out;
    for (const auto& [k, hf] : f.terms()) {
        for (const auto& [l, hg] : g.terms()) {
            Wave sum{k.k1 + l.k1, k.k2 + l.k2};
            Wave dif{k.k1 - l.k1, k.k2 - l.k2};
            // cos cos = (cos(dif) + cos(sum))/2
            // sin sin = (cos(dif) - cos(sum))/2
            // cos sin = (sin(sum) - sin(dif))/2
            // sin cos = (sin(sum) + sin(dif))/2
            double cc = hf.c * hg.c, ss = hf.s * hg.s;
            double cs = hf.c * hg.s, sc = hf.s * hg.c;
            out.add_term(dif, 0.5 * (cc + ss), 0.5 * (sc - cs));
            out.add_term(sum, 0.5 * (cc - ss), 0.5 * (cs + sc));
        }
    }
    return out.prune(0.0);
}

/// Integral of f*g under the normalized volume measure, exact from
/// coefficients: distinct waves are orthogonal, |cos|^2 = |sin|^2 = 1/2.
inline double l2_inner(const TrigPoly& f, const TrigPoly& g) {
    const auto& a = f.terms();
    const auto& b = g.terms();
    auto ia = a.begin();
    auto ib = b.begin();
    double acc = 0.0;
    while (ia != a.end() && ib != b.end()) {
        if (ia->first < ib->first) {
            ++ia;
        } else if (ib->first < ia->first) {
            ++ib;
        } else {
            const Harmonic& hf = ia->second;
            const Harmonic& hg = ib->second;
            double w = (ia->first.k1 == 0 && ia->first.k2 == 0) ? 1.0 : 0.5;
            acc += w * (hf.c * hg.c + hf.s * hg.s);
            ++ia;
            ++ib;
        }
    }
    return acc;
}

inline double l2_norm(const TrigPoly& f) { return std::sqrt(l2_inner(f, f)); }

class VectorTrigPoly {
  public:
    VectorTrigPoly() = default;
    VectorTrigPoly(TrigPoly u1, TrigPoly u2) : u1_(std::move(u1)), u2_(std::move(u2)) {}

    static VectorTrigPoly constant(const Vec2& c) {
        return {TrigPoly::constant(c.x), TrigPoly::constant(c.y)};
    }

    const TrigPoly& u1() const { return u1_; }
    const TrigPoly& u2() const { return u2_; }
    TrigPoly& u1() { return u1_; }
    TrigPoly& u2() { return u2_; }

    Vec2 eval(const TorusPoint& p) const { return {u1_.eval(p), u2_.eval(p)}; }

    TrigPoly divergence() const { return u1_.dtheta(0) + u2_.dtheta(1); }

    int degree() const { return std::max(u1_.degree(), u2_.degree()); }

    VectorTrigPoly& operator+=(const VectorTrigPoly& o) {
        u1_ += o.u1_;
        u2_ += o.u2_;
        return *this;
    }
    VectorTrigPoly& operator-=(const VectorTrigPoly& o) {
        u1_ -= o.u1_;
        u2_ -= o.u2_;
        return *this;
    }
    VectorTrigPoly& operator*=(double a) {
        u1_ *= a;
        u2_ *= a;
        return *this;
    }

  private:
    TrigPoly u1_;
    TrigPoly u2_;
};

inline VectorTrigPoly operator+(VectorTrigPoly a, const VectorTrigPoly& b) { return a += b; }
inline VectorTrigPoly operator-(VectorTrigPoly a, const VectorTrigPoly& b) { return a -= b; }
inline VectorTrigPoly operator*(double a, VectorTrigPoly v) { return v *= a; }

inline VectorTrigPoly TrigPoly::gradient() const {
    return {dtheta(0), dtheta(1)};
}

/// Pointwise dot product as a TrigPoly.
inline TrigPoly dot(const VectorTrigPoly& a, const VectorTrigPoly& b) {
    return a.u1() * b.u1() + a.u2() * b.u2();
}

/// div(psi V) = <grad psi, V> + psi div V, exact.
inline TrigPoly div_product(const TrigPoly& psi, const VectorTrigPoly& V) {
    TrigPoly out = psi.dtheta(0) * V.u1() + psi.dtheta(1) * V.u2();
    out += psi * V.divergence();
    return out.prune(0.0);
}

/// ||V||^2 integrated over the torus (normalized measure).
inline double l2_norm_sq(const VectorTrigPoly& V) {
    return l2_inner(V.u1(), V.u1()) + l2_inner(V.u2(), V.u2());
}

}  // namespace torusflow
