#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "clipit/errors.hpp"

namespace clipit {

inline void require_finite(std::span<const double> v, const char* who) {
    for (double x : v)
        if (!std::isfinite(x)) throw NonFiniteInputError(who);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

// Unit-length copy of v. Threshold is normative: anything shorter than
// 1e-30 counts as the zero vector.
inline std::vector<double> l2_normalize(std::span<const double> v) {
    require_finite(v, "l2_normalize");
    const double n = norm2(v);
    if (n < 1e-30) throw ZeroVectorError("l2_normalize: zero-length input");
    std::vector<double> out(v.begin(), v.end());
    for (double& x : out) x /= n;
    return out;
}

// a.b / (|a||b|), clamped to [-1, 1] against rounding. The denominator is
// sqrt(a.a * b.b): a single rounding, so identical vectors give exactly 1.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionMismatchError("cosine_similarity: vector lengths differ");
    require_finite(a, "cosine_similarity");
    require_finite(b, "cosine_similarity");
    const double daa = dot(a, a);
    const double dbb = dot(b, b);
    if (daa < 1e-60 || dbb < 1e-60)  // norm below 1e-30
        throw ZeroVectorError("cosine_similarity: zero-length input");
    return std::clamp(dot(a, b) / std::sqrt(daa * dbb), -1.0, 1.0);
}

// Max-subtracted softmax; entries positive and summing to 1.
inline std::vector<double> softmax(std::span<const double> z) {
    require_finite(z, "softmax");
    const double m = *std::max_element(z.begin(), z.end());
    std::vector<double> out(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::exp(z[i] - m);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

// -log p[y] for a probability vector p.
inline double cross_entropy(std::size_t y, std::span<const double> p) {
    require_finite(p, "cross_entropy");
    double sum = 0.0;
    for (double x : p) {
        if (x < 0.0) throw InvalidDistributionError("cross_entropy: negative probability");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw InvalidDistributionError("cross_entropy: probabilities do not sum to 1");
    if (y >= p.size()) throw IndexOutOfRangeError("cross_entropy: class index out of range");
    return -std::log(p[y]);
}

// Cosine distillation loss 1 - cos(t_hat, t), in [0, 2].
inline double kd_loss(std::span<const double> t, std::span<const double> t_hat) {
    return 1.0 - cosine_similarity(t_hat, t);
}

}  // namespace clipit
