#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "clipit/errors.hpp"
#include "clipit/matrix.hpp"

namespace clipit {

using LossFn = std::function<double(const std::vector<Matrix>&)>;
using GradFn = std::function<std::vector<Matrix>(const std::vector<Matrix>&)>;

/// Central-difference check of an analytic gradient. Returns the maximum
/// over all coordinates of |analytic - fd| / max(1, |fd|).
inline double grad_check(const LossFn& loss, const GradFn& grad,
                         std::vector<Matrix> params, double h = 1e-5) {
    const std::vector<Matrix> analytic = grad(params);
    if (analytic.size() != params.size())
        throw ShapeMismatchError("grad_check: gradient count differs from parameter count");
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!analytic[k].same_shape(params[k]))
            throw ShapeMismatchError("grad_check: gradient shape differs from parameter");
        for (std::size_t i = 0; i < params[k].size(); ++i) {
            const double orig = params[k][i];
            params[k][i] = orig + h;
            const double fp = loss(params);
            params[k][i] = orig - h;
            const double fm = loss(params);
            params[k][i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NonFiniteLossError("grad_check: loss not finite at perturbed point");
            const double fd = (fp - fm) / (2.0 * h);
            const double rel = std::abs(analytic[k][i] - fd) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace clipit
