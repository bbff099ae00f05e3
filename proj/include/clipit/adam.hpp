#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "clipit/errors.hpp"
#include "clipit/matrix.hpp"

namespace clipit {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

/// Adam with bias correction and decoupled weight decay: the decay step
/// p <- p - lr*wd*p is applied after the moment update and never enters
/// the moments.
class AdamState {
public:
    AdamState(AdamConfig cfg, const std::vector<Matrix*>& params) : cfg_(cfg) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const Matrix* p : params) {
            m_.emplace_back(p->rows(), p->cols());
            v_.emplace_back(p->rows(), p->cols());
        }
    }

    std::int64_t step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

    void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw ShapeMismatchError("adam_step: parameter/gradient count differs from state");
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            Matrix& p = *params[k];
            const Matrix& g = grads[k];
            if (!p.same_shape(g) || !p.same_shape(m_[k]))
                throw ShapeMismatchError("adam_step: gradient shape differs from parameter");
            Matrix& m = m_[k];
            Matrix& v = v_[k];
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
                p[i] -= cfg_.lr * cfg_.weight_decay * p[i];
            }
        }
    }

private:
    AdamConfig cfg_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    std::int64_t step_ = 0;
};

}  // namespace clipit
