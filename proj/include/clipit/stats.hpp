#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "clipit/errors.hpp"

namespace clipit {

struct PredictionSet {
    std::vector<std::uint32_t> labels;
    std::vector<std::uint32_t> vision;
    std::vector<std::uint32_t> text;   // optional; empty when absent
    std::vector<std::uint32_t> fused;  // optional

    bool has_text() const { return !text.empty(); }
};

inline double accuracy(const std::vector<std::uint32_t>& preds,
                       const std::vector<std::uint32_t>& labels) {
    if (preds.size() != labels.size())
        throw LengthMismatchError("accuracy: prediction/label lengths differ");
    if (preds.empty()) throw EmptyInputError("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

struct OmegaResult {
    std::size_t count = 0;
    double fraction = 0.0;
};

/// Count of samples the text branch gets right while the vision branch gets
/// wrong: sum of 1{y_t == y and y_v != y}.
inline OmegaResult omega(const PredictionSet& p) {
    if (!p.has_text())
        throw MissingTextPredictionsError("omega: text predictions absent");
    if (p.vision.size() != p.labels.size() || p.text.size() != p.labels.size())
        throw LengthMismatchError("omega: prediction/label lengths differ");
    if (p.labels.empty()) throw EmptyInputError("omega: empty input");
    OmegaResult r;
    for (std::size_t i = 0; i < p.labels.size(); ++i)
        if (p.text[i] == p.labels[i] && p.vision[i] != p.labels[i]) ++r.count;
    r.fraction = static_cast<double>(r.count) / static_cast<double>(p.labels.size());
    return r;
}

/// Mean and sample (n-1) standard deviation; a single run reports std 0.
inline std::pair<double, double> aggregate_runs(const std::vector<double>& accuracies) {
    if (accuracies.empty()) throw EmptyInputError("aggregate_runs: empty input");
    double mean = 0.0;
    for (double a : accuracies) mean += a;
    mean /= static_cast<double>(accuracies.size());
    if (accuracies.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double a : accuracies) ss += (a - mean) * (a - mean);
    return {mean, std::sqrt(ss / static_cast<double>(accuracies.size() - 1))};
}

struct FisherResult {
    double statistic = 0.0;
    std::size_t dof = 0;
    double combined_p = 1.0;
};

/// Fisher's combined probability test: X = -2 sum(ln p_i) ~ chi^2 with 2k
/// degrees of freedom. The survival function uses the exact even-dof form
/// exp(-X/2) * sum_{i<k} (X/2)^i / i!, accumulated in ascending i.
inline FisherResult fisher_combined(const std::vector<double>& p_values) {
    if (p_values.empty()) throw EmptyInputError("fisher_combined: empty input");
    double x = 0.0;
    for (double p : p_values) {
        if (!(p > 0.0) || p > 1.0)
            throw InvalidPValueError("fisher_combined: p-value outside (0, 1]");
        x += std::log(p);
    }
    x *= -2.0;
    FisherResult r;
    r.statistic = x;
    r.dof = 2 * p_values.size();
    const double half = x / 2.0;
    double term = 1.0;
    double sum = 1.0;
    for (std::size_t i = 1; i < p_values.size(); ++i) {
        term *= half / static_cast<double>(i);
        sum += term;
    }
    r.combined_p = std::exp(-half) * sum;
    if (r.combined_p > 1.0) r.combined_p = 1.0;
    return r;
}

}  // namespace clipit
