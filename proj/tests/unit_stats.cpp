#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "clipit/rng.hpp"
#include "clipit/stats.hpp"

using namespace clipit;
using Catch::Approx;

TEST_CASE("accuracy basics") {
    CHECK(accuracy({1, 0, 1}, {1, 0, 1}) == 1.0);
    CHECK(accuracy({1, 0, 1}, {1, 1, 1}) == Approx(2.0 / 3.0));
    CHECK(accuracy({0, 0}, {1, 1}) == 0.0);
    CHECK_THROWS_AS(accuracy({1}, {1, 2}), LengthMismatchError);
    CHECK_THROWS_AS(accuracy({}, {}), EmptyInputError);
}

TEST_CASE("accuracy is invariant under a shared permutation") {
    Rng rng(12);
    std::vector<std::uint32_t> preds(50), labels(50);
    for (std::size_t i = 0; i < 50; ++i) {
        preds[i] = static_cast<std::uint32_t>(rng.next_index(3));
        labels[i] = static_cast<std::uint32_t>(rng.next_index(3));
    }
    const double base = accuracy(preds, labels);
    std::vector<std::size_t> perm(50);
    for (std::size_t i = 0; i < 50; ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<std::uint32_t> p2(50), l2(50);
    for (std::size_t i = 0; i < 50; ++i) {
        p2[i] = preds[perm[i]];
        l2[i] = labels[perm[i]];
    }
    CHECK(accuracy(p2, l2) == base);
}

TEST_CASE("omega worked example and edge cases") {
    PredictionSet p;
    p.labels = {0, 1, 0, 1};
    p.vision = {0, 0, 1, 1};
    p.text = {1, 1, 0, 0};
    const auto r = omega(p);
    CHECK(r.count == 2);  // indices 1 and 2
    CHECK(r.fraction == 0.5);

    PredictionSet vision_right;
    vision_right.labels = {0, 1};
    vision_right.vision = {0, 1};
    vision_right.text = {1, 0};
    CHECK(omega(vision_right).count == 0);

    PredictionSet flipped;
    flipped.labels = {0, 1, 2};
    flipped.vision = {1, 2, 0};
    flipped.text = {0, 1, 2};
    CHECK(omega(flipped).count == 3);
    CHECK(omega(flipped).fraction == 1.0);

    PredictionSet missing;
    missing.labels = {0};
    missing.vision = {0};
    CHECK_THROWS_AS(omega(missing), MissingTextPredictionsError);
}

TEST_CASE("omega equals per-index brute force on random triples") {
    Rng rng(2025);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t n = 1 + rng.next_index(20);
        PredictionSet p;
        for (std::size_t i = 0; i < n; ++i) {
            p.labels.push_back(static_cast<std::uint32_t>(rng.next_index(4)));
            p.vision.push_back(static_cast<std::uint32_t>(rng.next_index(4)));
            p.text.push_back(static_cast<std::uint32_t>(rng.next_index(4)));
        }
        std::size_t want = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (p.text[i] == p.labels[i] && p.vision[i] != p.labels[i]) ++want;
        const auto r = omega(p);
        CHECK(r.count == want);
        CHECK(r.count <= n);
    }
}

TEST_CASE("aggregate_runs mean and sample std") {
    const auto flat = aggregate_runs({0.9, 0.9, 0.9});
    CHECK(flat.first == Approx(0.9));
    CHECK(flat.second == 0.0);

    const auto two = aggregate_runs({0.8, 1.0});
    CHECK(two.first == Approx(0.9));
    CHECK(two.second == Approx(std::sqrt(0.02)));

    const auto solo = aggregate_runs({0.5});
    CHECK(solo.first == 0.5);
    CHECK(solo.second == 0.0);

    CHECK_THROWS_AS(aggregate_runs({}), EmptyInputError);
}

TEST_CASE("fisher_combined worked examples") {
    const auto ones = fisher_combined({1.0, 1.0});
    CHECK(ones.statistic == 0.0);
    CHECK(ones.combined_p == Approx(1.0).margin(1e-15));

    const double e1 = std::exp(-1.0);
    const auto pair = fisher_combined({e1, e1});
    CHECK(pair.statistic == Approx(4.0).margin(1e-12));
    CHECK(pair.dof == 4);
    CHECK(pair.combined_p == Approx(3.0 * std::exp(-2.0)).margin(1e-10));

    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const double p = 1e-6 + rng.next_double() * (1.0 - 1e-6);
        const auto single = fisher_combined({p});
        CHECK(std::abs(single.combined_p - p) < 1e-12);
    }

    CHECK_THROWS_AS(fisher_combined({0.0}), InvalidPValueError);
    CHECK_THROWS_AS(fisher_combined({1.5}), InvalidPValueError);
    CHECK_THROWS_AS(fisher_combined({}), EmptyInputError);
}

TEST_CASE("fisher_combined matches the closed form and is monotone") {
    Rng rng(909);
    auto closed_form = [](const std::vector<double>& ps) {
        double x = 0.0;
        for (double p : ps) x += std::log(p);
        x *= -2.0;
        const double half = x / 2.0;
        double term = 1.0, sum = 1.0;
        for (std::size_t i = 1; i < ps.size(); ++i) {
            term *= half / static_cast<double>(i);
            sum += term;
        }
        return std::exp(-half) * sum;
    };
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t k = 1 + rng.next_index(8);
        std::vector<double> ps(k);
        for (auto& p : ps) p = 1e-4 + rng.next_double() * (1.0 - 1e-4);
        const auto r = fisher_combined(ps);
        CHECK(std::abs(r.combined_p - std::min(1.0, closed_form(ps))) < 1e-10);
        CHECK(r.dof == 2 * k);

        // decreasing any single p never increases the combined p
        std::vector<double> smaller = ps;
        const std::size_t j = rng.next_index(k);
        smaller[j] *= 0.5;
        CHECK(fisher_combined(smaller).combined_p <= r.combined_p + 1e-15);
    }
}
