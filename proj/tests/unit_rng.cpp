#include <catch2/catch_amalgamated.hpp>

#include "clipit/rng.hpp"

using namespace clipit;

// Reference values computed with an independent implementation of the
// published splitmix64 / xoshiro256++ recurrences.
TEST_CASE("splitmix64 matches reference stream") {
    std::uint64_t s = 0;
    CHECK(splitmix64_next(s) == 0xe220a8397b1dcdafULL);
    CHECK(splitmix64_next(s) == 0x6e789e6aa1b965f4ULL);
    CHECK(splitmix64_next(s) == 0x06c45d188009454fULL);

    std::uint64_t s42 = 42;
    CHECK(splitmix64_next(s42) == 0xbdd732262feb6e95ULL);
    CHECK(splitmix64_next(s42) == 0x28efe333b266f103ULL);
}

TEST_CASE("xoshiro256++ matches reference stream for seed 42") {
    Rng rng(42);
    CHECK(rng.next_u64() == 0xd0764d4f4476689fULL);
    CHECK(rng.next_u64() == 0x519e4174576f3791ULL);
    CHECK(rng.next_u64() == 0xfbe07cfb0c24ed8cULL);
    CHECK(rng.next_u64() == 0xb37d9f600cd835b8ULL);
}

TEST_CASE("uniform doubles live in [0,1) and reproduce") {
    Rng a(7), b(7);
    for (int i = 0; i < 1000; ++i) {
        const double x = a.next_double();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
        CHECK(x == b.next_double());
    }
}

TEST_CASE("gaussian moments are sane") {
    Rng rng(123);
    double sum = 0.0, sumsq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.next_gaussian();
        sum += x;
        sumsq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sumsq / n - 1.0) < 0.05);
}

TEST_CASE("shuffle is a permutation and seed-stable") {
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    Rng r1(5);
    r1.shuffle(v);
    std::vector<int> w{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    Rng r2(5);
    r2.shuffle(w);
    CHECK(v == w);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}
