#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "clipit/grad_check.hpp"
#include "clipit/ops.hpp"
#include "clipit/rng.hpp"
#include "clipit/tape.hpp"

using namespace clipit;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.next_gaussian();
    return m;
}

// Small composite touching every operator: scalar losses over two parameter
// matrices and a parameter vector.
double composite_loss(const std::vector<Matrix>& params, std::size_t cls,
                      Tape* out_tape = nullptr, std::vector<Tape::NodeId>* ids = nullptr) {
    Tape tape;
    const auto w = tape.leaf(params[0]);   // 3x4
    const auto x = tape.leaf(params[1]);   // 4x1
    const auto b = tape.leaf(params[2]);   // 3x1
    const auto t = tape.leaf(params[3]);   // 3x1
    const auto wx = tape.matmul(w, x);
    const auto pre = tape.add_scaled(wx, b, 1.0, 1.0);
    const auto act = tape.tanh(pre);
    const auto unit = tape.l2_normalize(act);
    const auto cat = tape.concat_rows(unit, b);
    const auto catw = tape.leaf(params[4]);  // 3x6
    const auto logits = tape.add(tape.matmul(catw, cat), b);
    const auto ce = tape.softmax_ce(logits, cls);
    const auto kd = tape.scale(tape.kd_cosine(t, act), 0.5);
    const auto loss = tape.add_scaled(ce, kd, 1.0, 0.7);
    if (out_tape != nullptr) {
        *out_tape = tape;
        *ids = {w, x, b, t, catw, loss};
    }
    return tape.val(loss)[0];
}

}  // namespace

TEST_CASE("tape gradients match central differences on random configurations") {
    Rng rng(2024);
    for (int rep = 0; rep < 12; ++rep) {
        std::vector<Matrix> params;
        params.push_back(random_matrix(3, 4, rng));
        params.push_back(random_matrix(4, 1, rng));
        params.push_back(random_matrix(3, 1, rng));
        params.push_back(random_matrix(3, 1, rng));
        params.push_back(random_matrix(3, 6, rng));
        const std::size_t cls = rep % 3;

        auto value = [cls](const std::vector<Matrix>& p) { return composite_loss(p, cls); };
        auto grad = [cls](const std::vector<Matrix>& p) {
            Tape tape;
            std::vector<Tape::NodeId> ids;
            composite_loss(p, cls, &tape, &ids);
            tape.backward(ids.back());
            std::vector<Matrix> g;
            for (std::size_t k = 0; k + 1 < ids.size(); ++k) g.push_back(tape.grad(ids[k]));
            return g;
        };
        CHECK(grad_check(value, grad, params) < 1e-4);
    }
}

TEST_CASE("tape replay reproduces recorded values bit-exactly") {
    Rng rng(5);
    std::vector<Matrix> params;
    params.push_back(random_matrix(3, 4, rng));
    params.push_back(random_matrix(4, 1, rng));
    params.push_back(random_matrix(3, 1, rng));
    params.push_back(random_matrix(3, 1, rng));
    params.push_back(random_matrix(3, 6, rng));
    Tape tape;
    std::vector<Tape::NodeId> ids;
    composite_loss(params, 1, &tape, &ids);
    CHECK(tape.replay_matches());
}

TEST_CASE("identical forward passes agree bitwise") {
    Rng rng(6);
    std::vector<Matrix> params;
    params.push_back(random_matrix(3, 4, rng));
    params.push_back(random_matrix(4, 1, rng));
    params.push_back(random_matrix(3, 1, rng));
    params.push_back(random_matrix(3, 1, rng));
    params.push_back(random_matrix(3, 6, rng));
    const double a = composite_loss(params, 2);
    const double b = composite_loss(params, 2);
    CHECK(a == b);
}

TEST_CASE("softmax-ce composite agrees with the standalone ops") {
    Tape tape;
    Matrix z(3, 1);
    z[0] = 0.2;
    z[1] = -1.3;
    z[2] = 2.0;
    const auto id = tape.leaf(z);
    const auto l = tape.softmax_ce(id, 2);
    const auto p = softmax(z.vec());
    CHECK(tape.val(l)[0] == Catch::Approx(cross_entropy(2, p)).margin(1e-15));

    // gradient is softmax(z) - onehot
    tape.backward(l);
    const Matrix& g = tape.grad(id);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(g[i] == Catch::Approx(p[i] - (i == 2 ? 1.0 : 0.0)).margin(1e-12));
}

TEST_CASE("kd_cosine on the tape matches the plain loss and is symmetric-safe") {
    Tape tape;
    Matrix t(3, 1), th(3, 1);
    t[0] = 1.0; t[1] = 0.5; t[2] = -0.25;
    th[0] = -0.3; th[1] = 1.1; th[2] = 0.9;
    const auto a = tape.leaf(t);
    const auto b = tape.leaf(th);
    const auto l = tape.kd_cosine(a, b);
    CHECK(tape.val(l)[0] == Catch::Approx(kd_loss(t.vec(), th.vec())).margin(1e-15));

    Matrix zero(3, 1);
    const auto zid = tape.leaf(zero);
    CHECK_THROWS_AS(tape.kd_cosine(a, zid), ZeroVectorError);
}

TEST_CASE("tape validates shapes and indices") {
    Tape tape;
    Matrix a(2, 1), b(3, 1);
    a[0] = 1.0;
    const auto ia = tape.leaf(a);
    const auto ib = tape.leaf(b);
    CHECK_THROWS_AS(tape.add(ia, ib), DimensionMismatchError);
    CHECK_THROWS_AS(tape.softmax_ce(ia, 5), IndexOutOfRangeError);
    CHECK_THROWS_AS(tape.backward(ia), DimensionMismatchError);
}
