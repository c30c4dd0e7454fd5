#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "predsens/autodiff.hpp"

using predsens::AbsJacobian;
using predsens::DimensionError;
using predsens::NodeId;
using predsens::NumericError;
using predsens::StateError;
using predsens::Tape;
using predsens::Tensor;

namespace {

// Evaluates a scalar-valued graph at x and, separately, its tape gradient.
using Builder = std::function<NodeId(Tape&, NodeId)>;

double eval_at(const Builder& build, const std::vector<std::size_t>& shape,
               const std::vector<double>& x) {
    Tape tape;
    NodeId in = tape.leaf(Tensor(shape, x));
    NodeId out = build(tape, in);
    return tape.value(out).data[0];
}

std::vector<double> tape_grad(const Builder& build, const std::vector<std::size_t>& shape,
                              const std::vector<double>& x) {
    Tape tape;
    NodeId in = tape.leaf(Tensor(shape, x));
    NodeId out = build(tape, in);
    tape.backward(out);
    return tape.grad(in).data;
}

void check_grad(const Builder& build, const std::vector<std::size_t>& shape,
                const std::vector<double>& x, double tol = 1e-4) {
    std::vector<double> got = tape_grad(build, shape, x);
    std::vector<double> want = oracles::fd_grad(
        [&](const std::vector<double>& p) { return eval_at(build, shape, p); }, x);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CAPTURE(i);
        CHECK(oracles::rel_err(got[i], want[i]) <= tol);
    }
}

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double lo = -2.0,
                               double hi = 2.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> out(n);
    for (double& v : out) v = d(rng);
    return out;
}

}  // namespace

TEST_CASE("matmul forward matches a hand-computed product") {
    Tape tape;
    NodeId a = tape.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    NodeId b = tape.leaf(Tensor({3, 2}, {7, 8, 9, 10, 11, 12}));
    NodeId c = tape.matmul(a, b);
    const Tensor& v = tape.value(c);
    REQUIRE(v.shape == std::vector<std::size_t>{2, 2});
    CHECK(v.data[0] == 58.0);
    CHECK(v.data[1] == 64.0);
    CHECK(v.data[2] == 139.0);
    CHECK(v.data[3] == 154.0);
}

TEST_CASE("matmul rank-1 operands act as row and column vectors") {
    Tape tape;
    NodeId v3 = tape.leaf(Tensor::vec({1, 2, 3}));
    NodeId w3 = tape.leaf(Tensor::vec({4, 5, 6}));
    NodeId dot = tape.matmul(v3, w3);
    REQUIRE(tape.value(dot).shape == std::vector<std::size_t>{1});
    CHECK(tape.value(dot).data[0] == 32.0);

    NodeId m = tape.leaf(Tensor({2, 3}, {1, 0, 0, 0, 1, 0}));
    NodeId mv = tape.matmul(m, v3);  // {2,3} x {3} -> {2}
    REQUIRE(tape.value(mv).shape == std::vector<std::size_t>{2});
    CHECK(tape.value(mv).data[0] == 1.0);
    CHECK(tape.value(mv).data[1] == 2.0);

    NodeId n = tape.leaf(Tensor({3, 2}, {1, 0, 0, 1, 0, 0}));
    NodeId vn = tape.matmul(v3, n);  // {3} x {3,2} -> {2}
    REQUIRE(tape.value(vn).shape == std::vector<std::size_t>{2});
    CHECK(tape.value(vn).data[0] == 1.0);
    CHECK(tape.value(vn).data[1] == 2.0);
}

TEST_CASE("elementwise forward values match the standard library") {
    Tape tape;
    NodeId x = tape.leaf(Tensor::vec({-1.5, 0.25, 3.0}));
    CHECK(tape.value(tape.add(x, x)).data[0] == -3.0);
    CHECK(tape.value(tape.mul(x, x)).data[2] == 9.0);
    CHECK(tape.value(tape.sigmoid(x)).data[1] == doctest::Approx(1.0 / (1.0 + std::exp(-0.25))));
    CHECK(tape.value(tape.abs(x)).data[0] == 1.5);
    CHECK(tape.value(tape.sum(x)).data[0] == doctest::Approx(1.75));
    CHECK(tape.value(tape.mean(x)).data[0] == doctest::Approx(1.75 / 3.0));
    NodeId pos = tape.leaf(Tensor::vec({0.5, 2.0}));
    CHECK(tape.value(tape.log(pos)).data[1] == doctest::Approx(std::log(2.0)));
}

TEST_CASE("softmax rows sum to one and match exponent ratios") {
    Tape tape;
    NodeId x = tape.leaf(Tensor({2, 3}, {1, 2, 3, -1, 0, 1}));
    const Tensor& p = tape.value(tape.softmax(x));
    for (std::size_t r = 0; r < 2; ++r) {
        double s = p.at(r, 0) + p.at(r, 1) + p.at(r, 2);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    CHECK(p.at(0, 0) == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
}

TEST_CASE("softmax survives logits that would overflow a naive exponential") {
    Tape tape;
    NodeId x = tape.leaf(Tensor::vec({1000.0, 999.0, -1000.0}));
    const Tensor& p = tape.value(tape.softmax(x));
    CHECK(p.all_finite());
    CHECK(p.data[0] + p.data[1] + p.data[2] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.data[0] > p.data[1]);
}

TEST_CASE("gradients of every primitive match central finite differences") {
    std::mt19937_64 rng(41);

    SUBCASE("matmul (left and right operands)") {
        std::vector<double> w = random_vec(rng, 6);
        Builder left = [&](Tape& t, NodeId in) {
            NodeId m = t.leaf(Tensor({3, 2}, w));
            return t.sum(t.matmul(in, m));
        };
        check_grad(left, {2, 3}, random_vec(rng, 6));
        Builder right = [&](Tape& t, NodeId in) {
            NodeId m = t.leaf(Tensor({2, 3}, w));
            return t.sum(t.matmul(m, in));
        };
        check_grad(right, {3, 2}, random_vec(rng, 6));
    }
    SUBCASE("add and mul") {
        std::vector<double> c = random_vec(rng, 5);
        Builder badd = [&](Tape& t, NodeId in) { return t.sum(t.add(in, t.leaf(Tensor::vec(c)))); };
        check_grad(badd, {5}, random_vec(rng, 5));
        Builder bmul = [&](Tape& t, NodeId in) { return t.sum(t.mul(in, t.leaf(Tensor::vec(c)))); };
        check_grad(bmul, {5}, random_vec(rng, 5));
        Builder bsq = [&](Tape& t, NodeId in) { return t.sum(t.mul(in, in)); };
        check_grad(bsq, {5}, random_vec(rng, 5));
    }
    SUBCASE("sigmoid, softmax, log, abs") {
        Builder bsig = [](Tape& t, NodeId in) { return t.sum(t.sigmoid(in)); };
        check_grad(bsig, {4}, random_vec(rng, 4));
        std::vector<double> mix = random_vec(rng, 4);
        Builder bsoft = [&](Tape& t, NodeId in) {
            return t.sum(t.mul(t.softmax(in), t.leaf(Tensor::vec(mix))));
        };
        check_grad(bsoft, {4}, random_vec(rng, 4));
        Builder blog = [](Tape& t, NodeId in) { return t.sum(t.log(in)); };
        check_grad(blog, {4}, random_vec(rng, 4, 0.2, 3.0));
        Builder babs = [](Tape& t, NodeId in) { return t.sum(t.abs(in)); };
        check_grad(babs, {4}, {-1.7, 0.9, -0.4, 2.2});
    }
    SUBCASE("sum and mean push uniform gradients") {
        std::vector<double> g = tape_grad([](Tape& t, NodeId in) { return t.sum(in); }, {4},
                                          random_vec(rng, 4));
        for (double v : g) CHECK(v == 1.0);
        g = tape_grad([](Tape& t, NodeId in) { return t.mean(in); }, {4}, random_vec(rng, 4));
        for (double v : g) CHECK(v == 0.25);
    }
}

TEST_CASE("a chained graph differentiates like its finite-difference surrogate") {
    std::mt19937_64 rng(17);
    std::vector<double> w = random_vec(rng, 6);
    std::vector<double> b = random_vec(rng, 2);
    Builder net = [&](Tape& t, NodeId in) {
        NodeId h = t.add(t.matmul(in, t.leaf(Tensor({3, 2}, w))), t.leaf(Tensor::row(b)));
        return t.mean(t.abs(t.sigmoid(h)));
    };
    for (int trial = 0; trial < 5; ++trial) {
        check_grad(net, {1, 3}, random_vec(rng, 3));
    }
}

TEST_CASE("backward(component) extracts individual Jacobian rows") {
    std::mt19937_64 rng(5);
    std::vector<double> w = random_vec(rng, 8);
    std::vector<double> x = random_vec(rng, 4);
    Tape tape;
    NodeId in = tape.leaf(Tensor({1, 4}, x));
    NodeId out = tape.softmax(tape.matmul(in, tape.leaf(Tensor({4, 2}, w))));

    for (std::size_t k = 0; k < 2; ++k) {
        tape.backward(out, k);
        std::vector<double> got = tape.grad(in).data;
        std::vector<double> want = oracles::fd_grad(
            [&](const std::vector<double>& p) {
                Tape t2;
                NodeId i2 = t2.leaf(Tensor({1, 4}, p));
                NodeId o2 = t2.softmax(t2.matmul(i2, t2.leaf(Tensor({4, 2}, w))));
                return t2.value(o2).data[k];
            },
            x);
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(oracles::rel_err(got[i], want[i]) <= 1e-4);
        }
    }
}

TEST_CASE("abs_jacobian_of stacks the absolute value of each row gradient") {
    std::mt19937_64 rng(9);
    std::vector<double> w = random_vec(rng, 12);
    std::vector<double> x = random_vec(rng, 3);
    Tape tape;
    NodeId in = tape.leaf(Tensor({1, 3}, x));
    NodeId out = tape.sigmoid(tape.matmul(in, tape.leaf(Tensor({3, 4}, w))));
    AbsJacobian jac = predsens::abs_jacobian_of(tape, out, in);
    REQUIRE(jac.rows == 4);
    REQUIRE(jac.cols == 3);
    for (std::size_t k = 0; k < jac.rows; ++k) {
        std::vector<double> fd = oracles::fd_grad(
            [&](const std::vector<double>& p) {
                Tape t2;
                NodeId i2 = t2.leaf(Tensor({1, 3}, p));
                NodeId o2 = t2.sigmoid(t2.matmul(i2, t2.leaf(Tensor({3, 4}, w))));
                return t2.value(o2).data[k];
            },
            x);
        for (std::size_t i = 0; i < jac.cols; ++i) {
            CHECK(jac.at(k, i) >= 0.0);
            CHECK(oracles::rel_err(jac.at(k, i), std::fabs(fd[i])) <= 1e-4);
        }
    }
}

TEST_CASE("non-finite results abort immediately and name the op") {
    Tape tape;
    NodeId x = tape.leaf(Tensor::vec({-1.0, 2.0}));
    try {
        tape.log(x);  // log(-1) is NaN
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("log") != std::string::npos);
    }
    CHECK_THROWS_AS(tape.leaf(Tensor::vec({std::nan(""), 0.0})), NumericError);
}

TEST_CASE("asking for a gradient before backward is a state error") {
    Tape tape;
    NodeId x = tape.leaf(Tensor::vec({1.0}));
    CHECK_THROWS_AS(tape.grad(x), StateError);
}

TEST_CASE("dimension mismatches are rejected with the dimension error type") {
    Tape tape;
    NodeId a = tape.leaf(Tensor({2, 3}, std::vector<double>(6, 1.0)));
    NodeId b = tape.leaf(Tensor({2, 3}, std::vector<double>(6, 1.0)));
    CHECK_THROWS_AS(tape.matmul(a, b), DimensionError);
    NodeId c = tape.leaf(Tensor::vec({1.0, 2.0}));
    CHECK_THROWS_AS(tape.add(a, c), DimensionError);
    CHECK_THROWS_AS(tape.mul(a, c), DimensionError);
    NodeId s = tape.sum(c);
    CHECK_THROWS_AS(tape.backward(s, 5), DimensionError);
}

TEST_CASE("identical graphs produce bitwise identical values and gradients") {
    std::mt19937_64 rng(23);
    std::vector<double> w = random_vec(rng, 6);
    std::vector<double> x = random_vec(rng, 3);
    auto run = [&]() {
        Tape t;
        NodeId in = t.leaf(Tensor({1, 3}, x));
        NodeId out = t.mean(t.abs(t.softmax(t.matmul(in, t.leaf(Tensor({3, 2}, w))))));
        t.backward(out);
        std::pair<double, std::vector<double>> r{t.value(out).data[0], t.grad(in).data};
        return r;
    };
    auto r1 = run();
    auto r2 = run();
    CHECK(r1.first == r2.first);
    REQUIRE(r1.second.size() == r2.second.size());
    for (std::size_t i = 0; i < r1.second.size(); ++i) {
        CHECK(r1.second[i] == r2.second[i]);
    }
}

TEST_CASE("abs uses subgradient zero exactly at the kink") {
    Tape tape;
    NodeId x = tape.leaf(Tensor::vec({0.0, -2.0, 3.0}));
    NodeId out = tape.sum(tape.abs(x));
    tape.backward(out);
    const Tensor& g = tape.grad(x);
    CHECK(g.data[0] == 0.0);
    CHECK(g.data[1] == -1.0);
    CHECK(g.data[2] == 1.0);
}

TEST_CASE("gradients accumulate when a node feeds two consumers") {
    // f(x) = sum(x*x) + sum(x) has gradient 2x + 1.
    Tape tape;
    NodeId x = tape.leaf(Tensor::vec({1.5, -0.5}));
    NodeId out = tape.add(tape.sum(tape.mul(x, x)), tape.sum(x));
    tape.backward(out);
    CHECK(tape.grad(x).data[0] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(tape.grad(x).data[1] == doctest::Approx(0.0).epsilon(1e-12));
}
