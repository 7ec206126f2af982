#include <cmath>
#include <functional>
#include <vector>

#include <doctest.h>

#include <npull/autodiff.hpp>
#include <npull/error.hpp>
#include <npull/random.hpp>

#include "support.hpp"

using namespace npull;
using ad::Matrix;
using ad::NodeId;
using ad::Tape;

namespace
{
    Matrix random_matrix(ad::Index rows, ad::Index cols, CounterRng& rng, double lo = -1.0, double hi = 1.0)
    {
        Matrix m(rows, cols);
        for (ad::Index j = 0; j < cols; ++j) {
            for (ad::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(lo, hi);
        }
        return m;
    }

    using Builder = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

    /// Reduces any node to a scalar with fixed random weights.
    NodeId weigh(Tape& tape, NodeId y, std::uint64_t seed)
    {
        CounterRng rng(seed, 7);
        const Matrix& v = tape.value(y);
        const NodeId w = tape.leaf(random_matrix(v.rows(), v.cols(), rng), false);
        return tape.sum(tape.hadamard(y, w));
    }

    /// Largest relative error between reverse-mode adjoints and central
    /// differences over every coordinate of every input.
    double worst_error(const std::vector<Matrix>& inputs, const Builder& build)
    {
        auto evaluate = [&](const std::vector<Matrix>& xs) {
            Tape tape;
            std::vector<NodeId> leaves;
            for (const Matrix& x : xs) leaves.push_back(tape.leaf(x));
            const NodeId out = weigh(tape, build(tape, leaves), 99);
            return tape.value(out)(0, 0);
        };

        Tape tape;
        std::vector<NodeId> leaves;
        for (const Matrix& x : inputs) leaves.push_back(tape.leaf(x));
        const NodeId out = weigh(tape, build(tape, leaves), 99);
        tape.backward(out);

        const double h = 1e-5;
        double worst = 0.0;
        for (std::size_t l = 0; l < inputs.size(); ++l) {
            const Matrix adjoint = tape.adjoint(leaves[l]);
            for (ad::Index k = 0; k < inputs[l].size(); ++k) {
                std::vector<Matrix> plus = inputs, minus = inputs;
                plus[l](k) += h;
                minus[l](k) -= h;
                const double fd = (evaluate(plus) - evaluate(minus)) / (2.0 * h);
                worst = std::max(worst, testing::relative_error(adjoint(k), fd));
            }
        }
        return worst;
    }
}

TEST_CASE("forward_affine computes W x + b")
{
    Tape tape;
    const NodeId w = tape.leaf(Matrix::Identity(2, 2));
    const NodeId b = tape.leaf(Matrix::Zero(2, 1));
    const NodeId x = tape.leaf(Eigen::Vector2d(3, 4));
    CHECK(tape.value(tape.affine(w, b, x)) == Matrix(Eigen::Vector2d(3, 4)));

    const NodeId w2 = tape.leaf(Matrix(Eigen::Matrix2d{{2, 0}, {0, 2}}));
    const NodeId b2 = tape.leaf(Eigen::Vector2d(1, 1));
    const NodeId x2 = tape.leaf(Eigen::Vector2d(1, 1));
    CHECK(tape.value(tape.affine(w2, b2, x2)) == Matrix(Eigen::Vector2d(3, 3)));
}

TEST_CASE("forward_affine matches a triple-loop product")
{
    CounterRng rng(1);
    const Matrix w = random_matrix(4, 3, rng), b = random_matrix(4, 1, rng), x = random_matrix(3, 5, rng);
    Tape tape;
    const Matrix& y = tape.value(tape.affine(tape.leaf(w), tape.leaf(b), tape.leaf(x)));
    for (int c = 0; c < 5; ++c) {
        for (int r = 0; r < 4; ++r) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += w(r, k) * x(k, c);
            CHECK(std::abs(y(r, c) - (acc + b(r, 0))) <= 1e-12);
        }
    }
}

TEST_CASE("forward_affine rejects mismatched shapes")
{
    Tape tape;
    const NodeId w = tape.leaf(Matrix::Zero(2, 3));
    const NodeId b = tape.leaf(Matrix::Zero(2, 1));
    CHECK_THROWS_AS(tape.affine(w, b, tape.leaf(Matrix::Zero(2, 1))), ConfigError);
    CHECK_THROWS_AS(tape.affine(w, tape.leaf(Matrix::Zero(3, 1)), tape.leaf(Matrix::Zero(3, 1))), ConfigError);
    CHECK_THROWS_AS(tape.add(tape.leaf(Matrix::Zero(2, 1)), tape.leaf(Matrix::Zero(1, 2))), ConfigError);
}

TEST_CASE("backward gives analytic gradients")
{
    Tape tape;
    const NodeId x = tape.leaf(Eigen::Vector3d(1, 2, 3));
    tape.backward(tape.dot(x, x));
    CHECK(tape.adjoint(x) == Matrix(Eigen::Vector3d(2, 4, 6)));

    Tape t2;
    const NodeId y = t2.leaf(Eigen::Vector3d(3, 4, 0));
    t2.backward(t2.norm(y));
    CHECK(t2.adjoint(y).isApprox(Matrix(Eigen::Vector3d(0.6, 0.8, 0.0)), 1e-15));
}

TEST_CASE("backward requires a scalar output")
{
    Tape tape;
    const NodeId x = tape.leaf(Eigen::Vector3d(1, 2, 3));
    CHECK_THROWS_AS(tape.backward(tape.scale(x, 2.0)), ConfigError);
}

TEST_CASE("a leaf has no parents and constants receive no adjoint")
{
    Tape tape;
    const ad::DualPoint p = tape.point(Eigen::Vector3d(0.1, 0.2, 0.3));
    CHECK(tape.parents(p.node).empty());
    CHECK(tape.op(p.node) == ad::Op::leaf);
    const NodeId c = tape.leaf(Eigen::Vector3d(1, 1, 1), false);
    tape.backward(tape.dot(p.node, c));
    CHECK(tape.adjoint(c).isZero(0.0));
    CHECK(tape.adjoint(p.node) == Matrix(Eigen::Vector3d(1, 1, 1)));
}

TEST_CASE("every primitive agrees with central differences")
{
    CounterRng rng(42);
    const double tol = 1e-4;
    const ad::Activation softplus{ad::ActivationKind::softplus, 100.0};
    const ad::Activation relu{ad::ActivationKind::relu, 0.0};

    SUBCASE("affine")
    {
        CHECK(worst_error({random_matrix(4, 3, rng), random_matrix(4, 1, rng), random_matrix(3, 6, rng)},
                          [](Tape& t, const auto& l) { return t.affine(l[0], l[1], l[2]); })
              <= tol);
        CHECK(worst_error({random_matrix(4, 3, rng), random_matrix(4, 1, rng), random_matrix(3, 6, rng)},
                          [](Tape& t, const auto& l) { return t.affine(l[0], l[1], l[2], 2); })
              <= tol);
    }
    SUBCASE("softplus and relu activations")
    {
        CHECK(worst_error({random_matrix(5, 4, rng)},
                          [&](Tape& t, const auto& l) { return t.activation(l[0], softplus); })
              <= tol);
        CHECK(worst_error({random_matrix(5, 4, rng)}, [&](Tape& t, const auto& l) { return t.activation(l[0], relu); })
              <= tol);
    }
    SUBCASE("dual activation")
    {
        CHECK(worst_error({random_matrix(4, 3 * 4, rng, -0.05, 0.05)},
                          [&](Tape& t, const auto& l) { return t.dual_activation(l[0], softplus, 3); })
              <= tol);
    }
    SUBCASE("elementwise arithmetic")
    {
        const Matrix a = random_matrix(3, 4, rng), b = random_matrix(3, 4, rng);
        CHECK(worst_error({a, b}, [](Tape& t, const auto& l) { return t.add(l[0], l[1]); }) <= tol);
        CHECK(worst_error({a, b}, [](Tape& t, const auto& l) { return t.sub(l[0], l[1]); }) <= tol);
        CHECK(worst_error({a}, [](Tape& t, const auto& l) { return t.scale(l[0], -1.7); }) <= tol);
        CHECK(worst_error({a, b}, [](Tape& t, const auto& l) { return t.hadamard(l[0], l[1]); }) <= tol);
        CHECK(worst_error({random_matrix(3, 4, rng, 0.5, 1.5)},
                          [](Tape& t, const auto& l) { return t.reciprocal(l[0]); })
              <= tol);
    }
    SUBCASE("concatenation and slicing")
    {
        const Matrix a = random_matrix(3, 4, rng), b = random_matrix(2, 4, rng), c = random_matrix(3, 2, rng);
        CHECK(worst_error({a, b}, [](Tape& t, const auto& l) { return t.concat_rows(l[0], l[1]); }) <= tol);
        CHECK(worst_error({a, c}, [](Tape& t, const auto& l) { return t.concat_cols(l[0], l[1]); }) <= tol);
        CHECK(worst_error({a}, [](Tape& t, const auto& l) { return t.slice_rows(l[0], 1, 2); }) <= tol);
        CHECK(worst_error({a}, [](Tape& t, const auto& l) { return t.slice_cols(l[0], 1, 3); }) <= tol);
    }
    SUBCASE("column reductions")
    {
        const Matrix a = random_matrix(3, 5, rng), b = random_matrix(3, 5, rng), r = random_matrix(1, 5, rng);
        CHECK(worst_error({a}, [](Tape& t, const auto& l) { return t.col_norm(l[0]); }) <= tol);
        CHECK(worst_error({a, b}, [](Tape& t, const auto& l) { return t.col_dot(l[0], l[1]); }) <= tol);
        CHECK(worst_error({a, r}, [](Tape& t, const auto& l) { return t.scale_cols(l[0], l[1]); }) <= tol);
    }
    SUBCASE("scalar reductions")
    {
        const Matrix a = random_matrix(3, 2, rng), b = random_matrix(3, 2, rng);
        CHECK(worst_error({a}, [](Tape& t, const auto& l) { return t.sum(l[0]); }) <= tol);
        CHECK(worst_error({a, b}, [](Tape& t, const auto& l) { return t.dot(l[0], l[1]); }) <= tol);
        CHECK(worst_error({a}, [](Tape& t, const auto& l) { return t.norm(l[0]); }) <= tol);
    }
}

TEST_CASE("a three-layer MLP matches central differences")
{
    CounterRng rng(3);
    // A soft beta keeps the third derivative small enough for h = 1e-5.
    const ad::Activation act{ad::ActivationKind::softplus, 5.0};
    const std::vector<Matrix> params{random_matrix(8, 3, rng), random_matrix(8, 1, rng), random_matrix(8, 8, rng),
                                     random_matrix(8, 1, rng), random_matrix(1, 8, rng), random_matrix(1, 1, rng),
                                     random_matrix(3, 1, rng)};
    const double err = worst_error(params, [&](Tape& t, const auto& l) {
        const NodeId h1 = t.activation(t.affine(l[0], l[1], l[6]), act);
        const NodeId h2 = t.activation(t.affine(l[2], l[3], h1), act);
        return t.affine(l[4], l[5], h2);
    });
    CHECK(err <= 1e-5);
}

TEST_CASE("gradient of a sum equals the sum of gradients")
{
    // Dyadic inputs keep every intermediate exact.
    const Matrix x0 = Eigen::Vector3d(0.5, -0.25, 1.125);
    auto grad = [&](int which) {
        Tape tape;
        const NodeId x = tape.leaf(x0);
        const NodeId a = tape.dot(x, x);
        const NodeId b = tape.sum(tape.scale(x, 3.0));
        tape.backward(which == 0 ? a : which == 1 ? b : tape.add(a, b));
        return Matrix(tape.adjoint(x));
    };
    CHECK(grad(2) == Matrix(grad(0) + grad(1)));
}

TEST_CASE("replay reproduces values and reset tapes match fresh ones")
{
    CounterRng rng(5);
    const Matrix w = random_matrix(6, 3, rng), b = random_matrix(6, 1, rng), x = random_matrix(3, 4, rng);
    const ad::Activation act{};
    auto record = [&](Tape& tape) {
        const NodeId y = tape.activation(tape.affine(tape.leaf(w), tape.leaf(b), tape.leaf(x)), act);
        return tape.norm(tape.col_norm(y));
    };

    Tape tape;
    const NodeId out = record(tape);
    std::vector<Matrix> before;
    for (std::size_t i = 0; i < tape.size(); ++i) before.push_back(tape.value(NodeId{i}));
    tape.replay();
    for (std::size_t i = 0; i < tape.size(); ++i) CHECK(tape.value(NodeId{i}) == before[i]);

    tape.backward(out);
    const Matrix first = tape.adjoint(NodeId{0});
    tape.backward(out);
    CHECK(tape.adjoint(NodeId{0}) == first);

    tape.reset();
    const NodeId again = record(tape);
    tape.backward(again);
    Tape fresh;
    const NodeId ref = record(fresh);
    fresh.backward(ref);
    CHECK(tape.value(again) == fresh.value(ref));
    CHECK(tape.adjoint(NodeId{0}) == fresh.adjoint(NodeId{0}));
}

TEST_CASE("activation derivatives")
{
    const ad::Activation sp{ad::ActivationKind::softplus, 100.0};
    CHECK(sp.value(0.0) == doctest::Approx(std::log(2.0) / 100.0).epsilon(1e-14));
    CHECK(std::isfinite(sp.value(1e3)));
    CHECK(sp.value(1e3) == doctest::Approx(1e3));
    CHECK(sp.value(-1e3) >= 0.0);
    CHECK(sp.first(0.0) == doctest::Approx(0.5));
    const double h = 1e-6;
    for (double x : {-0.03, -0.01, 0.0, 0.004, 0.02}) {
        CHECK(testing::relative_error(sp.first(x), (sp.value(x + h) - sp.value(x - h)) / (2 * h)) <= 1e-4);
        CHECK(testing::relative_error(sp.second(x), (sp.first(x + h) - sp.first(x - h)) / (2 * h)) <= 1e-4);
        double d1 = 0.0, d2 = 0.0;
        CHECK(sp.evaluate(x, &d1, &d2) == sp.value(x));
        CHECK(d1 == sp.first(x));
        CHECK(d2 == sp.second(x));
    }

    const ad::Activation relu{ad::ActivationKind::relu, 0.0};
    CHECK(relu.value(-2.0) == 0.0);
    CHECK(relu.value(2.0) == 2.0);
    CHECK(relu.first(0.0) == 0.0);
    CHECK(relu.first(1.0) == 1.0);
    CHECK(relu.second(1.0) == 0.0);
}

TEST_CASE("affine_columns is independent of batch width")
{
    CounterRng rng(9);
    const Matrix w = random_matrix(7, 3, rng), x = random_matrix(3, 11, rng);
    const Eigen::VectorXd b = random_matrix(7, 1, rng);
    Matrix all, one;
    ad::affine_columns(w, b, x, all);
    for (int c = 0; c < 11; ++c) {
        ad::affine_columns(w, b, x.col(c), one);
        CHECK(one.col(0) == all.col(c));
    }
}
