#include <gtest/gtest.h>

#include "conqar/errors.hpp"
#include "conqar/head.hpp"

using namespace conqar;

namespace {

FusedRepresentation rep(std::vector<double> v) { return {Tensor::vector(std::move(v))}; }

}  // namespace

TEST(Predict, OneLayerOnesOnZeros) {
    DenseStack stack({{Tensor::matrix(1, 7, std::vector<double>(7, 1.0)), Tensor::vector({0.0})}}, 0.0);
    Tape tape;
    std::mt19937_64 rng(1);
    EXPECT_EQ(predict(tape, rep(std::vector<double>(7, 0.0)), stack, false, rng).item(), 0.0);
}

TEST(Predict, TwoLayersByHand) {
    // hidden = elu([[1,0],[0,1]] z + [0,-3]); y = [2, 1] hidden + 0.5
    DenseStack stack({{Tensor::matrix({{1, 0, 0, 0}, {0, 1, 0, 0}}), Tensor::vector({0.0, -3.0})},
                      {Tensor::matrix({{2, 1}}), Tensor::vector({0.5})}},
                     0.5);
    Tape tape;
    std::mt19937_64 rng(1);
    const double y = predict(tape, rep({1.5, 1.0, 9.0, 9.0}), stack, false, rng).item();
    EXPECT_NEAR(y, 2.0 * 1.5 + (std::exp(-2.0) - 1.0) + 0.5, 1e-12);
}

TEST(Predict, InferenceIsDeterministicTrainingUsesDropout) {
    std::mt19937_64 init(3);
    DenseStack stack(5, 3, 8, 0.5, init);
    auto z = rep({0.1, -0.2, 0.3, 0.4, -0.5});
    std::mt19937_64 rng(9);
    Tape tape;
    const double a = predict(tape, z, stack, false, rng).item();
    const double b = predict(tape, z, stack, false, rng).item();
    EXPECT_EQ(a, b);
    bool differs = false;
    for (int i = 0; i < 10 && !differs; ++i) differs = predict(tape, z, stack, true, rng).item() != a;
    EXPECT_TRUE(differs);
}

TEST(Predict, DimensionMismatch) {
    std::mt19937_64 init(3);
    DenseStack stack(5, 2, 4, 0.0, init);
    Tape tape;
    EXPECT_THROW(predict(tape, rep({1.0, 2.0}), stack, false, init), DimensionError);
    EXPECT_THROW(DenseStack({{Tensor({2, 3}), Tensor::vector({0, 0})}, {Tensor({1, 3}), Tensor::vector({0})}}, 0.0),
                 DimensionError);
}

TEST(DenseStack, ShapesAndNames) {
    std::mt19937_64 init(3);
    DenseStack stack(13, 3, 16, 0.5, init);
    ASSERT_EQ(stack.layers().size(), 3u);
    EXPECT_EQ(stack.input_dim(), 13u);
    EXPECT_EQ(stack.layers()[0].weight.shape(), (Shape{16, 13}));
    EXPECT_EQ(stack.layers()[2].weight.shape(), (Shape{1, 16}));
    EXPECT_EQ(stack.layers()[1].bias.name(), "fc1.bias");
    const double bound = std::sqrt(6.0 / 29.0);
    for (double v : stack.layers()[0].weight.data()) EXPECT_LE(std::abs(v), bound);
}

TEST(RatingLoss, Examples) {
    Tape tape;
    EXPECT_EQ(rating_loss(tape, Tensor::vector({3, 4}), Tensor::vector({3, 4})).item(), 0.0);
    EXPECT_EQ(rating_loss(tape, Tensor::vector({4}), Tensor::vector({5})).item(), 1.0);
    EXPECT_EQ(rating_loss(tape, Tensor::vector({4, 3}), Tensor::vector({5, 1})).item(), 2.5);
    EXPECT_THROW(rating_loss(tape, Tensor::vector({4, 3}), Tensor::vector({5})), DimensionError);
}

TEST(TotalLoss, Examples) {
    Tape tape;
    Tensor trace = Tensor::scalar(0.2), rating = Tensor::scalar(1.0);
    EXPECT_EQ(total_loss(tape, trace, rating, {0.0}).item(), 1.0);
    EXPECT_EQ(total_loss(tape, trace, rating, {1.0}).item(), 0.2);
    EXPECT_NEAR(total_loss(tape, trace, rating, {0.3}).item(), 0.76, 1e-15);
    EXPECT_THROW(total_loss(tape, trace, rating, {1.5}), ConfigError);
    EXPECT_THROW(total_loss(tape, trace, rating, {-0.1}), ConfigError);
}

TEST(TotalLoss, GradientReachesBothTerms) {
    Tensor a = Tensor::scalar(0.2, true), b = Tensor::scalar(1.0, true);
    Tape tape;
    tape.backward(total_loss(tape, a, b, {0.3}));
    EXPECT_NEAR(a.grad()[0], 0.3, 1e-15);
    EXPECT_NEAR(b.grad()[0], 0.7, 1e-15);
}

TEST(Optimizer, FrozenColumnsStayPut) {
    ParameterStore store;
    Tensor table = Tensor::matrix({{0, 1}, {0, 2}}, true);
    store.add("embedding", table, {0});
    Tape tape;
    tape.backward(sum(tape, square(tape, add_scalar(tape, table, 1.0))));
    Optimizer opt({OptimizerKind::Sgd, 0.1});
    opt.step(store);
    EXPECT_EQ(table.at(0, 0), 0.0);
    EXPECT_EQ(table.at(1, 0), 0.0);
    EXPECT_NEAR(table.at(0, 1), 1.0 - 0.1 * 4.0, 1e-15);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
    ParameterStore store;
    Tensor x = Tensor::vector({1.0, -2.0}, true);
    store.add("x", x);
    Tape tape;
    tape.backward(sum(tape, square(tape, x)));
    Optimizer opt({OptimizerKind::Adam, 0.01});
    opt.step(store);
    EXPECT_NEAR(x[0], 1.0 - 0.01, 1e-9);
    EXPECT_NEAR(x[1], -2.0 + 0.01, 1e-9);
    EXPECT_THROW(Optimizer({OptimizerKind::Adam, 0.0}), ConfigError);
}

TEST(ParameterStore, DuplicateAndNonfinite) {
    ParameterStore store;
    store.add("a", Tensor::vector({1.0}));
    EXPECT_THROW(store.add("a", Tensor::vector({1.0})), ConfigError);
    store.add("b", Tensor::vector({std::nan("")}));
    EXPECT_EQ(store.first_nonfinite(), "b");
    EXPECT_EQ(store.element_count(), 2u);
}
