#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "conqar/density.hpp"
#include "conqar/errors.hpp"

using namespace conqar;

namespace {

double min_eigenvalue(const Tensor& m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) e(r, c) = m.at(r, c);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(e);
    return solver.eigenvalues().minCoeff();
}

FeatureMap features_of(Tensor values) {
    FeatureMap fm;
    fm.mask.assign(values.cols(), true);
    fm.values = std::move(values);
    return fm;
}

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor t({r, c});
    for (double& v : t.data()) v = u(rng);
    return t;
}

Tensor random_distribution(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.01, 1.0);
    std::vector<double> v(n);
    double total = 0.0;
    for (double& x : v) total += (x = u(rng));
    for (double& x : v) x /= total;
    return Tensor::vector(v);
}

}  // namespace

TEST(UnitStates, Examples) {
    Tape tape(Tape::Mode::NoGrad);
    Tensor c = Tensor::matrix({{3, 0}, {4, 0}, {0, 0}});
    Tensor s = unit_states(tape, features_of(c));
    EXPECT_DOUBLE_EQ(s.at(0, 0), 0.6);
    EXPECT_DOUBLE_EQ(s.at(1, 0), 0.8);
    EXPECT_EQ(s.at(2, 0), 0.0);
    for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(s.at(r, 1), 0.0);
}

TEST(UnitStates, NonzeroColumnsHaveUnitNorm) {
    std::mt19937_64 rng(1);
    Tape tape(Tape::Mode::NoGrad);
    Tensor s = unit_states(tape, features_of(random_matrix(7, 11, rng)));
    for (std::size_t c = 0; c < 11; ++c) {
        double norm = 0.0;
        for (std::size_t r = 0; r < 7; ++r) norm += s.at(r, c) * s.at(r, c);
        EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-9);
    }
}

TEST(DensityMatrix, SinglePureState) {
    Tape tape(Tape::Mode::NoGrad);
    auto rho = density_matrix(tape, Tensor::matrix({{1}, {0}}), Tensor::vector({1.0}));
    EXPECT_EQ(rho.values.at(0, 0), 1.0);
    EXPECT_EQ(rho.values.at(0, 1), 0.0);
    EXPECT_EQ(rho.values.at(1, 1), 0.0);
}

TEST(DensityMatrix, OrthogonalMixture) {
    Tape tape(Tape::Mode::NoGrad);
    auto rho = density_matrix(tape, Tensor::identity(2), Tensor::vector({0.5, 0.5}));
    EXPECT_EQ(rho.values.at(0, 0), 0.5);
    EXPECT_EQ(rho.values.at(1, 1), 0.5);
    EXPECT_EQ(rho.values.at(0, 1), 0.0);
}

TEST(DensityMatrix, BruteForceOuterProductOracle) {
    std::mt19937_64 rng(2);
    Tape tape(Tape::Mode::NoGrad);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor s = unit_states(tape, features_of(random_matrix(4, 6, rng)));
        Tensor p = random_distribution(6, rng);
        auto rho = density_matrix(tape, s, p);
        for (std::size_t a = 0; a < 4; ++a) {
            for (std::size_t b = 0; b < 4; ++b) {
                double expect = 0.0;
                for (std::size_t i = 0; i < 6; ++i) expect += p[i] * s.at(a, i) * s.at(b, i);
                EXPECT_NEAR(rho.values.at(a, b), expect, 1e-12);
                EXPECT_NEAR(rho.values.at(a, b), rho.values.at(b, a), 1e-8);
            }
        }
        EXPECT_GE(min_eigenvalue(rho.values), -1e-10);
    }
}

TEST(DensityMatrix, DimensionMismatch) {
    Tape tape;
    EXPECT_THROW(density_matrix(tape, Tensor({3, 4}), Tensor::vector({0.5, 0.5})), DimensionError);
}

TEST(DensityMatrix, ZeroStatesLoseTheirMass) {
    std::mt19937_64 rng(3);
    Tape tape(Tape::Mode::NoGrad);
    Tensor c = random_matrix(5, 8, rng);
    for (std::size_t r = 0; r < 5; ++r) c.at(r, 2) = c.at(r, 6) = 0.0;
    Tensor p = random_distribution(8, rng);
    auto rho = density_matrix(tape, unit_states(tape, features_of(c)), p);
    double tr = 0.0;
    for (std::size_t i = 0; i < 5; ++i) tr += rho.values.at(i, i);
    EXPECT_NEAR(tr, 1.0 - p[2] - p[6], 1e-9);
}

TEST(PositionTable, SoftmaxStartsUniformAndColdOwnersUniform) {
    std::vector<std::string> users{"a"}, items{"x"};
    PositionTable table(DistMode::Softmax, 4, users, items);
    Tape tape(Tape::Mode::NoGrad);
    Tensor p = table.distribution(tape, Side::User, "a");
    for (double v : p.data()) EXPECT_NEAR(v, 0.25, 1e-15);
    EXPECT_EQ(table.logits(Side::User, "zzz"), nullptr);
    Tensor cold = table.distribution(tape, Side::Item, "zzz");
    for (double v : cold.data()) EXPECT_NEAR(v, 0.25, 1e-15);
    EXPECT_EQ(PositionTable::parameter_name(Side::Item, "x"), "position.item.x");
}

TEST(TraceLoss, Examples) {
    Tape tape(Tape::Mode::NoGrad);
    DensityMatrix unit{Tensor::matrix({{0.5, 0}, {0, 0.5}}), "a"};
    std::vector<DensityMatrix> ones{unit};
    EXPECT_EQ(trace_loss(tape, ones, ones).item(), 0.0);
    std::vector<DensityMatrix> half{{Tensor::matrix({{0.25, 0}, {0, 0.25}}), "u"}};
    EXPECT_NEAR(trace_loss(tape, half, ones).item(), 0.25, 1e-15);
    EXPECT_THROW(trace_loss(tape, {}, ones), ConfigError);
}

TEST(TraceLoss, SoftmaxWithoutPaddingIsZero) {
    std::mt19937_64 rng(4);
    std::vector<std::string> owners{"o1", "o2"};
    PositionTable table(DistMode::Softmax, 9, owners, owners);
    std::normal_distribution<double> n(0.0, 2.0);
    for (auto& [_, logits] : table.named_logits())
        for (double& v : logits.data()) v = n(rng);
    Tape tape(Tape::Mode::NoGrad);
    std::vector<DensityMatrix> users, items;
    for (const auto& o : owners) {
        users.push_back(density_matrix(tape, unit_states(tape, features_of(random_matrix(6, 9, rng))),
                                       table.distribution(tape, Side::User, o)));
        items.push_back(density_matrix(tape, unit_states(tape, features_of(random_matrix(6, 9, rng))),
                                       table.distribution(tape, Side::Item, o)));
    }
    EXPECT_LT(trace_loss(tape, users, items).item(), 1e-10);
}

TEST(TraceLoss, LogitGradientCheck) {
    std::mt19937_64 rng(5);
    std::vector<std::string> owners{"a"};
    for (DistMode mode : {DistMode::Softmax, DistMode::Free}) {
        PositionTable table(mode, 6, owners, owners);
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        for (auto& [_, logits] : table.named_logits())
            for (double& v : logits.data()) v += u(rng);
        Tensor c = random_matrix(4, 6, rng);
        for (std::size_t r = 0; r < 4; ++r) c.at(r, 5) = 0.0;
        Tensor c_item = random_matrix(4, 6, rng);
        std::vector<Tensor> params;
        for (auto& [_, logits] : table.named_logits()) params.push_back(logits);
        auto loss = [&](Tape& t) {
            std::vector<DensityMatrix> us{density_matrix(t, unit_states(t, features_of(c)),
                                                         table.distribution(t, Side::User, "a"))};
            std::vector<DensityMatrix> is{density_matrix(t, unit_states(t, features_of(c_item)),
                                                         table.distribution(t, Side::Item, "a"))};
            return trace_loss(t, us, is);
        };
        EXPECT_LE(gradient_check(loss, params), 1e-4) << to_string(mode);
    }
}
