#include <gtest/gtest.h>

#include <fstream>

#include "conqar/encoder.hpp"
#include "conqar/errors.hpp"

using namespace conqar;

namespace {

DocumentRow doc_of(std::vector<std::int32_t> ids) {
    DocumentRow row;
    row.mask.assign(ids.size(), true);
    for (std::size_t i = 0; i < ids.size(); ++i) row.mask[i] = ids[i] != Vocabulary::kPad;
    row.token_ids = std::move(ids);
    return row;
}

ConvFilterBank single_filter(std::size_t d, std::size_t h, std::vector<double> w, double b) {
    std::mt19937_64 rng(0);
    ConvFilterBank bank(d, {h}, 1, rng);
    auto& g = bank.groups()[0];
    std::copy(w.begin(), w.end(), g.weights.data().begin());
    g.bias[0] = b;
    return bank;
}

}  // namespace

TEST(Embedding, RandomTableHasZeroPadColumn) {
    std::mt19937_64 rng(1);
    auto table = EmbeddingTable::random(5, 10, rng);
    for (std::size_t r = 0; r < 5; ++r) EXPECT_EQ(table.weights.at(r, Vocabulary::kPad), 0.0);
    for (std::size_t c = 1; c < 10; ++c)
        for (std::size_t r = 0; r < 5; ++r) EXPECT_LE(std::abs(table.weights.at(r, c)), 0.05);
}

TEST(Embedding, AllPadDocIsZero) {
    std::mt19937_64 rng(1);
    auto table = EmbeddingTable::random(4, 6, rng);
    Tape tape(Tape::Mode::NoGrad);
    Tensor x = embed(tape, doc_of({0, 0, 0, 0}), table);
    ASSERT_EQ(x.shape(), (Shape{4, 4}));
    for (double v : x.data()) EXPECT_EQ(v, 0.0);
}

TEST(Embedding, ColumnSelect) {
    std::mt19937_64 rng(1);
    auto table = EmbeddingTable::random(2, 5, rng);
    table.weights.at(0, 3) = 0.5;
    table.weights.at(1, 3) = -0.5;
    Tape tape(Tape::Mode::NoGrad);
    Tensor x = embed(tape, doc_of({3}), table);
    EXPECT_EQ(x.at(0, 0), 0.5);
    EXPECT_EQ(x.at(1, 0), -0.5);
}

TEST(Embedding, OutOfRangeId) {
    std::mt19937_64 rng(1);
    auto table = EmbeddingTable::random(2, 5, rng);
    Tape tape;
    EXPECT_THROW(embed(tape, doc_of({7}), table), IndexError);
}

TEST(Embedding, ImportWord2vec) {
    std::vector<ReviewRecord> train{{"r", "u", "i", 3, "alpha beta", std::nullopt}};
    auto vocab = Vocabulary::build(train);
    auto path = std::filesystem::temp_directory_path() / "conqar_w2v.txt";
    std::ofstream(path) << "2 3\nalpha 1 2 3\nunseen 4 5 6\n";
    std::mt19937_64 rng(1);
    auto table = EmbeddingTable::random(3, vocab.size(), rng);
    const double beta_before = table.weights.at(0, vocab.lookup("beta"));
    EXPECT_EQ(table.import_word2vec(path, vocab), 1u);
    EXPECT_EQ(table.weights.at(0, vocab.lookup("alpha")), 1.0);
    EXPECT_EQ(table.weights.at(2, vocab.lookup("alpha")), 3.0);
    EXPECT_EQ(table.weights.at(0, vocab.lookup("beta")), beta_before);

    std::ofstream(path) << "1 2\nalpha 1 2\n";
    EXPECT_THROW(table.import_word2vec(path, vocab), DimensionError);
}

TEST(FilterBank, SplitsFiltersAcrossWindows) {
    EXPECT_EQ(filters_per_window(100, 3), (std::vector<std::size_t>{34, 33, 33}));
    EXPECT_EQ(filters_per_window(6, 3), (std::vector<std::size_t>{2, 2, 2}));
    std::mt19937_64 rng(2);
    ConvFilterBank bank(4, {1, 2, 3}, 7, rng);
    EXPECT_EQ(bank.n_filters(), 7u);
    EXPECT_EQ(bank.max_window(), 3u);
    for (const auto& g : bank.groups()) EXPECT_EQ(g.weights.dim(2), g.window);
}

TEST(FeatureMap, WindowOneSelectsFirstEmbeddingRow) {
    std::mt19937_64 rng(3);
    auto table = EmbeddingTable::random(3, 6, rng);
    auto bank = single_filter(3, 1, {1, 0, 0}, 0.0);
    Tape tape(Tape::Mode::NoGrad);
    Tensor x = embed(tape, doc_of({3, 4, 5, 0}), table);
    auto fm = feature_map(tape, x, bank, Activation::Identity);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(fm.values.at(0, i), x.at(0, i));
}

TEST(FeatureMap, ZeroInputNegativeBiasReluIsZero) {
    auto bank = single_filter(2, 2, {0.3, -0.1, 0.7, 0.2}, -1.0);
    Tape tape(Tape::Mode::NoGrad);
    auto fm = feature_map(tape, Tensor({2, 5}), bank, Activation::Relu);
    for (double v : fm.values.data()) EXPECT_EQ(v, 0.0);
}

TEST(FeatureMap, SlidingWindowOracle) {
    std::mt19937_64 rng(4);
    ConvFilterBank bank(3, {2}, 2, rng);
    auto table = EmbeddingTable::random(3, 8, rng);
    Tape tape(Tape::Mode::NoGrad);
    Tensor x = embed(tape, doc_of({3, 4, 5, 6, 7, 1}), table);
    auto fm = feature_map(tape, x, bank, Activation::Identity);
    const auto& g = bank.groups()[0];
    for (std::size_t s = 0; s < 2; ++s) {
        for (std::size_t i = 0; i + 1 < 6; ++i) {
            double expect = g.bias[s];
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t j = 0; j < 2; ++j) expect += g.weights[(s * 3 + c) * 2 + j] * x.at(c, i + j);
            EXPECT_NEAR(fm.values.at(s, i), expect, 1e-12);
        }
    }
}

TEST(FeatureMap, ShapeIsFiltersByLengthAndReluNonnegative) {
    std::mt19937_64 rng(5);
    auto table = EmbeddingTable::random(4, 9, rng);
    ConvFilterBank bank(4, {1, 2, 3}, 5, rng);
    Tape tape(Tape::Mode::NoGrad);
    auto fm = encode_document(tape, doc_of({3, 4, 5, 6, 7, 8, 0, 0}), table, bank);
    ASSERT_EQ(fm.values.shape(), (Shape{5, 8}));
    for (double v : fm.values.data()) EXPECT_GE(v, 0.0);
}

TEST(FeatureMap, DocumentShorterThanWindow) {
    std::mt19937_64 rng(6);
    auto table = EmbeddingTable::random(2, 5, rng);
    ConvFilterBank bank(2, {3}, 1, rng);
    Tape tape;
    EXPECT_THROW(encode_document(tape, doc_of({3, 4}), table, bank), DimensionError);
}

TEST(FeatureMap, EmbeddingGradientCheck) {
    std::mt19937_64 rng(7);
    auto table = EmbeddingTable::random(4, 8, rng);
    ConvFilterBank bank(4, {1, 2, 3}, 3, rng);
    auto doc = doc_of({3, 4, 5, 6, 7, 0});
    Tensor readout_w({3, 6});
    std::uniform_real_distribution<double> u(-1, 1);
    for (double& v : readout_w.data()) v = u(rng);
    std::vector<Tensor> params{table.weights};
    for (auto& g : bank.groups()) {
        params.push_back(g.weights);
        params.push_back(g.bias);
    }
    auto loss = [&](Tape& t) {
        auto fm = encode_document(t, doc, table, bank, Activation::Elu);
        return sum(t, mul(t, fm.values, readout_w));
    };
    EXPECT_LE(gradient_check(loss, params), 1e-4);
}
