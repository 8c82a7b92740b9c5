#pragma once

#include <filesystem>
#include <random>
#include <vector>

#include "conqar/corpus.hpp"
#include "conqar/numerics.hpp"

namespace conqar {

/// Word embedding matrix W_e of shape [d x |V|]; column t embeds token t.
/// The PAD column stays zero: it starts at zero and the parameter store
/// masks its gradient before every update.
struct EmbeddingTable {
    Tensor weights;

    static EmbeddingTable random(std::size_t dim, std::size_t vocab_size, std::mt19937_64& rng,
                                 double range = 0.05);

    std::size_t dim() const { return weights.rows(); }
    std::size_t vocab_size() const { return weights.cols(); }

    // Overwrites columns of tokens found in a word2vec text file ("count dim"
    // header, then "token v1 ... vd" lines). Returns the number of tokens set.
    std::size_t import_word2vec(const std::filesystem::path& path, const Vocabulary& vocab);
};

/// Convolution filters grouped by window size. Filters are split as evenly
/// as possible across the window sizes; earlier sizes take the remainder.
class ConvFilterBank {
public:
    struct Group {
        std::size_t window;
        Tensor weights;  // [filters x d x window]
        Tensor bias;     // [filters]
    };

    ConvFilterBank() = default;
    ConvFilterBank(std::size_t embedding_dim, const std::vector<std::size_t>& window_sizes, std::size_t n_filters,
                   std::mt19937_64& rng);

    std::size_t n_filters() const;
    std::size_t max_window() const;
    std::vector<Group>& groups() { return groups_; }
    const std::vector<Group>& groups() const { return groups_; }

private:
    std::vector<Group> groups_;
};

std::vector<std::size_t> filters_per_window(std::size_t n_filters, std::size_t window_count);

struct FeatureMap {
    Tensor values;           // [n x L]
    std::vector<bool> mask;  // inherited from the document
};

// X = [x_1 ... x_L], shape [d x L].
Tensor embed(Tape& tape, const DocumentRow& doc, const EmbeddingTable& table);

// Rows of every window group stacked in group order: C in R^{n x L}.
FeatureMap feature_map(Tape& tape, const Tensor& x, const ConvFilterBank& bank,
                       Activation kind = Activation::Relu);

FeatureMap encode_document(Tape& tape, const DocumentRow& doc, const EmbeddingTable& table,
                           const ConvFilterBank& bank, Activation kind = Activation::Relu);

}  // namespace conqar
