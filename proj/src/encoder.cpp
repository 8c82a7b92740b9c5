#include "conqar/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "conqar/errors.hpp"

namespace conqar {

EmbeddingTable EmbeddingTable::random(std::size_t dim, std::size_t vocab_size, std::mt19937_64& rng, double range) {
    if (dim == 0 || vocab_size <= static_cast<std::size_t>(Vocabulary::kPad)) {
        throw ConfigError("embedding table needs positive dimension and a non-empty vocabulary");
    }
    std::uniform_real_distribution<double> init(-range, range);
    Tensor w({dim, vocab_size}, true);
    for (std::size_t r = 0; r < dim; ++r)
        for (std::size_t c = 0; c < vocab_size; ++c)
            w.at(r, c) = c == static_cast<std::size_t>(Vocabulary::kPad) ? 0.0 : init(rng);
    w.set_name("embedding");
    return EmbeddingTable{w};
}

std::size_t EmbeddingTable::import_word2vec(const std::filesystem::path& path, const Vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::size_t count = 0, file_dim = 0;
    if (!(hs >> count >> file_dim)) throw FormatError("word2vec header must be '<count> <dim>'");
    if (file_dim != dim()) {
        throw DimensionError("word2vec vectors have dimension " + std::to_string(file_dim) +
                             ", embedding table has " + std::to_string(dim()));
    }
    std::size_t assigned = 0;
    std::string line;
    std::vector<double> values(file_dim);
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string token;
        if (!(ls >> token)) continue;
        for (auto& v : values)
            if (!(ls >> v)) throw FormatError("word2vec line for '" + token + "' has too few values");
        const auto id = vocab.lookup(token);
        if (id == Vocabulary::kUnk || id == Vocabulary::kPad || id == Vocabulary::kDelim) continue;
        for (std::size_t r = 0; r < file_dim; ++r) weights.at(r, static_cast<std::size_t>(id)) = values[r];
        ++assigned;
    }
    return assigned;
}

std::vector<std::size_t> filters_per_window(std::size_t n_filters, std::size_t window_count) {
    if (window_count == 0) throw ConfigError("at least one convolution window size is required");
    if (n_filters < window_count) throw ConfigError("need at least one filter per window size");
    std::vector<std::size_t> counts(window_count, n_filters / window_count);
    for (std::size_t i = 0; i < n_filters % window_count; ++i) ++counts[i];
    return counts;
}

ConvFilterBank::ConvFilterBank(std::size_t embedding_dim, const std::vector<std::size_t>& window_sizes,
                               std::size_t n_filters, std::mt19937_64& rng) {
    const auto counts = filters_per_window(n_filters, window_sizes.size());
    for (std::size_t g = 0; g < window_sizes.size(); ++g) {
        const std::size_t h = window_sizes[g];
        if (h == 0) throw ConfigError("convolution window size must be positive");
        const std::size_t f = counts[g];
        // Glorot-style bound from fan-in d*h and fan-out f.
        const double bound = std::sqrt(6.0 / static_cast<double>(embedding_dim * h + f));
        std::uniform_real_distribution<double> init(-bound, bound);
        Tensor w({f, embedding_dim, h}, true);
        for (double& v : w.data()) v = init(rng);
        Tensor b({f}, true);
        w.set_name("conv.h" + std::to_string(h) + ".weight");
        b.set_name("conv.h" + std::to_string(h) + ".bias");
        groups_.push_back({h, w, b});
    }
}

std::size_t ConvFilterBank::n_filters() const {
    std::size_t n = 0;
    for (const auto& g : groups_) n += g.weights.dim(0);
    return n;
}

std::size_t ConvFilterBank::max_window() const {
    std::size_t m = 0;
    for (const auto& g : groups_) m = std::max(m, g.window);
    return m;
}

Tensor embed(Tape& tape, const DocumentRow& doc, const EmbeddingTable& table) {
    return embedding_lookup(tape, table.weights, doc.token_ids);
}

FeatureMap feature_map(Tape& tape, const Tensor& x, const ConvFilterBank& bank, Activation kind) {
    if (x.cols() < bank.max_window()) {
        throw DimensionError("document length " + std::to_string(x.cols()) + " shorter than window " +
                             std::to_string(bank.max_window()));
    }
    std::vector<Tensor> rows;
    rows.reserve(bank.groups().size());
    for (const auto& g : bank.groups()) rows.push_back(conv1d_same(tape, x, g.weights, g.bias));
    Tensor stacked = concat_rows(tape, rows);
    return FeatureMap{activation(tape, stacked, kind), {}};
}

FeatureMap encode_document(Tape& tape, const DocumentRow& doc, const EmbeddingTable& table,
                           const ConvFilterBank& bank, Activation kind) {
    FeatureMap fm = feature_map(tape, embed(tape, doc, table), bank, kind);
    fm.mask = doc.mask;
    return fm;
}

}  // namespace conqar
