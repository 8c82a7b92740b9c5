#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "conqar/attention.hpp"
#include "conqar/corpus.hpp"
#include "conqar/density.hpp"
#include "conqar/encoder.hpp"
#include "conqar/head.hpp"

namespace conqar {

// full: conv -> density -> mutual attention
// conv_quant: conv -> density -> [tr | diag] (no attention weighting)
// conv_mutual: conv -> mutual attention over raw feature maps (no density)
enum class Variant { Full, ConvQuant, ConvMutual };

Variant parse_variant(std::string_view name);
std::string_view to_string(Variant variant);

struct ModelConfig {
    std::size_t embedding_dim = 100;
    std::vector<std::size_t> window_sizes{1, 2, 3};
    std::size_t n_filters = 100;
    std::size_t fc_layers = 2;
    std::size_t fc_hidden = 64;
    double dropout = 0.5;
    Activation conv_activation = Activation::Relu;
    Pooling pooling = Pooling::Mean;
    DistMode dist_mode = DistMode::Softmax;
    Variant variant = Variant::Full;
    DocumentLimits limits;

    std::size_t representation_size() const;
};

/// Per-document intermediates for one side of a pair.
struct OwnerEncoding {
    Side side = Side::User;
    std::string owner;
    FeatureMap features;
    Tensor states;       // empty for conv_mutual
    Tensor p;            // empty for conv_mutual
    DensityMatrix rho;   // empty for conv_mutual

    bool has_density() const { return rho.values.defined(); }
};

struct PairOutput {
    MutualAttention attention;  // a_u/a_v empty for conv_quant
    FusedRepresentation fused;
    Tensor prediction;          // scalar
};

struct ForwardResult {
    OwnerEncoding user;
    OwnerEncoding item;
    PairOutput pair;

    const Tensor& prediction() const { return pair.prediction; }
};

class Model {
public:
    Model(ModelConfig config, std::size_t vocab_size, std::span<const std::string> users,
          std::span<const std::string> items, std::uint64_t seed);

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    const ModelConfig& config() const { return config_; }
    ParameterStore& parameters() { return params_; }
    const ParameterStore& parameters() const { return params_; }
    EmbeddingTable& embedding() { return embedding_; }
    ConvFilterBank& conv() { return conv_; }
    PositionTable& positions() { return positions_; }
    const PositionTable& positions() const { return positions_; }
    DenseStack& head() { return head_; }

    OwnerEncoding encode(Tape& tape, const DocumentRow& doc, Side side, const std::string& owner) const;
    PairOutput pair(Tape& tape, const OwnerEncoding& user, const OwnerEncoding& item, bool training);
    ForwardResult forward(Tape& tape, const DocumentRow& user_doc, const std::string& user_id,
                          const DocumentRow& item_doc, const std::string& item_id, bool training);

    // Inference without a gradient tape.
    double predict_rating(const DocumentRow& user_doc, const std::string& user_id, const DocumentRow& item_doc,
                          const std::string& item_id);

    void set_output_bias(double value);
    void reseed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }

private:
    ModelConfig config_;
    EmbeddingTable embedding_;
    ConvFilterBank conv_;
    PositionTable positions_;
    DenseStack head_;
    ParameterStore params_;
    std::mt19937_64 dropout_rng_;
};

/// Versioned binary container: "CQARCKPT" magic, version byte, a metadata
/// JSON string, then every parameter as (name, shape, float64 values).
struct Checkpoint {
    std::string metadata;
    std::vector<std::pair<std::string, Tensor>> parameters;

    std::vector<std::string> owners(Side side) const;
    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params, const std::string& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const ParameterStore& params, const std::string& metadata);
Checkpoint deserialize_checkpoint(std::string_view bytes);

// Copies values by name; DimensionError on shape mismatch, FormatError when missing.
void load_parameters(ParameterStore& params, const Checkpoint& checkpoint);

}  // namespace conqar
