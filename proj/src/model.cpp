#include "conqar/model.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include "conqar/errors.hpp"

namespace conqar {

Variant parse_variant(std::string_view name) {
    if (name == "full") return Variant::Full;
    if (name == "conv_quant") return Variant::ConvQuant;
    if (name == "conv_mutual") return Variant::ConvMutual;
    throw ConfigError("unknown model variant '" + std::string(name) + "'");
}

std::string_view to_string(Variant variant) {
    switch (variant) {
        case Variant::Full: return "full";
        case Variant::ConvQuant: return "conv_quant";
        case Variant::ConvMutual: return "conv_mutual";
    }
    return "?";
}

std::size_t ModelConfig::representation_size() const {
    return variant == Variant::ConvQuant ? n_filters + 1 : 3 * n_filters + 1;
}

Model::Model(ModelConfig config, std::size_t vocab_size, std::span<const std::string> users,
             std::span<const std::string> items, std::uint64_t seed)
    : config_(std::move(config)), dropout_rng_(seed ^ 0x9E3779B97F4A7C15ULL) {
    if (config_.limits.length() < 1) throw ConfigError("document length must be positive");
    std::mt19937_64 init(seed);
    embedding_ = EmbeddingTable::random(config_.embedding_dim, vocab_size, init);
    conv_ = ConvFilterBank(config_.embedding_dim, config_.window_sizes, config_.n_filters, init);
    head_ = DenseStack(config_.representation_size(), config_.fc_layers, config_.fc_hidden, config_.dropout, init);
    if (config_.variant != Variant::ConvMutual) {
        positions_ = PositionTable(config_.dist_mode, config_.limits.length(), users, items);
    }

    params_.add("embedding", embedding_.weights, {static_cast<std::size_t>(Vocabulary::kPad)});
    for (auto& g : conv_.groups()) {
        params_.add(g.weights.name(), g.weights);
        params_.add(g.bias.name(), g.bias);
    }
    for (auto& layer : head_.layers()) {
        params_.add(layer.weight.name(), layer.weight);
        params_.add(layer.bias.name(), layer.bias);
    }
    for (auto& [name, logits] : positions_.named_logits()) params_.add(name, logits);
}

OwnerEncoding Model::encode(Tape& tape, const DocumentRow& doc, Side side, const std::string& owner) const {
    if (doc.token_ids.size() != config_.limits.length()) {
        throw DimensionError("document of length " + std::to_string(doc.token_ids.size()) +
                             " but the model expects " + std::to_string(config_.limits.length()));
    }
    OwnerEncoding enc;
    enc.side = side;
    enc.owner = owner;
    enc.features = encode_document(tape, doc, embedding_, conv_, config_.conv_activation);
    if (config_.variant != Variant::ConvMutual) {
        enc.states = unit_states(tape, enc.features);
        enc.p = positions_.distribution(tape, side, owner);
        enc.rho = density_matrix(tape, enc.states, enc.p, owner);
    }
    return enc;
}

PairOutput Model::pair(Tape& tape, const OwnerEncoding& user, const OwnerEncoding& item, bool training) {
    PairOutput out;
    switch (config_.variant) {
        case Variant::Full:
            out.attention = mutual_attention(tape, user.rho.values, item.rho.values, config_.pooling);
            out.fused = fuse(tape, user.rho.values, item.rho.values, out.attention);
            break;
        case Variant::ConvQuant: {
            out.attention.matrix = mutual_matrix(tape, user.rho.values, item.rho.values);
            out.attention.trace = trace(tape, out.attention.matrix);
            out.attention.diag = diagonal(tape, out.attention.matrix);
            const std::array<Tensor, 2> parts{out.attention.trace, out.attention.diag};
            out.fused = FusedRepresentation{concat(tape, parts)};
            break;
        }
        case Variant::ConvMutual:
            out.fused = feature_map_attention(tape, user.features.values, item.features.values, config_.pooling,
                                              &out.attention);
            break;
    }
    out.prediction = conqar::predict(tape, out.fused, head_, training, dropout_rng_);
    return out;
}

ForwardResult Model::forward(Tape& tape, const DocumentRow& user_doc, const std::string& user_id,
                             const DocumentRow& item_doc, const std::string& item_id, bool training) {
    ForwardResult result;
    result.user = encode(tape, user_doc, Side::User, user_id);
    result.item = encode(tape, item_doc, Side::Item, item_id);
    result.pair = pair(tape, result.user, result.item, training);
    return result;
}

double Model::predict_rating(const DocumentRow& user_doc, const std::string& user_id, const DocumentRow& item_doc,
                             const std::string& item_id) {
    Tape tape(Tape::Mode::NoGrad);
    return forward(tape, user_doc, user_id, item_doc, item_id, false).prediction().item();
}

void Model::set_output_bias(double value) { head_.layers().back().bias[0] = value; }

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'Q', 'A', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kCheckpointVersion = 1;

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw FormatError("checkpoint truncated");
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::string> Checkpoint::owners(Side side) const {
    const std::string prefix = "position." + std::string(to_string(side)) + ".";
    std::vector<std::string> ids;
    for (const auto& [name, _] : parameters) {
        if (name.rfind(prefix, 0) == 0) ids.push_back(name.substr(prefix.size()));
    }
    return ids;
}

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : parameters)
        if (n == name) return &t;
    return nullptr;
}

std::string serialize_checkpoint(const ParameterStore& params, const std::string& metadata) {
    std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
    put<std::uint8_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, metadata.size());
    out += metadata;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.entries().size()));
    for (const auto& e : params.entries()) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out += e.name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(e.tensor.rank()));
        for (auto d : e.tensor.shape()) put<std::uint64_t>(out, d);
        for (double v : e.tensor.data()) put<double>(out, v);
    }
    return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
    Reader in(bytes);
    if (in.take(sizeof(kCheckpointMagic)) != std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic))) {
        throw FormatError("not a conqar checkpoint");
    }
    if (in.get<std::uint8_t>() != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
    Checkpoint ckpt;
    ckpt.metadata = std::string(in.take(in.get<std::uint64_t>()));
    const auto count = in.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name(in.take(in.get<std::uint32_t>()));
        Shape shape(in.get<std::uint32_t>());
        for (auto& d : shape) d = in.get<std::uint64_t>();
        std::vector<double> values(shape_size(shape));
        for (auto& v : values) v = in.get<double>();
        Tensor t(std::move(shape), std::move(values));
        t.set_name(name);
        ckpt.parameters.emplace_back(std::move(name), std::move(t));
    }
    if (!in.done()) throw FormatError("trailing bytes after checkpoint");
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params, const std::string& metadata) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    const std::string bytes = serialize_checkpoint(params, metadata);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("error writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return deserialize_checkpoint(buffer.str());
}

void load_parameters(ParameterStore& params, const Checkpoint& checkpoint) {
    for (auto& e : params.entries()) {
        const Tensor* saved = checkpoint.find(e.name);
        if (!saved) throw FormatError("checkpoint lacks parameter '" + e.name + "'");
        if (saved->shape() != e.tensor.shape()) {
            throw DimensionError("parameter '" + e.name + "': checkpoint shape " + shape_string(saved->shape()) +
                                 " vs model " + shape_string(e.tensor.shape()));
        }
        std::copy(saved->data().begin(), saved->data().end(), e.tensor.data().begin());
    }
}

}  // namespace conqar
