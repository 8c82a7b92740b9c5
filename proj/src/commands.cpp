#include "conqar/commands.hpp"

#include "conqar/errors.hpp"

namespace conqar {

Split parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "validation" || name == "val") return Split::Validation;
    if (name == "test") return Split::Test;
    throw ConfigError("unknown split '" + std::string(name) + "'");
}

const std::vector<ReviewRecord>& split_records(const PreparedData& data, Split split) {
    switch (split) {
        case Split::Train: return data.splits.train;
        case Split::Validation: return data.splits.validation;
        case Split::Test: return data.splits.test;
    }
    return data.splits.test;
}

LoadedCheckpoint load_checkpoint_with_data(const std::filesystem::path& checkpoint,
                                           const std::optional<std::filesystem::path>& data_dir) {
    Checkpoint ckpt = load_checkpoint(checkpoint);
    TrainConfig config = config_from_checkpoint(ckpt);
    std::filesystem::path dir;
    if (data_dir) {
        dir = *data_dir;
    } else {
        auto meta = nlohmann::json::parse(ckpt.metadata);
        dir = meta.value("data_dir", "");
        if (dir.empty()) throw ConfigError("checkpoint records no data directory; pass one explicitly");
    }
    PreparedData data = load_prepared(dir);
    Model model = model_from_checkpoint(ckpt);
    if (model.embedding().weights.cols() != data.vocab.size()) {
        throw FormatError("vocabulary in " + dir.string() + " has " + std::to_string(data.vocab.size()) +
                          " tokens but the checkpoint embeds " + std::to_string(model.embedding().weights.cols()));
    }
    return LoadedCheckpoint{std::move(config), std::move(data), std::move(model)};
}

double evaluate_checkpoint(LoadedCheckpoint& loaded, Split split) {
    DocumentSource docs(loaded.data.splits.train, loaded.data.vocab, loaded.config.model.limits);
    const auto examples = to_examples(split_records(loaded.data, split));
    return evaluate_mae(loaded.model, examples, docs, loaded.config.clip_predictions);
}

PairVisuals export_pair_visuals(LoadedCheckpoint& loaded, const std::string& user, const std::string& item,
                                const std::filesystem::path& out_dir, int k) {
    if (loaded.config.model.variant == Variant::ConvMutual) {
        throw ConfigError("the conv_mutual variant has no density matrices to visualize");
    }
    if (k <= 0) throw ConfigError("k must be positive");
    std::filesystem::create_directories(out_dir);
    DocumentSource docs(loaded.data.splits.train, loaded.data.vocab, loaded.config.model.limits);
    Tape tape(Tape::Mode::NoGrad);
    const DocumentRow& user_doc = docs.training_document(Side::User, user);
    const DocumentRow& item_doc = docs.training_document(Side::Item, item);
    OwnerEncoding u = loaded.model.encode(tape, user_doc, Side::User, user);
    OwnerEncoding v = loaded.model.encode(tape, item_doc, Side::Item, item);
    PairVisuals out;
    out.user_heatmap = export_density_heatmap(u.rho, out_dir / "user_density");
    out.item_heatmap = export_density_heatmap(v.rho, out_dir / "item_density");
    out.user_highlights = export_position_highlights(user_doc, loaded.data.vocab, u.p, k, out_dir / "user_highlights");
    out.item_highlights = export_position_highlights(item_doc, loaded.data.vocab, v.p, k, out_dir / "item_highlights");
    return out;
}

}  // namespace conqar
