#include "conqar/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "conqar/errors.hpp"

namespace conqar {

using nlohmann::json;

namespace {

const std::set<std::string> kConfigKeys{
    "embedding_dim",  "window_sizes",  "n_filters",      "fc_layers",   "fc_hidden",
    "dropout",        "conv_activation", "pooling",      "dist_mode",   "variant",
    "max_review_words", "max_reviews", "alpha",          "learning_rate", "optimizer",
    "batch_size",     "epochs",        "patience",       "seed",        "grid_mode",
    "clip_predictions", "init_output_bias_to_mean", "track_train_mse", "pretrained_embeddings"};

bool contains_value(std::initializer_list<double> grid, double v) {
    return std::any_of(grid.begin(), grid.end(), [&](double g) { return std::abs(g - v) < 1e-12; });
}

std::string fingerprint(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("error writing " + path.string());
}

using OwnerKey = std::pair<int, std::string>;

OwnerKey key(Side side, const std::string& owner) { return {static_cast<int>(side), owner}; }

double clip_rating(double v) { return std::clamp(v, 1.0, 5.0); }

}  // namespace

void TrainConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (model.window_sizes.empty()) throw ConfigError("window_sizes must not be empty");
    for (auto h : model.window_sizes)
        if (h == 0) throw ConfigError("window sizes must be positive");
    if (model.n_filters < model.window_sizes.size()) throw ConfigError("n_filters below number of window sizes");
    if (model.fc_layers == 0) throw ConfigError("fc_layers must be positive");
    if (model.embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
    if (model.dropout < 0.0 || model.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    if (model.limits.max_review_words == 0 || model.limits.max_reviews == 0) {
        throw ConfigError("max_review_words and max_reviews must be positive");
    }
    if (model.limits.length() < *std::max_element(model.window_sizes.begin(), model.window_sizes.end())) {
        throw ConfigError("document length shorter than the widest convolution window");
    }
    if (grid_mode) {
        const std::vector<std::vector<std::size_t>> windows{{1}, {2}, {3}, {1, 2, 3}};
        if (std::find(windows.begin(), windows.end(), model.window_sizes) == windows.end()) {
            throw ConfigError("grid mode: window_sizes must be one of (1), (2), (3), (1,2,3)");
        }
        if (!contains_value({50, 100, 150}, static_cast<double>(model.n_filters))) {
            throw ConfigError("grid mode: n_filters must be 50, 100 or 150");
        }
        if (model.fc_layers < 1 || model.fc_layers > 4) throw ConfigError("grid mode: fc_layers must be 1..4");
        if (!contains_value({0.1, 0.3, 0.5, 0.7, 0.9}, alpha)) {
            throw ConfigError("grid mode: alpha must be one of 0.1, 0.3, 0.5, 0.7, 0.9");
        }
        if (!contains_value({0.1, 0.01, 0.001, 0.0001}, learning_rate)) {
            throw ConfigError("grid mode: learning_rate must be one of 0.1, 0.01, 0.001, 0.0001");
        }
    }
}

json TrainConfig::to_json() const {
    return json{{"embedding_dim", model.embedding_dim},
                {"window_sizes", model.window_sizes},
                {"n_filters", model.n_filters},
                {"fc_layers", model.fc_layers},
                {"fc_hidden", model.fc_hidden},
                {"dropout", model.dropout},
                {"conv_activation", std::string(to_string(model.conv_activation))},
                {"pooling", std::string(to_string(model.pooling))},
                {"dist_mode", std::string(to_string(model.dist_mode))},
                {"variant", std::string(to_string(model.variant))},
                {"max_review_words", model.limits.max_review_words},
                {"max_reviews", model.limits.max_reviews},
                {"alpha", alpha},
                {"learning_rate", learning_rate},
                {"optimizer", std::string(to_string(optimizer))},
                {"batch_size", batch_size},
                {"epochs", epochs},
                {"patience", patience},
                {"seed", seed},
                {"grid_mode", grid_mode},
                {"clip_predictions", clip_predictions},
                {"init_output_bias_to_mean", init_output_bias_to_mean},
                {"track_train_mse", track_train_mse},
                {"pretrained_embeddings", pretrained_embeddings}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    for (const auto& [k, _] : j.items()) {
        if (!kConfigKeys.count(k)) throw ConfigError("unknown config key '" + k + "'");
    }
    TrainConfig c;
    try {
        auto& m = c.model;
        m.embedding_dim = j.value("embedding_dim", m.embedding_dim);
        if (j.contains("window_sizes")) {
            const auto& w = j.at("window_sizes");
            m.window_sizes = w.is_array() ? w.get<std::vector<std::size_t>>()
                                          : std::vector<std::size_t>{w.get<std::size_t>()};
        }
        m.n_filters = j.value("n_filters", m.n_filters);
        m.fc_layers = j.value("fc_layers", m.fc_layers);
        m.fc_hidden = j.value("fc_hidden", m.fc_hidden);
        m.dropout = j.value("dropout", m.dropout);
        if (j.contains("conv_activation")) m.conv_activation = parse_activation(j.at("conv_activation").get<std::string>());
        if (j.contains("pooling")) m.pooling = parse_pooling(j.at("pooling").get<std::string>());
        if (j.contains("dist_mode")) m.dist_mode = parse_dist_mode(j.at("dist_mode").get<std::string>());
        if (j.contains("variant")) m.variant = parse_variant(j.at("variant").get<std::string>());
        m.limits.max_review_words = j.value("max_review_words", m.limits.max_review_words);
        m.limits.max_reviews = j.value("max_reviews", m.limits.max_reviews);
        c.alpha = j.value("alpha", c.alpha);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        c.patience = j.value("patience", c.patience);
        c.seed = j.value("seed", c.seed);
        c.grid_mode = j.value("grid_mode", c.grid_mode);
        c.clip_predictions = j.value("clip_predictions", c.clip_predictions);
        c.init_output_bias_to_mean = j.value("init_output_bias_to_mean", c.init_output_bias_to_mean);
        c.track_train_mse = j.value("track_train_mse", c.track_train_mse);
        c.pretrained_embeddings = j.value("pretrained_embeddings", c.pretrained_embeddings);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid training config: ") + e.what());
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
    try {
        return from_json(json::parse(read_text(path)));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::vector<RatingExample> to_examples(std::span<const ReviewRecord> records) {
    std::vector<RatingExample> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back({r.review_id, r.user_id, r.item_id, r.rating});
    return out;
}

PreparedData prepare_data(std::span<const ReviewRecord> records, const PrepareOptions& options) {
    PreparedData data;
    data.splits = split_dataset(records, options.ratios, options.seed);
    data.vocab = Vocabulary::build(data.splits.train, options.min_count);
    return data;
}

PrepareSummary prepare_directory(const std::filesystem::path& input, const std::filesystem::path& out,
                                 const PrepareOptions& options) {
    ParseResult parsed = parse_dataset(input, options.format);
    PreparedData data = prepare_data(parsed.records, options);
    std::filesystem::create_directories(out);
    data.vocab.save(out / "vocab.json");
    write_records(out / "train.jsonl", data.splits.train);
    write_records(out / "validation.jsonl", data.splits.validation);
    write_records(out / "test.jsonl", data.splits.test);
    ReviewIndex index(data.splits.train);
    write_documents(out / "user_docs.bin", index.documents(Side::User, data.vocab, options.limits), options.limits);
    write_documents(out / "item_docs.bin", index.documents(Side::Item, data.vocab, options.limits), options.limits);

    PrepareSummary s;
    s.records = parsed.records.size();
    s.malformed = parsed.malformed;
    std::set<std::string> users, items;
    for (const auto& r : parsed.records) {
        users.insert(r.user_id);
        items.insert(r.item_id);
    }
    s.users = users.size();
    s.items = items.size();
    s.vocab_size = data.vocab.size();
    s.train = data.splits.train.size();
    s.validation = data.splits.validation.size();
    s.test = data.splits.test.size();
    json summary{{"records", s.records},       {"malformed", s.malformed}, {"users", s.users},
                 {"items", s.items},           {"vocab_size", s.vocab_size}, {"train", s.train},
                 {"validation", s.validation}, {"test", s.test},           {"seed", options.seed},
                 {"max_review_words", options.limits.max_review_words},
                 {"max_reviews", options.limits.max_reviews}};
    write_text(out / "prepare.json", summary.dump(2) + "\n");
    return s;
}

PreparedData load_prepared(const std::filesystem::path& dir) {
    PreparedData data;
    data.vocab = Vocabulary::load(dir / "vocab.json");
    data.splits.train = read_records(dir / "train.jsonl");
    data.splits.validation = read_records(dir / "validation.jsonl");
    data.splits.test = read_records(dir / "test.jsonl");
    data.directory = dir;
    return data;
}

DocumentSource::DocumentSource(std::span<const ReviewRecord> train, const Vocabulary& vocab, DocumentLimits limits)
    : index_(train), vocab_(&vocab), limits_(limits) {}

const DocumentRow& DocumentSource::training_document(Side side, const std::string& owner) {
    auto k = key(side, owner);
    auto it = cache_.find(k);
    if (it == cache_.end()) it = cache_.emplace(k, index_.document(side, owner, *vocab_, limits_)).first;
    return it->second;
}

DocumentRow DocumentSource::evaluation_document(Side side, const std::string& owner, const std::string& exclude) const {
    return index_.document(side, owner, *vocab_, limits_, exclude);
}

bool DocumentSource::contains(Side side, const std::string& owner, const std::string& review_id) const {
    auto reviews = index_.reviews(side, owner);
    return std::any_of(reviews.begin(), reviews.end(),
                       [&](const ReviewRecord& r) { return r.review_id == review_id; });
}

double mean_absolute_error(std::span<const double> predictions, std::span<const double> truths) {
    if (predictions.empty()) throw ConfigError("MAE over an empty set");
    if (predictions.size() != truths.size()) throw DimensionError("MAE: prediction/truth count mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) total += std::abs(predictions[i] - truths[i]);
    return total / static_cast<double>(predictions.size());
}

double mean_squared_error(std::span<const double> predictions, std::span<const double> truths) {
    if (predictions.empty()) throw ConfigError("MSE over an empty set");
    if (predictions.size() != truths.size()) throw DimensionError("MSE: prediction/truth count mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - truths[i];
        total += d * d;
    }
    return total / static_cast<double>(predictions.size());
}

std::vector<double> predict_examples(Model& model, std::span<const RatingExample> examples, DocumentSource& docs,
                                     bool clip) {
    Tape tape(Tape::Mode::NoGrad);
    // Encodings of unmodified training documents are shared across examples;
    // a document that would contain the target review is rebuilt without it.
    std::map<OwnerKey, OwnerEncoding> shared;
    auto encoding = [&](Side side, const std::string& owner, const std::string& review_id) {
        if (docs.contains(side, owner, review_id)) {
            return model.encode(tape, docs.evaluation_document(side, owner, review_id), side, owner);
        }
        auto k = key(side, owner);
        auto it = shared.find(k);
        if (it == shared.end()) {
            it = shared.emplace(k, model.encode(tape, docs.training_document(side, owner), side, owner)).first;
        }
        return it->second;
    };
    std::vector<double> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        OwnerEncoding u = encoding(Side::User, ex.user_id, ex.review_id);
        OwnerEncoding v = encoding(Side::Item, ex.item_id, ex.review_id);
        double y = model.pair(tape, u, v, false).prediction.item();
        out.push_back(clip ? clip_rating(y) : y);
    }
    return out;
}

double evaluate_mae(Model& model, std::span<const RatingExample> examples, DocumentSource& docs, bool clip) {
    if (examples.empty()) throw ConfigError("evaluate_mae needs at least one example");
    auto predictions = predict_examples(model, examples, docs, clip);
    std::vector<double> truths;
    truths.reserve(examples.size());
    for (const auto& ex : examples) truths.push_back(ex.rating);
    return mean_absolute_error(predictions, truths);
}

double evaluate_training_mse(Model& model, std::span<const RatingExample> examples, DocumentSource& docs) {
    if (examples.empty()) throw ConfigError("evaluate_training_mse needs at least one example");
    Tape tape(Tape::Mode::NoGrad);
    std::map<OwnerKey, OwnerEncoding> enc;
    auto get = [&](Side side, const std::string& owner) -> const OwnerEncoding& {
        auto k = key(side, owner);
        auto it = enc.find(k);
        if (it == enc.end()) it = enc.emplace(k, model.encode(tape, docs.training_document(side, owner), side, owner)).first;
        return it->second;
    };
    std::vector<double> predictions, truths;
    for (const auto& ex : examples) {
        const auto& u = get(Side::User, ex.user_id);
        const auto& v = get(Side::Item, ex.item_id);
        predictions.push_back(model.pair(tape, u, v, false).prediction.item());
        truths.push_back(ex.rating);
    }
    return mean_squared_error(predictions, truths);
}

std::string MetricsReport::epochs_jsonl() const {
    std::string out;
    for (const auto& e : epochs) {
        json rec{{"epoch", e.epoch},
                 {"train_loss", e.train_loss},
                 {"train_rating_loss", e.train_rating_loss},
                 {"train_trace_loss", e.train_trace_loss}};
        rec["val_mae"] = e.val_mae ? json(*e.val_mae) : json(nullptr);
        if (e.train_mse) rec["train_mse"] = *e.train_mse;
        out += rec.dump() + "\n";
    }
    return out;
}

json MetricsReport::summary() const {
    return json{{"epochs_run", epochs.size()},
                {"best_epoch", best_epoch},
                {"best_val_mae", best_val_mae ? json(*best_val_mae) : json(nullptr)},
                {"test_mae", test_mae ? json(*test_mae) : json(nullptr)},
                {"early_stopped", early_stopped},
                {"config", config}};
}

namespace {

std::vector<std::vector<double>> snapshot(const ParameterStore& params) {
    std::vector<std::vector<double>> values;
    for (const auto& e : params.entries()) values.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
    return values;
}

void restore(ParameterStore& params, const std::vector<std::vector<double>>& values) {
    auto& entries = params.entries();
    for (std::size_t i = 0; i < entries.size(); ++i)
        std::copy(values[i].begin(), values[i].end(), entries[i].tensor.data().begin());
}

[[noreturn]] void diverged(std::size_t epoch, std::size_t batch, const std::string& what) {
    throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                       ": first non-finite tensor is " + what);
}

}  // namespace

TrainOutcome train(const TrainConfig& config, const PreparedData& data, const TrainOptions& options) {
    config.validate();
    if (data.splits.train.empty()) throw ConfigError("training split is empty");

    DocumentSource docs(data.splits.train, data.vocab, config.model.limits);
    const auto users = docs.owners(Side::User);
    const auto items = docs.owners(Side::Item);
    Model model(config.model, data.vocab.size(), users, items, config.seed);
    if (!config.pretrained_embeddings.empty()) model.embedding().import_word2vec(config.pretrained_embeddings, data.vocab);

    const auto train_examples = to_examples(data.splits.train);
    const auto val_examples = to_examples(data.splits.validation);
    const auto test_examples = to_examples(data.splits.test);
    if (config.init_output_bias_to_mean) {
        double total = 0.0;
        for (const auto& ex : train_examples) total += ex.rating;
        model.set_output_bias(total / static_cast<double>(train_examples.size()));
    }

    Optimizer optimizer({config.optimizer, config.learning_rate});
    const bool uses_density = config.model.variant != Variant::ConvMutual;
    std::mt19937_64 shuffle_rng(config.seed + 1);
    std::vector<std::size_t> order(train_examples.size());
    std::iota(order.begin(), order.end(), 0);

    MetricsReport report;
    report.config = config.to_json();
    auto best = snapshot(model.parameters());
    std::size_t stale = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        EpochMetrics metrics;
        metrics.epoch = epoch;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            Tape tape;
            std::map<OwnerKey, OwnerEncoding> encodings;
            auto encode = [&](Side side, const std::string& owner) -> const OwnerEncoding& {
                auto k = key(side, owner);
                auto it = encodings.find(k);
                if (it == encodings.end()) {
                    it = encodings.emplace(k, model.encode(tape, docs.training_document(side, owner), side, owner)).first;
                }
                return it->second;
            };
            std::vector<Tensor> predictions;
            std::vector<double> truths;
            for (std::size_t i = start; i < stop; ++i) {
                const auto& ex = train_examples[order[i]];
                const auto& u = encode(Side::User, ex.user_id);
                const auto& v = encode(Side::Item, ex.item_id);
                predictions.push_back(model.pair(tape, u, v, true).prediction);
                truths.push_back(ex.rating);
            }
            Tensor l_rating = rating_loss(tape, concat(tape, predictions), Tensor::vector(truths));
            Tensor l_trace = Tensor::scalar(0.0);
            Tensor loss = l_rating;
            if (uses_density) {
                std::vector<DensityMatrix> user_rhos, item_rhos;
                for (const auto& [k, enc] : encodings) {
                    (k.first == static_cast<int>(Side::User) ? user_rhos : item_rhos).push_back(enc.rho);
                }
                l_trace = trace_loss(tape, user_rhos, item_rhos);
                loss = total_loss(tape, l_trace, l_rating, {config.alpha});
            }
            if (!loss.all_finite()) diverged(epoch, batch_index, tape.first_nonfinite().value_or("loss"));

            model.parameters().zero_grad();
            tape.backward(loss);
            if (auto bad = model.parameters().first_nonfinite()) diverged(epoch, batch_index, *bad);
            optimizer.step(model.parameters());
            if (auto bad = model.parameters().first_nonfinite()) diverged(epoch, batch_index, *bad);

            const double weight = static_cast<double>(stop - start) / static_cast<double>(order.size());
            metrics.train_loss += weight * loss.item();
            metrics.train_rating_loss += weight * l_rating.item();
            metrics.train_trace_loss += weight * l_trace.item();
        }

        if (config.track_train_mse) metrics.train_mse = evaluate_training_mse(model, train_examples, docs);
        if (!val_examples.empty()) {
            metrics.val_mae = evaluate_mae(model, val_examples, docs, config.clip_predictions);
            if (!report.best_val_mae || *metrics.val_mae < *report.best_val_mae) {
                report.best_val_mae = metrics.val_mae;
                report.best_epoch = epoch;
                best = snapshot(model.parameters());
                stale = 0;
            } else {
                ++stale;
            }
        } else {
            report.best_epoch = epoch;
            best = snapshot(model.parameters());
        }
        report.epochs.push_back(metrics);
        if (options.on_epoch) options.on_epoch(metrics);
        if (config.patience > 0 && stale >= config.patience) {
            report.early_stopped = true;
            break;
        }
    }

    restore(model.parameters(), best);
    if (options.evaluate_test && !test_examples.empty()) {
        report.test_mae = evaluate_mae(model, test_examples, docs, config.clip_predictions);
    }
    return TrainOutcome{std::move(report), std::move(model)};
}

std::string checkpoint_metadata(const TrainConfig& config, const PreparedData& data) {
    const std::string vocab_json = data.vocab.to_json();
    json meta{{"format", "conqar-checkpoint"},
              {"config", config.to_json()},
              {"vocab",
               {{"path", data.directory.empty() ? "" : (data.directory / "vocab.json").string()},
                {"size", data.vocab.size()},
                {"fingerprint", fingerprint(vocab_json)}}},
              {"data_dir", data.directory.string()}};
    return meta.dump();
}

TrainConfig config_from_checkpoint(const Checkpoint& checkpoint) {
    json meta;
    try {
        meta = json::parse(checkpoint.metadata);
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint metadata is not JSON: ") + e.what());
    }
    if (meta.value("format", "") != "conqar-checkpoint") throw FormatError("checkpoint metadata has wrong format tag");
    return TrainConfig::from_json(meta.at("config"));
}

Model model_from_checkpoint(const Checkpoint& checkpoint) {
    const TrainConfig config = config_from_checkpoint(checkpoint);
    const Tensor* embedding = checkpoint.find("embedding");
    if (!embedding || embedding->rank() != 2) throw FormatError("checkpoint lacks the embedding table");
    Model model(config.model, embedding->cols(), checkpoint.owners(Side::User), checkpoint.owners(Side::Item),
                config.seed);
    load_parameters(model.parameters(), checkpoint);
    return model;
}

MetricsReport train_to_directory(const TrainConfig& config, const PreparedData& data,
                                 const std::filesystem::path& out) {
    std::filesystem::create_directories(out);
    TrainOutcome outcome = train(config, data);
    write_text(out / "metrics.jsonl", outcome.report.epochs_jsonl());
    write_text(out / "summary.json", outcome.report.summary().dump(2) + "\n");
    save_checkpoint(out / "checkpoint.bin", outcome.model.parameters(), checkpoint_metadata(config, data));
    return outcome.report;
}

std::size_t GridSpec::size() const {
    std::size_t n = 1;
    for (const auto& [_, values] : axes) n *= values.size();
    return n;
}

std::vector<TrainConfig> GridSpec::expand() const {
    if (size() == 0) throw ConfigError("grid has an empty axis");
    std::vector<TrainConfig> configs;
    configs.reserve(size());
    const json base_json = base.to_json();
    std::vector<std::size_t> pos(axes.size(), 0);
    while (true) {
        json j = base_json;
        for (std::size_t a = 0; a < axes.size(); ++a) j[axes[a].first] = axes[a].second[pos[a]];
        configs.push_back(TrainConfig::from_json(j));
        // odometer increment, last axis fastest
        std::size_t a = axes.size();
        while (a > 0) {
            --a;
            if (++pos[a] < axes[a].second.size()) break;
            pos[a] = 0;
            if (a == 0) return configs;
        }
        if (axes.empty()) return configs;
    }
}

GridSpec GridSpec::from_json(const json& j) {
    GridSpec spec;
    spec.base = TrainConfig::from_json(j.value("base", json::object()));
    if (j.contains("axes")) {
        for (const auto& [name, values] : j.at("axes").items()) {
            if (!kConfigKeys.count(name)) throw ConfigError("unknown grid axis '" + name + "'");
            if (!values.is_array() || values.empty()) throw ConfigError("grid axis '" + name + "' must be a non-empty list");
            spec.axes.emplace_back(name, std::vector<json>(values.begin(), values.end()));
        }
    }
    return spec;
}

GridSpec GridSpec::standard(const TrainConfig& base) {
    GridSpec spec;
    spec.base = base;
    spec.base.grid_mode = true;
    spec.axes = {
        {"window_sizes", {json::array({1}), json::array({2}), json::array({3}), json::array({1, 2, 3})}},
        {"n_filters", {50, 100, 150}},
        {"fc_layers", {1, 2, 3, 4}},
        {"alpha", {0.1, 0.3, 0.5, 0.7, 0.9}},
        {"learning_rate", {0.1, 0.01, 0.001, 0.0001}},
    };
    return spec;
}

GridResult grid_search(const PreparedData& data, const GridSpec& grid, std::size_t threads) {
    auto configs = grid.expand();
    GridResult result;
    result.entries.resize(configs.size());

    std::mutex best_mutex;
    std::optional<TrainOutcome> best;
    std::size_t best_index = 0;
    double best_val = std::numeric_limits<double>::infinity();

    auto run = [&](std::size_t i) {
        GridEntry entry{configs[i], std::numeric_limits<double>::infinity(), {}};
        try {
            TrainOutcome outcome = train(configs[i], data, TrainOptions{false, {}});
            double val = outcome.report.best_val_mae.value_or(std::numeric_limits<double>::infinity());
            if (!std::isfinite(val)) val = std::numeric_limits<double>::infinity();
            entry.val_mae = val;
            std::lock_guard lock(best_mutex);
            // ties resolve to the earlier grid position regardless of scheduling
            if (!best || val < best_val || (val == best_val && i < best_index)) {
                best.emplace(std::move(outcome));
                best_val = val;
                best_index = i;
            }
        } catch (const NumericError& e) {
            entry.error = e.what();
        }
        result.entries[i] = std::move(entry);
    };

    if (threads <= 1) {
        for (std::size_t i = 0; i < configs.size(); ++i) run(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        for (std::size_t t = 0; t < std::min(threads, configs.size()); ++t) {
            workers.emplace_back([&]() {
                for (std::size_t i = next++; i < configs.size(); i = next++) run(i);
            });
        }
        for (auto& w : workers) w.join();
    }

    if (!best) throw NumericError("every grid configuration diverged");
    result.best_index = best_index;
    result.best_report = best->report;
    const auto test_examples = to_examples(data.splits.test);
    if (!test_examples.empty()) {
        DocumentSource docs(data.splits.train, data.vocab, configs[best_index].model.limits);
        result.best_report.test_mae =
            evaluate_mae(best->model, test_examples, docs, configs[best_index].clip_predictions);
    }
    return result;
}

std::vector<AblationRow> run_ablation(const PreparedData& data, const TrainConfig& base) {
    if (data.splits.test.empty()) throw ConfigError("ablation needs a non-empty test split");
    std::vector<AblationRow> rows;
    for (Variant v : {Variant::ConvQuant, Variant::ConvMutual, Variant::Full}) {
        TrainConfig cfg = base;
        cfg.model.variant = v;
        TrainOutcome outcome = train(cfg, data);
        rows.push_back({v, cfg.model.representation_size(), *outcome.report.test_mae, outcome.report.best_val_mae});
    }
    return rows;
}

}  // namespace conqar
