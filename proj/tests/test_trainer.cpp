#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "conqar/errors.hpp"
#include "conqar/trainer.hpp"
#include "support/toy_corpus.hpp"

using namespace conqar;
using nlohmann::json;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "conqar_trainer_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

TrainConfig quick_config() {
    auto c = toy::toy_config();
    c.epochs = 20;
    c.track_train_mse = false;
    return c;
}

}  // namespace

TEST(Metrics, MaeExamples) {
    const std::vector<double> same{3.0, 4.0, 1.5};
    EXPECT_EQ(mean_absolute_error(same, same), 0.0);
    const std::vector<double> pred{4.0, 2.0}, truth{5.0, 1.0};
    EXPECT_EQ(mean_absolute_error(pred, truth), 1.0);
    EXPECT_THROW(mean_absolute_error({}, {}), ConfigError);
    EXPECT_THROW(mean_absolute_error(pred, same), DimensionError);
}

TEST(Metrics, MaeIsOrderInvariant) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(1.0, 5.0);
    std::vector<std::pair<double, double>> pairs(50);
    for (auto& [p, t] : pairs) p = u(rng), t = u(rng);
    auto mae = [&] {
        std::vector<double> p, t;
        for (auto& [a, b] : pairs) p.push_back(a), t.push_back(b);
        return mean_absolute_error(p, t);
    };
    const double base = mae();
    std::shuffle(pairs.begin(), pairs.end(), rng);
    EXPECT_NEAR(mae(), base, 1e-12);
}

TEST(Metrics, EvaluateMaeRequiresExamples) {
    auto data = toy::planted_data();
    auto config = quick_config();
    DocumentSource docs(data.splits.train, data.vocab, config.model.limits);
    Model model(config.model, data.vocab.size(), docs.owners(Side::User), docs.owners(Side::Item), 1);
    EXPECT_THROW(evaluate_mae(model, {}, docs), ConfigError);
    const auto examples = to_examples(data.splits.test);
    auto forward = evaluate_mae(model, examples, docs);
    auto reversed = examples;
    std::reverse(reversed.begin(), reversed.end());
    EXPECT_NEAR(evaluate_mae(model, reversed, docs), forward, 1e-12);
}

TEST(Config, JsonRoundTripAndValidation) {
    auto config = quick_config();
    config.model.variant = Variant::ConvQuant;
    config.model.dist_mode = DistMode::Free;
    auto j = config.to_json();
    auto back = TrainConfig::from_json(j);
    EXPECT_EQ(back.to_json(), j);

    EXPECT_THROW(TrainConfig::from_json(json{{"alpha", 1.5}}), ConfigError);
    EXPECT_THROW(TrainConfig::from_json(json{{"learning_rate", 0.0}}), ConfigError);
    EXPECT_THROW(TrainConfig::from_json(json{{"variant", "conv_magic"}}), ConfigError);
    EXPECT_THROW(TrainConfig::from_json(json{{"no_such_key", 1}}), ConfigError);
    EXPECT_THROW(TrainConfig::from_json(json{{"n_filters", "many"}}), ConfigError);

    // manual mode accepts free values, grid mode does not
    EXPECT_NO_THROW(TrainConfig::from_json(json{{"n_filters", 7}, {"alpha", 0.25}}));
    EXPECT_THROW(TrainConfig::from_json(json{{"grid_mode", true}, {"n_filters", 7}}), ConfigError);
    EXPECT_THROW(TrainConfig::from_json(json{{"grid_mode", true}, {"window_sizes", {1, 2}}}), ConfigError);
    EXPECT_NO_THROW(TrainConfig::from_json(
        json{{"grid_mode", true}, {"window_sizes", {1, 2, 3}}, {"n_filters", 50}, {"alpha", 0.3}, {"learning_rate", 0.01}}));
}

TEST(Train, DeterministicMetricsAndCheckpoint) {
    auto data = toy::planted_split();
    auto config = quick_config();
    config.model.dropout = 0.3;
    config.track_train_mse = true;
    auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
    train_to_directory(config, data, a);
    train_to_directory(config, data, b);
    EXPECT_EQ(slurp(a / "metrics.jsonl"), slurp(b / "metrics.jsonl"));
    EXPECT_EQ(slurp(a / "summary.json"), slurp(b / "summary.json"));
    EXPECT_EQ(slurp(a / "checkpoint.bin"), slurp(b / "checkpoint.bin"));

    config.seed += 1;
    auto c = fresh_dir("det_c");
    train_to_directory(config, data, c);
    EXPECT_NE(slurp(a / "checkpoint.bin"), slurp(c / "checkpoint.bin"));
}

TEST(Train, MetricsRecordEveryEpochAndTestOnce) {
    auto data = toy::planted_split();
    auto config = quick_config();
    std::size_t calls = 0;
    auto outcome = train(config, data, {true, [&](const EpochMetrics&) { ++calls; }});
    EXPECT_EQ(calls, outcome.report.epochs.size());
    ASSERT_TRUE(outcome.report.test_mae.has_value());
    ASSERT_TRUE(outcome.report.best_val_mae.has_value());
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : outcome.report.epochs) best = std::min(best, *e.val_mae);
    EXPECT_EQ(*outcome.report.best_val_mae, best);
    EXPECT_EQ(*outcome.report.epochs[outcome.report.best_epoch - 1].val_mae, best);

    // the returned model is the best-validation snapshot
    DocumentSource docs(data.splits.train, data.vocab, config.model.limits);
    EXPECT_EQ(evaluate_mae(outcome.model, to_examples(data.splits.validation), docs), best);

    std::istringstream lines(outcome.report.epochs_jsonl());
    std::string line;
    std::size_t count = 0;
    while (std::getline(lines, line)) {
        auto rec = json::parse(line);
        EXPECT_EQ(rec.at("epoch").get<std::size_t>(), ++count);
        EXPECT_TRUE(rec.contains("val_mae"));
        EXPECT_TRUE(rec.contains("train_loss"));
    }
    EXPECT_EQ(count, outcome.report.epochs.size());

    auto no_test = train(config, data, {false, {}});
    EXPECT_FALSE(no_test.report.test_mae.has_value());
}

TEST(Train, EarlyStopping) {
    auto data = toy::planted_split();
    auto config = quick_config();
    config.epochs = 200;
    config.patience = 2;
    config.learning_rate = 0.01;
    auto outcome = train(config, data, {false, {}});
    ASSERT_TRUE(outcome.report.early_stopped);
    EXPECT_EQ(outcome.report.epochs.size(), outcome.report.best_epoch + 2);
}

TEST(Train, DivergenceNamesTensor) {
    auto data = toy::planted_data();
    auto config = quick_config();
    config.optimizer = OptimizerKind::Sgd;
    config.learning_rate = 1e12;
    config.alpha = 0.5;
    try {
        train(config, data);
        FAIL() << "expected divergence";
    } catch (const NumericError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("first non-finite tensor is"), std::string::npos) << what;
    }
}

TEST(Train, EmptyTrainingSplit) {
    PreparedData data;
    EXPECT_THROW(train(quick_config(), data), ConfigError);
}

TEST(Train, VocabularyAndDocumentsUseTrainingSplitOnly) {
    auto data = toy::planted_split();
    for (auto& r : data.splits.test) r.text += " testonlytoken";
    for (auto& r : data.splits.validation) r.text += " validationonlytoken";
    data.vocab = Vocabulary::build(data.splits.train);
    EXPECT_EQ(data.vocab.lookup("testonlytoken"), Vocabulary::kUnk);
    DocumentSource docs(data.splits.train, data.vocab, quick_config().model.limits);
    std::set<std::string> train_ids;
    for (const auto& r : data.splits.train) train_ids.insert(r.review_id);
    for (Side side : {Side::User, Side::Item}) {
        for (const auto& owner : docs.owners(side)) {
            for (const auto& src : docs.training_document(side, owner).sources) EXPECT_TRUE(train_ids.count(src));
        }
    }
}

TEST(Evaluation, ExcludesTargetReview) {
    auto data = toy::planted_split();
    auto config = quick_config();
    DocumentSource docs(data.splits.train, data.vocab, config.model.limits);
    const auto& r = data.splits.train.front();
    EXPECT_TRUE(docs.contains(Side::User, r.user_id, r.review_id));
    auto doc = docs.evaluation_document(Side::User, r.user_id, r.review_id);
    EXPECT_EQ(std::count(doc.sources.begin(), doc.sources.end(), r.review_id), 0);

    // evaluating a training example equals evaluating it with its review removed from the corpus
    Model model(config.model, data.vocab.size(), docs.owners(Side::User), docs.owners(Side::Item), 1);
    const std::vector<RatingExample> one{to_examples(data.splits.train).front()};
    const double with_exclusion = predict_examples(model, one, docs).front();
    Tape tape(Tape::Mode::NoGrad);
    auto u = model.encode(tape, docs.evaluation_document(Side::User, r.user_id, r.review_id), Side::User, r.user_id);
    auto v = model.encode(tape, docs.evaluation_document(Side::Item, r.item_id, r.review_id), Side::Item, r.item_id);
    EXPECT_EQ(with_exclusion, model.pair(tape, u, v, false).prediction.item());
}

TEST(Evaluation, ClipOnlyWhenRequested) {
    auto data = toy::planted_data();
    auto config = quick_config();
    DocumentSource docs(data.splits.train, data.vocab, config.model.limits);
    Model model(config.model, data.vocab.size(), docs.owners(Side::User), docs.owners(Side::Item), 1);
    model.set_output_bias(9.0);
    const auto examples = to_examples(data.splits.test);
    for (double y : predict_examples(model, examples, docs, false)) EXPECT_GT(y, 5.0);
    for (double y : predict_examples(model, examples, docs, true)) EXPECT_EQ(y, 5.0);
}

TEST(Checkpoint, ReloadedModelPredictsIdentically) {
    auto data = toy::planted_split();
    auto config = quick_config();
    auto dir = fresh_dir("reload");
    data.directory = dir;
    train_to_directory(config, data, dir);
    auto ckpt = load_checkpoint(dir / "checkpoint.bin");
    EXPECT_EQ(config_from_checkpoint(ckpt).to_json(), config.to_json());
    auto meta = json::parse(ckpt.metadata);
    EXPECT_EQ(meta.at("vocab").at("size").get<std::size_t>(), data.vocab.size());
    Model reloaded = model_from_checkpoint(ckpt);
    auto outcome = train(config, data);
    DocumentSource docs(data.splits.train, data.vocab, config.model.limits);
    const auto examples = to_examples(data.splits.test);
    EXPECT_EQ(predict_examples(reloaded, examples, docs), predict_examples(outcome.model, examples, docs));
}

TEST(Prepare, DirectoryRoundTrip) {
    auto dir = fresh_dir("prepare");
    std::ofstream input(dir / "reviews.tsv");
    for (const auto& r : toy::planted_records(5, 6, 6))
        input << r.user_id << '\t' << r.item_id << '\t' << r.rating << '\t' << r.text << '\n';
    input.close();
    PrepareOptions options;
    options.format = DatasetFormat::Tsv;
    options.limits = {6, 4};
    auto summary = prepare_directory(dir / "reviews.tsv", dir / "out", options);
    EXPECT_EQ(summary.records, 36u);
    EXPECT_EQ(summary.users, 6u);
    EXPECT_EQ(summary.train + summary.validation + summary.test, 36u);
    for (const char* f : {"vocab.json", "train.jsonl", "validation.jsonl", "test.jsonl", "user_docs.bin",
                          "item_docs.bin", "prepare.json"})
        EXPECT_TRUE(std::filesystem::exists(dir / "out" / f)) << f;
    auto data = load_prepared(dir / "out");
    EXPECT_EQ(data.splits.train.size(), summary.train);
    EXPECT_EQ(data.vocab, Vocabulary::build(data.splits.train));
}

TEST(Grid, StandardGridSize) {
    auto grid = GridSpec::standard(quick_config());
    EXPECT_EQ(grid.size(), 960u);
    auto configs = grid.expand();
    EXPECT_EQ(configs.size(), 960u);
    std::set<std::string> distinct;
    for (const auto& c : configs) distinct.insert(c.to_json().dump());
    EXPECT_EQ(distinct.size(), 960u);
}

TEST(Grid, SingleConfig) {
    auto data = toy::planted_split();
    GridSpec grid;
    grid.base = quick_config();
    auto result = grid_search(data, grid);
    ASSERT_EQ(result.entries.size(), 1u);
    EXPECT_EQ(result.best_index, 0u);
    EXPECT_EQ(result.entries[0].config.to_json(), grid.base.to_json());
    EXPECT_TRUE(result.best_report.test_mae.has_value());
}

TEST(Grid, SabotagedConfigLoses) {
    auto data = toy::planted_split();
    GridSpec grid;
    grid.base = quick_config();
    grid.base.optimizer = OptimizerKind::Sgd;
    grid.axes = {{"learning_rate", {json(1e9), json(1e-3)}}};
    auto result = grid_search(data, grid);
    EXPECT_EQ(result.best_index, 1u);
    EXPECT_TRUE(std::isinf(result.entries[0].val_mae));
    EXPECT_FALSE(result.entries[0].error.empty());
}

TEST(Grid, ParallelMatchesSequential) {
    auto data = toy::planted_split();
    GridSpec grid;
    grid.base = quick_config();
    grid.base.epochs = 5;
    grid.axes = {{"n_filters", {json(3), json(6)}}, {"alpha", {json(0.1), json(0.5)}}};
    auto seq = grid_search(data, grid, 1);
    auto par = grid_search(data, grid, 3);
    ASSERT_EQ(seq.entries.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(seq.entries[i].val_mae, par.entries[i].val_mae);
    EXPECT_EQ(seq.best_index, par.best_index);
    EXPECT_EQ(seq.best_report.epochs_jsonl(), par.best_report.epochs_jsonl());
    EXPECT_EQ(seq.best_report.test_mae, par.best_report.test_mae);
}

TEST(Grid, FromJson) {
    auto spec = GridSpec::from_json(json{{"base", {{"epochs", 3}}}, {"axes", {{"alpha", {0.1, 0.9}}}}});
    EXPECT_EQ(spec.size(), 2u);
    EXPECT_EQ(spec.expand()[1].alpha, 0.9);
    EXPECT_EQ(spec.expand()[0].epochs, 3u);
    EXPECT_THROW(GridSpec::from_json(json{{"axes", {{"bogus", {1}}}}}), ConfigError);
    EXPECT_THROW(GridSpec::from_json(json{{"axes", {{"alpha", json::array()}}}}), ConfigError);
}

TEST(Ablation, ThreeVariantsFinite) {
    auto data = toy::planted_data();
    auto config = quick_config();
    auto rows = run_ablation(data, config);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].variant, Variant::ConvQuant);
    EXPECT_EQ(rows[1].variant, Variant::ConvMutual);
    EXPECT_EQ(rows[2].variant, Variant::Full);
    EXPECT_EQ(rows[0].representation_size, config.model.n_filters + 1);
    EXPECT_EQ(rows[2].representation_size, 3 * config.model.n_filters + 1);
    for (const auto& r : rows) EXPECT_TRUE(std::isfinite(r.test_mae));
}
