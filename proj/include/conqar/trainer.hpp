#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conqar/corpus.hpp"
#include "conqar/model.hpp"

namespace conqar {

struct TrainConfig {
    ModelConfig model;
    double alpha = 0.5;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::Adam;
    std::size_t batch_size = 32;
    std::size_t epochs = 50;
    // Epochs without validation improvement before stopping; 0 disables.
    std::size_t patience = 5;
    std::uint64_t seed = 42;
    // When set, validate() also requires every searched value to lie on the standard grid.
    bool grid_mode = false;
    // Clamp predictions to [1, 5] during evaluation only.
    bool clip_predictions = false;
    // Start the output bias at the mean training rating.
    bool init_output_bias_to_mean = true;
    // Record full-pass training MSE after each epoch (one extra pass).
    bool track_train_mse = false;
    std::string pretrained_embeddings;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    static TrainConfig from_file(const std::filesystem::path& path);
};

/// A rating to predict, identified by its review.
struct RatingExample {
    std::string review_id;
    std::string user_id;
    std::string item_id;
    double rating = 0.0;
};

std::vector<RatingExample> to_examples(std::span<const ReviewRecord> records);

/// Vocabulary plus splits: everything training needs.
struct PreparedData {
    Vocabulary vocab;
    DatasetSplits splits;
    std::filesystem::path directory;  // empty for in-memory data
};

struct PrepareOptions {
    DatasetFormat format = DatasetFormat::AmazonJsonLines;
    SplitRatios ratios;
    std::uint64_t seed = 42;
    std::size_t min_count = 1;
    DocumentLimits limits;
};

struct PrepareSummary {
    std::size_t records = 0;
    std::size_t malformed = 0;
    std::size_t users = 0;
    std::size_t items = 0;
    std::size_t vocab_size = 0;
    std::size_t train = 0, validation = 0, test = 0;
};

PreparedData prepare_data(std::span<const ReviewRecord> records, const PrepareOptions& options);
// Writes vocab.json, {train,validation,test}.jsonl, {user,item}_docs.bin and prepare.json.
PrepareSummary prepare_directory(const std::filesystem::path& input, const std::filesystem::path& out,
                                 const PrepareOptions& options);
PreparedData load_prepared(const std::filesystem::path& dir);

/// Documents for training (cached per owner) and evaluation (target review excluded).
class DocumentSource {
public:
    DocumentSource(std::span<const ReviewRecord> train, const Vocabulary& vocab, DocumentLimits limits);

    const DocumentRow& training_document(Side side, const std::string& owner);
    DocumentRow evaluation_document(Side side, const std::string& owner, const std::string& exclude) const;
    // True when the owner's training document contains the review.
    bool contains(Side side, const std::string& owner, const std::string& review_id) const;
    const ReviewIndex& index() const { return index_; }
    std::vector<std::string> owners(Side side) const { return index_.owners(side); }

private:
    ReviewIndex index_;
    const Vocabulary* vocab_;
    DocumentLimits limits_;
    std::map<std::pair<int, std::string>, DocumentRow> cache_;
};

double mean_absolute_error(std::span<const double> predictions, std::span<const double> truths);
double mean_squared_error(std::span<const double> predictions, std::span<const double> truths);

// Dropout off; each example's documents exclude its own review.
std::vector<double> predict_examples(Model& model, std::span<const RatingExample> examples, DocumentSource& docs,
                                     bool clip = false);
double evaluate_mae(Model& model, std::span<const RatingExample> examples, DocumentSource& docs, bool clip = false);
// MSE on training examples fed their training documents (the fit objective's inputs).
double evaluate_training_mse(Model& model, std::span<const RatingExample> examples, DocumentSource& docs);

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_rating_loss = 0.0;
    double train_trace_loss = 0.0;
    std::optional<double> train_mse;
    std::optional<double> val_mae;
};

struct MetricsReport {
    std::vector<EpochMetrics> epochs;
    std::size_t best_epoch = 0;
    std::optional<double> best_val_mae;
    std::optional<double> test_mae;
    bool early_stopped = false;
    nlohmann::json config;

    std::string epochs_jsonl() const;
    nlohmann::json summary() const;
};

struct TrainOptions {
    bool evaluate_test = true;
    std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainOutcome {
    MetricsReport report;
    Model model;  // parameters of the best-validation epoch
};

// Throws NumericError naming the first non-finite tensor if training diverges.
TrainOutcome train(const TrainConfig& config, const PreparedData& data, const TrainOptions& options = {});

std::string checkpoint_metadata(const TrainConfig& config, const PreparedData& data);
Model model_from_checkpoint(const Checkpoint& checkpoint);
TrainConfig config_from_checkpoint(const Checkpoint& checkpoint);

// Writes metrics.jsonl, summary.json and checkpoint.bin into out.
MetricsReport train_to_directory(const TrainConfig& config, const PreparedData& data,
                                 const std::filesystem::path& out);

/// Base config plus per-field value lists; the grid is their Cartesian product.
struct GridSpec {
    TrainConfig base;
    std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;

    std::size_t size() const;
    std::vector<TrainConfig> expand() const;
    static GridSpec from_json(const nlohmann::json& j);
    static GridSpec standard(const TrainConfig& base);
};

struct GridEntry {
    TrainConfig config;
    double val_mae = 0.0;  // +inf for failed runs
    std::string error;
};

struct GridResult {
    std::vector<GridEntry> entries;
    std::size_t best_index = 0;
    MetricsReport best_report;  // only this report carries a test MAE
};

// threads > 1 trains independent configurations concurrently.
GridResult grid_search(const PreparedData& data, const GridSpec& grid, std::size_t threads = 1);

struct AblationRow {
    Variant variant;
    std::size_t representation_size = 0;
    double test_mae = 0.0;
    std::optional<double> val_mae;
};

std::vector<AblationRow> run_ablation(const PreparedData& data, const TrainConfig& base);

}  // namespace conqar
