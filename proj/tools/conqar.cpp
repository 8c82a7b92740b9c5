#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "conqar/commands.hpp"
#include "conqar/errors.hpp"

using namespace conqar;
using nlohmann::json;

namespace {

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

json null_or(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Review-based rating prediction with density-matrix review encoders"};
    app.require_subcommand(1);

    std::string input, format = "amazon", out, config_path, data, grid_path, checkpoint, split = "test";
    std::string user, item;
    std::uint64_t seed = 42;
    std::size_t min_count = 1, threads = 1;
    int k = 20;
    DocumentLimits limits;

    auto* prepare = app.add_subcommand("prepare", "Parse a review dump, split it and build the vocabulary");
    prepare->add_option("--input", input, "Review file")->required()->check(CLI::ExistingFile);
    prepare->add_option("--format", format, "amazon, yelp or tsv")->check(CLI::IsMember({"amazon", "yelp", "tsv"}));
    prepare->add_option("--out", out, "Output directory")->required();
    prepare->add_option("--seed", seed, "Split seed");
    prepare->add_option("--min-count", min_count, "Minimum token count for the vocabulary");
    prepare->add_option("--max-review-words", limits.max_review_words, "Words kept per review");
    prepare->add_option("--max-reviews", limits.max_reviews, "Reviews kept per document");

    auto* train_cmd = app.add_subcommand("train", "Train one configuration");
    train_cmd->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--data", data, "Prepared data directory")->required()->check(CLI::ExistingDirectory);
    train_cmd->add_option("--out", out, "Output directory")->required();

    auto* grid_cmd = app.add_subcommand("grid", "Grid search on validation MAE");
    grid_cmd->add_option("--grid", grid_path, "JSON grid file")->required()->check(CLI::ExistingFile);
    grid_cmd->add_option("--data", data, "Prepared data directory")->required()->check(CLI::ExistingDirectory);
    grid_cmd->add_option("--threads", threads, "Configurations trained concurrently");

    auto* ablate_cmd = app.add_subcommand("ablate", "Compare the conv_quant, conv_mutual and full variants");
    ablate_cmd->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
    ablate_cmd->add_option("--data", data, "Prepared data directory")->required()->check(CLI::ExistingDirectory);

    auto* eval_cmd = app.add_subcommand("eval", "MAE of a checkpoint on a split");
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint.bin")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--split", split, "train, validation or test");
    eval_cmd->add_option("--data", data, "Prepared data directory (default: from checkpoint)");

    auto* viz_cmd = app.add_subcommand("viz", "Density heatmaps and position highlights for a user/item pair");
    viz_cmd->add_option("--checkpoint", checkpoint, "checkpoint.bin")->required()->check(CLI::ExistingFile);
    viz_cmd->add_option("--user", user, "User id")->required();
    viz_cmd->add_option("--item", item, "Item id")->required();
    viz_cmd->add_option("--out", out, "Output directory")->required();
    viz_cmd->add_option("--k", k, "Highlighted positions per document");
    viz_cmd->add_option("--data", data, "Prepared data directory (default: from checkpoint)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (prepare->parsed()) {
            PrepareOptions options;
            options.format = parse_dataset_format(format);
            options.seed = seed;
            options.min_count = min_count;
            options.limits = limits;
            auto s = prepare_directory(input, out, options);
            std::cout << json{{"records", s.records}, {"malformed", s.malformed}, {"users", s.users},
                              {"items", s.items},     {"vocab_size", s.vocab_size}, {"train", s.train},
                              {"validation", s.validation}, {"test", s.test}}
                             .dump()
                      << "\n";
        } else if (train_cmd->parsed()) {
            auto config = TrainConfig::from_file(config_path);
            auto report = train_to_directory(config, load_prepared(data), out);
            std::cout << report.epochs_jsonl() << report.summary().dump() << "\n";
        } else if (grid_cmd->parsed()) {
            json j = read_json(grid_path);
            GridSpec spec = j.value("standard", false)
                                ? GridSpec::standard(TrainConfig::from_json(j.value("base", json::object())))
                                : GridSpec::from_json(j);
            auto result = grid_search(load_prepared(data), spec, threads);
            for (std::size_t i = 0; i < result.entries.size(); ++i) {
                const auto& e = result.entries[i];
                json rec{{"index", i}, {"config", e.config.to_json()}};
                rec["val_mae"] = std::isfinite(e.val_mae) ? json(e.val_mae) : json(nullptr);
                if (!e.error.empty()) rec["error"] = e.error;
                std::cout << rec.dump() << "\n";
            }
            json summary = result.best_report.summary();
            summary["best_index"] = result.best_index;
            std::cout << summary.dump() << "\n";
        } else if (ablate_cmd->parsed()) {
            auto rows = run_ablation(load_prepared(data), TrainConfig::from_file(config_path));
            for (const auto& r : rows) {
                std::cout << json{{"variant", std::string(to_string(r.variant))},
                                  {"representation_size", r.representation_size},
                                  {"test_mae", r.test_mae},
                                  {"val_mae", null_or(r.val_mae)}}
                                 .dump()
                          << "\n";
            }
        } else if (eval_cmd->parsed()) {
            std::optional<std::filesystem::path> dir;
            if (!data.empty()) dir = data;
            auto loaded = load_checkpoint_with_data(checkpoint, dir);
            const double mae = evaluate_checkpoint(loaded, parse_split(split));
            std::cout << json{{"split", split}, {"mae", mae}}.dump() << "\n";
        } else if (viz_cmd->parsed()) {
            std::optional<std::filesystem::path> dir;
            if (!data.empty()) dir = data;
            auto loaded = load_checkpoint_with_data(checkpoint, dir);
            auto files = export_pair_visuals(loaded, user, item, out, k);
            std::cout << json{{"user_csv", files.user_heatmap.csv.string()},
                              {"user_svg", files.user_heatmap.svg.string()},
                              {"item_csv", files.item_heatmap.csv.string()},
                              {"item_svg", files.item_heatmap.svg.string()},
                              {"user_html", files.user_highlights.html.string()},
                              {"item_html", files.item_highlights.html.string()}}
                             .dump()
                      << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
