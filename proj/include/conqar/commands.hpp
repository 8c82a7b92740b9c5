#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "conqar/trainer.hpp"
#include "conqar/viz.hpp"

namespace conqar {

enum class Split { Train, Validation, Test };

Split parse_split(std::string_view name);
const std::vector<ReviewRecord>& split_records(const PreparedData& data, Split split);

struct LoadedCheckpoint {
    TrainConfig config;
    PreparedData data;
    Model model;
};

// Resolves the data directory from the checkpoint metadata unless data_dir is given.
LoadedCheckpoint load_checkpoint_with_data(const std::filesystem::path& checkpoint,
                                           const std::optional<std::filesystem::path>& data_dir = {});

// Leakage-free MAE of a saved model on one split.
double evaluate_checkpoint(LoadedCheckpoint& loaded, Split split);

struct PairVisuals {
    HeatmapFiles user_heatmap;
    HeatmapFiles item_heatmap;
    HighlightFiles user_highlights;
    HighlightFiles item_highlights;
};

// Density heatmaps and top-k position highlights for one user and one item.
// ConfigError for the conv_mutual variant, which has no density matrices.
PairVisuals export_pair_visuals(LoadedCheckpoint& loaded, const std::string& user, const std::string& item,
                                const std::filesystem::path& out_dir, int k = 20);

}  // namespace conqar
