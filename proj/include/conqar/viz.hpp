#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "conqar/corpus.hpp"
#include "conqar/density.hpp"
#include "conqar/tensor.hpp"

namespace conqar {

// Rows of comma-separated values, no header, full double precision.
std::string matrix_csv(const Tensor& matrix);
Tensor parse_matrix_csv(std::string_view text);

// One rect per cell; darker means larger. Scale bounds are the data min/max.
std::string heatmap_svg(const Tensor& matrix, std::size_t cell_px = 8);

struct HeatmapFiles {
    std::filesystem::path csv;
    std::filesystem::path svg;
};

// Writes <stem>.csv and <stem>.svg.
HeatmapFiles export_density_heatmap(const DensityMatrix& rho, const std::filesystem::path& stem);

struct Highlight {
    std::size_t position = 0;
    double weight = 0.0;
};

// Top-k positions by p, skipping PAD and DELIM tokens; ties go to the earlier position.
std::vector<Highlight> top_k_positions(std::span<const std::int32_t> token_ids, std::span<const double> p, int k);

struct HighlightFiles {
    std::filesystem::path html;
    std::filesystem::path txt;
};

std::string highlight_html(const DocumentRow& doc, const Vocabulary& vocab, std::span<const Highlight> highlights);
std::string highlight_text(const DocumentRow& doc, const Vocabulary& vocab, std::span<const Highlight> highlights);

// Writes <stem>.html and <stem>.txt.
HighlightFiles export_position_highlights(const DocumentRow& doc, const Vocabulary& vocab, const Tensor& p, int k,
                                          const std::filesystem::path& stem);

}  // namespace conqar
