#include "conqar/viz.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "conqar/errors.hpp"

namespace conqar {

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("error writing " + path.string());
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
    return std::filesystem::path(stem.string() + suffix);
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string escape_html(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string matrix_csv(const Tensor& matrix) {
    if (matrix.rank() != 2) throw DimensionError("matrix_csv: expected a matrix, got " + shape_string(matrix.shape()));
    std::string out;
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        for (std::size_t c = 0; c < matrix.cols(); ++c) {
            if (c) out += ',';
            out += format_double(matrix.at(r, c));
        }
        out += '\n';
    }
    return out;
}

Tensor parse_matrix_csv(std::string_view text) {
    std::vector<double> values;
    std::size_t rows = 0, cols = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t count = 0;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(cell, &used));
                if (used != cell.size()) throw FormatError("bad CSV cell '" + cell + "'");
            } catch (const std::logic_error&) {
                throw FormatError("bad CSV cell '" + cell + "'");
            }
            ++count;
        }
        if (rows == 0) cols = count;
        else if (count != cols) throw FormatError("ragged CSV row " + std::to_string(rows));
        ++rows;
    }
    return Tensor::matrix(rows, cols, std::move(values));
}

std::string heatmap_svg(const Tensor& matrix, std::size_t cell_px) {
    if (matrix.rank() != 2) throw DimensionError("heatmap_svg: expected a matrix, got " + shape_string(matrix.shape()));
    if (!matrix.all_finite()) throw NumericError("heatmap_svg: matrix has non-finite values");
    const auto values = matrix.data();
    double lo = 0.0, hi = 0.0;
    if (!values.empty()) {
        auto [mn, mx] = std::minmax_element(values.begin(), values.end());
        lo = *mn;
        hi = *mx;
    }
    const std::size_t w = matrix.cols() * cell_px, h = matrix.rows() * cell_px;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" data-min=\""
        << format_double(lo) << "\" data-max=\"" << format_double(hi) << "\">\n";
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        for (std::size_t c = 0; c < matrix.cols(); ++c) {
            const double t = hi > lo ? (matrix.at(r, c) - lo) / (hi - lo) : 0.0;
            const int gray = 255 - static_cast<int>(std::lround(255.0 * t));
            svg << "<rect x=\"" << c * cell_px << "\" y=\"" << r * cell_px << "\" width=\"" << cell_px
                << "\" height=\"" << cell_px << "\" fill=\"rgb(" << gray << ',' << gray << ',' << gray << ")\"/>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

HeatmapFiles export_density_heatmap(const DensityMatrix& rho, const std::filesystem::path& stem) {
    if (!rho.values.all_finite()) throw NumericError("density matrix '" + rho.owner_id + "' has non-finite values");
    HeatmapFiles files{with_suffix(stem, ".csv"), with_suffix(stem, ".svg")};
    write_file(files.csv, matrix_csv(rho.values));
    write_file(files.svg, heatmap_svg(rho.values));
    return files;
}

std::vector<Highlight> top_k_positions(std::span<const std::int32_t> token_ids, std::span<const double> p, int k) {
    if (k <= 0) throw ConfigError("k must be positive");
    if (token_ids.size() != p.size()) {
        throw DimensionError("document has " + std::to_string(token_ids.size()) + " positions but p has " +
                             std::to_string(p.size()));
    }
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < token_ids.size(); ++i)
        if (token_ids[i] != Vocabulary::kPad && token_ids[i] != Vocabulary::kDelim) candidates.push_back(i);
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    candidates.resize(std::min(candidates.size(), static_cast<std::size_t>(k)));
    std::vector<Highlight> out;
    for (auto i : candidates) out.push_back({i, p[i]});
    return out;
}

std::string highlight_html(const DocumentRow& doc, const Vocabulary& vocab, std::span<const Highlight> highlights) {
    double top = 0.0;
    for (const auto& h : highlights) top = std::max(top, h.weight);
    std::vector<int> rank(doc.token_ids.size(), -1);
    for (std::size_t r = 0; r < highlights.size(); ++r) rank[highlights[r].position] = static_cast<int>(r);

    std::ostringstream html;
    html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"></head><body>\n<p>";
    bool first = true;
    for (std::size_t i = 0; i < doc.token_ids.size(); ++i) {
        const auto id = doc.token_ids[i];
        if (id == Vocabulary::kPad) continue;
        if (id == Vocabulary::kDelim) {
            if (!first) html << "</p>\n<p>";
            first = true;
            continue;
        }
        if (!first) html << ' ';
        first = false;
        const std::string word = escape_html(vocab.token(id));
        if (rank[i] < 0) {
            html << word;
            continue;
        }
        const double t = top > 0.0 ? highlights[rank[i]].weight / top : 1.0;
        const int blue = 255 - static_cast<int>(std::lround(200.0 * t));
        html << "<span style=\"background-color:rgb(255,255," << blue << ")\" data-rank=\"" << rank[i] + 1
             << "\" data-p=\"" << format_double(highlights[rank[i]].weight) << "\">" << word << "</span>";
    }
    html << "</p>\n</body></html>\n";
    return html.str();
}

std::string highlight_text(const DocumentRow& doc, const Vocabulary& vocab, std::span<const Highlight> highlights) {
    std::set<std::size_t> marked;
    for (const auto& h : highlights) marked.insert(h.position);
    std::string out;
    bool line_start = true;
    for (std::size_t i = 0; i < doc.token_ids.size(); ++i) {
        const auto id = doc.token_ids[i];
        if (id == Vocabulary::kPad) continue;
        if (id == Vocabulary::kDelim) {
            if (!line_start) out += '\n';
            line_start = true;
            continue;
        }
        if (!line_start) out += ' ';
        line_start = false;
        out += marked.count(i) ? "[" + vocab.token(id) + "]" : vocab.token(id);
    }
    if (!line_start) out += '\n';
    return out;
}

HighlightFiles export_position_highlights(const DocumentRow& doc, const Vocabulary& vocab, const Tensor& p, int k,
                                          const std::filesystem::path& stem) {
    const auto highlights = top_k_positions(doc.token_ids, p.data(), k);
    HighlightFiles files{with_suffix(stem, ".html"), with_suffix(stem, ".txt")};
    write_file(files.html, highlight_html(doc, vocab, highlights));
    write_file(files.txt, highlight_text(doc, vocab, highlights));
    return files;
}

}  // namespace conqar
