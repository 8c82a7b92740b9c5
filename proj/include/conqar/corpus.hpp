#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace conqar {

struct ReviewRecord {
    std::string review_id;
    std::string user_id;
    std::string item_id;
    double rating = 0.0;
    std::string text;
    // Seconds (Amazon unixReviewTime) or days (Yelp date); orders an owner's reviews.
    std::optional<std::int64_t> timestamp;
};

enum class DatasetFormat { AmazonJsonLines, YelpJsonLines, Tsv };

DatasetFormat parse_dataset_format(std::string_view name);

struct ParseResult {
    std::vector<ReviewRecord> records;
    std::size_t malformed = 0;
};

// Throws IoError when the file cannot be read and FormatError when more
// than 10% of the non-blank lines are malformed.
ParseResult parse_dataset(const std::filesystem::path& path, DatasetFormat format);
ParseResult parse_dataset_text(std::string_view content, DatasetFormat format);

struct SplitRatios {
    double train = 0.8;
    double validation = 0.1;
    double test = 0.1;
};

struct DatasetSplits {
    std::vector<ReviewRecord> train;
    std::vector<ReviewRecord> validation;
    std::vector<ReviewRecord> test;
};

DatasetSplits split_dataset(std::span<const ReviewRecord> records, SplitRatios ratios, std::uint64_t seed);

std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
public:
    static constexpr std::int32_t kPad = 0;
    static constexpr std::int32_t kDelim = 1;
    static constexpr std::int32_t kUnk = 2;
    static constexpr std::array<std::string_view, 3> kReserved{"<pad>", "<delim>", "<unk>"};

    Vocabulary();

    // Tokens with count >= min_count, by descending count then lexicographic.
    static Vocabulary build(std::span<const ReviewRecord> train, std::size_t min_count = 1);

    std::size_t size() const { return tokens_.size(); }
    std::int32_t lookup(std::string_view token) const;
    const std::string& token(std::int32_t id) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::string to_json() const;
    static Vocabulary from_json(std::string_view json);
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    explicit Vocabulary(std::vector<std::string> tokens);
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int32_t> index_;
};

struct DocumentLimits {
    std::size_t max_review_words = 100;
    std::size_t max_reviews = 15;

    std::size_t length() const { return max_reviews * (max_review_words + 1); }
};

struct DocumentRow {
    std::vector<std::int32_t> token_ids;
    // true = real token, or the delimiter closing a filled review slot
    std::vector<bool> mask;
    bool empty = false;
    // review_ids that contributed text, in slot order
    std::vector<std::string> sources;
};

// Builds one user/item document from that owner's reviews. Reviews are taken
// in chronological order when every review carries a timestamp, input order
// otherwise; the excluded review is dropped before truncation.
DocumentRow assemble_document(std::span<const ReviewRecord> reviews, const Vocabulary& vocab,
                              const DocumentLimits& limits = {},
                              std::optional<std::string_view> exclude = std::nullopt);

enum class Side { User, Item };
std::string_view to_string(Side side);

struct DocumentBatch {
    std::vector<std::string> owner_ids;
    std::vector<DocumentRow> rows;
    std::size_t length = 0;
};

/// Training-visible reviews grouped per user and per item.
class ReviewIndex {
public:
    ReviewIndex() = default;
    explicit ReviewIndex(std::span<const ReviewRecord> train);

    std::span<const ReviewRecord> reviews(Side side, const std::string& owner) const;
    std::vector<std::string> owners(Side side) const;

    DocumentRow document(Side side, const std::string& owner, const Vocabulary& vocab, const DocumentLimits& limits,
                         std::optional<std::string_view> exclude = std::nullopt) const;
    DocumentBatch documents(Side side, const Vocabulary& vocab, const DocumentLimits& limits) const;

private:
    std::map<std::string, std::vector<ReviewRecord>> by_user_;
    std::map<std::string, std::vector<ReviewRecord>> by_item_;
};

// Length-prefixed binary cache: "CQDOCS" magic, version byte, limits, then
// one (owner, empty flag, token ids) entry per row.
void write_documents(const std::filesystem::path& path, const DocumentBatch& batch, const DocumentLimits& limits);
DocumentBatch read_documents(const std::filesystem::path& path, DocumentLimits* limits = nullptr);

// Canonical JSON-lines split files written by `conqar prepare`.
void write_records(const std::filesystem::path& path, std::span<const ReviewRecord> records);
std::vector<ReviewRecord> read_records(const std::filesystem::path& path);

}  // namespace conqar
