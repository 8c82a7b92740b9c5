#include "conqar/corpus.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "conqar/errors.hpp"

namespace conqar {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (in.bad()) throw IoError("error reading " + path.string());
    return buffer.str();
}

const json* first_field(const json& obj, std::initializer_list<const char*> names) {
    for (const char* n : names) {
        auto it = obj.find(n);
        if (it != obj.end() && !it->is_null()) return &*it;
    }
    return nullptr;
}

std::string as_id(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    throw FormatError("identifier is neither string nor integer");
}

double as_rating(const json& v) {
    double r;
    if (v.is_number()) {
        r = v.get<double>();
    } else if (v.is_string()) {
        r = std::stod(v.get<std::string>());
    } else {
        throw FormatError("rating is not numeric");
    }
    if (!std::isfinite(r) || r < 1.0 || r > 5.0) throw FormatError("rating outside [1, 5]");
    return r;
}

// "YYYY-MM-DD..." -> days since 1970-01-01
std::optional<std::int64_t> parse_date_days(const std::string& text) {
    int y = 0;
    unsigned m = 0, d = 0;
    if (std::sscanf(text.c_str(), "%d-%u-%u", &y, &m, &d) != 3) return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return std::chrono::sys_days{ymd}.time_since_epoch().count();
}

ReviewRecord parse_json_line(const std::string& line, DatasetFormat format, std::size_t line_no) {
    json obj = json::parse(line);
    if (!obj.is_object()) throw FormatError("line is not a JSON object");
    ReviewRecord rec;
    const json* user = first_field(obj, {"reviewerID", "user_id"});
    const json* item = first_field(obj, {"asin", "business_id", "item_id"});
    const json* rating = first_field(obj, {"overall", "stars", "rating"});
    const json* text = first_field(obj, {"reviewText", "text"});
    if (!user || !item || !rating) throw FormatError("missing user, item or rating");
    rec.user_id = as_id(*user);
    rec.item_id = as_id(*item);
    rec.rating = as_rating(*rating);
    if (text) {
        if (!text->is_string()) throw FormatError("review text is not a string");
        rec.text = text->get<std::string>();
    }
    if (const json* rid = first_field(obj, {"review_id"})) {
        rec.review_id = as_id(*rid);
    } else {
        rec.review_id = "L" + std::to_string(line_no);
    }
    if (format == DatasetFormat::AmazonJsonLines) {
        if (const json* ts = first_field(obj, {"unixReviewTime"}); ts && ts->is_number_integer()) {
            rec.timestamp = ts->get<std::int64_t>();
        }
    } else if (const json* date = first_field(obj, {"date"}); date && date->is_string()) {
        rec.timestamp = parse_date_days(date->get<std::string>());
    }
    return rec;
}

ReviewRecord parse_tsv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        auto tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    if (fields.size() < 4) throw FormatError("expected user, item, rating and text columns");
    ReviewRecord rec;
    rec.user_id = fields[0];
    rec.item_id = fields[1];
    if (rec.user_id.empty() || rec.item_id.empty()) throw FormatError("empty user or item id");
    std::size_t consumed = 0;
    double r = std::stod(fields[2], &consumed);
    if (consumed != fields[2].size()) throw FormatError("rating is not numeric");
    rec.rating = as_rating(json(r));
    rec.text = fields[3];
    rec.review_id = fields.size() > 4 && !fields[4].empty() ? fields[4] : "L" + std::to_string(line_no);
    return rec;
}

bool is_ascii_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Length in bytes of a multi-byte UTF-8 whitespace sequence at text[i], 0 if none.
std::size_t utf8_space_length(std::string_view text, std::size_t i) {
    auto byte = [&](std::size_t k) -> unsigned char { return i + k < text.size() ? text[i + k] : 0; };
    const unsigned char b0 = byte(0);
    if (b0 == 0xC2 && (byte(1) == 0x85 || byte(1) == 0xA0)) return 2;  // NEL, NBSP
    if (b0 == 0xE1 && byte(1) == 0x9A && byte(2) == 0x80) return 3;   // U+1680
    if (b0 == 0xE2 && byte(1) == 0x80) {
        const unsigned char b2 = byte(2);
        if ((b2 >= 0x80 && b2 <= 0x8A) || b2 == 0xA8 || b2 == 0xA9 || b2 == 0xAF) return 3;
    }
    if (b0 == 0xE2 && byte(1) == 0x81 && byte(2) == 0x9F) return 3;  // U+205F
    if (b0 == 0xE3 && byte(1) == 0x80 && byte(2) == 0x80) return 3;  // U+3000
    return 0;
}

// Common non-ASCII punctuation seen around review words.
constexpr std::array<std::string_view, 9> kUtf8Punct{"“", "”", "‘", "’", "…",
                                                     "—", "–", "«", "»"};

std::string_view strip_edges(std::string_view tok) {
    bool changed = true;
    while (changed && !tok.empty()) {
        changed = false;
        if (std::ispunct(static_cast<unsigned char>(tok.front()))) {
            tok.remove_prefix(1);
            changed = true;
        } else if (std::ispunct(static_cast<unsigned char>(tok.back()))) {
            tok.remove_suffix(1);
            changed = true;
        } else {
            for (auto p : kUtf8Punct) {
                if (tok.starts_with(p)) {
                    tok.remove_prefix(p.size());
                    changed = true;
                    break;
                }
                if (tok.ends_with(p)) {
                    tok.remove_suffix(p.size());
                    changed = true;
                    break;
                }
            }
        }
    }
    return tok;
}

std::vector<std::size_t> review_order(std::span<const ReviewRecord> reviews) {
    std::vector<std::size_t> order(reviews.size());
    std::iota(order.begin(), order.end(), 0);
    const bool timed = !reviews.empty() && std::all_of(reviews.begin(), reviews.end(),
                                                       [](const ReviewRecord& r) { return r.timestamp.has_value(); });
    if (timed) {
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return *reviews[a].timestamp < *reviews[b].timestamp; });
    }
    return order;
}

constexpr char kDocsMagic[6] = {'C', 'Q', 'D', 'O', 'C', 'S'};
constexpr std::uint8_t kDocsVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw FormatError("document cache truncated");
    return value;
}

}  // namespace

DatasetFormat parse_dataset_format(std::string_view name) {
    if (name == "amazon" || name == "amazon_json_lines") return DatasetFormat::AmazonJsonLines;
    if (name == "yelp" || name == "yelp_json_lines") return DatasetFormat::YelpJsonLines;
    if (name == "tsv") return DatasetFormat::Tsv;
    throw ConfigError("unknown dataset format '" + std::string(name) + "'");
}

ParseResult parse_dataset_text(std::string_view content, DatasetFormat format) {
    ParseResult result;
    std::set<std::string> seen_ids;
    std::size_t nonblank = 0;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= content.size()) {
        auto nl = content.find('\n', start);
        std::string line(content.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
        start = nl == std::string_view::npos ? content.size() + 1 : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return is_ascii_space(c); })) continue;
        ++nonblank;
        try {
            ReviewRecord rec = format == DatasetFormat::Tsv ? parse_tsv_line(line, line_no)
                                                            : parse_json_line(line, format, line_no);
            if (!seen_ids.insert(rec.review_id).second) throw FormatError("duplicate review_id");
            result.records.push_back(std::move(rec));
        } catch (const std::exception&) {
            ++result.malformed;
        }
    }
    if (nonblank > 0 && result.malformed * 10 > nonblank) {
        throw FormatError(std::to_string(result.malformed) + " of " + std::to_string(nonblank) +
                          " lines are malformed (limit 10%)");
    }
    return result;
}

ParseResult parse_dataset(const std::filesystem::path& path, DatasetFormat format) {
    return parse_dataset_text(read_file(path), format);
}

DatasetSplits split_dataset(std::span<const ReviewRecord> records, SplitRatios ratios, std::uint64_t seed) {
    if (records.empty()) throw ConfigError("cannot split an empty dataset");
    if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
        throw ConfigError("split ratios must be non-negative and sum to 1");
    }
    const std::size_t n = records.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const auto n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(ratios.train * n)));
    const auto n_val =
        std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(ratios.validation * n)));

    DatasetSplits splits;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& rec = records[order[i]];
        if (i < n_train) {
            splits.train.push_back(rec);
        } else if (i < n_train + n_val) {
            splits.validation.push_back(rec);
        } else {
            splits.test.push_back(rec);
        }
    }
    return splits;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size()) {
            if (is_ascii_space(text[i])) {
                ++i;
            } else if (auto w = utf8_space_length(text, i)) {
                i += w;
            } else {
                break;
            }
        }
        const std::size_t begin = i;
        while (i < text.size() && !is_ascii_space(text[i]) && utf8_space_length(text, i) == 0) ++i;
        std::string_view raw = strip_edges(text.substr(begin, i - begin));
        if (raw.empty()) continue;
        std::string tok(raw);
        for (char& c : tok) {
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        }
        tokens.push_back(std::move(tok));
    }
    return tokens;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
    for (auto r : kReserved) tokens_.emplace_back(r);
    for (auto& t : tokens) {
        if (std::find(kReserved.begin(), kReserved.end(), t) != kReserved.end()) continue;
        tokens_.push_back(std::move(t));
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second) {
            throw FormatError("duplicate vocabulary token '" + tokens_[i] + "'");
        }
    }
}

Vocabulary Vocabulary::build(std::span<const ReviewRecord> train, std::size_t min_count) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& rec : train)
        for (auto& tok : tokenize(rec.text)) ++counts[tok];
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [tok, count] : counts) {
        if (count >= min_count) kept.emplace_back(tok, count);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::vector<std::string> tokens;
    tokens.reserve(kept.size());
    for (auto& [tok, count] : kept) tokens.push_back(tok);
    return Vocabulary(std::move(tokens));
}

std::int32_t Vocabulary::lookup(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw IndexError("token id " + std::to_string(id) + " outside vocabulary of size " +
                         std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::to_json() const {
    json doc = {{"format", "conqar-vocab"}, {"version", 1}, {"tokens", tokens_}};
    return doc.dump() + "\n";
}

Vocabulary Vocabulary::from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("vocabulary is not valid JSON: ") + e.what());
    }
    if (doc.value("format", "") != "conqar-vocab" || doc.value("version", 0) != 1) {
        throw FormatError("not a version-1 conqar vocabulary");
    }
    auto tokens = doc.at("tokens").get<std::vector<std::string>>();
    if (tokens.size() < kReserved.size() ||
        !std::equal(kReserved.begin(), kReserved.end(), tokens.begin())) {
        throw FormatError("vocabulary does not start with the reserved tokens");
    }
    tokens.erase(tokens.begin(), tokens.begin() + kReserved.size());
    return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json();
    if (!out) throw IoError("error writing " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) { return from_json(read_file(path)); }

DocumentRow assemble_document(std::span<const ReviewRecord> reviews, const Vocabulary& vocab,
                              const DocumentLimits& limits, std::optional<std::string_view> exclude) {
    if (limits.max_review_words == 0 || limits.max_reviews == 0) {
        throw ConfigError("document limits must be positive");
    }
    const std::size_t slot = limits.max_review_words + 1;
    DocumentRow row;
    row.token_ids.assign(limits.length(), Vocabulary::kPad);
    row.mask.assign(limits.length(), false);

    std::size_t filled = 0;
    for (std::size_t idx : review_order(reviews)) {
        const auto& review = reviews[idx];
        if (exclude && review.review_id == *exclude) continue;
        if (filled == limits.max_reviews) break;
        const std::size_t base = filled * slot;
        auto words = tokenize(review.text);
        const std::size_t kept = std::min(words.size(), limits.max_review_words);
        for (std::size_t w = 0; w < kept; ++w) {
            row.token_ids[base + w] = vocab.lookup(words[w]);
            row.mask[base + w] = true;
        }
        row.token_ids[base + limits.max_review_words] = Vocabulary::kDelim;
        row.mask[base + limits.max_review_words] = true;
        row.sources.push_back(review.review_id);
        ++filled;
    }
    if (filled == 0) {
        row.empty = true;
        return row;
    }
    // Unused slots keep their closing delimiter but stay masked out.
    for (std::size_t s = filled; s < limits.max_reviews; ++s) {
        row.token_ids[s * slot + limits.max_review_words] = Vocabulary::kDelim;
    }
    return row;
}

std::string_view to_string(Side side) { return side == Side::User ? "user" : "item"; }

ReviewIndex::ReviewIndex(std::span<const ReviewRecord> train) {
    for (const auto& rec : train) {
        by_user_[rec.user_id].push_back(rec);
        by_item_[rec.item_id].push_back(rec);
    }
}

std::span<const ReviewRecord> ReviewIndex::reviews(Side side, const std::string& owner) const {
    const auto& table = side == Side::User ? by_user_ : by_item_;
    auto it = table.find(owner);
    if (it == table.end()) return {};
    return it->second;
}

std::vector<std::string> ReviewIndex::owners(Side side) const {
    const auto& table = side == Side::User ? by_user_ : by_item_;
    std::vector<std::string> ids;
    ids.reserve(table.size());
    for (const auto& [id, _] : table) ids.push_back(id);
    return ids;
}

DocumentRow ReviewIndex::document(Side side, const std::string& owner, const Vocabulary& vocab,
                                  const DocumentLimits& limits, std::optional<std::string_view> exclude) const {
    return assemble_document(reviews(side, owner), vocab, limits, exclude);
}

DocumentBatch ReviewIndex::documents(Side side, const Vocabulary& vocab, const DocumentLimits& limits) const {
    DocumentBatch batch;
    batch.length = limits.length();
    for (const auto& id : owners(side)) {
        batch.owner_ids.push_back(id);
        batch.rows.push_back(document(side, id, vocab, limits));
    }
    return batch;
}

void write_documents(const std::filesystem::path& path, const DocumentBatch& batch, const DocumentLimits& limits) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(kDocsMagic, sizeof(kDocsMagic));
    put<std::uint8_t>(out, kDocsVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(limits.max_review_words));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(limits.max_reviews));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(batch.rows.size()));
    for (std::size_t r = 0; r < batch.rows.size(); ++r) {
        const auto& row = batch.rows[r];
        if (row.token_ids.size() != limits.length()) throw DimensionError("document row length mismatch");
        const auto& owner = batch.owner_ids[r];
        put<std::uint32_t>(out, static_cast<std::uint32_t>(owner.size()));
        out.write(owner.data(), static_cast<std::streamsize>(owner.size()));
        put<std::uint8_t>(out, row.empty ? 1 : 0);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(row.token_ids.size()));
        for (auto id : row.token_ids) put<std::int32_t>(out, id);
        for (bool m : row.mask) put<std::uint8_t>(out, m ? 1 : 0);
    }
    if (!out) throw IoError("error writing " + path.string());
}

DocumentBatch read_documents(const std::filesystem::path& path, DocumentLimits* limits) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[sizeof(kDocsMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kDocsMagic, sizeof(magic)) != 0) throw FormatError("not a conqar document cache");
    if (get<std::uint8_t>(in) != kDocsVersion) throw FormatError("unsupported document cache version");
    DocumentLimits read_limits;
    read_limits.max_review_words = get<std::uint32_t>(in);
    read_limits.max_reviews = get<std::uint32_t>(in);
    const auto count = get<std::uint32_t>(in);
    DocumentBatch batch;
    batch.length = read_limits.length();
    for (std::uint32_t r = 0; r < count; ++r) {
        const auto name_len = get<std::uint32_t>(in);
        std::string owner(name_len, '\0');
        in.read(owner.data(), name_len);
        DocumentRow row;
        row.empty = get<std::uint8_t>(in) != 0;
        const auto len = get<std::uint32_t>(in);
        if (len != batch.length) throw FormatError("document cache row has wrong length");
        row.token_ids.resize(len);
        for (auto& id : row.token_ids) id = get<std::int32_t>(in);
        row.mask.resize(len);
        for (std::size_t i = 0; i < len; ++i) row.mask[i] = get<std::uint8_t>(in) != 0;
        batch.owner_ids.push_back(std::move(owner));
        batch.rows.push_back(std::move(row));
    }
    if (limits) *limits = read_limits;
    return batch;
}

void write_records(const std::filesystem::path& path, std::span<const ReviewRecord> records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& r : records) {
        json obj = {{"review_id", r.review_id},
                    {"user_id", r.user_id},
                    {"item_id", r.item_id},
                    {"rating", r.rating},
                    {"text", r.text}};
        if (r.timestamp) obj["timestamp"] = *r.timestamp;
        out << obj.dump() << '\n';
    }
    if (!out) throw IoError("error writing " + path.string());
}

std::vector<ReviewRecord> read_records(const std::filesystem::path& path) {
    const std::string content = read_file(path);
    std::vector<ReviewRecord> records;
    std::istringstream lines(content);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            json obj = json::parse(line);
            ReviewRecord r;
            r.review_id = obj.at("review_id").get<std::string>();
            r.user_id = obj.at("user_id").get<std::string>();
            r.item_id = obj.at("item_id").get<std::string>();
            r.rating = obj.at("rating").get<double>();
            r.text = obj.at("text").get<std::string>();
            if (obj.contains("timestamp")) r.timestamp = obj["timestamp"].get<std::int64_t>();
            records.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

}  // namespace conqar
