#pragma once

#include "cfvqa/config.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cfvqa::data {

enum class Split { train, test, unassigned };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

struct QASample {
    std::string id;
    std::string image_ref;
    std::string question_raw;
    std::vector<std::string> question_tokens;
    std::string answer;  // normalized, tokens re-joined with single spaces
    std::string question_type;
    Split split = Split::unassigned;

    // Normalized question text, the exact-question key.
    std::string question_key() const;

    bool operator==(const QASample &) const = default;
};

// Lowercase, drop punctuation except hyphens between two word characters,
// split on whitespace. Bytes >= 0x80 count as word characters so UTF-8 text
// passes through unchanged.
std::vector<std::string> normalize(std::string_view text);
std::string normalize_answer(std::string_view text);
std::string join_tokens(const std::vector<std::string> &tokens);
// First token, capitalized ("which" -> "Which").
std::string derive_question_type(const std::vector<std::string> &tokens);

// Source key names for one dataset flavour.
struct FieldMap {
    std::string id = "id";
    std::string image = "image_ref";
    std::string question = "question";
    std::string answer = "answer";
    std::string type = "question_type";
    std::string split = "split";
    // When set, records whose language field differs from language_keep are
    // dropped (SLAKE ships English and Chinese questions side by side).
    std::string language;
    std::string language_keep = "en";
    // Declared question-type labels; empty means any label is accepted.
    std::vector<std::string> label_set;

    static FieldMap canonical() { return {}; }
    static FieldMap from_config(const KeyValueConfig &config);
    static FieldMap load(const std::string &path);
};

struct LoadResult {
    std::vector<QASample> samples;
    std::size_t skipped = 0;
    std::vector<std::string> skip_reasons;
};

// Reads a JSON array or JSONL file. Records that cannot be normalized are
// skipped and counted; `split` applies to records without a split field.
LoadResult load_dataset(const std::filesystem::path &path, const FieldMap &fields,
                        Split default_split = Split::unassigned);
LoadResult parse_dataset(std::string_view text, const FieldMap &fields, Split default_split = Split::unassigned);

// Canonical JSONL: {id, image_ref, question, answer, question_type[, split]}.
std::string to_canonical_jsonl(const std::vector<QASample> &samples);
std::vector<QASample> load_canonical(const std::filesystem::path &path);

class Vocab {
  public:
    static constexpr std::string_view kUnknown = "<unk>";

    Vocab();
    // Index 0 is the unknown token; the rest are the distinct entries in
    // sorted order.
    static Vocab build(std::vector<std::string> entries);
    static Vocab from_lines(std::string_view text);

    std::size_t index_of(const std::string &token) const;
    bool contains(const std::string &token) const { return index_.count(token) != 0; }
    const std::string &token_at(std::size_t index) const { return tokens_.at(index); }
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string> &tokens() const { return tokens_; }
    std::string to_lines() const;

    bool operator==(const Vocab &other) const { return tokens_ == other.tokens_; }

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

// (question vocab over tokens, answer vocab over whole answer strings)
std::pair<Vocab, Vocab> build_vocabs(const std::vector<QASample> &samples);

enum class KeyMode { exact_question, question_type };

std::string_view key_mode_name(KeyMode mode);
KeyMode parse_key_mode(std::string_view name);
std::string sample_key(const QASample &sample, KeyMode mode);

// key -> split -> answer -> count
class PriorTable {
  public:
    using AnswerCounts = std::map<std::string, std::size_t>;

    static PriorTable build(const std::vector<QASample> &samples, KeyMode mode);

    KeyMode mode() const { return mode_; }
    const std::map<std::string, std::map<Split, AnswerCounts>> &table() const { return table_; }
    AnswerCounts counts(const std::string &key, Split split) const;
    std::size_t total(Split split) const;

    // Top answer count against the sum of all other answers, e.g. {59, 1}.
    std::pair<std::size_t, std::size_t> dominance(const std::string &key, Split split) const;

    // Rows: key,split,answer,count,ratio (ratio is the key/split dominance).
    std::string to_csv() const;

  private:
    KeyMode mode_ = KeyMode::exact_question;
    std::map<std::string, std::map<Split, AnswerCounts>> table_;
};

}  // namespace cfvqa::data
