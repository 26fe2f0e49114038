#include "cfvqa/dataset.hpp"

#include "cfvqa/errors.hpp"
#include "cfvqa/io.hpp"

#include "json.hpp"
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <sstream>

namespace cfvqa::data {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view split_name(Split split) {
    switch (split) {
    case Split::train:
        return "train";
    case Split::test:
        return "test";
    case Split::unassigned:
        break;
    }
    return "unassigned";
}

Split parse_split(std::string_view name) {
    if (name == "train" || name == "training") {
        return Split::train;
    }
    if (name == "test" || name == "testing") {
        return Split::test;
    }
    if (name.empty() || name == "unassigned") {
        return Split::unassigned;
    }
    throw ValidationError("unknown split name: " + std::string(name));
}

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

}  // namespace

std::vector<std::string> normalize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c) != 0) {
            if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
        } else if (is_word_char(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (c == '-' && i > 0 && i + 1 < text.size() &&
                   is_word_char(static_cast<unsigned char>(text[i - 1])) &&
                   is_word_char(static_cast<unsigned char>(text[i + 1]))) {
            current.push_back('-');
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

std::string join_tokens(const std::vector<std::string> &tokens) {
    std::string out;
    for (const auto &t : tokens) {
        if (!out.empty()) {
            out += ' ';
        }
        out += t;
    }
    return out;
}

std::string normalize_answer(std::string_view text) { return join_tokens(normalize(text)); }

std::string derive_question_type(const std::vector<std::string> &tokens) {
    if (tokens.empty()) {
        return {};
    }
    std::string type = tokens.front();
    type[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(type[0])));
    return type;
}

std::string QASample::question_key() const { return join_tokens(question_tokens); }

FieldMap FieldMap::from_config(const KeyValueConfig &config) {
    config.require_known({"id", "image", "question", "answer", "type", "split", "language", "language_keep", "types"});
    FieldMap map;
    map.id = config.get_string("id", map.id);
    map.image = config.get_string("image", map.image);
    map.question = config.get_string("question", map.question);
    map.answer = config.get_string("answer", map.answer);
    map.type = config.get_string("type", map.type);
    map.split = config.get_string("split", map.split);
    map.language = config.get_string("language", map.language);
    map.language_keep = config.get_string("language_keep", map.language_keep);
    map.label_set = config.get_list("types");
    return map;
}

FieldMap FieldMap::load(const std::string &path) { return from_config(KeyValueConfig::load(path)); }

namespace {

// Scalars only; numbers and booleans are rendered as JSON text.
std::optional<std::string> field_text(const json &record, const std::string &key) {
    if (key.empty()) {
        return std::nullopt;
    }
    const auto it = record.find(key);
    if (it == record.end() || it->is_null()) {
        return std::nullopt;
    }
    if (it->is_string()) {
        return it->get<std::string>();
    }
    if (it->is_number() || it->is_boolean()) {
        return it->dump();
    }
    return std::nullopt;
}

struct SkipLog {
    LoadResult &result;
    void skip(std::size_t record, const std::string &reason) {
        ++result.skipped;
        result.skip_reasons.push_back("record " + std::to_string(record) + ": " + reason);
        spdlog::debug("skipping record {}: {}", record, reason);
    }
};

void ingest_record(const json &record, std::size_t index, const FieldMap &fields, Split default_split,
                   LoadResult &result) {
    SkipLog log{result};
    if (!record.is_object()) {
        log.skip(index, "not a JSON object");
        return;
    }
    if (!fields.language.empty()) {
        const auto lang = field_text(record, fields.language);
        if (lang && *lang != fields.language_keep) {
            log.skip(index, "language " + *lang);
            return;
        }
    }
    const auto question = field_text(record, fields.question);
    if (!question) {
        log.skip(index, "missing question field '" + fields.question + "'");
        return;
    }
    const auto answer = field_text(record, fields.answer);
    if (!answer) {
        log.skip(index, "missing answer field '" + fields.answer + "'");
        return;
    }
    QASample sample;
    sample.question_raw = *question;
    sample.question_tokens = normalize(*question);
    if (sample.question_tokens.empty()) {
        log.skip(index, "question normalizes to no tokens");
        return;
    }
    sample.answer = normalize_answer(*answer);
    if (sample.answer.empty()) {
        log.skip(index, "answer normalizes to nothing");
        return;
    }
    sample.id = field_text(record, fields.id).value_or(std::to_string(index));
    sample.image_ref = field_text(record, fields.image).value_or("");
    const auto type = field_text(record, fields.type);
    sample.question_type = (type && !type->empty()) ? *type : derive_question_type(sample.question_tokens);
    if (!fields.label_set.empty() &&
        std::find(fields.label_set.begin(), fields.label_set.end(), sample.question_type) == fields.label_set.end()) {
        log.skip(index, "question type '" + sample.question_type + "' not in the declared label set");
        return;
    }
    const auto split = field_text(record, fields.split);
    try {
        sample.split = split ? parse_split(*split) : default_split;
    } catch (const ValidationError &) {
        log.skip(index, "unknown split '" + *split + "'");
        return;
    }
    result.samples.push_back(std::move(sample));
}

}  // namespace

LoadResult parse_dataset(std::string_view text, const FieldMap &fields, Split default_split) {
    LoadResult result;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string_view::npos && text[first] == '[') {
        json records;
        try {
            records = json::parse(text);
        } catch (const json::parse_error &e) {
            throw ValidationError(std::string("malformed JSON array: ") + e.what());
        }
        for (std::size_t i = 0; i < records.size(); ++i) {
            ingest_record(records[i], i, fields, default_split, result);
        }
    } else {
        std::istringstream in{std::string(text)};
        std::string line;
        std::size_t index = 0;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) {
                continue;
            }
            json record;
            try {
                record = json::parse(line);
            } catch (const json::parse_error &) {
                SkipLog{result}.skip(index++, "malformed JSON line");
                continue;
            }
            ingest_record(record, index++, fields, default_split, result);
        }
    }
    if (result.skipped > 0) {
        spdlog::warn("skipped {} record(s) during loading", result.skipped);
    }
    if (result.samples.empty()) {
        throw EmptyDatasetError("no usable records (" + std::to_string(result.skipped) + " skipped)");
    }
    return result;
}

LoadResult load_dataset(const std::filesystem::path &path, const FieldMap &fields, Split default_split) {
    return parse_dataset(io::read_file(path), fields, default_split);
}

std::string to_canonical_jsonl(const std::vector<QASample> &samples) {
    std::string out;
    for (const auto &s : samples) {
        ordered_json record;
        record["id"] = s.id;
        record["image_ref"] = s.image_ref;
        record["question"] = s.question_raw;
        record["answer"] = s.answer;
        record["question_type"] = s.question_type;
        if (s.split != Split::unassigned) {
            record["split"] = std::string(split_name(s.split));
        }
        out += record.dump();
        out += '\n';
    }
    return out;
}

std::vector<QASample> load_canonical(const std::filesystem::path &path) {
    return load_dataset(path, FieldMap::canonical()).samples;
}

Vocab::Vocab() {
    tokens_.emplace_back(kUnknown);
    index_.emplace(kUnknown, 0);
}

Vocab Vocab::build(std::vector<std::string> entries) {
    std::sort(entries.begin(), entries.end());
    entries.erase(std::unique(entries.begin(), entries.end()), entries.end());
    Vocab vocab;
    for (auto &e : entries) {
        if (e == kUnknown) {
            continue;
        }
        vocab.index_.emplace(e, vocab.tokens_.size());
        vocab.tokens_.push_back(std::move(e));
    }
    return vocab;
}

Vocab Vocab::from_lines(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::vector<std::string> tokens;
    while (std::getline(in, line)) {
        tokens.push_back(line);
    }
    if (tokens.empty() || tokens.front() != kUnknown) {
        throw ValidationError("vocabulary file must start with " + std::string(kUnknown));
    }
    Vocab vocab;
    vocab.tokens_.clear();
    vocab.index_.clear();
    for (auto &t : tokens) {
        if (!vocab.index_.emplace(t, vocab.tokens_.size()).second) {
            throw ValidationError("duplicate vocabulary entry: " + t);
        }
        vocab.tokens_.push_back(std::move(t));
    }
    return vocab;
}

std::size_t Vocab::index_of(const std::string &token) const {
    const auto it = index_.find(token);
    return it == index_.end() ? 0 : it->second;
}

std::string Vocab::to_lines() const {
    std::string out;
    for (const auto &t : tokens_) {
        out += t;
        out += '\n';
    }
    return out;
}

std::pair<Vocab, Vocab> build_vocabs(const std::vector<QASample> &samples) {
    std::vector<std::string> words;
    std::vector<std::string> answers;
    for (const auto &s : samples) {
        words.insert(words.end(), s.question_tokens.begin(), s.question_tokens.end());
        answers.push_back(s.answer);
    }
    return {Vocab::build(std::move(words)), Vocab::build(std::move(answers))};
}

std::string_view key_mode_name(KeyMode mode) {
    return mode == KeyMode::exact_question ? "exact_question" : "question_type";
}

KeyMode parse_key_mode(std::string_view name) {
    if (name == "exact_question") {
        return KeyMode::exact_question;
    }
    if (name == "question_type") {
        return KeyMode::question_type;
    }
    throw ValidationError("unknown key mode: " + std::string(name) + " (expected exact_question or question_type)");
}

std::string sample_key(const QASample &sample, KeyMode mode) {
    return mode == KeyMode::exact_question ? sample.question_key() : sample.question_type;
}

PriorTable PriorTable::build(const std::vector<QASample> &samples, KeyMode mode) {
    PriorTable table;
    table.mode_ = mode;
    for (const auto &s : samples) {
        ++table.table_[sample_key(s, mode)][s.split][s.answer];
    }
    return table;
}

PriorTable::AnswerCounts PriorTable::counts(const std::string &key, Split split) const {
    const auto k = table_.find(key);
    if (k == table_.end()) {
        return {};
    }
    const auto s = k->second.find(split);
    return s == k->second.end() ? AnswerCounts{} : s->second;
}

std::size_t PriorTable::total(Split split) const {
    std::size_t n = 0;
    for (const auto &[key, splits] : table_) {
        const auto it = splits.find(split);
        if (it == splits.end()) {
            continue;
        }
        for (const auto &[answer, count] : it->second) {
            n += count;
        }
    }
    return n;
}

std::pair<std::size_t, std::size_t> PriorTable::dominance(const std::string &key, Split split) const {
    std::size_t top = 0;
    std::size_t all = 0;
    for (const auto &[answer, count] : counts(key, split)) {
        top = std::max(top, count);
        all += count;
    }
    return {top, all - top};
}

std::string PriorTable::to_csv() const {
    std::string out = "key,split,answer,count,ratio\n";
    for (const auto &[key, splits] : table_) {
        for (const auto &[split, answers] : splits) {
            const auto [top, rest] = dominance(key, split);
            const std::string ratio = std::to_string(top) + ":" + std::to_string(rest);
            std::vector<std::pair<std::string, std::size_t>> rows(answers.begin(), answers.end());
            std::stable_sort(rows.begin(), rows.end(), [](const auto &a, const auto &b) { return a.second > b.second; });
            for (const auto &[answer, count] : rows) {
                out += io::csv_field(key) + "," + std::string(split_name(split)) + "," + io::csv_field(answer) + "," +
                       std::to_string(count) + "," + ratio + "\n";
            }
        }
    }
    return out;
}

}  // namespace cfvqa::data
