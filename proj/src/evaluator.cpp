#include "cfvqa/evaluator.hpp"

#include "cfvqa/errors.hpp"
#include "cfvqa/io.hpp"

#include "json.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

namespace cfvqa::eval {

using data::QASample;
using json = nlohmann::ordered_json;

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> row_names() {
    std::vector<std::string> out{"Overall"};
    out.insert(out.end(), kTableTypes.begin(), kTableTypes.end());
    out.push_back(kOtherType);
    return out;
}

json accuracy_json(const RowStats &r) {
    json j;
    j["correct"] = r.correct;
    j["count"] = r.count;
    const auto acc = r.accuracy();
    j["accuracy"] = acc ? json(*acc) : json(nullptr);
    return j;
}

std::string majority(const std::map<std::string, std::size_t> &counts) {
    std::string best;
    std::size_t best_n = 0;
    for (const auto &[a, n] : counts) {  // map order: ties keep the smaller answer
        if (n > best_n) {
            best = a;
            best_n = n;
        }
    }
    return best;
}

std::vector<ScoredAnswer> top_answers(const model::CausalModel &m, std::span<const float> scores, std::size_t top) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<ScoredAnswer> out;
    for (std::size_t i = 0; i < std::min(top, idx.size()); ++i) {
        out.push_back({m.answer_vocab.token_at(idx[i]), scores[idx[i]]});
    }
    return out;
}

std::string fmt_acc(const std::optional<double> &v) { return v ? fmt::format("{:.4f}", *v) : std::string(); }

}  // namespace

TypeMap::TypeMap() {
    for (const auto &t : kTableTypes) map_[t] = t;
}

TypeMap TypeMap::from_config(const KeyValueConfig &config) {
    TypeMap tm;
    tm.map_.clear();
    for (const auto &[key, value] : config.entries()) {
        if (std::find(kTableTypes.begin(), kTableTypes.end(), value) == kTableTypes.end() && value != kOtherType) {
            throw ValidationError("type map target '" + value + "' for '" + key + "' is not a report row");
        }
        tm.map_[key] = value;
    }
    return tm;
}

TypeMap TypeMap::load(const std::string &path) { return from_config(KeyValueConfig::load(path)); }

std::string TypeMap::row(const std::string &question_type) const {
    const std::string first = trim(question_type.substr(0, question_type.find(',')));
    const auto it = map_.find(first);
    return it == map_.end() ? kOtherType : it->second;
}

std::optional<double> RowStats::accuracy() const {
    if (count == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(count);
}

std::string EvalReport::to_json() const {
    json j;
    j["mode"] = mode;
    j["dataset"] = dataset;
    j["overall"] = accuracy_json(overall);
    json rows_j = json::object();
    for (const auto &name : row_names()) {
        if (name == "Overall") continue;
        const auto it = rows.find(name);
        rows_j[name] = accuracy_json(it == rows.end() ? RowStats{} : it->second);
    }
    j["rows"] = rows_j;
    return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        EvalReport r;
        r.mode = j.at("mode").get<std::string>();
        r.dataset = j.at("dataset").get<std::string>();
        r.overall = {j.at("overall").at("correct").get<std::size_t>(), j.at("overall").at("count").get<std::size_t>()};
        for (const auto &[name, row] : j.at("rows").items()) {
            r.rows[name] = {row.at("correct").get<std::size_t>(), row.at("count").get<std::size_t>()};
        }
        return r;
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(std::string("malformed report: ") + e.what());
    }
}

EvalReport summarize(const std::vector<QASample> &samples, const std::vector<Prediction> &predictions,
                     const std::string &mode, const std::string &dataset, const TypeMap &types) {
    if (samples.size() != predictions.size()) {
        throw ValidationError("prediction count does not match sample count");
    }
    EvalReport r;
    r.mode = mode;
    r.dataset = dataset;
    for (const auto &t : kTableTypes) r.rows[t] = {};
    r.rows[kOtherType] = {};
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const bool ok = predictions[i].predicted == samples[i].answer;
        RowStats &row = r.rows[types.row(samples[i].question_type)];
        row.correct += ok;
        ++row.count;
        r.overall.correct += ok;
        ++r.overall.count;
    }
    return r;
}

EvalReport evaluate(const model::CausalModel &m, const std::vector<QASample> &samples,
                    const model::ImageSource &images, model::Mode mode, const std::string &dataset,
                    const TypeMap &types, std::vector<Prediction> *predictions) {
    if (samples.empty()) {
        throw EmptyDatasetError("no samples to evaluate");
    }
    std::vector<Prediction> preds;
    preds.reserve(samples.size());
    for (const auto &s : samples) {
        const auto x = m.encode(s, images);
        preds.push_back({s.id, s.answer, m.answer_vocab.token_at(model::predict(x, m, mode))});
    }
    EvalReport r = summarize(samples, preds, std::string(model::mode_name(mode)), dataset, types);
    if (predictions) *predictions = std::move(preds);
    return r;
}

EvalReport prior_only_baseline(const std::vector<QASample> &train, const std::vector<QASample> &test,
                               data::KeyMode key_mode, const std::string &dataset, const TypeMap &types,
                               std::vector<Prediction> *predictions) {
    if (train.empty() || test.empty()) {
        throw EmptyDatasetError("prior-only baseline needs non-empty train and test samples");
    }
    std::map<std::string, std::map<std::string, std::size_t>> by_question, by_type;
    std::map<std::string, std::size_t> global;
    for (const auto &s : train) {
        ++by_question[s.question_key()][s.answer];
        ++by_type[s.question_type][s.answer];
        ++global[s.answer];
    }
    const std::string fallback = majority(global);
    std::vector<Prediction> preds;
    for (const auto &s : test) {
        std::string guess = fallback;
        if (key_mode == data::KeyMode::exact_question && by_question.count(s.question_key())) {
            guess = majority(by_question.at(s.question_key()));
        } else if (by_type.count(s.question_type)) {
            guess = majority(by_type.at(s.question_type));
        }
        preds.push_back({s.id, s.answer, guess});
    }
    EvalReport r = summarize(test, preds, "prior_only", dataset, types);
    if (predictions) *predictions = std::move(preds);
    return r;
}

Comparison compare(const EvalReport &left, const EvalReport &right) {
    Comparison c;
    c.left_name = left.mode;
    c.right_name = right.mode;
    if (c.left_name == c.right_name) {
        c.left_name += "_a";
        c.right_name += "_b";
    }
    for (const auto &name : row_names()) {
        const RowStats l = name == "Overall" ? left.overall : (left.rows.count(name) ? left.rows.at(name) : RowStats{});
        const RowStats r =
            name == "Overall" ? right.overall : (right.rows.count(name) ? right.rows.at(name) : RowStats{});
        ComparisonRow row;
        row.row = name;
        row.count = std::max(l.count, r.count);
        row.left = l.accuracy();
        row.right = r.accuracy();
        if (row.left && row.right) {
            row.delta = *row.right - *row.left;
            // Compare exact counts when the denominators agree, so equal
            // accuracies never flip on rounding.
            const bool same_n = l.count == r.count;
            const auto lv = same_n ? static_cast<double>(l.correct) : *row.left;
            const auto rv = same_n ? static_cast<double>(r.correct) : *row.right;
            row.winner = rv > lv ? c.right_name : (lv > rv ? c.left_name : "tie");
        }
        c.rows.push_back(std::move(row));
    }
    return c;
}

std::string Comparison::to_csv() const {
    std::string out = fmt::format("row,count,{},{},delta,winner\n", left_name, right_name);
    for (const auto &r : rows) {
        out += fmt::format("{},{},{},{},{},{}\n", r.row, r.count, fmt_acc(r.left), fmt_acc(r.right),
                           r.delta ? fmt::format("{:+.4f}", *r.delta) : std::string(), r.winner);
    }
    return out;
}

std::string Comparison::to_json() const {
    json j;
    j["left"] = left_name;
    j["right"] = right_name;
    j["rows"] = json::array();
    for (const auto &r : rows) {
        json row;
        row["row"] = r.row;
        row["count"] = r.count;
        row[left_name] = r.left ? json(*r.left) : json(nullptr);
        row[right_name] = r.right ? json(*r.right) : json(nullptr);
        row["delta"] = r.delta ? json(*r.delta) : json(nullptr);
        row["winner"] = r.winner;
        j["rows"].push_back(row);
    }
    return j.dump(2) + "\n";
}

std::string Comparison::to_markdown() const {
    std::string out = fmt::format("| Row | n | {} | {} | delta |\n|---|---:|---:|---:|---:|\n", left_name, right_name);
    for (const auto &r : rows) {
        auto cell = [&](const std::optional<double> &v, const std::string &name) {
            if (!v) return std::string("-");
            const std::string s = fmt::format("{:.3f}", *v);
            return r.winner == name || r.winner == "tie" ? "**" + s + "**" : s;
        };
        out += fmt::format("| {} | {} | {} | {} | {} |\n", r.row, r.count, cell(r.left, left_name),
                           cell(r.right, right_name), r.delta ? fmt::format("{:+.3f}", *r.delta) : std::string("-"));
    }
    return out;
}

std::string Explanation::to_json() const {
    auto list = [](const std::vector<ScoredAnswer> &v) {
        json a = json::array();
        for (const auto &s : v) a.push_back({{"answer", s.answer}, {"score", s.score}});
        return a;
    };
    json j;
    j["id"] = id;
    j["question"] = question;
    j["answer"] = answer;
    j["biased_prediction"] = biased_prediction;
    j["debiased_prediction"] = debiased_prediction;
    j["te"] = list(te);
    j["nde"] = list(nde);
    j["tie"] = list(tie);
    return j.dump(2) + "\n";
}

Explanation explain(const model::CausalModel &m, const QASample &sample, const model::ImageSource &images,
                    std::size_t top) {
    const tensor::NoGradGuard no_grad;
    const auto x = m.encode(sample, images);
    const auto f = model::forward(x, m);
    Explanation e;
    e.id = sample.id;
    e.question = sample.question_raw;
    e.answer = sample.answer;
    e.biased_prediction = m.answer_vocab.token_at(model::argmax(f.scores.te.data()));
    e.debiased_prediction = m.answer_vocab.token_at(model::argmax(f.scores.tie.data()));
    e.te = top_answers(m, f.scores.te.data(), top);
    e.nde = top_answers(m, f.scores.nde.data(), top);
    e.tie = top_answers(m, f.scores.tie.data(), top);
    return e;
}

}  // namespace cfvqa::eval
