#include "cfvqa/resplit.hpp"

#include "cfvqa/errors.hpp"
#include "cfvqa/io.hpp"

#include "json.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace cfvqa::split {

using data::QASample;
using data::Split;

namespace {

std::string describe(const QAGroup &g) { return "(\"" + g.key.question + "\", \"" + g.key.answer + "\")"; }

std::string describe_groups(const std::vector<QAGroup> &groups, const std::vector<std::size_t> &which) {
    std::string out;
    for (const std::size_t i : which) {
        out += (out.empty() ? "" : ", ") + describe(groups[i]);
    }
    return out;
}

bool covered(const QAGroup &g, const std::set<std::string> &words) {
    return std::all_of(g.concept_set.begin(), g.concept_set.end(),
                       [&](const std::string &w) { return words.count(w) != 0; });
}

std::string xml_escape(std::string_view text) {
    std::string out;
    for (const char c : text) {
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

std::set<std::string> concepts(const std::vector<std::string> &question_tokens, const std::string &answer) {
    std::set<std::string> out(question_tokens.begin(), question_tokens.end());
    for (auto &t : data::normalize(answer)) {
        out.insert(std::move(t));
    }
    return out;
}

std::vector<QAGroup> group_samples(const std::vector<QASample> &samples) {
    std::map<GroupKey, QAGroup> by_key;
    for (const auto &s : samples) {
        GroupKey key{s.question_key(), s.answer};
        auto [it, inserted] = by_key.try_emplace(key);
        if (inserted) {
            it->second.key = key;
            it->second.concept_set = concepts(s.question_tokens, s.answer);
        }
        it->second.member_ids.push_back(s.id);
    }
    std::vector<QAGroup> out;
    out.reserve(by_key.size());
    for (auto &[key, group] : by_key) {
        std::sort(group.member_ids.begin(), group.member_ids.end());
        out.push_back(std::move(group));
    }
    return out;
}

SplitResult greedy_resplit(const std::vector<QAGroup> &groups, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ValidationError(fmt::format("test fraction must be in (0, 1), got {}", test_fraction));
    }
    if (groups.size() < 2) {
        std::vector<std::size_t> all(groups.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        throw InfeasibleSplitError(fmt::format("need at least 2 (question, answer) groups, got {}: {}", groups.size(),
                                               describe_groups(groups, all)));
    }
    const std::size_t n = groups.size();

    // Dense word ids so the selection loops work on flat membership arrays.
    std::unordered_map<std::string, std::size_t> word_id;
    std::vector<std::vector<std::size_t>> words(n);
    std::size_t total = 0;
    for (std::size_t g = 0; g < n; ++g) {
        for (const auto &w : groups[g].concept_set) {
            words[g].push_back(word_id.try_emplace(w, word_id.size()).first->second);
        }
        total += groups[g].member_ids.size();
    }
    std::vector<char> in_test(word_id.size(), 0), in_train(word_id.size(), 0);
    std::vector<char> remaining(n, 1);
    std::size_t remaining_count = n;

    // Highest score wins; then more members; then the smaller key.
    auto pick = [&](auto score, auto eligible) {
        std::size_t best = n, best_score = 0;
        for (std::size_t g = 0; g < n; ++g) {
            if (!remaining[g] || !eligible(g)) continue;
            const std::size_t s = score(g);
            const std::size_t size = groups[g].member_ids.size();
            if (best == n || s > best_score ||
                (s == best_score && (size > groups[best].member_ids.size() ||
                                     (size == groups[best].member_ids.size() && groups[g].key < groups[best].key)))) {
                best = g;
                best_score = s;
            }
        }
        if (best != n) {
            remaining[best] = 0;
            --remaining_count;
        }
        return best;
    };
    auto any = [](std::size_t) { return true; };

    SplitResult result;
    const double target = test_fraction * static_cast<double>(total);
    const double ceiling = (test_fraction + kFractionTolerance) * static_cast<double>(total);
    std::size_t test_samples = 0;
    auto test_score = [&](std::size_t g) {
        std::size_t fresh = 0;
        for (const std::size_t w : words[g]) fresh += !in_test[w];
        return fresh;
    };
    while (static_cast<double>(test_samples) < target && remaining_count > 0) {
        // Groups that would push the test split past the tolerance band are
        // passed over while any smaller group remains.
        std::size_t t = pick(test_score, [&](std::size_t g) {
            return static_cast<double>(test_samples + groups[g].member_ids.size()) <= ceiling;
        });
        if (t == n) t = pick(test_score, any);
        result.test_groups.push_back(t);
        test_samples += groups[t].member_ids.size();
        for (const std::size_t w : words[t]) in_test[w] = 1;
        if (remaining_count == 0) break;

        const std::size_t r = pick([&](std::size_t g) {
            std::size_t gain = 0;
            for (const std::size_t w : words[g]) gain += in_test[w] && !in_train[w];
            return gain;
        }, any);
        result.train_groups.push_back(r);
        for (const std::size_t w : words[r]) in_train[w] = 1;
    }
    std::vector<std::size_t> rest;
    for (std::size_t g = 0; g < n; ++g) {
        if (remaining[g]) rest.push_back(g);
    }
    std::sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) { return groups[a].key < groups[b].key; });
    result.train_groups.insert(result.train_groups.end(), rest.begin(), rest.end());

    result.repaired_groups = coverage_repair(groups, result.train_groups, result.test_groups);
    if (result.test_groups.empty()) {
        throw InfeasibleSplitError(
            "coverage repair emptied the test split; blocking groups: " +
            describe_groups(groups, result.repaired_groups));
    }

    for (const std::size_t g : result.train_groups) {
        result.train_ids.insert(result.train_ids.end(), groups[g].member_ids.begin(), groups[g].member_ids.end());
    }
    for (const std::size_t g : result.test_groups) {
        result.test_ids.insert(result.test_ids.end(), groups[g].member_ids.begin(), groups[g].member_ids.end());
    }
    std::sort(result.train_ids.begin(), result.train_ids.end());
    std::sort(result.test_ids.begin(), result.test_ids.end());

    SplitStats &st = result.stats;
    st.seed = seed;
    st.target_fraction = test_fraction;
    st.train_samples = result.train_ids.size();
    st.test_samples = result.test_ids.size();
    st.test_fraction_achieved = static_cast<double>(st.test_samples) / static_cast<double>(total);
    st.repaired_group_count = result.repaired_groups.size();
    std::set<std::string> train_words;
    for (const std::size_t g : result.train_groups) {
        train_words.insert(groups[g].concept_set.begin(), groups[g].concept_set.end());
    }
    st.word_coverage_ok = std::all_of(result.test_groups.begin(), result.test_groups.end(),
                                      [&](std::size_t g) { return covered(groups[g], train_words); });
    st.within_tolerance = std::abs(st.test_fraction_achieved - test_fraction) <= kFractionTolerance + 1e-12;
    st.repair_lowered =
        !st.within_tolerance && st.test_fraction_achieved < test_fraction && st.repaired_group_count > 0;
    if (!st.within_tolerance) {
        spdlog::warn("achieved test fraction {:.3f} vs target {:.3f}{}", st.test_fraction_achieved, test_fraction,
                     st.repair_lowered ? " (lowered by coverage repair)" : "");
    }
    return result;
}

std::vector<std::size_t> coverage_repair(const std::vector<QAGroup> &groups, std::vector<std::size_t> &train,
                                         std::vector<std::size_t> &test) {
    std::set<std::string> train_words;
    for (const std::size_t g : train) {
        train_words.insert(groups[g].concept_set.begin(), groups[g].concept_set.end());
    }
    std::vector<std::size_t> moved;
    for (;;) {
        auto it = std::find_if(test.begin(), test.end(), [&](std::size_t g) { return !covered(groups[g], train_words); });
        if (it == test.end()) break;
        const std::size_t g = *it;
        test.erase(it);
        train.push_back(g);
        train_words.insert(groups[g].concept_set.begin(), groups[g].concept_set.end());
        moved.push_back(g);
    }
    return moved;
}

std::vector<QASample> apply_split(const std::vector<QASample> &samples, const std::vector<QAGroup> &groups,
                                  const SplitResult &result) {
    std::map<GroupKey, Split> side;
    for (const std::size_t g : result.train_groups) side[groups[g].key] = Split::train;
    for (const std::size_t g : result.test_groups) side[groups[g].key] = Split::test;
    std::vector<QASample> out = samples;
    for (auto &s : out) {
        const auto it = side.find(GroupKey{s.question_key(), s.answer});
        if (it == side.end()) {
            throw ValidationError("sample " + s.id + " belongs to no group of this split");
        }
        s.split = it->second;
    }
    return out;
}

double total_variation(const std::map<std::string, std::size_t> &p, const std::map<std::string, std::size_t> &q) {
    double np = 0.0, nq = 0.0;
    for (const auto &[a, c] : p) np += static_cast<double>(c);
    for (const auto &[a, c] : q) nq += static_cast<double>(c);
    std::set<std::string> support;
    for (const auto &[a, c] : p) support.insert(a);
    for (const auto &[a, c] : q) support.insert(a);
    double sum = 0.0;
    for (const auto &a : support) {
        const auto ip = p.find(a);
        const auto iq = q.find(a);
        const double pa = ip == p.end() ? 0.0 : static_cast<double>(ip->second) / np;
        const double qa = iq == q.end() ? 0.0 : static_cast<double>(iq->second) / nq;
        sum += std::abs(pa - qa);
    }
    return 0.5 * sum;
}

namespace {

struct TypeHistogram {
    std::map<std::string, std::size_t> train, test;
    std::size_t train_total = 0, test_total = 0;
};

std::map<std::string, TypeHistogram> histograms(const std::vector<QASample> &samples) {
    std::map<std::string, TypeHistogram> out;
    for (const auto &s : samples) {
        auto &h = out[s.question_type];
        if (s.split == Split::train) {
            ++h.train[s.answer];
            ++h.train_total;
        } else if (s.split == Split::test) {
            ++h.test[s.answer];
            ++h.test_total;
        }
    }
    return out;
}

std::optional<double> tv_of(const TypeHistogram &h) {
    if (h.train_total == 0 || h.test_total == 0) return std::nullopt;
    return total_variation(h.train, h.test);
}

}  // namespace

std::vector<TypeDivergence> type_divergence(const std::vector<QASample> &samples) {
    std::vector<TypeDivergence> out;
    for (const auto &[type, h] : histograms(samples)) {
        if (h.train_total + h.test_total == 0) continue;
        out.push_back({type, h.train_total, h.test_total, tv_of(h)});
    }
    return out;
}

ResplitOutput resplit_samples(const std::vector<QASample> &samples, double test_fraction, std::uint64_t seed) {
    ResplitOutput out;
    out.groups = group_samples(samples);
    out.result = greedy_resplit(out.groups, test_fraction, seed);
    out.samples = apply_split(samples, out.groups, out.result);
    out.result.stats.per_type = type_divergence(out.samples);
    return out;
}

SplitReport split_report(const std::vector<QAGroup> &groups, const SplitResult &result,
                         const std::vector<QASample> &split_samples) {
    SplitReport report;
    const auto hist = histograms(split_samples);

    report.csv = "question_type,answer,train_count,train_prop,test_count,test_prop,tv\n";
    for (const auto &[type, h] : hist) {
        const auto tv = tv_of(h);
        std::set<std::string> answers;
        for (const auto &[a, c] : h.train) answers.insert(a);
        for (const auto &[a, c] : h.test) answers.insert(a);
        for (const auto &a : answers) {
            const std::size_t tr = h.train.count(a) ? h.train.at(a) : 0;
            const std::size_t te = h.test.count(a) ? h.test.at(a) : 0;
            report.csv += fmt::format("{},{},{},{:.6f},{},{:.6f},{}\n", io::csv_field(type), io::csv_field(a), tr,
                                      h.train_total ? static_cast<double>(tr) / h.train_total : 0.0, te,
                                      h.test_total ? static_cast<double>(te) / h.test_total : 0.0,
                                      tv ? fmt::format("{:.6f}", *tv) : std::string());
        }
    }

    // One panel per question type: paired bars (train, test) per answer,
    // height = proportion within that split.
    constexpr int kBar = 10, kGap = 8, kPanelH = 170, kPlotH = 110, kLeft = 50, kTop = 30;
    constexpr std::size_t kMaxAnswers = 12;
    int width = 400;
    std::string panels;
    int y0 = kTop;
    for (const auto &[type, h] : hist) {
        std::vector<std::pair<std::size_t, std::string>> ranked;
        std::set<std::string> answers;
        for (const auto &[a, c] : h.train) answers.insert(a);
        for (const auto &[a, c] : h.test) answers.insert(a);
        for (const auto &a : answers) {
            const std::size_t c = (h.train.count(a) ? h.train.at(a) : 0) + (h.test.count(a) ? h.test.at(a) : 0);
            ranked.emplace_back(c, a);
        }
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto &x, const auto &y) { return x.first > y.first; });
        if (ranked.size() > kMaxAnswers) ranked.resize(kMaxAnswers);

        const auto tv = tv_of(h);
        panels += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"13\" font-weight=\"bold\">{} (train {}, test {}, TV {})</text>\n",
                              kLeft, y0 - 8, xml_escape(type), h.train_total, h.test_total,
                              tv ? fmt::format("{:.3f}", *tv) : std::string("n/a"));
        panels += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#888\"/>\n", kLeft, y0 + kPlotH,
                              kLeft + static_cast<int>(ranked.size()) * (2 * kBar + kGap) + kGap, y0 + kPlotH);
        int x = kLeft + kGap;
        for (const auto &[count, a] : ranked) {
            const double ptr = h.train_total ? static_cast<double>(h.train.count(a) ? h.train.at(a) : 0) / h.train_total : 0.0;
            const double pte = h.test_total ? static_cast<double>(h.test.count(a) ? h.test.at(a) : 0) / h.test_total : 0.0;
            const double htr = ptr * kPlotH, hte = pte * kPlotH;
            panels += fmt::format("<rect x=\"{}\" y=\"{:.2f}\" width=\"{}\" height=\"{:.2f}\" fill=\"#4878a8\"/>\n", x,
                                  y0 + kPlotH - htr, kBar, htr);
            panels += fmt::format("<rect x=\"{}\" y=\"{:.2f}\" width=\"{}\" height=\"{:.2f}\" fill=\"#e0893a\"/>\n",
                                  x + kBar, y0 + kPlotH - hte, kBar, hte);
            panels += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"9\" transform=\"rotate(40 {} {})\">{}</text>\n", x,
                                  y0 + kPlotH + 12, x, y0 + kPlotH + 12, xml_escape(a.substr(0, 18)));
            x += 2 * kBar + kGap;
        }
        width = std::max(width, x + 60);
        y0 += kPanelH;
    }
    const int height = y0;
    report.svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\">\n"
        "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        "<rect x=\"{}\" y=\"6\" width=\"10\" height=\"10\" fill=\"#4878a8\"/><text x=\"{}\" y=\"15\" font-size=\"11\">train</text>\n"
        "<rect x=\"{}\" y=\"6\" width=\"10\" height=\"10\" fill=\"#e0893a\"/><text x=\"{}\" y=\"15\" font-size=\"11\">test</text>\n",
        width, height, width - 120, width - 106, width - 60, width - 46);
    report.svg += panels + "</svg>\n";

    const SplitStats &st = result.stats;
    nlohmann::ordered_json j;
    j["seed"] = st.seed;
    j["target_fraction"] = st.target_fraction;
    j["test_fraction_achieved"] = st.test_fraction_achieved;
    j["within_tolerance"] = st.within_tolerance;
    j["repair_lowered"] = st.repair_lowered;
    j["word_coverage_ok"] = st.word_coverage_ok;
    j["train_samples"] = st.train_samples;
    j["test_samples"] = st.test_samples;
    j["train_groups"] = result.train_groups.size();
    j["test_groups"] = result.test_groups.size();
    j["repaired_group_count"] = st.repaired_group_count;
    j["repaired_groups"] = nlohmann::ordered_json::array();
    for (const std::size_t g : result.repaired_groups) {
        j["repaired_groups"].push_back({{"question", groups[g].key.question}, {"answer", groups[g].key.answer}});
    }
    j["per_type"] = nlohmann::ordered_json::array();
    for (const auto &d : type_divergence(split_samples)) {
        nlohmann::ordered_json row;
        row["question_type"] = d.question_type;
        row["train_count"] = d.train_count;
        row["test_count"] = d.test_count;
        row["tv_distance"] = d.tv_distance ? nlohmann::ordered_json(*d.tv_distance) : nlohmann::ordered_json(nullptr);
        j["per_type"].push_back(row);
    }
    report.stats_json = j.dump(2) + "\n";
    return report;
}

}  // namespace cfvqa::split
