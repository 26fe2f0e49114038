#pragma once

// Helpers shared by the unit and acceptance tests: random instance
// generators and a second, deliberately naive, implementation of the greedy
// splitter used as an oracle.

#include "cfvqa/dataset.hpp"
#include "cfvqa/resplit.hpp"
#include "cfvqa/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace testsupport {

struct RefGroup {
    std::string question;
    std::string answer;
    std::size_t size = 0;
    std::set<std::string> words;
};

struct RefTrace {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::vector<std::size_t> repaired;
};

inline std::size_t count_new(const std::set<std::string> &words, const std::set<std::string> &seen) {
    std::size_t n = 0;
    for (const auto &w : words) n += seen.count(w) == 0;
    return n;
}

// Straight transcription of the loop: pick a test group (skipping ones that
// overshoot the target band when possible), add its words to
// C_test, pick the train group with the most words in C_test - C_train, add
// its words to C_train; stop once test holds enough samples; the rest go to
// train; then move uncovered test groups one by one.
inline RefTrace reference_trace(const std::vector<RefGroup> &groups, double fraction) {
    std::vector<std::size_t> r;
    std::size_t total = 0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        r.push_back(i);
        total += groups[i].size;
    }
    // Ranking: (score, size) descending, then key ascending.
    auto better = [&](std::size_t score_a, std::size_t a, std::size_t score_b, std::size_t b) {
        if (score_a != score_b) return score_a > score_b;
        if (groups[a].size != groups[b].size) return groups[a].size > groups[b].size;
        return std::tie(groups[a].question, groups[a].answer) < std::tie(groups[b].question, groups[b].answer);
    };
    RefTrace trace;
    std::set<std::string> c_train, c_test;
    std::size_t in_test = 0;
    while (static_cast<double>(in_test) < fraction * static_cast<double>(total) && !r.empty()) {
        // Candidates that keep the test split inside the tolerance band, or
        // everything if none do.
        std::vector<std::size_t> candidates;
        for (const std::size_t g : r) {
            if (static_cast<double>(in_test + groups[g].size) <= (fraction + 0.05) * static_cast<double>(total)) {
                candidates.push_back(g);
            }
        }
        if (candidates.empty()) candidates = r;
        std::size_t best = candidates[0];
        for (const std::size_t g : candidates) {
            if (better(count_new(groups[g].words, c_test), g, count_new(groups[best].words, c_test), best)) best = g;
        }
        trace.test.push_back(best);
        in_test += groups[best].size;
        c_test.insert(groups[best].words.begin(), groups[best].words.end());
        r.erase(std::find(r.begin(), r.end(), best));
        if (r.empty()) break;

        std::set<std::string> wanted;
        std::set_difference(c_test.begin(), c_test.end(), c_train.begin(), c_train.end(),
                            std::inserter(wanted, wanted.end()));
        auto gain = [&](std::size_t g) { return groups[g].words.size() - count_new(groups[g].words, wanted); };
        best = r[0];
        for (const std::size_t g : r) {
            if (better(gain(g), g, gain(best), best)) best = g;
        }
        trace.train.push_back(best);
        c_train.insert(groups[best].words.begin(), groups[best].words.end());
        r.erase(std::find(r.begin(), r.end(), best));
    }
    std::sort(r.begin(), r.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(groups[a].question, groups[a].answer) < std::tie(groups[b].question, groups[b].answer);
    });
    for (const std::size_t g : r) {
        trace.train.push_back(g);
        c_train.insert(groups[g].words.begin(), groups[g].words.end());
    }
    bool moved = true;
    while (moved) {
        moved = false;
        for (std::size_t i = 0; i < trace.test.size(); ++i) {
            const std::size_t g = trace.test[i];
            if (count_new(groups[g].words, c_train) > 0) {
                trace.test.erase(trace.test.begin() + static_cast<std::ptrdiff_t>(i));
                trace.train.push_back(g);
                trace.repaired.push_back(g);
                c_train.insert(groups[g].words.begin(), groups[g].words.end());
                moved = true;
                break;
            }
        }
    }
    return trace;
}

// Up to 10 groups with unique keys and random word sets over a small
// vocabulary, so ties and repairs both happen often.
inline std::vector<RefGroup> random_instance(cfvqa::Rng &rng) {
    static const std::vector<std::string> vocab{"is", "this", "ct", "mri", "liver", "lung", "yes", "no", "left",
                                                "right", "heart", "brain"};
    const std::size_t n = 2 + rng.below(9);
    std::set<std::pair<std::string, std::string>> keys;
    while (keys.size() < n) {
        keys.emplace("q" + std::to_string(rng.below(6)), "a" + std::to_string(rng.below(4)));
    }
    std::vector<RefGroup> out;
    for (const auto &[q, a] : keys) {
        RefGroup g{q, a, 1 + rng.below(4), {}};
        const std::size_t nw = 1 + rng.below(4);
        while (g.words.size() < nw) g.words.insert(vocab[rng.below(vocab.size())]);
        out.push_back(std::move(g));
    }
    // Present groups in a shuffled order; the splitter must not depend on it.
    rng.shuffle(out);
    return out;
}

inline std::vector<cfvqa::split::QAGroup> to_groups(const std::vector<RefGroup> &ref) {
    std::vector<cfvqa::split::QAGroup> out;
    std::size_t next_id = 0;
    for (const auto &g : ref) {
        cfvqa::split::QAGroup q;
        q.key = {g.question, g.answer};
        for (std::size_t i = 0; i < g.size; ++i) q.member_ids.push_back("s" + std::to_string(next_id++));
        q.concept_set = g.words;
        out.push_back(std::move(q));
    }
    return out;
}

// A question-answering corpus with a handful of templated questions, skewed
// answers and some rare words.
inline std::vector<cfvqa::data::QASample> random_corpus(cfvqa::Rng &rng, std::size_t n) {
    static const std::vector<std::string> organs{"liver", "lung", "heart", "kidney", "spleen", "brain"};
    static const std::vector<std::string> modalities{"ct", "mri", "x-ray"};
    static const std::vector<std::string> rare{"gallstone", "cyst", "nodule", "effusion"};
    std::vector<cfvqa::data::QASample> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::string question, answer, type;
        switch (rng.below(5)) {
        case 0:
            question = "Which organ is abnormal in this image?";
            answer = organs[std::min(rng.below(organs.size()), rng.below(organs.size()))];
            type = "Organ";
            break;
        case 1:
            question = "Is this a " + modalities[rng.below(modalities.size())] + " scan?";
            answer = rng.uniform() < 0.8 ? "yes" : "no";
            type = "Modality";
            break;
        case 2:
            question = "Does the " + organs[rng.below(organs.size())] + " look healthy?";
            answer = rng.uniform() < 0.7 ? "yes" : "no";
            type = "Abnormal";
            break;
        case 3:
            question = "Where is the " + rare[rng.below(rare.size())] + "?";
            answer = rng.uniform() < 0.5 ? "left " + organs[rng.below(2)] : "right " + organs[rng.below(2)];
            type = "Position";
            break;
        default:
            question = "What modality is used?";
            answer = modalities[rng.below(modalities.size())];
            type = "Modality";
        }
        cfvqa::data::QASample s;
        s.id = "r" + std::to_string(i);
        s.image_ref = "img" + std::to_string(rng.below(50));
        s.question_raw = question;
        s.question_tokens = cfvqa::data::normalize(question);
        s.answer = cfvqa::data::normalize_answer(answer);
        s.question_type = type;
        out.push_back(std::move(s));
    }
    return out;
}

struct SplitCheck {
    bool answers_disjoint = true;
    bool coverage = true;
    bool partition = true;
    bool atomic = true;
    bool fraction_ok = true;
};

// Checks the CP invariants directly on the labelled samples.
inline SplitCheck check_split(const std::vector<cfvqa::data::QASample> &input,
                              const cfvqa::split::ResplitOutput &out) {
    using cfvqa::data::Split;
    SplitCheck c;
    std::map<std::string, std::set<std::string>> train_answers, test_answers;
    std::map<std::pair<std::string, std::string>, std::set<Split>> key_sides;
    std::set<std::string> train_words, test_words;
    std::size_t n_test = 0;
    for (const auto &s : out.samples) {
        const std::string q = s.question_key();
        key_sides[{q, s.answer}].insert(s.split);
        auto words = cfvqa::split::concepts(s.question_tokens, s.answer);
        if (s.split == Split::train) {
            train_answers[q].insert(s.answer);
            train_words.insert(words.begin(), words.end());
        } else if (s.split == Split::test) {
            test_answers[q].insert(s.answer);
            test_words.insert(words.begin(), words.end());
            ++n_test;
        } else {
            c.partition = false;
        }
    }
    for (const auto &[q, answers] : test_answers) {
        for (const auto &a : answers) {
            if (train_answers.count(q) && train_answers[q].count(a)) c.answers_disjoint = false;
        }
    }
    c.coverage = std::includes(train_words.begin(), train_words.end(), test_words.begin(), test_words.end());
    for (const auto &[key, sides] : key_sides) c.atomic = c.atomic && sides.size() == 1;

    std::vector<std::string> ids;
    for (const auto &s : input) ids.push_back(s.id);
    std::vector<std::string> got = out.result.train_ids;
    got.insert(got.end(), out.result.test_ids.begin(), out.result.test_ids.end());
    std::sort(ids.begin(), ids.end());
    std::sort(got.begin(), got.end());
    c.partition = c.partition && ids == got && out.samples.size() == input.size();

    const double achieved = static_cast<double>(n_test) / static_cast<double>(input.size());
    const auto &st = out.result.stats;
    c.fraction_ok = std::abs(achieved - st.test_fraction_achieved) < 1e-12 &&
                    (std::abs(achieved - st.target_fraction) <= 0.05 + 1e-12 ||
                     (st.repair_lowered && st.repaired_group_count > 0 && achieved < st.target_fraction));
    return c;
}

}  // namespace testsupport
