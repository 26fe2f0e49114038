#pragma once

#include "cfvqa/dataset.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace cfvqa::split {

struct GroupKey {
    std::string question;  // normalized question text
    std::string answer;    // normalized answer

    auto operator<=>(const GroupKey &) const = default;
    bool operator==(const GroupKey &) const = default;
};

struct QAGroup {
    GroupKey key;
    std::vector<std::string> member_ids;  // sorted
    std::set<std::string> concept_set;
};

// Question tokens plus answer tokens.
std::set<std::string> concepts(const std::vector<std::string> &question_tokens, const std::string &answer);

// One group per (question, answer) key, sorted by key.
std::vector<QAGroup> group_samples(const std::vector<data::QASample> &samples);

struct TypeDivergence {
    std::string question_type;
    std::size_t train_count = 0;
    std::size_t test_count = 0;
    // Total-variation distance of the answer distributions; empty when one
    // side has no samples of this type.
    std::optional<double> tv_distance;
};

struct SplitStats {
    std::uint64_t seed = 0;
    double target_fraction = 0.0;
    std::size_t train_samples = 0;
    std::size_t test_samples = 0;
    double test_fraction_achieved = 0.0;
    bool word_coverage_ok = false;
    std::size_t repaired_group_count = 0;
    // Achieved fraction is below target - 0.05 because repair moved groups.
    bool repair_lowered = false;
    bool within_tolerance = false;
    std::vector<TypeDivergence> per_type;
};

struct SplitResult {
    // Group indices in assignment order (greedy picks first, then the
    // remainder in key order).
    std::vector<std::size_t> train_groups;
    std::vector<std::size_t> test_groups;
    // Groups moved from test to train by coverage repair, in move order.
    std::vector<std::size_t> repaired_groups;
    std::vector<std::string> train_ids;  // sorted
    std::vector<std::string> test_ids;   // sorted
    SplitStats stats;
};

// Allowed gap between the requested and achieved test fraction.
inline constexpr double kFractionTolerance = 0.05;

// Greedy alternating split. Test picks maximize new concepts relative to
// the test set; train picks maximize |C_group ∩ (C_test - C_train)|. Ties go
// to the larger group, then the smaller key. Test picks skip groups that
// would overshoot the target by more than kFractionTolerance unless nothing
// else is left. Group keys are unique, so the
// seed never has to break a tie; it is kept for interface stability.
SplitResult greedy_resplit(const std::vector<QAGroup> &groups, double test_fraction, std::uint64_t seed);

// Moves the first test group that uses a word unseen in train, one at a
// time, until every test word is covered. Returns the moved groups.
std::vector<std::size_t> coverage_repair(const std::vector<QAGroup> &groups, std::vector<std::size_t> &train,
                                         std::vector<std::size_t> &test);

// Copies of the samples with split set from the result; input order kept.
std::vector<data::QASample> apply_split(const std::vector<data::QASample> &samples, const std::vector<QAGroup> &groups,
                                        const SplitResult &result);

double total_variation(const std::map<std::string, std::size_t> &p, const std::map<std::string, std::size_t> &q);

// Per-type answer histograms for samples whose split is train or test.
std::vector<TypeDivergence> type_divergence(const std::vector<data::QASample> &samples);

struct ResplitOutput {
    std::vector<QAGroup> groups;
    SplitResult result;  // stats.per_type filled in
    std::vector<data::QASample> samples;  // input order, split assigned
};

// group_samples + greedy_resplit + apply_split + per-type divergence.
ResplitOutput resplit_samples(const std::vector<data::QASample> &samples, double test_fraction, std::uint64_t seed);

struct SplitReport {
    std::string csv;  // question_type,answer,train_count,train_prop,test_count,test_prop,tv
    std::string svg;
    std::string stats_json;
};

SplitReport split_report(const std::vector<QAGroup> &groups, const SplitResult &result,
                         const std::vector<data::QASample> &split_samples);

}  // namespace cfvqa::split
