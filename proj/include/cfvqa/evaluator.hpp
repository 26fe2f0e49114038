#pragma once

#include "cfvqa/causal_model.hpp"
#include "cfvqa/dataset.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cfvqa::eval {

// Report rows after "Overall", in order.
inline const std::vector<std::string> kTableTypes = {"Abnormal", "Color",    "Modality", "Organ",
                                                     "Plane",    "Position", "Size"};
inline const std::string kOtherType = "Other";

// Source question-type label -> report row. Multi-label values ("PRES, POS")
// use their first label; anything unmapped lands in Other.
class TypeMap {
  public:
    // Maps each of the seven row names to itself.
    TypeMap();
    static TypeMap from_config(const KeyValueConfig &config);
    static TypeMap load(const std::string &path);

    std::string row(const std::string &question_type) const;

  private:
    std::map<std::string, std::string> map_;
};

struct RowStats {
    std::size_t correct = 0;
    std::size_t count = 0;
    std::optional<double> accuracy() const;
};

struct EvalReport {
    std::string mode;  // biased, debiased or prior_only
    std::string dataset;
    RowStats overall;
    std::map<std::string, RowStats> rows;  // every kTableTypes entry plus Other

    std::string to_json() const;
    static EvalReport from_json(std::string_view text);
};

struct Prediction {
    std::string id;
    std::string answer;     // gold
    std::string predicted;
};

EvalReport summarize(const std::vector<data::QASample> &samples, const std::vector<Prediction> &predictions,
                     const std::string &mode, const std::string &dataset, const TypeMap &types);

// Exact-match accuracy of argmax(TE) (biased) or argmax(TIE) (debiased).
EvalReport evaluate(const model::CausalModel &m, const std::vector<data::QASample> &samples,
                    const model::ImageSource &images, model::Mode mode, const std::string &dataset,
                    const TypeMap &types, std::vector<Prediction> *predictions = nullptr);

// Majority train answer per key, falling back from exact question to
// question type to the global majority; ties go to the smaller answer.
EvalReport prior_only_baseline(const std::vector<data::QASample> &train, const std::vector<data::QASample> &test,
                               data::KeyMode key_mode, const std::string &dataset, const TypeMap &types,
                               std::vector<Prediction> *predictions = nullptr);

struct ComparisonRow {
    std::string row;
    std::size_t count = 0;
    std::optional<double> left, right;
    std::optional<double> delta;  // right - left
    std::string winner;           // left name, right name, "tie" or ""
};

struct Comparison {
    std::string left_name, right_name;
    std::vector<ComparisonRow> rows;  // Overall, the seven types, Other

    std::string to_csv() const;
    std::string to_json() const;
    // Winners in bold.
    std::string to_markdown() const;
};

Comparison compare(const EvalReport &left, const EvalReport &right);

struct ScoredAnswer {
    std::string answer;
    float score = 0.0f;
};

struct Explanation {
    std::string id;
    std::string question;
    std::string answer;
    std::string biased_prediction;
    std::string debiased_prediction;
    std::vector<ScoredAnswer> te, nde, tie;  // top entries, best first

    std::string to_json() const;
};

Explanation explain(const model::CausalModel &m, const data::QASample &sample, const model::ImageSource &images,
                    std::size_t top = 5);

}  // namespace cfvqa::eval
