#pragma once

#include "cfvqa/config.hpp"
#include "cfvqa/dataset.hpp"
#include "cfvqa/encoders.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cfvqa::synth {

// Separation that gives a two-answer image-only Bayes accuracy of 0.9:
// 2 * Phi^-1(0.9).
inline constexpr double kDefaultSnr = 2.5631031310892007;

struct SynthConfig {
    std::size_t templates = 8;
    std::size_t answers_per_template = 2;
    std::size_t dim = 64;
    // Distance between any two answer prototypes in units of the per-axis
    // noise standard deviation.
    double snr = kDefaultSnr;
    double rho = 0.9;  // train probability of each template's preferred answer
    bool invert_test = true;
    std::size_t train_count = 2000;
    std::size_t test_count = 500;
    std::uint64_t seed = 0;

    void validate() const;
    static SynthConfig from_config(const KeyValueConfig &config, const std::string &prefix = "synth.");
    static std::vector<std::string> keys(const std::string &prefix = "synth.");
    std::vector<std::pair<std::string, std::string>> to_pairs() const;
};

// Accuracy of the Bayes-optimal classifier between two equally likely
// answers from image evidence alone: Phi(snr / 2).
double bayes_accuracy(double snr);

struct FeatureRecord {
    std::string image_ref;
    std::vector<float> vector;
};

struct SynthCorpus {
    std::vector<data::QASample> train;
    std::vector<data::QASample> test;
    std::vector<FeatureRecord> train_features;
    std::vector<FeatureRecord> test_features;

    model::ImageSource train_images() const;
    model::ImageSource test_images() const;
};

std::string template_question(std::size_t t);
std::string template_type(std::size_t t);
std::string answer_name(std::size_t t, std::size_t j);  // j = 0 is the preferred answer

// Train and test come from separate random streams, so the training set
// does not depend on invert_test or test_count.
SynthCorpus generate(const SynthConfig &cfg);

std::string features_jsonl(const std::vector<FeatureRecord> &features);

}  // namespace cfvqa::synth
