#include "doctest.h"

#include "cfvqa/errors.hpp"
#include "cfvqa/evaluator.hpp"
#include "cfvqa/synth.hpp"

#include <cmath>
#include <map>
#include <set>

using namespace cfvqa;

namespace {

// Fraction of samples per template whose answer is the preferred one.
std::map<std::string, double> preferred_share(const std::vector<data::QASample> &samples, std::size_t templates) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
    for (const auto &s : samples) {
        auto &c = counts[s.question_key()];
        ++c.second;
        for (std::size_t t = 0; t < templates; ++t) {
            if (s.answer == synth::answer_name(t, 0)) ++c.first;
        }
    }
    std::map<std::string, double> out;
    for (const auto &[k, c] : counts) out[k] = static_cast<double>(c.first) / static_cast<double>(c.second);
    return out;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("default separation gives a Bayes accuracy of 0.9") {
    CHECK(synth::bayes_accuracy(synth::kDefaultSnr) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(synth::bayes_accuracy(0.0) == doctest::Approx(0.5));
}

TEST_CASE("measured prior matches rho per template") {
    for (const double rho : {0.5, 0.9}) {
        synth::SynthConfig cfg;
        cfg.rho = rho;
        cfg.train_count = 8000;
        cfg.test_count = 8000;
        const auto corpus = synth::generate(cfg);
        const auto train = preferred_share(corpus.train, cfg.templates);
        const auto test = preferred_share(corpus.test, cfg.templates);
        REQUIRE(train.size() == 8);
        for (const auto &[k, share] : train) {
            CHECK_MESSAGE(std::abs(share - rho) <= 0.05, k);
            CHECK_MESSAGE(std::abs(test.at(k) - (1.0 - rho)) <= 0.05, k);
        }
    }
}

TEST_CASE("prior-only accuracy on an inverted test set is about 1 - rho") {
    synth::SynthConfig cfg;
    cfg.rho = 0.95;
    cfg.test_count = 4000;
    const auto corpus = synth::generate(cfg);
    const auto report = eval::prior_only_baseline(corpus.train, corpus.test, data::KeyMode::exact_question, "synth",
                                                  eval::TypeMap());
    CHECK(std::abs(*report.overall.accuracy() - 0.05) <= 0.02);
}

TEST_CASE("generation is deterministic and seed-sensitive") {
    synth::SynthConfig cfg;
    cfg.train_count = 200;
    cfg.test_count = 50;
    const auto a = synth::generate(cfg);
    const auto b = synth::generate(cfg);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK(synth::features_jsonl(a.train_features) == synth::features_jsonl(b.train_features));
    cfg.seed = 1;
    const auto c = synth::generate(cfg);
    CHECK(synth::features_jsonl(a.train_features) != synth::features_jsonl(c.train_features));
}

TEST_CASE("training data does not depend on the test settings") {
    synth::SynthConfig cfg;
    cfg.train_count = 100;
    const auto a = synth::generate(cfg);
    cfg.invert_test = false;
    cfg.test_count = 77;
    const auto b = synth::generate(cfg);
    CHECK(a.train == b.train);
    CHECK(b.test.size() == 77);
}

TEST_CASE("every answer appears in both splits under defaults") {
    const auto corpus = synth::generate(synth::SynthConfig{});
    std::set<std::string> train, test;
    for (const auto &s : corpus.train) train.insert(s.answer);
    for (const auto &s : corpus.test) test.insert(s.answer);
    CHECK(train.size() == 16);
    CHECK(train == test);
    CHECK(corpus.train.front().split == data::Split::train);
    CHECK(corpus.test.front().split == data::Split::test);
    CHECK(corpus.train_images().input_dim() == 64);
}

TEST_CASE("prototype separation matches snr") {
    // Mean of many draws per answer approaches its prototype; distances
    // between two answers of one template should be close to snr.
    synth::SynthConfig cfg;
    cfg.rho = 0.5;
    cfg.train_count = 16000;
    const auto corpus = synth::generate(cfg);
    std::map<std::string, std::pair<std::vector<double>, std::size_t>> means;
    for (std::size_t i = 0; i < corpus.train.size(); ++i) {
        auto &m = means[corpus.train[i].answer];
        if (m.first.empty()) m.first.assign(cfg.dim, 0.0);
        for (std::size_t d = 0; d < cfg.dim; ++d) m.first[d] += corpus.train_features[i].vector[d];
        ++m.second;
    }
    auto mean_of = [&](const std::string &a) {
        auto v = means.at(a).first;
        for (auto &x : v) x /= static_cast<double>(means.at(a).second);
        return v;
    };
    const auto p0 = mean_of(synth::answer_name(0, 0));
    const auto p1 = mean_of(synth::answer_name(0, 1));
    double dist = 0.0;
    for (std::size_t d = 0; d < cfg.dim; ++d) dist += (p0[d] - p1[d]) * (p0[d] - p1[d]);
    // ~1000 draws per answer; the residual noise adds about dim/500 to the
    // squared distance.
    CHECK(std::sqrt(dist) == doctest::Approx(std::sqrt(cfg.snr * cfg.snr + 64.0 / 500.0)).epsilon(0.08));
}

TEST_CASE("configuration is validated") {
    synth::SynthConfig cfg;
    cfg.templates = 40;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.rho = 0.3;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    KeyValueConfig kv;
    kv.set("synth.rho", "0.8");
    kv.set("synth.answers_per_template", "3");
    const auto parsed = synth::SynthConfig::from_config(kv);
    CHECK(parsed.rho == 0.8);
    CHECK(parsed.answers_per_template == 3);
    const auto three = synth::generate([&] {
        auto c = parsed;
        c.train_count = 300;
        return c;
    }());
    std::set<std::string> answers;
    for (const auto &s : three.train) answers.insert(s.answer);
    CHECK(answers.size() == 24);
}

}  // TEST_SUITE
