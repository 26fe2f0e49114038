// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails. Criterion 7 needs user-supplied SLAKE files and reports
// SKIP otherwise.

#include "model_support.hpp"
#include "support.hpp"

#include "cfvqa/causal_model.hpp"
#include "cfvqa/config.hpp"
#include "cfvqa/errors.hpp"
#include "cfvqa/evaluator.hpp"
#include "cfvqa/gradcheck.hpp"
#include "cfvqa/io.hpp"
#include "cfvqa/resplit.hpp"
#include "cfvqa/synth.hpp"
#include "cfvqa/trainer.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>

#ifndef CFVQA_SOURCE_DIR
#define CFVQA_SOURCE_DIR "."
#endif

using namespace cfvqa;
namespace fs = std::filesystem;

namespace {

enum class Outcome { pass, fail, skip };

struct Result {
    Outcome outcome = Outcome::fail;
    std::string detail;
};

Result verdict(bool ok, std::string detail) { return {ok ? Outcome::pass : Outcome::fail, std::move(detail)}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path config_path(const std::string &name) { return fs::path(CFVQA_SOURCE_DIR) / "config" / name; }

fs::path scratch(const std::string &name) {
    auto dir = fs::temp_directory_path() / ("cfvqa_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// ------------------------------------------------------------------ 1

Result gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = tensor::run_gradcheck_suite(1, 100, 1e-3f, 1e-3);
    const double secs = seconds_since(t0);
    return verdict(r.passed && r.max_rel_error <= 1e-3 && secs < 30.0,
                   fmt::format("100 networks, {} parameter checks, max rel err {:.2e} (<= 1e-3), {:.1f}s (< 30s)",
                               r.cases.size(), r.max_rel_error, secs));
}

// ------------------------------------------------------------------ 2

Result splitter_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(2024);
    std::size_t compared = 0, feasible = 0, mismatched = 0;
    for (int i = 0; i < 200; ++i) {
        const auto ref = testsupport::random_instance(rng);
        const double fraction = 0.15 + 0.5 * rng.uniform();
        const auto expected = testsupport::reference_trace(ref, fraction);
        const auto groups = testsupport::to_groups(ref);
        ++compared;
        if (expected.test.empty()) {
            try {
                (void)split::greedy_resplit(groups, fraction, 7);
                ++mismatched;
            } catch (const InfeasibleSplitError &) {
            }
            continue;
        }
        ++feasible;
        const auto got = split::greedy_resplit(groups, fraction, 7);
        if (got.train_groups != expected.train || got.test_groups != expected.test ||
            got.repaired_groups != expected.repaired) {
            ++mismatched;
        }
    }
    const double secs = seconds_since(t0);
    return verdict(mismatched == 0 && feasible >= 20 && secs < 10.0,
                   fmt::format("{} instances ({} feasible), {} mismatches, {:.2f}s (< 10s)", compared, feasible,
                               mismatched, secs));
}

// ------------------------------------------------------------------ 3

Result cp_invariants() {
    Rng rng(33);
    std::size_t feasible = 0, violations = 0;
    for (int i = 0; i < 60; ++i) {
        const auto corpus = testsupport::random_corpus(rng, 40 + rng.below(300));
        const double fraction = 0.15 + 0.3 * rng.uniform();
        split::ResplitOutput out;
        try {
            out = split::resplit_samples(corpus, fraction, static_cast<std::uint64_t>(i));
        } catch (const InfeasibleSplitError &) {
            continue;
        }
        ++feasible;
        const auto c = testsupport::check_split(corpus, out);
        violations += !(c.answers_disjoint && c.coverage && c.partition && c.atomic && c.fraction_ok);
    }
    return verdict(violations == 0 && feasible >= 30,
                   fmt::format("{} feasible random corpora, {} with a violated invariant", feasible, violations));
}

// ------------------------------------------------------------------ 4

model::CausalModel random_checkpoint(Rng &rng, model::Fusion fusion, model::BiasMode bias, const fs::path &dir) {
    model::Dims dims;
    dims.embed = 2 + rng.below(6);
    dims.question = 2 + rng.below(8);
    dims.image_in = 3 + rng.below(8);
    dims.image = 2 + rng.below(8);
    dims.knowledge = 2 + rng.below(8);
    std::vector<std::string> words, answers;
    for (std::size_t i = 0; i < 3 + rng.below(5); ++i) words.push_back(fmt::format("w{}", i));
    for (std::size_t i = 0; i < 2 + rng.below(6); ++i) answers.push_back(fmt::format("a{}", i));
    auto m = model::CausalModel::init({dims, fusion, bias}, data::Vocab::build(words), data::Vocab::build(answers),
                                      rng.next());
    // Spread parameters beyond the init range so saturation regions show up.
    auto params = m.parameters();
    for (auto &p : params.items()) {
        for (auto &x : p.value.mutable_data()) x = static_cast<float>(rng.uniform(-2.0, 2.0));
    }
    m.save(dir);
    return model::CausalModel::load(dir);
}

model::Encoded random_input(Rng &rng, const model::CausalModel &m) {
    model::Encoded x;
    for (std::size_t i = 0; i < 1 + rng.below(4); ++i) x.tokens.push_back(rng.below(m.question_vocab.size()));
    x.image = testsupport::random_image(rng, m.spec.dims.image_in);
    x.answer = rng.below(m.answer_vocab.size());
    return x;
}

Result causal_identities() {
    Rng rng(44);
    const auto dir = scratch("identities");
    std::size_t checkpoints = 0, tie_bad = 0, cancel_bad = 0, nde_bad = 0, shift_bad = 0;
    for (int i = 0; i < 40; ++i) {
        const auto fusion = i % 2 ? model::Fusion::hm : model::Fusion::sum;
        const auto bias = (i / 2) % 2 ? model::BiasMode::vision : model::BiasMode::question;
        const auto m = random_checkpoint(rng, fusion, bias, dir);
        ++checkpoints;
        for (int j = 0; j < 10; ++j) {
            const auto x = random_input(rng, m);
            const auto f = model::forward(x, m);
            for (std::size_t a = 0; a < f.scores.te.numel(); ++a) {
                tie_bad += f.scores.tie[a] != f.scores.te[a] - f.scores.nde[a];
            }

            // Same kept modality, other modality redrawn: NDE must not move.
            auto y = random_input(rng, m);
            if (bias == model::BiasMode::question) {
                y.tokens = x.tokens;
            } else {
                y.image = x.image;
            }
            nde_bad += model::forward(y, m).scores.nde.to_vector() != f.scores.nde.to_vector();

            // Adding a constant to every TIE entry keeps the decision.
            for (const float c : {-3.0f, -0.5f, 0.25f, 2.0f}) {
                auto shifted = f.scores.tie.to_vector();
                for (auto &v : shifted) v += c;
                shift_bad += model::argmax(shifted) != model::argmax(f.scores.tie.data());
            }

            if (fusion == model::Fusion::sum && bias == model::BiasMode::question) {
                auto other = m;
                other.heads.q_w = model::init_uniform(rng, m.heads.q_w.shape(), 1);
                other.heads.q_b = model::init_uniform(rng, m.heads.q_b.shape(), 1);
                const auto tie2 = model::forward(x, other).scores.tie;
                for (std::size_t a = 0; a < tie2.numel(); ++a) {
                    const double scale = std::max({1.0, std::abs(double(f.scores.te[a])), std::abs(double(tie2[a]))});
                    cancel_bad += std::abs(double(tie2[a]) - double(f.scores.tie[a])) > 1e-5 * scale;
                }
            }
        }
    }
    return verdict(tie_bad + cancel_bad + nde_bad + shift_bad == 0,
                   fmt::format("{} reloaded checkpoints x 10 inputs: TIE=TE-NDE violations {}, SUM Z_q cancellation "
                               "{}, same-kept-input NDE {}, shift invariance {}",
                               checkpoints, tie_bad, cancel_bad, nde_bad, shift_bad));
}

// ------------------------------------------------------------------ 5

struct SynthRun {
    double biased_inverted = 0, debiased_inverted = 0, biased_plain = 0, debiased_plain = 0;
};

SynthRun synth_run(std::uint64_t seed) {
    auto scfg = synth::SynthConfig::from_config(KeyValueConfig::load(config_path("synth.cfg").string()));
    auto tcfg = train::TrainConfig::from_config(KeyValueConfig::load(config_path("train_synth.cfg").string()));
    scfg.seed = seed;
    tcfg.seed = seed;
    const auto inverted = synth::generate(scfg);
    scfg.invert_test = false;
    const auto plain = synth::generate(scfg);  // same training data, prior-following test

    const auto result = train::train(tcfg, inverted.train, inverted.train_images());
    auto acc = [&](const synth::SynthCorpus &c, model::Mode mode) {
        return *eval::evaluate(result.model, c.test, c.test_images(), mode, "synth", eval::TypeMap())
                    .overall.accuracy();
    };
    return {acc(inverted, model::Mode::biased), acc(inverted, model::Mode::debiased), acc(plain, model::Mode::biased),
            acc(plain, model::Mode::debiased)};
}

Result synthetic_debiasing() {
    const auto t0 = std::chrono::steady_clock::now();
    SynthRun mean;
    constexpr int kSeeds = 5;
    for (int s = 0; s < kSeeds; ++s) {
        const auto r = synth_run(static_cast<std::uint64_t>(s));
        mean.biased_inverted += r.biased_inverted / kSeeds;
        mean.debiased_inverted += r.debiased_inverted / kSeeds;
        mean.biased_plain += r.biased_plain / kSeeds;
        mean.debiased_plain += r.debiased_plain / kSeeds;
    }
    const double secs = seconds_since(t0);
    const bool a = mean.biased_inverted <= 0.60;
    const bool b = mean.debiased_inverted - mean.biased_inverted >= 0.10;
    const bool c = mean.biased_plain - mean.debiased_plain <= 0.05;
    return verdict(a && b && c && secs < 600.0,
                   fmt::format("5 seeds, inverted test: biased {:.3f} (<= 0.60) {}, debiased {:.3f} (gain {:+.3f}, "
                               ">= 0.10) {}; prior-following test: biased {:.3f}, debiased {:.3f} (loss {:.3f}, <= "
                               "0.05) {}; {:.0f}s (< 600s)",
                               mean.biased_inverted, a ? "ok" : "FAIL", mean.debiased_inverted,
                               mean.debiased_inverted - mean.biased_inverted, b ? "ok" : "FAIL", mean.biased_plain,
                               mean.debiased_plain, mean.biased_plain - mean.debiased_plain, c ? "ok" : "FAIL",
                               secs));
}

// ------------------------------------------------------------------ 6

Result prior_only_yardstick() {
    const auto scfg = synth::SynthConfig::from_config(KeyValueConfig::load(config_path("synth.cfg").string()));
    const auto corpus = synth::generate(scfg);
    const double acc = *eval::prior_only_baseline(corpus.train, corpus.test, data::KeyMode::exact_question, "synth",
                                                  eval::TypeMap())
                            .overall.accuracy();
    const bool synth_ok = std::abs(acc - (1.0 - scfg.rho)) <= 0.05;

    Rng rng(66);
    std::size_t corpora = 0, seen = 0, correct_seen = 0;
    for (int i = 0; i < 40; ++i) {
        const auto samples = testsupport::random_corpus(rng, 60 + rng.below(300));
        split::ResplitOutput out;
        try {
            out = split::resplit_samples(samples, 0.3, 0);
        } catch (const InfeasibleSplitError &) {
            continue;
        }
        ++corpora;
        std::vector<data::QASample> train, test;
        std::set<std::string> train_keys;
        for (const auto &s : out.samples) {
            if (s.split == data::Split::test) {
                test.push_back(s);
            } else {
                train.push_back(s);
                train_keys.insert(s.question_key());
            }
        }
        std::vector<eval::Prediction> preds;
        eval::prior_only_baseline(train, test, data::KeyMode::exact_question, "cp", eval::TypeMap(), &preds);
        for (std::size_t j = 0; j < test.size(); ++j) {
            if (!train_keys.count(test[j].question_key())) continue;
            ++seen;
            correct_seen += preds[j].predicted == test[j].answer;
        }
    }
    return verdict(synth_ok && correct_seen == 0 && seen > 0 && corpora >= 20,
                   fmt::format("synthetic inverted: {:.3f} vs 1 - rho = {:.3f} (+/- 0.05); CP splits: {} corpora, "
                               "{}/{} train-seen test questions answered correctly (must be 0)",
                               acc, 1.0 - scfg.rho, corpora, correct_seen, seen));
}

// ------------------------------------------------------------------ 7

Result real_data_check() {
    const char *train_path = std::getenv("CFVQA_SLAKE_TRAIN");
    if (!train_path || !*train_path) {
        return {Outcome::skip, "set CFVQA_SLAKE_TRAIN (and optionally CFVQA_SLAKE_TEST plus CFVQA_SLAKE_FEATURES or "
                               "CFVQA_SLAKE_IMAGES) to run"};
    }
    const auto fields = data::FieldMap::load(config_path("slake.fieldmap").string());
    const auto train = data::load_dataset(train_path, fields, data::Split::train).samples;
    const auto table = data::PriorTable::build(train, data::KeyMode::exact_question);
    const auto counts = table.counts("are there abnormalities in this image", data::Split::train);
    const std::size_t yes_n = counts.count("yes") ? counts.at("yes") : 0;
    const std::size_t no_n = counts.count("no") ? counts.at("no") : 0;
    const bool audit_ok = std::abs(static_cast<long>(yes_n) - 59) <= 2 && std::abs(static_cast<long>(no_n) - 1) <= 2;
    std::string detail = fmt::format("audit yes:no = {}:{} (59:1 +/- 2) {}", yes_n, no_n, audit_ok ? "ok" : "FAIL");

    const char *features = std::getenv("CFVQA_SLAKE_FEATURES");
    const char *images = std::getenv("CFVQA_SLAKE_IMAGES");
    if ((!features || !*features) && (!images || !*images)) {
        return {audit_ok ? Outcome::pass : Outcome::fail, detail + "; directional check skipped (no image input)"};
    }
    auto samples = train;
    if (const char *test_path = std::getenv("CFVQA_SLAKE_TEST"); test_path && *test_path) {
        const auto test = data::load_dataset(test_path, fields, data::Split::test).samples;
        samples.insert(samples.end(), test.begin(), test.end());
    }
    for (auto &s : samples) s.split = data::Split::unassigned;
    const auto out = split::resplit_samples(samples, 0.3, 0);
    model::ImageSource src = features && *features ? model::ImageSource::from_features(features) : model::ImageSource{};
    if (images && *images) src.set_pgm_root(images);
    const auto tcfg = train::TrainConfig::from_config(KeyValueConfig::load(config_path("train_synth.cfg").string()));
    const auto result = train::train(tcfg, out.samples, src);
    std::vector<data::QASample> test;
    for (const auto &s : out.samples) {
        if (s.split == data::Split::test) test.push_back(s);
    }
    const auto typemap = eval::TypeMap::load(config_path("slake.typemap").string());
    const double biased =
        *eval::evaluate(result.model, test, src, model::Mode::biased, "slake-cp", typemap).overall.accuracy();
    const double debiased =
        *eval::evaluate(result.model, test, src, model::Mode::debiased, "slake-cp", typemap).overall.accuracy();
    const bool dir_ok = debiased >= biased;
    return verdict(audit_ok && dir_ok, detail + fmt::format("; CP split biased {:.3f}, debiased {:.3f} {}", biased,
                                                            debiased, dir_ok ? "ok" : "FAIL"));
}

// ------------------------------------------------------------------ 8

struct Artifacts {
    std::map<std::string, std::string> files;
};

Artifacts run_pipeline(const fs::path &dir) {
    Artifacts a;
    synth::SynthConfig scfg;
    scfg.train_count = 300;
    scfg.test_count = 100;
    scfg.seed = 9;
    const auto corpus = synth::generate(scfg);
    a.files["train.jsonl"] = data::to_canonical_jsonl(corpus.train);
    a.files["features.jsonl"] = synth::features_jsonl(corpus.train_features);

    train::TrainConfig tcfg;
    tcfg.epochs = 3;
    tcfg.fusion = model::Fusion::hm;
    tcfg.seed = 9;
    const auto result = train::train(tcfg, corpus.train, corpus.train_images());
    result.model.save(dir / "ckpt");
    for (const auto &e : fs::directory_iterator(dir / "ckpt")) {
        a.files["ckpt/" + e.path().filename().string()] = io::read_file(e.path());
    }
    a.files["metrics.csv"] = result.metrics_csv();
    const auto loaded = model::CausalModel::load(dir / "ckpt");
    const auto biased =
        eval::evaluate(loaded, corpus.test, corpus.test_images(), model::Mode::biased, "synth", eval::TypeMap());
    const auto debiased =
        eval::evaluate(loaded, corpus.test, corpus.test_images(), model::Mode::debiased, "synth", eval::TypeMap());
    a.files["biased.json"] = biased.to_json();
    a.files["debiased.json"] = debiased.to_json();
    a.files["comparison.md"] = eval::compare(biased, debiased).to_markdown();

    Rng rng(88);
    const auto samples = testsupport::random_corpus(rng, 400);
    const auto out = split::resplit_samples(samples, 0.3, 5);
    const auto report = split::split_report(out.groups, out.result, out.samples);
    a.files["split.jsonl"] = data::to_canonical_jsonl(out.samples);
    a.files["stats.json"] = report.stats_json;
    a.files["report.csv"] = report.csv;
    a.files["report.svg"] = report.svg;
    return a;
}

Result determinism() {
    const auto first = run_pipeline(scratch("det_a"));
    const auto second = run_pipeline(scratch("det_b"));
    std::vector<std::string> differing;
    for (const auto &[name, content] : first.files) {
        const auto it = second.files.find(name);
        if (it == second.files.end() || it->second != content) differing.push_back(name);
    }
    const bool ok = differing.empty() && first.files.size() == second.files.size();
    std::string detail = fmt::format("{} artifacts compared byte for byte", first.files.size());
    if (!ok) detail += fmt::format("; differing: {}", fmt::join(differing, ", "));
    return verdict(ok, detail);
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::err);
    const std::vector<std::pair<std::string, std::function<Result()>>> criteria = {
        {"gradient correctness", gradient_correctness},
        {"greedy splitter matches reference trace", splitter_oracle},
        {"CP split invariants", cp_invariants},
        {"causal identities", causal_identities},
        {"synthetic debiasing effect", synthetic_debiasing},
        {"prior-only yardstick", prior_only_yardstick},
        {"real-data directional check", real_data_check},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Result r;
        try {
            r = criteria[i].second();
        } catch (const std::exception &e) {
            r = {Outcome::fail, std::string("threw: ") + e.what()};
        }
        const char *tag = r.outcome == Outcome::pass ? "PASS" : r.outcome == Outcome::skip ? "SKIP" : "FAIL";
        fmt::print("[{}] criterion {}: {} - {}\n", tag, i + 1, criteria[i].first, r.detail);
        std::fflush(stdout);
        failed += r.outcome == Outcome::fail;
    }
    fmt::print("{} of {} criteria failed\n", failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
