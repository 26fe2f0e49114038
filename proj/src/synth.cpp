#include "cfvqa/synth.hpp"

#include "cfvqa/errors.hpp"

#include "json.hpp"

#include <fmt/format.h>

#include <array>
#include <cctype>
#include <cmath>

namespace cfvqa::synth {

namespace {

constexpr std::array<const char *, 7> kTypes = {"Abnormal", "Color", "Modality", "Organ", "Plane", "Position", "Size"};

constexpr const char *kKeys[] = {"templates", "answers_per_template", "dim",         "snr",   "rho",
                                 "invert_test", "train_count",        "test_count",  "seed"};

std::size_t positive(const KeyValueConfig &c, const std::string &key, std::size_t fallback) {
    const long long v = c.get_int(key, static_cast<long long>(fallback));
    if (v < 1) throw ValidationError(key + " must be >= 1, got " + std::to_string(v));
    return static_cast<std::size_t>(v);
}

// Orthonormal rows from Gram-Schmidt on Gaussian draws.
std::vector<std::vector<double>> orthonormal(std::size_t count, std::size_t dim, Rng &rng) {
    std::vector<std::vector<double>> rows;
    while (rows.size() < count) {
        std::vector<double> v(dim);
        for (auto &x : v) x = rng.normal();
        for (const auto &r : rows) {
            double dot = 0.0;
            for (std::size_t i = 0; i < dim; ++i) dot += v[i] * r[i];
            for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * r[i];
        }
        double norm = 0.0;
        for (const double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-6) continue;
        for (auto &x : v) x /= norm;
        rows.push_back(std::move(v));
    }
    return rows;
}

struct Split {
    std::vector<data::QASample> samples;
    std::vector<FeatureRecord> features;
};

Split draw(const SynthConfig &cfg, const std::vector<std::vector<double>> &prototypes, std::size_t count,
           double preferred_p, data::Split split, Rng rng) {
    const std::string tag(data::split_name(split));
    struct Draw {
        std::size_t t, j;
        std::vector<float> x;
    };
    std::vector<Draw> draws;
    draws.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t t = i % cfg.templates;
        std::size_t j = 0;
        if (rng.uniform() >= preferred_p) {
            j = 1 + rng.below(cfg.answers_per_template - 1);
        }
        const auto &proto = prototypes[t * cfg.answers_per_template + j];
        std::vector<float> x(cfg.dim);
        for (std::size_t d = 0; d < cfg.dim; ++d) {
            x[d] = static_cast<float>(proto[d] + rng.normal());
        }
        draws.push_back({t, j, std::move(x)});
    }
    rng.shuffle(draws);

    Split out;
    for (std::size_t i = 0; i < draws.size(); ++i) {
        const auto &d = draws[i];
        data::QASample s;
        s.id = fmt::format("{}-{:05d}", tag, i);
        s.image_ref = fmt::format("synth/{}/{:05d}", tag, i);
        s.question_raw = template_question(d.t);
        s.question_tokens = data::normalize(s.question_raw);
        s.answer = answer_name(d.t, d.j);
        s.question_type = template_type(d.t);
        s.split = split;
        out.samples.push_back(std::move(s));
        out.features.push_back({out.samples.back().image_ref, d.x});
    }
    return out;
}

model::ImageSource to_source(const std::vector<FeatureRecord> &features) {
    model::ImageSource src;
    for (const auto &f : features) src.add_feature(f.image_ref, f.vector);
    return src;
}

}  // namespace

void SynthConfig::validate() const {
    if (templates < 1 || train_count < 1 || test_count < 1 || dim < 1) {
        throw ValidationError("synth counts must be >= 1");
    }
    if (answers_per_template < 2) throw ValidationError("answers_per_template must be >= 2");
    if (!(rho >= 0.5 && rho <= 1.0)) throw ValidationError(fmt::format("rho must be in [0.5, 1], got {}", rho));
    if (!(snr >= 0.0) || !std::isfinite(snr)) throw ValidationError("snr must be finite and >= 0");
    if (templates * answers_per_template > dim) {
        throw ValidationError(fmt::format("{} answer prototypes do not fit in {} dimensions",
                                          templates * answers_per_template, dim));
    }
}

SynthConfig SynthConfig::from_config(const KeyValueConfig &c, const std::string &p) {
    SynthConfig s;
    s.templates = positive(c, p + "templates", s.templates);
    s.answers_per_template = positive(c, p + "answers_per_template", s.answers_per_template);
    s.dim = positive(c, p + "dim", s.dim);
    s.snr = c.get_double(p + "snr", s.snr);
    s.rho = c.get_double(p + "rho", s.rho);
    s.invert_test = c.get_bool(p + "invert_test", s.invert_test);
    s.train_count = positive(c, p + "train_count", s.train_count);
    s.test_count = positive(c, p + "test_count", s.test_count);
    const long long seed = c.get_int(p + "seed", 0);
    if (seed < 0) throw ValidationError("seed must be >= 0");
    s.seed = static_cast<std::uint64_t>(seed);
    s.validate();
    return s;
}

std::vector<std::string> SynthConfig::keys(const std::string &prefix) {
    std::vector<std::string> out;
    for (const char *k : kKeys) out.push_back(prefix + k);
    return out;
}

std::vector<std::pair<std::string, std::string>> SynthConfig::to_pairs() const {
    return {{"templates", std::to_string(templates)},
            {"answers_per_template", std::to_string(answers_per_template)},
            {"dim", std::to_string(dim)},
            {"snr", fmt::format("{}", snr)},
            {"rho", fmt::format("{}", rho)},
            {"invert_test", invert_test ? "true" : "false"},
            {"train_count", std::to_string(train_count)},
            {"test_count", std::to_string(test_count)},
            {"seed", std::to_string(seed)}};
}

double bayes_accuracy(double snr) { return 0.5 * std::erfc(-snr / 2.0 / std::sqrt(2.0)); }

std::string template_question(std::size_t t) {
    std::string type = kTypes[t % kTypes.size()];
    for (auto &c : type) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return fmt::format("Which {} finding is shown in case {}?", type, t);
}

std::string template_type(std::size_t t) { return kTypes[t % kTypes.size()]; }

std::string answer_name(std::size_t t, std::size_t j) { return fmt::format("f{}-{}", t, j); }

SynthCorpus generate(const SynthConfig &cfg) {
    cfg.validate();
    Rng proto_rng = Rng::derive(cfg.seed, seed_offset::synth_prototypes);
    auto prototypes = orthonormal(cfg.templates * cfg.answers_per_template, cfg.dim, proto_rng);
    // Orthonormal directions scaled so every pair sits snr apart.
    const double scale = cfg.snr / std::sqrt(2.0);
    for (auto &p : prototypes) {
        for (auto &x : p) x *= scale;
    }
    auto train = draw(cfg, prototypes, cfg.train_count, cfg.rho, data::Split::train,
                      Rng::derive(cfg.seed, seed_offset::synth_train));
    auto test = draw(cfg, prototypes, cfg.test_count, cfg.invert_test ? 1.0 - cfg.rho : cfg.rho, data::Split::test,
                     Rng::derive(cfg.seed, seed_offset::synth_test));
    return {std::move(train.samples), std::move(test.samples), std::move(train.features), std::move(test.features)};
}

model::ImageSource SynthCorpus::train_images() const { return to_source(train_features); }
model::ImageSource SynthCorpus::test_images() const { return to_source(test_features); }

std::string features_jsonl(const std::vector<FeatureRecord> &features) {
    std::string out;
    for (const auto &f : features) {
        nlohmann::ordered_json j;
        j["image_ref"] = f.image_ref;
        j["vector"] = f.vector;
        out += j.dump() + "\n";
    }
    return out;
}

}  // namespace cfvqa::synth
