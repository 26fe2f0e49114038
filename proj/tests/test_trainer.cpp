#include "doctest.h"

#include "model_support.hpp"

#include "cfvqa/errors.hpp"
#include "cfvqa/gradcheck.hpp"
#include "cfvqa/trainer.hpp"

#include <cmath>

using namespace cfvqa;
using namespace cfvqa::model;
using tensor::Tensor;

namespace {

train::TrainConfig tiny_config() {
    train::TrainConfig cfg;
    cfg.embed = 4;
    cfg.question = 5;
    cfg.image = 5;
    cfg.knowledge = 4;
    cfg.batch_size = 4;
    cfg.lr = 1e-2;
    return cfg;
}

// Ten samples whose answer is set by the first word; images are noise.
std::pair<std::vector<data::QASample>, ImageSource> fixture(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<data::QASample> samples;
    ImageSource images;
    const std::vector<std::string> words{"left", "right"};
    for (int i = 0; i < 10; ++i) {
        data::QASample s;
        s.id = "s" + std::to_string(i);
        s.image_ref = "img" + std::to_string(i);
        s.question_tokens = {words[i % 2], "side", "lesion"};
        s.question_raw = s.question_tokens[0] + " side lesion";
        s.answer = i % 2 ? "yes" : "no";
        s.question_type = "Position";
        s.split = data::Split::train;
        images.add_feature(s.image_ref, testsupport::random_image(rng));
        samples.push_back(std::move(s));
    }
    return {samples, images};
}

double mean_branch_ce(const CausalModel &m, const std::vector<Encoded> &xs) {
    tensor::NoGradGuard guard;
    double total = 0.0;
    for (const auto &x : xs) {
        const auto f = forward(x, m);
        total += tensor::cross_entropy(f.branches.z_q, x.answer).item();
    }
    return total / static_cast<double>(xs.size());
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("zero parameters give ln|A| per loss term") {
    Rng rng(1);
    auto m = testsupport::tiny_model(Fusion::sum);
    testsupport::zero_parameters(m);
    const auto x = testsupport::tiny_input(rng, 2);
    auto cfg = tiny_config();
    CHECK(train::loss(x, m, cfg).total.item() == doctest::Approx(4.0 * std::log(4.0)).epsilon(1e-6));
    cfg.lambda_q = cfg.lambda_v = cfg.lambda_cf = 0.0;
    CHECK(train::loss(x, m, cfg).total.item() == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("the counterfactual term only trains q_star and v_star") {
    Rng rng(2);
    for (const auto fusion : {Fusion::sum, Fusion::hm}) {
        for (const auto bias : {BiasMode::question, BiasMode::vision}) {
            const auto m = testsupport::tiny_model(fusion, bias);
            auto cfg = tiny_config();
            cfg.fusion = fusion;
            cfg.bias = bias;
            cfg.lambda_k = cfg.lambda_q = cfg.lambda_v = 0.0;
            auto params = m.parameters();
            params.zero_grad();
            tensor::backward(train::loss(testsupport::tiny_input(rng), m, cfg).total);
            double star = 0.0;
            for (const auto &p : params.items()) {
                double norm = 0.0;
                for (const float g : p.value.grad()) norm += std::abs(g);
                if (p.name.rfind("cf.", 0) == 0) {
                    star += norm;
                } else {
                    CHECK_MESSAGE(norm == 0.0, p.name);
                }
            }
            CHECK(star > 0.0);
        }
    }
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(3);
    for (const auto fusion : {Fusion::sum, Fusion::hm}) {
        const auto m = testsupport::tiny_model(fusion);
        auto cfg = tiny_config();
        cfg.fusion = fusion;
        const auto frozen = train::freeze(m);
        const auto x = testsupport::tiny_input(rng, 3);
        auto check = [&](const std::string &name, const train::TrainConfig &c, auto setter, const Tensor &at) {
            auto r = tensor::grad_check(
                [&](const Tensor &t) {
                    auto copy = m;
                    setter(copy, t);
                    return train::loss(x, copy, c, frozen).total;
                },
                at);
            CHECK_MESSAGE(r.passed(), name, " rel err ", r.max_rel_error);
        };
        // The counterfactual term reads the factual branch through a stop
        // gradient, which finite differences cannot see, so the factual
        // parameters are checked without it.
        auto factual = cfg;
        factual.lambda_cf = 0.0;
        check("head.k_w", factual, [](CausalModel &c, const Tensor &t) { c.heads.k_w = t; }, m.heads.k_w);
        check("head.q_b", factual, [](CausalModel &c, const Tensor &t) { c.heads.q_b = t; }, m.heads.q_b);
        check("encoder.question_w", factual, [](CausalModel &c, const Tensor &t) { c.encoder.question_w = t; },
              m.encoder.question_w);
        check("cf.q_star", cfg, [](CausalModel &c, const Tensor &t) { c.cf.q_star = t; }, m.cf.q_star);
        check("cf.v_star", cfg, [](CausalModel &c, const Tensor &t) { c.cf.v_star = t; }, m.cf.v_star);
    }
}

TEST_CASE("training lowers the loss on a small fixture") {
    const auto [samples, images] = fixture(4);
    auto cfg = tiny_config();
    cfg.epochs = 25;
    const auto result = train::train(cfg, samples, images);
    REQUIRE(result.metrics.size() == 25);
    CHECK(result.metrics.back().loss < result.metrics.front().loss);
    CHECK(result.metrics.back().acc_biased == doctest::Approx(1.0));
    CHECK(result.metrics_csv().rfind("epoch,loss,acc_biased\n", 0) == 0);
}

TEST_CASE("training is bit-identical for a fixed seed") {
    const auto [samples, images] = fixture(5);
    auto cfg = tiny_config();
    cfg.epochs = 3;
    cfg.seed = 17;
    const auto a = train::train(cfg, samples, images);
    const auto b = train::train(cfg, samples, images);
    const auto pa = a.model.parameters();
    const auto pb = b.model.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa.items()[i].value.to_vector() == pb.items()[i].value.to_vector());
    }
    cfg.seed = 18;
    const auto c = train::train(cfg, samples, images);
    CHECK(c.model.heads.k_w.to_vector() != a.model.heads.k_w.to_vector());
}

TEST_CASE("a heavy question weight teaches the question branch despite noise images") {
    const auto [samples, images] = fixture(6);
    auto cfg = tiny_config();
    cfg.lambda_q = 10.0;
    cfg.epochs = 20;
    auto [qv, av] = data::build_vocabs(samples);
    auto m = CausalModel::init({testsupport::tiny_dims(), cfg.fusion, cfg.bias}, qv, av, cfg.seed);
    std::vector<Encoded> xs;
    for (const auto &s : samples) xs.push_back(m.encode(s, images));
    const double before = mean_branch_ce(m, xs);
    train::fit(m, xs, cfg);
    CHECK(mean_branch_ce(m, xs) < before);
}

TEST_CASE("test-split samples are excluded from training") {
    auto [samples, images] = fixture(7);
    for (auto &s : samples) s.split = data::Split::test;
    CHECK_THROWS_AS(train::train(tiny_config(), samples, images), EmptyDatasetError);
}

TEST_CASE("config parsing and validation") {
    KeyValueConfig c;
    c.set("train.epochs", "4");
    c.set("train.fusion", "hm");
    c.set("train.lambda_cf", "0.5");
    const auto cfg = train::TrainConfig::from_config(c);
    CHECK(cfg.epochs == 4);
    CHECK(cfg.fusion == Fusion::hm);
    CHECK(cfg.lambda_cf == 0.5);
    KeyValueConfig bad;
    bad.set("train.lr", "-1");
    CHECK_THROWS_AS(train::TrainConfig::from_config(bad), ValidationError);
    KeyValueConfig bad_fusion;
    bad_fusion.set("train.fusion", "product");
    CHECK_THROWS_AS(train::TrainConfig::from_config(bad_fusion), ValidationError);
}

TEST_CASE("non-finite loss stops training with context") {
    const auto [samples, images] = fixture(8);
    auto cfg = tiny_config();
    cfg.epochs = 2;
    auto [qv, av] = data::build_vocabs(samples);
    auto m = CausalModel::init({testsupport::tiny_dims(), cfg.fusion, cfg.bias}, qv, av, 0);
    m.heads.k_b.mutable_data()[0] = std::nanf("");
    std::vector<Encoded> xs;
    for (const auto &s : samples) xs.push_back(m.encode(s, images));
    try {
        train::fit(m, xs, cfg);
        FAIL("expected TrainingError");
    } catch (const TrainingError &e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

}  // TEST_SUITE
