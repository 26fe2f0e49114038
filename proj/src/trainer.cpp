#include "cfvqa/trainer.hpp"

#include "cfvqa/errors.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <numeric>

namespace cfvqa::train {

using model::CausalModel;
using model::Encoded;
using tensor::Tensor;

namespace {

constexpr const char *kKeys[] = {"epochs",   "batch_size", "lr",        "optimizer",  "lambda_k",
                                 "lambda_q", "lambda_v",   "lambda_cf", "fusion",     "bias_mode",
                                 "seed",     "dims.embed", "dims.question", "dims.image", "dims.knowledge"};

std::size_t positive(const KeyValueConfig &c, const std::string &key, std::size_t fallback) {
    const long long v = c.get_int(key, static_cast<long long>(fallback));
    if (v < 1) {
        throw ValidationError(key + " must be >= 1, got " + std::to_string(v));
    }
    return static_cast<std::size_t>(v);
}

}  // namespace

std::vector<std::string> TrainConfig::keys(const std::string &prefix) {
    std::vector<std::string> out;
    for (const char *k : kKeys) out.push_back(prefix + k);
    return out;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be a positive number");
    for (const double l : {lambda_k, lambda_q, lambda_v, lambda_cf}) {
        if (!(l >= 0.0) || !std::isfinite(l)) throw ValidationError("loss weights must be finite and >= 0");
    }
    if (embed < 1 || question < 1 || image < 1 || knowledge < 1) throw ValidationError("dims must be >= 1");
}

TrainConfig TrainConfig::from_config(const KeyValueConfig &c, const std::string &p) {
    TrainConfig t;
    t.epochs = positive(c, p + "epochs", t.epochs);
    t.batch_size = positive(c, p + "batch_size", t.batch_size);
    t.lr = c.get_double(p + "lr", t.lr);
    const std::string opt = c.get_string(p + "optimizer", "adam");
    if (opt == "adam") {
        t.optimizer = Optimizer::adam;
    } else if (opt == "sgd") {
        t.optimizer = Optimizer::sgd;
    } else {
        throw ValidationError("unknown optimizer: " + opt + " (expected adam or sgd)");
    }
    t.lambda_k = c.get_double(p + "lambda_k", t.lambda_k);
    t.lambda_q = c.get_double(p + "lambda_q", t.lambda_q);
    t.lambda_v = c.get_double(p + "lambda_v", t.lambda_v);
    t.lambda_cf = c.get_double(p + "lambda_cf", t.lambda_cf);
    t.fusion = model::parse_fusion(c.get_string(p + "fusion", "sum"));
    t.bias = model::parse_bias_mode(c.get_string(p + "bias_mode", "question"));
    const long long seed = c.get_int(p + "seed", 0);
    if (seed < 0) throw ValidationError("seed must be >= 0");
    t.seed = static_cast<std::uint64_t>(seed);
    t.embed = positive(c, p + "dims.embed", t.embed);
    t.question = positive(c, p + "dims.question", t.question);
    t.image = positive(c, p + "dims.image", t.image);
    t.knowledge = positive(c, p + "dims.knowledge", t.knowledge);
    t.validate();
    return t;
}

std::vector<std::pair<std::string, std::string>> TrainConfig::to_pairs() const {
    return {{"epochs", std::to_string(epochs)},
            {"batch_size", std::to_string(batch_size)},
            {"lr", fmt::format("{}", lr)},
            {"optimizer", optimizer == Optimizer::adam ? "adam" : "sgd"},
            {"lambda_k", fmt::format("{}", lambda_k)},
            {"lambda_q", fmt::format("{}", lambda_q)},
            {"lambda_v", fmt::format("{}", lambda_v)},
            {"lambda_cf", fmt::format("{}", lambda_cf)},
            {"fusion", std::string(model::fusion_name(fusion))},
            {"bias_mode", std::string(model::bias_mode_name(bias))},
            {"seed", std::to_string(seed)},
            {"dims.embed", std::to_string(embed)},
            {"dims.question", std::to_string(question)},
            {"dims.image", std::to_string(image)},
            {"dims.knowledge", std::to_string(knowledge)}};
}

FrozenParams freeze(const CausalModel &m) {
    using tensor::detach;
    const auto &e = m.encoder;
    const auto &h = m.heads;
    return {{detach(e.embedding), detach(e.question_w), detach(e.question_b), detach(e.image_w), detach(e.image_b),
             detach(e.fusion_w), detach(e.fusion_b)},
            {detach(h.q_w), detach(h.q_b), detach(h.v_w), detach(h.v_b), detach(h.k_w), detach(h.k_b)}};
}

LossParts loss(const Encoded &x, const CausalModel &m, const TrainConfig &cfg, const FrozenParams &frozen) {
    const auto f = model::forward(x, m);
    const std::size_t a = x.answer;
    Tensor total = tensor::scale(tensor::cross_entropy(f.scores.te, a), static_cast<float>(cfg.lambda_k));
    if (cfg.lambda_q != 0.0) {
        total = total + tensor::scale(tensor::cross_entropy(f.branches.z_q, a), static_cast<float>(cfg.lambda_q));
    }
    if (cfg.lambda_v != 0.0) {
        total = total + tensor::scale(tensor::cross_entropy(f.branches.z_v, a), static_cast<float>(cfg.lambda_v));
    }
    if (cfg.lambda_cf != 0.0) {
        const Tensor &present = m.spec.bias == model::BiasMode::question ? f.branches.z_q : f.branches.z_v;
        const Tensor nde = model::counterfactual_logits(tensor::detach(present), frozen.encoder, frozen.heads, m.cf,
                                                        m.spec.fusion, m.spec.bias);
        total = total + tensor::scale(tensor::cross_entropy(nde, a), static_cast<float>(cfg.lambda_cf));
    }
    return {total, f.scores.te};
}

LossParts loss(const Encoded &x, const CausalModel &m, const TrainConfig &cfg) {
    return loss(x, m, cfg, freeze(m));
}

std::vector<EpochMetrics> fit(CausalModel &m, const std::vector<Encoded> &samples, const TrainConfig &cfg) {
    cfg.validate();
    if (samples.empty()) {
        throw EmptyDatasetError("no training samples");
    }
    tensor::ParameterList params = m.parameters();
    tensor::Adam adam(static_cast<float>(cfg.lr));
    Rng rng = Rng::derive(cfg.seed, seed_offset::train_shuffle);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<EpochMetrics> metrics;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0, batch = 1; start < order.size(); start += cfg.batch_size, ++batch) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const float inv = 1.0f / static_cast<float>(end - start);
            params.zero_grad();
            const FrozenParams frozen = freeze(m);
            for (std::size_t i = start; i < end; ++i) {
                const LossParts parts = loss(samples[order[i]], m, cfg, frozen);
                const float value = parts.total.item();
                if (!std::isfinite(value)) {
                    throw TrainingError(fmt::format("non-finite loss at epoch {} batch {}", epoch, batch));
                }
                loss_sum += value;
                correct += model::argmax(parts.te.data()) == samples[order[i]].answer;
                tensor::backward(tensor::scale(parts.total, inv));
            }
            try {
                tensor::check_finite_gradients(params);
            } catch (const TrainingError &e) {
                throw TrainingError(fmt::format("epoch {} batch {}: {}", epoch, batch, e.what()));
            }
            if (cfg.optimizer == Optimizer::adam) {
                adam.step(params);
            } else {
                tensor::step_sgd(params, static_cast<float>(cfg.lr));
            }
        }
        const auto n = static_cast<double>(samples.size());
        metrics.push_back({epoch, loss_sum / n, static_cast<double>(correct) / n});
        spdlog::info("epoch {}/{} loss {:.4f} acc_biased {:.4f}", epoch, cfg.epochs, metrics.back().loss,
                     metrics.back().acc_biased);
    }
    return metrics;
}

TrainResult train(const TrainConfig &cfg, const std::vector<data::QASample> &samples,
                  const model::ImageSource &images) {
    cfg.validate();
    std::vector<data::QASample> train_set;
    for (const auto &s : samples) {
        if (s.split != data::Split::test) train_set.push_back(s);
    }
    if (train_set.empty()) {
        throw EmptyDatasetError("training split is empty");
    }
    auto [qv, av] = data::build_vocabs(train_set);
    model::ModelSpec spec;
    spec.dims.embed = cfg.embed;
    spec.dims.question = cfg.question;
    spec.dims.image = cfg.image;
    spec.dims.knowledge = cfg.knowledge;
    spec.dims.image_in = images.input_dim();
    spec.fusion = cfg.fusion;
    spec.bias = cfg.bias;
    TrainResult result{CausalModel::init(spec, std::move(qv), std::move(av), cfg.seed), {}};

    std::vector<Encoded> encoded;
    encoded.reserve(train_set.size());
    for (const auto &s : train_set) {
        encoded.push_back(result.model.encode(s, images));
    }
    result.metrics = fit(result.model, encoded, cfg);
    return result;
}

std::string TrainResult::metrics_csv() const {
    std::string out = "epoch,loss,acc_biased\n";
    for (const auto &m : metrics) {
        out += fmt::format("{},{:.6f},{:.6f}\n", m.epoch, m.loss, m.acc_biased);
    }
    return out;
}

}  // namespace cfvqa::train
