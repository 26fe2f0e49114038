#pragma once

#include "cfvqa/causal_model.hpp"
#include "cfvqa/config.hpp"
#include "cfvqa/dataset.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cfvqa::train {

enum class Optimizer { adam, sgd };

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    Optimizer optimizer = Optimizer::adam;
    double lambda_k = 1.0;
    double lambda_q = 1.0;
    double lambda_v = 1.0;
    double lambda_cf = 1.0;
    model::Fusion fusion = model::Fusion::sum;
    model::BiasMode bias = model::BiasMode::question;
    std::uint64_t seed = 0;
    std::size_t embed = 64;
    std::size_t question = 128;
    std::size_t image = 128;
    std::size_t knowledge = 128;

    void validate() const;
    // Keys without the "train." prefix: epochs, batch_size, lr, optimizer,
    // lambda_k, lambda_q, lambda_v, lambda_cf, fusion, bias_mode, seed,
    // dims.embed, dims.question, dims.image, dims.knowledge.
    static TrainConfig from_config(const KeyValueConfig &config, const std::string &prefix = "train.");
    static std::vector<std::string> keys(const std::string &prefix = "train.");
    std::vector<std::pair<std::string, std::string>> to_pairs() const;
};

// Copies of every non-counterfactual parameter, cut from the graph. The
// counterfactual loss term is built on these so that only q_star and v_star
// receive its gradient.
struct FrozenParams {
    model::EncoderParams encoder;
    model::HeadParams heads;
};
FrozenParams freeze(const model::CausalModel &m);

struct LossParts {
    tensor::Tensor total;
    tensor::Tensor te;  // factual logits, for accuracy bookkeeping
};

// lambda_k CE(TE) + lambda_q CE(Z_q) + lambda_v CE(Z_v) + lambda_cf CE(NDE'),
// where NDE' uses the frozen copies and a detached factual branch.
LossParts loss(const model::Encoded &x, const model::CausalModel &m, const TrainConfig &cfg,
               const FrozenParams &frozen);
LossParts loss(const model::Encoded &x, const model::CausalModel &m, const TrainConfig &cfg);

struct EpochMetrics {
    std::size_t epoch = 0;
    double loss = 0.0;        // mean per-sample loss over the epoch
    double acc_biased = 0.0;  // train accuracy of argmax(TE) during the epoch
};

struct TrainResult {
    model::CausalModel model;
    std::vector<EpochMetrics> metrics;
    std::string metrics_csv() const;
};

// Trains on every sample not marked as test. Vocabularies come from those
// samples only.
TrainResult train(const TrainConfig &cfg, const std::vector<data::QASample> &samples,
                  const model::ImageSource &images);

// Same, on an existing initialized model and pre-encoded samples.
std::vector<EpochMetrics> fit(model::CausalModel &m, const std::vector<model::Encoded> &samples,
                              const TrainConfig &cfg);

}  // namespace cfvqa::train
