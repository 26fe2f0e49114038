#pragma once

#include "cfvqa/dataset.hpp"
#include "cfvqa/encoders.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cfvqa::model {

enum class Fusion { sum, hm };
// Which direct effect the counterfactual branch keeps factual: the question
// (default) or the image.
enum class BiasMode { question, vision };
enum class Mode { biased, debiased };

std::string_view fusion_name(Fusion f);
Fusion parse_fusion(std::string_view name);
std::string_view bias_mode_name(BiasMode b);
BiasMode parse_bias_mode(std::string_view name);
std::string_view mode_name(Mode m);
Mode parse_mode(std::string_view name);

struct HeadParams {
    Tensor q_w, q_b;  // [question x answers], [answers]
    Tensor v_w, v_b;  // [image x answers]
    Tensor k_w, k_b;  // [knowledge x answers]
};

struct CounterfactualParams {
    Tensor q_star;  // [question]
    Tensor v_star;  // [image]
};

struct BranchLogits {
    Tensor z_q, z_v, z_k;
};

struct CausalScores {
    Tensor te;   // factual fused logits
    Tensor nde;  // counterfactual fused logits
    Tensor tie;  // te - nde
};

struct ModelSpec {
    Dims dims;
    Fusion fusion = Fusion::sum;
    BiasMode bias = BiasMode::question;
};

// Model input for one sample.
struct Encoded {
    std::vector<std::size_t> tokens;
    std::vector<float> image;
    std::size_t answer = 0;  // 0 when the answer is outside the vocabulary
};

class CausalModel {
  public:
    ModelSpec spec;
    data::Vocab question_vocab;
    data::Vocab answer_vocab;
    EncoderParams encoder;
    HeadParams heads;
    CounterfactualParams cf;

    // Dims.vocab and dims.answers are taken from the vocabularies.
    static CausalModel init(ModelSpec spec, data::Vocab question_vocab, data::Vocab answer_vocab,
                            std::uint64_t seed);

    // All learnable tensors in a fixed order (checkpoint layout and update
    // order). The tensors are shared with the model, not copied.
    tensor::ParameterList parameters() const;

    Encoded encode(const data::QASample &sample, const ImageSource &images) const;

    // Directory holding the tensor archive plus both vocabularies.
    void save(const std::filesystem::path &dir,
              const std::vector<std::pair<std::string, std::string>> &extra_meta = {}) const;
    static CausalModel load(const std::filesystem::path &dir);
};

BranchLogits branch_logits(const Tensor &q, const Tensor &v, const Tensor &k, const HeadParams &heads);

// SUM: z_k + z_q + z_v. HM: log(sigmoid(z_k) * sigmoid(z_q) * sigmoid(z_v)).
Tensor fuse_logits(const BranchLogits &b, Fusion fusion);

// Counterfactual logits given the factual branch that stays present (z_q in
// question mode, z_v in vision mode). The absent branches come from q_star
// and v_star; knowledge is k* = fuse(q_star, v_star).
Tensor counterfactual_logits(const Tensor &factual_branch, const EncoderParams &enc, const HeadParams &heads,
                             const CounterfactualParams &cf, Fusion fusion, BiasMode bias);

Tensor debias(const Tensor &te, const Tensor &nde);

struct Forward {
    Tensor q, v, k;
    BranchLogits branches;
    CausalScores scores;
};

// One pass computing encodings, branch logits, TE, NDE and TIE.
Forward forward(const Encoded &x, const CausalModel &m);
Tensor factual_scores(const Encoded &x, const CausalModel &m);
Tensor counterfactual_scores(const Encoded &x, const CausalModel &m);

// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const float> values);
std::size_t predict(const Encoded &x, const CausalModel &m, Mode mode);

}  // namespace cfvqa::model
