#include "cfvqa/causal_model.hpp"

#include "cfvqa/archive.hpp"
#include "cfvqa/errors.hpp"
#include "cfvqa/io.hpp"

#include <map>

namespace cfvqa::model {

using tensor::ParameterList;

namespace {

constexpr std::string_view kModelFormat = "cfvqa-model-1";
constexpr std::string_view kQuestionVocabFile = "question_vocab.txt";
constexpr std::string_view kAnswerVocabFile = "answer_vocab.txt";

std::size_t meta_size(const tensor::Archive &a, const std::string &key) {
    const std::string &v = a.meta_value(key);
    try {
        std::size_t used = 0;
        const unsigned long long n = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception &) {
        throw ValidationError("checkpoint meta " + key + " is not a count: " + v);
    }
}

}  // namespace

std::string_view fusion_name(Fusion f) { return f == Fusion::sum ? "sum" : "hm"; }

Fusion parse_fusion(std::string_view name) {
    if (name == "sum") return Fusion::sum;
    if (name == "hm") return Fusion::hm;
    throw ValidationError("unknown fusion: " + std::string(name) + " (expected sum or hm)");
}

std::string_view bias_mode_name(BiasMode b) { return b == BiasMode::question ? "question" : "vision"; }

BiasMode parse_bias_mode(std::string_view name) {
    if (name == "question") return BiasMode::question;
    if (name == "vision") return BiasMode::vision;
    throw ValidationError("unknown bias mode: " + std::string(name) + " (expected question or vision)");
}

std::string_view mode_name(Mode m) { return m == Mode::biased ? "biased" : "debiased"; }

Mode parse_mode(std::string_view name) {
    if (name == "biased") return Mode::biased;
    if (name == "debiased") return Mode::debiased;
    throw ValidationError("unknown mode: " + std::string(name) + " (expected biased or debiased)");
}

CausalModel CausalModel::init(ModelSpec spec, data::Vocab question_vocab, data::Vocab answer_vocab,
                              std::uint64_t seed) {
    spec.dims.vocab = question_vocab.size();
    spec.dims.answers = answer_vocab.size();
    const Dims &d = spec.dims;
    Rng rng = Rng::derive(seed, seed_offset::model_init);
    CausalModel m;
    m.spec = spec;
    m.question_vocab = std::move(question_vocab);
    m.answer_vocab = std::move(answer_vocab);
    m.encoder = init_encoder(d, rng);
    m.heads.q_w = init_uniform(rng, {d.question, d.answers}, d.question);
    m.heads.q_b = init_uniform(rng, {d.answers}, d.question);
    m.heads.v_w = init_uniform(rng, {d.image, d.answers}, d.image);
    m.heads.v_b = init_uniform(rng, {d.answers}, d.image);
    m.heads.k_w = init_uniform(rng, {d.knowledge, d.answers}, d.knowledge);
    m.heads.k_b = init_uniform(rng, {d.answers}, d.knowledge);
    m.cf.q_star = init_uniform(rng, {d.question}, d.question);
    m.cf.v_star = init_uniform(rng, {d.image}, d.image);
    return m;
}

ParameterList CausalModel::parameters() const {
    ParameterList list;
    register_encoder(list, encoder);
    list.add("head.q_w", heads.q_w);
    list.add("head.q_b", heads.q_b);
    list.add("head.v_w", heads.v_w);
    list.add("head.v_b", heads.v_b);
    list.add("head.k_w", heads.k_w);
    list.add("head.k_b", heads.k_b);
    list.add("cf.q_star", cf.q_star);
    list.add("cf.v_star", cf.v_star);
    return list;
}

Encoded CausalModel::encode(const data::QASample &sample, const ImageSource &images) const {
    Encoded x;
    x.tokens.reserve(sample.question_tokens.size());
    for (const auto &t : sample.question_tokens) {
        x.tokens.push_back(question_vocab.index_of(t));
    }
    if (x.tokens.empty()) {
        x.tokens.push_back(0);
    }
    x.image = images.load(sample.image_ref);
    x.answer = answer_vocab.index_of(sample.answer);
    return x;
}

void CausalModel::save(const std::filesystem::path &dir,
                       const std::vector<std::pair<std::string, std::string>> &extra_meta) const {
    tensor::Archive a;
    const Dims &d = spec.dims;
    a.meta = {{"format", std::string(kModelFormat)},
              {"fusion", std::string(fusion_name(spec.fusion))},
              {"bias_mode", std::string(bias_mode_name(spec.bias))},
              {"dims.vocab", std::to_string(d.vocab)},
              {"dims.embed", std::to_string(d.embed)},
              {"dims.question", std::to_string(d.question)},
              {"dims.image_in", std::to_string(d.image_in)},
              {"dims.image", std::to_string(d.image)},
              {"dims.knowledge", std::to_string(d.knowledge)},
              {"dims.answers", std::to_string(d.answers)}};
    for (const auto &kv : extra_meta) {
        a.meta.push_back(kv);
    }
    a.tensors = parameters().items();
    tensor::save_archive(dir, a);
    io::write_file_atomic(dir / kQuestionVocabFile, question_vocab.to_lines());
    io::write_file_atomic(dir / kAnswerVocabFile, answer_vocab.to_lines());
}

CausalModel CausalModel::load(const std::filesystem::path &dir) {
    const tensor::Archive a = tensor::load_archive(dir);
    if (a.meta_value("format") != kModelFormat) {
        throw ValidationError("not a model checkpoint: " + dir.string());
    }
    CausalModel m;
    m.spec.fusion = parse_fusion(a.meta_value("fusion"));
    m.spec.bias = parse_bias_mode(a.meta_value("bias_mode"));
    Dims &d = m.spec.dims;
    d.vocab = meta_size(a, "dims.vocab");
    d.embed = meta_size(a, "dims.embed");
    d.question = meta_size(a, "dims.question");
    d.image_in = meta_size(a, "dims.image_in");
    d.image = meta_size(a, "dims.image");
    d.knowledge = meta_size(a, "dims.knowledge");
    d.answers = meta_size(a, "dims.answers");
    m.question_vocab = data::Vocab::from_lines(io::read_file(dir / kQuestionVocabFile));
    m.answer_vocab = data::Vocab::from_lines(io::read_file(dir / kAnswerVocabFile));
    if (m.question_vocab.size() != d.vocab || m.answer_vocab.size() != d.answers) {
        throw ValidationError("checkpoint vocabulary sizes do not match recorded dims");
    }

    std::map<std::string, Tensor> by_name;
    for (const auto &p : a.tensors) {
        by_name[p.name] = Tensor::from(p.value.shape(), p.value.to_vector(), true);
    }
    auto take = [&](const std::string &name, const tensor::Shape &shape) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw ValidationError("checkpoint is missing tensor " + name);
        }
        if (it->second.shape() != shape) {
            throw ValidationError("checkpoint tensor " + name + " has shape " +
                                  tensor::shape_to_string(it->second.shape()) + ", expected " +
                                  tensor::shape_to_string(shape));
        }
        return it->second;
    };
    m.encoder.embedding = take("encoder.embedding", {d.vocab, d.embed});
    m.encoder.question_w = take("encoder.question_w", {d.embed, d.question});
    m.encoder.question_b = take("encoder.question_b", {d.question});
    m.encoder.image_w = take("encoder.image_w", {d.image_in, d.image});
    m.encoder.image_b = take("encoder.image_b", {d.image});
    m.encoder.fusion_w = take("encoder.fusion_w", {d.question + d.image, d.knowledge});
    m.encoder.fusion_b = take("encoder.fusion_b", {d.knowledge});
    m.heads.q_w = take("head.q_w", {d.question, d.answers});
    m.heads.q_b = take("head.q_b", {d.answers});
    m.heads.v_w = take("head.v_w", {d.image, d.answers});
    m.heads.v_b = take("head.v_b", {d.answers});
    m.heads.k_w = take("head.k_w", {d.knowledge, d.answers});
    m.heads.k_b = take("head.k_b", {d.answers});
    m.cf.q_star = take("cf.q_star", {d.question});
    m.cf.v_star = take("cf.v_star", {d.image});
    if (by_name.size() != m.parameters().size()) {
        throw ValidationError("checkpoint holds unexpected tensors");
    }
    return m;
}

BranchLogits branch_logits(const Tensor &q, const Tensor &v, const Tensor &k, const HeadParams &h) {
    return {tensor::matmul(q, h.q_w) + h.q_b, tensor::matmul(v, h.v_w) + h.v_b, tensor::matmul(k, h.k_w) + h.k_b};
}

Tensor fuse_logits(const BranchLogits &b, Fusion fusion) {
    if (fusion == Fusion::sum) {
        return b.z_k + b.z_q + b.z_v;
    }
    return tensor::log(tensor::sigmoid(b.z_k) * tensor::sigmoid(b.z_q) * tensor::sigmoid(b.z_v));
}

Tensor counterfactual_logits(const Tensor &factual_branch, const EncoderParams &enc, const HeadParams &heads,
                             const CounterfactualParams &cf, Fusion fusion, BiasMode bias) {
    const Tensor k_star = fuse(cf.q_star, cf.v_star, enc);
    const Tensor z_k = tensor::matmul(k_star, heads.k_w) + heads.k_b;
    if (bias == BiasMode::question) {
        const Tensor z_v = tensor::matmul(cf.v_star, heads.v_w) + heads.v_b;
        return fuse_logits({factual_branch, z_v, z_k}, fusion);
    }
    const Tensor z_q = tensor::matmul(cf.q_star, heads.q_w) + heads.q_b;
    return fuse_logits({z_q, factual_branch, z_k}, fusion);
}

Tensor debias(const Tensor &te, const Tensor &nde) { return te - nde; }

Forward forward(const Encoded &x, const CausalModel &m) {
    Forward f;
    f.q = encode_question(x.tokens, m.encoder);
    f.v = encode_image(x.image, m.encoder);
    f.k = fuse(f.q, f.v, m.encoder);
    f.branches = branch_logits(f.q, f.v, f.k, m.heads);
    f.scores.te = fuse_logits(f.branches, m.spec.fusion);
    const Tensor &present = m.spec.bias == BiasMode::question ? f.branches.z_q : f.branches.z_v;
    f.scores.nde = counterfactual_logits(present, m.encoder, m.heads, m.cf, m.spec.fusion, m.spec.bias);
    f.scores.tie = debias(f.scores.te, f.scores.nde);
    return f;
}

Tensor factual_scores(const Encoded &x, const CausalModel &m) {
    const Tensor q = encode_question(x.tokens, m.encoder);
    const Tensor v = encode_image(x.image, m.encoder);
    return fuse_logits(branch_logits(q, v, fuse(q, v, m.encoder), m.heads), m.spec.fusion);
}

Tensor counterfactual_scores(const Encoded &x, const CausalModel &m) {
    Tensor present;
    if (m.spec.bias == BiasMode::question) {
        present = tensor::matmul(encode_question(x.tokens, m.encoder), m.heads.q_w) + m.heads.q_b;
    } else {
        present = tensor::matmul(encode_image(x.image, m.encoder), m.heads.v_w) + m.heads.v_b;
    }
    return counterfactual_logits(present, m.encoder, m.heads, m.cf, m.spec.fusion, m.spec.bias);
}

std::size_t argmax(std::span<const float> values) {
    if (values.empty()) {
        throw ValidationError("argmax of an empty vector");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

std::size_t predict(const Encoded &x, const CausalModel &m, Mode mode) {
    const tensor::NoGradGuard no_grad;
    if (mode == Mode::biased) {
        return argmax(factual_scores(x, m).data());
    }
    const Forward f = forward(x, m);
    return argmax(f.scores.tie.data());
}

}  // namespace cfvqa::model
