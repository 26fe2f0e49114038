#include "cfvqa/gradcheck.hpp"

#include "cfvqa/errors.hpp"
#include "cfvqa/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cfvqa::tensor {

double relative_error(double analytic, double numeric) {
    const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / scale;
}

GradCheckReport grad_check(const ScalarFn &f, const Tensor &x, float eps, double tol, const RegionFn &region) {
    GradCheckReport report;
    report.tolerance = tol;

    const Tensor point = Tensor::from(x.shape(), x.to_vector(), true);
    const Tensor loss = f(point);
    if (loss.numel() != 1) {
        throw ShapeError("grad_check needs a scalar function, got " + shape_to_string(loss.shape()));
    }
    backward(loss);
    const std::vector<float> analytic(point.grad().begin(), point.grad().end());
    const std::vector<bool> base_region = region ? region(point) : std::vector<bool>{};

    std::vector<float> probe = x.to_vector();
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const float original = probe[i];
        probe[i] = original + eps;
        const Tensor plus = Tensor::from(x.shape(), probe);
        probe[i] = original - eps;
        const Tensor minus = Tensor::from(x.shape(), probe);
        probe[i] = original;

        if (region && (region(plus) != base_region || region(minus) != base_region)) {
            ++report.skipped;
            continue;
        }
        // Step actually taken in float32, not the nominal eps.
        const double h = static_cast<double>(original + eps) - static_cast<double>(original - eps);
        const double numeric = (static_cast<double>(f(plus).item()) - static_cast<double>(f(minus).item())) / h;
        const double abs_err = std::abs(analytic[i] - numeric);
        const double rel_err = relative_error(analytic[i], numeric);
        ++report.checked;
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        if (rel_err > report.max_rel_error) {
            report.max_rel_error = rel_err;
            report.worst_index = i;
        }
    }
    return report;
}

namespace {

enum ParamIndex : std::size_t {
    kEmbedding,
    kQuestionW,
    kQuestionB,
    kImage,
    kImageW,
    kImageB,
    kFusionW,
    kFusionB,
    kHeadQW,
    kHeadQB,
    kHeadVW,
    kHeadVB,
    kHeadKW,
    kHeadKB,
    kQStar,
    kVStar,
    kMix,
};

// Parameters of one random network, mirroring the model's data flow.
struct RandomNet {
    std::size_t vocab, embed, feature, hidden, answers;
    std::vector<std::size_t> tokens;
    std::size_t target;
    int loss_kind;
    std::vector<std::string> names;
    std::vector<Tensor> params;
};

Tensor random_tensor(Rng &rng, Shape shape) {
    std::vector<float> values(shape_numel(shape));
    for (float &v : values) {
        v = static_cast<float>(rng.uniform(-2.0, 2.0));
    }
    return Tensor::from(std::move(shape), std::move(values));
}

// Raw draws in [-2, 2] scaled by 1/sqrt(fan_in), as the model initializes
// its layers. Float32 differences of a 1e-3 step lose precision in
// proportion to the logit magnitude, so unscaled layers would test rounding
// rather than adjoints.
Tensor random_layer_param(Rng &rng, Shape shape, std::size_t fan_in) {
    Tensor w = random_tensor(rng, std::move(shape));
    const float s = 1.0f / std::sqrt(static_cast<float>(fan_in));
    for (float &v : w.mutable_data()) {
        v *= s;
    }
    return w;
}

RandomNet make_net(Rng &rng, std::size_t case_index) {
    RandomNet net;
    auto dim = [&](std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); };
    net.vocab = dim(3, 6);
    net.embed = dim(2, 5);
    net.feature = dim(2, 6);
    net.hidden = dim(2, 5);
    net.answers = dim(2, 5);
    const std::size_t n_tokens = dim(1, 4);
    for (std::size_t i = 0; i < n_tokens; ++i) {
        net.tokens.push_back(rng.below(net.vocab));
    }
    net.target = rng.below(net.answers);
    net.loss_kind = static_cast<int>(case_index % 4);

    auto add = [&](const char *name, Tensor t) {
        net.names.emplace_back(name);
        net.params.push_back(std::move(t));
    };
    add("embedding", random_tensor(rng, {net.vocab, net.embed}));
    add("question.weight", random_layer_param(rng, {net.embed, net.hidden}, net.embed));
    add("question.bias", random_layer_param(rng, {net.hidden}, net.embed));
    add("image.input", random_tensor(rng, {net.feature}));
    add("image.weight", random_layer_param(rng, {net.feature, net.hidden}, net.feature));
    add("image.bias", random_layer_param(rng, {net.hidden}, net.feature));
    add("fusion.weight", random_layer_param(rng, {2 * net.hidden, net.hidden}, 2 * net.hidden));
    add("fusion.bias", random_layer_param(rng, {net.hidden}, 2 * net.hidden));
    add("head_q.weight", random_layer_param(rng, {net.hidden, net.answers}, net.hidden));
    add("head_q.bias", random_layer_param(rng, {net.answers}, net.hidden));
    add("head_v.weight", random_layer_param(rng, {net.hidden, net.answers}, net.hidden));
    add("head_v.bias", random_layer_param(rng, {net.answers}, net.hidden));
    add("head_k.weight", random_layer_param(rng, {net.hidden, net.answers}, net.hidden));
    add("head_k.bias", random_layer_param(rng, {net.answers}, net.hidden));
    add("q_star", random_tensor(rng, {net.hidden}));
    add("v_star", random_tensor(rng, {net.hidden}));
    add("mix", random_tensor(rng, {net.answers}));
    return net;
}

struct Region {
    std::vector<bool> bits;
    void relu_input(const Tensor &t) {
        for (const float v : t.data()) {
            bits.push_back(v > 0.0f);
        }
    }
    void log_input(const Tensor &t) {
        for (const float v : t.data()) {
            bits.push_back(v > kLogFloor);
        }
    }
    void exp_input(const Tensor &t) {
        for (const float v : t.data()) {
            bits.push_back(v > kExpMax || v < kExpMin);
        }
    }
};

Tensor dense(const Tensor &x, const Tensor &w, const Tensor &b, Region *region) {
    Tensor pre = add(matmul(x, w), b);
    if (region != nullptr) {
        region->relu_input(pre);
    }
    return relu(pre);
}

Tensor hm_fuse(const Tensor &a, const Tensor &b, const Tensor &c, Region *region) {
    Tensor prod = mul(mul(sigmoid(a), sigmoid(b)), sigmoid(c));
    if (region != nullptr) {
        region->log_input(prod);
    }
    return log(prod);
}

Tensor forward(const RandomNet &net, const std::vector<Tensor> &p, Region *region) {
    const Tensor q = dense(embedding_bag_mean(p[kEmbedding], net.tokens), p[kQuestionW], p[kQuestionB], region);
    const Tensor v = dense(p[kImage], p[kImageW], p[kImageB], region);
    const Tensor k = dense(concat(q, v), p[kFusionW], p[kFusionB], region);
    const Tensor k_star = dense(concat(p[kQStar], p[kVStar]), p[kFusionW], p[kFusionB], region);

    const Tensor zq = add(matmul(q, p[kHeadQW]), p[kHeadQB]);
    const Tensor zv = add(matmul(v, p[kHeadVW]), p[kHeadVB]);
    const Tensor zk = add(matmul(k, p[kHeadKW]), p[kHeadKB]);
    const Tensor zv_star = add(matmul(p[kVStar], p[kHeadVW]), p[kHeadVB]);
    const Tensor zk_star = add(matmul(k_star, p[kHeadKW]), p[kHeadKB]);

    switch (net.loss_kind) {
    case 0: {
        const Tensor te = zk + zq + zv;
        const Tensor nde = zk_star + zq + zv_star;
        const Tensor total =
            cross_entropy(te, net.target) + cross_entropy(zq, net.target) + cross_entropy(nde, net.target);
        return scale(total, 1.0f / 3.0f);
    }
    case 1: {
        const Tensor te = hm_fuse(zk, zq, zv, region);
        const Tensor nde = hm_fuse(zk_star, zq, zv_star, region);
        const Tensor tie = te - nde;
        return cross_entropy(te, net.target) + sum(softmax(tie) * p[kMix]);
    }
    case 2: {
        const Tensor tie = (zk + zv) - (zk_star + zv_star);
        const Tensor scaled = scale(tie, 0.25f);
        if (region != nullptr) {
            region->exp_input(scaled);
        }
        return scale(sum(exp(scaled) * p[kMix]) + cross_entropy(zk, net.target), 0.5f);
    }
    default: {
        // Weighted multi-branch objective under HM fusion, averaged over terms
        // like the trainer's batch mean.
        const Tensor te = hm_fuse(zk, zq, zv, region);
        const Tensor nde = hm_fuse(zk_star, zq, zv_star, region);
        const Tensor total = scale(cross_entropy(te, net.target), 1.0f) + scale(cross_entropy(zq, net.target), 0.5f) +
                             scale(cross_entropy(zv, net.target), 0.7f) + scale(cross_entropy(nde, net.target), 0.3f);
        return scale(total, 0.25f);
    }
    }
}

}  // namespace

GradCheckSuiteReport run_gradcheck_suite(std::uint64_t seed, std::size_t cases, float eps, double tol) {
    GradCheckSuiteReport suite;
    Rng rng(seed);
    for (std::size_t c = 0; c < cases; ++c) {
        const RandomNet net = make_net(rng, c);
        for (std::size_t i = 0; i < net.params.size(); ++i) {
            auto with_param = [&](const Tensor &x) {
                std::vector<Tensor> p = net.params;
                p[i] = x;
                return p;
            };
            const ScalarFn f = [&](const Tensor &x) { return forward(net, with_param(x), nullptr); };
            const RegionFn region = [&](const Tensor &x) {
                Region r;
                forward(net, with_param(x), &r);
                return r.bits;
            };
            GradCheckReport report = grad_check(f, net.params[i], eps, tol, region);
            std::ostringstream desc;
            desc << "case " << c << " loss" << net.loss_kind << " " << net.names[i] << " "
                 << shape_to_string(net.params[i].shape());
            suite.max_rel_error = std::max(suite.max_rel_error, report.max_rel_error);
            suite.checked += report.checked;
            suite.skipped += report.skipped;
            suite.passed = suite.passed && report.passed();
            suite.cases.push_back({desc.str(), report});
        }
    }
    return suite;
}

}  // namespace cfvqa::tensor
