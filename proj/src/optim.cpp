#include "cfvqa/optim.hpp"

#include "cfvqa/errors.hpp"

#include <algorithm>
#include <cmath>

namespace cfvqa::tensor {

void ParameterList::add(std::string name, Tensor value) {
    if (contains(name)) {
        throw ValidationError("duplicate parameter name: " + name);
    }
    items_.push_back({std::move(name), std::move(value)});
}

void ParameterList::zero_grad() {
    for (auto &p : items_) {
        p.value.zero_grad();
    }
}

const Tensor &ParameterList::at(const std::string &name) const {
    for (const auto &p : items_) {
        if (p.name == name) {
            return p.value;
        }
    }
    throw IndexError("no parameter named " + name);
}

bool ParameterList::contains(const std::string &name) const {
    return std::any_of(items_.begin(), items_.end(), [&](const auto &p) { return p.name == name; });
}

std::size_t ParameterList::scalar_count() const {
    std::size_t n = 0;
    for (const auto &p : items_) {
        n += p.value.numel();
    }
    return n;
}

void check_finite_gradients(const ParameterList &params) {
    for (const auto &p : params.items()) {
        if (!p.value.has_grad()) {
            continue;
        }
        for (const float g : p.value.grad()) {
            if (!std::isfinite(g)) {
                throw TrainingError("non-finite gradient in parameter " + p.name);
            }
        }
    }
}

void step_sgd(ParameterList &params, float lr) {
    check_finite_gradients(params);
    for (auto &p : params.items()) {
        if (!p.value.has_grad()) {
            continue;
        }
        auto w = p.value.mutable_data();
        const auto g = p.value.grad();
        for (std::size_t i = 0; i < w.size(); ++i) {
            w[i] -= lr * g[i];
        }
    }
}

Adam::Adam(float lr, float beta1, float beta2, float eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParameterList &params) {
    check_finite_gradients(params);
    if (m_.empty()) {
        for (const auto &p : params.items()) {
            m_.emplace_back(p.value.numel(), 0.0f);
            v_.emplace_back(p.value.numel(), 0.0f);
        }
    }
    if (m_.size() != params.size()) {
        throw TrainingError("Adam state was built for a different parameter list");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(t_));
    const float step = static_cast<float>(lr_ * std::sqrt(c2) / c1);
    const float eps_hat = static_cast<float>(eps_ * std::sqrt(c2));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto &p = params.items()[k];
        if (!p.value.has_grad()) {
            continue;
        }
        auto w = p.value.mutable_data();
        const auto g = p.value.grad();
        auto &m = m_[k];
        auto &v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0f - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0f - beta2_) * g[i] * g[i];
            w[i] -= step * m[i] / (std::sqrt(v[i]) + eps_hat);
        }
    }
}

}  // namespace cfvqa::tensor
